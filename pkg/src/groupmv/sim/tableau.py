"""Aaronson-Gottesman stabilizer tableau, batched over shots.

Every shot of a Clifford circuit with Pauli noise and measurements shares
the same X/Z part of the tableau; shots differ only in row phases.  So the
x/z bits are stored once and the phase of row ``i`` in shot ``s`` is
``r[i] ^ dr[s, i]``.  Gates touch only the shared part, Pauli frames
(noise, feedforward X) touch ``dr``.
"""
from __future__ import annotations

import numpy as np


class Tableau:
    """Stabilizer state of ``n`` qubits for ``shots`` parallel shots.

    Rows ``0..n-1`` are destabilizers, rows ``n..2n-1`` stabilizers.
    """

    def __init__(self, n: int, shots: int = 1):
        self.n = n
        self.shots = shots
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        idx = np.arange(n)
        self.x[idx, idx] = True
        self.z[n + idx, idx] = True
        self.r = np.zeros(2 * n, dtype=bool)
        self.dr = np.zeros((shots, 2 * n), dtype=bool)

    def copy(self) -> "Tableau":
        return self.take(slice(None))

    def take(self, rows) -> "Tableau":
        """Sub-ensemble of shots (shared part copied)."""
        t = Tableau.__new__(Tableau)
        t.n = self.n
        t.x = self.x.copy()
        t.z = self.z.copy()
        t.r = self.r.copy()
        t.dr = self.dr[rows].copy()
        t.shots = t.dr.shape[0]
        return t

    # ---- Clifford gates (shared across shots)

    def h(self, a: int):
        xa, za = self.x[:, a].copy(), self.z[:, a].copy()
        self.r ^= xa & za
        self.x[:, a], self.z[:, a] = za, xa

    def s(self, a: int):
        xa = self.x[:, a]
        self.r ^= xa & self.z[:, a]
        self.z[:, a] ^= xa

    def x_gate(self, a: int):
        self.r ^= self.z[:, a]

    def z_gate(self, a: int):
        self.r ^= self.x[:, a]

    def cx(self, a: int, b: int):
        xa, xb, za, zb = self.x[:, a], self.x[:, b], self.z[:, a], self.z[:, b]
        self.r ^= xa & zb & ~(xb ^ za)
        self.x[:, b] ^= xa
        self.z[:, a] ^= zb

    # ---- per-shot Pauli frames

    def pauli_flip_mask(self, a: int, px, pz) -> np.ndarray:
        """Row-phase flips caused by X^px Z^pz on qubit ``a``; shape (k, 2n)."""
        px = np.asarray(px, dtype=bool)[:, None]
        pz = np.asarray(pz, dtype=bool)[:, None]
        return (px & self.z[None, :, a]) ^ (pz & self.x[None, :, a])

    def apply_pauli(self, shots, a: int, px, pz):
        """Apply X^px Z^pz on qubit ``a`` for the listed shots (phase-only)."""
        if len(shots):
            self.dr[shots] ^= self.pauli_flip_mask(a, px, pz)

    def apply_x(self, shot_mask: np.ndarray, a: int):
        self.dr[shot_mask] ^= self.z[:, a]

    # ---- measurement

    def _rowsum_shared(self, h: np.ndarray, i: int):
        """Rows ``h`` <- rows ``h`` * row ``i`` (shared phase part only)."""
        x1, z1 = self.x[i], self.z[i]
        x2, z2 = self.x[h], self.z[h]
        g = _g(x1[None, :], z1[None, :], x2, z2).sum(axis=1)
        tot = 2 * self.r[h].astype(np.int64) + 2 * int(self.r[i]) + g
        self.r[h] = (tot % 4) == 2
        self.x[h] ^= x1
        self.z[h] ^= z1

    def is_deterministic(self, a: int) -> bool:
        return not self.x[self.n:, a].any()

    def measure(self, a: int, rng: np.random.Generator | None) -> np.ndarray:
        """Measure Z on qubit ``a`` in every shot; returns true outcomes (uint8)."""
        n = self.n
        stab = np.flatnonzero(self.x[n:, a])
        if stab.size == 0:
            # outcome fixed by the stabilizer product selected by destabilizers
            sel = np.flatnonzero(self.x[:n, a])
            sx = np.zeros(n, dtype=bool)
            sz = np.zeros(n, dtype=bool)
            sr = 0
            for i in sel:
                row = n + i
                g = int(_g(self.x[row], self.z[row], sx, sz).sum())
                sr = ((2 * sr + 2 * int(self.r[row]) + g) % 4) // 2
                sx ^= self.x[row]
                sz ^= self.z[row]
            per_shot = np.bitwise_xor.reduce(self.dr[:, n + sel], axis=1) if sel.size else np.zeros(self.shots, bool)
            return (per_shot ^ bool(sr)).astype(np.uint8)
        if rng is None:
            raise ValueError("random measurement needs an rng")
        p = n + int(stab[0])
        others = np.flatnonzero(self.x[:, a])
        others = others[others != p]
        if others.size:
            self._rowsum_shared(others, p)
            self.dr[:, others] ^= self.dr[:, [p]]
        d = p - n
        self.x[d], self.z[d], self.r[d] = self.x[p], self.z[p], self.r[p]
        self.dr[:, d] = self.dr[:, p]
        self.x[p] = False
        self.z[p] = False
        self.z[p, a] = True
        self.r[p] = False
        out = rng.integers(0, 2, size=self.shots, dtype=np.uint8)
        self.dr[:, p] = out.astype(bool)
        return out

    def reset(self, a: int, rng):
        out = self.measure(a, rng)
        self.apply_x(out.astype(bool), a)
        return out

    # ---- checks

    def commutation_matrix(self) -> np.ndarray:
        xi = self.x.astype(np.int64)
        zi = self.z.astype(np.int64)
        return (xi @ zi.T + zi @ xi.T) % 2

    def check_symplectic(self) -> bool:
        n = self.n
        want = np.zeros((2 * n, 2 * n), dtype=np.int64)
        idx = np.arange(n)
        want[idx, n + idx] = 1
        want[n + idx, idx] = 1
        return bool(np.array_equal(self.commutation_matrix(), want))

    def stabilizer_strings(self, shot: int = 0) -> list[str]:
        """Stabilizer generators of one shot as signed Pauli strings (debugging)."""
        out = []
        for i in range(self.n, 2 * self.n):
            sign = "-" if self.r[i] ^ self.dr[shot, i] else "+"
            ps = "".join("IXZY"[int(xb) + 2 * int(zb)] for xb, zb in zip(self.x[i], self.z[i]))
            out.append(sign + ps)
        return out


def _g(x1, z1, x2, z2) -> np.ndarray:
    """Exponent of i picked up when multiplying Pauli (x1,z1) into (x2,z2)."""
    x1 = x1.astype(np.int64)
    z1 = z1.astype(np.int64)
    x2 = x2.astype(np.int64)
    z2 = z2.astype(np.int64)
    return np.where(
        (x1 == 1) & (z1 == 1), z2 - x2,
        np.where((x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1),
                 np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0)))


def apply_gate(t: Tableau, op) -> Tableau:
    """Apply a Clifford op (circuit ``Gate`` or ``CX``) in place and return ``t``."""
    name = getattr(op, "name", "CX")
    if name == "CX":
        t.cx(op.control, op.target)
    elif name == "H":
        t.h(op.qubit)
    elif name == "S":
        t.s(op.qubit)
    elif name == "X":
        t.x_gate(op.qubit)
    elif name == "Z":
        t.z_gate(op.qubit)
    else:
        raise ValueError(f"unsupported gate {name}")
    return t


def measure_z(t: Tableau, q: int, rng=None) -> np.ndarray:
    return t.measure(q, rng)
