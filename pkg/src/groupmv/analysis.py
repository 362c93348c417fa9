"""Witness and fidelity estimation from shot records, with M3-style readout mitigation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .circuit import DynamicCircuit, Gate, Operation
from .sim.engine import Basis, NoiseModel, ShotBatch, finish, simulate

SOLVER_RTOL = 1e-6
# drop confusion entries whose weight relative to the diagonal falls below this
CUTOFF_RATIO = 1e-6
# cap on stored confusion entries (about 24 bytes each)
MAX_NONZEROS = 60_000_000


class AnalysisError(ValueError):
    pass


# --------------------------------------------------------------------------
# bit packing


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """(shots, n) 0/1 array -> (shots, words) uint64, bit i of the row in word i // 64."""
    bits = np.asarray(bits, dtype=np.uint64)
    shots, n = bits.shape
    out = np.zeros((shots, max(1, (n + 63) // 64)), dtype=np.uint64)
    for i in range(n):
        out[:, i // 64] |= bits[:, i] << np.uint64(i % 64)
    return out


def unpack_bits(keys: np.ndarray, n: int) -> np.ndarray:
    raw = np.unpackbits(np.ascontiguousarray(keys).view(np.uint8), axis=1, bitorder="little")
    return raw[:, :n]


def popcount(keys: np.ndarray) -> np.ndarray:
    return np.bitwise_count(keys).sum(axis=-1).astype(np.int64)


# --------------------------------------------------------------------------
# M3-style mitigation


@dataclass
class QuasiDistribution:
    """Quasi-probabilities over observed bitstrings (packed keys)."""

    n: int
    keys: np.ndarray  # (U, words) uint64
    values: np.ndarray  # (U,) float, may be negative
    shots: int

    def prob_of(self, bits) -> float:
        key = pack_bits(np.asarray(bits, dtype=np.uint8)[None, :])[0]
        hit = np.all(self.keys == key, axis=1)
        return float(self.values[hit].sum())

    def parity_expectation(self, support: np.ndarray | None = None) -> float:
        """Sum_b (-1)^{popcount(b & support)} q(b)."""
        keys = self.keys if support is None else self.keys & pack_bits(np.asarray(support, np.uint8)[None, :])
        return float(np.sum(self.values * (1 - 2 * (popcount(keys) % 2))))

    @property
    def one_norm(self) -> float:
        return float(np.abs(self.values).sum())

    def as_dict(self) -> dict[str, float]:
        bits = unpack_bits(self.keys, self.n)
        return {"".join(map(str, b)): float(v) for b, v in zip(bits, self.values)}


def distance_cutoff(p: float, ratio: float = CUTOFF_RATIO) -> int:
    """Smallest D with (p / (1 - p))^(D + 1) <= ratio."""
    if p <= 0:
        return 0
    q = p / (1 - p)
    return max(0, math.ceil(math.log(ratio) / math.log(q)) - 1)


def counts_from_bits(bits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keys, counts = np.unique(pack_bits(bits), axis=0, return_counts=True)
    return keys, counts


def mitigate_readout(bits: np.ndarray, p_ro: float, max_distance: int | None = None,
                     block: int = 2_000_000) -> QuasiDistribution:
    """Invert the tensored bit-flip channel on the subspace of observed strings.

    ``bits`` is a (shots, n) 0/1 array.  The reduced confusion matrix has
    entries (1-p)^(n-d) p^d for Hamming distance d <= ``max_distance``;
    columns are renormalised over the observed subspace and the system is
    solved with GMRES to a relative residual of 1e-6.
    """
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise AnalysisError("need a non-empty (shots, n) bit array")
    if not 0 <= p_ro < 0.5:
        raise AnalysisError(f"p_ro={p_ro} must lie in [0, 0.5)")
    shots, n = bits.shape
    keys, counts = counts_from_bits(bits)
    freq = counts / shots
    if p_ro == 0:
        return QuasiDistribution(n, keys, freq.astype(float), shots)
    dmax = distance_cutoff(p_ro) if max_distance is None else max_distance
    u = len(keys)
    rows, cols, dist = [], [], []
    nnz = 0
    step = max(1, block // max(u, 1))
    flat = keys[:, 0] if keys.shape[1] == 1 else None
    for s in range(0, u, step):
        if flat is not None:
            d = np.bitwise_count(flat[s:s + step, None] ^ flat[None, :])
        else:
            d = popcount(keys[s:s + step, None, :] ^ keys[None, :, :])
        i, j = np.nonzero(d <= dmax)
        nnz += len(i)
        if nnz > MAX_NONZEROS:
            raise AnalysisError(f"confusion matrix too dense ({u} observed strings, n={n}); "
                                f"pass a smaller max_distance")
        rows.append(i + s)
        cols.append(j)
        dist.append(d[i, j].astype(np.int64))
    rows, cols, dist = map(np.concatenate, (rows, cols, dist))
    # log-space keeps (1-p)^n well conditioned for large n
    vals = np.exp((n - dist) * np.log1p(-p_ro) + dist * np.log(p_ro))
    a = sp.csc_matrix((vals, (rows, cols)), shape=(u, u))
    colsum = np.asarray(a.sum(axis=0)).ravel()
    a = a @ sp.diags(1.0 / colsum)
    x, info = spla.gmres(a, freq, x0=freq.copy(), rtol=SOLVER_RTOL, atol=0.0, restart=50, maxiter=1000)
    if info != 0:
        raise AnalysisError(f"GMRES did not converge (info={info})")
    return QuasiDistribution(n, keys, x, shots)


def raw_distribution(bits: np.ndarray) -> QuasiDistribution:
    keys, counts = counts_from_bits(bits)
    return QuasiDistribution(bits.shape[1], keys, counts / bits.shape[0], bits.shape[0])


# --------------------------------------------------------------------------
# witness


@dataclass
class WitnessEstimate:
    n: int
    p0: float
    p1: float
    x_expect: float
    w: float
    std_err: float
    mitigated: bool
    raw_p0: float = float("nan")
    raw_p1: float = float("nan")
    raw_x: float = float("nan")


def _final_bits(records) -> np.ndarray:
    if isinstance(records, ShotBatch):
        return records.final
    if isinstance(records, np.ndarray):
        return records
    return np.array([r.final_bits for r in records])


def estimate_witness(z_records, x_records, nm: NoiseModel | None = None, mitigate: bool = True) -> WitnessEstimate:
    """W = (p0 + p1 + <X...X>) / 2 from Z-basis and X-basis final readouts."""
    zb = _final_bits(z_records)
    xb = _final_bits(x_records)
    if zb.size == 0 or xb.size == 0:
        raise AnalysisError("empty record set")
    n = zb.shape[1]
    if xb.shape[1] != n:
        raise AnalysisError("Z and X records disagree on qubit count")
    p = 0.0 if nm is None or not nm.enabled else nm.p_ro
    use = mitigate and p > 0
    zq = mitigate_readout(zb, p) if use else raw_distribution(zb)
    xq = mitigate_readout(xb, p) if use else raw_distribution(xb)
    p0 = zq.prob_of(np.zeros(n))
    p1 = zq.prob_of(np.ones(n))
    xe = xq.parity_expectation()
    raw_pop = zb.sum(axis=1, dtype=np.int64)
    raw_p0 = float(np.mean(raw_pop == 0))
    raw_p1 = float(np.mean(raw_pop == n))
    raw_x = float(np.mean(1 - 2 * (xb.sum(axis=1, dtype=np.int64) % 2)))
    # normal-approximation errors, inflated by the quasi-distribution 1-norm
    pp = min(max(p0 + p1, 0.0), 1.0)
    xx = min(max(xe, -1.0), 1.0)
    var = zq.one_norm ** 2 * pp * (1 - pp) / len(zb) + xq.one_norm ** 2 * (1 - xx ** 2) / len(xb)
    p0c, p1c = (min(max(v, 0.0), 1.0) for v in (p0, p1))
    w = (p0c + p1c + xe) / 2
    return WitnessEstimate(n, p0c, p1c, xe, w, 0.5 * math.sqrt(var), use, raw_p0, raw_p1, raw_x)


# --------------------------------------------------------------------------
# stabilizer sampling and fidelity


@dataclass(frozen=True)
class GhzStabilizerElement:
    x_type: bool
    z_support: frozenset[int]
    sign: int
    n: int

    def paulis(self) -> str:
        if self.x_type:
            return "".join("Y" if q in self.z_support else "X" for q in range(self.n))
        return "".join("Z" if q in self.z_support else "I" for q in range(self.n))

    def support(self) -> np.ndarray:
        return np.array([ch != "I" for ch in self.paulis()], dtype=np.uint8)

    def basis_ops(self) -> list[Operation]:
        """Rotate each factor onto Z: X by H, Y by S-dagger (as Z then S) then H."""
        ops = []
        for q, ch in enumerate(self.paulis()):
            if ch == "X":
                ops.append(Gate("H", q))
            elif ch == "Y":
                ops += [Gate("Z", q), Gate("S", q), Gate("H", q)]
        return ops


def element_from_coefficients(n: int, x_coeff: int, zz_coeffs) -> GhzStabilizerElement:
    """X^{x_coeff} times the product of Z_i Z_{i+1} raised to ``zz_coeffs[i]``."""
    z = np.zeros(n, dtype=np.int64)
    for i, c in enumerate(zz_coeffs):
        if c:
            z[i] ^= 1
            z[i + 1] ^= 1
    support = frozenset(np.flatnonzero(z).tolist())
    # each X.Z = -iY contributes -i; |support| is even so the phase is real
    sign = (-1) ** (len(support) // 2) if x_coeff else 1
    return GhzStabilizerElement(bool(x_coeff), support, sign, n)


def sample_ghz_stabilizer(n: int, rng) -> GhzStabilizerElement:
    if n < 2:
        raise AnalysisError("n must be >= 2")
    rng = np.random.default_rng(rng)
    coeffs = rng.integers(0, 2, size=n)
    return element_from_coefficients(n, int(coeffs[0]), coeffs[1:])


def all_ghz_stabilizers(n: int):
    for code in range(2 ** n):
        yield element_from_coefficients(n, code & 1, [(code >> (i + 1)) & 1 for i in range(n - 1)])


@dataclass
class FidelityEstimate:
    f: float
    std_err: float
    num_stabilizers_sampled: int
    shots_per_stabilizer: int
    raw_f: float = float("nan")
    mitigated: bool = True


def element_expectation(bits: np.ndarray, el: GhzStabilizerElement, p_ro: float, mitigate: bool) -> float:
    support = el.support()
    if mitigate and p_ro > 0:
        q = mitigate_readout(bits[:, support.astype(bool)], p_ro)
        return el.sign * q.parity_expectation()
    par = bits[:, support.astype(bool)].sum(axis=1, dtype=np.int64) % 2
    return el.sign * float(np.mean(1 - 2 * par))


def estimate_fidelity(c: DynamicCircuit, nm: NoiseModel, m_elements: int = 200, shots_per_element: int = 256,
                      seed=None, mitigate: bool = True) -> FidelityEstimate:
    """Mean measured expectation over uniformly sampled GHZ stabilizer elements.

    The circuit is simulated once for ``m_elements * shots_per_element``
    shots; each element then takes its own slice of that ensemble, applies
    its basis change and is read out.
    """
    if m_elements < 1 or shots_per_element < 1:
        raise AnalysisError("m_elements and shots_per_element must be >= 1")
    n = c.num_qubits
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    sim_seed, pick_seed, fork_seed = ss.spawn(3)
    pick = np.random.default_rng(pick_seed)
    elements = [sample_ghz_stabilizer(n, pick) for _ in range(m_elements)]
    forks = fork_seed.spawn(m_elements)
    base = simulate(c, nm, m_elements * shots_per_element, sim_seed)
    p = nm.p_ro if nm.enabled else 0.0
    vals = []
    for j, el in enumerate(elements):
        r = base.fork(slice(j * shots_per_element, (j + 1) * shots_per_element), forks[j])
        batch = finish(r, c, Basis.Z, el.basis_ops())
        vals.append(element_expectation(batch.final, el, p, mitigate))
    vals = np.array(vals)
    se = float(vals.std(ddof=1) / math.sqrt(m_elements)) if m_elements > 1 else 0.0
    raw = float(vals.mean())
    return FidelityEstimate(min(max(raw, 0.0), 1.0), se, m_elements, shots_per_element, raw, mitigate and p > 0)


def aggregate(values) -> tuple[float, float, int]:
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise AnalysisError("cannot aggregate an empty list")
    std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return float(vals.mean()), std, int(vals.size)
