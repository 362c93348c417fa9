"""Dense statevector oracle for small dynamic circuits (test/cross-check only)."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..circuit import CX, CondX, DynamicCircuit, Gate, Measure, Reset, eval_expr

MAX_QUBITS = 12
_EPS = 1e-12

_ONE = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class OracleError(RuntimeError):
    pass


# qubit q is tensor axis q, so basis index bit q (little-endian) <-> axis n-1-q after reshape;
# we keep the state as an n-dim array with axis q for qubit q to avoid index juggling.


def _apply_1q(psi: np.ndarray, u: np.ndarray, q: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(u, psi, axes=([1], [q])), 0, q)


def _apply_cx(psi: np.ndarray, a: int, b: int) -> np.ndarray:
    psi = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[a] = 1
    sub = psi[tuple(idx)]
    axis_b = b if b < a else b - 1
    psi[tuple(idx)] = np.flip(sub, axis=axis_b)
    return psi


def _project(psi: np.ndarray, q: int, v: int) -> tuple[np.ndarray, float]:
    idx = [slice(None)] * psi.ndim
    idx[q] = 1 - v
    out = psi.copy()
    out[tuple(idx)] = 0
    prob = float(np.sum(np.abs(out) ** 2))
    return out, prob


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1
    return psi


def to_vector(psi: np.ndarray) -> np.ndarray:
    """Flatten with qubit 0 as the least significant bit of the basis index."""
    return np.transpose(psi, list(range(psi.ndim))[::-1]).reshape(-1)


def ghz_vector(n: int) -> np.ndarray:
    v = np.zeros(2 ** n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return v


@dataclass
class Branch:
    prob: float
    true_bits: dict[int, int]
    recorded: dict[int, int]
    state: np.ndarray  # normalized, tensor form

    @property
    def vector(self) -> np.ndarray:
        return to_vector(self.state)


def _check(c: DynamicCircuit):
    if c.num_qubits > MAX_QUBITS:
        raise OracleError(f"dense oracle limited to {MAX_QUBITS} qubits, got {c.num_qubits}")


def enumerate_branches(c: DynamicCircuit, p_ro: float = 0.0, flips=(), forced: Mapping[int, int] | None = None,
                       reset_readout_error: bool = False) -> list[Branch]:
    """All measurement branches of a noiseless (except readout) run.

    Random measurement outcomes, reset outcomes and readout flips (when
    ``p_ro > 0``) are each enumerated.  ``forced`` pins the true outcome of
    given classical bits; ``flips`` corrupts recorded bits deterministically.
    """
    _check(c)
    flips = frozenset(flips)
    forced = dict(forced or {})
    done = []
    stack = [(0, 1.0, {}, {}, zero_state(c.num_qubits))]
    while stack:
        pc, prob, true, rec, psi = stack.pop()
        while pc < len(c.ops):
            op = c.ops[pc]
            if isinstance(op, Gate):
                psi = _apply_1q(psi, _ONE[op.name], op.qubit)
            elif isinstance(op, CX):
                psi = _apply_cx(psi, op.control, op.target)
            elif isinstance(op, CondX):
                if eval_expr(op.expr, rec):
                    psi = _apply_1q(psi, _ONE["X"], op.qubit)
            elif isinstance(op, (Measure, Reset)):
                is_meas = isinstance(op, Measure)
                outcomes = [forced[op.clbit]] if is_meas and op.clbit in forced else [0, 1]
                branches = []
                for v in outcomes:
                    post, pv = _project(psi, op.qubit, v)
                    if pv > _EPS:
                        branches.append((v, pv, post / np.sqrt(pv)))
                if not branches:
                    raise OracleError(f"forced outcome for c{op.clbit} has probability 0")
                noisy = p_ro > 0 and (is_meas or reset_readout_error)
                children = []
                for v, pv, post in branches:
                    for flip in ((0, 1) if noisy else (0,)):
                        pf = (p_ro if flip else 1 - p_ro) if noisy else 1.0
                        if pf <= 0:
                            continue
                        seen = v ^ flip
                        t2, r2 = dict(true), dict(rec)
                        if is_meas:
                            t2[op.clbit] = v
                            r2[op.clbit] = seen ^ (op.clbit in flips)
                            st = post
                        else:
                            st = _apply_1q(post, _ONE["X"], op.qubit) if seen else post
                        # forced outcomes are conditioned on, not weighted
                        w = pv if not (is_meas and op.clbit in forced) else 1.0
                        children.append((pc + 1, prob * w * pf, t2, r2, st))
                stack.extend(children[1:])
                _, prob, true, rec, psi = children[0]
            pc += 1
        done.append(Branch(prob, true, rec, psi))
    return done


def dense_oracle(c: DynamicCircuit, forced_bits: Mapping[int, int] | None = None, flips=()) -> np.ndarray:
    """State vector after ``c`` with measurement outcomes pinned by ``forced_bits``.

    Measurements not listed must be deterministic; resets on a superposed
    qubit are rejected since the result would be mixed.
    """
    _check(c)
    forced_bits = dict(forced_bits or {})
    psi = zero_state(c.num_qubits)
    rec: dict[int, int] = {}
    flips = frozenset(flips)
    for op in c.ops:
        if isinstance(op, Gate):
            psi = _apply_1q(psi, _ONE[op.name], op.qubit)
        elif isinstance(op, CX):
            psi = _apply_cx(psi, op.control, op.target)
        elif isinstance(op, CondX):
            if eval_expr(op.expr, rec):
                psi = _apply_1q(psi, _ONE["X"], op.qubit)
        elif isinstance(op, Measure):
            if op.clbit in forced_bits:
                v = int(forced_bits[op.clbit])
            else:
                p1 = _project(psi, op.qubit, 1)[1]
                if _EPS < p1 < 1 - _EPS:
                    raise OracleError(f"measurement into c{op.clbit} is random; force its outcome")
                v = int(p1 > 0.5)
            psi, pv = _project(psi, op.qubit, v)
            if pv <= _EPS:
                raise OracleError(f"forced outcome for c{op.clbit} has probability 0")
            psi /= np.sqrt(pv)
            rec[op.clbit] = v ^ (op.clbit in flips)
        elif isinstance(op, Reset):
            p1 = _project(psi, op.qubit, 1)[1]
            if _EPS < p1 < 1 - _EPS:
                raise OracleError("reset of a superposed qubit yields a mixed state")
            if p1 > 0.5:
                psi = _apply_1q(psi, _ONE["X"], op.qubit)
    return to_vector(psi)


def outcome_distribution(c: DynamicCircuit, p_ro: float = 0.0, measure_all: bool = False) -> dict[tuple, float]:
    """Exact distribution of recorded classical bits (optionally plus a final Z readout of every qubit)."""
    dist: dict[tuple, float] = defaultdict(float)
    for br in enumerate_branches(c, p_ro):
        mid = tuple(br.recorded.get(i, 0) for i in range(c.num_clbits))
        if not measure_all:
            dist[mid] += br.prob
            continue
        probs = np.abs(br.vector) ** 2
        n = c.num_qubits
        for idx in np.flatnonzero(probs > _EPS):
            bits = tuple((int(idx) >> q) & 1 for q in range(n))
            if p_ro > 0:
                for flip in range(2 ** n):
                    f = tuple((flip >> q) & 1 for q in range(n))
                    k = sum(f)
                    pf = p_ro ** k * (1 - p_ro) ** (n - k)
                    dist[mid + tuple(b ^ x for b, x in zip(bits, f))] += br.prob * probs[idx] * pf
            else:
                dist[mid + bits] += br.prob * probs[idx]
    return dict(dist)


def ghz_overlap(vec: np.ndarray) -> float:
    return float(abs(np.vdot(ghz_vector(int(np.log2(vec.size))), vec)) ** 2)


def pauli_expectation(vec: np.ndarray, paulis: str, sign: int = 1) -> float:
    """<v| sign * P |v> for a Pauli string (character q acts on qubit q)."""
    n = len(paulis)
    psi = np.transpose(vec.reshape((2,) * n), list(range(n))[::-1])
    mats = {"I": np.eye(2), "X": _ONE["X"], "Z": _ONE["Z"], "Y": np.array([[0, -1j], [1j, 0]])}
    out = psi
    for q, ch in enumerate(paulis):
        if ch != "I":
            out = _apply_1q(out, mats[ch], q)
    return float(sign * np.real(np.vdot(psi.reshape(-1), out.reshape(-1))))
