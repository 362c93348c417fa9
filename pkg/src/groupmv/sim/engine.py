"""Shot-based execution of dynamic circuits on the batched tableau."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..circuit import CX, CondX, DynamicCircuit, Gate, Measure, Operation, Reset, eval_expr, validate
from .tableau import Tableau, apply_gate

# stream order for SeedSequence.spawn; kept fixed so results stay reproducible
_STREAMS = ("gate_noise", "mid_collapse", "mid_readout", "final_collapse", "final_readout")


class SimError(RuntimeError):
    pass


class Basis(str, enum.Enum):
    Z = "Z"
    X = "X"


@dataclass(frozen=True)
class NoiseModel:
    p_1q: float = 0.0
    p_2q: float = 0.0
    p_ro: float = 0.0
    enabled: bool = True
    reset_readout_error: bool = False

    def __post_init__(self):
        for name in ("p_1q", "p_2q", "p_ro"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def ideal(cls) -> "NoiseModel":
        return cls(enabled=False)

    @property
    def effective(self) -> "NoiseModel":
        return self if self.enabled else NoiseModel(reset_readout_error=self.reset_readout_error)


@dataclass
class ShotRecord:
    final_bits: np.ndarray
    mid_bits: np.ndarray
    basis_tag: Basis = Basis.Z


@dataclass
class ShotBatch:
    """Records of many shots: ``mid`` is (shots, clbits), ``final`` is (shots, n)."""

    mid: np.ndarray
    final: np.ndarray
    basis: Basis = Basis.Z

    def __len__(self) -> int:
        return self.final.shape[0]

    def __getitem__(self, i: int) -> ShotRecord:
        return ShotRecord(self.final[i].copy(), self.mid[i].copy(), self.basis)

    def records(self) -> list[ShotRecord]:
        return [self[i] for i in range(len(self))]

    def dumps(self) -> str:
        """One line per shot: ``basis mid_bits final_bits``."""
        def rows(a):
            return ["".join(map(str, r)) if r.size else "-" for r in a]
        return "".join(f"{self.basis.value} {m} {f}\n" for m, f in zip(rows(self.mid), rows(self.final)))


def _streams(seed) -> dict[str, np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, ss.spawn(len(_STREAMS)))}


class Runner:
    """Executes ops on a shot ensemble, holding the tableau and recorded bits."""

    def __init__(self, num_qubits: int, num_clbits: int, shots: int, nm: NoiseModel, seed=None,
                 flips: Iterable[int] = (), debug: bool = False):
        self.t = Tableau(num_qubits, shots)
        self.bits = np.zeros((shots, num_clbits), dtype=np.uint8)
        self.written = np.zeros(num_clbits, dtype=bool)
        self.nm = nm.effective
        self.rng = _streams(seed)
        self.flips = frozenset(flips)
        self.debug = debug

    @property
    def shots(self) -> int:
        return self.t.shots

    def fork(self, rows, seed) -> "Runner":
        """Independent continuation for a subset of shots with fresh RNG streams."""
        r = Runner.__new__(Runner)
        r.t = self.t.take(rows)
        r.bits = self.bits[rows].copy()
        r.written = self.written.copy()
        r.nm = self.nm
        r.rng = _streams(seed)
        r.flips = self.flips
        r.debug = self.debug
        return r

    def _noise(self, qubits: Sequence[int], p: float):
        if p <= 0.0:
            return
        rng = self.rng["gate_noise"]
        k = rng.binomial(self.shots, p)
        if k == 0:
            return
        hit = rng.choice(self.shots, size=k, replace=False)
        # uniform non-identity Pauli on the support, encoded as 2 bits per qubit
        code = rng.integers(1, 4 ** len(qubits), size=k)
        for j, q in enumerate(qubits):
            two = (code >> (2 * j)) & 3
            self.t.apply_pauli(hit, q, two & 1, two >> 1)

    def _readout(self, outcome: np.ndarray, stream: str) -> np.ndarray:
        p = self.nm.p_ro
        if p <= 0.0:
            return outcome
        return outcome ^ (self.rng[stream].random(self.shots) < p).astype(np.uint8)

    def apply(self, op: Operation, final: bool = False):
        t = self.t
        if isinstance(op, Gate):
            apply_gate(t, op)
            self._noise((op.qubit,), self.nm.p_1q)
        elif isinstance(op, CX):
            apply_gate(t, op)
            self._noise((op.control, op.target), self.nm.p_2q)
        elif isinstance(op, Measure):
            coll, ro = ("final_collapse", "final_readout") if final else ("mid_collapse", "mid_readout")
            true = t.measure(op.qubit, self.rng[coll])
            rec = self._readout(true, ro)
            if op.clbit in self.flips:
                rec = rec ^ 1
            self.bits[:, op.clbit] = rec
            self.written[op.clbit] = True
        elif isinstance(op, Reset):
            true = t.measure(op.qubit, self.rng["mid_collapse"])
            if self.nm.reset_readout_error:
                true = self._readout(true, "mid_readout")
            t.apply_x(true.astype(bool), op.qubit)
        elif isinstance(op, CondX):
            fire = np.asarray(eval_expr(op.expr, self.bits), dtype=bool)
            t.apply_x(fire, op.qubit)
            self._noise((op.qubit,), self.nm.p_1q)
        else:
            raise SimError(f"unknown op {op!r}")
        if self.debug and not t.check_symplectic():
            raise SimError(f"symplectic invariant violated after {op!r}")

    def run(self, ops: Iterable[Operation], final: bool = False) -> "Runner":
        for op in ops:
            self.apply(op, final)
        return self


def basis_change(n: int, basis: Basis | str) -> list[Operation]:
    basis = Basis(basis)
    return [Gate("H", q) for q in range(n)] if basis is Basis.X else []


def final_measurements(c: DynamicCircuit, qubits: Sequence[int] | None = None) -> list[Measure]:
    qubits = range(c.num_qubits) if qubits is None else qubits
    return [Measure(q, c.num_clbits + i) for i, q in enumerate(qubits)]


def simulate(c: DynamicCircuit, nm: NoiseModel, shots: int, seed=None, flips: Iterable[int] = (),
             debug: bool = False) -> Runner:
    """Run ``c`` (without any final readout) and return the live runner."""
    if shots < 1:
        raise SimError("shots must be >= 1")
    problems = validate(c)
    if problems:
        raise SimError("invalid circuit: " + "; ".join(problems))
    r = Runner(c.num_qubits, c.num_clbits + c.num_qubits, shots, nm, seed, flips, debug)
    return r.run(c.ops)


def finish(r: Runner, c: DynamicCircuit, basis: Basis | str = Basis.Z, pre: Sequence[Operation] = ()) -> ShotBatch:
    """Apply ``pre`` (basis change), measure every qubit and package the records."""
    r.run(pre)
    r.run(final_measurements(c), final=True)
    basis = Basis(basis) if isinstance(basis, str) else basis
    return ShotBatch(r.bits[:, :c.num_clbits].copy(), r.bits[:, c.num_clbits:].copy(), basis)


def run_shots(c: DynamicCircuit, nm: NoiseModel, basis: Basis | str = Basis.Z, shots: int = 1000, seed=None,
              flips: Iterable[int] = (), debug: bool = False) -> ShotBatch:
    """Circuit + basis change + final measurement of all qubits for ``shots`` shots."""
    r = simulate(c, nm, shots, seed, flips, debug)
    return finish(r, c, basis, basis_change(c.num_qubits, basis))


def run_shot(c: DynamicCircuit, nm: NoiseModel, rng=None, basis: Basis | str = Basis.Z) -> ShotRecord:
    seed = None if rng is None else int(np.random.default_rng(rng).integers(2**63))
    return run_shots(c, nm, basis, 1, seed)[0]
