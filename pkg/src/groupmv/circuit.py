"""Dynamic-circuit IR: Clifford gates, measurement, reset and classically
conditioned X gates driven by XOR / majority expressions.

Circuits are immutable.  Qubit indices are local (``0..num_qubits-1``);
``physical`` maps them back to coupling-graph nodes.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

import numpy as np


class CircuitError(ValueError):
    pass


# --------------------------------------------------------------------------
# classical expressions


@dataclass(frozen=True)
class BitRef:
    clbit: int

    def __str__(self) -> str:
        return f"c{self.clbit}"


@dataclass(frozen=True)
class Xor:
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        right = f"({self.right})" if isinstance(self.right, Xor) else str(self.right)
        return f"{self.left} XOR {right}"


@dataclass(frozen=True)
class Maj:
    args: tuple["Expr", ...]

    def __post_init__(self):
        if len(self.args) < 1 or len(self.args) % 2 == 0:
            raise CircuitError(f"majority arity must be odd and >= 1, got {len(self.args)}")

    @property
    def threshold(self) -> int:
        return (len(self.args) + 1) // 2

    def __str__(self) -> str:
        return "MAJ(" + ",".join(str(a) for a in self.args) + ")"


Expr = Union[BitRef, Xor, Maj]


def xor_all(exprs: Sequence[Expr]) -> Expr:
    """Left-folded XOR of a non-empty sequence."""
    if not exprs:
        raise CircuitError("cannot XOR an empty sequence")
    out = exprs[0]
    for e in exprs[1:]:
        out = Xor(out, e)
    return out


def majority(clbits: Sequence[int]) -> Expr:
    """MAJ over measured bits; a single bit stays a plain reference."""
    if len(clbits) == 1:
        return BitRef(clbits[0])
    return Maj(tuple(BitRef(c) for c in clbits))


def expr_bits(expr: Expr) -> set[int]:
    if isinstance(expr, BitRef):
        return {expr.clbit}
    if isinstance(expr, Xor):
        return expr_bits(expr.left) | expr_bits(expr.right)
    return set().union(*(expr_bits(a) for a in expr.args))


def eval_expr(expr: Expr, bits):
    """Evaluate ``expr`` on classical bits.

    ``bits`` may be a mapping ``clbit -> value`` or an array indexed by
    classical bit; with a 2D ``(shots, clbits)`` array the result is a
    boolean vector over shots.  A majority returns 1 when at least
    ``(arity + 1) // 2`` inputs are 1.
    """
    if isinstance(expr, BitRef):
        try:
            value = bits[expr.clbit] if not isinstance(bits, np.ndarray) or bits.ndim == 1 else bits[:, expr.clbit]
        except (KeyError, IndexError):
            raise CircuitError(f"classical bit c{expr.clbit} read before it was written") from None
        if value is None:
            raise CircuitError(f"classical bit c{expr.clbit} read before it was written")
        return np.asarray(value, dtype=bool) if isinstance(value, np.ndarray) else bool(value)
    if isinstance(expr, Xor):
        return eval_expr(expr.left, bits) ^ eval_expr(expr.right, bits)
    votes = sum(np.asarray(eval_expr(a, bits), dtype=np.int64) for a in expr.args)
    out = votes >= expr.threshold
    return out if isinstance(out, np.ndarray) and out.ndim else bool(out)


# --------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class Gate:
    name: str  # H, S, X, Z
    qubit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class CX:
    control: int
    target: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)


@dataclass(frozen=True)
class Measure:
    qubit: int
    clbit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class Reset:
    qubit: int

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class CondX:
    qubit: int
    expr: Expr

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


Operation = Union[Gate, CX, Measure, Reset, CondX]
ONE_QUBIT_GATES = ("H", "S", "X", "Z")


def H(q: int) -> Gate:
    return Gate("H", q)


def S(q: int) -> Gate:
    return Gate("S", q)


def X(q: int) -> Gate:
    return Gate("X", q)


def Z(q: int) -> Gate:
    return Gate("Z", q)


# --------------------------------------------------------------------------
# circuit


@dataclass(frozen=True)
class DynamicCircuit:
    num_qubits: int
    num_clbits: int
    ops: tuple[Operation, ...]
    physical: tuple[int, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "physical", tuple(self.physical))
        if self.physical and len(self.physical) != self.num_qubits:
            raise CircuitError("physical map must list one node per qubit")

    def __iter__(self) -> Iterator[Operation]:
        return iter(self.ops)

    def __len__(self) -> int:
        return len(self.ops)

    def with_ops(self, extra: Iterable[Operation], num_clbits: int | None = None) -> "DynamicCircuit":
        return DynamicCircuit(self.num_qubits, self.num_clbits if num_clbits is None else num_clbits,
                              self.ops + tuple(extra), self.physical, dict(self.metadata))

    def with_metadata(self, **kw) -> "DynamicCircuit":
        meta = dict(self.metadata)
        meta.update({k: str(v) for k, v in kw.items()})
        return DynamicCircuit(self.num_qubits, self.num_clbits, self.ops, self.physical, meta)

    def count(self, kind: type) -> int:
        return sum(isinstance(op, kind) for op in self.ops)

    def dumps(self) -> str:
        return dumps(self)


def validate(c: DynamicCircuit) -> list[str]:
    """Every invariant violation found in ``c`` (empty list means ok)."""
    problems = []
    written: set[int] = set()
    for i, op in enumerate(c.ops):
        where = f"op {i} ({_fmt_op(op)})"
        for q in op.qubits:
            if not 0 <= q < c.num_qubits:
                problems.append(f"{where}: qubit {q} out of range")
        if isinstance(op, Gate) and op.name not in ONE_QUBIT_GATES:
            problems.append(f"{where}: unknown gate {op.name}")
        if isinstance(op, CX) and op.control == op.target:
            problems.append(f"{where}: control equals target")
        if isinstance(op, Measure):
            if not 0 <= op.clbit < c.num_clbits:
                problems.append(f"{where}: classical bit {op.clbit} out of range")
            if op.clbit in written:
                problems.append(f"{where}: classical bit c{op.clbit} written twice")
            written.add(op.clbit)
        if isinstance(op, CondX):
            for b in sorted(expr_bits(op.expr)):
                if not 0 <= b < c.num_clbits:
                    problems.append(f"{where}: classical bit {b} out of range")
                elif b not in written:
                    problems.append(f"{where}: read-before-write of c{b}")
    return problems


def check(c: DynamicCircuit) -> DynamicCircuit:
    problems = validate(c)
    if problems:
        raise CircuitError("; ".join(problems))
    return c


class DepthReport(NamedTuple):
    total_depth: int
    two_qubit_depth: int
    cx_count: int
    measure_count: int

    def key(self) -> tuple[int, int, int]:
        """Ordering used by the restart search."""
        return (self.two_qubit_depth, self.total_depth, self.cx_count)


def depth(c: DynamicCircuit) -> DepthReport:
    """ASAP layering; measurements and conditional gates occupy a layer."""
    qfinish = [0] * c.num_qubits
    cfinish: dict[int, int] = {}
    cx_layers = set()
    total = 0
    for op in c.ops:
        start = max((qfinish[q] for q in op.qubits), default=0)
        if isinstance(op, CondX):
            start = max([start] + [cfinish.get(b, 0) for b in expr_bits(op.expr)])
        layer = start + 1
        for q in op.qubits:
            qfinish[q] = layer
        if isinstance(op, Measure):
            cfinish[op.clbit] = layer
        if isinstance(op, CX):
            cx_layers.add(layer)
        total = max(total, layer)
    return DepthReport(total, len(cx_layers), c.count(CX), c.count(Measure))


def layers(c: DynamicCircuit) -> list[list[Operation]]:
    """Group ops by their ASAP layer."""
    qfinish = [0] * c.num_qubits
    cfinish: dict[int, int] = {}
    out: list[list[Operation]] = []
    for op in c.ops:
        start = max((qfinish[q] for q in op.qubits), default=0)
        if isinstance(op, CondX):
            start = max([start] + [cfinish.get(b, 0) for b in expr_bits(op.expr)])
        for q in op.qubits:
            qfinish[q] = start + 1
        if isinstance(op, Measure):
            cfinish[op.clbit] = start + 1
        while len(out) <= start:
            out.append([])
        out[start].append(op)
    return out


# --------------------------------------------------------------------------
# text format
#
#   QUBITS 4
#   CLBITS 1
#   PHYSICAL 10 11 17 18        (optional)
#   META method=group_mv        (optional, repeated)
#   H 0
#   CX 0 1
#   MEASURE 1 -> c0
#   RESET 1
#   CONDX 2 IF MAJ(c0,c1,c2) XOR c3


def _fmt_op(op: Operation) -> str:
    if isinstance(op, Gate):
        return f"{op.name} {op.qubit}"
    if isinstance(op, CX):
        return f"CX {op.control} {op.target}"
    if isinstance(op, Measure):
        return f"MEASURE {op.qubit} -> c{op.clbit}"
    if isinstance(op, Reset):
        return f"RESET {op.qubit}"
    return f"CONDX {op.qubit} IF {op.expr}"


def dumps(c: DynamicCircuit) -> str:
    lines = [f"QUBITS {c.num_qubits}", f"CLBITS {c.num_clbits}"]
    if c.physical:
        lines.append("PHYSICAL " + " ".join(map(str, c.physical)))
    for k in sorted(c.metadata):
        lines.append(f"META {k}={c.metadata[k]}")
    lines += [_fmt_op(op) for op in c.ops]
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r"\s*(MAJ|XOR|c\d+|\(|\)|,)")


def parse_expr(text: str) -> Expr:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise CircuitError(f"bad expression near {text[pos:]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    expr, rest = _parse_xor(tokens)
    if rest:
        raise CircuitError(f"trailing tokens in expression: {' '.join(rest)}")
    return expr


def _parse_xor(tokens):
    left, tokens = _parse_atom(tokens)
    while tokens and tokens[0] == "XOR":
        right, tokens = _parse_atom(tokens[1:])
        left = Xor(left, right)
    return left, tokens


def _parse_atom(tokens):
    if not tokens:
        raise CircuitError("unexpected end of expression")
    head = tokens[0]
    if head.startswith("c"):
        return BitRef(int(head[1:])), tokens[1:]
    if head == "(":
        inner, rest = _parse_xor(tokens[1:])
        if not rest or rest[0] != ")":
            raise CircuitError("missing ')'")
        return inner, rest[1:]
    if head == "MAJ":
        if len(tokens) < 2 or tokens[1] != "(":
            raise CircuitError("MAJ needs '('")
        args = []
        rest = tokens[2:]
        while True:
            arg, rest = _parse_xor(rest)
            args.append(arg)
            if not rest:
                raise CircuitError("unterminated MAJ")
            if rest[0] == ")":
                return Maj(tuple(args)), rest[1:]
            if rest[0] != ",":
                raise CircuitError("expected ',' in MAJ")
            rest = rest[1:]
    raise CircuitError(f"unexpected token {head!r}")


def loads(text: str) -> DynamicCircuit:
    nq = nc = None
    physical: tuple[int, ...] = ()
    meta: dict[str, str] = {}
    ops: list[Operation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        try:
            if word == "QUBITS":
                nq = int(rest)
            elif word == "CLBITS":
                nc = int(rest)
            elif word == "PHYSICAL":
                physical = tuple(int(t) for t in rest.split())
            elif word == "META":
                k, _, v = rest.partition("=")
                meta[k.strip()] = v.strip()
            elif word in ONE_QUBIT_GATES:
                ops.append(Gate(word, int(rest)))
            elif word == "CX":
                a, b = rest.split()
                ops.append(CX(int(a), int(b)))
            elif word == "MEASURE":
                q, arrow, cb = rest.split()
                if arrow != "->" or not cb.startswith("c"):
                    raise CircuitError("expected 'MEASURE q -> cN'")
                ops.append(Measure(int(q), int(cb[1:])))
            elif word == "RESET":
                ops.append(Reset(int(rest)))
            elif word == "CONDX":
                q, kw, expr = rest.split(None, 2)
                if kw != "IF":
                    raise CircuitError("expected 'CONDX q IF <expr>'")
                ops.append(CondX(int(q), parse_expr(expr)))
            else:
                raise CircuitError(f"unknown instruction {word!r}")
        except (ValueError, CircuitError) as exc:
            raise CircuitError(f"line {lineno}: {exc}") from None
    if nq is None or nc is None:
        raise CircuitError("missing QUBITS/CLBITS header")
    return DynamicCircuit(nq, nc, tuple(ops), physical, meta)
