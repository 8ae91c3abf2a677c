"""Single-row execution programs for MAGIC NOR/NOT logic.

An :class:`ExecutionProgram` is an ordered list of micro-ops (``Init``,
``Not``, ``Nor``) over the cells of one crossbar row. Programs come from a
SIMPLER mapping file (:func:`parse_simpler`) or from the naive mapper
(:func:`map_to_row`) applied to a :class:`GateNetlist`.
"""
from __future__ import annotations

import heapq
import json
import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Union


class ParseError(ValueError):
    pass


class ProgramValidationError(ValueError):
    pass


class NetlistError(ValueError):
    pass


class RowOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class Init:
    cells: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("Init needs at least one cell")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError(f"duplicate cells in Init{self.cells}")


@dataclass(frozen=True)
class Not:
    input: int
    output: int
    name: str | None = field(default=None, compare=False)

    @property
    def inputs(self) -> tuple[int, ...]:
        return (self.input,)


@dataclass(frozen=True)
class Nor:
    inputs: tuple[int, ...]
    output: int
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if len(self.inputs) < 2:
            raise ValueError("Nor needs at least two inputs")


MicroOp = Union[Init, Not, Nor]


def op_cells(op: MicroOp) -> tuple[int, ...]:
    if isinstance(op, Init):
        return op.cells
    return (*op.inputs, op.output)


@dataclass(frozen=True)
class ExecutionProgram:
    row_size: int
    inputs: dict[str, int]
    outputs: dict[str, int]
    cycles: tuple[tuple[str, MicroOp], ...] = ()
    reuse_cycles: int | None = field(default=None, compare=False)
    number_of_gates: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cycles", tuple((str(l), op) for l, op in self.cycles))
        if self.reuse_cycles is None:
            object.__setattr__(self, "reuse_cycles", self.computed_reuse_cycles())

    @property
    def gate_ops(self) -> list[MicroOp]:
        return [op for _, op in self.cycles if not isinstance(op, Init)]

    @property
    def n_not(self) -> int:
        return sum(isinstance(op, Not) for _, op in self.cycles)

    @property
    def n_nor(self) -> int:
        return sum(isinstance(op, Nor) for _, op in self.cycles)

    def computed_reuse_cycles(self) -> int:
        """Init cycles other than a leading one."""
        inits = [i for i, (_, op) in enumerate(self.cycles) if isinstance(op, Init)]
        return len(inits) - (1 if inits and inits[0] == 0 else 0)


# -- validation -------------------------------------------------------------

def validate(p: ExecutionProgram) -> list[str]:
    """List every invariant violation; empty means the program is well formed."""
    violations = []
    input_cells = set(p.inputs.values())
    for name, cell in [*p.inputs.items(), *p.outputs.items()]:
        if not 0 <= cell < p.row_size:
            violations.append(f"signal {name}: cell {cell} outside row of {p.row_size}")
    written = set()  # used as a gate output since its last Init
    for label, op in p.cycles:
        for cell in op_cells(op):
            if not 0 <= cell < p.row_size:
                violations.append(f"{label}: cell {cell} outside row of {p.row_size}")
        if isinstance(op, Init):
            written.difference_update(op.cells)
            continue
        if op.output in op.inputs:
            violations.append(f"{label}: output cell {op.output} is also an input")
        if op.output in input_cells:
            violations.append(f"{label}: primary-input cell {op.output} used as gate output")
        if op.output in written:
            violations.append(
                f"{label}: cell {op.output} reused as output without a new Init")
        written.add(op.output)
    return violations


def check(p: ExecutionProgram) -> ExecutionProgram:
    problems = validate(p)
    if problems:
        raise ProgramValidationError("; ".join(problems))
    return p


# -- SIMPLER mapping format ------------------------------------------------

_REF = r"'?\s*([^\s(),'{}=]+)\s*\(\s*(\d+)\s*\)\s*'?"
_REF_RE = re.compile(_REF)
_INIT_RE = re.compile(r"^(?:Init|Initialization\s*\(\s*Ron\s*\))\s*\{(.*)\}$")
_GATE_RE = re.compile(r"^" + _REF + r"\s*=\s*(inv1|nor(\d+))\s*\{(.*)\}$")


def _parse_refs(body: str, ctx: str) -> list[tuple[str, int]]:
    refs = []
    for chunk in body.split(","):
        chunk = chunk.strip()
        m = _REF_RE.fullmatch(chunk)
        if not m:
            raise ParseError(f"{ctx}: malformed cell reference {chunk!r}")
        refs.append((m.group(1), int(m.group(2))))
    return refs


def parse_op(text: str, ctx: str = "op") -> MicroOp:
    s = text.strip()
    m = _INIT_RE.match(s)
    if m:
        cells = [c for _, c in _parse_refs(m.group(1), ctx)]
        try:
            return Init(tuple(cells))
        except ValueError as e:
            raise ParseError(f"{ctx}: {e}") from None
    m = _GATE_RE.match(s)
    if not m:
        raise ParseError(f"{ctx}: cannot parse op {text!r}")
    name, out = m.group(1), int(m.group(2))
    kind, arity, body = m.group(3), m.group(4), m.group(5)
    ins = [c for _, c in _parse_refs(body, ctx)]
    if kind == "inv1":
        if len(ins) != 1:
            raise ParseError(f"{ctx}: inv1 takes one input, got {len(ins)}")
        return Not(ins[0], out, name=name)
    if int(arity) < 2 or int(arity) != len(ins):
        raise ParseError(f"{ctx}: {kind} with {len(ins)} inputs")
    return Nor(tuple(ins), out, name=name)


def _parse_signal_map(text, key) -> dict[str, int]:
    s = str(text).strip()
    if s.startswith("{") and s.endswith("}"):
        s = s[1:-1]
    if not s.strip():
        return {}
    return {name: cell for name, cell in _parse_refs(s, key)}


def parse_simpler(text: str) -> ExecutionProgram:
    """Parse a SIMPLER mapping document (JSON, outer braces optional)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        try:
            doc = json.loads("{" + text.strip().rstrip(",") + "}")
        except json.JSONDecodeError as e:
            raise ParseError(f"not a SIMPLER mapping document: {e}") from None
    if not isinstance(doc, dict):
        raise ParseError("mapping document must be a JSON object")
    try:
        row_size = int(doc["Row size"])
        inputs = _parse_signal_map(doc.get("Inputs", ""), "Inputs")
        outputs = _parse_signal_map(doc.get("Outputs", ""), "Outputs")
        sequence = doc.get("Execution sequence") or {}
    except KeyError as e:
        raise ParseError(f"missing key {e.args[0]!r}") from None
    if not isinstance(sequence, dict):
        raise ParseError("'Execution sequence' must be an object")
    cycles = [(label, parse_op(op, f"Execution sequence/{label}"))
              for label, op in sequence.items()]
    declared_reuse = doc.get("Reuse cycles")
    program = ExecutionProgram(
        row_size, inputs, outputs, tuple(cycles),
        reuse_cycles=None if declared_reuse is None else int(declared_reuse),
        number_of_gates=doc.get("Number of Gates"))
    computed_reuse = program.computed_reuse_cycles()
    for label, op in program.cycles:
        bad = [c for c in op_cells(op) if c >= row_size]
        if bad:
            raise ProgramValidationError(
                f"Execution sequence/{label}: cell {bad[0]} outside row of {row_size}")
    for name, cell in [*inputs.items(), *outputs.items()]:
        if cell >= row_size:
            raise ProgramValidationError(f"signal {name}: cell {cell} outside row of {row_size}")
    if declared_reuse is not None and int(declared_reuse) != computed_reuse:
        warnings.warn(f"'Reuse cycles' says {declared_reuse} but the sequence has "
                      f"{computed_reuse} non-leading Init cycles", stacklevel=2)
    return program


def emit_simpler(p: ExecutionProgram, benchmark: str | None = None) -> str:
    """Render ``p`` in the SIMPLER mapping format (JSON, key order of SIMPLER)."""
    occupant = {cell: name for name, cell in p.inputs.items()}

    def ref(cell, quote=False):
        r = f"{occupant.get(cell, 'D')}({cell})"
        return f"'{r}'" if quote else r

    sequence = {}
    for k, (label, op) in enumerate(p.cycles):
        if isinstance(op, Init):
            sequence[label] = "Init{" + ",".join(ref(c, quote=(k == 0)) for c in op.cells) + "}"
            continue
        args = ",".join(ref(c) for c in op.inputs)
        occupant[op.output] = op.name or f"n{k}_"
        kind = "inv1" if isinstance(op, Not) else f"nor{len(op.inputs)}"
        sequence[label] = f"{ref(op.output)}={kind}{{{args}}}"

    def sig(mapping):
        return "{" + ",".join(f"{n}({c})" for n, c in mapping.items()) + "}"

    doc = {}
    if benchmark:
        doc["Benchmark"] = benchmark
    doc["Row size"] = p.row_size
    doc["Number of Gates"] = len(p.gate_ops)
    doc["Inputs"] = sig(p.inputs)
    doc["Outputs"] = sig(p.outputs)
    doc["Reuse cycles"] = p.computed_reuse_cycles()
    doc["Execution sequence"] = sequence
    return json.dumps(doc, indent=4) + "\n"


# -- gate netlists ---------------------------------------------------------

@dataclass(frozen=True)
class Gate:
    output: str
    kind: str  # "NOT" or "NOR"
    inputs: tuple[str, ...]


@dataclass(frozen=True)
class GateNetlist:
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    gates: tuple[Gate, ...]

    @property
    def n_not(self) -> int:
        return sum(g.kind == "NOT" for g in self.gates)

    @property
    def n_nor(self) -> int:
        return sum(g.kind == "NOR" for g in self.gates)


_GATE_LINE = re.compile(r"^([A-Za-z_][\w\[\].$]*)\s*=\s*(NOT|NOR)\s*\((.*)\)$", re.IGNORECASE)
_DECL_LINE = re.compile(r"^(INPUT|OUTPUT)\s*\(?\s*([A-Za-z_][\w\[\].$]*)\s*\)?$", re.IGNORECASE)


def make_netlist(inputs, outputs, gates) -> GateNetlist:
    """Check names and connectivity, and return the gates in topological order."""
    inputs, outputs = tuple(inputs), tuple(outputs)
    by_name: dict[str, Gate] = {}
    for name in inputs:
        if name in by_name or inputs.count(name) > 1:
            raise NetlistError(f"duplicate definition of {name!r}")
    for g in gates:
        if g.output in by_name or g.output in inputs:
            raise NetlistError(f"duplicate definition of {g.output!r}")
        if g.kind == "NOT" and len(g.inputs) != 1:
            raise NetlistError(f"{g.output}: NOT takes exactly one input")
        if g.kind == "NOR" and len(g.inputs) < 2:
            raise NetlistError(f"{g.output}: NOR takes at least two inputs")
        if len(set(g.inputs)) != len(g.inputs):
            raise NetlistError(f"{g.output}: repeated gate input")
        by_name[g.output] = g
    known = set(inputs) | set(by_name)
    for g in gates:
        for s in g.inputs:
            if s not in known:
                raise NetlistError(f"{g.output}: unknown signal {s!r}")
    for s in outputs:
        if s not in known:
            raise NetlistError(f"output {s!r} is never defined")
    # stable Kahn sort: among ready gates, the earliest in source order goes first
    deps = {g.output: {s for s in g.inputs if s in by_name} for g in gates}
    readers: dict[str, list[int]] = {}
    for i, g in enumerate(gates):
        for s in deps[g.output]:
            readers.setdefault(s, []).append(i)
    pending = {g.output: len(deps[g.output]) for g in gates}
    ready = [i for i, g in enumerate(gates) if not pending[g.output]]
    heapq.heapify(ready)
    ordered = []
    while ready:
        i = heapq.heappop(ready)
        ordered.append(gates[i])
        for j in readers.get(gates[i].output, ()):
            pending[gates[j].output] -= 1
            if not pending[gates[j].output]:
                heapq.heappush(ready, j)
    if len(ordered) != len(gates):
        stuck = sorted(s for s, k in pending.items() if k)
        raise NetlistError(f"combinational cycle through {', '.join(stuck)}")
    sorted_gates = tuple(ordered)
    return GateNetlist(inputs, outputs, sorted_gates)


def parse_netlist(text: str) -> GateNetlist:
    """Parse ``INPUT x`` / ``OUTPUT y`` / ``y = NOR(a, b)`` / ``y = NOT(a)`` lines."""
    inputs, outputs, gates = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DECL_LINE.match(line)
        if m:
            (inputs if m.group(1).upper() == "INPUT" else outputs).append(m.group(2))
            continue
        m = _GATE_LINE.match(line)
        if not m:
            raise NetlistError(f"line {lineno}: cannot parse {raw.strip()!r}")
        args = tuple(a.strip() for a in m.group(3).split(",") if a.strip())
        gates.append(Gate(m.group(1), m.group(2).upper(), args))
    return make_netlist(inputs, outputs, gates)


def format_netlist(n: GateNetlist) -> str:
    lines = [f"INPUT {s}" for s in n.inputs] + [f"OUTPUT {s}" for s in n.outputs]
    lines += [f"{g.output} = {g.kind}({', '.join(g.inputs)})" for g in n.gates]
    return "\n".join(lines) + "\n"


def evaluate_logic(n: GateNetlist, inputs: Mapping[str, int]) -> dict[str, int]:
    """Reference boolean evaluation; returns the primary-output values."""
    missing = [s for s in n.inputs if s not in inputs]
    if missing:
        raise KeyError(f"no value for input(s) {', '.join(missing)}")
    values = {s: int(bool(inputs[s])) for s in n.inputs}
    for g in n.gates:
        values[g.output] = int(not any(values[s] for s in g.inputs))
    return {s: values[s] for s in n.outputs}


# -- naive row mapper ------------------------------------------------------

def last_uses(n: GateNetlist) -> dict[str, int]:
    """Index of the last gate reading each gate-produced signal (own index if unread)."""
    last = {g.output: i for i, g in enumerate(n.gates)}
    for i, g in enumerate(n.gates):
        for s in g.inputs:
            if s in last:
                last[s] = max(last[s], i)
    return last


def map_to_row(n: GateNetlist, row_size: int | None = None) -> ExecutionProgram:
    """Map one gate per cycle onto a single row.

    Inputs occupy cells ``0..PI-1``. Gate outputs take the lowest free cell; a cell
    is released after the last reader of its signal runs (primary outputs never
    are). The leading Init covers every cell that will ever hold a gate output;
    released cells are re-initialized in one batched Init right before the first
    gate that needs one of them.
    """
    inputs = {s: i for i, s in enumerate(n.inputs)}
    last = last_uses(n)
    keep = set(n.outputs)
    free: list[int] = []  # released cells, kept sorted
    next_fresh = len(inputs)
    cell_of = dict(inputs)
    placement = []
    for i, g in enumerate(n.gates):
        if free:
            cell = free.pop(0)
        else:
            cell = next_fresh
            next_fresh += 1
        if row_size is not None and cell >= row_size:
            raise RowOverflowError(
                f"gate {g.output} needs cell {cell} but the row has {row_size} cells")
        cell_of[g.output] = cell
        placement.append(cell)
        released = {s for s in {*g.inputs, g.output}
                    if s in last and last[s] == i and s not in keep}
        free = sorted(free + [cell_of[s] for s in released])
    used = next_fresh if row_size is None else row_size

    cycles: list[tuple[str, MicroOp]] = []
    first = sorted(set(placement))
    if first:
        cycles.append(("", Init(tuple(first))))
    dirty: list[int] = []  # written, then released, not yet re-initialized
    written = set()
    for i, g in enumerate(n.gates):
        out = placement[i]
        if out in written:
            cycles.append(("", Init(tuple(sorted(dirty)))))
            written.difference_update(dirty)
            dirty = []
        ins = tuple(cell_of[s] for s in g.inputs)
        op = Not(ins[0], out, name=g.output) if g.kind == "NOT" else Nor(ins, out, name=g.output)
        cycles.append(("", op))
        written.add(out)
        for s in {*g.inputs, g.output}:
            if s in last and last[s] == i and s not in keep:
                dirty.append(cell_of[s])
    cycles = [(f"T{k}", op) for k, (_, op) in enumerate(cycles)]
    outputs = {s: cell_of[s] for s in n.outputs}
    return check(ExecutionProgram(used, inputs, outputs, tuple(cycles)))


def peak_cells(n: GateNetlist) -> int:
    """Cells the mapper needs: inputs plus the peak number of live gate signals."""
    last = last_uses(n)
    keep = set(n.outputs)
    end = {s: (len(n.gates) if s in keep else last[s]) for s in last}
    born = {g.output: i for i, g in enumerate(n.gates)}
    peak = max((sum(born[s] <= i <= end[s] for s in born) for i in range(len(n.gates))),
               default=0)
    return len(n.inputs) + peak
