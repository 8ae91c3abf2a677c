"""Coarse per-operation estimate, run summaries and the comparison table."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

from .program import ExecutionProgram
from .simulator import EnergyReport
from .waveform import EXEC, INIT, INPUT_LOAD, READ


@dataclass(frozen=True)
class CoarseModel:
    avg_not_energy: float = 46.53e-15
    avg_nor_energy: float = 53.75e-15

    def __post_init__(self):
        if self.avg_not_energy <= 0 or self.avg_nor_energy <= 0:
            raise ValueError("average energies must be positive")


PULSE_AVERAGES = CoarseModel()
DC_AVERAGES = CoarseModel(47.31e-15, 55.04e-15)


def coarse_estimate(n_not: int, n_nor: int, m: CoarseModel = PULSE_AVERAGES) -> float:
    if n_not < 0 or n_nor < 0:
        raise ValueError("gate counts must be non-negative")
    return n_not * m.avg_not_energy + n_nor * m.avg_nor_energy


PATTERNS = {"all0": "P1", "all1": "P2", "alt": "P3"}


def input_bits(p: ExecutionProgram, spec: str) -> dict[str, int]:
    """``all0`` / ``all1`` / ``alt`` or an explicit bit string in declared input order.

    ``alt`` starts with 1 on the first declared input (1010...).
    """
    names = list(p.inputs)
    n = len(names)
    if spec == "all0":
        bits = [0] * n
    elif spec == "all1":
        bits = [1] * n
    elif spec == "alt":
        bits = [(k + 1) % 2 for k in range(n)]
    else:
        if any(ch not in "01" for ch in spec) or len(spec) != n:
            raise ValueError(f"input pattern must be all0, all1, alt or {n} bits, got {spec!r}")
        bits = [int(ch) for ch in spec]
    return dict(zip(names, bits))


@dataclass
class RunSummary:
    name: str
    n_pi: int
    n_po: int
    cycles: int
    n_not: int
    n_nor: int
    coarse: float  # J
    # pattern label -> {category: J}
    patterns: dict[str, dict[str, float]] = field(default_factory=dict)

    def ratio(self, pattern: str) -> float:
        """(Init + InputLoad) over Exec energy; inf when nothing executed."""
        e = self.patterns[pattern]
        init = e.get(INIT, 0.0) + e.get(INPUT_LOAD, 0.0)
        ex = e.get(EXEC, 0.0)
        return init / ex if ex > 0 else float("inf")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunSummary":
        return cls(d["name"], int(d["n_pi"]), int(d["n_po"]), int(d["cycles"]),
                   int(d["n_not"]), int(d["n_nor"]), float(d["coarse"]),
                   {k: {c: float(x) for c, x in v.items()} for k, v in d["patterns"].items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def summarize(name: str, p: ExecutionProgram, reports: Mapping[str, EnergyReport],
              model: CoarseModel = PULSE_AVERAGES) -> RunSummary:
    pats = {k: {c: float(x) for c, x in r.category_totals.items()} for k, r in reports.items()}
    return RunSummary(name, len(p.inputs), len(p.outputs), len(p.cycles), p.n_not, p.n_nor,
                      coarse_estimate(p.n_not, p.n_nor, model), pats)


_COLUMNS = ("circuit", "PI/PO", "cycles", "pattern", "coarse pJ", "init pJ", "exec pJ",
            "read pJ", "init/exec")


def _rows(summaries: Sequence[RunSummary]) -> list[list[str]]:
    rows = []
    for s in summaries:
        for pat in s.patterns:
            e = s.patterns[pat]
            r = s.ratio(pat)
            rows.append([s.name, f"{s.n_pi}/{s.n_po}", str(s.cycles), pat,
                         f"{s.coarse * 1e12:.3f}",
                         f"{(e.get(INIT, 0.0) + e.get(INPUT_LOAD, 0.0)) * 1e12:.3f}",
                         f"{e.get(EXEC, 0.0) * 1e12:.4f}",
                         f"{e.get(READ, 0.0) * 1e12:.4f}",
                         "inf" if r == float("inf") else f"{r:.1f}×"])
    return rows


def render_comparison(summaries: Sequence[RunSummary]) -> str:
    """Aligned table: one row per circuit and input pattern. Init includes input load."""
    rows = [list(_COLUMNS)] + _rows(summaries)
    widths = [max(len(r[k]) for r in rows) for k in range(len(_COLUMNS))]
    lines = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def render_csv(summaries: Sequence[RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["circuit", "n_pi", "n_po", "cycles", "pattern", "coarse_j", "input_load_j",
                "init_j", "exec_j", "read_j", "ratio_init_exec"])
    for s in summaries:
        for pat, e in s.patterns.items():
            w.writerow([s.name, s.n_pi, s.n_po, s.cycles, pat, f"{s.coarse:.6e}",
                        f"{e.get(INPUT_LOAD, 0.0):.6e}", f"{e.get(INIT, 0.0):.6e}",
                        f"{e.get(EXEC, 0.0):.6e}", f"{e.get(READ, 0.0):.6e}",
                        f"{s.ratio(pat):.6g}"])
    return buf.getvalue()
