"""Per-iteration records of the outer solvers, serializable to JSON lines and
CSV for plotting, plus a deterministic summary (wall-clock fields are kept
separate so reruns compare bit-identical)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

EPS_KKT = "eps_kkt"
MAX_OUTER = "max_outer"
SUBSOLVER_FAILURE = "subsolver_failure"
INFEASIBLE_STALL = "infeasible_stall"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [float(a) for a in v.ravel()]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return repr(v)
    return v


@dataclass
class SolveTrace:
    """Append-only record of one outer solve."""

    solver: str = ""
    status: str = ""
    iterates: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    Delta: float = float("nan")
    objective: float = float("nan")
    psi_value: float = float("nan")
    constraint_violation: float = float("nan")
    kkt_ok: bool = False
    lemma_violations: int = 0
    nodes_total: int = 0
    wall_time: float = 0.0
    feasibility_criticality_value: float | None = None

    def add(self, iterate, row: dict) -> None:
        self.iterates.append(iterate)
        self.rows.append(row)

    @property
    def outer_iterations(self) -> int:
        return len(self.rows)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps({k: _jsonable(v) for k, v in row.items()}) + "\n")

    def to_csv(self, path) -> None:
        keys: list = []
        for row in self.rows:
            for k in row:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _jsonable(row.get(k, "")) for k in keys})

    def summary(self, include_wall_time: bool = True) -> dict:
        out = {
            "solver": self.solver,
            "status": self.status,
            "outer_iterations": self.outer_iterations,
            "objective": _jsonable(self.objective),
            "psi_value": _jsonable(self.psi_value),
            "constraint_violation": _jsonable(self.constraint_violation),
            "Delta": _jsonable(self.Delta),
            "kkt_ok": self.kkt_ok,
            "lemma_violations": self.lemma_violations,
            "milp_nodes_total": self.nodes_total,
        }
        if self.feasibility_criticality_value is not None:
            out["feasibility_criticality"] = _jsonable(self.feasibility_criticality_value)
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out
