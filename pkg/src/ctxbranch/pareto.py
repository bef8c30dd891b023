"""Efficiency metric, percent deltas, Pareto frontiers, and trade-off reports.

Configurations are compared with Efficiency = Accuracy / (Energy * Latency)
and with percent deltas against a named baseline. Frontier extraction uses
weak dominance (higher accuracy, lower cost, at least one strict), so
duplicated metric points all stay on the frontier.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError

COST_AXES = ("energy", "latency")


@dataclass(frozen=True)
class ConfigPoint:
    """One model configuration's measured (or simulated) metrics."""

    name: str
    accuracy: float
    latency_ms: float
    energy_mJ: float
    sparam_M: float = 0.0
    dparam_M: float = 0.0
    gmacs: float = 0.0

    def cost(self, axis: str) -> float:
        if axis == "energy":
            return self.energy_mJ
        if axis == "latency":
            return self.latency_ms
        raise ValueError(f"cost axis must be one of {COST_AXES}, got {axis!r}")


@dataclass(frozen=True)
class FrontierResult:
    frontier: tuple[ConfigPoint, ...]
    dominated: tuple[ConfigPoint, ...]
    objectives: tuple[str, str]  # (maximize, minimize)


def efficiency(accuracy: float, energy_mJ: float, latency_ms: float) -> float:
    """Accuracy / (Energy * Latency); the combined quality score."""
    if energy_mJ <= 0 or latency_ms <= 0:
        raise ValueError("energy and latency must be positive")
    return accuracy / (energy_mJ * latency_ms)


def percent_delta(baseline: float, value: float) -> float:
    """100 * (value - baseline) / baseline."""
    if baseline == 0:
        raise ValueError("baseline must be nonzero")
    return 100.0 * (value - baseline) / baseline


def pareto_front(points, cost_axis: str = "energy") -> FrontierResult:
    """Split points into the non-dominated frontier and the rest.

    A point is dominated iff some other point has accuracy >= its accuracy
    and cost <= its cost, with at least one strict inequality.
    """
    pts = list(points)
    if not pts:
        raise ValueError("need at least one point")
    if cost_axis not in COST_AXES:
        raise ValueError(f"cost axis must be one of {COST_AXES}, got {cost_axis!r}")

    def dominated(p: ConfigPoint) -> bool:
        for q in pts:
            if q is p:
                continue
            if (q.accuracy >= p.accuracy and q.cost(cost_axis) <= p.cost(cost_axis)
                    and (q.accuracy > p.accuracy or q.cost(cost_axis) < p.cost(cost_axis))):
                return True
        return False

    frontier = tuple(p for p in pts if not dominated(p))
    rest = tuple(p for p in pts if dominated(p))
    return FrontierResult(frontier=frontier, dominated=rest,
                          objectives=("accuracy", cost_axis))


_DELTA_COLUMNS = (
    ("accuracy", "accuracy_delta_pct"),
    ("latency_ms", "latency_delta_pct"),
    ("energy_mJ", "energy_delta_pct"),
    ("dparam_M", "dparam_delta_pct"),
    ("gmacs", "macs_delta_pct"),
)


def report_rows(points, baseline_name: str, cost_axis: str = "energy") -> list[dict]:
    """Raw metrics, percent deltas vs the baseline, efficiency delta, and
    frontier membership for every point."""
    by_name = {p.name: p for p in points}
    if baseline_name not in by_name:
        raise ValueError(f"baseline {baseline_name!r} not among the points")
    base = by_name[baseline_name]
    base_eff = efficiency(base.accuracy, base.energy_mJ, base.latency_ms)
    on_frontier = {p.name for p in pareto_front(points, cost_axis).frontier}

    rows = []
    for p in points:
        row = {
            "name": p.name,
            "accuracy": p.accuracy,
            "latency_ms": p.latency_ms,
            "energy_mJ": p.energy_mJ,
            "sparam_M": p.sparam_M,
            "dparam_M": p.dparam_M,
            "gmacs": p.gmacs,
            "efficiency": efficiency(p.accuracy, p.energy_mJ, p.latency_ms),
            "on_frontier": p.name in on_frontier,
        }
        for metric, column in _DELTA_COLUMNS:
            row[column] = percent_delta(getattr(base, metric), getattr(p, metric))
        row["efficiency_delta_pct"] = percent_delta(base_eff, row["efficiency"])
        rows.append(row)
    return rows


def emit_report(points, baseline_name: str, fmt: str = "text",
                cost_axis: str = "energy", note: str | None = None) -> str:
    """Render the comparison table as aligned text, CSV, or JSON.

    Text output rounds percentages to one decimal; CSV/JSON keep full
    precision.
    """
    rows = report_rows(points, baseline_name, cost_axis)
    if fmt == "json":
        doc = {"baseline": baseline_name, "cost_axis": cost_axis, "rows": rows}
        if note:
            doc["note"] = note
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"format must be text, csv, or json, got {fmt!r}")

    headers = ["name", "acc", "acc%", "lat(ms)", "lat%", "en(mJ)", "en%",
               "Sparam", "Dparam", "Dparam%", "GMACs", "MACs%", "eff%", "front"]
    table = [headers]
    for r in rows:
        table.append([
            r["name"],
            f"{r['accuracy']:.1f}",
            f"{r['accuracy_delta_pct']:+.1f}",
            f"{r['latency_ms']:.1f}",
            f"{r['latency_delta_pct']:+.1f}",
            f"{r['energy_mJ']:.1f}",
            f"{r['energy_delta_pct']:+.1f}",
            f"{r['sparam_M']:.2f}",
            f"{r['dparam_M']:.2f}",
            f"{r['dparam_delta_pct']:+.1f}",
            f"{r['gmacs']:.2f}",
            f"{r['macs_delta_pct']:+.1f}",
            f"{r['efficiency_delta_pct']:+.1f}",
            "*" if r["on_frontier"] else "",
        ])
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in table]
    lines.insert(1, "-" * len(lines[0]))
    out = "\n".join(lines) + "\n"
    out += f"(* = on the accuracy/{cost_axis} Pareto frontier; baseline: {baseline_name})\n"
    if note:
        out += f"note: {note}\n"
    return out


def load_points(path: str | Path) -> list[ConfigPoint]:
    """Read configuration points from a CSV (with header) or JSON file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    points = []
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
        records = doc["points"] if isinstance(doc, dict) else doc
    else:
        records = list(csv.DictReader(io.StringIO(text)))
    for i, rec in enumerate(records):
        try:
            points.append(ConfigPoint(
                name=str(rec["name"]),
                accuracy=float(rec["accuracy"]),
                latency_ms=float(rec["latency_ms"]),
                energy_mJ=float(rec["energy_mJ"]),
                sparam_M=float(rec.get("sparam_M", 0.0) or 0.0),
                dparam_M=float(rec.get("dparam_M", 0.0) or 0.0),
                gmacs=float(rec.get("gmacs", 0.0) or 0.0),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad point record {i} ({exc})") from exc
    if not points:
        raise SchemaError(f"{path}: no points found")
    return points


def points_to_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "accuracy", "latency_ms", "energy_mJ",
                     "sparam_M", "dparam_M", "gmacs"])
    for p in points:
        writer.writerow([p.name, repr(p.accuracy), repr(p.latency_ms),
                         repr(p.energy_mJ), repr(p.sparam_M), repr(p.dparam_M),
                         repr(p.gmacs)])
    return buf.getvalue()


def reference_points() -> list[ConfigPoint]:
    """The shipped transcription of the reference board measurements."""
    from importlib import resources

    ref = resources.files("ctxbranch.data").joinpath("reference_points.csv")
    records = list(csv.DictReader(io.StringIO(ref.read_text(encoding="utf-8"))))
    return [
        ConfigPoint(
            name=rec["name"], accuracy=float(rec["accuracy"]),
            latency_ms=float(rec["latency_ms"]), energy_mJ=float(rec["energy_mJ"]),
            sparam_M=float(rec["sparam_M"]), dparam_M=float(rec["dparam_M"]),
            gmacs=float(rec["gmacs"]),
        )
        for rec in records
    ]


def reference_groups() -> dict[str, list[ConfigPoint]]:
    """Reference points grouped by baseline (detector + input size)."""
    from importlib import resources

    ref = resources.files("ctxbranch.data").joinpath("reference_points.csv")
    records = list(csv.DictReader(io.StringIO(ref.read_text(encoding="utf-8"))))
    groups: dict[str, list[ConfigPoint]] = {}
    for rec in records:
        groups.setdefault(rec["group"], []).append(ConfigPoint(
            name=rec["name"], accuracy=float(rec["accuracy"]),
            latency_ms=float(rec["latency_ms"]), energy_mJ=float(rec["energy_mJ"]),
            sparam_M=float(rec["sparam_M"]), dparam_M=float(rec["dparam_M"]),
            gmacs=float(rec["gmacs"]),
        ))
    return groups
