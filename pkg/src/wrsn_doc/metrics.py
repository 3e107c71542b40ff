"""The four evaluation metrics, computed from a finished trace.

Results files
-------------
``results.csv`` has one row per scenario with columns :data:`RESULT_COLUMNS`.
Undefined ratios are written as ``undefined``.

Plot-data files (one per metric, ``<metric>.csv``) have a ``node_count``
column followed by one column per attack tier (and controller setting when
both are present), holding the mean over seeds.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path

from .trace import TraceLog

UNDEFINED = None

RESULT_COLUMNS = (
    "node_count",
    "tier",
    "seed",
    "controller",
    "energy_usage_efficiency",
    "survival_rate",
    "detection_rate",
    "false_positive_rate",
    "travel_distance",
    "travel_distance_per_cycle",
)
PLOT_METRICS = ("energy_usage_efficiency", "survival_rate", "detection_rate", "travel_distance")


@dataclass
class ScenarioResult:
    node_count: int
    tier: str
    seed: int
    controller: str
    energy_usage_efficiency: float | None
    survival_rate: float
    detection_rate: float | None
    false_positive_rate: float | None
    travel_distance: float
    travel_distance_per_cycle: float

    def row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in RESULT_COLUMNS]


def _fmt(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def energy_totals(trace: TraceLog) -> tuple[float, float]:
    """(energy received by nodes, energy spent by MCVs on travel and transfer)."""
    received = math.fsum(r["received"] for r in trace if r["type"] == "charge")
    sent = math.fsum(r["sent"] for r in trace if r["type"] == "charge")
    cost = trace.config.get("travel_cost", 0.0)
    return received, sent + travel_distance(trace) * cost


def energy_usage_efficiency(trace: TraceLog) -> float | None:
    received, spent = energy_totals(trace)
    if spent <= 0:
        return UNDEFINED
    return 100.0 * received / spent


def survival_rate(trace: TraceLog, at: float | None = None) -> float:
    steps = [r for r in trace if r["type"] == "step"]
    if not steps:
        raise ValueError("trace has no step records")
    n = trace.config["node_count"]
    if at is None:
        rec = steps[-1]
    else:
        if at > steps[-1]["t"] + 1e-9:
            raise ValueError(f"time {at} is past the end of the trace")
        rec = steps[0]
        for r in steps:
            if r["t"] <= at + 1e-9:
                rec = r
            else:
                break
    return 100.0 * rec["alive"] / n


def flagged_nodes(trace: TraceLog) -> set[int]:
    return {r["node"] for r in trace if r["type"] == "score" and r["flag"]}


def detection_rate(flagged, ground_truth, n_nodes: int) -> tuple[float | None, float | None]:
    """(detection %, false-positive %) at node level."""
    flagged = set(flagged)
    malicious = set(ground_truth)
    honest = n_nodes - len(malicious)
    det = UNDEFINED if not malicious else 100.0 * len(flagged & malicious) / len(malicious)
    fpr = UNDEFINED if honest <= 0 else 100.0 * len(flagged - malicious) / honest
    return det, fpr


def travel_distance(trace: TraceLog) -> float:
    last = None
    for r in trace:
        if r["type"] == "step":
            last = r
    if last is None:
        return 0.0
    return math.fsum(m[3] for m in last["mcvs"])


def charging_cycles(trace: TraceLog) -> int:
    """Tank cycles: each MCV's first tank plus one per refill."""
    n_mcv = trace.config.get("mcv_count", 1)
    return n_mcv + sum(1 for r in trace if r["type"] == "refill")


def scenario_result(trace: TraceLog, tier: str | None = None, seed: int | None = None,
                    controller: str | None = None) -> ScenarioResult:
    cfg = trace.config
    if trace.header.get("controller") is not None:
        det, fpr = detection_rate(flagged_nodes(trace), trace.ground_truth, cfg["node_count"])
    else:
        det, fpr = UNDEFINED, UNDEFINED
    dist = travel_distance(trace)
    attack = trace.header.get("attack") or {}
    return ScenarioResult(
        node_count=cfg["node_count"],
        tier=tier if tier is not None else attack.get("attack_tier", "none"),
        seed=cfg["rng_seed"] if seed is None else seed,
        controller=controller or ("on" if trace.header.get("controller") else "off"),
        energy_usage_efficiency=energy_usage_efficiency(trace),
        survival_rate=survival_rate(trace),
        detection_rate=det,
        false_positive_rate=fpr,
        travel_distance=dist,
        travel_distance_per_cycle=dist / charging_cycles(trace),
    )


def results_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in sorted(results, key=lambda r: (r.node_count, r.tier, r.controller, r.seed)):
        w.writerow(r.row())
    return buf.getvalue()


def aggregate(results, metric: str):
    """{(node_count, series): mean over seeds} skipping undefined values."""
    cells = defaultdict(list)
    for r in results:
        v = getattr(r, metric)
        if v is not None:
            cells[(r.node_count, _series(r, results))].append(v)
    return {k: math.fsum(v) / len(v) for k, v in cells.items()}


def _series(r: ScenarioResult, results) -> str:
    controllers = {x.controller for x in results}
    return r.tier if len(controllers) <= 1 else f"{r.tier}/{r.controller}"


def plot_csv(results, metric: str) -> str:
    results = list(results)
    agg = aggregate(results, metric)
    counts = sorted({r.node_count for r in results})
    series = sorted({_series(r, results) for r in results})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_count", *series])
    for n in counts:
        w.writerow([n, *[_fmt(agg.get((n, s))) for s in series]])
    return buf.getvalue()


def export_results(results, path) -> list[Path]:
    """Write ``results.csv`` plus one plot-data file per metric into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    results = list(results)
    written = [out / "results.csv"]
    written[0].write_text(results_csv(results))
    for metric in PLOT_METRICS:
        p = out / f"{metric}.csv"
        p.write_text(plot_csv(results, metric))
        written.append(p)
    return written


def result_from_dict(d: dict) -> ScenarioResult:
    return ScenarioResult(**d)


def result_to_dict(r: ScenarioResult) -> dict:
    return asdict(r)
