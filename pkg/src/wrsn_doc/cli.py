"""Command-line front end: single runs, sweeps and threshold calibration.

Usage::

    wrsn-doc --config scenario.cfg --out results/
    wrsn-doc --sweep grid.cfg --out sweep/ --parallel 4
    wrsn-doc --config scenario.cfg --calibrate-fpr 0.05

A sweep file uses the scenario ``key = value`` format. ``node_count``,
``attack_tier`` and ``controller`` may list several comma-separated values,
``seeds`` gives the number of replicates per cell and every other key is a
plain scenario override. Replicate ``i`` runs with ``rng_seed = base + i``.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, read_kv_file
from .detection import ContractError, calibrate_threshold
from .metrics import export_results, result_from_dict, result_to_dict, results_csv
from .scenario import Scenario, load_scenario, parse_on_off, run, scenario_from_kv, simulate

log = logging.getLogger(__name__)

SWEEP_AXES = ("node_count", "attack_tier", "controller")
CALIBRATION_TIERS = ("LAI", "MAI", "HAI")


def apply_overrides(sc: Scenario, seed=None, controller=None, score_mode=None) -> Scenario:
    changes = {}
    if seed is not None:
        changes["rng_seed"] = seed
    if controller is not None:
        changes["controller"] = parse_on_off(controller, "--controller")
    if score_mode is not None:
        changes["score_mode"] = score_mode
    return sc.replace(**changes).validate() if changes else sc


def run_scenario(sc: Scenario, out_dir) -> list[Path]:
    """Run one scenario; write ``trace.jsonl`` and ``results.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace, result = run(sc)
    return [trace.write(out / "trace.jsonl"), _write(out / "results.csv", results_csv([result]))]


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def load_sweep(path, seed=None, controller=None, score_mode=None) -> list[Scenario]:
    """Expand a sweep file into its cross-product of scenarios."""
    raw = read_kv_file(path)
    axes = {k: [v.strip() for v in raw.pop(k).split(",") if v.strip()] for k in SWEEP_AXES if k in raw}
    try:
        replicates = int(raw.pop("seeds", "1"))
    except ValueError as exc:
        raise ConfigError(f"{path}: seeds must be an integer") from exc
    if replicates < 1:
        raise ConfigError(f"{path}: seeds must be >= 1")
    base = apply_overrides(scenario_from_kv(raw, str(path)), seed, None, score_mode)
    if controller is not None:
        axes["controller"] = [controller]
    names = list(axes)
    scenarios = []
    for combo in itertools.product(*(axes[k] for k in names)):
        cell = dict(zip(names, combo))
        if "node_count" in cell:
            cell["node_count"] = int(cell["node_count"])
        if "controller" in cell:
            cell["controller"] = parse_on_off(cell["controller"], "controller")
        for i in range(replicates):
            scenarios.append(base.replace(**cell, rng_seed=base.network.rng_seed + i).validate())
    return scenarios


def _run_one(sc: Scenario) -> dict:
    return result_to_dict(run(sc)[1])


def run_sweep(scenarios, out_dir, parallel: int = 1) -> list[Path]:
    """Run every scenario (optionally in worker processes) and write aggregated files."""
    scenarios = list(scenarios)
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_run_one, scenarios))
    else:
        rows = [_run_one(sc) for sc in scenarios]
    return export_results([result_from_dict(r) for r in rows], out_dir)


def calibration_set(sc: Scenario, replicates: int = 3):
    """Per-node maximum combined score and malicious label from labeled runs."""
    scores, labels = [], []
    for tier, i in itertools.product(CALIBRATION_TIERS, range(replicates)):
        cell = sc.replace(attack_tier=tier, attack_fraction=None, controller=True,
                          rng_seed=sc.network.rng_seed + i)
        trace = simulate(cell)
        peak = np.zeros(cell.network.node_count)
        for r in trace.of_type("score"):
            peak[r["node"]] = max(peak[r["node"]], r["m"])
        truth = np.zeros(cell.network.node_count, dtype=bool)
        truth[list(trace.ground_truth)] = True
        scores.append(peak)
        labels.append(truth)
    if not scores:
        return np.zeros(0), np.zeros(0, dtype=bool)
    return np.concatenate(scores), np.concatenate(labels)


def calibrate(sc: Scenario, target_fpr: float, replicates: int = 3):
    scores, labels = calibration_set(sc, replicates)
    return calibrate_threshold(scores, labels, target_fpr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wrsn-doc", description=__doc__.split("\n\n")[0])
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario file for a single run or calibration")
    src.add_argument("--sweep", type=Path, help="sweep file listing the grid to run")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="override rng_seed (base seed for sweeps)")
    p.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--controller", choices=("on", "off"), help="force the controller on or off")
    p.add_argument("--score-mode", choices=("literal", "tail"), help="sub-score formulation")
    p.add_argument("--calibrate-fpr", type=float, metavar="X",
                   help="calibrate theta_doc for false-positive rate X instead of running")
    p.add_argument("--replicates", type=int, default=3, help="seeds per tier for calibration")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        if args.sweep is not None:
            if args.calibrate_fpr is not None:
                raise ConfigError("--calibrate-fpr needs --config, not --sweep")
            scenarios = load_sweep(args.sweep, args.seed, args.controller, args.score_mode)
            written = run_sweep(scenarios, args.out, args.parallel)
            print(f"{len(scenarios)} scenarios -> {', '.join(str(p) for p in written)}")
            return 0
        sc = apply_overrides(load_scenario(args.config), args.seed, args.controller, args.score_mode)
        if args.calibrate_fpr is not None:
            print(calibrate(sc, args.calibrate_fpr, args.replicates).report())
            return 0
        written = run_scenario(sc, args.out)
        print(" ".join(str(p) for p in written))
        return 0
    except (ConfigError, ContractError) as exc:
        print(f"wrsn-doc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
