"""Pilot run that calibrates the data-dependent acceptance gates.

The pilot uses seeds disjoint from the acceptance suite (``PILOT_BASE``) and
writes ``tests/acceptance_gates.json``.  The gates are then frozen: the
acceptance suite only reads that file and never re-derives them.

Gate rules
----------
recovery_abs_gate
    1.5 x the largest pilot MAE between the variational b and the
    quadrature-oracle MLE of b at N=4000.
selection_rate
    Fixed at 0.8; the pilot only confirms the rate is attainable.
coverage_band
    [pilot coverage - 0.10, 1.0] for 95% percentile intervals of b.
ari_gate
    Smallest pilot ARI minus 0.05.

Usage::

    python scripts/pilot_calibration.py [--out tests/acceptance_gates.json]
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import studies  # noqa: E402

PILOT_BASE = 90_000
log = logging.getLogger("pilot")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(ROOT / "tests" / "acceptance_gates.json"))
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    t0 = time.time()
    report = {"pilot_base_seed": PILOT_BASE}

    gaps, wins = [], []
    for rep in range(args.reps):
        out = studies.recovery_replicate(rep, PILOT_BASE)
        mae_small, mae_large = out[500][0], out[4000][0]
        _, res, data = out[4000]
        gaps.append(studies.gh_mle_gap(data, res.model))
        wins.append(mae_large < mae_small)
        log.info("recovery %d: mae500=%.3f mae4000=%.3f gap=%.3f", rep, mae_small,
                 mae_large, gaps[-1])
    report["recovery"] = {"gh_mle_gaps": gaps, "large_n_better": wins}

    picks = []
    for rep in range(args.reps):
        best = studies.selection_replicate(rep, PILOT_BASE)
        picks.append(best.label())
        log.info("selection %d: %s", rep, best.label())
    rate = float(np.mean([p.startswith("G=2,D=1") for p in picks]))
    report["selection"] = {"picks": picks, "rate": rate}

    hits = []
    for rep in range(2 * args.reps):
        h, _ = studies.coverage_replicate(rep, PILOT_BASE)
        hits += h
        log.info("coverage %d: %.3f", rep, np.mean(h))
    coverage = float(np.mean(hits))
    report["coverage"] = {"rate": coverage, "n": len(hits)}

    aris = []
    for rep in range(2 * args.reps):
        ari, _ = studies.ari_replicate(rep, PILOT_BASE)
        aris.append(float(ari))
        log.info("ari %d: %.3f", rep, ari)
    report["ari"] = aris

    gates = {
        "recovery_abs_gate": round(1.5 * max(gaps), 3),
        "selection_rate": 0.8,
        "coverage_band": [round(coverage - 0.10, 3), 1.0],
        "ari_gate": round(min(aris) - 0.05, 3),
    }
    if rate < gates["selection_rate"]:
        log.warning("pilot selection rate %.2f is below the 0.8 gate", rate)
    report["gates"] = gates
    report["wall_seconds"] = round(time.time() - t0, 1)
    Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    log.info("gates: %s", gates)


if __name__ == "__main__":
    main()
