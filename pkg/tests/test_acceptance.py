"""Acceptance criteria 1-10.

Each test records a single PASS/FAIL (or SKIP) line through the ``verdicts``
fixture; the lines are repeated in the pytest terminal summary.  Thresholds
marked as pilot-calibrated are read from ``acceptance_gates.json``, written
once by ``scripts/pilot_calibration.py`` on disjoint seeds and never
re-derived here.

Criterion 9 needs survey microdata and is skipped unless ``MLTA_ESS_DIR``
points to a directory holding ``rules.json`` and ``finland.csv``,
``italy.csv``, ``bulgaria.csv``.
"""

import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from mlta import (BootstrapSpec, Dataset, FitOptions, ModelConfig, SelectionGrid, align_labels,
                  bootstrap_se, fit, grid_search, simulate)
from mlta import cli
from mlta.bootstrap import apply_alignment, replicate_seed, resample
from mlta.model import CONSTRAINED, UNCONSTRAINED, zero_model
from mlta.posthoc import group_probs_by_covariate
from mlta.synth import QuadratureSpec, binary_covariates, gh_loglik, lc_loglik
from mlta.variational import fit_from_model

import studies
from oracles import enumerate_lc_loglik, lc_em_best
from survey import write_survey

GATES = json.loads((Path(__file__).with_name("acceptance_gates.json")).read_text())["gates"]
BASE = 0            # acceptance seeds; the pilot used a disjoint base
REPS = 20
_fits_with_tables = []


def random_model(config, R, P, rng, lo=-2.0, hi=2.0):
    model = zero_model(config, R, P)
    model.b = rng.uniform(lo, hi, model.b.shape)
    model.w = rng.uniform(lo, hi, model.w.shape)
    model.beta = rng.uniform(lo, hi, model.beta.shape)
    return model


def test_c01_elbo_monotone(verdicts):
    worst = np.inf
    for rep in range(50):
        rng = np.random.default_rng(1000 + rep)
        model = random_model(ModelConfig(2, 1), 7, 2, rng)
        data = simulate(model, binary_covariates(200, 1, rep), seed=rep).dataset
        res = fit(data, ModelConfig(2, 1), FitOptions(starts=1, seed=rep))
        worst = min(worst, float(np.min(np.diff(res.elbo_trace))))
    ok = worst >= -1e-8
    assert verdicts.record(1, ok, f"50 fits, smallest ELBO step {worst:.3e} (>= -1e-8)")


def test_c02_bound_below_quadrature(verdicts):
    worst_gap, worst_doubling = -np.inf, 0.0
    configs = [ModelConfig(1, 1), ModelConfig(2, 1), ModelConfig(2, 1, CONSTRAINED),
               ModelConfig(3, 1)]
    for rep in range(20):
        rng = np.random.default_rng(2000 + rep)
        cfg = configs[rep % len(configs)]
        R = 4 + rep % 4
        truth = random_model(cfg, R, 2, rng, -1.5, 1.5)
        data = simulate(truth, binary_covariates(150, 1, rep), seed=rep).dataset
        res = fit(data, cfg, FitOptions(starts=2, seed=rep))
        gh = gh_loglik(data, res.model)
        gh2 = gh_loglik(data, res.model, QuadratureSpec(2 * QuadratureSpec().nodes))
        worst_gap = max(worst_gap, res.final_elbo - gh)
        worst_doubling = max(worst_doubling, abs(gh - gh2))
    ok = worst_gap <= 1e-9 and worst_doubling <= 1e-8
    assert verdicts.record(2, ok, f"20 fits, max(elbo - loglik) {worst_gap:.3e} (<= 1e-9), "
                                  f"node doubling {worst_doubling:.2e} (<= 1e-8)")


def test_c03_latent_class_equivalence(verdicts):
    worst = 0.0
    for rep in range(10):
        G = 2 + rep % 2
        rng = np.random.default_rng(3000 + rep)
        # distinct +-1.2 intercept profiles keep the maximum in the interior
        base, k = rng.choice([-1.0, 1.0], 7), np.arange(7)
        model = zero_model(ModelConfig(G, 0), 7, 2)
        model.b = 1.2 * np.vstack([np.where(k % G == g, -base, base) for g in range(G)])
        model.beta = rng.uniform(-0.5, 0.5, model.beta.shape)
        data = simulate(model, binary_covariates(300, 1, rep), seed=rep).dataset
        res = fit(data, ModelConfig(G, 0), FitOptions(starts=10, seed=rep, tol=1e-12,
                                                      max_outer=5000))
        ref, _, _ = lc_em_best(data.Y, data.X, G, starts=10, seed=rep)
        worst = max(worst, abs(lc_loglik(data, res.model) - ref), abs(res.final_elbo - ref))
    worst_enum = 0.0
    for rep in range(20):
        rng = np.random.default_rng(3100 + rep)
        Y = rng.integers(0, 2, size=(6, 3))
        X = np.column_stack([np.ones(6), rng.integers(0, 2, 6)])
        model = zero_model(ModelConfig(2, 0), 3, 2)
        model.b = rng.normal(0, 1.5, size=(2, 3))
        model.beta = rng.normal(size=(1, 2))
        exact = enumerate_lc_loglik(Y, X, model.beta, model.b)
        worst_enum = max(worst_enum, abs(lc_loglik(Dataset.from_arrays(Y, X), model) - exact))
    ok = worst <= 1e-6 and worst_enum <= 1e-10
    assert verdicts.record(3, ok, f"10 fits vs exact EM max diff {worst:.2e} (<= 1e-6); "
                                  f"enumeration max diff {worst_enum:.2e} (<= 1e-10)")


def test_c04_structural_degeneracies(verdicts):
    worst_g1 = 0.0
    for rep in range(6):
        rng = np.random.default_rng(4000 + rep)
        D = 1 + rep % 2
        truth = random_model(ModelConfig(1, D), 6, 2, rng, -1.5, 1.5)
        data = simulate(truth, binary_covariates(150, 1, rep), seed=rep).dataset
        opts = FitOptions(starts=2, seed=rep)
        u = fit(data, ModelConfig(1, D, UNCONSTRAINED), opts).final_elbo
        c = fit(data, ModelConfig(1, D, CONSTRAINED), opts).final_elbo
        worst_g1 = max(worst_g1, abs(u - c))
    rng = np.random.default_rng(4100)
    truth = random_model(ModelConfig(2, 1), 6, 2, rng, -1.5, 1.5)
    data = simulate(truth, binary_covariates(200, 1, 1), seed=1).dataset
    table = grid_search(data, SelectionGrid(G=(1, 2, 3), D=(0, 1)), FitOptions(starts=2, seed=4))
    Ds, _, mu = table.bic_matrix(UNCONSTRAINED)
    _, _, mc = table.bic_matrix(CONSTRAINED)
    d0 = Ds.index(0)
    rows_equal = np.array_equal(mu[d0], mc[d0]) and np.array_equal(mu[:, 0], mc[:, 0])
    direct = [fit(data, ModelConfig(G, 0, v), FitOptions(starts=2, seed=4)).final_elbo
              for G in (2, 3) for v in (UNCONSTRAINED, CONSTRAINED)]
    worst_d0 = max(abs(direct[0] - direct[1]), abs(direct[2] - direct[3]))
    ok = worst_g1 <= 1e-10 and rows_equal and worst_d0 <= 1e-10
    assert verdicts.record(4, ok, f"G=1 variant ELBO diff {worst_g1:.1e} (<= 1e-10); "
                                  f"D=0 row and G=1 column identical across variants: "
                                  f"{rows_equal}; direct D=0 fits diff {worst_d0:.1e}")


def test_c05_recovery(verdicts):
    wins, gaps = 0, []
    for rep in range(REPS):
        out = studies.recovery_replicate(rep, BASE)
        wins += out[4000][0] < out[500][0]
        _, res, data = out[4000]
        gaps.append(studies.gh_mle_gap(data, res.model))
        _fits_with_tables.append((res, data))
    gate = GATES["recovery_abs_gate"]
    ok = wins >= 16 and max(gaps) <= gate
    assert verdicts.record(5, ok, f"N=4000 beats N=500 in {wins}/{REPS} (>= 16); max MAE of b "
                                  f"vs quadrature MLE {max(gaps):.3f} (<= {gate})")


def test_c06_bic_selection(verdicts):
    picks = [studies.selection_replicate(rep, BASE) for rep in range(REPS)]
    hits = sum((c.G, c.D) == (2, 1) for c in picks)
    rate = hits / REPS
    ok = rate >= GATES["selection_rate"]
    assert verdicts.record(6, ok, f"(G=2, D=1) selected in {hits}/{REPS} = {rate:.2f} "
                                  f"(>= {GATES['selection_rate']})")


def test_c07_bootstrap(verdicts):
    data = Dataset.from_arrays(np.tile([1, 0, 1, 1, 0], (40, 1)))
    flat = bootstrap_se(data, ModelConfig(1, 0), FitOptions(starts=1, tol=1e-5),
                        BootstrapSpec(S=10))
    zero_se = bool(np.all(flat.se == 0.0))

    hits, min_eig = [], np.inf
    for rep in range(REPS):
        h, res = studies.coverage_replicate(rep, BASE)
        hits += h
        min_eig = min(min_eig, float(np.linalg.eigvalsh(res.covariance).min()))
    coverage = float(np.mean(hits))
    lo, hi = GATES["coverage_band"]

    sim = studies.draw(300, 0, BASE, stream=8)
    point = fit(sim.dataset, studies.TRUE, FitOptions(starts=1, seed=BASE))
    worst = 0.0
    for s in range(5):
        boot = resample(sim.dataset, replicate_seed(BASE, s))
        rep_fit = fit(boot, studies.TRUE, FitOptions(starts=1, seed=BASE))
        # scramble labels and signs first so the alignment has work to do
        scrambled = apply_alignment(rep_fit.model, np.array([1, 0]), np.array([-1.0, 1.0]))
        aligned = align_labels(point.model, scrambled)
        before = fit_from_model(boot, scrambled).final_elbo
        after = fit_from_model(boot, aligned).final_elbo
        worst = max(worst, abs(after - before))
    ok = zero_se and min_eig >= -1e-10 and worst <= 1e-10 and lo <= coverage <= hi
    assert verdicts.record(7, ok, f"identical rows -> zero SEs: {zero_se}; min eigenvalue "
                                  f"{min_eig:.1e} (>= -1e-10); alignment ELBO change {worst:.1e} "
                                  f"(<= 1e-10); coverage {coverage:.3f} in [{lo}, {hi}]")


def test_c08_map_and_group_probs(verdicts):
    aris, worst_sum = [], 0.0
    for rep in range(10):
        ari, table = studies.ari_replicate(rep, BASE)
        aris.append(ari)
        worst_sum = max(worst_sum, float(np.max(np.abs(table.table.sum(axis=1) - 1.0))))
    for res, data in _fits_with_tables:
        t = group_probs_by_covariate(res, data, "x1")
        worst_sum = max(worst_sum, float(np.max(np.abs(t.table.sum(axis=1) - 1.0))))
    gate = GATES["ari_gate"]
    ok = min(aris) > gate and worst_sum <= 1e-10
    assert verdicts.record(8, ok, f"min ARI {min(aris):.3f} over 10 fits (> {gate}); "
                                  f"max |row sum - 1| {worst_sum:.1e} over "
                                  f"{10 + len(_fits_with_tables)} fits (<= 1e-10)")


TABLE1 = {
    "finland": ([0.91, 0.83, 0.79, 0.75, 0.40, 0.80, 0.20], 1446),
    "italy": ([0.75, 0.60, 0.60, 0.57, 0.33, 0.56, 0.17], 1465),
    "bulgaria": ([0.69, 0.50, 0.52, 0.45, 0.32, 0.36, 0.10], 2082),
}
TABLE1_ITEMS = ["Internet use", "Preference settings", "Advanced search", "PDFs",
                "Video calls", "Messages", "Online posts"]


def test_c09_survey_data(verdicts, tmp_path):
    root = os.environ.get("MLTA_ESS_DIR")
    if not root:
        verdicts.skip(9, "set MLTA_ESS_DIR to run the data-dependent check")
        pytest.skip("MLTA_ESS_DIR not set")
    root = Path(root)
    runner = CliRunner()
    problems = []
    for country, (shares, n_expected) in TABLE1.items():
        out = tmp_path / country
        res = runner.invoke(cli.main, ["ingest", "--raw", str(root / f"{country}.csv"),
                                       "--rules", str(root / "rules.json"), "--out", str(out)])
        if res.exit_code != 0:
            problems.append(f"{country}: ingest exit {res.exit_code}")
            continue
        rows = list(csv.DictReader(open(out / "summary.csv")))
        dens = {r["variable"]: float(r["value"]) for r in rows if r["section"] == "tie_density"}
        n = int(next(r["value"] for r in rows if r["variable"] == "N"))
        if n != n_expected:
            problems.append(f"{country}: N={n} != {n_expected}")
        for item, share in zip(TABLE1_ITEMS, shares):
            if item not in dens or abs(dens[item] - share) > 0.01:
                problems.append(f"{country}/{item}: {dens.get(item)} vs {share}")
    ok = not problems
    assert verdicts.record(9, ok, "tie shares within 0.01 and complete-case N exact"
                           if ok else "; ".join(problems))


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())
            if p.is_file() and p.name != "manifest.json"}


def _manifest(directory):
    doc = json.loads((directory / "manifest.json").read_text())
    doc.pop("wall_clock_seconds")
    doc.pop("started")
    return doc


def test_c10_determinism(verdicts, tmp_path):
    runner = CliRunner()
    raw, rules = write_survey(tmp_path, n=80, seed=3)
    sim = tmp_path / "sim"
    runner.invoke(cli.main, ["simulate", "--n", "200", "--seed", "5", "--out", str(sim)])
    fit_json = tmp_path / "fitref" / "fit.json"
    runner.invoke(cli.main, ["fit", "--data", str(sim), "--starts", "2", "--out",
                             str(fit_json.parent)])
    commands = {
        "ingest": ["--raw", str(raw), "--rules", str(rules)],
        "simulate": ["--n", "200", "--seed", "5"],
        "fit": ["--data", str(sim), "--groups", "2", "--trait-dim", "1", "--seed", "7",
                "--starts", "3"],
        "select": ["--data", str(sim), "--grid-g", "1..2", "--grid-d", "0..1", "--starts", "2"],
        "bootstrap": ["--data", str(sim), "--starts", "1", "--bootstrap-samples", "6",
                      "--seed", "2"],
        "predict": ["--data", str(sim), "--fit", str(fit_json)],
    }
    differing = []
    for name, args in commands.items():
        runs = []
        for k in ("a", "b"):
            out = tmp_path / f"{name}_{k}"
            res = runner.invoke(cli.main, [name] + args + ["--out", str(out)])
            if res.exit_code != 0:
                differing.append(f"{name} exit {res.exit_code}")
                break
            runs.append((_outputs(out), _manifest(out)))
        if len(runs) == 2 and runs[0] != runs[1]:
            differing.append(name)
    ok = not differing
    assert verdicts.record(10, ok, f"{len(commands)} subcommands rerun byte-identical"
                           if ok else "differences: " + ", ".join(differing))
