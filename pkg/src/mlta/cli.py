"""Command line interface: ``mlta <subcommand>``.

Every subcommand reads files, writes its outputs into ``--out`` and leaves a
``manifest.json`` next to them.  Exit codes: 0 success, 2 configuration or
usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import functools
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .bootstrap import BootstrapSpec, align_labels, bootstrap_se
from .data import (RawSurveyTable, covariate_distribution, ingest, load_rules,
                   tie_density)
from .errors import ConfigError, MLTAError
from .io import (digest, fmt, read_dataset, read_json, write_csv, write_dataset,
                 write_json)
from .model import CONSTRAINED, UNCONSTRAINED, VARIANTS, MLTAModel, ModelConfig
from .posthoc import (adjusted_rand_index, group_probs_by_covariate, map_assign,
                      predicted_skill_probs)
from .selection import SelectionGrid, grid_search
from .synth import binary_covariates, demo_model, recovery_model, simulate
from .variational import FitOptions, fit, fit_from_model

logger = logging.getLogger("mlta")


def parse_range(text):
    """``"1..4"`` -> (1, 2, 3, 4); ``"0,2"`` -> (0, 2)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise click.BadParameter(f"empty range {text!r}")
    return tuple(out)


class Run:
    """Collects inputs/outputs of one invocation and writes the manifest."""

    def __init__(self, name, out, options):
        self.name = name
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.options = {k: v for k, v in options.items() if k != "out"}
        self.inputs = {}
        self.outputs = []
        self.t0 = time.time()

    def input(self, path):
        path = Path(path)
        if path.is_dir():
            for f in sorted(path.iterdir()):
                if f.is_file() and f.suffix in (".csv", ".json") and f.name != "manifest.json":
                    self.inputs[str(f)] = digest(f)
        elif path.exists():
            self.inputs[str(path)] = digest(path)
        return path

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def finish(self):
        manifest = {
            "subcommand": self.name,
            "options": {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in self.options.items()},
            "inputs": self.inputs,
            "outputs": {n: digest(self.out / n) for n in self.outputs},
            "seed": self.options.get("seed"),
            "version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(self.t0)),
            "wall_clock_seconds": round(time.time() - self.t0, 3),
        }
        write_json(self.out / "manifest.json", manifest)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except MLTAError as exc:
            click.echo(f"error: {exc}", err=True)
            for line in getattr(exc, "diagnostics", []):
                click.echo(f"  {line}", err=True)
            sys.exit(exc.code)
    return wrapper


def fit_options(f):
    opts = [
        click.option("--starts", default=10, show_default=True, help="Random starts per fit."),
        click.option("--seed", default=0, show_default=True, help="Master RNG seed."),
        click.option("--tol", default=1e-6, show_default=True,
                     help="Relative lower-bound change for convergence."),
        click.option("--max-iter", default=1000, show_default=True, help="Outer iteration cap."),
        click.option("--inner-sweeps", default=3, show_default=True,
                     help="Variational sweeps per outer iteration (0 = until convergence)."),
        click.option("--jobs", default=1, show_default=True,
                     help="Worker processes; results do not depend on it."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def make_fit_options(starts, seed, tol, max_iter, inner_sweeps, jobs):
    return FitOptions(tol=tol, max_outer=max_iter,
                      inner_sweeps=None if inner_sweeps == 0 else inner_sweeps,
                      starts=starts, seed=seed, jobs=jobs)


def model_config(groups, trait_dim, constrained):
    return ModelConfig(groups, trait_dim, CONSTRAINED if constrained else UNCONSTRAINED)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Mixture of latent trait analyzers for binary bipartite networks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("ingest")
@click.option("--raw", "raw_path", required=True, type=click.Path(dir_okay=False))
@click.option("--rules", "rules_path", required=True, type=click.Path(dir_okay=False))
@click.option("--missing", default=None, help="Missing marker (overrides the rules file).")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def ingest_cmd(raw_path, rules_path, missing, out):
    """Dichotomize a raw survey CSV into incidence and design matrices."""
    run = Run("ingest", out, dict(raw=raw_path, rules=rules_path, missing=missing))
    if not Path(rules_path).exists():
        raise ConfigError(f"rules file not found: {rules_path}")
    rules, covs, marker = load_rules(run.input(rules_path))
    if missing is not None:
        marker = missing
    if not Path(raw_path).exists():
        raise ConfigError(f"raw table not found: {raw_path}")
    raw = RawSurveyTable.read_csv(run.input(raw_path), marker)
    data = ingest(raw, rules, covs)
    write_dataset(data, run.out)
    run.outputs += ["incidence.csv", "design.csv", "design_meta.json"]
    rows = [("tie_density", skill, "1", fmt(p))
            for skill, p in zip(data.incidence.skills, tie_density(data.incidence))]
    rows += [("covariate", var, cat, fmt(p)) for var, cat, p in covariate_distribution(data.design)]
    rows += [("count", "N", "", str(data.N)), ("count", "R", "", str(data.R)),
             ("count", "dropped", "", str(data.dropped))]
    write_csv(run.path("summary.csv"), ["section", "variable", "category", "value"], rows)
    run.finish()
    click.echo(f"N={data.N} R={data.R} dropped={data.dropped}")
    for skill, p in zip(data.incidence.skills, tie_density(data.incidence)):
        click.echo(f"  {skill}: {p:.2f}")


def _recovery_report(res, data, truth_path):
    truth = read_json(truth_path)
    true_model = MLTAModel.from_dict(truth["model"])
    report = {"truth": str(truth_path)}
    if true_model.config == res.model.config:
        aligned = align_labels(true_model, res.model)
        report["mae_b"] = float(np.mean(np.abs(aligned.b - true_model.b)))
        if aligned.D:
            report["mae_w"] = float(np.mean(np.abs(aligned.w - true_model.w)))
        if aligned.G > 1:
            report["mae_beta"] = float(np.mean(np.abs(aligned.beta - true_model.beta)))
    else:
        report["note"] = "fitted configuration differs from the generating one"
    z_true = truth.get("z_true")
    if z_true is not None and len(z_true) == data.N:
        report["adjusted_rand_index"] = adjusted_rand_index(z_true, res.labels())
    return report


def _write_assignments(path, table):
    write_csv(path, table.header(), table.rows())


@main.command("fit")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--groups", "-G", default=2, show_default=True)
@click.option("--trait-dim", "-D", default=1, show_default=True)
@click.option("--constrained", is_flag=True, help="Share slopes across groups.")
@fit_options
@click.option("--truth", type=click.Path(dir_okay=False, exists=True),
              help="truth.json from 'simulate'; adds a recovery report.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def fit_cmd(data_dir, groups, trait_dim, constrained, starts, seed, tol, max_iter,
            inner_sweeps, jobs, truth, out):
    """Fit one (G, D, variant) model."""
    run = Run("fit", out, dict(data=data_dir, groups=groups, trait_dim=trait_dim,
                               constrained=constrained, starts=starts, seed=seed, tol=tol,
                               max_iter=max_iter, inner_sweeps=inner_sweeps, truth=truth))
    data = read_dataset(run.input(data_dir))
    cfg = model_config(groups, trait_dim, constrained)
    res = fit(data, cfg, make_fit_options(starts, seed, tol, max_iter, inner_sweeps, jobs))
    write_json(run.path("fit.json"), res.to_dict())
    write_json(run.path("model.json"), res.model.to_dict())
    _write_assignments(run.path("assignments.csv"), map_assign(res.state.z_hat, data.ids))
    if truth:
        run.input(truth)
        write_json(run.path("recovery.json"), _recovery_report(res, data, truth))
    run.finish()
    click.echo(f"{cfg.label()}: elbo={res.final_elbo:.4f} bic={res.bic:.4f} "
               f"converged={res.converged} start={res.start_index}")


@main.command("select")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--grid-g", default="1..4", show_default=True)
@click.option("--grid-d", default="0..3", show_default=True)
@click.option("--variants", type=click.Choice(["both"] + list(VARIANTS)), default="both",
              show_default=True)
@fit_options
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def select_cmd(data_dir, grid_g, grid_d, variants, starts, seed, tol, max_iter,
               inner_sweeps, jobs, out):
    """BIC grid search over G, D and variant."""
    run = Run("select", out, dict(data=data_dir, grid_g=grid_g, grid_d=grid_d,
                                  variants=variants, starts=starts, seed=seed, tol=tol,
                                  max_iter=max_iter, inner_sweeps=inner_sweeps))
    data = read_dataset(run.input(data_dir))
    grid = SelectionGrid(parse_range(grid_g), parse_range(grid_d),
                         VARIANTS if variants == "both" else (variants,))
    table = grid_search(data, grid, make_fit_options(starts, seed, tol, max_iter,
                                                     inner_sweeps, jobs))
    for variant in grid.variants:
        Ds, Gs, mat = table.bic_matrix(variant)
        rows = [[f"D={d}"] + ["failed" if np.isnan(v) else f"{v:.2f}" for v in mat[r]]
                for r, d in enumerate(Ds)]
        write_csv(run.path(f"bic_{variant}.csv"), [""] + [f"G={g}" for g in Gs], rows)
    write_json(run.path("selection.json"), table.to_dict())
    run.finish()
    best = table.cells[table.best]
    click.echo(f"best: {best.config.label()} BIC={best.bic:.2f}")


@main.command("bootstrap")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--groups", "-G", default=2, show_default=True)
@click.option("--trait-dim", "-D", default=1, show_default=True)
@click.option("--constrained", is_flag=True)
@fit_options
@click.option("--bootstrap-samples", default=200, show_default=True)
@click.option("--level", default=0.95, show_default=True)
@click.option("--replicates", is_flag=True, help="Include the aligned replicate matrix in JSON.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def bootstrap_cmd(data_dir, groups, trait_dim, constrained, starts, seed, tol, max_iter,
                  inner_sweeps, jobs, bootstrap_samples, level, replicates, out):
    """Bootstrap standard errors and percentile intervals."""
    run = Run("bootstrap", out, dict(data=data_dir, groups=groups, trait_dim=trait_dim,
                                     constrained=constrained, starts=starts, seed=seed,
                                     tol=tol, max_iter=max_iter, inner_sweeps=inner_sweeps,
                                     bootstrap_samples=bootstrap_samples, level=level))
    data = read_dataset(run.input(data_dir))
    cfg = model_config(groups, trait_dim, constrained)
    opts = make_fit_options(starts, seed, tol, max_iter, inner_sweeps, jobs)
    result = bootstrap_se(data, cfg, opts, BootstrapSpec(bootstrap_samples, seed, level))
    write_csv(run.path("bootstrap.csv"), ["name", "estimate", "se", "lower", "upper"],
              [[n, fmt(e), fmt(s), fmt(lo), fmt(hi)] for n, e, s, lo, hi in result.rows()])
    write_json(run.path("bootstrap.json"), result.to_dict(with_replicates=replicates))
    run.finish()
    click.echo(f"{len(result.names)} parameters, {result.replicates.shape[0]} replicates "
               f"used, {result.failed} failed")


@main.command("predict")
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--fit", "fit_path", required=True, type=click.Path(dir_okay=False, exists=True),
              help="fit.json or model.json")
@click.option("--variable", multiple=True, help="Covariate(s) for membership tables "
              "(default: all in the design metadata).")
@click.option("--integrated", is_flag=True,
              help="Average skill probabilities over the trait posterior by quadrature.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def predict_cmd(data_dir, fit_path, variable, integrated, out):
    """MAP groups, predicted skill probabilities and membership tables."""
    run = Run("predict", out, dict(data=data_dir, fit=fit_path, variable=list(variable),
                                   integrated=integrated))
    data = read_dataset(run.input(data_dir))
    doc = read_json(run.input(fit_path))
    model = MLTAModel.from_dict(doc.get("model", doc))
    if list(model.skill_names) != list(data.incidence.skills):
        raise ConfigError("model skills do not match the dataset columns")
    res = fit_from_model(data, model)
    state = res.state
    assignments = map_assign(state.z_hat, data.ids)
    _write_assignments(run.path("assignments.csv"), assignments)
    summary = predicted_skill_probs(res, data, integrated=integrated)
    write_csv(run.path("skill_probs_long.csv"), ["group", "skill", "id", "prob"],
              summary.long_rows())
    means = summary.means()
    write_csv(run.path("skill_probs_means.csv"), ["group"] + list(summary.skills),
              [[g + 1] + ["" if np.isnan(v) else fmt(v) for v in means[g]]
               for g in range(model.G)])
    for var in (variable or list(data.design.variables)):
        table = group_probs_by_covariate(res, data, var)
        rows = [[f"G={g + 1}"] + ["NA" if np.isnan(table.table[c, g]) else fmt(table.table[c, g])
                                  for c in range(len(table.categories))]
                for g in range(model.G)]
        safe = "".join(ch if ch.isalnum() else "_" for ch in var)
        write_csv(run.path(f"group_probs_{safe}.csv"), ["group"] + table.categories, rows)
    run.finish()
    counts = np.bincount(assignments.labels, minlength=model.G)
    click.echo("group sizes: " + ", ".join(f"G{g + 1}={c}" for g, c in enumerate(counts)))


@main.command("simulate")
@click.option("--model", "model_path", type=click.Path(dir_okay=False, exists=True),
              help="Model JSON; overrides --preset.")
@click.option("--preset", type=click.Choice(["recovery", "demo"]), default="recovery",
              show_default=True, help="Built-in two-group, one-trait model.")
@click.option("--n", "n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@handle_errors
def simulate_cmd(model_path, preset, n, seed, out):
    """Draw a synthetic dataset (plus truth.json) from a known model."""
    run = Run("simulate", out, dict(model=model_path, preset=preset, n=n, seed=seed))
    if model_path:
        model = MLTAModel.from_dict(read_json(run.input(model_path)))
    else:
        model = recovery_model() if preset == "recovery" else demo_model()
    X = binary_covariates(n, model.n_covariates - 1, seed)
    truth = simulate(model, X, seed)
    truth.save(run.out)
    run.outputs += ["incidence.csv", "design.csv", "design_meta.json", "truth.json", "seed.json"]
    run.finish()
    click.echo(f"simulated N={n} from {model.config.label()}")


if __name__ == "__main__":
    main()
