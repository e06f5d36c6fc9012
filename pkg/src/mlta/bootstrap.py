"""Non-parametric bootstrap of the full estimation pipeline.

Replicate estimates are aligned to the point estimate before averaging to
undo label switching (group permutations and, for D = 1, slope signs).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from itertools import permutations

import numpy as np

from .errors import ConfigError, FitFailed, NumericalError
from .model import MLTAModel
from .variational import FitOptions, fit, parallel_map

logger = logging.getLogger(__name__)

MAX_FAILED_SHARE = 0.20


@dataclass
class BootstrapSpec:
    S: int = 200
    seed: int = 0
    level: float = 0.95

    def __post_init__(self):
        if self.S < 2:
            raise ConfigError("bootstrap needs S >= 2")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("confidence level must lie in (0, 1)")


@dataclass
class BootstrapResult:
    names: list
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    replicates: np.ndarray
    covariance: np.ndarray
    failed: int
    level: float

    def rows(self):
        return list(zip(self.names, self.estimate, self.se, self.lower, self.upper))

    def to_dict(self, with_replicates=False):
        out = {
            "level": self.level,
            "failed": int(self.failed),
            "S_used": int(self.replicates.shape[0]),
            "parameters": [
                {"name": n, "estimate": float(e), "se": float(s),
                 "lower": float(lo), "upper": float(hi)}
                for n, e, s, lo, hi in self.rows()],
        }
        if with_replicates:
            out["replicates"] = self.replicates.tolist()
        return out


def replicate_seed(seed, s):
    ss = np.random.SeedSequence(seed, spawn_key=(2, s))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def resample(data, seed):
    """Draw N rows with replacement; incidence and covariates move together."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, data.N, size=data.N)
    return data.take(rows)


def _match_permutation(ref_b, cand_b):
    G = ref_b.shape[0]
    best, best_cost = None, np.inf
    for perm in permutations(range(G)):
        cost = float(np.sum((ref_b - cand_b[list(perm)]) ** 2))
        if cost < best_cost - 1e-15:
            best, best_cost = perm, cost
    return np.array(best)


def label_alignment(reference, candidate):
    """Permutation and slope signs that align ``candidate`` to ``reference``.

    Returns ``(perm, flip)``: new group g is old group ``perm[g]``; ``flip``
    holds a +-1 sign per old group (all ones unless D = 1).
    """
    if reference.config != candidate.config:
        raise ConfigError(
            f"cannot align {candidate.config.label()} to {reference.config.label()}")
    perm = _match_permutation(reference.b, candidate.b)
    flip = np.ones(candidate.G)
    if candidate.D == 1:
        if candidate.config.constrained:
            if float(np.sum(reference.w * candidate.w)) < 0:
                flip[:] = -1.0
        else:
            for g in range(candidate.G):
                if float(np.sum(reference.w[g] * candidate.w[perm[g]])) < 0:
                    flip[perm[g]] = -1.0
    return perm, flip


def apply_alignment(model, perm, flip):
    perm = np.asarray(perm)
    G = model.G
    b = model.b[perm].copy()
    if model.config.constrained:
        w = model.w * flip[0]
    else:
        w = model.w[perm] * np.asarray(flip)[perm][:, None, None]
    # log-odds against old group 1, then re-based on the new reference group
    full = np.vstack([np.zeros((1, model.beta.shape[1])), model.beta])[perm]
    beta = (full - full[0])[1:] if G > 1 else model.beta.copy()
    return MLTAModel(model.config, beta, b, w, list(model.skill_names),
                     list(model.covariate_names))


def align_labels(reference, candidate):
    """Candidate model with groups permuted (and D = 1 slope signs fixed) to
    best match ``reference``.

    The permutation minimizes the squared distance between intercept
    matrices over all G! orderings.
    """
    perm, flip = label_alignment(reference, candidate)
    return apply_alignment(candidate, perm, flip)


def bootstrap_covariance(replicates):
    """(1/S) sum (theta_s - mean)(theta_s - mean)^T."""
    reps = np.asarray(replicates, dtype=float)
    centered = reps - reps.mean(axis=0)
    return centered.T @ centered / reps.shape[0]


def percentile_interval(replicates, level):
    """Percentile interval whose endpoints are order statistics of the replicates."""
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(replicates, alpha, axis=0, method="inverted_cdf")
    hi = np.quantile(replicates, 1.0 - alpha, axis=0, method="inverted_cdf")
    return lo, hi


def summarize(point, replicates, names, level, failed=0):
    cov = bootstrap_covariance(replicates)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    lo, hi = percentile_interval(replicates, level)
    return BootstrapResult(list(names), np.asarray(point, dtype=float), se, lo, hi,
                           np.asarray(replicates, dtype=float), cov, int(failed), level)


def _replicate_job(args):
    data, config, opts, reference, rseed = args
    boot = resample(data, rseed)
    try:
        # same start seeds as the point fit; only the resampling varies
        res = fit(boot, config, replace(opts, jobs=1))
    except (FitFailed, NumericalError) as exc:
        return None, str(exc)
    if not res.converged:
        return None, "replicate did not converge"
    aligned = align_labels(reference, res.model)
    return aligned.flat_params()[0], None


def bootstrap_se(data, config, opts=None, spec=None, point=None):
    """Bootstrap standard errors and percentile intervals.

    Parameters
    ----------
    point : FitResult, optional
        Point estimate on ``data``; fitted here when omitted.  Replicates
        are aligned to its model.
    """
    opts = opts or FitOptions()
    spec = spec or BootstrapSpec()
    if point is None:
        point = fit(data, config, opts)
    reference = point.model
    jobs = [(data, config, opts, reference, replicate_seed(spec.seed, s))
            for s in range(spec.S)]
    outcomes = parallel_map(_replicate_job, jobs, opts.jobs)
    reps = [theta for theta, _ in outcomes if theta is not None]
    failed = spec.S - len(reps)
    if failed > MAX_FAILED_SHARE * spec.S:
        raise NumericalError(
            f"{failed} of {spec.S} bootstrap replicates failed; model/data pairing is unstable")
    if len(reps) < 2:
        raise NumericalError("fewer than two usable bootstrap replicates")
    est, names = reference.flat_params()
    logger.info("bootstrap: %d replicates used, %d failed", len(reps), failed)
    return summarize(est, np.vstack(reps), names, spec.level, failed)
