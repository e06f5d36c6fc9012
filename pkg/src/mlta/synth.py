"""Simulation from a known model and exact oracles for checking the
variational estimator.

The marginal likelihood is computed by a (row-adaptive) Gauss-Hermite
product rule (D <= 2), exactly when D = 0, or by antithetic Monte Carlo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import expit, log_expit, logsumexp

from .data import CovariateDesign, Dataset, IncidenceMatrix, intercept_design
from .errors import ConfigError
from .model import MLTAModel, bernoulli_logpmf


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Hermite rule with ``nodes`` points per trait dimension.

    With ``adaptive=True`` (default) the rule is recentred and rescaled at
    the mode of each row's integrand, which keeps it accurate for peaked
    posteriors (large slopes or many items).
    """

    nodes: int = 80
    adaptive: bool = True

    def __post_init__(self):
        if self.nodes < 5:
            raise ConfigError("quadrature needs at least 5 nodes per dimension")

    def grid(self, D):
        """Nodes (M x D) and log weights (M) for a standard D-variate normal."""
        if D > 2:
            raise ConfigError("quadrature oracle supports D <= 2 only")
        x, w = hermegauss(self.nodes)
        logw = np.log(w) - 0.5 * np.log(2.0 * np.pi)
        if D == 0:
            return np.zeros((1, 0)), np.zeros(1)
        pts = np.array(list(product(x, repeat=D)))
        lw = np.array([sum(t) for t in product(logw, repeat=D)])
        return pts, lw


def demo_model():
    """Well-separated two-group, one-trait model on seven skills with one
    binary covariate."""
    from .model import ModelConfig
    b = np.array([[-1.5, -1.0, -2.0, -1.2, -0.8, -1.8, -2.5],
                  [2.0, 1.5, 1.2, 1.8, 0.5, 1.5, -0.5]])
    w = np.array([[1.0, 0.8, 0.9, 0.7, 1.1, 0.8, 0.6],
                  [0.6, 0.7, 0.5, 0.8, 0.9, 0.6, 0.7]])[:, :, None]
    skills = ["Internet use", "Preference settings", "Advanced search", "PDFs",
              "Video calls", "Messages", "Online posts"]
    return MLTAModel(ModelConfig(2, 1), np.array([[0.3, -1.0]]), b, w, skills,
                     ["(Intercept)", "x1=1"])


def recovery_model():
    """Two well-separated groups on ten skills with one trait whose loadings
    alternate in sign, and one binary covariate in the gating.

    With loadings of this size the trait is clearly identified by the
    variational bound at N ~ 2000, which makes the model suitable for
    recovery and selection studies.
    """
    from .model import ModelConfig
    b = np.array([[-1.25, -0.62, -0.57, -1.14, -1.82, -1.97, -1.46, -0.76, -0.51, -0.94],
                  [2.0, 1.66, 0.94, 0.51, 0.76, 1.46, 1.97, 1.82, 1.14, 0.57]])
    w = np.array([[-1.05, 1.16, -1.11, 0.89, -0.92, 1.15, -0.8, 1.13, -1.12, 0.99],
                  [-0.92, 0.91, -0.9, 0.98, -1.0, 1.02, -1.2, 1.12, -1.05, 1.2]])[:, :, None]
    skills = [f"skill{k + 1}" for k in range(b.shape[1])]
    return MLTAModel(ModelConfig(2, 1), np.array([[0.3, -1.0]]), b, w, skills,
                     ["(Intercept)", "x1=1"])


def binary_covariates(N, n_columns, seed):
    """Intercept plus ``n_columns`` independent fair 0/1 dummies."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    return np.column_stack([np.ones(N)] + [rng.integers(0, 2, N) for _ in range(n_columns)])


@dataclass
class SimTruth:
    model: MLTAModel
    z_true: np.ndarray
    u_true: np.ndarray
    dataset: Dataset
    seed: int = 0

    def save(self, directory):
        from .io import write_dataset
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        write_dataset(self.dataset, out)
        truth = {
            "model": self.model.to_dict(),
            "z_true": [int(g) + 1 for g in self.z_true],
            "u_true": self.u_true.tolist(),
            "ids": list(self.dataset.ids),
        }
        (out / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
        (out / "seed.json").write_text(json.dumps({"seed": int(self.seed)}) + "\n")


def binary_design(names, X, ids=None):
    """CovariateDesign for independent binary dummies named ``<variable>=<level>``.

    Each dummy gets its own two-level variable whose reference level is
    ``"0"`` (or ``"ref"`` when the dummy level itself is ``"0"``).
    """
    X = np.asarray(X, dtype=float)
    ids = list(ids) if ids is not None else [str(i + 1) for i in range(X.shape[0])]
    variables = {}
    for name in names[1:]:
        var, _, level = name.partition("=")
        if not level:
            var, level = name, "1"
        ref = "ref" if level == "0" else "0"
        variables[var] = {"levels": [ref, level], "reference": ref, "columns": [name]}
    return CovariateDesign(ids, list(names), X, variables)


def simulate(model, X=None, seed=0, N=None):
    """Draw groups, traits and ties from ``model``.

    ``X`` is a CovariateDesign or an N x (J+1) array; when omitted an
    intercept-only design with ``N`` rows is used.
    """
    rng = np.random.default_rng(seed)
    if X is None:
        if N is None:
            raise ConfigError("simulate needs X or N")
        design = intercept_design([str(i + 1) for i in range(N)])
    elif isinstance(X, CovariateDesign):
        design = X
    else:
        X = np.asarray(X, dtype=float)
        if model.G > 1 and X.shape[1] != model.beta.shape[1]:
            raise ConfigError("design columns do not match the gating coefficients")
        ids = [str(i + 1) for i in range(X.shape[0])]
        names = model.covariate_names or (
            ["(Intercept)"] + [f"x{j}" for j in range(1, X.shape[1])])
        design = binary_design(list(names), X, ids)
    Xv = design.values
    if model.G > 1 and Xv.shape[1] != model.beta.shape[1]:
        raise ConfigError("design columns do not match the gating coefficients")
    N = Xv.shape[0]
    eta = model.gating(Xv)
    cum = np.cumsum(eta, axis=1)
    z = np.minimum((rng.random(N)[:, None] > cum).sum(axis=1), model.G - 1)
    u = rng.standard_normal((N, model.D))
    W = model.w_full()
    logits = model.b[z] + np.einsum("ikd,id->ik", W[z], u)
    Y = (rng.random((N, model.R)) < expit(logits)).astype(np.int8)
    incidence = IncidenceMatrix(list(design.ids), list(model.skill_names), Y)
    return SimTruth(model, z, u, Dataset(incidence, design), seed)


def _bernoulli_ll(Y, logits):
    """sum_k log p(y_ik | logit) for logits of shape (..., M, R); Y is N x R."""
    return np.einsum("ik,imk->im", Y, log_expit(logits)) + \
        np.einsum("ik,imk->im", 1.0 - Y, log_expit(-logits))


def _modes(Y, b, W, iters=100):
    """Mode and Cholesky factor of the inverse curvature of
    ``log p(y_i | u) + log phi(u)`` for every row (strictly concave in u)."""
    N, D = Y.shape[0], W.shape[1]
    u = np.zeros((N, D))
    for _ in range(iters):
        p = expit(b[None, :] + u @ W.T)                         # N x R
        grad = (Y - p) @ W - u
        hess = -np.einsum("ik,kd,ke->ide", p * (1 - p), W, W) - np.eye(D)
        step = np.linalg.solve(hess, -grad[:, :, None])[:, :, 0]
        step = np.clip(step, -2.0, 2.0)
        u = u + step
        if np.max(np.abs(step)) < 1e-12:
            break
    p = expit(b[None, :] + u @ W.T)
    prec = np.einsum("ik,kd,ke->ide", p * (1 - p), W, W) + np.eye(D)
    L = np.linalg.cholesky(np.linalg.inv(prec))
    return u, L


def _row_rules(Y, b, W, spec):
    """Per-row nodes (N x M x D) and log weights (N x M) such that
    ``E[f(u)] ~= sum_m exp(logw_im) f(u_im)`` under the standard normal."""
    pts, logw = spec.grid(W.shape[1])
    N, D = Y.shape[0], W.shape[1]
    if not spec.adaptive or D == 0:
        return np.broadcast_to(pts, (N,) + pts.shape), np.broadcast_to(logw, (N, logw.size))
    mode, L = _modes(Y, b, W)
    nodes = mode[:, None, :] + np.einsum("ide,me->imd", L, pts)
    logdet = np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    # phi(u) / phi(x) and the Jacobian of u = mode + L x
    corr = -0.5 * np.sum(nodes ** 2, axis=2) + 0.5 * np.sum(pts ** 2, axis=1)[None, :]
    return nodes, logw[None, :] + corr + logdet[:, None]


def _log_component_likelihood(Y, model, spec, chunk=256):
    """log of the integrated conditional likelihood, N x G."""
    Y = np.asarray(Y, dtype=float)
    W = model.w_full()
    out = np.empty((Y.shape[0], model.G))
    for start in range(0, Y.shape[0], chunk):
        rows = slice(start, start + chunk)
        Yc = Y[rows]
        for g in range(model.G):
            nodes, logw = _row_rules(Yc, model.b[g], W[g], spec)
            logits = model.b[g][None, None, :] + nodes @ W[g].T      # n x M x R
            out[rows, g] = logsumexp(_bernoulli_ll(Yc, logits) + logw, axis=1)
    return out


def gh_loglik(dataset, model, spec=QuadratureSpec()):
    """Marginal log-likelihood by Gauss-Hermite quadrature."""
    if model.D > 2:
        raise ConfigError("quadrature oracle supports D <= 2 only")
    L = _log_component_likelihood(dataset.Y, model, spec)
    return float(np.sum(logsumexp(model.log_gating(dataset.X) + L, axis=1)))


def lc_loglik(dataset, model):
    """Exact log-likelihood of the D = 0 latent class model."""
    if model.D != 0:
        raise ConfigError("lc_loglik requires D = 0")
    Y = np.asarray(dataset.Y, dtype=float)
    L = Y @ bernoulli_logpmf(1.0, model.b).T + (1.0 - Y) @ bernoulli_logpmf(0.0, model.b).T
    return float(np.sum(logsumexp(model.log_gating(dataset.X) + L, axis=1)))


def exact_responsibilities(dataset, model, spec=QuadratureSpec()):
    L = _log_component_likelihood(dataset.Y, model, spec)
    joint = model.log_gating(dataset.X) + L
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def marginal_tie_prob(model, X, spec=QuadratureSpec()):
    """P(Y_ik = 1) averaged over rows of X, by quadrature (R-vector)."""
    pts, logw = spec.grid(model.D)
    W = model.w_full()
    eta = model.gating(np.asarray(X, dtype=float)).mean(axis=0)
    wts = np.exp(logw)
    p = np.zeros(model.R)
    for g in range(model.G):
        p += eta[g] * (wts @ expit(model.b[g][None, :] + pts @ W[g].T))
    return p


def posterior_mean_tie_prob(dataset, model, spec=QuadratureSpec(), chunk=256):
    """E[pi_gk(u) | y_i, z_ig = 1] by quadrature, N x G x R."""
    Y = np.asarray(dataset.Y, dtype=float)
    W = model.w_full()
    out = np.empty((Y.shape[0], model.G, model.R))
    for start in range(0, Y.shape[0], chunk):
        rows = slice(start, start + chunk)
        Yc = Y[rows]
        for g in range(model.G):
            nodes, logw = _row_rules(Yc, model.b[g], W[g], spec)
            logits = model.b[g][None, None, :] + nodes @ W[g].T
            post = _bernoulli_ll(Yc, logits) + logw
            post = np.exp(post - logsumexp(post, axis=1, keepdims=True))
            out[rows, g, :] = np.einsum("im,imk->ik", post, expit(logits))
    return out


def mc_loglik(dataset, model, draws=100_000, seed=0, chunk=20_000):
    """Monte Carlo marginal log-likelihood with antithetic draws.

    Returns ``(estimate, standard_error)``; the standard error is a delta
    method approximation summed over nodes.
    """
    rng = np.random.default_rng(seed)
    Y = np.asarray(dataset.Y, dtype=float)
    N = Y.shape[0]
    W = model.w_full()
    half = max(draws // 2, 1)
    log_eta = model.log_gating(dataset.X)
    s1 = np.zeros(N)
    s2 = np.zeros(N)
    n = 0
    while n < half:
        m = min(chunk, half - n)
        e = rng.standard_normal((m, model.D))
        vals = []
        for pts in (e, -e):
            cols = []
            for g in range(model.G):
                logits = model.b[g][None, :] + pts @ W[g].T
                ll = Y @ bernoulli_logpmf(1.0, logits).T + (1.0 - Y) @ bernoulli_logpmf(0.0, logits).T
                cols.append(ll)
            vals.append(np.stack(cols, axis=1))        # N x G x m
        joint = logsumexp(log_eta[None, :, :, None] + np.stack(vals), axis=2)   # 2 x N x m
        pair = 0.5 * (np.exp(joint[0]) + np.exp(joint[1]))
        s1 += pair.sum(axis=1)
        s2 += (pair ** 2).sum(axis=1)
        n += m
    mean = s1 / n
    var = np.maximum(s2 / n - mean ** 2, 0.0) / n
    est = float(np.sum(np.log(mean)))
    se = float(np.sqrt(np.sum(var / mean ** 2)))
    return est, se
