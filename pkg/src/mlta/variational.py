"""Double EM with a variational approximation of the logistic-Gaussian
integral.

Each conditional Bernoulli likelihood is replaced by the Jaakkola-Jordan
lower bound, which is quadratic in the exponent of the latent trait.  The
bound is then conjugate to the standard Gaussian prior and the per-group
evidence ``B_ig`` is available in closed form.

All updates are exact coordinate-ascent steps on one functional of
``(z_hat, q(u), xi, theta)``, so the lower bound recorded after every outer
iteration never decreases.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit, logsumexp

from .errors import ConfigError, FitFailed, NumericalError
from .model import MLTAModel, bic, gating_probs, log_gating_probs

logger = logging.getLogger(__name__)

LAMBDA_EPS = 1e-6
PARAM_CAP = 30.0
MAX_CELLS = 2e8


@dataclass
class FitOptions:
    """Estimation controls.

    ``inner_sweeps=None`` runs the nested variational loop to convergence
    instead of a fixed number of sweeps per outer iteration.
    """

    tol: float = 1e-6
    max_outer: int = 1000
    inner_sweeps: int | None = 3
    starts: int = 10
    seed: int = 0
    newton_max_steps: int = 50
    newton_max_halvings: int = 30
    jobs: int = 1

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.starts < 1:
            raise ConfigError("starts must be at least 1")
        if self.max_outer < 1:
            raise ConfigError("max_outer must be at least 1")
        if self.inner_sweeps is not None and self.inner_sweeps < 1:
            raise ConfigError("inner_sweeps must be positive or None")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("tol", "max_outer", "inner_sweeps", "starts", "seed",
                 "newton_max_steps", "newton_max_halvings")}


@dataclass
class VariationalState:
    """Responsibilities, variational parameters and Gaussian trait posteriors.

    Shapes: ``z_hat`` N x G, ``xi`` N x G x R, ``mu`` N x G x D,
    ``Sigma`` N x G x D x D.
    """

    z_hat: np.ndarray
    xi: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray

    def permuted(self, perm, flip=None):
        """State for groups reordered so that new group g is old ``perm[g]``."""
        perm = np.asarray(perm)
        mu = self.mu[:, perm].copy()
        if flip is not None:
            mu *= np.asarray(flip, dtype=float)[perm][None, :, None]
        return VariationalState(self.z_hat[:, perm].copy(), self.xi[:, perm].copy(),
                                mu, self.Sigma[:, perm].copy())


@dataclass
class FitResult:
    model: MLTAModel
    state: VariationalState
    elbo_trace: list
    final_elbo: float
    bic: float
    converged: bool
    start_index: int
    n_iter: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_params(self):
        return self.model.n_params()

    def labels(self):
        return np.argmax(self.state.z_hat, axis=1)

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "final_elbo": float(self.final_elbo),
            "bic": float(self.bic),
            "n_params": int(self.n_params),
            "converged": bool(self.converged),
            "start_index": int(self.start_index),
            "n_iter": int(self.n_iter),
            "elbo_trace": [float(v) for v in self.elbo_trace],
            "diagnostics": self.diagnostics,
        }


@dataclass
class GatingFit:
    """Outcome of the weighted multinomial logit Newton solve."""

    beta: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    objective: float


# ---------------------------------------------------------------------------
# elementary pieces


def lambda_jj(xi):
    """Curvature of the logistic bound, ``(sigmoid(xi) - 1/2) / (2 xi)``.

    Even in ``xi``; the limit 1/8 is used for ``|xi| <= 1e-6``.
    """
    xi = np.abs(np.asarray(xi, dtype=float))
    small = xi <= LAMBDA_EPS
    safe = np.where(small, 1.0, xi)
    out = np.where(small, 0.125, np.tanh(safe / 2.0) / (4.0 * safe))
    return out if out.ndim else float(out)


def _moments(Y, b, W, xi):
    """Optimal Gaussian posteriors and log evidence for every (i, g).

    Y is N x R, b is G x R, W is G x R x D, xi is N x G x R.
    """
    lam = lambda_jj(xi)
    yc = Y[:, None, :] - 0.5
    # xi >= 0 here, so log(sigmoid(xi)) = -log1p(exp(-xi)) is stable
    base = (-np.log1p(np.exp(-xi)) - 0.5 * xi - lam * (b[None] ** 2 - xi ** 2)
            + yc * b[None]).sum(axis=2)
    N, G, _ = xi.shape
    D = W.shape[2]
    if D == 0:
        return np.zeros((N, G, 0)), np.zeros((N, G, 0, 0)), base
    lin = np.einsum("igk,gkd->igd", yc - 2.0 * lam * b[None], W)
    if D == 1:
        prec = 1.0 + 2.0 * np.einsum("igk,gk->ig", lam, W[:, :, 0] ** 2)
        var = 1.0 / prec
        mu = (var * lin[:, :, 0])[:, :, None]
        logB = base + 0.5 * np.log(var) + 0.5 * lin[:, :, 0] * mu[:, :, 0]
        Sigma = var[:, :, None, None]
    else:
        prec = np.eye(D) + 2.0 * np.einsum("igk,gkd,gke->igde", lam, W, W)
        try:
            chol = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("trait posterior precision is not positive definite") from exc
        Sigma = np.linalg.inv(prec)
        Sigma = 0.5 * (Sigma + np.swapaxes(Sigma, -1, -2))
        mu = np.einsum("igde,ige->igd", Sigma, lin)
        logdet = -2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
        logB = base + 0.5 * logdet + 0.5 * np.einsum("igd,igd->ig", lin, mu)
    if not np.all(np.isfinite(logB)):
        raise NumericalError("non-finite variational evidence")
    return mu, Sigma, logB


def update_trait_posterior(y_i, b_g, w_g, xi_ig):
    """Gaussian posterior of the trait for one node within one group.

    Parameters
    ----------
    y_i : R-vector of ties
    b_g : R-vector of intercepts
    w_g : R x D slopes
    xi_ig : R-vector of variational parameters

    Returns
    -------
    mu : D-vector
    Sigma : D x D matrix
    """
    y = np.asarray(y_i, dtype=float)[None, :]
    b = np.asarray(b_g, dtype=float)[None, :]
    w = np.asarray(w_g, dtype=float)
    w = w.reshape(1, b.shape[1], -1)
    if w.shape[2] < 1:
        raise ConfigError("update_trait_posterior requires D >= 1")
    xi = np.asarray(xi_ig, dtype=float)[None, None, :]
    mu, Sigma, _ = _moments(y, b, w, xi)
    return mu[0, 0], Sigma[0, 0]


def update_xi(mu, Sigma, b, w):
    """Variational parameters maximizing the expected bound.

    Accepts either one (node, group) pair -- ``mu`` D, ``Sigma`` D x D, ``b``
    R, ``w`` R x D -- or the batched shapes used by :func:`fit`
    (N x G x D, N x G x D x D, G x R, G x R x D).
    """
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    single = mu.ndim == 1
    if single:
        mu, Sigma = mu[None, None], Sigma[None, None]
        b = b[None]
        w = w.reshape(1, b.shape[1], -1)
    if w.shape[2] == 0:
        xi = np.broadcast_to(np.abs(b)[None], (mu.shape[0],) + b.shape).copy()
        return xi[0, 0] if single else xi
    mean = b[None] + np.einsum("gkd,igd->igk", w, mu)
    if w.shape[2] == 1:
        spread = Sigma[:, :, 0, 0][:, :, None] * (w[None, :, :, 0] ** 2)
    else:
        spread = np.einsum("gkd,igde,gke->igk", w, Sigma, w)
    rad = spread + mean ** 2
    if np.any(rad < -1e-12) or not np.all(np.isfinite(rad)):
        raise NumericalError("negative or non-finite radicand in xi update")
    xi = np.sqrt(np.clip(rad, 0.0, None))
    return xi[0, 0] if single else xi


def _item_quadratic(Y, z_hat, mu, Sigma, xi, constrained):
    """Normal equations ``A theta = h`` of the bound in the item parameters.

    Unconstrained: one (1 + D)-block per (g, k) with theta = (b_gk, w_gk).
    Constrained: one (G + D)-block per k with theta = (b_1k..b_Gk, w_k).
    """
    N, G, D = mu.shape
    c = z_hat[:, :, None] * 2.0 * lambda_jj(xi)
    r = z_hat[:, :, None] * (Y[:, None, :] - 0.5)
    if not constrained:
        Eu = np.concatenate([np.ones((N, G, 1)), mu], axis=2)
        Euu = np.einsum("iga,igc->igac", Eu, Eu)
        Euu[:, :, 1:, 1:] += Sigma
        A = np.einsum("igk,igac->gkac", c, Euu)
        h = np.einsum("igk,iga->gka", r, Eu)
        return A, h
    R = Y.shape[1]
    A = np.zeros((R, G + D, G + D))
    h = np.zeros((R, G + D))
    idx = np.arange(G)
    A[:, idx, idx] = c.sum(axis=0).T
    cross = np.einsum("igk,igd->kgd", c, mu)
    A[:, :G, G:] = cross
    A[:, G:, :G] = np.swapaxes(cross, 1, 2)
    second = Sigma + np.einsum("igd,ige->igde", mu, mu)
    A[:, G:, G:] = np.einsum("igk,igde->kde", c, second)
    h[:, :G] = r.sum(axis=0).T
    h[:, G:] = np.einsum("igk,igd->kd", r, mu)
    return A, h


def _solve_blocks(A, h):
    size = A.shape[-1]
    bad = ~np.all(np.isfinite(A), axis=(-1, -2))
    if np.any(bad):
        raise NumericalError("non-finite normal matrix")
    cond = np.linalg.cond(A)
    jitter = (~np.isfinite(cond)) | (cond > 1e12)
    if np.any(jitter):
        A = A + np.where(jitter[..., None, None], 1e-8 * np.eye(size), 0.0)
    try:
        theta = np.linalg.solve(A, h[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular normal matrix after ridge jitter") from exc
    if not np.all(np.isfinite(theta)):
        raise NumericalError("singular normal matrix after ridge jitter")
    return theta


def _quad_value(A, h, theta):
    return np.einsum("...a,...a->...", h, theta) - 0.5 * np.einsum(
        "...a,...ab,...b->...", theta, A, theta)


def update_item_params(Y, z_hat, mu, Sigma, xi, constrained=False,
                       old=None, cap=PARAM_CAP):
    """Maximize the variational bound in the intercepts and slopes.

    Parameters
    ----------
    old : tuple (b, w), optional
        Current values.  When a solution must be clipped to ``|.| <= cap``,
        each block keeps whichever of the clipped and the current values has
        the larger bound, so the update can never decrease it.

    Returns
    -------
    b : G x R
    w : G x R x D, or R x D when ``constrained``
    capped : bool
        Whether any coordinate hit the cap.
    """
    Y = np.asarray(Y, dtype=float)
    N, G, D = mu.shape
    R = Y.shape[1]
    shared = constrained
    # both variants coincide here; solve the per-(g, k) blocks
    constrained = constrained and D > 0 and G > 1
    A, h = _item_quadratic(Y, z_hat, mu, Sigma, xi, constrained)
    theta = _solve_blocks(A, h)
    capped = False
    clipped = np.clip(theta, -cap, cap)
    hit = np.any(clipped != theta, axis=-1)
    if np.any(hit):
        capped = True
        if old is not None:
            prev = _pack(old[0], old[1], constrained, G, R, D)
            better = _quad_value(A, h, clipped) >= _quad_value(A, h, prev)
            clipped = np.where((hit & ~better)[..., None], prev, clipped)
        theta = clipped
    if constrained:
        b = theta[:, :G].T.copy()
        w = theta[:, G:].copy()
    else:
        b = theta[..., 0].copy()
        w = theta[..., 1:].copy()
        if shared:
            w = w.reshape(R, D)
    return b, w, capped


def _pack(b, w, constrained, G, R, D):
    if constrained:
        return np.concatenate([np.asarray(b).T, np.asarray(w).reshape(R, D)], axis=1)
    return np.concatenate([np.asarray(b)[..., None], np.asarray(w).reshape(G, R, D)], axis=2)


# ---------------------------------------------------------------------------
# gating


def collinear_columns(X, names=None):
    """Columns of X that add nothing to the rank of the columns before them."""
    X = np.asarray(X, dtype=float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    out, rank = [], 0
    for j in range(X.shape[1]):
        r = np.linalg.matrix_rank(X[:, : j + 1])
        if r > rank:
            rank = r
        else:
            out.append(names[j])
    return out


def _gating_objective(X, z_hat, beta):
    return float(np.sum(z_hat * log_gating_probs(X, beta)))


def update_gating(X, z_hat, beta=None, max_steps=50, max_halvings=30,
                  gtol=1e-8, check_rank=True, names=None):
    """Weighted multinomial logit fit by Newton-Raphson with step halving.

    Maximizes ``sum_i sum_g z_hat[i, g] * log eta_g(x_i; beta)`` starting
    from ``beta`` (zeros by default).
    """
    X = np.asarray(X, dtype=float)
    z_hat = np.asarray(z_hat, dtype=float)
    N, P = X.shape
    G = z_hat.shape[1]
    if G < 2:
        raise ConfigError("update_gating needs G >= 2")
    if check_rank:
        bad = collinear_columns(X, names)
        if bad:
            raise ConfigError(f"design matrix is rank deficient; collinear columns: {bad}")
    beta = np.zeros((G - 1, P)) if beta is None else np.array(beta, dtype=float).reshape(G - 1, P)
    weight = z_hat.sum(axis=1)
    obj = _gating_objective(X, z_hat, beta)
    grad_norm = np.inf
    for it in range(max_steps):
        eta = gating_probs(X, beta)[:, 1:]
        grad = (z_hat[:, 1:] - weight[:, None] * eta).T @ X
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm < gtol:
            return GatingFit(beta, True, it, grad_norm, obj)
        K = G - 1
        info = np.empty((K, P, K, P))
        for g in range(K):
            for h in range(g, K):
                wgh = weight * eta[:, g] * ((g == h) - eta[:, h])
                block = X.T @ (wgh[:, None] * X)
                info[g, :, h, :] = block
                info[h, :, g, :] = block.T
        info = info.reshape(K * P, K * P)
        try:
            step = np.linalg.solve(info, grad.ravel())
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info + 1e-10 * np.eye(K * P), grad.ravel(), rcond=None)[0]
        step = step.reshape(K, P)
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = beta + t * step
            new = _gating_objective(X, z_hat, trial)
            if np.isfinite(new) and new >= obj:
                break
            t *= 0.5
        else:
            # no ascent direction left at working precision
            return GatingFit(beta, grad_norm < 1e-6, it, grad_norm, obj)
        beta, obj = trial, new
    eta = gating_probs(X, beta)[:, 1:]
    grad_norm = float(np.max(np.abs((z_hat[:, 1:] - weight[:, None] * eta).T @ X)))
    return GatingFit(beta, grad_norm < gtol, max_steps, grad_norm, obj)


# ---------------------------------------------------------------------------
# E-step and bound


def log_evidence(Y, model, xi):
    """Per-group log evidence ``log B_ig`` plus the trait posteriors."""
    Y = np.asarray(Y, dtype=float)
    mu, Sigma, logB = _moments(Y, model.b, model.w_full(), xi)
    return logB, mu, Sigma


def e_step_responsibilities(Y, X, model, state):
    """Posterior group probabilities given current theta and xi."""
    if model.G == 1:
        return np.ones((np.shape(Y)[0], 1))
    logB, _, _ = log_evidence(Y, model, state.xi)
    joint = model.log_gating(X) + logB
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def elbo(Y, X, model, state):
    """Variational lower bound ``sum_i log sum_g eta_ig B_ig`` of the
    marginal log-likelihood at the state's xi."""
    logB, _, _ = log_evidence(Y, model, state.xi)
    return float(np.sum(logsumexp(model.log_gating(X) + logB, axis=1)))


def variational_state(Y, X, model, xi=None, max_sweeps=1000, tol=1e-12):
    """Optimize xi and the trait posteriors for fixed theta.

    Returns the state at the tightest bound reachable from ``xi`` (by
    default ``|b|``), with responsibilities from that bound.
    """
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0]
    W = model.w_full()
    if xi is None:
        xi = np.broadcast_to(np.abs(model.b)[None], (N, model.G, model.R)).copy()
    for _ in range(max_sweeps):
        mu, Sigma, _ = _moments(Y, model.b, W, xi)
        new = update_xi(mu, Sigma, model.b, W)
        done = np.max(np.abs(new - xi)) < tol
        xi = new
        if done:
            break
    mu, Sigma, logB = _moments(Y, model.b, W, xi)
    joint = model.log_gating(X) + logB
    z = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
    return VariationalState(z, xi, mu, Sigma)


# ---------------------------------------------------------------------------
# fitting


def _init_start(Y, config, rng):
    N, R = Y.shape
    G, D = config.G, config.D
    z = rng.dirichlet(np.ones(G), size=N)
    gw = 1 if config.constrained else G
    w = rng.normal(0.0, 0.5, size=(gw, R, D))
    w = w[0] if config.constrained else w
    share = (z.T @ Y + 0.5) / (z.sum(axis=0)[:, None] + 1.0)
    b = np.clip(logit(share), -PARAM_CAP, PARAM_CAP)
    return z, b, w


def latent_class_intercepts(Y, z_hat, old_b, cap=PARAM_CAP):
    """Exact intercept update without a trait: per-group weighted log-odds.

    The bound is tight at D = 0, so this is the latent-class M-step.  Values
    are clipped to ``|b| <= cap`` (the clip is the box maximizer of a concave
    one-dimensional objective); groups with no weight keep ``old_b``.

    Returns
    -------
    b : G x R
    capped : bool
    """
    weight = z_hat.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (z_hat.T @ Y) / weight[:, None]
        b = np.clip(logit(np.clip(p, 0.0, 1.0)), -cap, cap)
    empty = ~(weight > 0)
    b[empty] = old_b[empty]
    capped = bool(np.any(np.abs(b[~empty]) >= cap))
    return b, capped


def _inner_loop(Y, z, model, xi, sweeps, flags):
    if model.D == 0:
        b, capped = latent_class_intercepts(Y, z, model.b)
        flags["cap_hit"] = flags["cap_hit"] or capped
        model.b = b
        return np.broadcast_to(np.abs(b)[None], xi.shape).copy()
    W = model.w_full()
    n = sweeps if sweeps is not None else 500
    for _ in range(n):
        mu, Sigma, _ = _moments(Y, model.b, W, xi)
        xi_new = update_xi(mu, Sigma, model.b, W)
        mu, Sigma, _ = _moments(Y, model.b, W, xi_new)
        b, w, capped = update_item_params(Y, z, mu, Sigma, xi_new, model.config.constrained,
                                          old=(model.b, model.w))
        flags["cap_hit"] = flags["cap_hit"] or capped
        change = max(np.max(np.abs(xi_new - xi)), np.max(np.abs(b - model.b)),
                     np.max(np.abs(w - model.w)) if w.size else 0.0)
        model.b, model.w, xi = b, w, xi_new
        W = model.w_full()
        if sweeps is None and change < 1e-10:
            break
    mu, Sigma, _ = _moments(Y, model.b, W, xi)
    xi = update_xi(mu, Sigma, model.b, W)
    return xi


def _run_start(Y, X, config, opts, start, cov_names, skill_names):
    seq = np.random.SeedSequence(opts.seed, spawn_key=(start,))
    rng = np.random.default_rng(seq)
    N, R = Y.shape
    P = X.shape[1]
    z, b, w = _init_start(Y, config, rng)
    model = MLTAModel(config, np.zeros((config.G - 1, P)), b, w, skill_names, cov_names)
    xi = np.broadcast_to(np.abs(b)[None], (N, config.G, R)).copy()
    flags = {"cap_hit": False, "gating_not_converged": 0, "non_monotone_steps": 0}

    def m_phase(z, xi):
        if config.G > 1:
            gf = update_gating(X, z, model.beta, opts.newton_max_steps,
                               opts.newton_max_halvings, check_rank=False)
            model.beta = gf.beta
            if not gf.converged:
                flags["gating_not_converged"] += 1
        return _inner_loop(Y, z, model, xi, opts.inner_sweeps, flags)

    def bound(xi):
        # lower bound and the matching E-step in one evidence evaluation
        logB, mu, Sigma = log_evidence(Y, model, xi)
        joint = model.log_gating(X) + logB
        norm = logsumexp(joint, axis=1, keepdims=True)
        return float(np.sum(norm)), np.exp(joint - norm), mu, Sigma

    with np.errstate(over="ignore", under="ignore"):
        xi = m_phase(z, xi)
        value, z, mu, Sigma = bound(xi)
        trace = [value]
        converged = False
        it = 0
        for it in range(1, opts.max_outer + 1):
            xi = m_phase(z, xi)
            value, z, mu, Sigma = bound(xi)
            if not np.isfinite(value):
                raise NumericalError("non-finite lower bound")
            prev = trace[-1]
            trace.append(value)
            if value < prev - 1e-8:
                flags["non_monotone_steps"] += 1
            # relative change, measured against at least one nat so that a
            # bound creeping towards zero (separated data) can still stop
            if abs(value - prev) < opts.tol * max(abs(prev), 1.0):
                converged = True
                break
    state = VariationalState(z, xi, mu, Sigma)
    return model, state, trace, converged, it, flags


def _start_job(args):
    Y, X, config, opts, start, cov_names, skill_names = args
    try:
        return start, _run_start(Y, X, config, opts, start, cov_names, skill_names), None
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return start, None, f"start {start}: {type(exc).__name__}: {exc}"


def parallel_map(fn, items, jobs=1):
    """Map in order; uses worker processes when ``jobs > 1``."""
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fit(data, config, opts=None):
    """Fit an MLTA model by multi-start variational EM.

    Parameters
    ----------
    data : Dataset
    config : ModelConfig
    opts : FitOptions, optional

    Returns
    -------
    FitResult
        The start with the highest final lower bound (lowest index on ties
        within 1e-10).

    Raises
    ------
    FitFailed
        If every start aborts numerically.
    """
    opts = opts or FitOptions()
    Y = np.asarray(data.Y, dtype=float)
    X = np.asarray(data.X, dtype=float)
    N, R = Y.shape
    if N * config.G * R * max(config.D, 1) ** 2 > MAX_CELLS:
        raise ConfigError(
            f"problem size N*G*R*D^2 = {N * config.G * R * max(config.D, 1) ** 2:.3g} "
            f"exceeds the resource guard {MAX_CELLS:.0e}")
    cov_names = list(data.design.columns)
    skill_names = list(data.incidence.skills)
    if config.G > 1:
        bad = collinear_columns(X, cov_names)
        if bad:
            raise ConfigError(f"design matrix is rank deficient; collinear columns: {bad}")
    jobs = [(Y, X, config, opts, s, cov_names, skill_names) for s in range(opts.starts)]
    outcomes = parallel_map(_start_job, jobs, opts.jobs)
    failures = [msg for _, res, msg in outcomes if res is None]
    done = [(s, res) for s, res, _ in outcomes if res is not None]
    if not done:
        raise FitFailed(f"all {opts.starts} starts failed for {config.label()}", failures)
    best_s, best = done[0]
    for s, res in done[1:]:
        if res[2][-1] > best[2][-1] + 1e-10:
            best_s, best = s, res
    model, state, trace, converged, n_iter, flags = best
    final = float(trace[-1])
    diagnostics = dict(flags)
    diagnostics["failed_starts"] = failures
    diagnostics["start_elbos"] = {int(s): float(res[2][-1]) for s, res in done}
    for msg in failures:
        logger.info("%s: %s", config.label(), msg)
    return FitResult(model, state, [float(v) for v in trace], final,
                     bic(final, model.n_params(), N), bool(converged), int(best_s),
                     int(n_iter), diagnostics)


def fit_from_model(data, model):
    """FitResult for fixed parameters: the variational state is optimized,
    theta is left untouched."""
    state = variational_state(data.Y, data.X, model)
    value = elbo(data.Y, data.X, model, state)
    return FitResult(model, state, [value], value, bic(value, model.n_params(), data.N),
                     True, -1)
