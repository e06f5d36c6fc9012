"""Parameter space and structural equations of the mixture of latent trait
analyzers with concomitant variables.

Group 1 is the reference group of the multinomial logit gating model, so
gating coefficients are stored only for groups ``2..G``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import log

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .errors import ConfigError

UNCONSTRAINED = "unconstrained"
CONSTRAINED = "constrained"
VARIANTS = (UNCONSTRAINED, CONSTRAINED)


@dataclass(frozen=True, order=True)
class ModelConfig:
    """Number of groups ``G``, trait dimension ``D`` and slope variant."""

    G: int
    D: int
    variant: str = UNCONSTRAINED

    def __post_init__(self):
        if int(self.G) != self.G or self.G < 1:
            raise ConfigError(f"G must be a positive integer, got {self.G!r}")
        if int(self.D) != self.D or self.D < 0:
            raise ConfigError(f"D must be a non-negative integer, got {self.D!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def constrained(self):
        return self.variant == CONSTRAINED

    @property
    def degenerate(self):
        """True when both variants describe the same model (G=1 or D=0)."""
        return self.G == 1 or self.D == 0

    def label(self):
        return f"G={self.G},D={self.D},{self.variant}"


def sigmoid(t):
    """Numerically stable logistic function."""
    return expit(t)


def connection_prob(b, w, u):
    """Probability of a tie, ``1 / (1 + exp(-(b + w.u)))``.

    ``w`` and ``u`` are D-vectors (D may be zero).
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    eta = float(b) + (float(w @ u) if w.size else 0.0)
    return float(expit(eta))


def gating_logits(X, beta):
    """Linear predictors ``(0, x.beta_2, ..., x.beta_G)`` for every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta = np.asarray(beta, dtype=float).reshape(-1, X.shape[1])
    return np.hstack([np.zeros((X.shape[0], 1)), X @ beta.T])


def log_gating_probs(X, beta):
    """Log gating probabilities, N x G, computed with max-subtraction."""
    eta = gating_logits(X, beta)
    return eta - logsumexp(eta, axis=1, keepdims=True)


def gating_probs(x, beta):
    """Prior group membership probabilities for covariate vector(s) ``x``.

    Parameters
    ----------
    x : array_like
        A (J+1)-vector whose first entry is the intercept 1, or an N x (J+1)
        matrix of such rows.
    beta : array_like
        (G-1) x (J+1) matrix; row ``g-2`` holds the coefficients of group g.

    Returns
    -------
    ndarray
        G-vector (or N x G matrix) on the simplex.
    """
    x = np.asarray(x, dtype=float)
    eta = np.exp(log_gating_probs(x, beta))
    return eta[0] if x.ndim == 1 else eta


def param_count(config, J, R):
    """Number of free parameters; ``J`` counts covariates excluding the intercept."""
    G, D = config.G, config.D
    slopes = 0
    if D > 0:
        slopes = R * D if config.constrained else G * R * D
    return (G - 1) * (J + 1) + G * R + slopes


def bic(loglik, p, N):
    return -2.0 * loglik + p * log(N)


@dataclass
class MLTAModel:
    """All free parameters plus the configuration they belong to.

    Attributes
    ----------
    beta : ndarray, shape (G-1, J+1)
    b : ndarray, shape (G, R)
        Attractiveness intercepts.
    w : ndarray, shape (G, R, D) or (R, D) when constrained
        Latent trait slopes.
    """

    config: ModelConfig
    beta: np.ndarray
    b: np.ndarray
    w: np.ndarray
    skill_names: list = field(default_factory=list)
    covariate_names: list = field(default_factory=list)

    def __post_init__(self):
        G, D = self.config.G, self.config.D
        beta = np.asarray(self.beta, dtype=float)
        if G == 1:
            P = len(self.covariate_names) or (beta.shape[-1] if beta.ndim == 2 else 1)
            self.beta = np.zeros((0, P))
        else:
            if beta.size == 0 or beta.size % (G - 1):
                raise ConfigError(f"beta has shape {beta.shape}, expected {G - 1} rows")
            self.beta = beta.reshape(G - 1, -1)
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        R = self.b.shape[1]
        wshape = (R, D) if self.config.constrained else (G, R, D)
        w = np.asarray(self.w, dtype=float)
        if w.size != int(np.prod(wshape)):
            raise ConfigError(f"w has shape {w.shape}, expected {wshape}")
        self.w = w.reshape(wshape)
        if self.b.shape != (G, R):
            raise ConfigError(f"b has shape {self.b.shape}, expected {(G, R)}")
        if G > 1 and self.covariate_names and self.beta.shape[1] != len(self.covariate_names):
            raise ConfigError("beta columns do not match covariate names")
        if not self.skill_names:
            self.skill_names = [f"item{k + 1}" for k in range(R)]
        if len(self.skill_names) != R:
            raise ConfigError("skill names do not match b columns")
        self.skill_names = list(self.skill_names)
        self.covariate_names = list(self.covariate_names)

    @property
    def G(self):
        return self.config.G

    @property
    def D(self):
        return self.config.D

    @property
    def R(self):
        return self.b.shape[1]

    @property
    def n_covariates(self):
        """Columns of the design matrix, intercept included."""
        if self.covariate_names:
            return len(self.covariate_names)
        return self.beta.shape[1]

    def w_full(self):
        """Slopes broadcast to G x R x D regardless of variant."""
        if self.config.constrained:
            return np.broadcast_to(self.w, (self.G,) + self.w.shape).copy()
        return self.w.copy()

    def n_params(self):
        return param_count(self.config, self.n_covariates - 1, self.R)

    def log_gating(self, X):
        if self.G == 1:
            return np.zeros((np.atleast_2d(X).shape[0], 1))
        return log_gating_probs(X, self.beta)

    def gating(self, X):
        return np.exp(self.log_gating(X))

    def copy(self):
        return MLTAModel(self.config, self.beta.copy(), self.b.copy(),
                         self.w.copy(), list(self.skill_names),
                         list(self.covariate_names))

    def with_slopes_negated(self):
        out = self.copy()
        out.w = -out.w
        return out

    def flat_params(self):
        """Parameters as one vector plus matching names (beta, b, w order)."""
        names, values = [], []
        for g in range(1, self.G):
            for j, cov in enumerate(self._cov_names()):
                names.append(f"beta[{g + 1},{cov}]")
                values.append(self.beta[g - 1, j])
        for g in range(self.G):
            for k, skill in enumerate(self.skill_names):
                names.append(f"b[{g + 1},{skill}]")
                values.append(self.b[g, k])
        if self.D:
            if self.config.constrained:
                for k, skill in enumerate(self.skill_names):
                    for d in range(self.D):
                        names.append(f"w[*,{skill},{d + 1}]")
                        values.append(self.w[k, d])
            else:
                for g in range(self.G):
                    for k, skill in enumerate(self.skill_names):
                        for d in range(self.D):
                            names.append(f"w[{g + 1},{skill},{d + 1}]")
                            values.append(self.w[g, k, d])
        return np.array(values, dtype=float), names

    def _cov_names(self):
        if self.covariate_names:
            return self.covariate_names
        return [f"x{j}" for j in range(self.beta.shape[1])]

    def to_dict(self):
        cov = self._cov_names()
        out = {
            "config": {"G": self.G, "D": self.D, "variant": self.config.variant},
            "skills": list(self.skill_names),
            "covariates": list(cov),
            "beta": {f"group{g + 1}": dict(zip(cov, map(float, self.beta[g - 1])))
                     for g in range(1, self.G)},
            "b": {f"group{g + 1}": dict(zip(self.skill_names, map(float, self.b[g])))
                  for g in range(self.G)},
        }
        if self.config.constrained:
            out["w"] = {"shared": {s: [float(v) for v in self.w[k]]
                                   for k, s in enumerate(self.skill_names)}}
        else:
            out["w"] = {f"group{g + 1}": {s: [float(v) for v in self.w[g, k]]
                                          for k, s in enumerate(self.skill_names)}
                        for g in range(self.G)}
        return out

    @classmethod
    def from_dict(cls, d):
        cfg = ModelConfig(int(d["config"]["G"]), int(d["config"]["D"]),
                          d["config"].get("variant", UNCONSTRAINED))
        skills = list(d["skills"])
        cov = list(d.get("covariates", []))
        G, D, R = cfg.G, cfg.D, len(skills)
        beta = np.array([[d["beta"][f"group{g + 1}"][c] for c in cov]
                         for g in range(1, G)], dtype=float).reshape(G - 1, len(cov))
        b = np.array([[d["b"][f"group{g + 1}"][s] for s in skills] for g in range(G)])
        if cfg.constrained:
            w = np.array([d["w"]["shared"][s] for s in skills], dtype=float).reshape(R, D)
        else:
            w = np.array([[d["w"][f"group{g + 1}"][s] for s in skills]
                          for g in range(G)], dtype=float).reshape(G, R, D)
        return cls(cfg, beta, b, w, skills, cov)


def zero_model(config, R, P, skill_names=None, covariate_names=None):
    """Model with all parameters zero; ``P`` counts design columns."""
    G, D = config.G, config.D
    wshape = (R, D) if config.constrained else (G, R, D)
    return MLTAModel(config, np.zeros((G - 1, P)), np.zeros((G, R)),
                     np.zeros(wshape), skill_names or [], covariate_names or [])


def bernoulli_logpmf(y, logit):
    """log P(y | logit) for binary y, elementwise and overflow-safe."""
    return y * log_expit(logit) + (1.0 - y) * log_expit(-logit)
