"""Interpretive outputs of a fitted model: MAP assignments, predicted skill
probabilities by group and membership probabilities by covariate category.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError


@dataclass
class AssignmentTable:
    ids: list
    labels: np.ndarray     # 0-based group index
    z_hat: np.ndarray

    def rows(self):
        for i, g, z in zip(self.ids, self.labels, self.z_hat):
            yield [i, int(g) + 1] + [repr(float(v)) for v in z]

    def header(self):
        return ["id", "group"] + [f"z_{g + 1}" for g in range(self.z_hat.shape[1])]


@dataclass
class SkillProbSummary:
    """Per-individual predicted tie probabilities grouped by (group, skill)."""

    skills: list
    ids: list
    labels: np.ndarray
    probs: np.ndarray      # N x R, evaluated for each individual's own group
    G: int

    def values(self, g, k):
        return self.probs[self.labels == g, k]

    def means(self):
        """G x R matrix of group means (NaN for empty groups)."""
        out = np.full((self.G, len(self.skills)), np.nan)
        for g in range(self.G):
            mask = self.labels == g
            if mask.any():
                out[g] = self.probs[mask].mean(axis=0)
        return out

    def long_rows(self):
        for g in range(self.G):
            for k, skill in enumerate(self.skills):
                for i in np.flatnonzero(self.labels == g):
                    yield [g + 1, skill, self.ids[i], repr(float(self.probs[i, k]))]


@dataclass
class GroupProbTable:
    variable: str
    categories: list
    table: np.ndarray      # categories x G, NaN rows for empty categories
    counts: np.ndarray


def map_assign(z_hat, ids=None):
    """Assign each row to its most probable group (lowest index on ties)."""
    z_hat = np.asarray(z_hat, dtype=float)
    ids = list(ids) if ids is not None else [str(i + 1) for i in range(z_hat.shape[0])]
    return AssignmentTable(ids, np.argmax(z_hat, axis=1), z_hat)


def predicted_skill_probs(fit, data, integrated=False):
    """Predicted tie probabilities from the fitted response equation.

    By default the trait is plugged in at each individual's variational
    posterior mean for their MAP group.  With ``integrated=True`` the
    probability is averaged over the exact trait posterior by quadrature
    (D <= 2).
    """
    model = fit.model
    labels = map_assign(fit.state.z_hat).labels
    idx = np.arange(data.N)
    if integrated:
        from .synth import posterior_mean_tie_prob
        probs = posterior_mean_tie_prob(data, model)[idx, labels]
    else:
        W = model.w_full()
        logits = model.b[labels]
        if model.D:
            mu = fit.state.mu[idx, labels]           # N x D
            logits = logits + np.einsum("ikd,id->ik", W[labels], mu)
        probs = expit(logits)
    return SkillProbSummary(list(model.skill_names), list(data.ids), labels, probs, model.G)


def group_probs_by_covariate(fit, data, variable):
    """Average gating probabilities over the individuals in each category."""
    design = data.design
    if variable not in design.variables:
        raise DataError(f"covariate {variable!r} not found in the design metadata")
    eta = fit.model.gating(design.values)
    levels = list(design.variables[variable]["levels"])
    table = np.full((len(levels), fit.model.G), np.nan)
    counts = np.zeros(len(levels), dtype=int)
    for c, level in enumerate(levels):
        mask = design.category_mask(variable, level)
        counts[c] = int(mask.sum())
        if counts[c]:
            table[c] = eta[mask].mean(axis=0)
    return GroupProbTable(variable, levels, table, counts)


def adjusted_rand_index(a, b):
    """Adjusted Rand index between two labelings."""
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    comb = lambda x: x * (x - 1) / 2.0
    sum_ij = comb(table).sum()
    sum_a = comb(table.sum(axis=1)).sum()
    sum_b = comb(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb(a.size)
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))
