"""Survey ingestion: ordinal items to a binary incidence matrix, categorical
covariates to a dummy-coded design, and listwise deletion of incomplete rows.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, DataWarning

INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class DichotomizationRule:
    """Tie = 1 iff the response level is at or above ``threshold``.

    When ``alters`` is given the item is read from those columns and the
    thresholded values are OR-ed together.
    """

    item: str
    levels: tuple
    threshold: str
    alters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "alters", tuple(self.alters or ()))
        if len(self.levels) < 2:
            raise ConfigError(f"item {self.item!r}: need at least two levels")
        if len(set(self.levels)) != len(self.levels):
            raise ConfigError(f"item {self.item!r}: duplicate levels")
        if self.threshold not in self.levels:
            raise ConfigError(
                f"item {self.item!r}: threshold {self.threshold!r} is not a level")

    @property
    def columns(self):
        return self.alters or (self.item,)

    def rank(self, label):
        return self.levels.index(label)


@dataclass(frozen=True)
class CovariateSpec:
    name: str
    levels: tuple
    reference: str

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.reference not in self.levels:
            raise ConfigError(
                f"covariate {self.name!r}: reference {self.reference!r} is not a level")

    @property
    def dummies(self):
        return tuple(lv for lv in self.levels if lv != self.reference)


@dataclass
class RawSurveyTable:
    """Respondent records as strings, keyed by a unique ``id`` column."""

    frame: pd.DataFrame
    missing: str = ""

    def __post_init__(self):
        if "id" not in self.frame.columns:
            raise DataError("raw table needs an 'id' column")
        ids = self.frame["id"]
        if ids.duplicated().any():
            dup = ids[ids.duplicated()].iloc[0]
            raise DataError(f"duplicate respondent id {dup!r}")

    @property
    def ids(self):
        return list(self.frame["id"])

    def column(self, name):
        if name not in self.frame.columns:
            raise DataError(f"column {name!r} not found in raw table")
        return self.frame[name]

    @classmethod
    def read_csv(cls, path, missing=""):
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        if frame.columns[0] != "id":
            raise DataError(f"{path}: first column must be 'id'")
        return cls(frame, missing)


@dataclass
class IncidenceMatrix:
    """N x R binary sender-by-skill tie matrix.

    ``row_missing`` flags rows that had a missing response; their values are
    zero placeholders and must be removed by :func:`complete_cases`.
    """

    ids: list
    skills: list
    values: np.ndarray
    row_missing: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        N = len(self.ids)
        if self.values.shape != (N, len(self.skills)):
            raise DataError(
                f"incidence values have shape {self.values.shape}, "
                f"expected {(N, len(self.skills))}")
        if self.row_missing is None:
            self.row_missing = np.zeros(N, dtype=bool)
        if not np.isin(self.values, (0, 1)).all():
            raise DataError("incidence entries must be 0 or 1")

    @property
    def N(self):
        return len(self.ids)

    @property
    def R(self):
        return len(self.skills)

    def take(self, rows):
        rows = np.asarray(rows)
        return IncidenceMatrix([self.ids[r] for r in rows], list(self.skills),
                               self.values[rows], self.row_missing[rows])


@dataclass
class CovariateDesign:
    """N x (J+1) design matrix; column 0 is the intercept.

    ``variables`` maps each categorical variable to its levels, reference
    level and the names of its dummy columns.
    """

    ids: list
    columns: list
    values: np.ndarray
    variables: dict = field(default_factory=dict)
    row_missing: np.ndarray = None
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise DataError("design values do not match ids/columns")
        if self.row_missing is None:
            self.row_missing = np.zeros(len(self.ids), dtype=bool)
        if not self.columns or self.columns[0] != INTERCEPT:
            raise DataError(f"first design column must be {INTERCEPT!r}")

    @property
    def N(self):
        return len(self.ids)

    @property
    def J(self):
        return len(self.columns) - 1

    def take(self, rows):
        rows = np.asarray(rows)
        return CovariateDesign([self.ids[r] for r in rows], list(self.columns),
                               self.values[rows], self.variables,
                               self.row_missing[rows], list(self.diagnostics))

    def category_mask(self, variable, level):
        """Boolean mask of the rows observed in ``level`` of ``variable``."""
        if variable not in self.variables:
            raise DataError(f"unknown covariate {variable!r}")
        meta = self.variables[variable]
        cols = [self.columns.index(c) for c in meta["columns"]]
        block = self.values[:, cols]
        if level == meta["reference"]:
            return block.sum(axis=1) == 0
        return self.values[:, self.columns.index(f"{variable}={level}")] == 1


def intercept_design(ids):
    ids = list(ids)
    return CovariateDesign(ids, [INTERCEPT], np.ones((len(ids), 1)))


@dataclass
class Dataset:
    incidence: IncidenceMatrix
    design: CovariateDesign
    dropped: int = 0

    def __post_init__(self):
        if list(self.incidence.ids) != list(self.design.ids):
            raise DataError("incidence and design ids differ")

    @property
    def Y(self):
        return self.incidence.values.astype(float)

    @property
    def X(self):
        return self.design.values

    @property
    def ids(self):
        return self.incidence.ids

    @property
    def N(self):
        return self.incidence.N

    @property
    def R(self):
        return self.incidence.R

    def take(self, rows):
        return Dataset(self.incidence.take(rows), self.design.take(rows), 0)

    @classmethod
    def from_arrays(cls, Y, X=None, ids=None, skills=None, covariates=None,
                    variables=None):
        Y = np.asarray(Y)
        N, R = Y.shape
        ids = list(ids) if ids is not None else [str(i + 1) for i in range(N)]
        skills = list(skills) if skills is not None else [f"item{k + 1}" for k in range(R)]
        if X is None:
            design = intercept_design(ids)
        else:
            X = np.asarray(X, dtype=float)
            cols = list(covariates) if covariates is not None else (
                [INTERCEPT] + [f"x{j}" for j in range(1, X.shape[1])])
            design = CovariateDesign(ids, cols, X, variables or {})
        return cls(IncidenceMatrix(ids, skills, Y), design)


def load_rules(path_or_dict):
    """Parse the rules document into item rules, covariate specs and the
    missing marker.

    The document has the form::

        {"missing": "",
         "items": {"Internet use": {"levels": [...], "threshold": "...",
                                    "alters": ["col_a", "col_b"]}},
         "covariates": {"Education": {"levels": [...], "reference": "high"}}}
    """
    if isinstance(path_or_dict, (str, Path)):
        try:
            doc = json.loads(Path(path_or_dict).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"rules file not found: {path_or_dict}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"rules file {path_or_dict}: line {exc.lineno}: {exc.msg}") from exc
    else:
        doc = path_or_dict
    if not isinstance(doc, dict) or "items" not in doc:
        raise ConfigError("rules document needs an 'items' object")
    rules = []
    for name, spec in doc["items"].items():
        try:
            rules.append(DichotomizationRule(name, spec["levels"], spec["threshold"],
                                             spec.get("alters", ())))
        except KeyError as exc:
            raise ConfigError(f"item {name!r}: missing key {exc}") from exc
    covs = []
    for name, spec in doc.get("covariates", {}).items():
        try:
            covs.append(CovariateSpec(name, spec["levels"], spec["reference"]))
        except KeyError as exc:
            raise ConfigError(f"covariate {name!r}: missing key {exc}") from exc
    if not rules:
        raise ConfigError("rules document defines no items")
    return rules, covs, doc.get("missing", "")


def dichotomize(raw, rules):
    """Threshold ordinal responses into ties.

    Rows with a missing response in any used column are flagged in
    ``row_missing`` rather than imputed.
    """
    N = len(raw.frame)
    ids = raw.ids
    values = np.zeros((N, len(rules)), dtype=np.int8)
    missing = np.zeros(N, dtype=bool)
    for k, rule in enumerate(rules):
        cut = rule.rank(rule.threshold)
        rank_of = {lv: r for r, lv in enumerate(rule.levels)}
        for col in rule.columns:
            series = raw.column(col)
            for i, label in enumerate(series):
                if label == raw.missing:
                    missing[i] = True
                    continue
                try:
                    r = rank_of[label]
                except KeyError:
                    raise DataError(
                        f"item {rule.item!r}, id {ids[i]!r}: unknown level {label!r}"
                        + (f" in column {col!r}" if col != rule.item else "")) from None
                if r >= cut:
                    values[i, k] = 1
    values[missing] = 0
    return IncidenceMatrix(ids, [r.item for r in rules], values, missing)


def encode_covariates(raw, schema):
    """Dummy-code categorical covariates against their reference levels."""
    N = len(raw.frame)
    ids = raw.ids
    columns = [INTERCEPT]
    blocks = [np.ones((N, 1))]
    missing = np.zeros(N, dtype=bool)
    variables = {}
    diagnostics = []
    for spec in schema:
        series = raw.column(spec.name)
        dummies = spec.dummies
        block = np.zeros((N, len(dummies)))
        index = {lv: j for j, lv in enumerate(dummies)}
        for i, label in enumerate(series):
            if label == raw.missing:
                missing[i] = True
                continue
            if label == spec.reference:
                continue
            if label not in index:
                raise DataError(
                    f"covariate {spec.name!r}, id {ids[i]!r}: unseen category {label!r}")
            block[i, index[label]] = 1.0
        names = [f"{spec.name}={lv}" for lv in dummies]
        observed = ~missing
        for j, name in enumerate(names):
            col = block[observed, j]
            if col.size and np.all(col == col[0]):
                msg = f"dummy column {name!r} is constant ({col[0]:g})"
                diagnostics.append(msg)
                warnings.warn(msg, DataWarning, stacklevel=2)
        columns.extend(names)
        blocks.append(block)
        variables[spec.name] = {"levels": list(spec.levels), "reference": spec.reference,
                                "columns": names}
    return CovariateDesign(ids, columns, np.hstack(blocks), variables, missing,
                           diagnostics)


def complete_cases(incidence, design):
    """Drop every row flagged as missing in either input."""
    if list(incidence.ids) != list(design.ids):
        raise DataError("incidence and design ids are not aligned")
    drop = incidence.row_missing | design.row_missing
    keep = np.flatnonzero(~drop)
    if keep.size == 0:
        raise DataError("no complete cases remain")
    inc = incidence.take(keep)
    des = design.take(keep)
    inc.row_missing = np.zeros(keep.size, dtype=bool)
    des.row_missing = np.zeros(keep.size, dtype=bool)
    return Dataset(inc, des, int(drop.sum()))


def tie_density(incidence):
    values = incidence.values if isinstance(incidence, IncidenceMatrix) else np.asarray(incidence)
    if values.shape[0] < 1:
        raise DataError("tie density needs at least one row")
    return values.mean(axis=0).astype(float)


def covariate_distribution(design):
    """Category proportions per covariate as (variable, category, share) rows."""
    rows = []
    for name, meta in design.variables.items():
        for lv in meta["levels"]:
            share = float(design.category_mask(name, lv).mean())
            rows.append((name, lv, share))
    return rows


def ingest(raw, rules, covariates):
    """Full pass: dichotomize, encode, then keep complete cases."""
    incidence = dichotomize(raw, rules)
    design = encode_covariates(raw, covariates)
    return complete_cases(incidence, design)
