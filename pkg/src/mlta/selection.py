"""BIC grid search over (G, D, variant)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FitFailed, NumericalError
from .model import CONSTRAINED, UNCONSTRAINED, VARIANTS, ModelConfig
from .variational import FitOptions, fit, parallel_map

logger = logging.getLogger(__name__)


@dataclass
class SelectionGrid:
    G: tuple = (1, 2, 3, 4)
    D: tuple = (0, 1, 2, 3)
    variants: tuple = VARIANTS

    def __post_init__(self):
        self.G = tuple(sorted(set(int(g) for g in self.G)))
        self.D = tuple(sorted(set(int(d) for d in self.D)))
        self.variants = tuple(v for v in VARIANTS if v in set(self.variants))
        if not self.G or not self.D or not self.variants:
            raise ConfigError("selection grid must be non-empty")
        for g in self.G:
            for d in self.D:
                for v in self.variants:
                    ModelConfig(g, d, v)

    def configs(self):
        """All cells in a fixed order: variant, then D, then G."""
        return [ModelConfig(g, d, v) for v in self.variants for d in self.D for g in self.G]


@dataclass
class CellRecord:
    config: ModelConfig
    final_elbo: float = float("nan")
    p: int = 0
    bic: float = float("nan")
    converged: bool = False
    start_index: int = -1
    status: str = "ok"
    mirrored_from: str | None = None
    message: str = ""
    fit: object = field(default=None, repr=False, compare=False)

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {
            "G": self.config.G, "D": self.config.D, "variant": self.config.variant,
            "final_elbo": None if not self.ok else float(self.final_elbo),
            "p": int(self.p),
            "bic": None if not self.ok else float(self.bic),
            "converged": bool(self.converged),
            "start_index": int(self.start_index),
            "status": self.status,
            "mirrored_from": self.mirrored_from,
            "message": self.message,
        }


@dataclass
class SelectionTable:
    cells: list
    best: int | None = None

    def __post_init__(self):
        if self.best is None and any(c.ok for c in self.cells):
            self.best = self.cells.index(_best_cell(self.cells))

    def cell(self, G, D, variant=UNCONSTRAINED):
        for c in self.cells:
            if (c.config.G, c.config.D, c.config.variant) == (G, D, variant):
                return c
        raise KeyError((G, D, variant))

    def bic_matrix(self, variant):
        """Rows D, columns G (NaN for failed or absent cells)."""
        Gs = sorted({c.config.G for c in self.cells})
        Ds = sorted({c.config.D for c in self.cells})
        out = np.full((len(Ds), len(Gs)), np.nan)
        for c in self.cells:
            if c.config.variant == variant and c.ok:
                out[Ds.index(c.config.D), Gs.index(c.config.G)] = c.bic
        return Ds, Gs, out

    def to_dict(self):
        best = self.cells[self.best].config if self.best is not None else None
        return {
            "cells": [c.to_dict() for c in self.cells],
            "best": None if best is None else
            {"G": best.G, "D": best.D, "variant": best.variant},
        }


def _sort_key(cell):
    # ties: smaller p, then G, then D, then constrained first
    return (cell.bic, cell.p, cell.config.G, cell.config.D,
            0 if cell.config.variant == CONSTRAINED else 1)


def _best_cell(cells):
    eligible = [c for c in cells if c.ok]
    if not eligible:
        raise ConfigError("no successfully fitted cell to select from")
    return min(eligible, key=_sort_key)


def select_best(table):
    """Configuration with the smallest BIC among successfully fitted cells."""
    return _best_cell(table.cells).config


def cell_seed(seed, index):
    """Independent, reproducible seed for grid cell ``index``."""
    ss = np.random.SeedSequence(seed, spawn_key=(1, index))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _cell_job(args):
    data, config, opts = args
    try:
        res = fit(data, config, replace(opts, jobs=1))
        return res, None
    except (FitFailed, NumericalError) as exc:
        return None, str(exc)


def grid_search(data, grid=None, opts=None, keep_fits=False):
    """Fit every cell of ``grid`` and tabulate BIC.

    Cells where both variants coincide (G = 1 or D = 0) are fitted once, as
    the unconstrained variant, and mirrored to the constrained column.
    """
    grid = grid or SelectionGrid()
    opts = opts or FitOptions()
    configs = grid.configs()
    unique = []
    for cfg in configs:
        key = ModelConfig(cfg.G, cfg.D, UNCONSTRAINED) if cfg.degenerate else cfg
        if key not in unique:
            unique.append(key)
    jobs = [(data, cfg, replace(opts, seed=cell_seed(opts.seed, i)))
            for i, cfg in enumerate(unique)]
    cell_jobs = 1 if opts.jobs <= 1 else opts.jobs
    outcomes = parallel_map(_cell_job, [(d, c, replace(o, jobs=1)) for d, c, o in jobs],
                            cell_jobs)
    fitted = dict(zip(unique, outcomes))
    cells = []
    N = data.N
    for cfg in configs:
        key = ModelConfig(cfg.G, cfg.D, UNCONSTRAINED) if cfg.degenerate else cfg
        res, err = fitted[key]
        mirrored = key.label() if key != cfg else None
        if res is None:
            cells.append(CellRecord(cfg, status="failed", mirrored_from=mirrored, message=err))
            logger.warning("cell %s failed: %s", cfg.label(), err)
            continue
        cells.append(CellRecord(cfg, res.final_elbo, res.n_params, res.bic, res.converged,
                                res.start_index, "ok", mirrored,
                                fit=res if keep_fits else None))
    if not any(c.ok for c in cells):
        raise FitFailed("every grid cell failed", [c.message for c in cells])
    logger.info("grid search over %d cells on N=%d done", len(cells), N)
    return SelectionTable(cells)
