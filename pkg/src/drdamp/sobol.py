"""Variance-based global sensitivity analysis.

Saltelli sample designs on normalized parameter boxes, Jansen's
estimator for the total index and Saltelli's for the first-order index.
Used to rank the damping-controller parameters by their influence on
critical-mode damping; the top-ranked parameters become the tuning
decision variables.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import testbed
from .sslin import default_params

__all__ = [
    "SobolError",
    "SaltelliDesign",
    "SobolResult",
    "saltelli_sample",
    "indices",
    "rank_parameters",
    "write_design",
    "read_design",
]


class SobolError(ValueError):
    """Invalid design, misaligned evaluations or degenerate output."""


@dataclass(frozen=True)
class SaltelliDesign:
    """Evaluation points laid out as blocks [A; B; A_B^(1); ...; A_B^(d)].

    ``points`` holds the bound-mapped coordinates, one evaluation per
    row; ``normalized`` the matching unit-cube coordinates.
    """

    names: tuple
    bounds: tuple
    n_base: int
    points: np.ndarray
    normalized: np.ndarray

    @property
    def dimension(self):
        return len(self.names)

    def block(self, which, values):
        """Slice aligned evaluation values for block 'a', 'b' or i (int)."""
        values = np.asarray(values)
        n = self.n_base
        if which == "a":
            return values[:n]
        if which == "b":
            return values[n : 2 * n]
        return values[(2 + which) * n : (3 + which) * n]


def saltelli_sample(bounds, n_base, seed=0):
    """Saltelli design of n_base * (d + 2) points over parameter boxes.

    ``bounds`` maps parameter name to its (lo, hi) interval.  Sampling is
    uniform on the normalized unit cube and mapped affinely onto the
    boxes, so differently scaled parameters contribute comparably.
    """
    if n_base < 2:
        raise SobolError("n_base must be at least 2")
    names = tuple(bounds)
    lo = np.array([bounds[n][0] for n in names], dtype=float)
    hi = np.array([bounds[n][1] for n in names], dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise SobolError("bounds must be finite")
    for name, l, h in zip(names, lo, hi):
        if l >= h:
            raise SobolError(f"degenerate bounds for parameter {name!r}: [{l:g}, {h:g}]")
    d = len(names)
    rng = np.random.default_rng(seed)
    a = rng.random((n_base, d))
    b = rng.random((n_base, d))
    blocks = [a, b]
    for i in range(d):
        ab = a.copy()
        ab[:, i] = b[:, i]
        blocks.append(ab)
    normalized = np.vstack(blocks)
    return SaltelliDesign(
        names=names,
        bounds=tuple((float(l), float(h)) for l, h in zip(lo, hi)),
        n_base=n_base,
        points=lo + normalized * (hi - lo),
        normalized=normalized,
    )


@dataclass(frozen=True)
class SobolResult:
    """First-order and total indices per parameter."""

    names: tuple
    first_order: np.ndarray
    total: np.ndarray
    n_base: int
    variance: float

    def ranking(self):
        """Parameter names with indices, sorted by descending total index."""
        order = np.argsort(-self.total)
        return [
            (self.names[i], float(self.total[i]), float(self.first_order[i]))
            for i in order
        ]


def indices(design, evaluations):
    """Sobol indices from evaluations aligned with a Saltelli design.

    Total index by Jansen's estimator, first-order by Saltelli's, both
    against the pooled variance of the A and B blocks.
    """
    values = np.asarray(evaluations, dtype=float).ravel()
    expected = design.n_base * (design.dimension + 2)
    if values.size != expected:
        raise SobolError(f"expected {expected} evaluations, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise SobolError("evaluations contain non-finite values")
    f_a = design.block("a", values)
    f_b = design.block("b", values)
    pooled = np.concatenate([f_a, f_b])
    variance = float(np.var(pooled))
    if variance < 1e-14:
        raise SobolError("constant output, indices undefined")
    n = design.n_base
    total = np.empty(design.dimension)
    first = np.empty(design.dimension)
    for i in range(design.dimension):
        f_ab = design.block(i, values)
        total[i] = np.sum((f_a - f_ab) ** 2) / (2 * n) / variance
        first[i] = np.sum(f_b * (f_ab - f_a)) / n / variance
    return SobolResult(
        names=design.names, first_order=first, total=total,
        n_base=n, variance=variance,
    )


_TUNABLE = ("k_m", "t_1", "t_2", "t_3", "t_4")


def rank_parameters(config, bounds=None, n_base=1024, seed=0, top_k=2):
    """Rank controller parameters by total-index influence on damping.

    Evaluates the closed-loop critical damping at e = 0 over a Saltelli
    design in controller-parameter space.  Design rows whose evaluation
    is infeasible are dropped whole (keeping A/B/A_B alignment) as long
    as they stay at or below 1% of the base sample.

    Returns (selected, result, design) where ``selected`` holds the
    ``top_k`` most influential parameters as (name, total, first_order)
    in descending total-index order; ``result.ranking()`` has them all.
    """
    base = default_params()
    if bounds is None:
        bounds = {name: base.bounds[name] for name in _TUNABLE}
    design = saltelli_sample(bounds, n_base, seed)
    plant = testbed.linearize(config, 0.0)

    values = np.empty(len(design.points))
    feasible = np.ones(len(design.points), dtype=bool)
    relaxed = {name: (0.0, np.inf) for name in base.bounds}
    for row, point in enumerate(design.points):
        params = base.with_values(
            bounds=relaxed, **dict(zip(design.names, point))
        )
        try:
            values[row] = testbed.closed_loop_damping(plant, params)
        except (testbed.OperatingPointError, ValueError):
            feasible[row] = False
            values[row] = np.nan

    if not np.all(feasible):
        bad = feasible.reshape(design.dimension + 2, design.n_base)
        bad_rows = np.flatnonzero(~np.all(bad, axis=0))
        if bad_rows.size > 0.01 * design.n_base:
            raise SobolError(
                f"{bad_rows.size} of {design.n_base} design rows infeasible "
                "(>1%): tighten the parameter bounds"
            )
        warnings.warn(
            f"dropping {bad_rows.size} infeasible design rows", stacklevel=2
        )
        keep = np.setdiff1d(np.arange(design.n_base), bad_rows)
        layout = values.reshape(design.dimension + 2, design.n_base)
        values = layout[:, keep].ravel()
        design = SaltelliDesign(
            names=design.names,
            bounds=design.bounds,
            n_base=keep.size,
            points=design.points.reshape(design.dimension + 2, design.n_base, -1)[
                :, keep
            ].reshape(-1, design.dimension),
            normalized=design.normalized.reshape(
                design.dimension + 2, design.n_base, -1
            )[:, keep].reshape(-1, design.dimension),
        )

    result = indices(design, values)
    return result.ranking()[:top_k], result, design


def write_design(design, evaluations, path):
    """CSV round-trip: one row per evaluation point, columns = params + f."""
    values = np.asarray(evaluations, dtype=float).ravel()
    if values.size != len(design.points):
        raise SobolError("evaluations are not aligned with the design")
    with open(path, "w") as fh:
        fh.write(",".join(design.names) + ",f\n")
        for point, f in zip(design.points, values):
            cells = [format(x, ".17g") for x in point] + [format(f, ".17g")]
            fh.write(",".join(cells) + "\n")


def read_design(path):
    """Points and evaluations back from ``write_design`` output."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "f":
            raise SobolError(f"{path}: last column must be 'f'")
        names = tuple(header[:-1])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != len(header):
                raise SobolError(f"{path}:{lineno}: expected {len(header)} columns")
            rows.append([float(c) for c in cells])
    data = np.array(rows)
    return names, data[:, :-1], data[:, -1]
