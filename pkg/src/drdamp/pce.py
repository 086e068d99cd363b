"""Hermite polynomial-chaos surrogate of a scalar response.

Probabilists' Hermite polynomials, normalized so the basis is
orthonormal under the standard normal weight.  Coefficients come from
point-collocation least squares on standardized inputs; the mean of the
surrogate is then the constant coefficient and its variance is the sum
of the squared remaining coefficients.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.stats import gaussian_kde

__all__ = [
    "PceError",
    "MultiIndexSet",
    "Standardization",
    "PceSurrogate",
    "ErrorReport",
    "PdfEstimate",
    "multi_index_set",
    "hermite",
    "hermite_normalized",
    "standardize",
    "fit",
    "evaluate",
    "evaluate_standardized",
    "moments",
    "pdf_mc",
    "error_metrics",
    "as_polynomial",
    "save_surrogate",
    "load_surrogate",
]


class PceError(ValueError):
    """Invalid surrogate construction or evaluation."""


def hermite(k, x):
    """Probabilists' Hermite polynomial He_k(x) by three-term recurrence."""
    if k < 0:
        raise PceError("polynomial order must be >= 0")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for j in range(1, k):
        h, h_prev = x * h - j * h_prev, h
    return h if h.ndim else float(h)


def hermite_normalized(k, x):
    """He_k(x)/sqrt(k!), orthonormal under the standard normal weight."""
    return hermite(k, x) / math.sqrt(math.factorial(k))


@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree multi-index set in graded lexicographic order."""

    dimension: int
    order: int
    indices: tuple

    def __len__(self):
        return len(self.indices)


def multi_index_set(dimension, order):
    """All multi-indices with |alpha| <= order, graded, constant first."""
    if dimension < 1 or order < 0:
        raise PceError("dimension must be >= 1 and order >= 0")
    indices = []
    for degree in range(order + 1):
        block = set()
        for combo in combinations_with_replacement(range(dimension), degree):
            alpha = [0] * dimension
            for dim in combo:
                alpha[dim] += 1
            block.add(tuple(alpha))
        indices.extend(sorted(block, reverse=True))
    return MultiIndexSet(dimension=dimension, order=order, indices=tuple(indices))


@dataclass(frozen=True)
class Standardization:
    """Affine map from raw inputs to standardized (decorrelated) ones."""

    mean: np.ndarray
    std: np.ndarray
    corr_factor: np.ndarray | None = None  # Cholesky factor of the correlation

    def apply(self, raw):
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        xi = (raw - self.mean) / self.std
        if self.corr_factor is not None:
            xi = np.linalg.solve(self.corr_factor, xi.T).T
        return xi

    def invert(self, xi):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.corr_factor is not None:
            xi = xi @ self.corr_factor.T
        return xi * self.std + self.mean

    @classmethod
    def identity(cls, dimension):
        return cls(mean=np.zeros(dimension), std=np.ones(dimension))


def standardize(samples, correlation=None):
    """Standardized samples plus the recorded (invertible) transform.

    Per-dimension affine standardization with population moments; with a
    correlation matrix given, the samples are additionally decorrelated
    through its inverse Cholesky factor (Gaussian copula restricted to
    normal marginals).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.ndim != 2:
        raise PceError("samples must form an (n_samples, dimension) matrix")
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    if np.any(std <= 1e-12):
        raise PceError("sample standard deviation too small to standardize")
    factor = None
    if correlation is not None:
        correlation = np.asarray(correlation, dtype=float)
        if not np.allclose(correlation, correlation.T):
            raise PceError("correlation matrix must be symmetric")
        try:
            factor = np.linalg.cholesky(correlation)
        except np.linalg.LinAlgError:
            raise PceError("correlation matrix is not positive definite") from None
    record = Standardization(mean=mean, std=std, corr_factor=factor)
    return record.apply(samples), record


@dataclass(frozen=True)
class PceSurrogate:
    """Truncated Hermite expansion with its input standardization."""

    index_set: MultiIndexSet
    coefficients: np.ndarray
    standardization: Standardization
    condition: float
    residual_norm: float
    n_samples: int

    @property
    def dimension(self):
        return self.index_set.dimension

    @property
    def order(self):
        return self.index_set.order


def _basis_matrix(index_set, xi):
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n_samples, dim = xi.shape
    if dim != index_set.dimension:
        raise PceError(f"points have dimension {dim}, surrogate expects {index_set.dimension}")
    # univariate values up to the maximum needed degree, reused per index
    uni = np.empty((dim, index_set.order + 1, n_samples))
    for d in range(dim):
        for k in range(index_set.order + 1):
            uni[d, k] = hermite_normalized(k, xi[:, d])
    psi = np.ones((n_samples, len(index_set)))
    for col, alpha in enumerate(index_set.indices):
        for d, k in enumerate(alpha):
            if k:
                psi[:, col] *= uni[d, k]
    return psi


def fit(xi_samples, responses, dimension, order, standardization=None, oversampling=2.0):
    """Least-squares PCE coefficients from standardized design points.

    Requires at least ``oversampling`` times as many samples as basis
    terms.  ``standardization`` is stored on the surrogate so raw points
    can be evaluated later; identity when omitted.
    """
    xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    y = np.asarray(responses, dtype=float).ravel()
    if xi.shape[0] != y.size:
        raise PceError("responses are not aligned with the design")
    if not np.all(np.isfinite(y)):
        raise PceError("responses contain non-finite values")
    index_set = multi_index_set(dimension, order)
    n_terms = len(index_set)
    if xi.shape[0] < oversampling * n_terms:
        raise PceError(
            f"need at least {math.ceil(oversampling * n_terms)} samples for "
            f"{n_terms} basis terms (got {xi.shape[0]})"
        )
    psi = _basis_matrix(index_set, xi)
    coeffs, _, rank, sing = np.linalg.lstsq(psi, y, rcond=None)
    if rank < n_terms:
        raise PceError(
            f"rank-deficient design (rank {rank} < {n_terms} terms): "
            "add samples or lower the order"
        )
    condition = float(sing[0] / sing[-1])
    if condition > 1e8:
        warnings.warn(f"ill-conditioned regression (condition {condition:.3e})",
                      stacklevel=2)
    residual = float(np.linalg.norm(y - psi @ coeffs))
    if standardization is None:
        standardization = Standardization.identity(dimension)
    return PceSurrogate(
        index_set=index_set,
        coefficients=coeffs,
        standardization=standardization,
        condition=condition,
        residual_norm=residual,
        n_samples=int(xi.shape[0]),
    )


def evaluate_standardized(surrogate, xi):
    """Expansion value at standardized points."""
    psi = _basis_matrix(surrogate.index_set, xi)
    return psi @ surrogate.coefficients


def evaluate(surrogate, raw_points):
    """Surrogate value at raw points (standardization applied first)."""
    raw = np.asarray(raw_points, dtype=float)
    scalar = raw.ndim == 0
    if raw.ndim <= 1 and surrogate.dimension == 1:
        raw = raw.reshape(-1, 1)
    values = evaluate_standardized(surrogate, surrogate.standardization.apply(raw))
    return float(values[0]) if scalar else values


def moments(surrogate):
    """(mean, variance) under the standard normal reference measure.

    With the orthonormal basis the mean is the constant coefficient and
    the variance is the sum of the squared remaining coefficients.
    """
    c = surrogate.coefficients
    return float(c[0]), float(np.sum(c[1:] ** 2))


@dataclass(frozen=True)
class ErrorReport:
    rmse: float
    aae: float
    n_validation: int

    def __post_init__(self):
        if not (np.isfinite(self.rmse) and np.isfinite(self.aae)):
            raise PceError("error metrics must be finite")
        if self.rmse < 0 or self.aae < 0:
            raise PceError("error metrics must be non-negative")


def error_metrics(surrogate, validation_points, validation_responses):
    """Root-mean-squared and average absolute validation error."""
    truth = np.asarray(validation_responses, dtype=float).ravel()
    if truth.size < 2:
        raise PceError("need at least 2 validation points")
    predicted = np.asarray(evaluate(surrogate, validation_points)).ravel()
    err = predicted - truth
    return ErrorReport(
        rmse=float(np.sqrt(np.mean(err**2))),
        aae=float(np.mean(np.abs(err))),
        n_validation=int(truth.size),
    )


@dataclass(frozen=True)
class PdfEstimate:
    """Histogram plus kernel-density curve of the surrogate output."""

    bin_centers: np.ndarray
    mass: np.ndarray
    density_x: np.ndarray
    density_y: np.ndarray


def pdf_mc(surrogate, n_samples=100_000, seed=0, n_bins=50):
    """Monte-Carlo output distribution under the Gaussian reference."""
    if n_samples < 1000:
        raise PceError("n_samples must be at least 1000")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n_samples, surrogate.dimension))
    values = evaluate_standardized(surrogate, xi)
    spread = float(values.std())
    degenerate = spread < 1e-13 * max(1.0, abs(values[0]))
    hist_range = None
    if degenerate:
        half = max(abs(values[0]), 1.0) * 1e-6
        hist_range = (values[0] - half, values[0] + half)
    counts, edges = np.histogram(values, bins=n_bins, range=hist_range)
    mass = counts / counts.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    if degenerate:
        # constant output: emit a unit-mass analytic bump
        width = max(abs(values[0]), 1.0) * 1e-9
        density_x = values[0] + width * np.linspace(-5, 5, 201)
        density_y = np.exp(-0.5 * ((density_x - values[0]) / width) ** 2)
        density_y /= width * math.sqrt(2 * math.pi)
    else:
        kde = gaussian_kde(values)
        bandwidth = kde.factor * spread
        density_x = np.linspace(values.min() - 6 * bandwidth,
                                values.max() + 6 * bandwidth, 801)
        density_y = kde(density_x)
    return PdfEstimate(bin_centers=centers, mass=mass,
                       density_x=density_x, density_y=density_y)


def as_polynomial(surrogate):
    """1-D surrogate as a numpy Polynomial in the raw input.

    Used by the exact dual of the worst-case expectation, which
    enumerates stationary points of the expansion.
    """
    if surrogate.dimension != 1:
        raise PceError("polynomial form only defined for 1-D surrogates")
    herme_coeffs = np.zeros(surrogate.order + 1)
    for alpha, c in zip(surrogate.index_set.indices, surrogate.coefficients):
        k = alpha[0]
        herme_coeffs[k] += c / math.sqrt(math.factorial(k))
    poly_xi = np.polynomial.Polynomial(np.polynomial.hermite_e.herme2poly(herme_coeffs))
    mu = float(surrogate.standardization.mean[0])
    sigma = float(surrogate.standardization.std[0])
    return poly_xi(np.polynomial.Polynomial([-mu / sigma, 1.0 / sigma]))


def save_surrogate(surrogate, path):
    data = {
        "dimension": surrogate.dimension,
        "order": surrogate.order,
        "multi_indices": [list(a) for a in surrogate.index_set.indices],
        "coefficients": surrogate.coefficients.tolist(),
        "standardization": {
            "mean": surrogate.standardization.mean.tolist(),
            "std": surrogate.standardization.std.tolist(),
            "corr_factor": None
            if surrogate.standardization.corr_factor is None
            else surrogate.standardization.corr_factor.tolist(),
        },
        "diagnostics": {
            "condition": surrogate.condition,
            "residual_norm": surrogate.residual_norm,
            "n_samples": surrogate.n_samples,
        },
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_surrogate(path):
    with open(path) as fh:
        data = json.load(fh)
    index_set = multi_index_set(data["dimension"], data["order"])
    stored = tuple(tuple(a) for a in data["multi_indices"])
    if stored != index_set.indices:
        raise PceError(f"surrogate file {path} has an inconsistent multi-index list")
    std = data["standardization"]
    factor = std.get("corr_factor")
    record = Standardization(
        mean=np.array(std["mean"], dtype=float),
        std=np.array(std["std"], dtype=float),
        corr_factor=None if factor is None else np.array(factor, dtype=float),
    )
    diag = data["diagnostics"]
    return PceSurrogate(
        index_set=index_set,
        coefficients=np.array(data["coefficients"], dtype=float),
        standardization=record,
        condition=float(diag["condition"]),
        residual_norm=float(diag["residual_norm"]),
        n_samples=int(diag["n_samples"]),
    )
