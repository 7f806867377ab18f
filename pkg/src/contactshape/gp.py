"""Gaussian-process implicit surface with a fixed Gaussian noise model.

The potential field f is given a zero-mean GP prior with an isotropic
squared-exponential kernel and the ternary labels are treated as direct
noisy observations of f with shared variance ``noise_variance``.  Fitting
factorizes the regularized Gram matrix once; prediction then costs one
triangular solve per query block.

Predictions are evaluated in fixed-size chunks in a fixed order, so results
are bitwise reproducible for a given dataset and parameters regardless of
query count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .data import Dataset
from .errors import NumericalError
from .geometry import EvalGrid

# Relative diagonal jitter added before every factorization.
JITTER_SCALE = 1e-10

# Number of query points solved per block during prediction.
PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class KernelParams:
    """Isotropic squared-exponential kernel parameters.

    ``k(x, z) = signal_variance * exp(-||x - z||^2 / (2 * length_scale_sq))``

    The length scale is stored squared because that is the quantity the
    hyperparameter search moves in log space.
    """

    length_scale_sq: float
    signal_variance: float = 1.0

    def __post_init__(self):
        if not (self.length_scale_sq > 0 and math.isfinite(self.length_scale_sq)):
            raise ValueError("length_scale_sq must be positive and finite")
        if not (self.signal_variance > 0 and math.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be positive and finite")


def kernel(x, z, params: KernelParams) -> float:
    """Kernel value between two single points."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != z.shape or x.ndim != 1:
        raise ValueError("kernel expects two points of equal dimension")
    d2 = float(np.sum((x - z) ** 2))
    return params.signal_variance * math.exp(-d2 / (2.0 * params.length_scale_sq))


def cross_covariance(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel matrix between two point sets, (n, m)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-sq / (2.0 * params.length_scale_sq))


def gram(points: np.ndarray, params: KernelParams) -> np.ndarray:
    """Symmetric kernel matrix of one point set, with exact diagonal."""
    k = cross_covariance(points, points, params)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, params.signal_variance)
    return k


def chol_lower(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising :class:`NumericalError` with a
    condition estimate when the factorization fails."""
    try:
        c, low = cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(mat)
        raise NumericalError(
            f"Cholesky factorization failed (condition estimate {cond:.3e})"
        ) from exc
    return np.tril(c)


@dataclass(frozen=True, eq=False)
class GpisFit:
    """Fitted implicit-surface model: training data plus the factorization
    of ``K + noise_variance I`` and the precomputed weight vector."""

    train_x: np.ndarray
    train_y: np.ndarray
    noise_variance: float
    params: KernelParams
    chol: np.ndarray
    weights: np.ndarray


def gpis_fit(data: Dataset, noise_variance: float, params: KernelParams) -> GpisFit:
    """Fit the homoscedastic implicit-surface model.

    Parameters
    ----------
    data : Dataset
        Labeled observations; labels are used directly as regression targets.
    noise_variance : float
        Shared observation noise variance, must be positive.
    params : KernelParams
        Kernel hyperparameters.
    """
    if not (noise_variance > 0 and math.isfinite(noise_variance)):
        raise ValueError("noise_variance must be positive and finite")
    x = data.positions
    y = data.labels.astype(float)
    k = gram(x, params)
    k[np.diag_indices_from(k)] += noise_variance + JITTER_SCALE * params.signal_variance
    low = chol_lower(k)
    w = cho_solve((low, True), y, check_finite=False)
    return GpisFit(
        train_x=x,
        train_y=y,
        noise_variance=float(noise_variance),
        params=params,
        chol=low,
        weights=w,
    )


@dataclass(frozen=True, eq=False)
class PredictionField:
    """Predictive mean and variance of the potential over a grid."""

    grid: EvalGrid
    mean: np.ndarray
    variance: np.ndarray

    def to_csv(self, path) -> None:
        """Write rows ``x1,x2[,x3],mu,var`` with round-trip floats."""
        dim = self.grid.dim
        names = ["x1", "x2", "x3"][:dim] + ["mu", "var"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for p, m, v in zip(self.grid.points, self.mean, self.variance):
                cells = [format(c, ".17g") for c in p]
                cells.append(format(m, ".17g"))
                cells.append(format(v, ".17g"))
                fh.write(",".join(cells) + "\n")


def predict_raw(
    train_x: np.ndarray,
    chol: np.ndarray,
    weights: np.ndarray,
    params: KernelParams,
    points: np.ndarray,
    with_variance: bool = True,
    chunk: int = PREDICT_CHUNK,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Chunked predictive mean (and optionally variance) at raw points.

    Shared by the homoscedastic and the robust predictors; the caller
    supplies the factorization of the appropriate regularized Gram matrix
    and the weight vector solved against the targets.
    """
    points = np.asarray(points, dtype=float)
    n_query = points.shape[0]
    mean = np.empty(n_query)
    var = np.empty(n_query) if with_variance else None
    for start in range(0, n_query, chunk):
        block = points[start : start + chunk]
        k_star = cross_covariance(train_x, block, params)
        mean[start : start + chunk] = k_star.T @ weights
        if with_variance:
            half = solve_triangular(chol, k_star, lower=True, check_finite=False)
            var[start : start + chunk] = params.signal_variance - np.sum(half * half, axis=0)
    return mean, var


def predict_at(fit: GpisFit, points: np.ndarray, with_variance: bool = True):
    """Predict at arbitrary points; see :func:`gpis_predict` for grids."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != fit.train_x.shape[1]:
        raise ValueError("query dimension does not match the training data")
    return predict_raw(fit.train_x, fit.chol, fit.weights, fit.params, pts, with_variance)


def gpis_predict(fit: GpisFit, grid: EvalGrid) -> PredictionField:
    """Predictive mean and variance of the potential over ``grid``.

    Far from all training points the mean decays to 0 and the variance
    approaches ``signal_variance``; at training points with small noise
    the mean interpolates the labels.  Variances are reported as computed,
    without clamping.
    """
    mean, var = predict_at(fit, grid.points, with_variance=True)
    return PredictionField(grid=grid, mean=mean, variance=var)
