"""Heteroscedastic implicit-surface model with a Student's-t likelihood.

Each observation gets its own noise variance, drawn from an inverse-gamma
prior; marginally the likelihood of a label given the potential is a
Student's t, which tolerates gross outliers such as false-positive
contacts.  The posterior is approximated with a factorized variational
family

    q(f) = N(mean, cov),    q(noise variances) = prod_i InvGamma(a_i, b_i),

optimized by coordinate ascent on the evidence lower bound (an E step)
alternating with gradient ascent on the likelihood and kernel
hyperparameters (an M step).  The per-datum posterior noise scale
``b_i / a_i`` doubles as an outlier score: corrupted observations keep a
large posterior noise while clean ones are explained with a small one.

All ELBO evaluations go through one canonical routine, so values recorded
across E sweeps and M steps are directly comparable and monotone up to
roundoff.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import digamma, gammaln

from .data import Dataset
from .errors import NumericalError
from .geometry import EvalGrid
from .gp import (
    JITTER_SCALE,
    KernelParams,
    PredictionField,
    chol_lower,
    gram,
    predict_raw,
)

_LOG_2PI = math.log(2.0 * math.pi)

# Largest dataset for which the dense posterior covariance is kept.
MAX_POINTS = 5000

# Box bounds for hyperparameter ascent, in log space, ordered as
# (alpha, beta, length_scale_sq, signal_variance).  The likelihood of a
# zero-residual observation grows without bound as its noise scale
# shrinks, so an unconstrained ascent drifts along beta -> 0 forever on
# clean data; the beta floor pins the attainable noise scale at a few
# percent of the unit label scale instead.
_LOG_BOUNDS = np.log(
    [
        (1e-2, 1e4),
        (2.5e-2, 1e4),
        (1e-4, 1e2),
        (1e-3, 1e3),
    ]
)


@dataclass(frozen=True)
class StudentTParams:
    """Shared likelihood hyperparameters in inverse-gamma form.

    ``alpha`` and ``beta`` are the shape and scale of the inverse-gamma
    prior on each per-datum noise variance.  Marginalizing that prior
    out of a Gaussian observation model yields a Student's t with
    ``dof = 2 * alpha`` degrees of freedom and squared-residual weight
    ``precision = alpha / beta``.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be positive and finite")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be positive and finite")

    @property
    def dof(self) -> float:
        return 2.0 * self.alpha

    @property
    def precision(self) -> float:
        return self.alpha / self.beta


def student_t_pdf(y, f, precision: float, dof: float):
    """Density of the Student's-t observation model.

    ``p(y | f) = G((dof+1)/2) / G(dof/2) * sqrt(precision / (pi dof))
    * (1 + precision (y-f)^2 / dof)^(-(dof+1)/2)``
    """
    if not (precision > 0 and dof > 0):
        raise ValueError("precision and dof must be positive")
    y = np.asarray(y, dtype=float)
    r2 = (y - f) ** 2
    log_norm = (
        gammaln((dof + 1.0) / 2.0)
        - gammaln(dof / 2.0)
        + 0.5 * math.log(precision / (math.pi * dof))
    )
    out = np.exp(log_norm - 0.5 * (dof + 1.0) * np.log1p(precision * r2 / dof))
    return float(out) if np.isscalar(y) or out.ndim == 0 else out


def inv_gamma_pdf(s2, shape: float, scale: float):
    """Inverse-gamma density with the mode at ``scale / (shape + 1)``.

    Returns 0 for non-positive arguments.
    """
    if not (shape > 0 and scale > 0):
        raise ValueError("shape and scale must be positive")
    s2 = np.asarray(s2, dtype=float)
    out = np.zeros_like(s2, dtype=float)
    pos = s2 > 0
    log_pdf = (
        shape * math.log(scale)
        - gammaln(shape)
        - (shape + 1.0) * np.log(s2[pos])
        - scale / s2[pos]
    )
    out[pos] = np.exp(log_pdf)
    return float(out) if out.ndim == 0 else out


def scale_mixture_check(y: float, f: float, params: StudentTParams) -> tuple[float, float]:
    """Evaluate both sides of the scale-mixture identity at one point.

    Returns ``(t_density, mixture_density)`` where the second value is the
    numerical integral of Gaussian-times-inverse-gamma over the noise
    variance.  The two agree to quadrature accuracy when the densities are
    implemented consistently.
    """
    from scipy.integrate import quad

    def integrand(s2):
        g = math.exp(-0.5 * (y - f) ** 2 / s2) / math.sqrt(2.0 * math.pi * s2)
        return g * inv_gamma_pdf(s2, params.alpha, params.beta)

    mode = params.beta / (params.alpha + 1.0)
    split = 1e4 * mode
    near, near_err = quad(
        integrand, 0.0, split, points=[mode, 10.0 * mode],
        epsabs=1e-13, epsrel=1e-13, limit=500,
    )
    far, far_err = quad(integrand, split, np.inf, epsabs=1e-13, epsrel=1e-13, limit=200)
    value, err = near + far, near_err + far_err
    if not math.isfinite(value) or err > 1e-8:
        raise NumericalError(f"mixture quadrature failed (error estimate {err:.3e})")
    return student_t_pdf(y, f, params.precision, params.dof), value


@dataclass(frozen=True, eq=False)
class RobustState:
    """Variational state of the robust fit.

    ``mean`` and ``cov`` parameterize the Gaussian over the potential at
    the training points; ``alpha_post`` and ``beta_post`` the per-datum
    inverse-gamma factors.  ``elbo`` is the canonical bound value for this
    state, ``trace`` the sequence of bound values recorded across updates,
    and ``stalled`` marks an M step whose line search found no ascent
    direction.
    """

    data: Dataset
    kernel_params: KernelParams
    likelihood: StudentTParams
    mean: np.ndarray
    cov: np.ndarray
    alpha_post: np.ndarray
    beta_post: np.ndarray
    elbo: float
    iterations: int = 0
    stalled: bool = False
    trace: tuple = ()

    def __post_init__(self):
        n = len(self.data)
        if self.mean.shape != (n,) or self.cov.shape != (n, n):
            raise ValueError("posterior moments do not match the dataset size")
        if self.alpha_post.shape != (n,) or self.beta_post.shape != (n,):
            raise ValueError("per-datum factors do not match the dataset size")
        if not (np.all(self.alpha_post > 0) and np.all(self.beta_post > 0)):
            raise ValueError("per-datum factors must be positive")

    @property
    def noise_scales(self) -> np.ndarray:
        """Per-datum posterior noise variances ``beta_post / alpha_post``."""
        return self.beta_post / self.alpha_post


# ---------------------------------------------------------------------------
# Canonical bound evaluation.


def _prior_chol(x: np.ndarray, params: KernelParams):
    k = gram(x, params)
    k[np.diag_indices_from(k)] += JITTER_SCALE * params.signal_variance
    low = chol_lower(k)
    logdet = 2.0 * float(np.sum(np.log(np.diag(low))))
    return k, low, logdet


def _chol_psd(mat: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.diag(mat)))
    bump = 0.0
    for _ in range(6):
        try:
            return chol_lower(mat + bump * np.eye(mat.shape[0]))
        except NumericalError:
            bump = max(bump * 100.0, 1e-14 * scale)
    raise NumericalError("posterior covariance is not positive definite")


def _const_term(y, m, diag_a, logdet_a, alpha_post, beta_post) -> float:
    n = y.size
    e_inv = alpha_post / beta_post
    e_log = np.log(beta_post) - digamma(alpha_post)
    resid2 = (y - m) ** 2 + diag_a
    lik = -0.5 * n * _LOG_2PI - 0.5 * float(np.sum(e_log)) - 0.5 * float(np.sum(e_inv * resid2))
    ent_f = 0.5 * n * (_LOG_2PI + 1.0) + 0.5 * logdet_a
    ent_s2 = float(
        np.sum(
            alpha_post
            + np.log(beta_post)
            + gammaln(alpha_post)
            - (1.0 + alpha_post) * digamma(alpha_post)
        )
    )
    return lik + ent_f + ent_s2 - 0.5 * n * _LOG_2PI


def _theta_term(alpha, beta, e_log_sum, e_inv_sum, n) -> float:
    return (
        n * (alpha * math.log(beta) - gammaln(alpha))
        - (1.0 + alpha) * e_log_sum
        - beta * e_inv_sum
    )


def _kernel_term(chol_k, logdet_k, m, chol_a) -> float:
    quad = float(m @ cho_solve((chol_k, True), m, check_finite=False))
    half = solve_triangular(chol_k, chol_a, lower=True, check_finite=False)
    tr = float(np.sum(half * half))
    return -0.5 * logdet_k - 0.5 * (quad + tr)


def _full_elbo(y, m, chol_a, logdet_a, alpha, beta, alpha_post, beta_post, chol_k, logdet_k):
    diag_a = np.sum(chol_a * chol_a, axis=1)
    e_log_sum = float(np.sum(np.log(beta_post) - digamma(alpha_post)))
    e_inv_sum = float(np.sum(alpha_post / beta_post))
    return (
        _const_term(y, m, diag_a, logdet_a, alpha_post, beta_post)
        + _theta_term(alpha, beta, e_log_sum, e_inv_sum, y.size)
        + _kernel_term(chol_k, logdet_k, m, chol_a)
    )


# ---------------------------------------------------------------------------
# E step: coordinate ascent on the variational factors.


def _factor_sweeps(
    y: np.ndarray,
    x: np.ndarray,
    alpha: float,
    beta: float,
    kernel_params: KernelParams,
    a_post: np.ndarray,
    b_post: np.ndarray,
    tol: float,
    max_sweeps: int,
    elbo_prev: float | None = None,
):
    """Mean-field coordinate ascent at fixed hyperparameters.

    Each sweep refreshes the Gaussian factor given the current noise
    means and then the per-datum inverse-gamma factors given the new
    Gaussian moments; both refreshes are exact maximizers of the bound,
    so the recorded values are non-decreasing.  The Gaussian covariance
    is never materialized inside the loop: its diagonal, log determinant
    and trace against the prior all follow from the Cholesky factor of
    ``K + diag(V)``.

    Returns ``(elbo, values, m, a_post, b_post, k, b_mat)`` where
    ``values`` holds the per-sweep bound values and ``k - k @ b_mat`` is
    the covariance of the final Gaussian factor.
    """
    n = y.size
    k, chol_k, logdet_k = _prior_chol(x, kernel_params)
    values = []
    m = np.zeros(n)
    b_mat = None
    for _ in range(max_sweeps):
        v = b_post / a_post
        regularized = k + np.diag(v)
        low = chol_lower(regularized)
        w = cho_solve((low, True), y, check_finite=False)
        m = k @ w
        b_mat = cho_solve((low, True), k, check_finite=False)
        diag_a = np.clip(np.diag(k) - np.einsum("ij,ji->i", k, b_mat), 0.0, None)
        logdet_a = (
            logdet_k
            + float(np.sum(np.log(v)))
            - 2.0 * float(np.sum(np.log(np.diag(low))))
        )
        a_post = np.full(n, alpha + 0.5)
        b_post = beta + 0.5 * ((y - m) ** 2 + diag_a)

        e_log_sum = float(np.sum(np.log(b_post) - digamma(a_post)))
        e_inv_sum = float(np.sum(a_post / b_post))
        # tr(K^-1 A) = n - tr(B) and m^T K^-1 m = w^T m for m = K w.
        kernel_val = -0.5 * logdet_k - 0.5 * (
            float(w @ m) + (n - float(np.trace(b_mat)))
        )
        elbo = (
            _const_term(y, m, diag_a, logdet_a, a_post, b_post)
            + _theta_term(alpha, beta, e_log_sum, e_inv_sum, n)
            + kernel_val
        )
        values.append(elbo)
        if elbo_prev is not None and abs(elbo - elbo_prev) < tol:
            elbo_prev = elbo
            break
        elbo_prev = elbo
    return elbo_prev, values, m, a_post, b_post, k, b_mat


def e_step(state: RobustState, tol: float = 1e-6, max_sweeps: int = 50) -> RobustState:
    """Coordinate-ascent sweeps over the variational factors.

    Each sweep first refreshes the Gaussian factor given the current
    per-datum noise means, then refreshes the per-datum inverse-gamma
    factors given the new Gaussian moments; both updates are exact
    maximizers of the bound, so recorded values are non-decreasing.
    After any sweep the shape factors equal ``alpha + 1/2``.

    Hyperparameters are not touched.  Stops when the bound improves by
    less than ``tol`` or after ``max_sweeps`` sweeps.
    """
    if not (tol > 0 and max_sweeps >= 1):
        raise ValueError("tol must be positive and max_sweeps at least 1")
    y = state.data.labels.astype(float)
    elbo, values, m, a_post, b_post, k, b_mat = _factor_sweeps(
        y,
        state.data.positions,
        state.likelihood.alpha,
        state.likelihood.beta,
        state.kernel_params,
        state.alpha_post,
        state.beta_post,
        tol,
        max_sweeps,
        elbo_prev=state.elbo,
    )
    cov = k - k @ b_mat
    cov = 0.5 * (cov + cov.T)
    return replace(
        state,
        mean=m,
        cov=cov,
        alpha_post=a_post,
        beta_post=b_post,
        elbo=elbo,
        trace=tuple(list(state.trace) + values),
    )


# ---------------------------------------------------------------------------
# M step: gradient ascent on the hyperparameters.


def m_step(
    state: RobustState,
    tol: float = 1e-6,
    max_iters: int = 8,
    fd_step: float = 1e-5,
    optimize_signal_variance: bool = True,
    candidate_sweeps: int = 12,
    candidate_tol: float = 1e-9,
) -> RobustState:
    """Gradient ascent on the hyperparameters in log space.

    Moves ``(alpha, beta)`` of the likelihood and the kernel parameters.
    Ascent directions come from central finite differences of the bound
    at the current variational factors with step ``fd_step`` per log
    coordinate.  A trial step is scored by re-converging the variational
    factors under the candidate hyperparameters (at most
    ``candidate_sweeps`` sweeps) and comparing the resulting bound, with
    backtracking until the bound improves; since the factors enter at
    their own optimum on both sides of the comparison, accepted updates
    never decrease the bound.  Scoring candidates this way lets the
    search take the large likelihood-parameter steps that a comparison
    at frozen factors would reject, which is what separates corrupted
    from clean observations in few rounds.

    The returned state carries the new hyperparameters and the accepted
    bound value but the incoming variational factors; the following E
    step re-derives the matching factors.  If no improving step exists
    at all, the input state is returned with ``stalled`` set instead of
    raising.

    Candidates are clamped to a fixed box in log space; in particular
    the noise-scale parameter ``beta`` never drops below 2.5e-2, which
    keeps perfectly explained observations from dragging the noise model
    into a degenerate zero-variance optimum.
    """
    if not (tol > 0 and max_iters >= 1 and fd_step > 0):
        raise ValueError("tol, max_iters and fd_step must be positive")
    if not (candidate_sweeps >= 1 and candidate_tol > 0):
        raise ValueError("candidate_sweeps and candidate_tol must be positive")
    y = state.data.labels.astype(float)
    x = state.data.positions
    n = y.size

    # Working copies of the factors; updated on accepted steps, never returned.
    m = state.mean
    chol_a = _chol_psd(state.cov)
    a_post = state.alpha_post
    b_post = state.beta_post
    diag_a = np.sum(chol_a * chol_a, axis=1)
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(chol_a))))
    const = _const_term(y, m, diag_a, logdet_a, a_post, b_post)
    e_log_sum = float(np.sum(np.log(b_post) - digamma(a_post)))
    e_inv_sum = float(np.sum(a_post / b_post))

    def theta_at(log_a, log_b):
        return _theta_term(math.exp(log_a), math.exp(log_b), e_log_sum, e_inv_sum, n)

    def kernel_at(log_ls, log_sv):
        params = KernelParams(
            length_scale_sq=math.exp(log_ls), signal_variance=math.exp(log_sv)
        )
        _, chol_k, logdet_k = _prior_chol(x, params)
        return _kernel_term(chol_k, logdet_k, m, chol_a)

    p = np.array(
        [
            math.log(state.likelihood.alpha),
            math.log(state.likelihood.beta),
            math.log(state.kernel_params.length_scale_sq),
            math.log(state.kernel_params.signal_variance),
        ]
    )
    f_cur = state.elbo
    trace = list(state.trace)
    stalled = False
    moved = False

    free = [0, 1, 2] + ([3] if optimize_signal_variance else [])
    for _ in range(max_iters):
        grad = np.zeros(4)
        for i in (0, 1):
            if i in free:
                hi = theta_at(*(p[:2] + _unit(2, i) * fd_step))
                lo = theta_at(*(p[:2] - _unit(2, i) * fd_step))
                grad[i] = (hi - lo) / (2.0 * fd_step)
        for i in (2, 3):
            if i in free:
                hi = kernel_at(*(p[2:] + _unit(2, i - 2) * fd_step))
                lo = kernel_at(*(p[2:] - _unit(2, i - 2) * fd_step))
                grad[i] = (hi - lo) / (2.0 * fd_step)

        gmax = float(np.max(np.abs(grad)))
        if gmax < 1e-12 * max(1.0, abs(f_cur)):
            break

        # First trial bounded to a 2.0 move in log space, then backtrack.
        step = 2.0 / gmax
        accepted = None
        for _ in range(14):
            p_try = np.clip(p + step * grad, _LOG_BOUNDS[:, 0], _LOG_BOUNDS[:, 1])
            if float(np.max(np.abs(p_try - p))) < 1e-14:
                step *= 0.5
                continue
            try:
                result = _factor_sweeps(
                    y,
                    x,
                    math.exp(p_try[0]),
                    math.exp(p_try[1]),
                    KernelParams(
                        length_scale_sq=math.exp(p_try[2]),
                        signal_variance=math.exp(p_try[3]),
                    ),
                    a_post,
                    b_post,
                    candidate_tol,
                    candidate_sweeps,
                )
            except NumericalError:
                step *= 0.5
                continue
            if math.isfinite(result[0]) and result[0] > f_cur:
                accepted = result
                break
            step *= 0.5
        if accepted is None:
            stalled = not moved
            break
        f_try, _, m, a_post, b_post, k, b_mat = accepted
        improvement = f_try - f_cur
        p, f_cur = p_try, f_try
        moved = True
        trace.append(f_cur)

        cov = k - k @ b_mat
        chol_a = _chol_psd(0.5 * (cov + cov.T))
        diag_a = np.sum(chol_a * chol_a, axis=1)
        logdet_a = 2.0 * float(np.sum(np.log(np.diag(chol_a))))
        const = _const_term(y, m, diag_a, logdet_a, a_post, b_post)
        e_log_sum = float(np.sum(np.log(b_post) - digamma(a_post)))
        e_inv_sum = float(np.sum(a_post / b_post))
        if improvement < tol:
            break

    if not moved:
        return replace(state, stalled=stalled)
    return replace(
        state,
        kernel_params=KernelParams(
            length_scale_sq=math.exp(p[2]), signal_variance=math.exp(p[3])
        ),
        likelihood=StudentTParams(alpha=math.exp(p[0]), beta=math.exp(p[1])),
        elbo=f_cur,
        stalled=stalled,
        trace=tuple(trace),
    )


def _unit(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


# ---------------------------------------------------------------------------
# Full fit.


def fit_robust(
    data: Dataset,
    likelihood: StudentTParams | None = None,
    kernel_params: KernelParams | None = None,
    tol: float = 1e-6,
    max_iters: int = 200,
    e_step_sweeps: int = 50,
    m_step_iters: int = 8,
    optimize_signal_variance: bool = True,
    random_init_seed: int | None = None,
) -> RobustState:
    """Alternate E and M steps until the bound converges.

    Defaults start from ``alpha = 2, beta = 4`` and a squared length
    scale of ``0.0625`` with unit signal variance; pass
    ``random_init_seed`` to draw the starting hyperparameters from wide
    positive ranges instead (log-uniform over [0.5, 8] for the
    likelihood pair, [0.01, 1] for the squared length scale and
    [0.25, 4] for the signal variance).

    The per-datum factors always start at shape 1, scale 1, with the
    Gaussian factor at the prior.  Stops when successive rounds change
    the bound by less than ``tol`` or after ``max_iters`` rounds;
    numerical failures carry the round at which they occurred.
    """
    n = len(data)
    if n > MAX_POINTS:
        raise ValueError(
            f"dataset has {n} points; the dense posterior is limited to {MAX_POINTS}"
        )
    if not (tol > 0 and max_iters >= 1):
        raise ValueError("tol must be positive and max_iters at least 1")

    if random_init_seed is not None:
        rng = np.random.default_rng(random_init_seed)

        def draw(lo, hi):
            return float(np.exp(rng.uniform(math.log(lo), math.log(hi))))

        likelihood = StudentTParams(alpha=draw(0.5, 8.0), beta=draw(0.5, 8.0))
        kernel_params = KernelParams(
            length_scale_sq=draw(0.01, 1.0), signal_variance=draw(0.25, 4.0)
        )
    else:
        likelihood = likelihood or StudentTParams(alpha=2.0, beta=4.0)
        kernel_params = kernel_params or KernelParams(length_scale_sq=0.0625)

    y = data.labels.astype(float)
    k, chol_k, logdet_k = _prior_chol(data.positions, kernel_params)
    mean = np.zeros(n)
    alpha_post = np.ones(n)
    beta_post = np.ones(n)
    elbo0 = _full_elbo(
        y, mean, chol_k, logdet_k, likelihood.alpha, likelihood.beta,
        alpha_post, beta_post, chol_k, logdet_k,
    )
    state = RobustState(
        data=data,
        kernel_params=kernel_params,
        likelihood=likelihood,
        mean=mean,
        cov=k,
        alpha_post=alpha_post,
        beta_post=beta_post,
        elbo=elbo0,
        trace=(elbo0,),
    )

    for round_no in range(1, max_iters + 1):
        previous = state.elbo
        try:
            state = e_step(state, tol=tol, max_sweeps=e_step_sweeps)
            state = m_step(
                state,
                tol=tol,
                max_iters=m_step_iters,
                optimize_signal_variance=optimize_signal_variance,
            )
        except NumericalError as exc:
            raise NumericalError(f"round {round_no}: {exc}") from exc
        state = replace(state, iterations=round_no)
        if abs(state.elbo - previous) < tol:
            break

    return state


# ---------------------------------------------------------------------------
# Prediction and reporting.


def _posterior_solve(state: RobustState):
    x = state.data.positions
    y = state.data.labels.astype(float)
    k = gram(x, state.kernel_params)
    diag = k.diagonal() + JITTER_SCALE * state.kernel_params.signal_variance
    k[np.diag_indices_from(k)] = diag
    k[np.diag_indices_from(k)] += state.noise_scales
    low = chol_lower(k)
    w = cho_solve((low, True), y, check_finite=False)
    return low, w


def robust_predict_at(state: RobustState, points: np.ndarray, with_variance: bool = True):
    """Predict at arbitrary points using the per-datum noise scales."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != state.data.dim:
        raise ValueError("query dimension does not match the training data")
    low, w = _posterior_solve(state)
    return predict_raw(
        state.data.positions, low, w, state.kernel_params, pts, with_variance
    )


def robust_predict(state: RobustState, grid: EvalGrid) -> PredictionField:
    """Predictive mean and variance over a grid.

    Identical to the homoscedastic predictor except that the shared noise
    variance is replaced by the per-datum posterior noise scales; with all
    scales equal the two predictors coincide.
    """
    mean, var = robust_predict_at(state, grid.points, with_variance=True)
    return PredictionField(grid=grid, mean=mean, variance=var)


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    """Per-datum noise scales next to positions and labels, the quantity
    inspected to flag false-positive contacts."""

    positions: np.ndarray
    labels: np.ndarray
    uncertainty: np.ndarray

    def to_csv(self, path) -> None:
        dim = self.positions.shape[1]
        names = ["x1", "x2", "x3"][:dim] + ["y", "u"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for p, y, u in zip(self.positions, self.labels, self.uncertainty):
                cells = [format(c, ".17g") for c in p]
                cells.append(str(int(y)))
                cells.append(format(u, ".17g"))
                fh.write(",".join(cells) + "\n")


def data_uncertainty(state: RobustState) -> UncertaintyReport:
    return UncertaintyReport(
        positions=state.data.positions,
        labels=state.data.labels,
        uncertainty=state.noise_scales,
    )


# ---------------------------------------------------------------------------
# Checkpoints.

_CHECKPOINT_FORMAT = "contactshape-robust-checkpoint"


def save_checkpoint(state: RobustState, path) -> None:
    """Write the state needed to resume prediction as JSON.

    The full posterior covariance is reduced to its diagonal; a state
    loaded back predicts identically but cannot continue the E/M
    iteration with the dense covariance.
    """
    payload = {
        "format": _CHECKPOINT_FORMAT,
        "version": 1,
        "dataset_sha256": state.data.content_hash(),
        "kernel_params": {
            "length_scale_sq": state.kernel_params.length_scale_sq,
            "signal_variance": state.kernel_params.signal_variance,
        },
        "likelihood": {
            "alpha": state.likelihood.alpha,
            "beta": state.likelihood.beta,
        },
        "mean": state.mean.tolist(),
        "cov_diag": np.diag(state.cov).tolist(),
        "alpha_post": state.alpha_post.tolist(),
        "beta_post": state.beta_post.tolist(),
        "elbo": state.elbo,
        "iterations": state.iterations,
        "stalled": state.stalled,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path, data: Dataset) -> RobustState:
    """Load a checkpoint against the dataset it was fitted to.

    Raises ``ValueError`` when the dataset hash does not match the
    checkpoint.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a robust-fit checkpoint")
    if payload["dataset_sha256"] != data.content_hash():
        raise ValueError(f"{path}: checkpoint was fitted to a different dataset")
    n = len(data)
    mean = np.asarray(payload["mean"], dtype=float)
    cov = np.diag(np.asarray(payload["cov_diag"], dtype=float))
    alpha_post = np.asarray(payload["alpha_post"], dtype=float)
    beta_post = np.asarray(payload["beta_post"], dtype=float)
    if mean.size != n:
        raise ValueError(f"{path}: checkpoint size {mean.size} does not match dataset {n}")
    return RobustState(
        data=data,
        kernel_params=KernelParams(**payload["kernel_params"]),
        likelihood=StudentTParams(**payload["likelihood"]),
        mean=mean,
        cov=cov,
        alpha_post=alpha_post,
        beta_post=beta_post,
        elbo=float(payload["elbo"]),
        iterations=int(payload["iterations"]),
        stalled=bool(payload["stalled"]),
    )
