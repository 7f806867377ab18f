"""Multi-trial comparison studies between the two estimators.

A study repeats the simulate-fit-evaluate cycle over consecutive seeds and
aggregates two quantities per estimator: the mean surface error against
the known shape, and the mean relative uncertainty of injected outliers.
Aggregation is a pure function of the per-trial records, so a report can
be regenerated exactly from stored records; trials are independent, which
keeps results identical whatever the worker-pool size.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .config import ExperimentConfig
from .data import Dataset
from .errors import ContactShapeError, NoOutliersError
from .gp import gpis_fit, predict_at
from .metrics import fp_detection, shape_error, two_sample_t_test
from .robust import RobustState, fit_robust, robust_predict_at
from .simulate import count_labels, generate_scenario
from .surface import level_set_from_mean


@dataclass(frozen=True)
class TrialRecord:
    """Everything retained from one trial."""

    seed: int
    n_points: int
    n_contact: int
    n_external: int
    n_internal: int
    n_injected: int
    error_gpis: float | None
    error_robust: float | None
    qo_gpis: float | None
    qo_robust: float | None
    robust_iterations: int
    robust_stalled: bool


def run_trial(config: ExperimentConfig, seed: int, estimator: str = "both") -> TrialRecord:
    """Simulate one dataset, fit the requested estimators, and score them.

    A trial whose random draws injected no outliers records no
    detectability ratios; that is expected at low outlier rates and such
    trials are simply excluded from the detectability aggregate.
    """
    data = generate_scenario(config.scenario(seed))
    grid = config.grid()
    n_contact, n_external, n_internal = count_labels(data)
    n_injected = int(np.sum(data.outlier_flags))

    error_gpis = error_robust = qo_gpis = qo_robust = None
    robust_iterations = 0
    robust_stalled = False

    if estimator in ("gpis", "both"):
        fit = gpis_fit(data, config.estimator.noise_variance, config.estimator.kernel_params())
        mean, _ = predict_at(fit, grid.points, with_variance=False)
        estimate = level_set_from_mean(grid, mean, config.band)
        error_gpis = shape_error(estimate, config.shape).mean_error
        _, train_var = predict_at(fit, data.positions, with_variance=True)
        qo_gpis = _detectability(train_var, data, config)

    if estimator in ("robust", "both"):
        state = fit_robust(
            data,
            likelihood=config.estimator.likelihood(),
            kernel_params=config.estimator.kernel_params(),
            tol=config.estimator.tol,
            max_iters=config.estimator.max_iters,
            e_step_sweeps=config.estimator.e_step_sweeps,
            m_step_iters=config.estimator.m_step_iters,
            optimize_signal_variance=config.estimator.optimize_signal_variance,
        )
        robust_iterations = state.iterations
        robust_stalled = state.stalled
        mean, _ = robust_predict_at(state, grid.points, with_variance=False)
        estimate = level_set_from_mean(grid, mean, config.band)
        error_robust = shape_error(estimate, config.shape).mean_error
        qo_robust = _detectability(state.noise_scales, data, config)

    return TrialRecord(
        seed=seed,
        n_points=len(data),
        n_contact=n_contact,
        n_external=n_external,
        n_internal=n_internal,
        n_injected=n_injected,
        error_gpis=error_gpis,
        error_robust=error_robust,
        qo_gpis=qo_gpis,
        qo_robust=qo_robust,
        robust_iterations=robust_iterations,
        robust_stalled=robust_stalled,
    )


def _detectability(uncertainties, data: Dataset, config: ExperimentConfig) -> float | None:
    try:
        result = fp_detection(
            uncertainties, data.positions, data.outlier_flags,
            neighborhood_radius=config.neighborhood_radius,
        )
        return result.mean_ratio
    except NoOutliersError:
        return None


def aggregate(records: list[TrialRecord]) -> dict:
    """Pure aggregation of trial records into a report dictionary.

    Surface errors are compared across all trials; detectability ratios
    only across trials where both estimators scored at least one outlier.
    The t statistics are oriented as (homoscedastic minus robust), so a
    positive statistic favours the robust model.
    """
    if not records:
        raise ValueError("no trial records to aggregate")
    records = sorted(records, key=lambda r: r.seed)
    report: dict = {
        "trials": len(records),
        "seeds": [r.seed for r in records],
        "stalled_trials": [r.seed for r in records if r.robust_stalled],
    }

    err_g = [r.error_gpis for r in records if r.error_gpis is not None]
    err_r = [r.error_robust for r in records if r.error_robust is not None]
    section: dict = {}
    if err_g:
        section["gpis"] = {"mean": float(np.mean(err_g)), "values": err_g}
    if err_r:
        section["robust"] = {"mean": float(np.mean(err_r)), "values": err_r}
    if len(err_g) >= 2 and len(err_r) >= 2:
        test = two_sample_t_test(err_g, err_r)
        section["t_test"] = _test_dict(test)
    report["shape_error"] = section

    paired = [
        r for r in records if r.qo_gpis is not None and r.qo_robust is not None
    ]
    qo_section: dict = {"n_scored_trials": len(paired)}
    if paired:
        qo_g = [r.qo_gpis for r in paired]
        qo_r = [r.qo_robust for r in paired]
        qo_section["gpis"] = {"mean": float(np.mean(qo_g)), "values": qo_g}
        qo_section["robust"] = {"mean": float(np.mean(qo_r)), "values": qo_r}
        if len(paired) >= 2:
            qo_section["t_test"] = _test_dict(two_sample_t_test(qo_g, qo_r))
    report["fp_detection"] = qo_section
    return report


def _test_dict(test) -> dict:
    return {
        "statistic": test.statistic,
        "dof": test.dof,
        "p_value": test.p_value,
        "mean_a": test.mean_a,
        "mean_b": test.mean_b,
    }


def _trial_args(args) -> TrialRecord:
    config, seed, estimator = args
    return run_trial(config, seed, estimator)


def run_study(
    config: ExperimentConfig,
    estimator: str = "both",
    trials: int | None = None,
    base_seed: int | None = None,
    jobs: int = 1,
    progress=None,
) -> tuple[list[TrialRecord], dict]:
    """Run ``trials`` independent trials and aggregate them.

    Seeds are consecutive from ``base_seed``.  With ``jobs > 1`` the
    trials are distributed over a process pool; records keep seed order
    either way.  A failing trial aborts the study with the failing seed
    attached to the error.
    """
    n_trials = config.trials if trials is None else trials
    seed0 = config.base_seed if base_seed is None else base_seed
    if n_trials < 1:
        raise ValueError("a study needs at least one trial")
    seeds = [seed0 + k for k in range(n_trials)]

    records: list[TrialRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = iter(pool.map(_trial_args, [(config, s, estimator) for s in seeds]))
            for seed in seeds:
                try:
                    record = next(results)
                except (ContactShapeError, ValueError) as exc:
                    raise type(exc)(f"trial seed {seed}: {exc}") from exc
                records.append(record)
                if progress:
                    progress(record)
    else:
        for seed in seeds:
            try:
                record = run_trial(config, seed, estimator)
            except (ContactShapeError, ValueError) as exc:
                raise type(exc)(f"trial seed {seed}: {exc}") from exc
            records.append(record)
            if progress:
                progress(record)
    return records, aggregate(records)


def record_to_dict(record: TrialRecord) -> dict:
    return asdict(record)


def record_from_dict(d: dict) -> TrialRecord:
    return TrialRecord(**d)
