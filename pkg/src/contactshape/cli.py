"""Command-line entry points.

Four subcommands cover the pipeline: ``simulate`` writes labeled datasets,
``fit-predict`` fits one dataset and writes fields, surfaces and
uncertainty reports, ``study`` runs a multi-trial comparison, ``ingest``
converts flight logs into datasets.  Every run writes a ``manifest.json``
listing the resolved configuration and the SHA-256 of each output, plus a
hash over that whole record, so two runs can be compared byte for byte.

Exit codes: 0 on success, 2 for configuration or input validation
problems, 3 for numerical failures, 4 for file-system problems.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .data import Dataset, Provenance
from .errors import ContactShapeError, NumericalError
from .flightlog import ingest_log, read_flight_log
from .gp import gpis_fit, gpis_predict, predict_at
from .robust import (
    UncertaintyReport,
    data_uncertainty,
    fit_robust,
    robust_predict,
    save_checkpoint,
)
from .simulate import generate_scenario
from .study import record_to_dict, run_study
from .surface import export_surface, extract_level_set

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(args.out)
    written: list[Path] = []
    try:
        config = load_config(args.config)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.handler(args, config, out_dir, written)
        _write_manifest(out_dir, args.command, config, outputs)
    except NumericalError as exc:
        _cleanup(written)
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContactShapeError, ValueError) as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contactshape",
        description="Shape estimation from contact observations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate labeled datasets")
    _common(sim)
    sim.add_argument("--trials", type=int, default=1, help="datasets to generate")
    sim.add_argument("--seed", type=int, default=None, help="base seed override")
    sim.set_defaults(handler=_cmd_simulate)

    fit = sub.add_parser("fit-predict", help="fit a dataset and write predictions")
    _common(fit)
    fit.add_argument("--data", required=True, help="dataset CSV to fit")
    fit.add_argument(
        "--estimator", choices=("gpis", "robust", "both"), default=None,
        help="estimator override",
    )
    fit.set_defaults(handler=_cmd_fit_predict)

    study = sub.add_parser("study", help="run a multi-trial comparison")
    _common(study)
    study.add_argument("--trials", type=int, default=None, help="trial count override")
    study.add_argument("--seed", type=int, default=None, help="base seed override")
    study.add_argument(
        "--estimator", choices=("gpis", "robust", "both"), default=None,
        help="estimator override",
    )
    study.add_argument("--jobs", type=int, default=1, help="worker processes")
    study.set_defaults(handler=_cmd_study)

    ingest = sub.add_parser("ingest", help="convert flight logs to a dataset")
    _common(ingest)
    ingest.add_argument("logs", nargs="+", help="flight log CSV files")
    ingest.set_defaults(handler=_cmd_ingest)
    return parser


def _common(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--config", required=True, help="experiment INI file")
    cmd.add_argument("--out", required=True, help="output directory")


# ---------------------------------------------------------------------------
# Subcommand bodies.  Each returns a list of written output paths.


def _cmd_simulate(args, config: ExperimentConfig, out_dir: Path, written):
    base = config.base_seed if args.seed is None else args.seed
    if args.trials < 1:
        raise ValueError("--trials must be at least 1")
    outputs = []
    for k in range(args.trials):
        seed = base + k
        data = generate_scenario(config.scenario(seed))
        path = out_dir / f"dataset_{seed}.csv"
        _track(written, path)
        data.to_csv(path)
        outputs.append(path)
        print(f"dataset seed {seed}: {len(data)} points -> {path}")
    return outputs


def _cmd_fit_predict(args, config: ExperimentConfig, out_dir: Path, written):
    provenance = Provenance.SIMULATED if config.shape is not None else Provenance.FLIGHT_LOG
    data = Dataset.read_csv(args.data, config.region, provenance)
    if int((data.labels == 0).sum()) == 0:
        raise ValueError("dataset has no surface points; nothing to fit")
    which = args.estimator or config.estimator.which
    grid = config.grid()
    outputs = []

    if which in ("gpis", "both"):
        fit = gpis_fit(data, config.estimator.noise_variance, config.estimator.kernel_params())
        field = gpis_predict(fit, grid)
        outputs += _write_field(out_dir, "gpis", field, config, written)
        _, train_var = predict_at(fit, data.positions, with_variance=True)
        upath = out_dir / "uncertainty_gpis.csv"
        _track(written, upath)
        UncertaintyReport(
            positions=data.positions, labels=data.labels, uncertainty=train_var
        ).to_csv(upath)
        outputs.append(upath)
        print(f"gpis: fitted {len(data)} points")

    if which in ("robust", "both"):
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
        field = robust_predict(state, grid)
        outputs += _write_field(out_dir, "robust", field, config, written)
        upath = out_dir / "uncertainty_robust.csv"
        _track(written, upath)
        data_uncertainty(state).to_csv(upath)
        outputs.append(upath)
        cpath = out_dir / "checkpoint_robust.json"
        _track(written, cpath)
        save_checkpoint(state, cpath)
        outputs.append(cpath)
        stalled = " (hyperparameter search stalled)" if state.stalled else ""
        print(
            f"robust: {state.iterations} rounds, bound {state.elbo:.6f}{stalled}"
        )
    return outputs


def _write_field(out_dir: Path, tag: str, field, config, written):
    fpath = out_dir / f"field_{tag}.csv"
    _track(written, fpath)
    field.to_csv(fpath)
    spath = out_dir / f"surface_{tag}.csv"
    _track(written, spath)
    estimate = extract_level_set(field, config.band)
    export_surface(estimate, spath)
    print(f"{tag}: surface band points {len(estimate)}")
    return [fpath, spath]


def _cmd_study(args, config: ExperimentConfig, out_dir: Path, written):
    estimator = args.estimator or config.estimator.which
    if args.jobs < 1:
        raise ValueError("--jobs must be at least 1")

    def progress(record):
        print(
            f"trial seed {record.seed}: n={record.n_points} "
            f"err_gpis={_fmt(record.error_gpis)} err_robust={_fmt(record.error_robust)} "
            f"qo_gpis={_fmt(record.qo_gpis)} qo_robust={_fmt(record.qo_robust)}"
        )
        sys.stdout.flush()

    records, report = run_study(
        config,
        estimator=estimator,
        trials=args.trials,
        base_seed=args.seed,
        jobs=args.jobs,
        progress=progress,
    )
    trials_path = out_dir / "trials.jsonl"
    _track(written, trials_path)
    with open(trials_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")
    report_path = out_dir / "report.json"
    _track(written, report_path)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return [trials_path, report_path]


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4g}"


def _cmd_ingest(args, config: ExperimentConfig, out_dir: Path, written):
    samples = []
    for log_path in args.logs:
        samples.append(read_flight_log(log_path))
    all_points = []
    totals = {"n_contact": 0, "n_external": 0, "n_internal": 0, "n_clipped": 0}
    datasets = []
    for log in samples:
        dataset, summary = ingest_log(log, config.detection, config.vehicle, config.region)
        datasets.append(dataset)
        for key in totals:
            totals[key] += getattr(summary, key)
    merged = _merge(datasets)
    dpath = out_dir / "dataset.csv"
    _track(written, dpath)
    merged.to_csv(dpath)
    spath = out_dir / "summary.json"
    _track(written, spath)
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump({**totals, "n_points": len(merged)}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        f"ingested {len(args.logs)} log(s): {totals['n_contact']} contacts, "
        f"{totals['n_external']} free, {totals['n_internal']} interior, "
        f"{totals['n_clipped']} clipped -> {dpath}"
    )
    return [dpath, spath]


def _merge(datasets):
    if len(datasets) == 1:
        return datasets[0]
    return Dataset(
        positions=np.concatenate([d.positions for d in datasets]),
        labels=np.concatenate([d.labels for d in datasets]),
        normals=np.concatenate([d.normals for d in datasets]),
        outlier_flags=np.concatenate([d.outlier_flags for d in datasets]),
        region=datasets[0].region,
        provenance=datasets[0].provenance,
    )


# ---------------------------------------------------------------------------
# Manifests.


def _track(written: list, path: Path) -> None:
    written.append(path)


def _cleanup(written: list) -> None:
    for path in written:
        try:
            Path(path).unlink(missing_ok=True)
        except OSError:
            pass


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: ExperimentConfig, outputs) -> None:
    entries = [
        {"path": str(Path(p).relative_to(out_dir)), "sha256": _sha256(Path(p))}
        for p in outputs
    ]
    core = {"command": command, "config": config.echo(), "outputs": entries}
    manifest_hash = hashlib.sha256(
        json.dumps(core, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    manifest = {
        **core,
        "manifest_hash": manifest_hash,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


if __name__ == "__main__":
    sys.exit(main())
