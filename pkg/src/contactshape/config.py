"""Experiment configuration: INI parsing with a strict schema.

One INI file describes an experiment end to end: the scenario (shape,
region, sampling), estimator settings, prediction grid, surface band,
metric parameters, study size, and flight-log ingestion settings.  Unknown
sections or keys are rejected rather than ignored, and every default is
materialized at load time so a manifest can echo the fully resolved
configuration.

Defaults follow the reference setup: kernel squared length scale 0.0625
with unit signal variance, likelihood shape 2 and scale 4, grid spacing
0.02 in 2D and 0.05 in 3D, acceleration threshold 0.6 g, interior depth
0.1 m, band 0.01, neighbourhood radius 0.5 m.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

from .flightlog import DetectionConfig, VehicleGeometry
from .geometry import (
    EvalGrid,
    Region,
    ShapeModel,
    box,
    box_union_mesh,
    circle,
    cross,
    load_off,
    make_grid,
    square,
)
from .gp import KernelParams
from .robust import StudentTParams
from .simulate import ScenarioConfig

_SCHEMA: dict[str, set[str]] = {
    "scenario": {
        "shape", "region", "center", "radius", "side", "arm_length", "arm_width",
        "size", "off_file", "boxes", "surface_spacing", "n_free", "outlier_rate",
        "outlier_pair_distance",
    },
    "estimator": {
        "which", "noise_variance", "length_scale_sq", "signal_variance",
        "alpha", "beta", "tol", "max_iters", "e_step_sweeps", "m_step_iters",
        "optimize_signal_variance",
    },
    "grid": {"spacing"},
    "surface": {"band"},
    "metrics": {"neighborhood_radius"},
    "study": {"trials", "base_seed"},
    "flight": {
        "accel_threshold", "contact_rate", "free_rate", "subtract_gravity",
        "vehicle_radius", "vehicle_half_height", "thickness",
    },
}

_ESTIMATORS = ("gpis", "robust", "both")


@dataclass(frozen=True)
class EstimatorConfig:
    which: str = "both"
    noise_variance: float = 0.01
    length_scale_sq: float = 0.0625
    signal_variance: float = 1.0
    alpha: float = 2.0
    beta: float = 4.0
    tol: float = 1e-6
    max_iters: int = 200
    e_step_sweeps: int = 50
    m_step_iters: int = 8
    optimize_signal_variance: bool = True

    def __post_init__(self):
        if self.which not in _ESTIMATORS:
            raise ValueError(f"estimator must be one of {_ESTIMATORS}, got {self.which!r}")

    def kernel_params(self) -> KernelParams:
        return KernelParams(
            length_scale_sq=self.length_scale_sq, signal_variance=self.signal_variance
        )

    def likelihood(self) -> StudentTParams:
        return StudentTParams(alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Fully resolved experiment settings."""

    region: Region
    shape: ShapeModel | None
    surface_spacing: float
    n_free: int
    outlier_rate: float
    outlier_pair_distance: float
    estimator: EstimatorConfig
    grid_spacing: float
    band: float
    neighborhood_radius: float
    trials: int
    base_seed: int
    detection: DetectionConfig
    vehicle: VehicleGeometry

    def scenario(self, seed: int) -> ScenarioConfig:
        if self.shape is None:
            raise ValueError("this configuration defines no shape to simulate")
        return ScenarioConfig(
            shape=self.shape,
            region=self.region,
            surface_spacing=self.surface_spacing,
            n_free=self.n_free,
            outlier_rate=self.outlier_rate,
            outlier_pair_distance=self.outlier_pair_distance,
            seed=seed,
        )

    def grid(self) -> EvalGrid:
        return make_grid(self.region, self.grid_spacing)

    def echo(self) -> dict:
        """A plain, JSON-ready view of every resolved setting."""
        shape_desc: dict | None = None
        if self.shape is not None:
            shape_desc = {"kind": self.shape.kind.value, "center": self.shape.center.tolist()}
            for key, value in self.shape.params.items():
                if isinstance(value, np.ndarray):
                    if key in ("vertices", "faces"):
                        shape_desc[key + "_count"] = int(value.shape[0])
                    else:
                        shape_desc[key] = value.tolist()
                else:
                    shape_desc[key] = value
        return {
            "scenario": {
                "region_lower": self.region.lower.tolist(),
                "region_upper": self.region.upper.tolist(),
                "shape": shape_desc,
                "surface_spacing": self.surface_spacing,
                "n_free": self.n_free,
                "outlier_rate": self.outlier_rate,
                "outlier_pair_distance": self.outlier_pair_distance,
            },
            "estimator": {
                "which": self.estimator.which,
                "noise_variance": self.estimator.noise_variance,
                "length_scale_sq": self.estimator.length_scale_sq,
                "signal_variance": self.estimator.signal_variance,
                "alpha": self.estimator.alpha,
                "beta": self.estimator.beta,
                "tol": self.estimator.tol,
                "max_iters": self.estimator.max_iters,
                "e_step_sweeps": self.estimator.e_step_sweeps,
                "m_step_iters": self.estimator.m_step_iters,
                "optimize_signal_variance": self.estimator.optimize_signal_variance,
            },
            "grid": {"spacing": self.grid_spacing},
            "surface": {"band": self.band},
            "metrics": {"neighborhood_radius": self.neighborhood_radius},
            "study": {"trials": self.trials, "base_seed": self.base_seed},
            "flight": {
                "accel_threshold": self.detection.accel_threshold,
                "contact_rate": self.detection.contact_rate,
                "free_rate": self.detection.free_rate,
                "subtract_gravity": self.detection.subtract_gravity,
                "vehicle_radius": self.vehicle.radius,
                "vehicle_half_height": self.vehicle.half_height,
                "thickness": self.vehicle.thickness,
            },
        }


def load_config(path) -> ExperimentConfig:
    """Parse and validate an INI experiment file.

    Raises ``ValueError`` for unknown sections or keys, malformed values,
    and inconsistent combinations (for example a 3D grid spacing on a 2D
    region).  Missing keys take the documented defaults.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise OSError(f"cannot read config file {path}")

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")

    scn = parser["scenario"] if parser.has_section("scenario") else {}
    region = _parse_region(scn)
    shape = _parse_shape(scn, region)

    est_raw = parser["estimator"] if parser.has_section("estimator") else {}
    estimator = EstimatorConfig(
        which=_get(est_raw, "which", "both", str),
        noise_variance=_get(est_raw, "noise_variance", 0.01, float),
        length_scale_sq=_get(est_raw, "length_scale_sq", 0.0625, float),
        signal_variance=_get(est_raw, "signal_variance", 1.0, float),
        alpha=_get(est_raw, "alpha", 2.0, float),
        beta=_get(est_raw, "beta", 4.0, float),
        tol=_get(est_raw, "tol", 1e-6, float),
        max_iters=_get(est_raw, "max_iters", 200, int),
        e_step_sweeps=_get(est_raw, "e_step_sweeps", 50, int),
        m_step_iters=_get(est_raw, "m_step_iters", 8, int),
        optimize_signal_variance=_get_bool(est_raw, "optimize_signal_variance", True),
    )

    grid_raw = parser["grid"] if parser.has_section("grid") else {}
    default_spacing = 0.02 if region.dim == 2 else 0.05
    grid_spacing = _get(grid_raw, "spacing", default_spacing, float)

    surf_raw = parser["surface"] if parser.has_section("surface") else {}
    met_raw = parser["metrics"] if parser.has_section("metrics") else {}
    study_raw = parser["study"] if parser.has_section("study") else {}
    flight_raw = parser["flight"] if parser.has_section("flight") else {}

    detection = DetectionConfig(
        accel_threshold=_get(flight_raw, "accel_threshold", 0.6, float),
        contact_rate=_get(flight_raw, "contact_rate", 25.0, float),
        free_rate=_get(flight_raw, "free_rate", 0.5, float),
        subtract_gravity=_get_bool(flight_raw, "subtract_gravity", False),
    )
    vehicle = VehicleGeometry(
        radius=_get(flight_raw, "vehicle_radius", 0.25, float),
        half_height=_get(flight_raw, "vehicle_half_height", 0.05, float),
        thickness=_get(flight_raw, "thickness", 0.1, float),
    )

    config = ExperimentConfig(
        region=region,
        shape=shape,
        surface_spacing=_get(scn, "surface_spacing", 0.01, float),
        n_free=_get(scn, "n_free", 0, int),
        outlier_rate=_get(scn, "outlier_rate", 0.02, float),
        outlier_pair_distance=_get(scn, "outlier_pair_distance", 0.1, float),
        estimator=estimator,
        grid_spacing=grid_spacing,
        band=_get(surf_raw, "band", 0.01, float),
        neighborhood_radius=_get(met_raw, "neighborhood_radius", 0.5, float),
        trials=_get(study_raw, "trials", 50, int),
        base_seed=_get(study_raw, "base_seed", 0, int),
        detection=detection,
        vehicle=vehicle,
    )
    # Surface a bad grid/region combination now instead of mid-run.
    config.grid()
    return config


def _get(section, key: str, default, cast):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r}") from exc


def _get_bool(section, key: str, default: bool) -> bool:
    if key not in section:
        return default
    raw = section[key].strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"config key {key!r}: cannot parse {raw!r} as a boolean")


def _floats(section, key: str) -> list[float]:
    try:
        return [float(tok) for tok in section[key].replace(",", " ").split()]
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: expected a list of numbers") from exc


def _parse_region(scn) -> Region:
    if "region" not in scn:
        raise ValueError("config needs a region under [scenario] (lo hi pairs per axis)")
    values = _floats(scn, "region")
    if len(values) not in (4, 6):
        raise ValueError("region must list 2 or 3 (lo, hi) pairs")
    lower = values[0::2]
    upper = values[1::2]
    return Region(np.asarray(lower), np.asarray(upper))


def _parse_shape(scn, region: Region) -> ShapeModel | None:
    kind = scn.get("shape", "").strip().lower() if "shape" in scn else ""
    if not kind:
        return None
    center = _floats(scn, "center") if "center" in scn else None
    if center is not None and len(center) != region.dim:
        raise ValueError(f"center must have {region.dim} coordinates")

    def need(key: str) -> float:
        if key not in scn:
            raise ValueError(f"shape {kind!r} requires key {key!r}")
        return _get(scn, key, None, float)

    if kind == "circle":
        return circle(need("radius"), center)
    if kind == "square":
        return square(need("side"), center)
    if kind == "cross":
        return cross(need("arm_length"), need("arm_width"), center)
    if kind == "box":
        size = _floats(scn, "size") if "size" in scn else None
        if size is None or len(size) != 3:
            raise ValueError("shape 'box' requires key 'size' with three lengths")
        return box(size, center)
    if kind == "mesh":
        if "off_file" not in scn:
            raise ValueError("shape 'mesh' requires key 'off_file'")
        return load_off(scn["off_file"].strip(), center)
    if kind == "boxes":
        if "boxes" not in scn:
            raise ValueError("shape 'boxes' requires key 'boxes'")
        entries = []
        for part in scn["boxes"].split(";"):
            part = part.strip()
            if not part:
                continue
            values = [float(tok) for tok in part.replace(",", " ").split()]
            if len(values) != 6:
                raise ValueError("each boxes entry needs six numbers: sx sy sz cx cy cz")
            entries.append((values[:3], values[3:]))
        return box_union_mesh(entries, center)
    raise ValueError(f"unknown shape kind {kind!r}")
