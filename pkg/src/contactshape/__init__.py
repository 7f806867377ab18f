"""Object shape estimation from sparse contact observations.

The package models an object as the zero level set of a scalar potential
with a Gaussian-process prior, fitted to ternary labels (inside, surface,
outside) collected by touch.  Two estimators are provided: a homoscedastic
baseline and a robust variant with per-datum Student's-t noise, whose
posterior noise scales expose false-positive contacts.  Around them sit
exact shape oracles, scenario simulation, flight-log ingestion, metrics,
and a command-line pipeline.
"""

from .data import Dataset, LabeledPoint, Provenance
from .errors import (
    ContactShapeError,
    DegenerateContactError,
    EmptyEstimateError,
    FlightLogParseError,
    NoOutliersError,
    NumericalError,
    UnsupportedShapeError,
)
from .flightlog import (
    DetectionConfig,
    ImuSample,
    IngestSummary,
    VehicleGeometry,
    body_to_ground,
    build_dataset,
    detect_events,
    estimate_normal,
    ingest_log,
    localize_contact,
    read_flight_log,
    synthesize_internal,
)
from .geometry import (
    EvalGrid,
    Region,
    ShapeKind,
    ShapeModel,
    box,
    box_union_mesh,
    boundary_polygon,
    circle,
    cross,
    load_off,
    make_grid,
    polymesh,
    signed_distance,
    square,
    surface_samples,
)
from .gp import (
    GpisFit,
    KernelParams,
    PredictionField,
    cross_covariance,
    gpis_fit,
    gpis_predict,
    gram,
    kernel,
    predict_at,
)
from .metrics import (
    FpDetectionResult,
    ShapeErrorResult,
    TTestResult,
    fp_detection,
    regularized_incomplete_beta,
    shape_error,
    student_t_tail,
    two_sample_t_test,
)
from .robust import (
    RobustState,
    StudentTParams,
    UncertaintyReport,
    data_uncertainty,
    e_step,
    fit_robust,
    inv_gamma_pdf,
    load_checkpoint,
    m_step,
    robust_predict,
    robust_predict_at,
    save_checkpoint,
    scale_mixture_check,
    student_t_pdf,
)
from .simulate import ScenarioConfig, count_labels, generate_scenario
from .surface import (
    SurfaceEstimate,
    export_surface,
    extract_level_set,
    level_set_from_mean,
)

__version__ = "0.1.0"

__all__ = [
    "ContactShapeError", "UnsupportedShapeError", "NumericalError",
    "DegenerateContactError", "EmptyEstimateError", "NoOutliersError",
    "FlightLogParseError",
    "Region", "EvalGrid", "ShapeKind", "ShapeModel", "make_grid",
    "signed_distance", "surface_samples", "boundary_polygon",
    "square", "circle", "cross", "box", "polymesh", "box_union_mesh", "load_off",
    "LabeledPoint", "Dataset", "Provenance",
    "KernelParams", "GpisFit", "PredictionField", "kernel", "gram",
    "cross_covariance", "gpis_fit", "gpis_predict", "predict_at",
    "StudentTParams", "RobustState", "UncertaintyReport",
    "student_t_pdf", "inv_gamma_pdf", "scale_mixture_check",
    "e_step", "m_step", "fit_robust", "robust_predict", "robust_predict_at",
    "data_uncertainty", "save_checkpoint", "load_checkpoint",
    "SurfaceEstimate", "extract_level_set", "level_set_from_mean", "export_surface",
    "ScenarioConfig", "generate_scenario", "count_labels",
    "ImuSample", "VehicleGeometry", "DetectionConfig", "IngestSummary",
    "detect_events", "body_to_ground", "estimate_normal", "localize_contact",
    "synthesize_internal", "build_dataset", "ingest_log", "read_flight_log",
    "ShapeErrorResult", "FpDetectionResult", "TTestResult",
    "shape_error", "fp_detection", "two_sample_t_test",
    "regularized_incomplete_beta", "student_t_tail",
    "__version__",
]
