"""Turning quadcopter flight logs into labeled contact datasets.

A log is a time-ordered sequence of IMU samples (body-frame acceleration,
attitude, position).  Samples whose acceleration magnitude exceeds a
threshold are collision events; the acceleration direction, rotated to the
ground frame, estimates the contact normal, and the contact point is
localized by stepping from the vehicle centre along the negative normal by
the vehicle radius (side hits) or half-height (top and bottom hits).  Each
contact also synthesizes one interior point a fixed depth behind the
surface, and sub-threshold samples contribute sparse free-space points at
the vehicle position.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, LabeledPoint, Provenance
from .errors import DegenerateContactError, FlightLogParseError
from .geometry import Region


@dataclass(frozen=True, eq=False)
class ImuSample:
    """One log row: time, body-frame acceleration in g units, attitude
    (roll, pitch, yaw in radians), and ground-frame position in metres."""

    t: float
    accel_body: np.ndarray
    roll: float
    pitch: float
    yaw: float
    position: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.accel_body, dtype=float)
        p = np.asarray(self.position, dtype=float)
        if a.shape != (3,) or p.shape != (3,):
            raise ValueError("acceleration and position must be 3-d vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
            raise ValueError("acceleration and position must be finite")
        object.__setattr__(self, "accel_body", a)
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class VehicleGeometry:
    """Collision geometry of the vehicle, modeled as a disc: ``radius``
    to the lateral surface, ``half_height`` to top and bottom, and the
    depth ``thickness`` at which interior points are synthesized behind
    a contact."""

    radius: float = 0.25
    half_height: float = 0.05
    thickness: float = 0.1

    def __post_init__(self):
        if not (self.radius > 0 and self.half_height > 0 and self.thickness > 0):
            raise ValueError("vehicle dimensions must be positive")


@dataclass(frozen=True)
class DetectionConfig:
    """Event detection settings.

    ``accel_threshold`` (g) separates collisions from free flight.
    ``contact_rate`` and ``free_rate`` (Hz) bound how often contact and
    free-space points are emitted.  When ``subtract_gravity`` is set the
    body acceleration is first corrected by removing the rotated gravity
    reaction (one g along the ground vertical); leave it off for logs
    whose accelerations are already gravity-compensated.
    """

    accel_threshold: float = 0.6
    contact_rate: float = 25.0
    free_rate: float = 0.5
    subtract_gravity: bool = False

    def __post_init__(self):
        if not (self.accel_threshold > 0 and self.contact_rate > 0 and self.free_rate > 0):
            raise ValueError("threshold and rates must be positive")


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def attitude_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Body-to-ground rotation, composed as Rx(roll) Ry(pitch) Rz(yaw)
    from right-handed single-axis rotations."""
    return _rot_x(roll) @ _rot_y(pitch) @ _rot_z(yaw)


def body_to_ground(accel_body, roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotate a body-frame acceleration into the ground frame."""
    a = np.asarray(accel_body, dtype=float)
    if a.shape != (3,):
        raise ValueError("acceleration must be a 3-d vector")
    return attitude_matrix(roll, pitch, yaw) @ a


def effective_body_accel(sample: ImuSample, config: DetectionConfig) -> np.ndarray:
    accel = sample.accel_body
    if config.subtract_gravity:
        rot = attitude_matrix(sample.roll, sample.pitch, sample.yaw)
        accel = accel - rot.T @ np.array([0.0, 0.0, 1.0])
    return accel


def detect_events(
    log: list[ImuSample], config: DetectionConfig
) -> list[tuple[ImuSample, int]]:
    """Classify log samples into contact events (label 0) and free-space
    samples (label +1), rate-limited per kind.

    A super-threshold sample opens a contact event; further super-threshold
    samples within ``1 / contact_rate`` seconds belong to the same event
    and are dropped.  Sub-threshold samples are emitted at most every
    ``1 / free_rate`` seconds.  The first sample of each kind is always
    emitted.
    """
    if len(log) == 0:
        raise ValueError("flight log is empty")
    t_prev = -math.inf
    for sample in log:
        if sample.t < t_prev:
            raise ValueError(f"timestamps must be non-decreasing (t = {sample.t})")
        t_prev = sample.t

    events: list[tuple[ImuSample, int]] = []
    last_contact = -math.inf
    last_free = -math.inf
    contact_interval = 1.0 / config.contact_rate
    free_interval = 1.0 / config.free_rate
    for sample in log:
        magnitude = float(np.linalg.norm(effective_body_accel(sample, config)))
        if magnitude > config.accel_threshold:
            if sample.t - last_contact >= contact_interval:
                events.append((sample, 0))
                last_contact = sample.t
        else:
            if sample.t - last_free >= free_interval:
                events.append((sample, 1))
                last_free = sample.t
    return events


def estimate_normal(accel_ground, y: int) -> np.ndarray:
    """Unit surface normal from a ground-frame contact acceleration.

    Contacts (y = 0) return the normalized acceleration direction, which
    points away from the obstacle; other labels return the zero vector.
    A zero contact acceleration has no direction and raises
    :class:`DegenerateContactError`.
    """
    a = np.asarray(accel_ground, dtype=float)
    if y != 0:
        return np.zeros(3)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        raise DegenerateContactError("contact sample has zero acceleration")
    return a / norm


def localize_contact(position, normal, geometry: VehicleGeometry) -> np.ndarray:
    """Project the vehicle position onto the obstacle surface.

    Steps along the negative normal by the vehicle radius when the normal
    is mostly horizontal (a side hit on the lateral surface) and by the
    half-height when it is mostly vertical (a top or bottom hit); ties go
    to the side branch.
    """
    x = np.asarray(position, dtype=float)
    n = np.asarray(normal, dtype=float)
    if x.shape != (3,) or n.shape != (3,):
        raise ValueError("position and normal must be 3-d vectors")
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("normal must be a unit vector")
    if max(abs(n[0]), abs(n[1])) >= abs(n[2]):
        return x - geometry.radius * n
    return x - geometry.half_height * n


def synthesize_internal(contact_point, normal, thickness: float) -> np.ndarray:
    """Interior point one ``thickness`` behind the contact along the
    negative normal."""
    if not (thickness > 0 and math.isfinite(thickness)):
        raise ValueError("thickness must be positive")
    return np.asarray(contact_point, dtype=float) - thickness * np.asarray(normal, dtype=float)


@dataclass(frozen=True)
class IngestSummary:
    """Bookkeeping from one ingestion run."""

    n_contact: int
    n_external: int
    n_internal: int
    n_clipped: int


def ingest_log(
    log: list[ImuSample],
    config: DetectionConfig,
    geometry: VehicleGeometry,
    region: Region,
) -> tuple[Dataset, IngestSummary]:
    """Run the full pipeline on one log.

    Produces surface points for contact events (with normals), free-space
    points at sub-threshold sample positions, and one interior point per
    contact.  Points falling outside the region are dropped; a contact
    whose localized point or interior partner leaves the region drops the
    whole pair, keeping the one-interior-per-contact pairing intact.
    The dataset lists contacts, then free-space points, then interior
    points, each group in time order.
    """
    events = detect_events(log, config)
    contacts: list[LabeledPoint] = []
    internals: list[LabeledPoint] = []
    externals: list[LabeledPoint] = []
    clipped = 0
    for sample, label in events:
        if label == 0:
            accel = effective_body_accel(sample, config)
            ground = body_to_ground(accel, sample.roll, sample.pitch, sample.yaw)
            try:
                normal = estimate_normal(ground, 0)
            except DegenerateContactError as exc:
                raise DegenerateContactError(f"t = {sample.t}: {exc}") from exc
            surface_pt = localize_contact(sample.position, normal, geometry)
            interior_pt = synthesize_internal(surface_pt, normal, geometry.thickness)
            if region.contains(surface_pt) and region.contains(interior_pt):
                contacts.append(LabeledPoint(x=surface_pt, y=0, normal=normal))
                internals.append(LabeledPoint(x=interior_pt, y=-1))
            else:
                clipped += 2
        else:
            if region.contains(sample.position):
                externals.append(LabeledPoint(x=sample.position, y=1))
            else:
                clipped += 1

    points = contacts + externals + internals
    if not points:
        raise ValueError("no points of any label survived ingestion")
    dataset = Dataset.from_points(points, region, Provenance.FLIGHT_LOG)
    summary = IngestSummary(
        n_contact=len(contacts),
        n_external=len(externals),
        n_internal=len(internals),
        n_clipped=clipped,
    )
    return dataset, summary


def build_dataset(
    log: list[ImuSample],
    config: DetectionConfig,
    geometry: VehicleGeometry,
    region: Region,
) -> Dataset:
    """Dataset-only view of :func:`ingest_log`."""
    return ingest_log(log, config, geometry, region)[0]


def read_flight_log(path) -> list[ImuSample]:
    """Read a CSV flight log with header
    ``t,ax,ay,az,roll,pitch,yaw,px,py,pz``.

    Raises :class:`FlightLogParseError` with the offending line number on
    malformed rows or non-monotone timestamps.
    """
    expected = ["t", "ax", "ay", "az", "roll", "pitch", "yaw", "px", "py", "pz"]
    samples: list[ImuSample] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FlightLogParseError("empty flight log", 1) from None
        if [h.strip() for h in header] != expected:
            raise FlightLogParseError(f"expected header {','.join(expected)}", 1)
        prev_t = -math.inf
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise FlightLogParseError(
                    f"expected {len(expected)} fields, got {len(row)}", line_no
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise FlightLogParseError("non-numeric field", line_no) from None
            if values[0] < prev_t:
                raise FlightLogParseError("timestamps must be non-decreasing", line_no)
            prev_t = values[0]
            samples.append(
                ImuSample(
                    t=values[0],
                    accel_body=np.array(values[1:4]),
                    roll=values[4],
                    pitch=values[5],
                    yaw=values[6],
                    position=np.array(values[7:10]),
                )
            )
    if not samples:
        raise FlightLogParseError("flight log has no samples", 2)
    return samples
