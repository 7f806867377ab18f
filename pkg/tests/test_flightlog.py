"""Tests for flight-log ingestion: detection, rotation, localization."""

import math

import numpy as np
import pytest

from contactshape.errors import DegenerateContactError, FlightLogParseError
from contactshape.flightlog import (
    DetectionConfig,
    ImuSample,
    VehicleGeometry,
    attitude_matrix,
    body_to_ground,
    build_dataset,
    detect_events,
    estimate_normal,
    ingest_log,
    localize_contact,
    read_flight_log,
    synthesize_internal,
)
from contactshape.geometry import Region


def sample(t, accel, roll=0.0, pitch=0.0, yaw=0.0, position=(0.0, 0.0, 1.0)):
    return ImuSample(
        t=t, accel_body=np.asarray(accel, dtype=float),
        roll=roll, pitch=pitch, yaw=yaw,
        position=np.asarray(position, dtype=float),
    )


def default_config(**overrides):
    settings = dict(
        accel_threshold=0.6, contact_rate=25.0, free_rate=0.5, subtract_gravity=False
    )
    settings.update(overrides)
    return DetectionConfig(**settings)


# ---------------------------------------------------------------------------
# Rotation.


def test_attitude_identity_at_zero_angles():
    np.testing.assert_allclose(attitude_matrix(0.0, 0.0, 0.0), np.eye(3), atol=1e-15)


def test_yaw_quarter_turn_convention():
    out = body_to_ground([1.0, 0.0, 0.0], 0.0, 0.0, math.pi / 2.0)
    np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)


def test_roll_and_pitch_single_axis_checks():
    np.testing.assert_allclose(
        body_to_ground([0.0, 1.0, 0.0], math.pi / 2.0, 0.0, 0.0),
        [0.0, 0.0, 1.0], atol=1e-12,
    )
    np.testing.assert_allclose(
        body_to_ground([0.0, 0.0, 1.0], 0.0, math.pi / 2.0, 0.0),
        [1.0, 0.0, 0.0], atol=1e-12,
    )


def test_rotation_preserves_norm_on_random_samples():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        angles = rng.uniform(-math.pi, math.pi, size=3)
        a = rng.normal(size=3)
        out = body_to_ground(a, *angles)
        assert abs(np.linalg.norm(out) - np.linalg.norm(a)) < 1e-12


def test_rotation_matrix_is_orthogonal():
    rng = np.random.default_rng(1)
    for _ in range(50):
        rot = attitude_matrix(*rng.uniform(-math.pi, math.pi, size=3))
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Event detection and rate limits.


def test_threshold_classification():
    config = default_config()
    log = [sample(0.0, (0.7, 0.0, 0.0)), sample(3.0, (0.0, 0.0, 0.0))]
    events = detect_events(log, config)
    assert [y for _, y in events] == [0, 1]


def test_quiet_log_downsamples_to_free_rate():
    config = default_config()
    log = [sample(k * 0.005, (0.0, 0.0, 0.0)) for k in range(2001)]
    events = detect_events(log, config)
    assert all(y == 1 for _, y in events)
    assert 5 <= len(events) <= 6
    times = [s.t for s, _ in events]
    assert all(b - a >= 2.0 - 1e-12 for a, b in zip(times, times[1:]))


def test_contact_burst_debounced_at_contact_rate():
    config = default_config()
    log = [sample(k * 0.005, (1.5, 0.0, 0.0)) for k in range(20)]
    events = detect_events(log, config)
    assert all(y == 0 for _, y in events)
    assert [s.t for s, _ in events] == pytest.approx([0.0, 0.04, 0.08])


def test_detection_rejects_empty_and_unsorted_logs():
    with pytest.raises(ValueError):
        detect_events([], default_config())
    log = [sample(1.0, (0.0, 0.0, 0.0)), sample(0.5, (0.0, 0.0, 0.0))]
    with pytest.raises(ValueError):
        detect_events(log, default_config())


def test_gravity_subtraction_turns_hover_into_free_space():
    hover = [
        sample(0.0, (0.0, 0.0, 1.0)),
        sample(4.0, (0.0, 1.0, 0.0), roll=math.pi / 2.0),
    ]
    with_flag = detect_events(hover, default_config(subtract_gravity=True))
    assert [y for _, y in with_flag] == [1, 1]
    without = detect_events(hover, default_config())
    assert [y for _, y in without] == [0, 0]


def test_detection_config_validation():
    with pytest.raises(ValueError):
        default_config(accel_threshold=0.0)
    with pytest.raises(ValueError):
        default_config(free_rate=-1.0)
    with pytest.raises(ValueError):
        VehicleGeometry(radius=0.0)


# ---------------------------------------------------------------------------
# Normal estimation and contact localization.


def test_normal_from_contact_acceleration():
    np.testing.assert_allclose(estimate_normal([2.0, 0.0, 0.0], 0), [1.0, 0.0, 0.0])
    s = math.sqrt(2.0) / 2.0
    np.testing.assert_allclose(estimate_normal([1.0, 1.0, 0.0], 0), [s, s, 0.0], atol=1e-15)


def test_normal_zero_for_non_contacts():
    np.testing.assert_array_equal(estimate_normal([5.0, 1.0, 2.0], 1), np.zeros(3))
    np.testing.assert_array_equal(estimate_normal([5.0, 1.0, 2.0], -1), np.zeros(3))


def test_normal_rejects_zero_contact_acceleration():
    with pytest.raises(DegenerateContactError):
        estimate_normal([0.0, 0.0, 0.0], 0)


def test_localize_side_hit_steps_by_radius():
    geometry = VehicleGeometry(radius=0.25, half_height=0.1, thickness=0.1)
    out = localize_contact([1.0, 0.0, 0.5], [1.0, 0.0, 0.0], geometry)
    np.testing.assert_allclose(out, [0.75, 0.0, 0.5], atol=1e-15)


def test_localize_vertical_hits_step_by_half_height():
    geometry = VehicleGeometry(radius=0.25, half_height=0.1, thickness=0.1)
    np.testing.assert_allclose(
        localize_contact([0.0, 0.0, 1.0], [0.0, 0.0, 1.0], geometry),
        [0.0, 0.0, 0.9], atol=1e-15,
    )
    np.testing.assert_allclose(
        localize_contact([0.0, 0.0, 1.0], [0.0, 0.0, -1.0], geometry),
        [0.0, 0.0, 1.1], atol=1e-15,
    )


def test_localize_tie_goes_to_side_branch():
    geometry = VehicleGeometry(radius=0.25, half_height=0.1, thickness=0.1)
    s = math.sqrt(2.0) / 2.0
    out = localize_contact([0.0, 0.0, 0.0], [s, 0.0, s], geometry)
    np.testing.assert_allclose(out, [-0.25 * s, 0.0, -0.25 * s], atol=1e-15)


def test_localize_rejects_non_unit_normal():
    geometry = VehicleGeometry()
    with pytest.raises(ValueError):
        localize_contact([0.0, 0.0, 0.0], [1.0, 1.0, 0.0], geometry)


def test_synthesize_internal_steps_behind_surface():
    out = synthesize_internal([0.75, 0.0, 0.5], [1.0, 0.0, 0.0], 0.1)
    np.testing.assert_allclose(out, [0.65, 0.0, 0.5], atol=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        x = rng.normal(size=3)
        out = synthesize_internal(x, n, 0.1)
        assert np.linalg.norm(out - x) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError):
        synthesize_internal([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.0)


# ---------------------------------------------------------------------------
# Full ingestion pipeline on a scripted wall approach.


def wall_approach_log():
    """Straight flight toward a wall occupying x1 >= 1, impact included.

    The vehicle cruises from x1 = 0 at 0.25 m/s and touches the wall when
    its centre reaches x1 = 0.75 (radius 0.25); the impact decelerates it
    along -x1.
    """
    log = []
    for k in range(601):
        t = k * 0.005
        x = 0.25 * t
        log.append(sample(t, (0.0, 0.0, 0.0), position=(x, 0.0, 1.0)))
    log.append(sample(3.01, (-1.2, 0.0, 0.0), position=(0.75, 0.0, 1.0)))
    return log


def test_wall_approach_places_contact_on_wall_face():
    region = Region(np.array([-1.0, -1.0, 0.0]), np.array([2.0, 1.0, 2.0]))
    geometry = VehicleGeometry(radius=0.25, half_height=0.05, thickness=0.1)
    data, summary = ingest_log(wall_approach_log(), default_config(), geometry, region)

    assert summary.n_contact == 1
    assert summary.n_internal == 1
    contact = data.positions[data.labels == 0][0]
    np.testing.assert_allclose(contact, [1.0, 0.0, 1.0], atol=1e-12)
    normal = data.normals[data.labels == 0][0]
    np.testing.assert_allclose(normal, [-1.0, 0.0, 0.0], atol=1e-12)
    interior = data.positions[data.labels == -1][0]
    np.testing.assert_allclose(interior, [1.1, 0.0, 1.0], atol=1e-12)
    # Free-space points at 0.5 Hz over three seconds of cruise.
    assert summary.n_external == 2
    free_x = np.sort(data.positions[data.labels == 1][:, 0])
    np.testing.assert_allclose(free_x, [0.0, 0.5], atol=1e-12)


def test_wall_approach_with_yawed_vehicle_matches_ground_frame():
    # Same impact expressed in the body frame of a vehicle yawed a quarter
    # turn; rotating back must reproduce the ground-frame contact.
    region = Region(np.array([-1.0, -1.0, 0.0]), np.array([2.0, 1.0, 2.0]))
    geometry = VehicleGeometry(radius=0.25, half_height=0.05, thickness=0.1)
    log = [
        sample(0.0, (0.0, 0.0, 0.0), position=(0.0, 0.0, 1.0)),
        sample(
            3.01, (0.0, 1.2, 0.0), yaw=math.pi / 2.0, position=(0.75, 0.0, 1.0)
        ),
    ]
    data = build_dataset(log, default_config(), geometry, region)
    contact = data.positions[data.labels == 0][0]
    np.testing.assert_allclose(contact, [1.0, 0.0, 1.0], atol=1e-12)


def test_out_of_region_pairs_are_dropped_together():
    # The interior point would land outside; the contact alone must not
    # survive, keeping one interior per contact.
    region = Region(np.array([-1.0, -1.0, 0.0]), np.array([1.05, 1.0, 2.0]))
    geometry = VehicleGeometry(radius=0.25, half_height=0.05, thickness=0.1)
    log = wall_approach_log()
    data, summary = ingest_log(log, default_config(), geometry, region)
    assert summary.n_contact == 0
    assert summary.n_internal == 0
    assert summary.n_clipped == 2
    assert np.all(data.labels == 1)


def test_ingestion_requires_surviving_points():
    region = Region(np.array([10.0, 10.0, 10.0]), np.array([11.0, 11.0, 11.0]))
    geometry = VehicleGeometry()
    with pytest.raises(ValueError):
        ingest_log(wall_approach_log(), default_config(), geometry, region)


def test_internal_count_equals_contact_count():
    rng = np.random.default_rng(8)
    log = []
    t = 0.0
    for _ in range(300):
        t += 0.05
        if rng.random() < 0.2:
            accel = rng.normal(scale=1.5, size=3)
            if np.linalg.norm(accel) < 1e-6:
                accel = np.array([1.0, 0.0, 0.0])
        else:
            accel = rng.normal(scale=0.05, size=3)
        log.append(
            sample(t, accel, position=rng.uniform(-0.5, 0.5, size=3) + (0, 0, 1))
        )
    region = Region(np.array([-3.0, -3.0, -3.0]), np.array([3.0, 3.0, 3.0]))
    data, summary = ingest_log(log, default_config(), VehicleGeometry(), region)
    assert summary.n_internal == summary.n_contact
    n_contact = int(np.sum(data.labels == 0))
    n_internal = int(np.sum(data.labels == -1))
    assert n_contact == summary.n_contact
    assert n_internal == summary.n_internal


# ---------------------------------------------------------------------------
# Log file parsing.


HEADER = "t,ax,ay,az,roll,pitch,yaw,px,py,pz"


def write_log(path, rows):
    path.write_text("\n".join([HEADER] + rows) + "\n")


def test_read_log_roundtrip(tmp_path):
    path = tmp_path / "log.csv"
    write_log(
        path,
        [
            "0.0,0.1,0.0,0.0,0.0,0.0,0.0,0.5,0.0,1.0",
            "0.005,0.9,0.2,0.0,0.01,-0.02,1.5707963,0.51,0.0,1.0",
        ],
    )
    samples = read_flight_log(path)
    assert len(samples) == 2
    assert samples[0].t == 0.0
    np.testing.assert_allclose(samples[1].accel_body, [0.9, 0.2, 0.0])
    assert samples[1].yaw == pytest.approx(1.5707963)
    np.testing.assert_allclose(samples[1].position, [0.51, 0.0, 1.0])


def test_read_log_rejects_malformed_files(tmp_path):
    path = tmp_path / "log.csv"

    path.write_text("")
    with pytest.raises(FlightLogParseError):
        read_flight_log(path)

    path.write_text("time,ax\n")
    with pytest.raises(FlightLogParseError) as info:
        read_flight_log(path)
    assert info.value.line_number == 1

    write_log(path, ["0.0,0.1,0.0,0.0,0.0,0.0,0.0,0.5,0.0"])
    with pytest.raises(FlightLogParseError) as info:
        read_flight_log(path)
    assert info.value.line_number == 2

    write_log(path, ["0.0,oops,0.0,0.0,0.0,0.0,0.0,0.5,0.0,1.0"])
    with pytest.raises(FlightLogParseError):
        read_flight_log(path)

    write_log(
        path,
        [
            "1.0,0.1,0.0,0.0,0.0,0.0,0.0,0.5,0.0,1.0",
            "0.5,0.1,0.0,0.0,0.0,0.0,0.0,0.5,0.0,1.0",
        ],
    )
    with pytest.raises(FlightLogParseError) as info:
        read_flight_log(path)
    assert info.value.line_number == 3

    write_log(path, [])
    with pytest.raises(FlightLogParseError):
        read_flight_log(path)
