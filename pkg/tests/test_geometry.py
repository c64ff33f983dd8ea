import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from trajconflict.geometry import (EARTH_RADIUS_KM, CalibrationError, GeoPoint, Homography, InsufficientHistory,
                                   estimate_speed, estimate_speeds, fit_homography, haversine_km, image_to_world,
                                   load_calibration, speed_kmh)
from trajconflict.tracker import History

lat = st.floats(-89.9, 89.9)
lon = st.floats(-179.9, 179.9)
points = st.builds(GeoPoint, lat, lon)


def test_identity_passthrough():
    p = image_to_world(Homography.identity(), 12.5, 40.25)
    assert (p.lat, p.lon) == (12.5, 40.25)


def test_point_at_infinity():
    Hinv = np.array([[1, 0, 0], [0, 1, 0], [1, 0, -10.0]])  # w = px - 10
    H = Homography.from_inverse(Hinv)
    with pytest.raises(CalibrationError):
        image_to_world(H, 10.0, 3.0)


def test_singular_rejected():
    with pytest.raises(CalibrationError):
        Homography(np.ones((3, 3)))


def random_h(rng):
    return np.array([[rng.uniform(5, 20), rng.uniform(-2, 2), rng.uniform(0, 500)],
                     [rng.uniform(-2, 2), rng.uniform(5, 20), rng.uniform(0, 500)],
                     [rng.uniform(-1e-3, 1e-3), rng.uniform(-1e-3, 1e-3), 1.0]])


@given(st.integers(0, 2**31 - 1), st.floats(-50, 50), st.floats(-50, 50))
def test_round_trip(seed, a, b):
    H = Homography(random_h(np.random.default_rng(seed)))
    u, v = H.world_to_image(a, b)
    back = H.H_inv @ (u, v, 1.0)
    assume(abs(back[2]) > 1e-6)
    np.testing.assert_allclose(back[:2] / back[2], [a, b], atol=1e-9)


def test_fit_recovers_known_map(rng):
    Ht = random_h(rng)
    world = rng.uniform(-20, 20, (8, 2))
    proj = (Ht @ np.c_[world, np.ones(8)].T).T
    image = proj[:, :2] / proj[:, 2:]
    H = fit_homography(world, image)
    assert H.residual < 1e-9
    np.testing.assert_allclose(H.H / H.H[2, 2], Ht / Ht[2, 2], rtol=1e-6, atol=1e-9)
    p = image_to_world(H, *image[3])
    np.testing.assert_allclose([p.lat, p.lon], world[3], atol=1e-9)


def test_fit_needs_four_points():
    with pytest.raises(CalibrationError):
        fit_homography([(0, 0)] * 3, [(0, 0)] * 3)


def test_load_calibration_forms():
    assert np.allclose(load_calibration({"H": [1, 0, 0, 0, 1, 0, 0, 0, 1]}).H, np.eye(3))
    pts = [{"px": px, "py": py, "lat": px / 10, "lon": py / 10} for px, py in [(0, 0), (10, 0), (0, 10), (10, 10)]]
    assert load_calibration({"points": pts}).residual < 1e-9
    for bad in ({}, {"H": [1, 2]}, {"points": [{"px": 1}]}, []):
        with pytest.raises(CalibrationError):
            load_calibration(bad)


def test_haversine_equator_degree():
    assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(111.195, abs=1e-3)
    assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(EARTH_RADIUS_KM * math.pi / 180, abs=1e-9)


def test_haversine_zero():
    assert haversine_km(GeoPoint(40, -74), GeoPoint(40, -74)) == 0


@given(points, points)
def test_haversine_symmetric_bounded(p, q):
    d = haversine_km(p, q)
    assert d == pytest.approx(haversine_km(q, p), abs=1e-9)
    assert 0 <= d <= math.pi * EARTH_RADIUS_KM + 1e-9


@given(points, points, points)
def test_haversine_triangle(p, q, r):
    assert haversine_km(p, r) <= haversine_km(p, q) + haversine_km(q, r) + 1e-9


def test_speed_formula_example():
    assert speed_kmh(0.01, 30, 30) == pytest.approx(36.0, abs=1e-12)
    assert speed_kmh(0.01, 60, 30) == 2 * speed_kmh(0.01, 30, 30)


def _meter_homography():
    # 1 px = 1 m along latitude at the equator
    deg_per_m = 1.0 / (EARTH_RADIUS_KM * 1000 * math.pi / 180)
    return Homography.from_inverse(np.diag([deg_per_m, deg_per_m, 1.0]))


def test_estimate_speed_hand_example():
    # half-window mean centers 10 m = 0.01 km apart -> 36 km/h at fps = f = 30
    hist = [(k, 0.0, 0.0) for k in range(15)] + [(15 + k, 10.0, 0.0) for k in range(15)]
    est = estimate_speed(hist, _meter_homography(), 30, 30, 2.0)
    assert not est.stalled
    assert est.speed == pytest.approx(36.0, abs=1e-9)


def test_stationary_is_stalled():
    est = estimate_speed([(k, 50.0, 50.0) for k in range(30)], _meter_homography(), 30, 30, 2.0)
    assert est.stalled and est.speed == 0


def test_insufficient_history():
    with pytest.raises(InsufficientHistory):
        estimate_speed([(0, 1.0, 1.0)], Homography.identity(), 30, 30, 2.0)


@given(st.integers(0, 30), st.integers(0, 2**31 - 1))
def test_older_history_ignored(extra, seed):
    rng = np.random.default_rng(seed)
    rows = [(k, *rng.uniform(0, 100, 2)) for k in range(30 + extra)]
    H = _meter_homography()
    assert estimate_speed(rows, H, 30, 30, 2.0) == estimate_speed(rows[extra:], H, 30, 30, 2.0)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_vectorised_matches_scalar(n, seed):
    rng = np.random.default_rng(seed)
    H = _meter_homography()
    wins = np.stack([np.c_[np.arange(30), np.cumsum(rng.normal(0, 1, (30, 2)), axis=0) + 100] for _ in range(n)])
    for w, est in zip(wins, estimate_speeds(wins, H, 30, 2.0)):
        ref = estimate_speed([tuple(r) for r in w], H, 30, 30, 2.0)
        assert est.stalled == ref.stalled
        assert est.speed == pytest.approx(ref.speed, rel=1e-9, abs=1e-12)


def test_history_object_accepted():
    h = History(40)
    for k in range(35):
        h.append((k, float(k), 0.0))
    rows = list(h)
    H = _meter_homography()
    assert estimate_speed(h, H, 30, 30, 2.0) == estimate_speed(rows, H, 30, 30, 2.0)
