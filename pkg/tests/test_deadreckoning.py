import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from bbmeld import ValidationError
from bbmeld.deadreckoning import (
    GRAVITY_NED,
    MAG_NED,
    SpeedUnobservableError,
    TagStream,
    dra_reconstruct,
    read_tag_csv,
    simulate_tag,
    smooth_stream,
    speed_from_depth,
    wahba_solve,
    wahba_solve_batch,
    write_tag_csv,
)

G = np.array(GRAVITY_NED)
M = np.array(MAG_NED)


def helix(duration, dt, radius_m=200.0, period=600.0, descent=0.3):
    t = np.arange(0.0, duration + dt / 2, dt)
    w = 2 * np.pi / period
    north = radius_m * np.sin(w * t) / 1000.0
    east = radius_m * (1 - np.cos(w * t)) / 1000.0
    return east, north, 5.0 + descent * t


def _stream(n, accel_rows, mag_rows):
    return TagStream(np.asarray(accel_rows, float), np.asarray(mag_rows, float), np.zeros(n), 1.0)


# --- smoothing ----------------------------------------------------------------------


def test_smoothing_constant_is_unchanged():
    s = _stream(7, np.tile(G, (7, 1)), np.tile(M, (7, 1)))
    out = smooth_stream(s, 5)
    np.testing.assert_allclose(out.accel, s.accel, atol=1e-15)


def test_smoothing_alternating_example():
    acc = np.tile([[1.0, 0, 0], [-1.0, 0, 0]], (3, 1))
    out = smooth_stream(_stream(6, acc, np.tile(M, (6, 1))), 3)
    np.testing.assert_allclose(out.accel[1:5, 0], [1 / 3, -1 / 3, 1 / 3, -1 / 3], atol=1e-12)
    # edges average what is available
    assert out.accel[0, 0] == pytest.approx(0.0)


def test_smoothing_window_checks():
    s = _stream(4, np.tile(G, (4, 1)), np.tile(M, (4, 1)))
    for w in (0, 2, 7):
        with pytest.raises(ValidationError):
            smooth_stream(s, w)
    assert smooth_stream(s, 1) is s


# --- attitude -------------------------------------------------------------------------


def test_wahba_identity():
    np.testing.assert_allclose(wahba_solve(G, M, G, M), np.eye(3), atol=1e-12)


def test_wahba_thirty_degree_yaw():
    O = Rotation.from_euler("z", 30, degrees=True).as_matrix()
    np.testing.assert_allclose(wahba_solve(O @ G, O @ M, G, M), O, atol=1e-12)


def _loss(O, a, m):
    return np.sum((a - O @ G) ** 2) + np.sum((m - O @ M) ** 2)


def test_wahba_beats_random_search():
    rng = np.random.default_rng(4)
    a = G + rng.normal(0, 0.2, 3)
    m = M + rng.normal(0, 0.2, 3)
    best = wahba_solve(a, m, G, M)
    trials = Rotation.random(5000, random_state=5).as_matrix()
    assert _loss(best, a, m) <= min(_loss(R, a, m) for R in trials) + 1e-12
    # and it is a local optimum under small perturbations
    for v in rng.normal(0, 1e-3, (50, 3)):
        assert _loss(best, a, m) <= _loss(Rotation.from_rotvec(v).as_matrix() @ best, a, m) + 1e-14


@given(st.integers(0, 2**31))
def test_wahba_returns_proper_rotation(seed):
    r = np.random.default_rng(seed)
    a, m = r.normal(size=3), r.normal(size=3)
    if np.linalg.norm(np.cross(a, m)) < 1e-3:
        return
    O = wahba_solve(a, m, G, M)
    np.testing.assert_allclose(O @ O.T, np.eye(3), atol=1e-10)
    assert np.linalg.det(O) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2**31))
def test_wahba_recovers_noiseless_rotation(seed):
    O = Rotation.random(random_state=seed).as_matrix()
    np.testing.assert_allclose(wahba_solve(O @ G, O @ M, G, M), O, atol=1e-10)


def test_batch_matches_single():
    Os = Rotation.random(20, random_state=1).as_matrix()
    a = Os @ G
    m = Os @ M
    out = wahba_solve_batch(a, m, G, M)
    for i in range(20):
        np.testing.assert_allclose(out[i], wahba_solve(a[i], m[i], G, M), atol=1e-13)


def test_parallel_references_rejected():
    with pytest.raises(ValidationError, match="parallel"):
        wahba_solve(G, G, G, 2 * G)


# --- speed ----------------------------------------------------------------------------


def test_speed_from_depth_examples():
    o = np.array([np.sqrt(0.5), 0.0, np.sqrt(0.5)])
    np.testing.assert_allclose(speed_from_depth(o, 1.0), [1.0, 0.0, 1.0])
    np.testing.assert_allclose(speed_from_depth(np.array([0.0, 0.0, 1.0]), -0.4), [0.0, 0.0, -0.4])
    with pytest.raises(SpeedUnobservableError, match="speed unobservable"):
        speed_from_depth(np.array([1.0, 0.0, 0.01]), 0.3)


# --- reconstruction ---------------------------------------------------------------------


def test_no_depth_change_stays_put():
    n = 50
    s = TagStream(np.tile(G, (n, 1)), np.tile(M, (n, 1)), np.full(n, 10.0), 1.0)
    r = dra_reconstruct(s)
    assert np.all(r.easting.values == 0.0) and np.all(r.northing.values == 0.0)


def test_constant_speed_straight_north():
    n = 11
    s = TagStream(np.tile(G, (n, 1)), np.tile(M, (n, 1)), np.zeros(n), 2.0)
    r = dra_reconstruct(s, start=(1.0, 2.0), speed_mode="constant", speed=1.5)
    np.testing.assert_allclose(r.northing.values, 2.0 + 0.003 * np.arange(n), atol=1e-12)
    np.testing.assert_allclose(r.easting.values, 1.0, atol=1e-12)


def test_start_translation():
    e, n, d = helix(300, 1.0)
    s = simulate_tag(e, n, d, 1.0)
    a = dra_reconstruct(s)
    b = dra_reconstruct(s, start=(3.0, -7.0))
    np.testing.assert_allclose(b.easting.values, a.easting.values + 3.0, atol=1e-12)
    np.testing.assert_allclose(b.northing.values, a.northing.values - 7.0, atol=1e-12)


def _helix_error(dt, **kw):
    e, n, d = helix(600, dt)
    r = dra_reconstruct(simulate_tag(e, n, d, dt, **kw), window=1)
    return 1000 * np.max(np.hypot(r.easting.values - e, r.northing.values - n))


def test_first_order_convergence():
    errs = np.array([_helix_error(dt) for dt in (2.0, 1.0, 0.5, 0.25)])
    order = np.log2(errs[:-1] / errs[1:])
    assert np.all(order > 0.9)


def test_error_grows_with_sensor_noise():
    errs = []
    for sd in (0.01, 0.02, 0.04):
        errs.append(np.mean([_helix_error(1.0, accel_sd=sd, mag_sd=sd, seed=s) for s in range(5)]))
    assert errs[0] < errs[1] < errs[2]


def test_level_swimming_flagged_and_held():
    n = 40
    e = np.linspace(0, 0.04, n)
    d = np.concatenate((np.linspace(5, 15, 20), np.full(20, 15.0)))
    s = simulate_tag(e, np.zeros(n), d, 1.0)
    r = dra_reconstruct(s, window=1)
    assert r.flagged >= 15
    held = r.velocity[25:]
    assert np.allclose(held, held[0])


def test_stationary_truth_counted():
    e = np.concatenate((np.zeros(5), np.linspace(0, 0.01, 10)))
    s = simulate_tag(e, np.zeros(15), np.linspace(0, 3, 15), 1.0)
    assert s.meta["stationary_samples"] == 0
    s = simulate_tag(np.zeros(6), np.zeros(6), np.array([0, 0, 0, 1, 2, 3.0]), 1.0)
    # central differences: zero rate at samples 1 and 2
    assert s.meta["stationary_samples"] == 2


def test_stream_validation():
    with pytest.raises(ValidationError, match="lengths differ"):
        TagStream(np.zeros((3, 3)), np.zeros((4, 3)), np.zeros(3), 1.0)
    acc = np.tile(G, (3, 1))
    acc[1, 0] = np.nan
    with pytest.raises(ValidationError, match="t=2"):
        TagStream(acc, np.tile(M, (3, 1)), np.zeros(3), 1.0)
    with pytest.raises(ValidationError):
        TagStream(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3), 0.0)


def test_csv_round_trip(tmp_path):
    e, n, d = helix(30, 1.0)
    s = simulate_tag(e, n, d, 1.0, accel_sd=0.01, seed=2)
    path = tmp_path / "tag.csv"
    write_tag_csv(path, s)
    back = read_tag_csv(path, 1.0)
    np.testing.assert_allclose(back.accel, s.accel, rtol=1e-12)
    np.testing.assert_allclose(back.depth, s.depth, rtol=1e-12)
