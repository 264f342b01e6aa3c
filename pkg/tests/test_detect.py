"""Online anomaly statistics, threshold calibration, stream detection."""

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import canshape.detect as detect_mod
from canshape.detect import (
    DETECTOR_CONT,
    DETECTOR_DIST,
    DetectorState,
    InsufficientHoldout,
    ManifoldIndex,
    OutOfOrder,
    Thresholds,
    apply_cooldown,
    bench_detect,
    calibrate,
    detect_stream,
    increment_distance,
    manifold_distance,
)
from canshape.diffusion import EmbeddedPoint, fit
from canshape.pipeline import Observation


def grid_index(r=1):
    """Index over unit-spaced 1-d training embeddings 0..3."""
    model = SimpleNamespace(train_embed=np.arange(4.0)[:, None], n=4)
    return ManifoldIndex(model, r=r)


class TestManifoldDistance:
    def test_self_distance_zero(self):
        idx = grid_index(r=1)
        assert manifold_distance(idx, EmbeddedPoint(0.0, np.array([2.0]))) == 0.0

    def test_grid_midpoint(self):
        idx = grid_index(r=1)
        assert manifold_distance(idx, EmbeddedPoint(0.0, np.array([1.5]))) == 0.5

    def test_r_mean(self):
        # two nearest neighbors of 1.25 are 1 (d=0.25) and 2 (d=0.75)
        idx = grid_index(r=2)
        d = manifold_distance(idx, EmbeddedPoint(0.0, np.array([1.25])))
        assert d == pytest.approx(0.5)

    def test_r_capped_at_training_size(self):
        idx = grid_index(r=10)
        assert idx.r == 4


class TestIncrementDistance:
    def test_first_observation_none(self):
        state = DetectorState()
        assert increment_distance(state, EmbeddedPoint(0.0, np.array([1.0]))) is None
        assert state.previous is not None

    def test_identical_consecutive_zero(self):
        state = DetectorState()
        increment_distance(state, EmbeddedPoint(0.0, np.array([1.0, 2.0])))
        d = increment_distance(state, EmbeddedPoint(1.0, np.array([1.0, 2.0])))
        assert d == 0.0

    def test_euclidean_jump(self):
        state = DetectorState()
        increment_distance(state, EmbeddedPoint(0.0, np.array([0.0, 0.0])))
        d = increment_distance(state, EmbeddedPoint(1.0, np.array([3.0, 4.0])))
        assert d == pytest.approx(5.0)

    def test_out_of_order(self):
        state = DetectorState()
        increment_distance(state, EmbeddedPoint(5.0, np.array([0.0])))
        with pytest.raises(OutOfOrder):
            increment_distance(state, EmbeddedPoint(4.0, np.array([0.0])))

    @given(
        st.lists(
            st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
            min_size=3,
            max_size=3,
        )
    )
    @settings(max_examples=30)
    def test_triangle_inequality(self, pts):
        # consecutive jump sizes obey the Euclidean triangle inequality
        a, b, c = (np.array(p) for p in pts)
        s1 = DetectorState()
        increment_distance(s1, EmbeddedPoint(0.0, a))
        d_ab = increment_distance(s1, EmbeddedPoint(1.0, b))
        d_bc = increment_distance(s1, EmbeddedPoint(2.0, c))
        d_ac = float(np.linalg.norm(c - a))
        assert d_ac <= d_ab + d_bc + 1e-9


def identity_model(train_embed):
    """Stand-in model whose 'embedding' is the raw observation vector."""
    return SimpleNamespace(train_embed=np.asarray(train_embed, float), n=len(train_embed))


@pytest.fixture
def identity_embed(monkeypatch):
    monkeypatch.setattr(
        detect_mod, "embed_many", lambda model, X: np.asarray(X, dtype=float)
    )


class TestCalibrate:
    def test_constant_statistics_scale_by_c(self, identity_embed):
        # psi alternates +-0.25 around the training point at 0: every
        # manifold distance is 0.25 and every increment is 0.5
        model = identity_model([[0.0]])
        xs = [0.25 if i % 2 == 0 else -0.25 for i in range(1200)]
        holdout = [Observation(float(i), np.array([x])) for i, x in enumerate(xs)]
        th = calibrate(model, holdout, q=0.9, c=2.0, r=1)
        assert th.k_dist == pytest.approx(2.0 * 0.25)
        assert th.k_cont == pytest.approx(2.0 * 0.5)

    def test_median_rule(self, identity_embed):
        model = identity_model([[0.0]])
        rng = np.random.default_rng(0)
        xs = rng.uniform(-1.0, 1.0, 1500)
        holdout = [Observation(float(i), np.array([x])) for i, x in enumerate(xs)]
        th = calibrate(model, holdout, q=0.5, c=1.0, r=1)
        dists = np.abs(xs)
        incrs = np.abs(np.diff(xs))
        assert th.k_dist == pytest.approx(np.median(dists))
        assert th.k_cont == pytest.approx(np.median(incrs))

    def test_insufficient_holdout(self, identity_embed):
        model = identity_model([[0.0]])
        holdout = [Observation(float(i), np.array([0.1])) for i in range(999)]
        with pytest.raises(InsufficientHoldout):
            calibrate(model, holdout)

    def test_parameter_validation(self, identity_embed):
        model = identity_model([[0.0]])
        holdout = [
            Observation(float(i), np.array([0.25 * (-1) ** i])) for i in range(1200)
        ]
        with pytest.raises(ValueError):
            calibrate(model, holdout, q=0.0)
        with pytest.raises(ValueError):
            calibrate(model, holdout, c=0.5)
        with pytest.raises(OutOfOrder):
            calibrate(model, list(reversed(holdout)))


def real_model(n=1500, seed=0):
    X = np.random.default_rng(seed).uniform(0.0, 1.0, (n, 3))
    return fit(X, k=60, m=3, gamma=4.0, seed=seed), X


def ambient_obs(n, seed):
    X = np.random.default_rng(seed).uniform(0.0, 1.0, (n, 3))
    return [Observation(float(i) * 0.01, x) for i, x in enumerate(X)]


class TestDetectStream:
    def test_empty_stream(self):
        model, _ = real_model(200, seed=1)
        th = Thresholds(k_dist=1.0, k_cont=1.0)
        alerts, trace = detect_stream(model, th, [])
        assert alerts == [] and trace == []

    def test_trace_shape_and_first_increment(self):
        model, _ = real_model(300, seed=2)
        obs = ambient_obs(50, seed=3)
        th = Thresholds(k_dist=1e9, k_cont=1e9)
        alerts, trace = detect_stream(model, th, obs)
        assert alerts == []
        assert len(trace) == 50
        assert trace[0].increment_dist is None
        assert all(row.increment_dist is not None for row in trace[1:])
        assert [row.time for row in trace] == [o.time for o in obs]

    def test_ambient_alert_rate_bounded_by_quantile(self):
        model, _ = real_model(2000, seed=4)
        q = 0.99
        th = calibrate(model, ambient_obs(3000, seed=5), q=q, c=1.0)
        fresh = ambient_obs(3000, seed=6)
        alerts, trace = detect_stream(model, th, fresh)
        n = len(fresh)
        slack = 4.0 * np.sqrt(q * (1 - q) / n)  # sampling error, both sets finite
        for det in (DETECTOR_DIST, DETECTOR_CONT):
            rate = sum(a.detector == det for a in alerts) / n
            assert rate <= (1 - q) + slack

    def test_raising_c_or_q_never_adds_alerts(self):
        model, _ = real_model(800, seed=7)
        holdout = ambient_obs(1500, seed=8)
        eval_obs = ambient_obs(500, seed=9)
        base = calibrate(model, holdout, q=0.95, c=1.0)
        n_base = len(detect_stream(model, base, eval_obs)[0])
        for q, c in [(0.95, 1.2), (0.99, 1.0), (0.99, 1.5)]:
            th = calibrate(model, holdout, q=q, c=c)
            assert len(detect_stream(model, th, eval_obs)[0]) <= n_base

    def test_zero_kernel_row_becomes_max_alert(self):
        model, _ = real_model(300, seed=10)
        th = Thresholds(k_dist=1e9, k_cont=1e9)
        obs = ambient_obs(5, seed=11)
        obs.insert(3, Observation(obs[2].time, obs[2].x + 50.0))
        alerts, trace = detect_stream(model, th, obs)
        assert len(alerts) == 1
        assert alerts[0].detector == DETECTOR_DIST
        assert alerts[0].statistic == float("inf")
        assert trace[3].manifold_dist == float("inf")
        assert trace[3].alert_dist

    def test_out_of_order_stream_rejected(self):
        model, _ = real_model(200, seed=12)
        th = Thresholds(k_dist=1.0, k_cont=1.0)
        obs = ambient_obs(5, seed=13)
        obs[3] = Observation(obs[1].time - 1.0, obs[3].x)
        with pytest.raises(OutOfOrder):
            detect_stream(model, th, obs)

    def test_prefix_replay_matches_full_stream(self):
        # alert decisions are causal: truncating the stream changes nothing
        model, _ = real_model(500, seed=14)
        th = calibrate(model, ambient_obs(1200, seed=15), q=0.9, c=1.0)
        obs = ambient_obs(200, seed=16)
        full_alerts, full_trace = detect_stream(model, th, obs)
        for cut in (1, 50, 199):
            alerts, trace = detect_stream(model, th, obs[:cut])
            assert alerts == [a for a in full_alerts if a.observation_index < cut]
            assert trace == full_trace[:cut]


class TestApplyCooldown:
    def test_suppression_window(self):
        mk = lambda t: detect_mod.Alert(t, DETECTOR_CONT, 2.0, 1.0, 0)
        alerts = [mk(0.0), mk(0.1), mk(0.2), mk(1.0)]
        kept = apply_cooldown(alerts, 0.5)
        assert [a.time for a in kept] == [0.0, 1.0]

    def test_per_detector_independent(self):
        a = detect_mod.Alert(0.0, DETECTOR_CONT, 2.0, 1.0, 0)
        b = detect_mod.Alert(0.1, DETECTOR_DIST, 2.0, 1.0, 1)
        assert apply_cooldown([a, b], 0.5) == [a, b]

    def test_zero_cooldown_is_identity(self):
        a = detect_mod.Alert(0.0, DETECTOR_CONT, 2.0, 1.0, 0)
        assert apply_cooldown([a, a], 0.0) == [a, a]


class TestBenchDetect:
    def test_report_consistent_with_detect_stream(self):
        model, _ = real_model(400, seed=17)
        th = calibrate(model, ambient_obs(1100, seed=18), q=0.9, c=1.0)
        obs = ambient_obs(300, seed=19)
        report = bench_detect(model, th, obs)
        alerts, _ = detect_stream(model, th, obs)
        assert report.observations == 300
        assert report.alerts == len(alerts)
        assert report.obs_per_s > 0
        assert 0 <= report.p50_ms <= report.p99_ms

    def test_empty_input(self):
        model, _ = real_model(200, seed=20)
        report = bench_detect(model, Thresholds(1.0, 1.0), [])
        assert report.observations == 0
        assert report.alerts == 0
