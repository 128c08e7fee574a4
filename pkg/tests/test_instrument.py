"""Tests for adaptive-rate snapshots, the auxiliary-sequence residual, bound
violation counting, and the trace file format."""

import math

import numpy as np
import pytest

from sadam.calibrators import ALRBounds, Calibrator, alr_bounds
from sadam.errors import ConfigError, InputDomainError
from sadam.instrument import (
    ALRSnapshot,
    TRACE_HEADER,
    TrajectoryRecord,
    anisotropy_ratio,
    bound_violations,
    read_trace_csv,
    snapshot_alr,
    write_trace_csv,
    z_residual,
)
from sadam.optim import HyperParams, default_hyperparams, init, step


def _state_after_zero_gradient(method, hp, dim=4):
    """One zero-gradient step leaves v = 0 at t = 1."""
    state = init(method, dim, np.zeros(dim), hp)
    step(state, np.zeros(dim), hp)
    return state


class TestSnapshot:
    def test_adam_zero_curvature_hits_epsilon_ceiling(self):
        hp = default_hyperparams("adam", 0.01)
        state = _state_after_zero_gradient("adam", hp)
        snap = snapshot_alr(state, hp)
        assert snap.min == snap.max == 1e8

    def test_sadam_zero_curvature_hits_beta_ceiling(self):
        hp = default_hyperparams("sadam", 0.01)
        state = _state_after_zero_gradient("sadam", hp)
        snap = snapshot_alr(state, hp)
        expected = 1.0 / (math.log(2.0) / 50.0)
        assert snap.min == snap.max == expected
        assert snap.max == pytest.approx(72.1347520444481, rel=1e-12)

    def test_order_statistics_pass_through(self):
        """Rate vector [1..5] reports exactly (1, 2, 3, 4, 5)."""
        hp = HyperParams(eta=0.01, calibrator=Calibrator("eps_shift", epsilon=0.0))
        state = init("custom", 5, np.zeros(5), hp)
        state.v = np.array([1.0, 1 / 4, 1 / 9, 1 / 16, 1 / 25])
        state.t = 1
        snap = snapshot_alr(state, hp)
        assert (snap.min, snap.p25, snap.median, snap.p75, snap.max) == (1, 2, 3, 4, 5)

    def test_snapshot_before_first_step_rejected(self):
        hp = default_hyperparams("adam", 0.01)
        state = init("adam", 3, np.zeros(3), hp)
        with pytest.raises(InputDomainError):
            snapshot_alr(state, hp)

    def test_permutation_invariance(self):
        hp = default_hyperparams("adam", 0.01)
        rng = np.random.default_rng(0)
        state = init("adam", 32, np.zeros(32), hp)
        step(state, rng.standard_normal(32), hp)
        snap1 = snapshot_alr(state, hp)
        state.v = state.v[rng.permutation(32)]
        snap2 = snapshot_alr(state, hp)
        assert (snap1.min, snap1.p25, snap1.median, snap1.p75, snap1.max) == (
            snap2.min, snap2.p25, snap2.median, snap2.p75, snap2.max)

    def test_uncalibrated_method_reports_unit_rates(self):
        hp = HyperParams(eta=0.01)
        state = init("smomentum", 3, np.zeros(3), hp)
        step(state, np.ones(3), hp)
        snap = snapshot_alr(state, hp)
        assert snap.min == snap.max == 1.0

    def test_snapshot_statistics_ordered(self):
        with pytest.raises(InputDomainError):
            ALRSnapshot(t=1, min=2.0, p25=1.0, median=3.0, p75=4.0, max=5.0)

    def test_anisotropy_ratio(self):
        snap = ALRSnapshot(t=1, min=2.0, p25=2.0, median=3.0, p75=4.0, max=50.0)
        assert anisotropy_ratio(snap) == 25.0


class TestZResidual:
    def test_momentum_free_single_step_is_exactly_zero(self):
        """With beta1 = 0 the sequence is the iterate path itself; starting
        from x = 0 all roundings cancel and the defect is exactly 0."""
        hp = default_hyperparams("adam", 0.1, beta1=0.0)
        state = init("adam", 3, np.zeros(3), hp)
        g1 = np.array([1.0, -0.5, 0.25])
        x0 = state.x.copy()
        m0 = state.m.copy()
        v0 = state.v.copy()
        step(state, g1, hp)
        res = z_residual(x0, x0, state.x, m0, v0, state.v, g1, hp)
        assert res == 0.0

    def _adam_window_stream(self, method="adam", steps=100, seed=14, hp=None):
        hp = hp or default_hyperparams(method, 0.01)
        rng = np.random.default_rng(seed)
        state = init(method, 6, rng.standard_normal(6), hp)
        prev_x = None
        for _ in range(steps):
            x_t = state.x.copy()
            m_prev = state.m.copy()
            v_prev = state.v.copy()
            g = rng.standard_normal(6)
            step(state, g, hp)
            if prev_x is not None:
                yield z_residual(prev_x, x_t, state.x, m_prev, v_prev, state.v, g, hp), hp
            prev_x = x_t

    @pytest.mark.parametrize("method", ["adam", "sadam"])
    def test_residual_small_along_trajectories(self, method):
        for res, _ in self._adam_window_stream(method=method):
            assert res < 1e-9

    def test_corruption_detected(self):
        hp = default_hyperparams("adam", 0.01)
        rng = np.random.default_rng(2)
        state = init("adam", 6, rng.standard_normal(6), hp)
        xs, ms, vs, gs = [state.x.copy()], [state.m.copy()], [state.v.copy()], [None]
        for _ in range(3):
            g = rng.standard_normal(6)
            step(state, g, hp)
            xs.append(state.x.copy())
            ms.append(state.m.copy())
            vs.append(state.v.copy())
            gs.append(g)
        corrupted = xs[2].copy()
        corrupted[0] += 1e-3
        res = z_residual(xs[0], xs[1], corrupted, ms[0], vs[0], vs[1], gs[1], hp)
        assert res > 1e-4

    def test_bias_correction_rejected(self):
        hp = default_hyperparams("adam", 0.01, bias_correction=True)
        z = np.zeros(2)
        with pytest.raises(ConfigError):
            z_residual(z, z, z, z, z, z, z, hp)

    def test_decay_rejected(self):
        hp = default_hyperparams("adam", 0.01, decay=((5, 0.1),))
        z = np.zeros(2)
        with pytest.raises(ConfigError):
            z_residual(z, z, z, z, z, z, z, hp)


def _record_with_snapshots(spans):
    rec = TrajectoryRecord(method="adam", hyper={}, problem={}, oracle={},
                           seed=0, snapshot_every=1, kernel_backend="python")
    for t, (lo, hi) in enumerate(spans, start=1):
        rec.steps.append(t)
        rec.losses.append(1.0)
        rec.grad_norm_sq.append(1.0)
        rec.eta_ts.append(0.01)
        rec.snapshots[t] = ALRSnapshot(t=t, min=lo, p25=lo, median=(lo + hi) / 2,
                                       p75=hi, max=hi)
    return rec


class TestBoundViolations:
    def test_compliant_run_counts_zero(self):
        rec = _record_with_snapshots([(1.0, 5.0), (2.0, 4.0)])
        assert bound_violations(rec, ALRBounds(0.5, 10.0)) == 0

    def test_tightened_bounds_catch_the_span(self):
        rec = _record_with_snapshots([(1.0, 5.0), (2.0, 4.0), (0.9, 8.0)])
        loose = ALRBounds(0.5, 10.0)
        tight = ALRBounds(loose.mu_lower * 2.0, loose.mu_upper / 2.0)
        assert bound_violations(rec, loose) == 0
        assert bound_violations(rec, tight) > 0

    def test_missing_snapshots_rejected(self):
        rec = TrajectoryRecord(method="adam", hyper={}, problem={}, oracle={},
                               seed=0, snapshot_every=1, kernel_backend="python")
        with pytest.raises(InputDomainError):
            bound_violations(rec, ALRBounds(0.5, 10.0))

    def test_tolerance_absorbs_rounding(self):
        rec = _record_with_snapshots([(1.0, 5.0)])
        bounds = ALRBounds(1.0 * (1 + 1e-13), 5.0 * (1 - 1e-13))
        assert bound_violations(rec, bounds) == 0


class TestTraceFormat:
    def test_header_and_empty_cells(self, tmp_path):
        rec = TrajectoryRecord(method="adam", hyper={}, problem={}, oracle={},
                               seed=0, snapshot_every=2, kernel_backend="python")
        rec.steps = [1, 2]
        rec.losses = [0.5, 0.25]
        rec.grad_norm_sq = [1.0, 0.5]
        rec.eta_ts = [0.01, 0.01]
        rec.snapshots[2] = ALRSnapshot(t=2, min=1.0, p25=1.0, median=2.0, p75=3.0, max=3.0)
        path = tmp_path / "trace.csv"
        write_trace_csv(rec, path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(TRACE_HEADER)
        assert lines[1].endswith(",,,,,")  # no snapshot and no residual at t=1
        rows = read_trace_csv(path)
        assert rows[0]["alr_min"] is None
        assert rows[1]["alr_min"] == 1.0
        assert rows[1]["z_residual"] is None

    def test_full_precision_round_trip(self, tmp_path):
        rec = TrajectoryRecord(method="sgd", hyper={}, problem={}, oracle={},
                               seed=0, snapshot_every=1, kernel_backend="python")
        value = 0.1234567890123456789
        rec.steps = [1]
        rec.losses = [value]
        rec.grad_norm_sq = [value * 2]
        rec.eta_ts = [value / 3]
        path = tmp_path / "trace.csv"
        write_trace_csv(rec, path)
        rows = read_trace_csv(path)
        assert rows[0]["loss"] == value
        assert rows[0]["grad_norm_sq"] == value * 2
        assert rows[0]["eta_t"] == value / 3
