import numpy as np
import pytest

from filtercool.filters import lowpass_cascade
from filtercool.moment_systems import ProtocolKind, ProtocolParams
from filtercool.numerics import NoiseStream
from filtercool.trajectory import (
    QuantumState,
    SystemModel,
    TrajectoryConfig,
    TrajectoryError,
    build_truncated_oscillator,
    frozen_signal_model,
    measurement_only_model,
    oscillator_cooling_model,
    run_ensemble,
    shifted_trap_feedback,
    step,
)


class TestQuantumState:
    def test_ground_state(self):
        s = QuantumState.ground_state(4)
        assert s.dim == 4 and s.purity() == pytest.approx(1.0)
        assert s.populations()[0] == pytest.approx(1.0)

    def test_non_hermitian_rejected(self):
        rho = np.array([[0.5, 0.1], [0.3, 0.5]], dtype=complex)
        with pytest.raises(ValueError):
            QuantumState(rho)

    def test_wrong_trace_rejected(self):
        with pytest.raises(ValueError):
            QuantumState(np.eye(2, dtype=complex))

    def test_ground_state_of_oscillator(self):
        osc = build_truncated_oscillator(8, 1.0)
        s = QuantumState.ground_state_of(osc.H0)
        assert s.expectation(osc.H0) == pytest.approx(0.5, abs=1e-12)


class TestTruncatedOscillator:
    def test_commutator_away_from_corner(self):
        n = 12
        osc = build_truncated_oscillator(n, 1.0)
        comm = osc.x @ osc.p - osc.p @ osc.x
        dev = comm - 1j * np.eye(n)
        dev[n - 2:, n - 2:] = 0.0  # allowed corner deviation
        assert np.abs(dev).max() < 1e-13

    def test_energy_levels(self):
        n, w = 10, 2.0
        osc = build_truncated_oscillator(n, w)
        levels = np.linalg.eigvalsh(osc.H0)
        for k in range(n - 3):  # low levels are exact despite the cutoff
            assert np.abs(levels - w * (k + 0.5)).min() < 1e-12

    def test_operator_symmetries(self):
        osc = build_truncated_oscillator(7, 1.0)
        assert np.abs(osc.x.imag).max() == 0.0
        assert np.abs(osc.x - osc.x.T).max() < 1e-14
        assert np.abs(osc.p.real).max() == 0.0
        assert np.abs(osc.p + osc.p.T).max() < 1e-14

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            build_truncated_oscillator(2, 1.0)


class TestShiftedTrapFeedback:
    def test_zero_signal_gives_bare_trap(self):
        osc = build_truncated_oscillator(9, 1.3)
        fb = shifted_trap_feedback(osc, 0)
        assert np.abs(fb(np.zeros((2, 1))) - osc.H0).max() < 1e-13

    def test_expansion_identity(self):
        # H(G) = H0 - w(gx x + gp p) + (w/2)(gx^2+gp^2) I
        osc = build_truncated_oscillator(9, 0.8)
        fb = shifted_trap_feedback(osc, 1)
        rng = np.random.default_rng(2)
        for _ in range(5):
            G = rng.uniform(-2, 2, (2, 3))
            gx, gp = G[0, 1], G[1, 1]
            expanded = (osc.H0 - osc.omega * (gx * osc.x + gp * osc.p)
                        + 0.5 * osc.omega * (gx**2 + gp**2) * np.eye(9))
            assert np.abs(fb(G) - expanded).max() < 1e-12

    def test_hermitian(self):
        osc = build_truncated_oscillator(6, 1.0)
        fb = shifted_trap_feedback(osc, 0)
        H = fb(np.array([[0.7], [-1.2]]))
        assert np.abs(H - H.conj().T).max() < 1e-14

    def test_tap_out_of_range(self):
        osc = build_truncated_oscillator(6, 1.0)
        with pytest.raises(ValueError):
            shifted_trap_feedback(osc, 2)(np.zeros((2, 2)))


class TestStep:
    def test_trace_is_one_after_step(self):
        model = oscillator_cooling_model(
            ProtocolParams(1.0, 1.0, 2.0, None, ProtocolKind.LOWPASS1), 10)
        state = QuantumState.ground_state(10)
        signals = np.zeros((2, 1))
        gen = NoiseStream(0, 0).generator()
        for _ in range(20):
            state, signals = step(state, signals, model, 1e-3, gen)
            assert abs(np.trace(state.rho).real - 1.0) < 1e-14
            assert np.abs(state.rho - state.rho.conj().T).max() < 1e-14

    def test_unitary_limit_conserves_energy(self):
        # no measurement channels: plain Hamiltonian step, energy exact
        osc = build_truncated_oscillator(8, 1.0)
        model = SystemModel(osc.H0, (), 0.0, None, None)
        rng = np.random.default_rng(5)
        v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        v /= np.linalg.norm(v)
        state = QuantumState(np.outer(v, v.conj()))
        e0 = state.expectation(osc.H0)
        for _ in range(50):
            state, _ = step(state, np.zeros((0, 0)), model, 1e-3,
                            np.zeros(0))
        assert abs(state.expectation(osc.H0) - e0) < 1e-10

    def test_purity_stays_high_and_improves_with_dt(self):
        # the continuous flow preserves purity; the integrator defect is
        # O(dt) and must stay within 5e-3 over 1e3 steps at dt=1e-4
        osc = build_truncated_oscillator(15, 1.0)
        model = SystemModel(osc.H0, (osc.x,), 1.0, None, None)

        def max_defect(dt, n_steps):
            state = QuantumState.ground_state(15)
            signals = np.zeros((1, 0))
            gen = NoiseStream(1, 0).generator()
            worst = 0.0
            for _ in range(n_steps):
                state, signals = step(state, signals, model, dt, gen)
                worst = max(worst, 1.0 - state.purity())
            return worst

        coarse = max_defect(1e-4, 1000)
        assert coarse <= 5e-3
        assert max_defect(5e-5, 2000) < coarse

    def test_noise_array_matches_generator(self):
        model = oscillator_cooling_model(
            ProtocolParams(1.0, 1.0, 1.0, 2.0, ProtocolKind.LOWPASS2), 8)
        xi = NoiseStream(3, 0).normal(2)
        s0 = QuantumState.ground_state(8)
        sig0 = np.zeros((2, 2))
        s1, g1 = step(s0, sig0, model, 1e-3, xi)
        s2, g2 = step(s0, sig0, model, 1e-3, NoiseStream(3, 0).generator())
        assert np.array_equal(s1.rho, s2.rho) and np.array_equal(g1, g2)

    def test_bad_signal_shape_rejected(self):
        model = oscillator_cooling_model(
            ProtocolParams(1.0, 1.0, 2.0, None, ProtocolKind.LOWPASS1), 6)
        with pytest.raises(ValueError):
            step(QuantumState.ground_state(6), np.zeros((2, 3)), model, 1e-3,
                 np.zeros(2))


class TestRunEnsemble:
    def test_deterministic_and_chunk_independent(self):
        p = ProtocolParams(1.0, 1.0, 2.0, None, ProtocolKind.LOWPASS1)
        model = oscillator_cooling_model(p, 8)
        recs = []
        for chunk in (3, 64):
            cfg = TrajectoryConfig(dt=1e-3, n_steps=50, n_traj=10, base_seed=12,
                                   record_stride=10, chunk_size=chunk)
            recs.append(run_ensemble(model, cfg))
        a, b = recs
        assert np.array_equal(a.energy_mean, b.energy_mean)
        assert np.array_equal(a.energy_stderr, b.energy_stderr)
        assert np.array_equal(a.signal_mean, b.signal_mean)
        assert np.array_equal(a.op_mean, b.op_mean)

    def test_initial_point_is_ground_state(self):
        p = ProtocolParams(1.0, 1.0, 2.0, 2.0, ProtocolKind.LOWPASS2)
        model = oscillator_cooling_model(p, 10)
        cfg = TrajectoryConfig(dt=1e-3, n_steps=10, n_traj=3, base_seed=0,
                               record_stride=10)
        rec = run_ensemble(model, cfg)
        assert rec.energy_mean[0] == pytest.approx(0.5, abs=1e-12)
        assert np.abs(rec.op_mean[:, 0]).max() < 1e-12

    def test_frozen_mean_drives_signal_to_dc_value(self):
        # ensemble mean of the filtered signal relaxes to the stationary
        # mean -M^-1 b a0 (here a0 times the unit DC gain)
        from filtercool.filters import stationary_statistics

        fm = lowpass_cascade((1.2, 0.8))
        a0 = 0.8
        model = frozen_signal_model(fm, lam=1.0, mean_A=a0)
        cfg = TrajectoryConfig(dt=2e-3, n_steps=5000, n_traj=150, base_seed=8,
                               record_stride=500)
        rec = run_ensemble(model, cfg)
        mean, _ = stationary_statistics(fm, 1.0, a0)
        for comp in range(2):
            est = rec.signal_mean[0, comp, -1]
            se = np.sqrt(rec.signal_var[0, comp, -1] / cfg.n_traj)
            assert abs(est - mean[comp]) < 3.0 * se

    def test_ou_variance_quick(self):
        g, lam = 1.0, 1.0
        model = frozen_signal_model(lowpass_cascade((g,)), lam)
        cfg = TrajectoryConfig(dt=2e-3, n_steps=6000, n_traj=150, base_seed=19,
                               record_stride=1500)
        rec = run_ensemble(model, cfg)
        target = g / (8.0 * lam)
        var = rec.signal_var[0, 0, rec.times >= 5.9]
        se = target * np.sqrt(2.0 / (var.size * cfg.n_traj - 1))
        assert abs(var.mean() - target) < 3.0 * se

    def test_heating_slope_quick(self):
        model = measurement_only_model(12, 1.0, 1.0)
        cfg = TrajectoryConfig(dt=1e-3, n_steps=400, n_traj=150, base_seed=71,
                               record_stride=20)
        rec = run_ensemble(model, cfg)
        slope = np.polyfit(rec.times, rec.energy_mean, 1)[0]
        assert abs(slope - 1.0) < 0.15
        assert not rec.truncation_warning

    def test_truncation_guard_flags_small_cutoff(self):
        model = measurement_only_model(5, 1.0, 1.0)
        cfg = TrajectoryConfig(dt=1e-2, n_steps=100, n_traj=10, base_seed=4,
                               record_stride=10)
        with pytest.warns(RuntimeWarning, match="truncation"):
            rec = run_ensemble(model, cfg)
        assert rec.truncation_warning
        assert rec.max_edge_population > 1e-3

    def test_divergent_run_names_trajectory(self):
        p = ProtocolParams(1.0, 1.0, 2.0, None, ProtocolKind.LOWPASS1)
        model = oscillator_cooling_model(p, 6)
        cfg = TrajectoryConfig(dt=50.0, n_steps=400, n_traj=2, base_seed=0,
                               record_stride=400)
        with pytest.raises(TrajectoryError, match="trajectory"):
            run_ensemble(model, cfg)

    def test_generic_feedback_callable(self):
        # a custom rule must reproduce the built-in trap shift exactly
        p = ProtocolParams(1.0, 1.0, 1.5, 3.0, ProtocolKind.LOWPASS2)
        fast = oscillator_cooling_model(p, 7)
        osc = build_truncated_oscillator(7, 1.0)
        trap = shifted_trap_feedback(osc, 1)
        slow = SystemModel(fast.H0, fast.measured_ops, p.lam, fast.filter_model,
                           lambda G: trap(G))
        cfg = TrajectoryConfig(dt=1e-3, n_steps=40, n_traj=4, base_seed=6,
                               record_stride=10)
        ra = run_ensemble(fast, cfg)
        rb = run_ensemble(slow, cfg)
        assert np.abs(ra.energy_mean - rb.energy_mean).max() < 1e-12
        assert np.array_equal(ra.signal_mean, rb.signal_mean)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrajectoryConfig(dt=0.0, n_steps=10, n_traj=1, base_seed=0)
        with pytest.raises(ValueError):
            TrajectoryConfig(dt=1e-3, n_steps=10, n_traj=1, base_seed=0,
                             record_stride=3)
