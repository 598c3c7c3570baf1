import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ammonia_qmd import qdyn
from ammonia_qmd.qdyn import (
    ConfigError,
    ContractViolation,
    ImpactEvent,
    QuantumModelConfig,
    StateVector,
    basis_transform,
    density_matrix,
    free_propagate,
    from_energy_basis,
    impact_propagate,
    impact_propagate_matched,
)

from .conftest import close_state, random_state

TWO_PI = 2 * math.pi
INV_SQRT2 = 1 / math.sqrt(2)

finite = st.floats(-1e3, 1e3, allow_nan=False)
phases = st.floats(0, TWO_PI, allow_nan=False)


@st.composite
def states(draw):
    x = [draw(st.floats(-1, 1, allow_nan=False)) for _ in range(4)]
    a, b = complex(x[0], x[1]), complex(x[2], x[3])
    n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if n < 1e-3:
        return StateVector(1 + 0j, 0j)
    return StateVector(a / n, b / n)


class TestFreePropagate:
    def test_half_period_swaps_wells(self):
        s = free_propagate(StateVector(1, 0), 0.5)
        assert abs(s.alpha) < 1e-15
        assert abs(s.beta - (-1j)) < 1e-15

    def test_quarter_period_is_half_occupancy(self):
        s = free_propagate(StateVector(1, 0), 0.25)
        assert s.occupancy == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("t", [0.1, 0.37, 1.0, 12.3])
    def test_energy_eigenstate_is_stationary(self, t):
        s = free_propagate(StateVector(INV_SQRT2, INV_SQRT2), t)
        assert s.occupancy == pytest.approx(0.5, abs=1e-15)

    def test_matches_matrix_exponential(self, rng):
        from scipy.linalg import expm

        h = np.array([[0, math.pi], [math.pi, 0]])
        for _ in range(20):
            s, t = random_state(rng), rng.uniform(0, 3)
            want = expm(-1j * h * t) @ np.array([s.alpha, s.beta])
            got = free_propagate(s, t)
            assert abs(got.alpha - want[0]) < 1e-12
            assert abs(got.beta - want[1]) < 1e-12

    def test_occupancy_beat_formula(self, rng):
        for _ in range(20):
            s, t = random_state(rng), rng.uniform(0, 2)
            a, b = basis_transform(s)
            phi = cmath.phase(a * b.conjugate())
            want = 0.5 + abs(a) * abs(b) * math.cos(TWO_PI * t - phi)
            assert free_propagate(s, t).occupancy == pytest.approx(want, abs=1e-12)

    def test_rejects_unnormalized(self):
        with pytest.raises(ContractViolation):
            free_propagate(StateVector(1, 1), 0.1)

    def test_zero_time_is_identity(self, rng):
        s = random_state(rng)
        assert close_state(free_propagate(s, 0.0), s, 0.0)

    @given(states(), st.floats(0, 50), st.floats(0, 50))
    def test_composition(self, s, t1, t2):
        once = free_propagate(s, t1 + t2)
        twice = free_propagate(free_propagate(s, t1), t2)
        assert close_state(once, twice, 1e-12)


class TestImpactPropagate:
    def test_zero_strength_is_free(self, rng):
        for _ in range(50):
            s, d = random_state(rng), rng.uniform(0, 1)
            for side in ("left", "right"):
                got = impact_propagate(s, d, side, omega_p=0.0)
                assert close_state(got, free_propagate(s, d), 1e-14)

    def test_perturbed_splitting_against_eigensolver(self):
        h = np.array([[60.0, math.pi], [math.pi, 0.0]])
        e = np.linalg.eigvalsh(h)
        assert e[1] - e[0] == pytest.approx(math.hypot(60, TWO_PI), rel=1e-13)
        # Quoted as ~60.327; the eigensolver and direct arithmetic both give 60.3281.
        assert math.hypot(60, TWO_PI) == pytest.approx(60.327, abs=2e-3)

    def test_matches_eigenvector_matching(self, rng):
        # Solving for (a_P, b_P) at onset and re-expanding at offset.
        for _ in range(1000):
            s = random_state(rng)
            d = rng.uniform(0, 0.2)
            wp = rng.uniform(0, 5000)
            side = "left" if rng.random() < 0.5 else "right"
            closed = impact_propagate(s, d, side, omega_p=wp)
            matched = impact_propagate_matched(s, d, side, omega_p=wp)
            assert close_state(closed, matched, 1e-10)

    def test_matched_route_keeps_omega0_out(self, rng):
        s, d = random_state(rng), 0.01
        a = impact_propagate_matched(s, d, omega_p=100.0, omega0=0.0)
        b = impact_propagate_matched(s, d, omega_p=100.0, omega0=17.0)
        assert close_state(a, b, 1e-12)

    def test_preserves_norm(self, rng):
        for _ in range(200):
            s = impact_propagate(random_state(rng), rng.uniform(0, 1), omega_p=rng.uniform(0, 1e4))
            assert s.norm2 == pytest.approx(1.0, abs=1e-13)

    def test_strong_impact_is_nearly_a_phase_kick(self):
        # omega_p >> omega1: the precession axis tilts by ~omega1/omega_p, so
        # occupancy moves by at most ~2*omega1/omega_p during the impact.
        s = StateVector(INV_SQRT2, INV_SQRT2)
        out = impact_propagate(s, 0.5 * TWO_PI / (260 * TWO_PI), omega_p=260 * TWO_PI)
        assert abs(out.occupancy - 0.5) < 2 / 260

    def test_two_impact_scenario_keeps_norm(self):
        cfg = QuantumModelConfig(omega_p=60.0, dt=1 / 1000, n_cycles=3)
        gen = np.random.default_rng(1)
        events = [ImpactEvent(700, gen.uniform(0, TWO_PI / 60)),
                  ImpactEvent(1600, gen.uniform(0, TWO_PI / 60))]
        traj = qdyn.evolve(cfg, events, from_energy_basis(INV_SQRT2, INV_SQRT2))
        a, b = basis_transform(traj.final_state)
        assert abs(a) ** 2 + abs(b) ** 2 == pytest.approx(1.0, abs=1e-12)
        # Initial a = b = 1/sqrt2 starts fully in the left well and beats fully.
        assert traj.occupancy[0] == pytest.approx(1.0)
        assert traj.occupancy[:700].min() < 1e-5

    def test_reported_two_impact_coefficients_are_normalized_within_rounding(self):
        a, b = 0.54 - 0.73j, 0.36 + 0.22j
        assert abs(a) ** 2 + abs(b) ** 2 == pytest.approx(1.0, abs=5e-3)


class TestBasisTransform:
    def test_left_well_is_equal_superposition(self):
        a, b = basis_transform(StateVector(1, 0))
        assert a == pytest.approx(INV_SQRT2) and b == pytest.approx(INV_SQRT2)

    def test_symmetric_state_is_ground(self):
        a, b = basis_transform(StateVector(INV_SQRT2, INV_SQRT2))
        assert abs(a - 1) < 1e-15 and abs(b) < 1e-15

    @given(states())
    def test_round_trip(self, s):
        back = from_energy_basis(*basis_transform(s))
        assert close_state(back, s, 1e-14)


class TestDensityMatrix:
    def test_left(self):
        r = density_matrix(StateVector(1, 0))
        assert (r.rho_LL, r.rho_RR, r.rho_LR) == (1, 0, 0)

    def test_symmetric(self):
        r = density_matrix(StateVector(INV_SQRT2, INV_SQRT2))
        assert r.rho_LL == pytest.approx(0.5) and r.rho_LR == pytest.approx(0.5)

    def test_imaginary_coherence(self):
        r = density_matrix(StateVector(INV_SQRT2, 1j * INV_SQRT2))
        assert r.rho_LR == pytest.approx(-0.5j)

    @given(states())
    def test_pure_state_invariants(self, s):
        r = density_matrix(s)
        assert r.trace == pytest.approx(1.0, abs=1e-12)
        assert abs(r.rho_LR) ** 2 == pytest.approx(r.rho_LL * r.rho_RR, abs=1e-12)
        assert r.determinant >= -1e-12
        m = r.as_array()
        assert np.allclose(m, m.conj().T, atol=0)


class TestConfig:
    def test_presets(self):
        assert qdyn.preset("nh3").omega_p == pytest.approx(260 * TWO_PI)
        assert qdyn.preset("ND3").omega_p == pytest.approx(3925 * TWO_PI)

    @pytest.mark.parametrize(
        "kw",
        [
            {"dt": 0.2},
            {"p_rate": -1},
            {"n_cycles": 0.5},
            {"p_rate": 40.0},  # dt*p > 0.5
            {"p_rate": 70.0},  # dt*p > 1
            {"impact_side": "up"},
            {"n_cycles": 10.001},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            QuantumModelConfig(omega_p=260 * TWO_PI, **kw)

    def test_duration_bound_enforced_for_random_impacts(self):
        with pytest.raises(ConfigError, match="duration bound"):
            QuantumModelConfig(omega_p=60.0, p_rate=1.0)
        QuantumModelConfig(omega_p=60.0, p_rate=0.0)  # scripted runs are fine

    def test_zero_strength_with_impacts_rejected(self):
        with pytest.raises(ConfigError):
            QuantumModelConfig(omega_p=0.0, p_rate=1.0)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            qdyn.preset("ch4")


class TestTrajectory:
    def test_unperturbed_is_exact_rabi(self):
        cfg = qdyn.preset("nh3", n_cycles=8)
        ts = qdyn.simulate_trajectory(cfg)
        t = ts.times
        assert len(ts) == 8 * 64
        assert np.max(np.abs(ts.values - 0.5 * (1 + np.cos(TWO_PI * t)))) < 1e-13

    def test_impact_durations_and_rate(self):
        cfg = qdyn.preset("nh3", p_rate=4.0, n_cycles=512, seed=3)
        ev = qdyn.draw_impacts(cfg)
        d = np.array([e.duration for e in ev])
        assert d.min() >= 0 and d.max() <= cfg.max_duration
        # Poisson count: mean 2048, sd ~45.
        assert abs(len(ev) - 4.0 * 512) < 5 * math.sqrt(2048)

    def test_same_seed_bit_identical(self):
        cfg = qdyn.preset("nh3", p_rate=3.0, n_cycles=64, seed=99)
        a = qdyn.simulate_trajectory(cfg, index=2).values
        b = qdyn.simulate_trajectory(cfg, index=2).values
        assert a.tobytes() == b.tobytes()
        c = qdyn.simulate_trajectory(cfg, index=3).values
        assert not np.array_equal(a, c)

    @given(phases)
    @settings(max_examples=20, deadline=None)
    def test_global_phase_invariance(self, phase):
        cfg = qdyn.preset("nh3", p_rate=5.0, n_cycles=16, seed=5)
        s0 = StateVector(0.6 + 0j, 0.8j)
        y0 = qdyn.simulate_trajectory(cfg, s0).values
        y1 = qdyn.simulate_trajectory(cfg, s0.with_phase(phase)).values
        assert np.max(np.abs(y0 - y1)) < 1e-14

    def test_unitarity_over_a_million_steps(self):
        cfg = qdyn.preset("nh3", p_rate=8.0, n_cycles=16384, seed=11)
        traj = qdyn.evolve(cfg, qdyn.draw_impacts(cfg), None)
        assert traj.alpha.size >= 10**6
        assert len(traj.impacts) > 10**5
        assert np.max(np.abs(traj.norm2 - 1.0)) < 1e-9
        assert traj.renormalizations >= 0

    def test_kick_does_not_touch_the_recorded_sample(self):
        cfg = QuantumModelConfig(omega_p=260 * TWO_PI, dt=1 / 64, n_cycles=1)
        free = qdyn.evolve(cfg, [])
        kicked = qdyn.evolve(cfg, [ImpactEvent(10, 0.001)])
        assert np.array_equal(free.alpha[:11], kicked.alpha[:11])
        assert not np.allclose(free.alpha[11:], kicked.alpha[11:])

    def test_kick_at_first_sample(self):
        cfg = QuantumModelConfig(omega_p=260 * TWO_PI, dt=1 / 64, n_cycles=1)
        ev = ImpactEvent(0, 0.002)
        traj = qdyn.evolve(cfg, [ev])
        want = free_propagate(impact_propagate(StateVector(1, 0), 0.002, omega_p=cfg.omega_p), cfg.dt)
        assert traj.alpha[0] == 1
        assert abs(traj.alpha[1] - want.alpha) < 1e-14

    def test_segments_match_stepwise_propagation(self, rng):
        cfg = qdyn.preset("nh3", p_rate=6.0, n_cycles=4, seed=8)
        events = qdyn.draw_impacts(cfg)
        traj = qdyn.evolve(cfg, events)
        s = StateVector(1 + 0j, 0j)
        by_index = {e.index: e for e in events}
        for k in range(cfg.n_samples):
            assert abs(traj.alpha[k] - s.alpha) < 1e-12
            if k in by_index:
                e = by_index[k]
                s = impact_propagate(s, e.duration, e.side, cfg.omega_p)
            s = free_propagate(s, cfg.dt)

    def test_impact_outside_record(self):
        cfg = QuantumModelConfig(omega_p=100.0, n_cycles=1)
        with pytest.raises(ContractViolation):
            qdyn.evolve(cfg, [ImpactEvent(64, 0.01)])

    def test_side_policies_share_impacts(self):
        cfg = qdyn.preset("nh3", p_rate=3.0, n_cycles=32, seed=4)
        left = qdyn.draw_impacts(cfg.with_(impact_side="left"))
        rand = qdyn.draw_impacts(cfg)
        assert [e.index for e in left] == [e.index for e in rand]
        assert {e.side for e in left} == {"left"}
        assert {e.side for e in rand} == {"left", "right"}


class TestCoherence:
    def test_unperturbed_average_against_quadrature(self):
        oracle, _ = quad(lambda t: abs(math.cos(math.pi * t) * math.sin(math.pi * t)), 0, 1)
        assert oracle == pytest.approx(1 / math.pi, rel=1e-10)
        cfg = qdyn.preset("nh3", n_cycles=64)
        stats = qdyn.coherence_statistics(qdyn.simulate_ensemble(cfg, 1))
        assert stats.mean_abs_coherence == pytest.approx(oracle, rel=1e-3)

    def test_stationary_ensemble(self):
        cfg = qdyn.preset("nh3", n_cycles=16)
        trajs = qdyn.simulate_ensemble(cfg, 3, StateVector(INV_SQRT2, INV_SQRT2))
        stats = qdyn.coherence_statistics(trajs)
        assert stats.mean_abs_coherence == pytest.approx(0.5, abs=1e-14)
        assert stats.ensemble_coherence == pytest.approx(0.5, abs=1e-14)
        for t in trajs:
            assert np.allclose(np.abs(t.coherence), 0.5, atol=1e-14)

    def test_histogram_and_window(self):
        cfg = qdyn.preset("nh3", p_rate=7.5, n_cycles=64, seed=1)
        stats = qdyn.coherence_statistics(qdyn.simulate_ensemble(cfg, 4), window=(32, 64))
        assert stats.window == (32.0, 64.0)
        assert stats.histogram.sum() == 4 * 32 * 64
        assert 0 <= stats.edge_fraction <= 1

    def test_empty_inputs(self):
        cfg = qdyn.preset("nh3", n_cycles=4)
        with pytest.raises(ContractViolation):
            qdyn.coherence_statistics([])
        with pytest.raises(ContractViolation):
            qdyn.coherence_statistics(qdyn.simulate_ensemble(cfg, 1), window=(3, 3))
