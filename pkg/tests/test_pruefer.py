import math

import numpy as np
import pytest

from prueferlab.angles import AngleReducer, boundary_to_theta0
from prueferlab.model import (
    ConstantCoupling,
    EnergyPoint,
    ExponentialGaps,
    LinearEnvelope,
    SpectralConfig,
)
from prueferlab.pruefer import (
    ErgodicConstants,
    ergodic_constants,
    f_coefficients,
    f_eval,
    pruefer_step,
    run_trajectory,
)
from prueferlab.transfer import block_norms

from oracles import total_variation_closed_form


def make_config(lam=0.7, p=0.5, beta=2, depth=6, seed=11, **kw):
    return SpectralConfig(
        sparsity=ExponentialGaps(beta=beta),
        disorder=LinearEnvelope(),
        coupling=ConstantCoupling(p=p),
        energy=EnergyPoint.from_lambda(lam),
        depth=depth,
        seed=seed,
        **kw,
    )


def test_coefficients_frozen_values():
    a, b, c = f_coefficients(0.5, math.pi / 4)
    assert a == pytest.approx(0.8125, abs=1e-15)
    assert b == pytest.approx(-0.1875, abs=1e-15)
    assert c == pytest.approx(0.75, abs=1e-15)


def test_coefficient_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(200):
        q = rng.uniform(0.05, 1.0)
        varphi = rng.uniform(0.05, math.pi - 0.05)
        a, b, c = f_coefficients(q, varphi)
        assert a * a == pytest.approx(b * b + c * c + q**4, rel=1e-12)
        # a - |rho| = a - sqrt(a^2 - q^4) > 0 keeps the log-argument positive
        assert a > math.hypot(b, c)


def test_f_eval_matches_coefficient_form():
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = rng.uniform(0.1, 1.0)
        varphi = rng.uniform(0.2, math.pi - 0.2)
        t = rng.uniform(0.0, math.pi)
        a, b, c = f_coefficients(q, varphi)
        expected = math.log(a + b * math.cos(2 * t) + c * math.sin(2 * t))
        assert f_eval(t, q, varphi) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_growth_rate_frozen_center_band():
    # lam = 0, p = 1/2: r = 1 + (3/4)^2 / (4 * 1/4) = 1.5625
    ec = ergodic_constants(0.5, math.pi / 2)
    assert ec.growth_rate == pytest.approx(1.5625, abs=1e-15)
    assert ec.log_integral == pytest.approx(math.log(1.5625 * 0.25), abs=1e-14)


def test_growth_rate_off_center():
    lam = 0.7
    varphi = math.acos(lam / 2)
    ec = ergodic_constants(0.5, varphi)
    # r = 1 + v^2/(4 - lam^2) with v = (1 - p^2)/p = 1.5
    assert ec.growth_rate == pytest.approx(1.0 + 1.5**2 / (4.0 - lam * lam), rel=1e-14)
    assert ec.log_integral == pytest.approx(-0.891, abs=5e-4)


def test_total_variation_against_closed_form():
    for q, varphi in [
        (0.5, math.pi / 4),
        (0.5, math.acos(0.35)),
        (0.3, 1.1),
        (0.9, 2.0),
        (0.85, math.pi / 2),
    ]:
        ec = ergodic_constants(q, varphi)
        expect = total_variation_closed_form(ec.coeff_a, ec.coeff_b, ec.coeff_c)
        assert ec.total_variation == pytest.approx(expect, abs=1e-8)


def test_total_variation_free_case_zero():
    ec = ergodic_constants(1.0, 1.2)
    assert ec.total_variation == 0.0
    assert ec.growth_rate == 1.0
    assert ec.log_integral == 0.0


def test_mean_kick_integral_by_quadrature():
    # midpoint rule on a fine grid as an independent check of log_integral
    q, varphi = 0.5, math.acos(0.35)
    ts = (np.arange(20000) + 0.5) * (math.pi / 20000)
    mean = np.mean([f_eval(t, q, varphi) for t in ts])
    ec = ergodic_constants(q, varphi)
    assert mean == pytest.approx(ec.log_integral, abs=1e-9)


def test_step_matches_tangent_formula():
    # away from the poles the update is atan((tan t + cot v)/q^2 - cot v) - g v
    q, varphi = 0.6, 1.0
    red = AngleReducer.from_varphi(varphi, 160)
    for t in [0.3, 0.9, 1.4, 2.2, 2.9]:
        got = pruefer_step(t, 7, varphi, q, reducer=red)
        cot = math.cos(varphi) / math.sin(varphi)
        interior = math.atan((math.tan(t) + cot) / (q * q) - cot)
        reduced, _, _ = red.reduce(7)
        expect = (interior - reduced) % math.pi
        assert got == pytest.approx(expect, abs=1e-12)


def test_step_free_case_pure_rotation():
    varphi = math.acos(0.35)
    red = AngleReducer.from_varphi(varphi, 160)
    reduced, _, _ = red.reduce(11)
    got = pruefer_step(0.77, 11, varphi, 1.0, reducer=red)
    assert got == pytest.approx((0.77 - reduced) % math.pi, abs=1e-13)


def test_trajectory_telescopes():
    cfg = make_config(depth=8)
    traj = run_trajectory(cfg)
    total = 0.0
    for k, (th, q) in enumerate(zip(traj.theta, traj.couplings)):
        total += f_eval(th, q, traj.varphi) - 2.0 * math.log(q)
        assert traj.log_r2[k] == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert traj.min_certified_bits >= 48
    assert len(traj) == 8


def test_trajectory_matches_block_vector_norms():
    # the radius must equal the norm of the block product applied to the
    # initial vector matched to theta0, block by block
    cfg = make_config(depth=6, seed=23)
    real = cfg.realization(0)
    theta0 = boundary_to_theta0(cfg.boundary_phase, cfg.energy.varphi)
    traj = run_trajectory(cfg, realization=real, theta0=theta0)
    x0 = (math.cos(theta0 + traj.varphi), math.sin(theta0 + traj.varphi))
    seq = block_norms(real, cfg.energy, cfg.coupling, x0=x0)
    np.testing.assert_allclose(traj.log_r2, seq.log_gx2, rtol=1e-9, atol=1e-9)


def test_trajectory_matches_block_vector_norms_other_boundary():
    cfg = make_config(lam=-0.3, p=0.35, beta=3, depth=5, seed=7,
                      boundary_phase=1.1)
    real = cfg.realization(2)
    theta0 = boundary_to_theta0(1.1, cfg.energy.varphi)
    traj = run_trajectory(cfg, realization=real, theta0=theta0)
    x0 = (math.cos(theta0 + traj.varphi), math.sin(theta0 + traj.varphi))
    seq = block_norms(real, cfg.energy, cfg.coupling, x0=x0)
    np.testing.assert_allclose(traj.log_r2, seq.log_gx2, rtol=1e-9, atol=1e-9)


def test_trajectory_free_case():
    cfg = make_config(p=1.0, depth=10, seed=5)
    real = cfg.realization(0)
    traj = run_trajectory(cfg, realization=real, theta0=0.6)
    np.testing.assert_allclose(traj.log_r2, 0.0, atol=1e-12)
    # angles are pure rotations of theta0 by a_k varphi
    red = AngleReducer.from_energy(cfg.energy, cfg.effective_precision_bits)
    for k, pos in enumerate(real.positions):
        reduced, _, _ = red.reduce(pos)
        assert traj.theta[k] == pytest.approx((0.6 - reduced) % math.pi, abs=1e-9)


def test_trajectory_deterministic():
    cfg = make_config(depth=12, seed=99)
    t1 = run_trajectory(cfg)
    t2 = run_trajectory(cfg)
    np.testing.assert_array_equal(t1.theta, t2.theta)
    np.testing.assert_array_equal(t1.log_r2, t2.log_r2)


def test_trajectory_mean_kick_near_ergodic_value():
    cfg = make_config(depth=600, seed=1)
    traj = run_trajectory(cfg)
    ec = ergodic_constants(0.5, cfg.energy.varphi)
    assert traj.mean_kick == pytest.approx(ec.log_integral, abs=0.1)
    assert isinstance(ec, ErgodicConstants)


def test_angles_live_mod_pi():
    cfg = make_config(depth=200, seed=2)
    traj = run_trajectory(cfg)
    assert np.all(traj.theta >= 0.0)
    assert np.all(traj.theta < math.pi)
