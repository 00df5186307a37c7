import io

import numpy as np
import pytest

from quadcptp import fock
from quadcptp.analytic import tuned_oscillator_spec
from quadcptp.cptp import Verdict, analyze
from quadcptp.dynamics import (
    MomentState,
    classical_limit_matrices,
    evolve_moments,
    gibbs_covariance,
    is_physical,
    moment_generator,
    physicality_margin,
    stationary_covariance,
    trajectory_header,
    williamson,
    write_trajectory_csv,
)
from quadcptp.errors import NotHurwitz, NotPositiveDefinite, StepUnderflow
from quadcptp.model import BathSpec, SystemSpec, network_hessian, symplectic_form
from quadcptp.propagators import real_propagator

from conftest import loglog_slope, random_spec, random_symmetric


def _rates_from_fock(spec, N=28, mean=(0.3, -0.2), squeeze=0.2):
    """d<x>/dt and d(sigma)/dt read off the Fock generator applied to a Gaussian state."""
    f = fock.build_fock(spec, N, frame="auto")
    d = analyze(spec)
    g = fock.generator_qtcl(f, d.xi_matrix, spec.xi)
    rho = fock.gaussian_pure_state(f, np.array(mean), squeeze)
    drho = g.apply(rho)
    m, _ = f.moments(rho)
    x = f.x
    dm = np.array([np.trace(xj @ drho).real for xj in x])
    second = np.real(np.einsum("jkab,ba->jk", f.second, drho))
    dsecond = 0.5 * (second + second.T)
    dcov = dsecond - np.outer(dm, m) - np.outer(m, dm)
    sigma = f.moments(rho)[1]
    return m, sigma, dm, dcov


def test_moment_rates_match_fock(rng):
    for _ in range(5):
        spec = random_spec(rng, 1, beta=(0.3, 1.5))
        m, sigma, dm, dcov = _rates_from_fock(spec)
        g = moment_generator(spec)
        np.testing.assert_allclose(g.mean_rate(m), dm, atol=1e-8)
        np.testing.assert_allclose(g.cov_rate(sigma), dcov, atol=1e-8)


def test_zero_coupling_is_hamiltonian_flow(rng):
    H = random_symmetric(rng, 4, "pd")
    spec = SystemSpec(H, [BathSpec(0, 0, 1.0)] * 2)
    g = moment_generator(spec)
    np.testing.assert_array_equal(g.drift, symplectic_form(2) @ H)
    assert not np.any(g.diffusion)


def test_hamiltonian_flow_transports_covariance(rng):
    H = random_symmetric(rng, 4, "pd")
    spec = SystemSpec(H, [BathSpec(0, 0, 1.0)] * 2)
    g = moment_generator(spec)
    s0 = 0.5 * np.eye(4) + 0.1 * np.diag([1, 2, 3, 4])
    m0 = rng.normal(size=4)
    t = np.linspace(0, 3, 31)
    states = evolve_moments(g, MomentState(m0, s0), t)
    for st in states:
        S = real_propagator(H, st.time)
        np.testing.assert_allclose(st.cov, S @ s0 @ S.T, atol=1e-8)
        np.testing.assert_allclose(st.mean, S @ m0, atol=1e-8)


def test_constant_trajectory_for_zero_generator():
    spec = SystemSpec(np.zeros((2, 2)), [BathSpec(0, 0, 1.0)])
    g = moment_generator(spec)
    m0, s0 = np.array([1.0, 2.0]), np.eye(2)
    for st in evolve_moments(g, MomentState(m0, s0), np.linspace(0, 5, 6)):
        np.testing.assert_array_equal(st.mean, m0)
        np.testing.assert_array_equal(st.cov, s0)


def test_evolve_validates_grid():
    g = moment_generator(SystemSpec(np.eye(2), [BathSpec(0.1, 0.1, 1.0)]))
    init = MomentState(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        evolve_moments(g, init, [0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        evolve_moments(g, init, [1.0, 2.0])


def test_step_underflow():
    g = moment_generator(SystemSpec(np.eye(2), [BathSpec(0.1, 0.1, 1.0)]))
    t0 = 1e17
    init = MomentState(np.zeros(2), np.eye(2), time=t0)
    with pytest.raises(StepUnderflow):
        evolve_moments(g, init, [t0, t0 + 64.0])


def test_richardson_error_estimate_small():
    spec = tuned_oscillator_spec(1, 1, 2, 1, 0.5)
    states = evolve_moments(moment_generator(spec), MomentState(np.array([1.0, 0]), 0.5 * np.eye(2)),
                            np.linspace(0, 10, 21))
    assert max(s.error for s in states) < 1e-8


def test_tuned_harmonic_stays_physical():
    spec = tuned_oscillator_spec(1.2, 0.9, 2.0, 1.0, 0.5)
    g = moment_generator(spec)
    s0 = np.diag([0.5 * 0.3, 0.5 / 0.3])  # squeezed minimum-uncertainty state
    states = evolve_moments(g, MomentState(np.array([1.0, -1.0]), s0), np.linspace(0, 20, 81))
    assert all(s.physical for s in states)


def test_tuned_mean_decay_rate():
    """Amplitude decays as exp(-gamma_tilde t) with the optical couplings."""
    gt = 0.3
    spec = tuned_oscillator_spec(1.0, 1.0, 2.0, 1.0, gt)
    g = moment_generator(spec)
    rates = -np.linalg.eigvals(g.drift).real
    np.testing.assert_allclose(rates, [gt, gt], rtol=1e-12)


def test_physicality_margin_vacuum():
    assert physicality_margin(0.5 * np.eye(2), 1.0) == pytest.approx(0.0, abs=1e-15)
    assert not is_physical(0.2 * np.eye(2), 1.0)


def test_diffusion_psd_when_cptp(rng):
    for _ in range(40):
        spec = random_spec(rng, 2, beta=(0.05, 1.0))
        d = analyze(spec)
        if d.verdict is not Verdict.CPTP:
            continue
        g = moment_generator(spec, d)
        np.testing.assert_allclose(g.diffusion, g.diffusion.T, atol=0)
        assert np.linalg.eigvalsh(g.diffusion)[0] >= -1e-10 * np.linalg.norm(g.diffusion)


def test_fixed_point_shift_defaults_to_xi(rng):
    spec = random_spec(rng, 2)
    g = moment_generator(spec)
    np.testing.assert_array_equal(g.fixed_point_shift, spec.xi)
    np.testing.assert_allclose(g.mean_rate(spec.xi), 0, atol=1e-14)


def test_stationary_covariance_tuned_harmonic():
    g = moment_generator(tuned_oscillator_spec(1, 1, 2, 1, 0.5))
    sigma = stationary_covariance(g)
    np.testing.assert_allclose(sigma, 0.5 / np.tanh(1) * np.eye(2), atol=1e-12)
    assert np.linalg.norm(g.cov_rate(sigma)) <= 1e-10 * np.linalg.norm(g.diffusion)


def test_stationary_covariance_zero_diffusion(rng):
    from quadcptp.dynamics import MomentGenerator

    A = -np.eye(2) + 0.3 * symplectic_form(1)
    g = MomentGenerator(A, np.zeros((2, 2)), np.zeros(2), 1.0, np.zeros(2))
    np.testing.assert_array_equal(stationary_covariance(g), np.zeros((2, 2)))


def test_stationary_covariance_not_hurwitz():
    g = moment_generator(SystemSpec(np.eye(2), [BathSpec(0, 0, 1.0)]))
    with pytest.raises(NotHurwitz):
        stationary_covariance(g)


def test_classical_generator_stationary_is_boltzmann(rng):
    H = random_symmetric(rng, 2, "pd")
    beta = 1.7
    spec = SystemSpec(H, [BathSpec(0.4, 0.6, beta)])
    from quadcptp.dynamics import MomentGenerator

    A, D = classical_limit_matrices(spec)
    sigma = stationary_covariance(MomentGenerator(A, D, np.zeros(2), 1.0, np.zeros(2)))
    np.testing.assert_allclose(sigma, np.linalg.inv(H) / beta, atol=1e-12)


def test_gibbs_harmonic():
    np.testing.assert_allclose(gibbs_covariance(np.eye(2), 2.0, 1.0), 0.5 / np.tanh(1) * np.eye(2), atol=1e-15)
    m, w, b, h = 1.3, 0.7, 1.5, 0.8
    c = 0.5 * h / np.tanh(0.5 * h * b * w)
    np.testing.assert_allclose(
        gibbs_covariance(np.diag([m * w * w, 1 / m]), b, h), c * np.diag([1 / (m * w), m * w]), rtol=1e-13
    )


def test_gibbs_matches_fock_thermal_state(rng):
    H = random_symmetric(rng, 2, "pd")
    spec = SystemSpec(H, [BathSpec(0.1, 0.1, 1.0)])
    f = fock.build_fock(spec, 40, frame="auto")
    _, cov = f.moments(fock.thermal_state(f, 1.3))
    np.testing.assert_allclose(gibbs_covariance(H, 1.3, 1.0), cov, atol=1e-10)


def test_gibbs_classical_limit(rng):
    H = random_symmetric(rng, 4, "pd")
    np.testing.assert_allclose(gibbs_covariance(H, 1e-4, 1.0), np.linalg.inv(H) / 1e-4, rtol=1e-7)


def test_gibbs_requires_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        gibbs_covariance(np.diag([1.0, -1.0]), 1.0, 1.0)


def test_williamson_network_spectrum():
    nu, S = williamson(network_hessian(1.0, 1.0))
    np.testing.assert_allclose(nu, [1.0, np.sqrt(3)], rtol=1e-13)
    # the same frequencies from diagonalizing J H
    w = np.sort(np.abs(np.linalg.eigvals(symplectic_form(2) @ network_hessian(1.0, 1.0)).imag))
    np.testing.assert_allclose(nu, w[::2], rtol=1e-12)


def test_williamson_reconstruction(rng):
    for n in (1, 2, 3):
        H = random_symmetric(rng, 2 * n, "pd")
        nu, S = williamson(H)
        J = symplectic_form(n)
        np.testing.assert_allclose(S.T @ np.diag(np.concatenate([nu, nu])) @ S, H, atol=1e-11)
        np.testing.assert_allclose(S @ J @ S.T, J, atol=1e-11)


def test_classical_limit_matrices_zero_and_kramers():
    H = np.diag([1.3, 0.7])
    A, D = classical_limit_matrices(SystemSpec(H, [BathSpec(0, 0, 1.0)]))
    np.testing.assert_array_equal(A, symplectic_form(1) @ H)
    assert not np.any(D)
    gp, beta = 0.4, 2.0
    A, D = classical_limit_matrices(SystemSpec(H, [BathSpec(0, gp, beta)]))
    # textbook Kramers drift: dq = H22 p, dp = -H11 q - gp H22 p
    np.testing.assert_allclose(A, [[0, 0.7], [-1.3, -gp * 0.7]], atol=1e-15)
    np.testing.assert_allclose(D, np.diag([0, 2 * gp / beta]), atol=1e-15)


def test_moment_generator_classical_limit_rate(rng):
    """(A, D_dyn) approach the Fokker-Planck pair; the defect shrinks as hbar^2."""
    spec = random_spec(rng, 2, xi=False)
    A_cl, D_cl = classical_limit_matrices(spec)
    hbars = [0.2 / 2**k for k in range(5)]
    errs = []
    for h in hbars:
        g = moment_generator(spec.replace(hbar=h))
        errs.append(max(np.linalg.norm(g.drift - A_cl), np.linalg.norm(g.diffusion - D_cl)))
    assert loglog_slope(hbars, errs) == pytest.approx(2.0, abs=0.1)


def test_trajectory_csv_columns():
    spec = tuned_oscillator_spec(1, 1, 2, 1, 0.5)
    states = evolve_moments(moment_generator(spec), MomentState(np.zeros(2), 0.5 * np.eye(2)), [0, 1])
    buf = io.StringIO()
    write_trajectory_csv(states, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,mean_1,mean_2,cov_11,cov_12,cov_22,physical"
    assert len(lines) == 3 and lines[1].endswith(",1")
    assert trajectory_header(2)[-2] == "cov_44"
    # 17 significant digits round-trip exactly
    vals = [float(v) for v in lines[2].split(",")[:-1]]
    assert vals[3] == states[1].cov[0, 0]
