import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from scipy import integrate

from _support import commutator
from corrthermo.errors import PreconditionError
from corrthermo.linalg import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    bloch_vector,
    evolve_unitary,
    hermitian_part,
    partial_trace,
    qubit_from_bloch,
    random_density_matrix,
    trace_distance,
)
from corrthermo.models import thermalizing as therm

TWO_MODES = ((0.9, 1.0), (1.1, 0.8 + 0.3j))


# --- Hamiltonians and bath states ---------------------------------------------------------


@pytest.mark.parametrize("f", [0.7, 0.6 - 0.2j])
def test_single_mode_single_excitation_coupling(f):
    spec = therm.JaynesCummingsSpec(1.0, 0.3, 1.0, modes=((1.2, f),), n_max=1)
    system = therm.build_jc_hamiltonians(spec)
    # basis |qubit, photons>: |0,0>, |0,1>, |1,0>, |1,1>; |0> is the excited level
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 3] = 0.3 * np.conj(f)
    expected[3, 0] = 0.3 * f
    np.testing.assert_allclose(system.h_int, expected, atol=1e-15)
    np.testing.assert_allclose(system.h_s, np.diag([0.5, -0.5]))
    np.testing.assert_allclose(system.h_b, np.diag([0.0, 1.2]))


def test_zero_coupling_has_no_interaction():
    system = therm.build_jc_hamiltonians(therm.JaynesCummingsSpec(1.0, 0.0, 1.0, modes=TWO_MODES))
    assert np.max(np.abs(system.h_int)) == 0


def test_excitation_number_is_conserved():
    spec = therm.JaynesCummingsSpec(1.0, 0.4, 1.0, modes=((0.9, 1.0), (1.3, 0.5j)), n_max=2)
    system = therm.build_jc_hamiltonians(spec)
    ops = therm.mode_operators(2, 2)
    number = np.kron(SIGMA_PLUS @ SIGMA_MINUS, np.eye(9)) + np.kron(np.eye(2), sum(a.conj().T @ a for a in ops))
    assert np.max(np.abs(commutator(system.h_tot, number))) < 1e-13


def test_spec_validation():
    with pytest.raises(ValueError):
        therm.JaynesCummingsSpec(0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        therm.JaynesCummingsSpec(1.0, 0.1, -1.0)
    with pytest.raises(ValueError):
        therm.JaynesCummingsSpec(1.0, 0.1, 1.0, modes=((1.0, 1.0),), n_max=0)
    with pytest.raises(ValueError):
        therm.JaynesCummingsSpec(1.0, 0.1, 1.0, modes=((-1.0, 1.0),))
    with pytest.raises(PreconditionError):
        therm.build_jc_hamiltonians(therm.JaynesCummingsSpec(1.0, 0.1, 1.0))


def test_cold_bath_is_the_vacuum():
    state = therm.thermal_bath_state(therm.JaynesCummingsSpec(1.0, 0.1, 50.0, modes=((1.0, 1.0),), n_max=5))
    expected = np.zeros((6, 6))
    expected[0, 0] = 1
    assert np.max(np.abs(state - expected)) < 1e-20


def test_truncated_occupation_approaches_planck():
    p = therm.truncated_thermal_mode(1.0, 1.0, 20)
    assert p @ np.arange(21) == pytest.approx(1 / (math.e - 1), abs=1e-6)
    n3, _ = therm.truncated_occupations(1.0, 1.0, 3)
    assert n3 < therm.planck_occupation(1.0, 1.0)


def test_bath_state_factorizes_across_modes():
    spec = therm.JaynesCummingsSpec(1.0, 0.1, 0.7, modes=TWO_MODES, n_max=3)
    state = therm.thermal_bath_state(spec)
    singles = [np.diag(therm.truncated_thermal_mode(w, 0.7, 3)) for w, _ in TWO_MODES]
    np.testing.assert_allclose(state, np.kron(*singles), atol=1e-16)


def test_planck_occupation():
    assert therm.planck_occupation(math.log(2), 1.0) == pytest.approx(1.0, abs=1e-15)
    getcontext().prec = 40
    exact = 1 / (Decimal(1).exp() - 1)
    assert therm.planck_occupation(1.0, 1.0) == pytest.approx(float(exact), rel=1e-15)
    values = therm.planck_occupation(np.array([1.0, 5.0, 20.0, 80.0]), 1.0)
    assert np.all(np.diff(values) < 0) and values[-1] < 1e-34
    with pytest.raises(ValueError):
        therm.planck_occupation(0.0, 1.0)


# --- continuum rates -----------------------------------------------------------------------


def test_emission_rate_vanishes_where_density_vanishes():
    spec = therm.JaynesCummingsSpec(1.0, 0.2, 1.0, spectral_density=lambda w: w * (w - 1.0) ** 2 * np.exp(-w))
    gamma, _ = therm.emission_rate_and_lamb_shift(spec)
    assert gamma == 0.0


def test_emission_rate_formula():
    spec = therm.JaynesCummingsSpec(1.3, 0.2, 1.0, epsilon=0.5)
    gamma, _ = therm.emission_rate_and_lamb_shift(spec)
    assert gamma == pytest.approx(2 * math.pi * 0.04 * 1.3 * math.exp(-0.65), rel=1e-14)


def test_flat_symmetric_density_gives_no_shift_when_cold():
    spec = therm.JaynesCummingsSpec(
        1.0, 0.2, 200.0, spectral_density=lambda w: np.ones_like(np.asarray(w, dtype=float)), support=(0.5, 1.5)
    )
    _, shift = therm.emission_rate_and_lamb_shift(spec)
    assert shift == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("beta, epsilon", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
def test_ohmic_shift_matches_cauchy_weighted_quadrature(beta, epsilon):
    spec = therm.JaynesCummingsSpec(1.0, 0.1, beta, epsilon=epsilon)

    def g(w):
        if w == 0:
            return 2.0 / beta
        return w * math.exp(-epsilon * w) / math.tanh(0.5 * beta * w)

    cut = 60.0 / epsilon
    # quad's cauchy weight computes PV int g(w)/(w - c); the shift uses 1/(c - w)
    pv, _ = integrate.quad(g, 0.0, cut, weight="cauchy", wvar=1.0, epsabs=1e-13, limit=500)
    tail, _ = integrate.quad(lambda w: g(w) / (1.0 - w), cut, math.inf)
    expected = 4 * 0.01 * (-pv + tail)
    _, shift = therm.emission_rate_and_lamb_shift(spec)
    assert shift == pytest.approx(expected, rel=1e-5)


def test_principal_value_rejects_bad_window():
    with pytest.raises(PreconditionError):
        therm.principal_value(lambda w: 1.0, 1.0, 0.0, 1.0005, 1e-3)


# --- generator and closed-form solution ---------------------------------------------------


def _generator(beta=1.0, lam=0.2, omega0=1.0):
    spec = therm.JaynesCummingsSpec(omega0, lam, beta)
    gamma, shift = therm.emission_rate_and_lamb_shift(spec)
    return spec, gamma, shift, therm.lindblad_generator_example1(spec, gamma, shift)


def test_zero_temperature_generator_decays_to_the_ground_level():
    _, _, _, gen = _generator(beta=200.0)
    ground = np.diag([0.0, 1.0]).astype(complex)
    assert np.max(np.abs(gen(ground))) < 1e-15
    assert np.real(gen(np.diag([1.0, 0.0]))[1, 1]) > 0


@pytest.mark.parametrize("beta", [0.3, 1.0, 4.0])
def test_gibbs_qubit_is_stationary(beta):
    _, _, _, gen = _generator(beta=beta)
    assert np.max(np.abs(gen(therm.gibbs_qubit(1.0, beta)))) <= 1e-12


def test_generator_preserves_trace(rng):
    _, _, _, gen = _generator()
    for _ in range(100):
        assert gen.trace_defect(random_density_matrix(2, rng)) <= 1e-14


def test_analytic_solution_limits():
    sol = therm.AnalyticBlochSolution((0.3, -0.2, 0.5), 0.1, 0.05, 1.0, 2.0)
    np.testing.assert_allclose(sol.bloch(0.0), (0.3, -0.2, 0.5), atol=1e-15)
    np.testing.assert_allclose(therm.analytic_solution_example1(sol, 0.0), qubit_from_bloch((0.3, -0.2, 0.5)), atol=1e-15)
    getcontext().prec = 40
    one = Decimal(1)
    z_inf = -float((one.exp() - (-one).exp()) / (one.exp() + (-one).exp()))
    assert sol.bloch(1e4)[2] == pytest.approx(z_inf, abs=1e-15)
    assert z_inf == pytest.approx(-0.76159, abs=1e-5)
    fixed = therm.AnalyticBlochSolution((0.0, 0.0, -math.tanh(1.0)), 0.1, 0.05, 1.0, 2.0)
    np.testing.assert_allclose(fixed.bloch(np.linspace(0, 50, 11)), np.tile(fixed.bloch0, (11, 1)), atol=1e-15)
    assert sol.gamma_tilde == pytest.approx(0.1 / math.tanh(1.0))


def test_analytic_solution_solves_the_generator():
    spec, gamma, shift, gen = _generator()
    sol = therm.AnalyticBlochSolution((0.6, 0.3, 0.2), gamma, shift, spec.beta, spec.omega0)
    h = 1e-5
    for tau in (0.0 + 2 * h, 1.0, 7.5):
        derivative = (sol.state(tau + h) - sol.state(tau - h)) / (2 * h)
        np.testing.assert_allclose(derivative, gen(sol.state(tau)), atol=1e-9)


def test_random_states_thermalize(rng):
    spec, gamma, shift, _ = _generator()
    gibbs = therm.gibbs_qubit(1.0, 1.0)
    for _ in range(20):
        rho0 = random_density_matrix(2, rng)
        sol = therm.AnalyticBlochSolution(tuple(bloch_vector(rho0)), gamma, shift, spec.beta, spec.omega0)
        late = sol.state(10 / sol.gamma_tilde)
        # populations relax at gamma_tilde, coherences only at gamma_tilde / 2
        assert np.max(np.abs(np.diag(late - gibbs))) <= 1e-3
        assert abs(late[0, 1]) == pytest.approx(abs(rho0[0, 1]) * math.exp(-5.0), rel=1e-12)
        assert trace_distance(sol.state(20 / sol.gamma_tilde), gibbs) <= 1e-3


# --- perturbative states -------------------------------------------------------------------


@pytest.mark.parametrize("detuning", [0.0, 1e-8, 3e-4, 0.2, -1.5])
def test_eta_kernel_matches_quadrature(detuning):
    tau = 3.0
    re, _ = integrate.quad(lambda s: math.cos(detuning * s), 0, tau, epsabs=1e-14)
    im, _ = integrate.quad(lambda s: math.sin(detuning * s), 0, tau, epsabs=1e-14)
    assert abs(therm.eta_kernel(detuning, tau) - (re + 1j * im)) < 1e-12


@pytest.mark.parametrize("p, q", [(0.0, 0.0), (0.3, 0.3), (0.2, -0.1), (1e-7, 0.4), (0.5, 1e-7), (-0.2, 2e-4)])
def test_xi_kernel_matches_quadrature(p, q):
    tau = 2.5

    def integrand(s):
        return np.exp(1j * p * s) * np.conj(therm.eta_kernel(q, s))

    re, _ = integrate.quad(lambda s: integrand(s).real, 0, tau, epsabs=1e-14)
    im, _ = integrate.quad(lambda s: integrand(s).imag, 0, tau, epsabs=1e-14)
    assert abs(therm.xi_kernel(p, q, tau) - (re + 1j * im)) < 1e-11


def test_moment_integral_branches_agree():
    for n in range(4):
        # just below and above the switch between series and recursion
        lo = therm.moment_integral(n, 0.999 / 2.0, 2.0)
        hi = therm.moment_integral(n, 1.001 / 2.0, 2.0)
        assert abs(lo - hi) < 5e-3 * abs(lo)


def test_perturbative_states_trivial_limits():
    rho_s0 = qubit_from_bloch((0.6, 0.3, 0.2))
    spec = therm.JaynesCummingsSpec(1.0, 0.0, 1.0, modes=TWO_MODES, n_max=3)
    rho_s, rho_b = therm.perturbative_states_example1(spec, rho_s0, 2.0)
    u = np.diag(np.exp(-0.5j * 2.0 * np.array([1, -1])))
    np.testing.assert_allclose(rho_s, u @ rho_s0 @ u.conj().T, atol=1e-15)
    np.testing.assert_allclose(rho_b, therm.thermal_bath_state(spec), atol=1e-15)
    spec = therm.JaynesCummingsSpec(1.0, 0.1, 1.0, modes=TWO_MODES, n_max=3)
    rho_s, rho_b = therm.perturbative_states_example1(spec, rho_s0, 0.0)
    np.testing.assert_allclose(rho_s, rho_s0, atol=1e-15)
    np.testing.assert_allclose(rho_b, therm.thermal_bath_state(spec), atol=1e-15)


def test_perturbative_corrections_are_hermitian_and_traceless():
    rho_s0 = qubit_from_bloch((0.6, 0.3, 0.2))
    base = therm.JaynesCummingsSpec(1.0, 0.0, 1.0, modes=TWO_MODES, n_max=3)
    free_s, free_b = therm.perturbative_states_example1(base, rho_s0, 3.0)
    spec = therm.JaynesCummingsSpec(1.0, 0.1, 1.0, modes=TWO_MODES, n_max=3)
    rho_s, rho_b = therm.perturbative_states_example1(spec, rho_s0, 3.0)
    for corr in (rho_s - free_s, rho_b - free_b):
        assert np.max(np.abs(corr - corr.conj().T)) < 1e-15
        assert abs(np.trace(corr)) < 1e-15


def _residuals(lam, tau=5.0):
    spec = therm.JaynesCummingsSpec(1.0, lam, 1.0, modes=TWO_MODES, n_max=3)
    system = therm.build_jc_hamiltonians(spec)
    rho_s0 = qubit_from_bloch((0.6, 0.3, 0.2))
    rho = evolve_unitary(np.kron(rho_s0, therm.thermal_bath_state(spec)), system.h_tot, tau)
    ps, pb = therm.perturbative_states_example1(spec, rho_s0, tau)
    return (
        trace_distance(ps, partial_trace(rho, system.layout, "S")),
        trace_distance(pb, partial_trace(rho, system.layout, "B")),
    )


def test_perturbative_qubit_state_residual_is_fourth_order():
    # odd orders vanish for the qubit, so its residual drops by ~16 when lambda halves
    s1, _ = _residuals(0.02)
    s2, _ = _residuals(0.01)
    assert s1 / s2 == pytest.approx(16, rel=0.1)


def test_perturbative_bath_state_residual_is_third_order():
    _, b1 = _residuals(0.02)
    _, b2 = _residuals(0.01)
    assert b1 / b2 == pytest.approx(8, rel=0.1)


# --- long-time thermodynamics --------------------------------------------------------------


def test_bath_temperature_limit_without_coherence():
    rho = qubit_from_bloch((0.0, 0.0, 0.3))
    assert therm.pseudo_temperature_b_limit(1.0, 2.0, rho) == pytest.approx(0.5, rel=1e-15)


def test_gibbs_initial_state_exchanges_no_heat():
    spec = therm.JaynesCummingsSpec(1.0, 0.1, 1.3)
    rates = therm.longtime_bath_rates_example1(spec, 0.05, therm.gibbs_qubit(1.0, 1.3))
    assert rates.dq_b == pytest.approx(0.0, abs=1e-16)


@pytest.mark.parametrize("bloch", [(0.6, 0.0, 0.2), (0.3, -0.4, -0.5), (0.1, 0.7, 0.6)])
def test_longtime_bath_rates_formulas(bloch):
    beta, w0, gamma = 0.8, 1.2, 0.03
    rho = qubit_from_bloch(bloch)
    spec = therm.JaynesCummingsSpec(w0, 0.1, beta)
    rates = therm.longtime_bath_rates_example1(spec, gamma, rho)
    p0, p1 = (1 + bloch[2]) / 2, (1 - bloch[2]) / 2
    c2 = (bloch[0] ** 2 + bloch[1] ** 2) / 4
    n = 1 / (math.exp(beta * w0) - 1)
    assert rates.dq_b == pytest.approx(4 * w0 * gamma * ((n + 1) * p0 - n * p1 - c2), rel=1e-12)
    assert rates.ds_b == pytest.approx(beta * rates.dq_b, rel=1e-15)
    expected_t = (1 / beta) * (1 + c2 / (n * (p0 - p1) + p0 - c2))
    assert rates.t_pseudo_b_limit == pytest.approx(expected_t, abs=1e-8)


def test_system_pseudo_temperature_limit():
    assert therm.pseudo_temperature_s_limit(1.0, 2.0, (0.0, 0.0, 0.4)) == pytest.approx(0.5, rel=1e-15)
    x0, z0, beta, th = 0.6, 0.2, 1.0, math.tanh(0.5)
    expected = 1 / (beta * (1 - x0**2 / (2 * th * (z0 + th))))
    assert therm.pseudo_temperature_s_limit(1.0, 1.0, (x0, 0.0, z0)) == pytest.approx(expected, rel=1e-14)
    assert therm.pseudo_temperature_s_limit(1.0, 1.0, (0.5, 0.0, -th)) is None


def test_extended_temperature_of_gibbs_vector():
    for beta in (0.5, 1.0, 3.0):
        bloch = (0.0, 0.0, -math.tanh(0.5 * beta * 1.3))
        assert therm.extended_temperature_s(1.3, bloch) == pytest.approx(1 / beta, rel=1e-12)
    out = therm.extended_temperature_s(1.0, np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]))
    assert np.all(np.isnan(out))


def test_system_temperatures_wrapper():
    spec, gamma, shift, _ = _generator()
    sol = therm.AnalyticBlochSolution((0.0, 0.0, 0.5), gamma, shift, 1.0, 1.0)
    limit, series = therm.system_temperatures_example1(sol, np.array([0.0, 1e3]))
    assert limit == pytest.approx(1.0)
    assert series[-1] == pytest.approx(1.0, rel=1e-9)


def test_markov_rates_vanish_at_equilibrium():
    _, _, _, gen = _generator()
    du, ds = therm.markov_system_rates(gen, 1.0, therm.gibbs_qubit(1.0, 1.0))
    assert abs(du) < 1e-15 and abs(ds) < 1e-14


def test_recurrence_time():
    assert therm.recurrence_time([0.9, 1.1]) == pytest.approx(10 * math.pi)
    assert therm.recurrence_time([1.0]) == math.inf


def test_initial_bloch_round_trip():
    assert therm.initial_bloch(qubit_from_bloch((0.1, 0.2, 0.3))) == pytest.approx((0.1, 0.2, 0.3))
    assert np.allclose(bloch_vector(hermitian_part(qubit_from_bloch((0.1, 0.2, 0.3)))), (0.1, 0.2, 0.3))
