import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import brentq

from _support import commutator, random_product, random_state, random_system
from corrthermo.accounting import (
    BipartiteSystem,
    EnergySplit,
    FluxRates,
    JointState,
    ThermoSnapshot,
    correlation_operator,
    effective_hamiltonians,
    energy_transport_check,
    entropy_production_fixed_t,
    entropy_production_tilde,
    extended_temperature_estimate,
    flux_rates,
    flux_rates_time_dependent,
    internal_energies,
    lindblad_entropy_production,
    pseudo_temperature,
    split_snapshots,
    thermo_quantities,
)
from corrthermo.dynamics import LindbladGenerator
from corrthermo.errors import DimensionError, PreconditionError
from corrthermo.linalg import (
    SIGMA_X,
    SIGMA_Z,
    CompositeLayout,
    evolve_unitary,
    partial_trace,
    random_density_matrix,
    random_hermitian,
    relative_entropy,
    von_neumann_entropy,
)
from corrthermo.models import dephasing as deph
from corrthermo.models import thermalizing as therm

seeds = st.integers(min_value=0, max_value=2**32 - 1)
ALPHAS = (-2.0, 0.0, 0.5, 1.0)


def bell():
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return np.outer(psi, psi).astype(complex)


def zero_interaction(rng, ds=2, db=3):
    return BipartiteSystem(random_hermitian(ds, rng), random_hermitian(db, rng), np.zeros((ds * db, ds * db)))


# --- correlation operator -----------------------------------------------------------------


def test_product_state_has_no_correlations(rng):
    _, _, chi = correlation_operator(random_product(rng), CompositeLayout(2, 3))
    assert np.max(np.abs(chi)) < 1e-15


def test_bell_state_correlation_operator():
    layout = CompositeLayout(2, 2)
    rho_s, rho_b, chi = correlation_operator(bell(), layout)
    np.testing.assert_allclose(rho_s, np.eye(2) / 2, atol=1e-15)
    np.testing.assert_allclose(rho_b, np.eye(2) / 2, atol=1e-15)
    expected = np.array([[0.25, 0, 0, 0.5], [0, -0.25, 0, 0], [0, 0, -0.25, 0], [0.5, 0, 0, 0.25]])
    np.testing.assert_allclose(chi, expected, atol=1e-15)
    for keep in ("S", "B"):
        assert np.max(np.abs(partial_trace(chi, layout, keep))) < 1e-15


def test_classically_correlated_state():
    rho = np.diag([0.5, 0, 0, 0.5]).astype(complex)
    rho_s, rho_b, chi = correlation_operator(rho, CompositeLayout(2, 2))
    np.testing.assert_allclose(rho_s, np.eye(2) / 2)
    np.testing.assert_allclose(rho_b, np.eye(2) / 2)
    np.testing.assert_allclose(chi, np.diag([0.25, -0.25, -0.25, 0.25]), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_correlation_operator_is_traceless_in_both_factors(seed):
    state = random_state(np.random.default_rng(seed), 3, 2)
    assert abs(np.trace(state.chi)) <= 1e-10
    for keep in ("S", "B"):
        assert np.max(np.abs(partial_trace(state.chi, state.layout, keep))) <= 1e-10


# --- effective Hamiltonians and energies --------------------------------------------------


def test_zero_interaction_leaves_bare_hamiltonians(rng):
    system = zero_interaction(rng)
    eff = effective_hamiltonians(system, random_state(rng), EnergySplit(0.3))
    np.testing.assert_allclose(eff.h_s_eff, system.h_s, atol=1e-15)
    np.testing.assert_allclose(eff.h_b_eff, system.h_b, atol=1e-15)
    assert np.max(np.abs(eff.h_int_eff)) < 1e-15


@pytest.mark.parametrize("alpha_s", ALPHAS)
def test_effective_decomposition_and_vanishing_local_traces(rng, alpha_s):
    system, state = random_system(rng), random_state(rng)
    eff = effective_hamiltonians(system, state, EnergySplit(alpha_s))
    rebuilt = np.kron(eff.h_s_eff, np.eye(3)) + np.kron(np.eye(2), eff.h_b_eff) + eff.h_int_eff
    np.testing.assert_allclose(rebuilt, system.h_tot, atol=1e-10)
    # explicit index sums: Tr_S[(rho_S (x) 1) H] and Tr_B[(1 (x) rho_B) H]
    h = eff.h_int_eff.reshape(2, 3, 2, 3)
    on_b = np.einsum("ji,iajb->ab", state.rho_s, h)
    on_s = np.einsum("ba,iajb->ij", state.rho_b, h)
    assert np.max(np.abs(on_b)) <= 1e-10
    assert np.max(np.abs(on_s)) <= 1e-10


def test_mean_field_intermediate(rng):
    system, state = random_system(rng), random_state(rng)
    eff = effective_hamiltonians(system, state, EnergySplit(0.0))
    mean_field = partial_trace(np.kron(np.eye(2), state.rho_b) @ system.h_int, state.layout, "S")
    np.testing.assert_allclose(eff.h_s_prime, system.h_s + mean_field, atol=1e-13)
    m = np.real(np.trace(np.kron(state.rho_s, state.rho_b) @ system.h_int))
    assert eff.mean_interaction == pytest.approx(m, abs=1e-13)


def _dephasing_state(tau, lam=0.1, bloch=(0.6, 0.2, 0.5)):
    spec = deph.DephasingSpec(1.0, lam, 1.0, modes=((1.0, 1.0),), n_max=30)
    system = deph.build_dephasing_hamiltonians(spec)
    rho_s0 = np.eye(2) / 2 + 0.5 * (bloch[0] * SIGMA_X + bloch[2] * SIGMA_Z) + 0.5 * bloch[1] * np.array([[0, -1j], [1j, 0]])
    rho0 = np.kron(rho_s0, deph.thermal_bath_state(spec))
    state = JointState(evolve_unitary(rho0, system.h_tot, tau), system.layout, tau)
    return spec, system, state, bloch[2]


@pytest.mark.parametrize("alpha_s", [1.0, 0.25])
def test_dephasing_effective_qubit_hamiltonian(alpha_s):
    tau = 2.0
    spec, system, state, sz = _dephasing_state(tau)
    delta = float(np.sin(tau / 2) ** 2)  # single mode, w = f = 1
    lam2 = spec.lam**2
    expected = (0.5 - 4 * lam2 * sz * delta) * SIGMA_Z + 4 * lam2 * alpha_s * sz**2 * delta * np.eye(2)
    eff = effective_hamiltonians(system, state, EnergySplit(alpha_s))
    np.testing.assert_allclose(eff.h_s_eff, expected, atol=1e-10)


def test_product_state_has_no_binding_energy(rng):
    state = JointState(random_product(rng), CompositeLayout(2, 3))
    assert internal_energies(random_system(rng), state, EnergySplit(0.4)).u_chi == pytest.approx(0, abs=1e-14)


def test_energy_sum_rule_on_correlated_two_qubits(rng):
    system = random_system(rng, 2, 2)
    state = random_state(rng, 2, 2)
    e = internal_energies(system, state, EnergySplit(0.7))
    direct = np.real(np.trace(state.rho_sb @ system.h_tot))
    assert e.u_s + e.u_b + e.u_chi == pytest.approx(direct, abs=1e-10)
    assert e.u_tot == pytest.approx(direct, abs=1e-10)


def test_dephasing_binding_energy():
    tau = 1.3
    spec, system, state, sz = _dephasing_state(tau)
    expected = -4 * spec.lam**2 * (1 - sz**2) * np.sin(tau / 2) ** 2
    assert internal_energies(system, state).u_chi == pytest.approx(expected, abs=1e-10)


# --- flux rates ----------------------------------------------------------------------------


def test_zero_interaction_gives_zero_fluxes(rng):
    r = flux_rates(zero_interaction(rng), random_state(rng), EnergySplit(0.3))
    for name in ("dq_s", "dq_b", "dw_s", "dw_b", "du_chi", "du_s", "du_b"):
        assert getattr(r, name) == pytest.approx(0, abs=1e-14), name


def test_layout_mismatch_is_rejected(rng):
    with pytest.raises(DimensionError):
        flux_rates(random_system(rng, 2, 3), random_state(rng, 3, 2))


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(ALPHAS))
def test_first_law_antisymmetry_and_heat_balance(seed, alpha_s):
    rng = np.random.default_rng(seed)
    r = flux_rates(random_system(rng), random_state(rng), EnergySplit(alpha_s))
    assert abs(r.du_s - (r.dq_s + r.dw_s)) <= 1e-9
    assert abs(r.du_b - (r.dq_b + r.dw_b)) <= 1e-9
    assert abs(r.dw_s + r.dw_b) <= 1e-12
    assert abs(r.dq_s + r.dq_b + r.du_chi) <= 1e-9


def test_dephasing_fluxes_match_closed_forms():
    tau, alpha_s = 1.7, 0.3
    spec, system, state, sz = _dephasing_state(tau)
    r = flux_rates(system, state, EnergySplit(alpha_s))
    lam2 = spec.lam**2
    dd = 0.5 * np.sin(tau)
    assert r.dq_s == pytest.approx(0, abs=1e-14)
    assert r.dq_b == pytest.approx(4 * lam2 * (1 - sz**2) * dd, abs=1e-10)
    assert r.dw_b == pytest.approx(4 * lam2 * (1 - alpha_s) * sz**2 * dd, abs=1e-10)
    assert r.dw_s == pytest.approx(-r.dw_b, abs=1e-15)


def test_rates_match_finite_differences_along_trajectory(rng):
    system, alpha = random_system(rng), EnergySplit(0.3)
    state = random_state(rng)
    h, layout = 1e-4, state.layout
    r = flux_rates(system, state, alpha)
    around = [JointState(evolve_unitary(state.rho_sb, system.h_tot, s * h), layout) for s in (-1, 1)]
    energies = [internal_energies(system, st_, alpha) for st_ in around]
    effs = [effective_hamiltonians(system, st_, alpha) for st_ in around]
    eff = effective_hamiltonians(system, state, alpha)

    def fd(values):
        return (values[1] - values[0]) / (2 * h)

    assert r.du_s == pytest.approx(fd([e.u_s for e in energies]), abs=1e-6)
    assert r.du_b == pytest.approx(fd([e.u_b for e in energies]), abs=1e-6)
    assert r.du_chi == pytest.approx(fd([e.u_chi for e in energies]), abs=1e-6)
    # heat moves the state under a frozen effective Hamiltonian, work moves the Hamiltonian
    assert r.dq_s == pytest.approx(fd([np.real(np.trace(s_.rho_s @ eff.h_s_eff)) for s_ in around]), abs=1e-6)
    assert r.dq_b == pytest.approx(fd([np.real(np.trace(s_.rho_b @ eff.h_b_eff)) for s_ in around]), abs=1e-6)
    assert r.dw_s == pytest.approx(fd([np.real(np.trace(state.rho_s @ e.h_s_eff)) for e in effs]), abs=1e-6)
    assert r.dw_b == pytest.approx(fd([np.real(np.trace(state.rho_b @ e.h_b_eff)) for e in effs]), abs=1e-6)
    s_s = [von_neumann_entropy(s_.rho_s) for s_ in around]
    assert r.ds_s == pytest.approx(fd(s_s), abs=1e-6)
    assert r.ds_sb == pytest.approx(0, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_heat_entropy_and_total_energy_do_not_depend_on_the_split(seed):
    rng = np.random.default_rng(seed)
    system, state = random_system(rng), random_state(rng)
    runs = [thermo_quantities(system, state, EnergySplit(a)) for a in ALPHAS]
    ref = runs[0]
    for q in runs[1:]:
        for name in ("dq_s", "dq_b", "du_chi", "ds_s", "ds_b"):
            assert abs(getattr(q["rates"], name) - getattr(ref["rates"], name)) <= 1e-10
        for name in ("s_s", "s_b", "s_chi", "u_tot"):
            assert abs(q[name] - ref[name]) <= 1e-10
        if np.isfinite(ref["t_ext_s"]):
            assert abs(q["t_ext_s"] - ref["t_ext_s"]) <= 1e-10 * max(1, abs(ref["t_ext_s"]))
    # the split does move energy and work between S and B
    assert abs(runs[0]["u_s"] - runs[-1]["u_s"]) > 1e-6


# --- driven Hamiltonians -------------------------------------------------------------------


def driven_system(rng, drive_int=True, drive_s=False):
    h_s0, h_b0 = random_hermitian(2, rng), random_hermitian(2, rng)
    v0, v1 = random_hermitian(4, rng), random_hermitian(4, rng)
    k = random_hermitian(2, rng)

    def hook(tau):
        h_s = h_s0 + (np.cos(1.3 * tau) * k if drive_s else 0)
        h_int = v0 + (np.sin(0.8 * tau) * v1 if drive_int else 0)
        return h_s, h_b0, h_int

    def h_dot(tau):
        return (
            -1.3 * np.sin(1.3 * tau) * k if drive_s else np.zeros((2, 2)),
            np.zeros((2, 2)),
            0.8 * np.cos(0.8 * tau) * v1 if drive_int else np.zeros((4, 4)),
        )

    return BipartiteSystem.time_dependent(hook), h_dot


def test_constant_hook_reduces_to_static_rates(rng):
    static = random_system(rng, 2, 2)
    driven = BipartiteSystem.time_dependent(lambda tau: (static.h_s, static.h_b, static.h_int))
    state = random_state(rng, 2, 2)
    a = flux_rates(static, state, EnergySplit(0.4))
    b = flux_rates_time_dependent(driven, state, EnergySplit(0.4))
    for name in FluxRates.__dataclass_fields__:
        assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-9), name


def test_local_drive_keeps_exchange_works_antisymmetric(rng):
    system, h_dot = driven_system(rng, drive_int=False, drive_s=True)
    r = flux_rates_time_dependent(system, JointState(random_density_matrix(4, rng), system.layout, 0.7), EnergySplit(0.6), h_dot)
    assert abs(r.dw_s + r.dw_b) <= 1e-12
    assert abs(r.dw_ext_s) > 1e-6


def test_static_rates_need_a_hook(rng):
    with pytest.raises(PreconditionError):
        flux_rates_time_dependent(random_system(rng), random_state(rng))


def _evolve_driven(system, rho, t0, t1):
    def rhs(t, y):
        r = y.reshape(4, 4)
        h = system.total_hamiltonian(t)
        return (-1j * (h @ r - r @ h)).ravel()

    sol = solve_ivp(rhs, (t0, t1), rho.ravel().astype(complex), rtol=1e-12, atol=1e-14, method="DOP853")
    return sol.y[:, -1].reshape(4, 4)


@pytest.mark.parametrize("alpha_s", [1.0, 0.3, -2.0])
def test_driven_identities_against_finite_differences(rng, alpha_s):
    system, h_dot = driven_system(rng, drive_int=True, drive_s=True)
    split = EnergySplit(alpha_s)
    tau, h = 0.9, 1e-4
    rho = random_density_matrix(4, rng)
    state = JointState(rho, system.layout, tau)
    r = flux_rates_time_dependent(system, state, split, h_dot)
    # sum rules of the driven ledger
    p = np.real(np.trace(np.kron(state.rho_s, state.rho_b) @ h_dot(tau)[2]))
    assert r.du_tot == pytest.approx(r.du_s + r.du_b + r.du_chi, abs=1e-10)
    assert r.dq_s + r.dq_b == pytest.approx(-r.dq_chi, abs=1e-10)
    assert r.dw_s + r.dw_b == pytest.approx(p, abs=1e-10)
    assert r.total_heat == pytest.approx(0, abs=1e-9)
    assert r.du_s == pytest.approx(r.dq_s + r.dw_s + r.dw_ext_s, abs=1e-10)
    # finite-difference oracle on the energies along the driven flow
    around = [JointState(_evolve_driven(system, rho, tau, tau + s * h), system.layout, tau + s * h) for s in (-1, 1)]
    energies = [internal_energies(system, s_, split, tau=float(s_.tau)) for s_ in around]
    for name in ("u_s", "u_b", "u_chi", "u_tot"):
        fd = (getattr(energies[1], name) - getattr(energies[0], name)) / (2 * h)
        assert getattr(r, "d" + name) == pytest.approx(fd, abs=1e-8), name
    # the hook's central difference agrees with the analytic derivative
    r_fd = flux_rates_time_dependent(system, state, split)
    assert r_fd.du_s == pytest.approx(r.du_s, abs=1e-8)


# --- temperatures and entropy productions ------------------------------------------------


def test_pseudo_temperature_cases():
    assert pseudo_temperature(0.3, 0.0) == 0.0
    assert pseudo_temperature(1e-13, 0.5) is None
    assert pseudo_temperature(-0.5, 1.0) == -2.0
    out = pseudo_temperature(np.array([2.0, 0.0]), np.array([1.0, 1.0]))
    assert out[0] == 0.5 and np.isnan(out[1])


def test_tilde_production_with_equal_temperatures_is_antisymmetric():
    t, dw = 0.7, 0.013
    ds_s, ds_b, dq_s, dq_b = 0.21, -0.05, 0.11, -0.31
    # build rates consistent with dU = T dS and dQ = dU - dW
    ds_s, ds_b = (dq_s + dw) / t, (dq_b - dw) / t
    assert entropy_production_tilde(ds_s, dq_s, t) == pytest.approx(-entropy_production_tilde(ds_b, dq_b, t))


def test_tilde_production_two_ways(rng):
    system, state = random_system(rng), random_state(rng)
    r = flux_rates(system, state, EnergySplit(0.5))
    t_s = pseudo_temperature(r.ds_s, r.du_s)
    assert entropy_production_tilde(r.ds_s, r.dq_s, t_s) == pytest.approx(r.dw_s / t_s, abs=1e-9)
    assert entropy_production_tilde(1.0, 0.5, 0.5) == pytest.approx(0.0)  # dW = dU - dQ = 0
    with pytest.raises(PreconditionError):
        entropy_production_tilde(0.1, 0.2, None)


def test_fixed_temperature_production():
    assert entropy_production_fixed_t(0.4, 0.0, 2.0) == 0.4
    assert entropy_production_fixed_t(0.4, 0.2, 0.5) == pytest.approx(0.0)
    with pytest.raises(PreconditionError):
        entropy_production_fixed_t(0.4, 0.2, 0.0)


def test_extended_temperature_cases():
    assert extended_temperature_estimate(0.0, 0.0) is None
    assert extended_temperature_estimate(0.3, 0.0) is None
    assert extended_temperature_estimate(0.2, 0.1) == pytest.approx(0.5)
    with pytest.raises(PreconditionError):
        extended_temperature_estimate(0.2, 0.1, assume_zero_production=False)


def _thermal_generator():
    spec = therm.JaynesCummingsSpec(1.0, 0.2, 1.0, modes=())
    gamma, shift = therm.emission_rate_and_lamb_shift(spec)
    return therm.lindblad_generator_example1(spec, gamma, shift), therm.gibbs_qubit(1.0, 1.0)


def test_lindblad_production_vanishes_at_equilibrium():
    gen, gibbs = _thermal_generator()
    assert lindblad_entropy_production(gibbs, gen, gibbs) == pytest.approx(0, abs=1e-12)


def test_lindblad_production_is_minus_relative_entropy_slope():
    gen, gibbs = _thermal_generator()
    rho = np.diag([0.9, 0.1]).astype(complex)
    step = 1e-4
    sup = gen.superoperator
    flow = [(expm(sup * s * step) @ rho.reshape(-1)).reshape(2, 2) for s in (-1, 1)]
    slope = (relative_entropy(flow[1], gibbs) - relative_entropy(flow[0], gibbs)) / (2 * step)
    assert lindblad_entropy_production(rho, gen, gibbs) == pytest.approx(-slope, abs=1e-6)


def test_lindblad_production_of_dephasing_on_diagonal_states():
    spec = deph.DephasingSpec(1.0, 0.1, 1.0, mode_kind="ohmic-continuum")
    gen = deph.markovian_generator(spec)
    gibbs = therm.gibbs_qubit(1.0, 1.0)
    assert lindblad_entropy_production(np.diag([0.3, 0.7]), gen, gibbs) == pytest.approx(0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_lindblad_production_is_nonnegative(seed):
    rho = random_density_matrix(2, np.random.default_rng(seed))
    gen, gibbs = _thermal_generator()
    assert lindblad_entropy_production(rho, gen, gibbs) >= 0
    spec = deph.DephasingSpec(1.0, 0.1, 1.0, mode_kind="ohmic-continuum")
    assert lindblad_entropy_production(rho, deph.markovian_generator(spec), gibbs) >= 0


def test_lindblad_production_requires_a_fixed_reference():
    gen, _ = _thermal_generator()
    with pytest.raises(PreconditionError):
        lindblad_entropy_production(np.eye(2) / 2, gen, np.diag([0.2, 0.8]))
    with pytest.raises(PreconditionError):
        lindblad_entropy_production(np.eye(2) / 2, LindbladGenerator(SIGMA_Z, ()), np.diag([1.0, 0.0]))


# --- snapshots and the energy-transport relation -----------------------------------------


def test_snapshot_invariants(rng):
    system, state = random_system(rng), random_state(rng)
    q = thermo_quantities(system, state, EnergySplit(0.2), t_ref=0.5)
    assert q["u_s"] + q["u_b"] + q["u_chi"] == pytest.approx(q["u_tot"], abs=1e-9)
    assert q["s_chi"] >= -1e-9
    (snap,) = split_snapshots([0.0], q)
    assert snap.sigma_s == pytest.approx(q["rates"].ds_s - q["rates"].dq_s / 0.5)


def _snapshot(tau, t_s, t_b, du_b, ds_chi, du_chi=0.0):
    rates = FluxRates(0, du_b, 0, 0, 0, 0, du_chi, 0, 0, -ds_chi)
    return ThermoSnapshot(tau, 0, 0, 0, 0, 0, 0, 0, 0, rates, t_s, t_b, None, None, None, None, None, None, None)


def test_transport_check_flags_equal_temperatures():
    (check,) = energy_transport_check([_snapshot(0.0, 0.8, 0.8, 0.1, 0.2)])
    assert check.status == "equal pseudo-temperatures"
    assert energy_transport_check([_snapshot(0.0, 0.8, 0.5, 0.1, 0.2, du_chi=1.0)]) == []


def test_transport_check_without_interaction_is_trivial(rng):
    system = zero_interaction(rng, 2, 2)
    state = random_state(rng, 2, 2)
    snaps = split_snapshots([0.0], thermo_quantities(system, state))
    checks = energy_transport_check(snaps)
    assert checks and all(c.status == "trivial" and c.residual == 0 for c in checks)


def test_transport_relation_at_stationary_binding_energy(rng):
    system = random_system(rng, 2, 2)
    rho0 = random_product(rng, 2, 2)
    dec_h = system.h_tot

    def du_chi(t):
        return flux_rates(system, JointState(evolve_unitary(rho0, dec_h, t), system.layout)).du_chi

    grid = np.linspace(0.05, 6, 400)
    values = [du_chi(t) for t in grid]
    roots = [brentq(du_chi, a, b, xtol=1e-14) for a, b, fa, fb in zip(grid, grid[1:], values, values[1:]) if fa * fb < 0]
    assert roots
    evaluated = 0
    for tau in roots:
        state = JointState(evolve_unitary(rho0, dec_h, tau), system.layout, tau)
        (snap,) = split_snapshots([tau], thermo_quantities(system, state, EnergySplit(0.5)))
        for check in energy_transport_check([snap]):
            if check.status == "evaluated":
                evaluated += 1
                assert check.relative_residual <= 1e-6
    assert evaluated > 0
