"""Energy, heat, work and entropy bookkeeping for a closed bipartite system.

The total Hamiltonian ``H_tot = H_S (x) 1 + 1 (x) H_B + H_int`` is split with
state-dependent effective Hamiltonians

    H_S_eff = H_S + Tr_B[(1 (x) rho_B) H_int] - alpha_S m 1
    H_B_eff = H_B + Tr_S[(rho_S (x) 1) H_int] - alpha_B m 1
    H_int_eff = H_tot - H_S_eff (x) 1 - 1 (x) H_B_eff

with ``m = Tr[rho_S (x) rho_B H_int]`` and ``alpha_S + alpha_B = 1``.  Internal
energies are ``U_X = Tr[rho_X H_X_eff]`` and the binding energy carried by the
correlation operator ``chi = rho_SB - rho_S (x) rho_B`` is ``U_chi =
Tr[chi H_int_eff]``.  Heat is ``Tr[d rho_X H_X_eff]`` and work ``Tr[rho_X d
H_X_eff]``; every rate below is evaluated in closed form from the generator
``d rho_SB / dt = -i [H_tot, rho_SB]`` (never by differencing snapshots).

All state-dependent functions accept batched ``rho_SB`` of shape ``(n, d, d)``
and then return arrays of length ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, PreconditionError
from .linalg import (
    CompositeLayout,
    check_density_matrix,
    entropy_rate,
    expect,
    hermitian_log,
    partial_trace,
    require_hermitian,
    trace,
    trace_product,
    von_neumann_entropy,
)

TEMPERATURE_THRESHOLD = 1e-12

HamiltonianTriple = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class EnergySplit:
    """Distribution of the mean interaction energy; ``alpha_B`` is derived."""

    alpha_s: float = 1.0

    @property
    def alpha_b(self) -> float:
        return 1.0 - self.alpha_s


@dataclass
class BipartiteSystem:
    """Static problem definition, optionally with a time-dependence hook.

    ``hook(tau)`` returns ``(H_S, H_B, H_int)`` at time ``tau``; when it is set
    the stored matrices are the values at ``tau = 0``.
    """

    h_s: np.ndarray
    h_b: np.ndarray
    h_int: np.ndarray
    hook: Callable[[float], HamiltonianTriple] | None = None
    layout: CompositeLayout = field(init=False)

    def __post_init__(self):
        self.h_s = require_hermitian(self.h_s, "H_S")
        self.h_b = require_hermitian(self.h_b, "H_B")
        self.layout = CompositeLayout(self.h_s.shape[0], self.h_b.shape[0])
        self.h_int = require_hermitian(self.h_int, "H_int")
        if self.h_int.shape != (self.layout.total, self.layout.total):
            raise DimensionError(
                f"H_int has shape {self.h_int.shape}, expected {(self.layout.total,) * 2}"
            )

    @classmethod
    def time_dependent(cls, hook: Callable[[float], HamiltonianTriple]) -> "BipartiteSystem":
        h_s, h_b, h_int = hook(0.0)
        return cls(h_s, h_b, h_int, hook=hook)

    @property
    def is_time_dependent(self) -> bool:
        return self.hook is not None

    def hamiltonians(self, tau: float = 0.0) -> HamiltonianTriple:
        if self.hook is None:
            return self.h_s, self.h_b, self.h_int
        h_s, h_b, h_int = self.hook(tau)
        return (
            np.asarray(h_s, dtype=complex),
            np.asarray(h_b, dtype=complex),
            np.asarray(h_int, dtype=complex),
        )

    def total_hamiltonian(self, tau: float = 0.0) -> np.ndarray:
        return compose_total(*self.hamiltonians(tau))

    @property
    def h_tot(self) -> np.ndarray:
        return self.total_hamiltonian(0.0)

    def at(self, tau: float) -> "BipartiteSystem":
        """Frozen copy of the Hamiltonians at ``tau`` without the hook."""
        return BipartiteSystem(*self.hamiltonians(tau))


def compose_total(h_s: np.ndarray, h_b: np.ndarray, h_int: np.ndarray) -> np.ndarray:
    return np.kron(h_s, np.eye(h_b.shape[0])) + np.kron(np.eye(h_s.shape[0]), h_b) + h_int


def correlation_operator(rho_sb: np.ndarray, layout: CompositeLayout):
    """Return ``(rho_S, rho_B, chi)`` with ``chi = rho_SB - rho_S (x) rho_B``."""
    rho_sb = np.asarray(rho_sb, dtype=complex)
    rho_s = partial_trace(rho_sb, layout, "S")
    rho_b = partial_trace(rho_sb, layout, "B")
    return rho_s, rho_b, rho_sb - kron_batched(rho_s, rho_b)


def kron_batched(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product over the last two axes, broadcasting leading axes."""
    out = a[..., :, None, :, None] * b[..., None, :, None, :]
    m, n = a.shape[-1], b.shape[-1]
    return out.reshape(out.shape[:-4] + (m * n, m * n))


@dataclass(frozen=True)
class JointState:
    rho_sb: np.ndarray
    layout: CompositeLayout
    tau: float | np.ndarray = 0.0
    rho_s: np.ndarray = field(init=False, repr=False)
    rho_b: np.ndarray = field(init=False, repr=False)
    chi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rho_s, rho_b, chi = correlation_operator(self.rho_sb, self.layout)
        object.__setattr__(self, "rho_sb", np.asarray(self.rho_sb, dtype=complex))
        object.__setattr__(self, "rho_s", rho_s)
        object.__setattr__(self, "rho_b", rho_b)
        object.__setattr__(self, "chi", chi)

    @property
    def batched(self) -> bool:
        return self.rho_sb.ndim > 2

    def validate(self) -> None:
        check_density_matrix(self.rho_sb, "rho_SB")


def _interaction_blocks(h_int: np.ndarray, layout: CompositeLayout) -> np.ndarray:
    return h_int.reshape(layout.dim_s, layout.dim_b, layout.dim_s, layout.dim_b)


def mean_field_s(h_int: np.ndarray, rho_b: np.ndarray, layout: CompositeLayout) -> np.ndarray:
    """``Tr_B[(1 (x) rho_B) H_int]`` as an operator on S."""
    return np.einsum("ibjc,...cb->...ij", _interaction_blocks(h_int, layout), rho_b)


def mean_field_b(h_int: np.ndarray, rho_s: np.ndarray, layout: CompositeLayout) -> np.ndarray:
    """``Tr_S[(rho_S (x) 1) H_int]`` as an operator on B."""
    return np.einsum("ibjc,...ji->...bc", _interaction_blocks(h_int, layout), rho_s)


def product_expectation(h_int, rho_s, rho_b, layout) -> np.ndarray:
    """``Tr[(rho_S (x) rho_B) H_int]`` without forming the product state."""
    return np.real(np.einsum("ibjc,...ji,...cb->...", _interaction_blocks(h_int, layout), rho_s, rho_b))


@dataclass(frozen=True)
class EffectiveHamiltonians:
    h_s_eff: np.ndarray
    h_b_eff: np.ndarray
    mean_interaction: np.ndarray | float
    # alpha = 0 intermediates H'_S, H'_B
    h_s_prime: np.ndarray
    h_b_prime: np.ndarray
    h_tot: np.ndarray = field(repr=False)

    @property
    def h_int_eff(self) -> np.ndarray:
        d_s, d_b = self.h_s_eff.shape[-1], self.h_b_eff.shape[-1]
        return self.h_tot - kron_batched(self.h_s_eff, np.eye(d_b)) - kron_batched(np.eye(d_s), self.h_b_eff)


def _scalar_identity(values, dim: int) -> np.ndarray:
    values = np.asarray(values)
    return values[..., None, None] * np.eye(dim)


def effective_hamiltonians(
    system: BipartiteSystem, state: JointState, split: EnergySplit = EnergySplit(), tau: float | None = None
) -> EffectiveHamiltonians:
    """Effective subsystem Hamiltonians at the state's time stamp (or ``tau``)."""
    layout = system.layout
    if state.layout != layout:
        raise DimensionError("state layout does not match the system")
    t = float(np.ravel(state.tau)[0]) if tau is None else tau
    h_s, h_b, h_int = system.hamiltonians(t)
    k_s = mean_field_s(h_int, state.rho_b, layout)
    k_b = mean_field_b(h_int, state.rho_s, layout)
    m = product_expectation(h_int, state.rho_s, state.rho_b, layout)
    h_s_prime = h_s + k_s
    h_b_prime = h_b + k_b
    return EffectiveHamiltonians(
        h_s_eff=h_s_prime - _scalar_identity(split.alpha_s * m, layout.dim_s),
        h_b_eff=h_b_prime - _scalar_identity(split.alpha_b * m, layout.dim_b),
        mean_interaction=m,
        h_s_prime=h_s_prime,
        h_b_prime=h_b_prime,
        h_tot=compose_total(h_s, h_b, h_int),
    )


@dataclass(frozen=True)
class Energies:
    u_s: np.ndarray | float
    u_b: np.ndarray | float
    u_chi: np.ndarray | float
    u_tot: np.ndarray | float


def internal_energies(
    system: BipartiteSystem, state: JointState, split: EnergySplit = EnergySplit(), tau: float | None = None
) -> Energies:
    """Internal energies of S and B, the binding energy, and the total."""
    eff = effective_hamiltonians(system, state, split, tau)
    layout = system.layout
    h_s, h_b, h_int = system.hamiltonians(_tau_of(state, tau))
    u_s = _bexpect(state.rho_s, eff.h_s_eff)
    u_b = _bexpect(state.rho_b, eff.h_b_eff)
    # Tr[chi H_int_eff] expanded by linearity to avoid forming H_int_eff
    chi_s = partial_trace(state.chi, layout, "S")
    chi_b = partial_trace(state.chi, layout, "B")
    u_chi = (
        expect(state.chi, h_int)
        - _bexpect(chi_s, eff.h_s_prime - h_s)
        - _bexpect(chi_b, eff.h_b_prime - h_b)
        + np.real(trace(state.chi)) * eff.mean_interaction
    )
    u_tot = expect(state.rho_sb, eff.h_tot)
    return Energies(*(_squeeze(v) for v in (u_s, u_b, u_chi, u_tot)))


def _bexpect(rho, op) -> np.ndarray:
    return np.real(trace_product(rho, op))


def _tau_of(state: JointState, tau: float | None) -> float:
    return float(np.ravel(state.tau)[0]) if tau is None else tau


def _squeeze(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class FluxRates:
    """Instantaneous rates (per unit time).

    ``dw_s``/``dw_b`` are the works exchanged between S and B.  With a driven
    Hamiltonian the external driving works ``Tr[rho_X dH_X/dt]`` are reported
    separately in ``dw_ext_s``/``dw_ext_b``, so that per subsystem
    ``du = dq + dw + dw_ext``.
    """

    du_s: np.ndarray | float
    du_b: np.ndarray | float
    dq_s: np.ndarray | float
    dq_b: np.ndarray | float
    dw_s: np.ndarray | float
    dw_b: np.ndarray | float
    du_chi: np.ndarray | float
    ds_s: np.ndarray | float
    ds_b: np.ndarray | float
    ds_sb: np.ndarray | float
    dw_ext_s: np.ndarray | float = 0.0
    dw_ext_b: np.ndarray | float = 0.0
    dq_chi: np.ndarray | float = 0.0
    du_tot: np.ndarray | float = 0.0
    total_heat: np.ndarray | float = 0.0

    @property
    def ds_chi(self):
        return self.ds_s + self.ds_b - self.ds_sb


def _rates(system, state, split, tau, h_dot) -> FluxRates:
    layout = system.layout
    h_s, h_b, h_int = system.hamiltonians(tau)
    h_tot = compose_total(h_s, h_b, h_int)
    rho, rho_s, rho_b, chi = state.rho_sb, state.rho_s, state.rho_b, state.chi

    rho_dot = -1j * (h_tot @ rho - rho @ h_tot)
    rho_s_dot = partial_trace(rho_dot, layout, "S")
    rho_b_dot = partial_trace(rho_dot, layout, "B")

    eff = effective_hamiltonians(system, state, split, tau)
    # a = Tr[rho_S (x) drho_B H_int],  b = Tr[drho_S (x) rho_B H_int]
    a = product_expectation(h_int, rho_s, rho_b_dot, layout)
    b = product_expectation(h_int, rho_s_dot, rho_b, layout)
    alpha_s, alpha_b = split.alpha_s, split.alpha_b

    # heat: -i Tr[chi [H_X_eff, H_int]] = -i Tr[Tr_other([H_int, chi]) H_X_eff]
    comm = h_int @ chi - chi @ h_int
    dq_s = np.real(-1j * trace_product(partial_trace(comm, layout, "S"), eff.h_s_eff))
    dq_b = np.real(-1j * trace_product(partial_trace(comm, layout, "B"), eff.h_b_eff))

    if h_dot is None:
        p = np.zeros_like(a)
        ext_s = ext_b = np.zeros_like(a)
        du_tot = np.zeros_like(a)
        dh_int_term = np.zeros_like(a)
    else:
        hs_dot, hb_dot, hint_dot = h_dot
        p = product_expectation(hint_dot, rho_s, rho_b, layout)
        ext_s = expect(rho_s, hs_dot)
        ext_b = expect(rho_b, hb_dot)
        du_tot = expect(rho, compose_total(hs_dot, hb_dot, hint_dot))
        dh_int_term = expect(rho, hint_dot)

    m_dot = a + b + p
    dw_s = alpha_b * (a + p) - alpha_s * b
    dw_b = alpha_s * (b + p) - alpha_b * a
    du_s = np.real(trace_product(rho_s_dot, h_s)) + ext_s + alpha_b * m_dot
    du_b = np.real(trace_product(rho_b_dot, h_b)) + ext_b + alpha_s * m_dot
    tr_rho_dot_hint = expect(rho_dot, h_int)
    du_chi = tr_rho_dot_hint + dh_int_term - m_dot
    dq_chi = tr_rho_dot_hint - a - b
    total_heat = expect(rho_dot, h_tot)

    ds_s = entropy_rate(rho_s, rho_s_dot)
    ds_b = entropy_rate(rho_b, rho_b_dot)
    ds_sb = entropy_rate(rho, rho_dot)
    vals = dict(
        du_s=du_s, du_b=du_b, dq_s=dq_s, dq_b=dq_b, dw_s=dw_s, dw_b=dw_b, du_chi=du_chi,
        ds_s=ds_s, ds_b=ds_b, ds_sb=ds_sb, dw_ext_s=ext_s, dw_ext_b=ext_b, dq_chi=dq_chi,
        du_tot=du_tot, total_heat=total_heat,
    )
    return FluxRates(**{k: _squeeze(v) for k, v in vals.items()})


def flux_rates(system: BipartiteSystem, state: JointState, split: EnergySplit = EnergySplit()) -> FluxRates:
    """Heat, work and energy rates for a time-independent Hamiltonian."""
    if state.layout != system.layout:
        raise DimensionError("state layout does not match the system")
    return _rates(system, state, split, _tau_of(state, None), None)


def central_difference_hook(system: BipartiteSystem, tau: float, step: float = 1e-5) -> HamiltonianTriple:
    plus = system.hamiltonians(tau + step)
    minus = system.hamiltonians(tau - step)
    return tuple((p - m) / (2 * step) for p, m in zip(plus, minus))  # type: ignore[return-value]


def flux_rates_time_dependent(
    system: BipartiteSystem,
    state: JointState,
    split: EnergySplit = EnergySplit(),
    h_dot: HamiltonianTriple | Callable[[float], HamiltonianTriple] | None = None,
    fd_step: float = 1e-5,
) -> FluxRates:
    """Rates for a driven Hamiltonian at ``state.tau``.

    ``h_dot`` gives ``(dH_S, dH_B, dH_int)/dtau`` either as a triple or as a
    callable of ``tau``; when omitted it is estimated by a central difference
    of the hook with step ``fd_step``.
    """
    if system.hook is None:
        raise PreconditionError("time-dependent rates need a system with a time-dependence hook")
    if state.batched:
        raise PreconditionError("time-dependent rates are evaluated one state at a time")
    tau = _tau_of(state, None)
    if h_dot is None:
        derivs = central_difference_hook(system, tau, fd_step)
    elif callable(h_dot):
        derivs = h_dot(tau)
    else:
        derivs = h_dot
    derivs = tuple(np.asarray(d, dtype=complex) for d in derivs)
    return _rates(system, state, split, tau, derivs)


# --- temperatures and entropy production -------------------------------------------------


def _ratio(num, den, threshold: float):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    ok = np.abs(den) >= threshold
    out = np.where(ok, num / np.where(ok, den, 1.0), np.nan)
    return out


def _scalar_or_array(x):
    x = np.asarray(x)
    if x.ndim == 0:
        v = float(x)
        return None if math.isnan(v) else v
    return x


def pseudo_temperature(ds_rate, du_rate, threshold: float = TEMPERATURE_THRESHOLD):
    """``T = (dU/dt) / (dS/dt)``; ``None`` (``nan`` for arrays) when ``|dS/dt| < threshold``.

    Negative values are returned as they are.
    """
    return _scalar_or_array(_ratio(du_rate, ds_rate, threshold))


def chi_temperature(ds_chi_rate, du_chi_rate, threshold: float = TEMPERATURE_THRESHOLD):
    """Pseudo-temperature of the binding energy, ``dU_chi / dS_chi``."""
    return pseudo_temperature(ds_chi_rate, du_chi_rate, threshold)


def entropy_production_tilde(ds_rate: float, dq_rate: float, t_pseudo: float | None) -> float:
    """``dS - dQ/T(tau)`` with the instantaneous pseudo-temperature; equals ``dW/T``."""
    if t_pseudo is None or not np.isfinite(t_pseudo) or t_pseudo == 0:
        raise PreconditionError("pseudo-temperature is undefined or zero")
    return ds_rate - dq_rate / t_pseudo


def entropy_production_fixed_t(ds_rate, dq_rate, t_ref: float):
    """``dS - dQ/T_ref`` against a fixed reference (bath) temperature."""
    if not t_ref > 0:
        raise PreconditionError(f"reference temperature must be positive, got {t_ref}")
    return np.asarray(ds_rate) - np.asarray(dq_rate) / t_ref if np.ndim(dq_rate) else ds_rate - dq_rate / t_ref


def extended_temperature_estimate(
    ds_rate, dq_rate, assume_zero_production: bool = True, threshold: float = TEMPERATURE_THRESHOLD
):
    """Extended temperature ``dQ/dS`` under the zero-production assumption.

    Undefined when ``|dS|`` is below ``threshold`` or when there is entropy change
    without heat (pure production, ``|dQ| < threshold``).
    """
    if not assume_zero_production:
        raise PreconditionError(
            "only the zero-production branch is closed; use entropy_production_fixed_t for a known T"
        )
    out = _ratio(dq_rate, ds_rate, threshold)
    return _scalar_or_array(np.where(np.abs(np.asarray(dq_rate, dtype=float)) < threshold, np.nan, out))


def lindblad_entropy_production(
    rho: np.ndarray, generator: Callable[[np.ndarray], np.ndarray], gibbs_reference: np.ndarray
) -> float:
    """``-Tr[L(rho) (ln rho - ln rho_beta)]`` for a generator fixing ``rho_beta``."""
    gibbs_reference = np.asarray(gibbs_reference, dtype=complex)
    if np.min(np.linalg.eigvalsh(gibbs_reference)) <= 1e-14:
        raise PreconditionError("Gibbs reference must be full rank")
    residual = float(np.max(np.abs(generator(gibbs_reference))))
    if residual > 1e-8:
        raise PreconditionError(f"generator does not fix the reference state (|L[rho_beta]| = {residual:.2e})")
    l_rho = generator(np.asarray(rho, dtype=complex))
    # -Tr[L(rho) ln rho] via the clamped spectral rate, consistent with entropy_rate
    value = entropy_rate(rho, l_rho) + float(np.real(trace_product(l_rho, hermitian_log(gibbs_reference))))
    if value < -1e-9:
        raise PreconditionError(f"negative entropy production {value:.3e}; generator is not of Lindblad form")
    return max(value, 0.0)


# --- snapshots ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ThermoSnapshot:
    tau: float
    u_s: float
    u_b: float
    u_chi: float
    u_tot: float
    s_s: float
    s_b: float
    s_sb: float
    s_chi: float
    rates: FluxRates
    t_pseudo_s: float | None
    t_pseudo_b: float | None
    t_chi: float | None
    t_ext_s: float | None
    t_ext_b: float | None
    sigma_tilde_s: float | None
    sigma_tilde_b: float | None
    sigma_s: float | None
    sigma_b: float | None


SNAPSHOT_ARRAY_FIELDS = (
    "u_s", "u_b", "u_chi", "u_tot", "s_s", "s_b", "s_sb", "s_chi",
    "t_pseudo_s", "t_pseudo_b", "t_chi", "t_ext_s", "t_ext_b",
    "sigma_tilde_s", "sigma_tilde_b", "sigma_s", "sigma_b",
)


def thermo_quantities(
    system: BipartiteSystem,
    state: JointState,
    split: EnergySplit = EnergySplit(),
    t_ref: float | None = None,
    s_sb: np.ndarray | float | None = None,
) -> dict[str, np.ndarray]:
    """All per-step thermodynamic quantities for a (batched) time-independent state.

    ``s_sb`` may be supplied when the joint entropy is known (it is a constant of
    unitary motion); otherwise it is computed from the joint spectrum.
    """
    energies = internal_energies(system, state, split)
    rates = flux_rates(system, state, split)
    s_s = np.asarray(von_neumann_entropy(state.rho_s))
    s_b = np.asarray(von_neumann_entropy(state.rho_b))
    s_sb = np.asarray(von_neumann_entropy(state.rho_sb) if s_sb is None else s_sb) * np.ones_like(s_s)
    out = dict(
        u_s=np.asarray(energies.u_s), u_b=np.asarray(energies.u_b),
        u_chi=np.asarray(energies.u_chi), u_tot=np.asarray(energies.u_tot),
        s_s=s_s, s_b=s_b, s_sb=s_sb, s_chi=s_s + s_b - s_sb,
    )
    out.update(rate_derived_quantities(rates, t_ref))
    out["rates"] = rates
    return out


def rate_derived_quantities(rates: FluxRates, t_ref: float | None) -> dict[str, np.ndarray]:
    """Temperatures and entropy productions (``nan`` where undefined)."""
    t_s = _ratio(rates.du_s, rates.ds_s, TEMPERATURE_THRESHOLD)
    t_b = _ratio(rates.du_b, rates.ds_b, TEMPERATURE_THRESHOLD)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig_tilde_s = np.where(np.isfinite(t_s) & (t_s != 0), rates.ds_s - np.asarray(rates.dq_s) / t_s, np.nan)
        sig_tilde_b = np.where(np.isfinite(t_b) & (t_b != 0), rates.ds_b - np.asarray(rates.dq_b) / t_b, np.nan)
    ext_s = _extended_array(rates.ds_s, rates.dq_s)
    ext_b = _extended_array(rates.ds_b, rates.dq_b)
    if t_ref is None:
        sig_s = np.full_like(np.asarray(rates.ds_s, dtype=float), np.nan)
        sig_b = np.full_like(np.asarray(rates.ds_b, dtype=float), np.nan)
    else:
        sig_s = np.asarray(entropy_production_fixed_t(rates.ds_s, rates.dq_s, t_ref))
        sig_b = np.asarray(entropy_production_fixed_t(rates.ds_b, rates.dq_b, t_ref))
    return dict(
        t_pseudo_s=t_s, t_pseudo_b=t_b,
        t_chi=_ratio(rates.du_chi, rates.ds_chi, TEMPERATURE_THRESHOLD),
        t_ext_s=ext_s, t_ext_b=ext_b,
        sigma_tilde_s=sig_tilde_s, sigma_tilde_b=sig_tilde_b,
        sigma_s=sig_s, sigma_b=sig_b,
    )


def _extended_array(ds, dq) -> np.ndarray:
    out = _ratio(dq, ds, TEMPERATURE_THRESHOLD)
    return np.where(np.abs(np.asarray(dq, dtype=float)) < TEMPERATURE_THRESHOLD, np.nan, out)


def split_snapshots(taus: Sequence[float], quantities: dict) -> list[ThermoSnapshot]:
    rates: FluxRates = quantities["rates"]
    snaps = []
    for i, tau in enumerate(taus):
        def pick(name, i=i):
            v = float(np.asarray(quantities[name]).reshape(-1)[i] if np.ndim(quantities[name]) else quantities[name])
            return v
        def opt(name, i=i):
            v = pick(name, i)
            return None if math.isnan(v) else v
        r = FluxRates(**{
            k: float(np.asarray(getattr(rates, k)).reshape(-1)[i]) if np.ndim(getattr(rates, k)) else float(getattr(rates, k))
            for k in rates.__dataclass_fields__
        })
        snaps.append(ThermoSnapshot(
            tau=float(tau), u_s=pick("u_s"), u_b=pick("u_b"), u_chi=pick("u_chi"), u_tot=pick("u_tot"),
            s_s=pick("s_s"), s_b=pick("s_b"), s_sb=pick("s_sb"), s_chi=pick("s_chi"), rates=r,
            t_pseudo_s=opt("t_pseudo_s"), t_pseudo_b=opt("t_pseudo_b"), t_chi=opt("t_chi"),
            t_ext_s=opt("t_ext_s"), t_ext_b=opt("t_ext_b"),
            sigma_tilde_s=opt("sigma_tilde_s"), sigma_tilde_b=opt("sigma_tilde_b"),
            sigma_s=opt("sigma_s"), sigma_b=opt("sigma_b"),
        ))
    return snaps


# --- energy transport diagnostic -----------------------------------------------------------


@dataclass(frozen=True)
class TransportCheck:
    tau: float
    status: str  # "evaluated" | "equal pseudo-temperatures" | "undefined temperature" | "trivial"
    residual: float | None
    relative_residual: float | None


def energy_transport_check(
    snapshots: Iterable[ThermoSnapshot],
    du_chi_tol: float = 1e-9,
    equal_rtol: float = 1e-8,
    time_dependent: bool = False,
) -> list[TransportCheck]:
    """Residual of ``dU_B = T_S T_B / (T_S - T_B) dS_chi`` at steps with ``dU_chi ~ 0``.

    In the driven case the bracket becomes ``dS_chi - dU_tot / T_S``.  Steps with
    ``|dU_chi| >= du_chi_tol`` are skipped; steps with ``T_S ~ T_B`` are flagged.
    """
    out = []
    for snap in snapshots:
        r = snap.rates
        if abs(r.du_chi) >= du_chi_tol:
            continue
        ds_chi = r.ds_chi
        t_s, t_b = snap.t_pseudo_s, snap.t_pseudo_b
        if abs(r.du_b) < du_chi_tol and abs(ds_chi) < du_chi_tol:
            out.append(TransportCheck(snap.tau, "trivial", 0.0, 0.0))
            continue
        if t_s is None or t_b is None:
            out.append(TransportCheck(snap.tau, "undefined temperature", None, None))
            continue
        if abs(t_s - t_b) <= equal_rtol * max(abs(t_s), abs(t_b)):
            out.append(TransportCheck(snap.tau, "equal pseudo-temperatures", None, None))
            continue
        bracket = ds_chi - (r.du_tot / t_s if time_dependent else 0.0)
        predicted = t_s * t_b / (t_s - t_b) * bracket
        residual = r.du_b - predicted
        scale = max(abs(r.du_b), abs(predicted), 1e-300)
        out.append(TransportCheck(snap.tau, "evaluated", residual, abs(residual) / scale))
    return out
