"""Qubit thermalizing in a bosonic bath through a rotating-wave (Jaynes-Cummings) coupling.

Conventions: ``sigma_z = diag(1, -1)`` so ``|0>`` is the excited level, and
``sigma_+ = |0><1|``, ``sigma_- = |1><0|`` are the ladder operators
``(sigma_x +/- i sigma_y)/2``.  The coupling is

    H_int = lam * sum_k (conj(f_k) sigma_+ (x) a_k + f_k sigma_- (x) a_k^+)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ..accounting import BipartiteSystem
from ..config import settings
from ..dynamics import LindbladGenerator
from ..errors import ConvergenceError, DimensionError, PreconditionError
from ..linalg import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_Z,
    bloch_vector,
    check_density_matrix,
    dagger,
    entropy_rate,
    qubit_from_bloch,
)

SpectralDensity = Callable[[np.ndarray], np.ndarray]


def ohmic_density(epsilon: float) -> SpectralDensity:
    """``|f(w)|^2 = w exp(-epsilon w)`` on ``w > 0``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    def density(omega):
        omega = np.asarray(omega, dtype=float)
        return np.where(omega > 0, omega * np.exp(-epsilon * np.abs(omega)), 0.0)

    return density


@dataclass(frozen=True)
class JaynesCummingsSpec:
    omega0: float
    lam: float
    beta: float
    modes: tuple[tuple[float, complex], ...] = ()
    n_max: int = 3
    spectral_density: SpectralDensity | None = field(default=None, compare=False)
    epsilon: float = 1.0
    support: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")
        modes = tuple((float(w), complex(f)) for w, f in self.modes)
        for w, _ in modes:
            if not w > 0:
                raise ValueError(f"mode frequencies must be positive, got {w}")
        object.__setattr__(self, "modes", modes)

    def density(self, omega):
        rho = self.spectral_density or ohmic_density(self.epsilon)
        return rho(omega)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([w for w, _ in self.modes])

    @property
    def couplings(self) -> np.ndarray:
        return np.array([f for _, f in self.modes], dtype=complex)

    @property
    def bath_dim(self) -> int:
        return (self.n_max + 1) ** len(self.modes)


def planck_occupation(omega, beta):
    """Mean occupation ``1/(exp(beta omega) - 1)``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0) or not beta > 0:
        raise ValueError("planck_occupation needs omega > 0 and beta > 0")
    n = 1.0 / np.expm1(beta * omega)
    return float(n) if n.ndim == 0 else n


def annihilation(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)


def mode_operators(n_modes: int, n_max: int) -> list[np.ndarray]:
    """Annihilation operators of each mode on the product Fock space."""
    a = annihilation(n_max)
    eye = np.eye(n_max + 1)
    ops = []
    for k in range(n_modes):
        factors = [a if j == k else eye for j in range(n_modes)]
        ops.append(reduce(np.kron, factors))
    return ops


def build_jc_hamiltonians(spec: JaynesCummingsSpec) -> BipartiteSystem:
    if not spec.modes:
        raise PreconditionError("a truncated bath needs at least one mode")
    total = 2 * spec.bath_dim
    if total > settings.max_dim:
        raise DimensionError(f"joint dimension {total} exceeds the configured maximum {settings.max_dim}")
    ops = mode_operators(len(spec.modes), spec.n_max)
    h_s = 0.5 * spec.omega0 * SIGMA_Z
    h_b = sum(w * dagger(a) @ a for (w, _), a in zip(spec.modes, ops))
    h_int = sum(
        np.conj(f) * np.kron(SIGMA_PLUS, a) + f * np.kron(SIGMA_MINUS, dagger(a))
        for (_, f), a in zip(spec.modes, ops)
    )
    return BipartiteSystem(h_s, h_b, spec.lam * h_int)


def truncated_thermal_mode(omega: float, beta: float, n_max: int) -> np.ndarray:
    """Populations of a single mode's Gibbs state on ``n = 0..n_max``."""
    weights = np.exp(-beta * omega * np.arange(n_max + 1))
    return weights / weights.sum()


def thermal_bath_state(spec: JaynesCummingsSpec) -> np.ndarray:
    pops = [truncated_thermal_mode(w, spec.beta, spec.n_max) for w in spec.frequencies]
    return np.diag(reduce(np.kron, pops)).astype(complex)


def truncated_occupations(omega: float, beta: float, n_max: int) -> tuple[float, float]:
    """``(<a^+ a>, <a a^+>)`` in the truncated Gibbs state."""
    p = truncated_thermal_mode(omega, beta, n_max)
    n = np.arange(n_max + 1)
    return float(p @ n), float(p[:-1] @ (n[:-1] + 1))


def gibbs_qubit(omega0: float, beta: float) -> np.ndarray:
    return qubit_from_bloch((0.0, 0.0, -math.tanh(0.5 * beta * omega0)))


# --- continuum rates ------------------------------------------------------------------------


def principal_value(
    g: Callable[[float], float],
    pole: float,
    lower: float,
    upper: float,
    excision: float,
    epsabs: float = 1e-12,
    epsrel: float = 1e-10,
) -> float:
    """``PV int_lower^upper g(w)/(pole - w) dw`` by symmetric excision.

    The excised window ``[pole - d, pole + d]`` is folded onto
    ``int_0^d [g(pole - u) - g(pole + u)]/u du``, whose integrand is regular.
    """
    if not lower < pole - excision or not pole + excision < upper:
        raise PreconditionError("excision window must lie inside the integration range")

    def outside(w):
        return g(w) / (pole - w)

    opts = dict(epsabs=epsabs, epsrel=epsrel, limit=400)
    left, _ = integrate.quad(outside, lower, pole - excision, **opts)
    if math.isinf(upper):
        # break the tail at a few pole widths so quad sees the decay scale
        mid = pole + max(10 * excision, pole)
        right1, _ = integrate.quad(outside, pole + excision, mid, **opts)
        right2, _ = integrate.quad(outside, mid, upper, **opts)
        right = right1 + right2
    else:
        right, _ = integrate.quad(outside, pole + excision, upper, **opts)
    inner, _ = integrate.quad(lambda u: (g(pole - u) - g(pole + u)) / u, 0.0, excision, **opts)
    return left + right + inner


def emission_rate_and_lamb_shift(
    spec: JaynesCummingsSpec, excision: float | None = None, tol: float = 1e-8
) -> tuple[float, float]:
    """Continuum emission rate ``gamma`` and frequency shift ``Omega``.

    ``gamma = 2 pi lam^2 |f(w0)|^2``;
    ``Omega = 4 lam^2 PV int |f(w)|^2 (2 n(w) + 1)/(w0 - w) dw``.
    """
    w0, beta = spec.omega0, spec.beta
    gamma = 2 * math.pi * spec.lam**2 * float(spec.density(w0))

    def g(w):
        if w <= 0:
            return 0.0
        return float(spec.density(w)) / math.tanh(0.5 * beta * w)

    lo, hi = spec.support
    delta = 1e-3 * w0 if excision is None else excision
    coarse = principal_value(g, w0, lo, hi, delta)
    fine = principal_value(g, w0, lo, hi, 0.5 * delta)
    diff = abs(coarse - fine)
    if diff > tol * max(1.0, abs(fine)):
        raise ConvergenceError(f"principal value did not converge on halving the excision (change {diff:.2e})", achieved=diff)
    return gamma, 4 * spec.lam**2 * fine


def lindblad_generator_example1(spec: JaynesCummingsSpec, gamma: float, omega_shift: float) -> LindbladGenerator:
    """Qubit generator with shifted frequency, emission ``gamma (n+1)`` and absorption ``gamma n``."""
    n = planck_occupation(spec.omega0, spec.beta)
    return LindbladGenerator(
        0.5 * (spec.omega0 + omega_shift) * SIGMA_Z,
        ((SIGMA_MINUS, gamma * (n + 1)), (SIGMA_PLUS, gamma * n)),
    )


@dataclass(frozen=True)
class AnalyticBlochSolution:
    bloch0: tuple[float, float, float]
    gamma: float
    omega_shift: float
    beta: float
    omega0: float

    def __post_init__(self):
        if np.linalg.norm(self.bloch0) > 1 + 1e-12:
            raise ValueError("initial Bloch vector lies outside the unit ball")

    @property
    def gamma_tilde(self) -> float:
        return self.gamma / math.tanh(0.5 * self.beta * self.omega0)

    def bloch(self, tau) -> np.ndarray:
        """Bloch vector(s) at ``tau``; shape ``(..., 3)``."""
        tau = np.asarray(tau, dtype=float)
        if np.any(tau < 0):
            raise ValueError("tau must be nonnegative")
        x0, y0, z0 = self.bloch0
        gt = self.gamma_tilde
        th = math.tanh(0.5 * self.beta * self.omega0)
        decay = np.exp(-gt * tau)
        z = z0 * decay + th * (decay - 1)
        # rho_01 = (x - i y)/2 rotates as exp(-i (w0 + Omega) tau)
        c = (x0 - 1j * y0) * np.exp(-1j * (self.omega0 + self.omega_shift) * tau - 0.5 * gt * tau)
        return np.stack([c.real, -c.imag, z], axis=-1)

    def state(self, tau) -> np.ndarray:
        return qubit_from_bloch(self.bloch(tau))


def analytic_solution_example1(solution: AnalyticBlochSolution, tau) -> np.ndarray:
    return solution.state(tau)


# --- perturbative states --------------------------------------------------------------------


def moment_integral(n: int, x: float, tau: float) -> complex:
    """``int_0^tau s^n exp(i x s) ds``."""
    if abs(x) * tau < 1.0:
        total, term, m = 0j, 1.0 + 0j, 0
        # sum_m (i x)^m tau^(n+m+1) / (m! (n+m+1))
        while True:
            contrib = term * tau ** (n + m + 1) / (n + m + 1)
            total += contrib
            if abs(contrib) < 1e-18 * max(abs(total), 1e-300) or m > 60:
                return total
            m += 1
            term = term * 1j * x / m
    value = (np.exp(1j * x * tau) - 1) / (1j * x)
    for k in range(1, n + 1):
        value = (tau**k * np.exp(1j * x * tau) - k * value) / (1j * x)
    return complex(value)


def eta_kernel(detuning: float, tau: float) -> complex:
    """``int_0^tau exp(i detuning s) ds``."""
    return moment_integral(0, detuning, tau)


def xi_kernel(detuning_p: float, detuning_q: float, tau: float) -> complex:
    """``int_0^tau exp(i detuning_p s) conj(eta(detuning_q, s)) ds``."""
    if abs(detuning_q) * tau < 1e-3:
        # conj(eta(q, s)) = sum_n (-i q)^n s^(n+1)/(n+1)!, four terms suffice here
        return sum(
            (-1j * detuning_q) ** n / math.factorial(n + 1) * moment_integral(n + 1, detuning_p, tau)
            for n in range(4)
        )
    return 1j * (moment_integral(0, detuning_p - detuning_q, tau) - moment_integral(0, detuning_p, tau)) / detuning_q


def perturbative_states_example1(
    spec: JaynesCummingsSpec, rho_s0: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray]:
    """Reduced states to second order in ``lam`` for a thermal initial bath.

    Thermal averages are taken in the truncated Fock space (``<a^+ a>`` and
    ``<a a^+>``) so the result is the exact second-order expansion of the
    truncated model.
    """
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    check_density_matrix(rho_s0, "rho_S(0)")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    w0, lam = spec.omega0, spec.lam
    freqs, fs = spec.frequencies, spec.couplings
    u_s = np.diag(np.exp(-0.5j * w0 * tau * np.array([1.0, -1.0])))
    free = u_s @ rho_s0 @ dagger(u_s)
    sp, sm = SIGMA_PLUS, SIGMA_MINUS
    spsm, smsp = sp @ sm, sm @ sp

    detunings = w0 - freqs
    etas = np.array([eta_kernel(d, tau) for d in detunings])
    occ = [truncated_occupations(w, spec.beta, spec.n_max) for w in freqs]
    absorb = np.array([o[0] for o in occ])
    emit = np.array([o[1] for o in occ])
    xi_diag = np.array([xi_kernel(d, d, tau) for d in detunings])
    weights = np.abs(fs) ** 2

    second = (
        sp @ free @ sm * np.sum(weights * np.abs(etas) ** 2 * absorb)
        + sm @ free @ sp * np.sum(weights * np.abs(etas) ** 2 * emit)
        - sum(w * (np.conj(x) * free @ spsm + x * spsm @ free) * e for w, x, e in zip(weights, xi_diag, emit))
        - sum(w * (x * free @ smsp + np.conj(x) * smsp @ free) * n for w, x, n in zip(weights, xi_diag, absorb))
    )
    rho_s = free + lam**2 * second

    rho_beta = thermal_bath_state(spec)
    ops = mode_operators(len(spec.modes), spec.n_max)
    c_plus = np.trace(rho_s0 @ sp)
    c_minus = np.trace(rho_s0 @ sm)
    p_ground = np.real(np.trace(rho_s0 @ smsp))
    p_excited = np.real(np.trace(rho_s0 @ spsm))

    def comm(a, b):
        return a @ b - b @ a

    first = np.zeros_like(rho_beta)
    for f, eta, a in zip(fs, etas, ops):
        first += c_plus * np.exp(1j * w0 * tau) * np.conj(f) * np.conj(eta) * comm(rho_beta, a)
        first += c_minus * np.exp(-1j * w0 * tau) * f * eta * comm(rho_beta, dagger(a))

    second_b = np.zeros_like(rho_beta)
    n_modes = len(spec.modes)
    for k in range(n_modes):
        ak, wk, fk, etak = ops[k], freqs[k], fs[k], etas[k]
        for kp in range(n_modes):
            akp, wkp, fkp, etakp = ops[kp], freqs[kp], fs[kp], etas[kp]
            xi = xi_kernel(w0 - wkp, w0 - wk, tau)
            ph = np.exp(1j * tau * (wk - wkp))
            second_b += p_ground * (
                np.conj(fk) * fkp * np.conj(etak) * etakp * ak @ rho_beta @ dagger(akp)
                - fkp * np.conj(fk) * np.conj(xi) * ph * dagger(akp) @ ak @ rho_beta
                - np.conj(fkp) * fk * xi * np.conj(ph) * rho_beta @ dagger(ak) @ akp
            )
            second_b += p_excited * (
                fk * np.conj(fkp) * etak * np.conj(etakp) * dagger(ak) @ rho_beta @ akp
                - np.conj(fkp) * fk * xi * np.conj(ph) * akp @ dagger(ak) @ rho_beta
                - fkp * np.conj(fk) * np.conj(xi) * ph * rho_beta @ ak @ dagger(akp)
            )
    rho_b = rho_beta + 1j * lam * first + lam**2 * second_b
    return rho_s, rho_b


# --- long-time thermodynamics ---------------------------------------------------------------


@dataclass(frozen=True)
class LongtimeBathRates:
    dq_b: float
    du_b: float
    ds_b: float
    t_pseudo_b_limit: float | None
    t_ext_b: float | None


def qubit_elements(rho_s0) -> tuple[float, float, complex]:
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    return float(rho_s0[0, 0].real), float(rho_s0[1, 1].real), complex(rho_s0[1, 0])


def pseudo_temperature_b_limit(omega0: float, beta: float, rho_s0) -> float | None:
    """Closed-form long-time bath pseudo-temperature for the initial qubit state."""
    p0, p1, c = qubit_elements(rho_s0)
    n = planck_occupation(omega0, beta)
    den = n * (p0 - p1) + p0 - abs(c) ** 2
    if abs(den) < 1e-15:
        return None
    return (1.0 + abs(c) ** 2 / den) / beta


def longtime_bath_rates_example1(spec: JaynesCummingsSpec, gamma: float, rho_s0) -> LongtimeBathRates:
    p0, p1, c = qubit_elements(rho_s0)
    n = planck_occupation(spec.omega0, spec.beta)
    exchange = (n + 1) * p0 - n * p1
    dq_b = 4 * spec.omega0 * gamma * (exchange - abs(c) ** 2)
    du_b = 4 * gamma * spec.omega0 * exchange
    ds_b = spec.beta * dq_b
    return LongtimeBathRates(
        dq_b=dq_b,
        du_b=du_b,
        ds_b=ds_b,
        t_pseudo_b_limit=pseudo_temperature_b_limit(spec.omega0, spec.beta, rho_s0),
        t_ext_b=None if dq_b == 0 else 1.0 / spec.beta,
    )


def pseudo_temperature_s_limit(omega0: float, beta: float, bloch0) -> float | None:
    x0, y0, z0 = bloch0
    th = math.tanh(0.5 * beta * omega0)
    if abs(z0 + th) < 1e-15:
        return None
    inv = beta * (1 - (x0**2 + y0**2) / th / (2 * (z0 + th)))
    return None if abs(inv) < 1e-300 else 1.0 / inv


def extended_temperature_s(omega0: float, bloch) -> np.ndarray:
    """``1/T = -(z/(w0 r)) ln((1+r)/(1-r))`` along Bloch vectors of shape ``(..., 3)``; ``nan`` where undefined."""
    bloch = np.asarray(bloch, dtype=float)
    r = np.linalg.norm(bloch, axis=-1)
    z = bloch[..., 2]
    ok = (r > 1e-12) & (r < 1 - 1e-15) & (np.abs(z) > 1e-15)
    r_safe = np.where(ok, r, 0.5)
    inv = -(z / (omega0 * r_safe)) * np.log((1 + r_safe) / (1 - r_safe))
    with np.errstate(divide="ignore"):
        return np.where(ok, 1.0 / np.where(ok, inv, 1.0), np.nan)


def system_temperatures_example1(solution: AnalyticBlochSolution, tau) -> tuple[float | None, np.ndarray]:
    """Long-time pseudo-temperature of the qubit and the extended temperature along ``tau``."""
    return (
        pseudo_temperature_s_limit(solution.omega0, solution.beta, solution.bloch0),
        extended_temperature_s(solution.omega0, solution.bloch(tau)),
    )


def markov_system_rates(generator: LindbladGenerator, omega0: float, rho: np.ndarray):
    """``(dU_S, dS_S)`` of the qubit with energy ``Tr[rho w0 sigma_z/2]``."""
    rho_dot = generator(rho)
    du = np.real(np.einsum("...ij,ji->...", rho_dot, 0.5 * omega0 * SIGMA_Z))
    return du, entropy_rate(rho, rho_dot)


def initial_bloch(rho_s0) -> tuple[float, float, float]:
    return tuple(float(v) for v in bloch_vector(np.asarray(rho_s0, dtype=complex)))  # type: ignore[return-value]


def recurrence_time(frequencies: Sequence[float]) -> float:
    """Shortest recurrence ``2 pi / min |w_j - w_k|`` of a finite mode set (inf for one mode)."""
    f = np.sort(np.asarray(frequencies, dtype=float))
    if len(f) < 2:
        return math.inf
    gap = float(np.min(np.diff(f)))
    return math.inf if gap == 0 else 2 * math.pi / gap
