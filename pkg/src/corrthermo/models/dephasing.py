"""Exactly solvable pure dephasing of a qubit by a bosonic bath.

``H = w0 sigma_z/2 + sum_k w_k a_k^+ a_k + lam sigma_z (x) (a(f) + a^+(f))`` with
``a(f) = sum_k conj(f_k) a_k``.  Conditioned on the qubit level ``l`` (sign
``s_l = +1`` for ``|0>``, ``-1`` for ``|1>``) each mode is displaced by

    alpha_k(l, tau) = s_l lam f_k (exp(-i w_k tau) - 1) / w_k

so populations are frozen and coherences decay as ``exp(-8 lam^2 Gamma(tau))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Literal

import numpy as np
from scipy import integrate, linalg as sla

from ..accounting import BipartiteSystem
from ..config import settings
from ..dynamics import LindbladGenerator, TimeGrid, Trajectory, propagate_lindblad
from ..errors import ConvergenceError, DimensionError, PreconditionError, TruncationError
from ..linalg import SIGMA_Z, check_density_matrix, dagger
from .thermalizing import annihilation, mode_operators, truncated_thermal_mode

LEAKAGE_LIMIT = 1e-6


@dataclass(frozen=True)
class DephasingSpec:
    omega0: float
    lam: float
    beta: float
    modes: tuple[tuple[float, complex], ...] = ()
    n_max: int = 30
    epsilon: float = 1.0
    mode_kind: Literal["discrete", "ohmic-continuum"] = "discrete"

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ValueError(f"omega0 must be positive, got {self.omega0}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.mode_kind not in ("discrete", "ohmic-continuum"):
            raise ValueError(f"unknown mode_kind {self.mode_kind!r}")
        modes = tuple((float(w), complex(f)) for w, f in self.modes)
        if self.mode_kind == "discrete":
            if not modes:
                raise ValueError("discrete mode_kind needs at least one mode")
            if int(self.n_max) != self.n_max or self.n_max < 1:
                raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")
            if any(w <= 0 for w, _ in modes):
                raise ValueError("mode frequencies must be positive")
        elif not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive in continuum mode, got {self.epsilon}")
        object.__setattr__(self, "modes", modes)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([w for w, _ in self.modes])

    @property
    def couplings(self) -> np.ndarray:
        return np.array([f for _, f in self.modes], dtype=complex)


# --- kernels ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DephasingKernels:
    gamma: float
    delta: float
    dgamma: float
    ddelta: float


def _coth(x):
    return 1.0 / np.tanh(x)


def delta_continuum(tau: float, epsilon: float) -> float:
    return tau**2 / (2 * epsilon * (epsilon**2 + tau**2))


def ddelta_continuum(tau: float, epsilon: float) -> float:
    return epsilon * tau / (tau**2 + epsilon**2) ** 2


def _quad(func, a, b, **kw) -> float:
    value, err = integrate.quad(func, a, b, epsabs=1e-10, epsrel=1e-10, limit=500, **kw)
    if not np.isfinite(value) or err > 1e-8:
        raise ConvergenceError(f"quadrature on [{a}, {b}] reached error {err:.2e}", achieved=err)
    return value


def _split_points(tau: float, beta: float) -> list[float]:
    return sorted({1.0 / beta, 1.0 / tau})


def gamma_continuum(tau: float, beta: float, epsilon: float) -> float:
    """``int_0^inf coth(beta w/2) sin^2(w tau/2) exp(-epsilon w) / w dw``."""
    if tau == 0:
        return 0.0
    points = _split_points(tau, beta)

    def full(w):
        return _coth(0.5 * beta * w) * math.sin(0.5 * w * tau) ** 2 * math.exp(-epsilon * w) / w

    def smooth(w):
        return 0.5 * _coth(0.5 * beta * w) * math.exp(-epsilon * w) / w

    total = _quad(full, 0.0, points[0])
    if len(points) > 1:
        total += _quad(full, points[0], points[1])
    # oscillatory tail: sin^2 = (1 - cos)/2, cosine part by a Fourier-weighted rule
    b = points[-1]
    total += _quad(smooth, b, math.inf) - _quad(smooth, b, math.inf, weight="cos", wvar=tau)
    return total


def dgamma_continuum(tau: float, beta: float, epsilon: float) -> float:
    """``(1/2) int_0^inf coth(beta w/2) sin(w tau) exp(-epsilon w) dw``."""
    if tau == 0:
        return 0.0
    points = _split_points(tau, beta)

    def full(w):
        return 0.5 * _coth(0.5 * beta * w) * math.sin(w * tau) * math.exp(-epsilon * w)

    def smooth(w):
        return 0.5 * _coth(0.5 * beta * w) * math.exp(-epsilon * w)

    total = _quad(full, 0.0, points[0])
    if len(points) > 1:
        total += _quad(full, points[0], points[1])
    return total + _quad(smooth, points[-1], math.inf, weight="sin", wvar=tau)


def kernels(spec: DephasingSpec, tau: float) -> DephasingKernels:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if spec.mode_kind == "ohmic-continuum":
        return DephasingKernels(
            gamma=gamma_continuum(tau, spec.beta, spec.epsilon),
            delta=delta_continuum(tau, spec.epsilon),
            dgamma=dgamma_continuum(tau, spec.beta, spec.epsilon),
            ddelta=ddelta_continuum(tau, spec.epsilon),
        )
    w = spec.frequencies
    weight = np.abs(spec.couplings) ** 2
    coth = _coth(0.5 * spec.beta * w)
    s2 = np.sin(0.5 * w * tau) ** 2
    s1 = np.sin(w * tau)
    return DephasingKernels(
        gamma=float(np.sum(weight / w**2 * coth * s2)),
        delta=float(np.sum(weight / w * s2)),
        dgamma=float(np.sum(weight / (2 * w) * coth * s1)),
        ddelta=float(np.sum(weight / 2 * s1)),
    )


# --- exact dynamics -----------------------------------------------------------------------


def build_dephasing_hamiltonians(spec: DephasingSpec) -> BipartiteSystem:
    if spec.mode_kind != "discrete":
        raise PreconditionError("a joint Hamiltonian needs the discrete mode list")
    n_modes = len(spec.modes)
    total = 2 * (spec.n_max + 1) ** n_modes
    if total > settings.max_dim:
        raise DimensionError(f"joint dimension {total} exceeds the configured maximum {settings.max_dim}")
    ops = mode_operators(n_modes, spec.n_max)
    h_b = sum(w * dagger(a) @ a for (w, _), a in zip(spec.modes, ops))
    field_op = sum(np.conj(f) * a + f * dagger(a) for (_, f), a in zip(spec.modes, ops))
    return BipartiteSystem(0.5 * spec.omega0 * SIGMA_Z, h_b, spec.lam * np.kron(SIGMA_Z, field_op))


def thermal_bath_state(spec: DephasingSpec) -> np.ndarray:
    pops = [truncated_thermal_mode(w, spec.beta, spec.n_max) for w in spec.frequencies]
    return np.diag(reduce(np.kron, pops)).astype(complex)


def displacement_amplitudes(spec: DephasingSpec, level: int, tau: float) -> np.ndarray:
    sign = 1.0 if level == 0 else -1.0
    w = spec.frequencies
    return sign * spec.lam * spec.couplings * (np.exp(-1j * w * tau) - 1) / w


def displaced_thermal_mode(omega: float, beta: float, n_max: int, alpha: complex) -> tuple[np.ndarray, float]:
    """``D(alpha) rho_beta D(alpha)^+`` cut to ``n_max`` levels, and the population pushed above the cut."""
    pad = 20 + int(10 * abs(alpha) ** 2 + 10 * abs(alpha))
    dim = n_max + 1 + pad
    a = annihilation(dim - 1)
    d = sla.expm(alpha * dagger(a) - np.conj(alpha) * a)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[: n_max + 1, : n_max + 1] = np.diag(truncated_thermal_mode(omega, beta, n_max))
    out = d @ rho @ dagger(d)
    kept = out[: n_max + 1, : n_max + 1]
    return kept, float(1.0 - np.real(np.trace(kept)))


@dataclass(frozen=True)
class ExactDephasingStates:
    rho_s: np.ndarray
    rho_b: np.ndarray | None
    leakage: float
    thermal_tail: float


def exact_reduced_states(
    spec: DephasingSpec, rho_s0: np.ndarray, tau: float, leakage_limit: float | None = LEAKAGE_LIMIT
) -> ExactDephasingStates:
    """Closed-form reduced states at ``tau``.

    ``rho_B`` (discrete modes only) is the population-weighted mixture of
    displaced truncated thermal states.  ``TruncationError`` is raised when the
    displacement pushes more than ``leakage_limit`` population above ``n_max``
    (pass ``None`` to only report it).
    """
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    check_density_matrix(rho_s0, "rho_S(0)")
    k = kernels(spec, tau)
    factor = math.exp(-8 * spec.lam**2 * k.gamma)
    rho_s = rho_s0.copy()
    rho_s[0, 1] = rho_s0[0, 1] * factor * np.exp(-1j * spec.omega0 * tau)
    rho_s[1, 0] = np.conj(rho_s[0, 1])
    if spec.mode_kind != "discrete":
        return ExactDephasingStates(rho_s, None, 0.0, 0.0)

    leakage = 0.0
    rho_b = 0
    for level in (0, 1):
        p = float(np.real(rho_s0[level, level]))
        alphas = displacement_amplitudes(spec, level, tau)
        parts = []
        for w, alpha in zip(spec.frequencies, alphas):
            kept, leak = displaced_thermal_mode(w, spec.beta, spec.n_max, alpha)
            leakage = max(leakage, leak)
            parts.append(kept)
        rho_b = rho_b + p * reduce(np.kron, parts)
    rho_b = rho_b / np.real(np.trace(rho_b))
    tail = float(max(math.exp(-spec.beta * w * (spec.n_max + 1)) for w in spec.frequencies))
    if leakage_limit is not None and leakage > leakage_limit:
        raise TruncationError(
            f"displaced bath states leak {leakage:.2e} of their population above n_max={spec.n_max}", leakage
        )
    return ExactDephasingStates(rho_s, rho_b, leakage, tail)


def coherence_factor(spec: DephasingSpec, tau: float) -> float:
    return math.exp(-8 * spec.lam**2 * kernels(spec, tau).gamma)


# --- closed-form thermodynamics -----------------------------------------------------------


@dataclass(frozen=True)
class DephasingThermo:
    tau: float
    sz: float
    h_s_eff: np.ndarray
    h_b_eff: np.ndarray | None
    dw_s: float
    dw_b: float
    dq_s: float
    dq_b: float
    u_chi: float
    du_chi: float
    du_s: float
    du_b: float
    ds_b: float
    ds_s: float
    r_s: float


def polarization(rho_s0) -> float:
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    return float(np.real(rho_s0[0, 0] - rho_s0[1, 1]))


def bloch_radius(rho_s0, gamma: float, lam: float) -> float:
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    p0, p1 = float(np.real(rho_s0[0, 0])), float(np.real(rho_s0[1, 1]))
    c2 = abs(rho_s0[0, 1]) ** 2
    return math.sqrt(max(0.0, 1 - 4 * (p0 * p1 - math.exp(-16 * lam**2 * gamma) * c2)))


def closed_form_thermo(spec: DephasingSpec, rho_s0: np.ndarray, alpha_s: float, tau: float) -> DephasingThermo:
    """Second-order thermodynamic quantities of the dephasing model at ``tau``.

    Everything except ``ds_b`` is exact for this model; ``ds_b`` is the leading
    ``lam^2`` term.
    """
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    alpha_b = 1 - alpha_s
    lam2 = spec.lam**2
    sz = polarization(rho_s0)
    k = kernels(spec, tau)
    h_s_eff = (0.5 * spec.omega0 - 4 * lam2 * sz * k.delta) * SIGMA_Z + 4 * lam2 * alpha_s * sz**2 * k.delta * np.eye(2)
    h_b_eff = None
    if spec.mode_kind == "discrete" and 2 * (spec.n_max + 1) ** len(spec.modes) <= settings.max_dim:
        ops = mode_operators(len(spec.modes), spec.n_max)
        h_b = sum(w * dagger(a) @ a for (w, _), a in zip(spec.modes, ops))
        field_op = sum(np.conj(f) * a + f * dagger(a) for (_, f), a in zip(spec.modes, ops))
        h_b_eff = h_b + spec.lam * sz * field_op + 4 * lam2 * alpha_b * sz**2 * k.delta * np.eye(h_b.shape[0])

    dw_b = 4 * lam2 * alpha_b * sz**2 * k.ddelta
    dq_b = 4 * lam2 * (1 - sz**2) * k.ddelta
    r = bloch_radius(rho_s0, k.gamma, spec.lam)
    c2 = abs(rho_s0[0, 1]) ** 2
    if c2 == 0 or r >= 1 or r == 0:
        ds_s = 0.0
    else:
        b = 16 * c2 / r * math.exp(-16 * lam2 * k.gamma) * math.log((1 + r) / (1 - r))
        ds_s = lam2 * b * k.dgamma
    return DephasingThermo(
        tau=tau,
        sz=sz,
        h_s_eff=h_s_eff,
        h_b_eff=h_b_eff,
        dw_s=-dw_b,
        dw_b=dw_b,
        dq_s=0.0,
        dq_b=dq_b,
        u_chi=-4 * lam2 * (1 - sz**2) * k.delta,
        du_chi=-4 * lam2 * (1 - sz**2) * k.ddelta,
        du_s=-dw_b,
        du_b=4 * lam2 * (1 - alpha_s * sz**2) * k.ddelta,
        ds_b=4 * spec.beta * lam2 * (1 - sz**2) * k.ddelta,
        ds_s=ds_s,
        r_s=r,
    )


@dataclass(frozen=True)
class BathTemperatures:
    pseudo_limit: float | None
    extended: float
    sigma_b: float


def bath_temperatures_example2(spec: DephasingSpec, rho_s0, alpha_s: float, tau: float | None = None) -> BathTemperatures:
    sz = polarization(rho_s0)
    t = 1.0 / spec.beta
    limit = None if abs(1 - sz**2) < 1e-15 else t * (1 - alpha_s * sz**2) / (1 - sz**2)
    sigma = 0.0
    if tau is not None:
        c = closed_form_thermo(spec, rho_s0, alpha_s, tau)
        sigma = c.ds_b - spec.beta * c.dq_b
    return BathTemperatures(limit, t, sigma)


# --- Markovian limit ----------------------------------------------------------------------


def markovian_rate(lam: float, beta: float) -> float:
    return 4 * math.pi * lam**2 / beta


def markov_gamma_estimate(tau: float, beta: float) -> float:
    """Large-``tau`` form ``pi tau / (2 beta)`` of the decoherence kernel after removing the cutoff."""
    return math.pi * tau / (2 * beta)


def markovian_generator(spec: DephasingSpec) -> LindbladGenerator:
    gamma = markovian_rate(spec.lam, spec.beta)
    return LindbladGenerator(0.5 * spec.omega0 * SIGMA_Z, ((SIGMA_Z, 0.5 * gamma),))


def markovian_dephasing(spec: DephasingSpec, rho_s0, grid: TimeGrid) -> tuple[Trajectory, LindbladGenerator]:
    generator = markovian_generator(spec)
    return propagate_lindblad(generator, rho_s0, grid), generator


def markovian_solution(spec: DephasingSpec, rho_s0, tau) -> np.ndarray:
    """Closed-form Markovian state(s): populations fixed, coherence ``~ exp(-(gamma + i w0) tau)``."""
    rho_s0 = np.asarray(rho_s0, dtype=complex)
    tau = np.asarray(tau, dtype=float)
    gamma = markovian_rate(spec.lam, spec.beta)
    out = np.broadcast_to(rho_s0, tau.shape + (2, 2)).copy()
    c = rho_s0[0, 1] * np.exp(-(gamma + 1j * spec.omega0) * tau)
    out[..., 0, 1] = c
    out[..., 1, 0] = np.conj(c)
    return out
