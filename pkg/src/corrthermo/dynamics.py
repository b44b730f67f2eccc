"""Exact joint propagation, Lindblad integration and per-step thermodynamic ledgers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .accounting import (
    BipartiteSystem,
    EnergySplit,
    FluxRates,
    JointState,
    ThermoSnapshot,
    flux_rates_time_dependent,
    internal_energies,
    rate_derived_quantities,
    split_snapshots,
    thermo_quantities,
)
from .errors import DimensionError, InvariantViolation, PreconditionError, StepSizeError
from .linalg import (
    NEGATIVE_EIG_ERROR,
    CompositeLayout,
    check_density_matrix,
    dagger,
    hermitian_part,
    hermitian_spectrum,
    require_hermitian,
    trace,
    von_neumann_entropy,
)

# above this joint dimension the joint entropy is taken from the initial spectrum,
# which unitary evolution leaves unchanged
JOINT_ENTROPY_DIM_LIMIT = 512
# elements per batched block when evaluating a trajectory
BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"t1 must exceed t0 (got t0={self.t0}, t1={self.t1})")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.steps + 1)


@dataclass(frozen=True)
class LindbladGenerator:
    """``L[rho] = -i[H, rho] + sum_k g_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2)``."""

    hamiltonian: np.ndarray
    jump_terms: tuple[tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        h = require_hermitian(self.hamiltonian, "hamiltonian")
        terms = []
        for op, rate in self.jump_terms:
            op = np.asarray(op, dtype=complex)
            if op.shape != h.shape:
                raise DimensionError(f"jump operator shape {op.shape} does not match {h.shape}")
            if not rate >= 0:
                raise ValueError(f"jump rates must be nonnegative, got {rate}")
            terms.append((op, float(rate)))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jump_terms", tuple(terms))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for op, rate in self.jump_terms:
            if rate == 0:
                continue
            ld = dagger(op)
            ldl = ld @ op
            out = out + rate * (op @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl))
        return out

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Matrix acting on row-major ``rho.reshape(-1)``."""
        d = self.dim
        eye = np.eye(d)
        h = self.hamiltonian
        # row-major: vec(A rho B) = (A kron B^T) vec(rho)
        sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for op, rate in self.jump_terms:
            if rate == 0:
                continue
            ldl = dagger(op) @ op
            sup = sup + rate * (np.kron(op, op.conj()) - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T)))
        return sup

    def trace_defect(self, rho: np.ndarray) -> float:
        return float(abs(trace(self(rho))))


@dataclass(frozen=True)
class Trajectory(Sequence):
    """Immutable time series of density matrices.

    With a layout the states are joint states of S+B and indexing yields
    ``JointState``; without one they are reduced states and indexing yields arrays.
    """

    times: np.ndarray
    states: np.ndarray
    layout: CompositeLayout | None = None
    unitary: bool = False
    grid: TimeGrid | None = None
    joint_entropy: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.states.setflags(write=False)

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            raise TypeError("slice the .states array directly")
        if self.layout is None:
            return self.states[i]
        return JointState(self.states[i], self.layout, float(self.times[i]))

    @property
    def is_joint(self) -> bool:
        return self.layout is not None

    def joint(self) -> JointState:
        """All states as one batched ``JointState``."""
        if self.layout is None:
            raise PreconditionError("trajectory holds reduced states only")
        return JointState(self.states, self.layout, self.times)

    @property
    def rho_s(self) -> np.ndarray:
        return self.joint().rho_s

    @property
    def rho_b(self) -> np.ndarray:
        return self.joint().rho_b


def _initial(rho0, dim: int) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dim, dim):
        raise DimensionError(f"initial state has shape {rho0.shape}, expected {(dim, dim)}")
    check_density_matrix(rho0, "initial state")
    return rho0


def propagate_exact(system: BipartiteSystem, rho0: np.ndarray, grid: TimeGrid) -> Trajectory:
    """``rho(t) = U(t) rho0 U(t)^+`` from a single spectral decomposition of ``H_tot``."""
    if system.is_time_dependent:
        raise PreconditionError("propagate_exact needs a time-independent Hamiltonian; use propagate_piecewise")
    layout = system.layout
    rho0 = _initial(rho0, layout.total)
    spec = hermitian_spectrum(system.h_tot)
    v, e = spec.eigenvectors, spec.eigenvalues
    rho_e = dagger(v) @ rho0 @ v
    times = grid.times
    gaps = e[:, None] - e[None, :]
    d = layout.total
    chunk = max(1, BATCH_ELEMENTS // (d * d))
    states = np.empty((len(times), d, d), dtype=complex)
    for start in range(0, len(times), chunk):
        t = times[start:start + chunk] - grid.t0
        phases = np.exp(-1j * t[:, None, None] * gaps)
        states[start:start + chunk] = v @ (rho_e * phases) @ dagger(v)
    states = hermitian_part(states)

    s0 = float(von_neumann_entropy(rho0))
    if d <= JOINT_ENTROPY_DIM_LIMIT:
        drift = abs(float(von_neumann_entropy(states[-1])) - s0)
        if drift > 1e-8:
            raise InvariantViolation("joint entropy drift", drift, 1e-8)
    return Trajectory(times, states, layout, unitary=True, grid=grid, joint_entropy=s0)


def propagate_piecewise(system: BipartiteSystem, rho0: np.ndarray, grid: TimeGrid) -> Trajectory:
    """Step with ``H`` frozen at each step midpoint (second order in ``dt``)."""
    layout = system.layout
    rho = _initial(rho0, layout.total)
    times = grid.times
    dt = grid.dt
    states = np.empty((len(times), layout.total, layout.total), dtype=complex)
    states[0] = rho
    for k in range(grid.steps):
        u = hermitian_spectrum(system.total_hamiltonian(times[k] + 0.5 * dt)).propagator(dt)
        rho = u @ rho @ dagger(u)
        states[k + 1] = rho
    s0 = float(von_neumann_entropy(states[0]))
    return Trajectory(times, hermitian_part(states), layout, unitary=True, grid=grid, joint_entropy=s0)


def rk4_step_matrix(superop: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for a linear autonomous ODE ``y' = A y``.

    For linear problems the four RK stages collapse exactly to the degree-4
    Taylor polynomial of ``exp(dt A)``.
    """
    a = dt * superop
    step = np.eye(a.shape[0], dtype=complex)
    term = step.copy()
    for k in range(1, 5):
        term = term @ a / k
        step = step + term
    return step


def propagate_lindblad(
    generator: LindbladGenerator, rho0: np.ndarray, grid: TimeGrid, positivity_floor: float = -NEGATIVE_EIG_ERROR
) -> Trajectory:
    """Fixed-step RK4 integration of the master equation.

    Raises ``StepSizeError`` (with a suggested ``dt``) when the step is outside
    the RK4 stability region or a state loses positivity beyond the floor.
    """
    d = generator.dim
    rho = _initial(rho0, d)
    sup = generator.superoperator
    dt = grid.dt
    radius = float(np.max(np.abs(np.linalg.eigvals(sup)))) if d <= 32 else float(np.linalg.norm(sup, 2))
    # the RK4 stability region reaches |z| ~ 2.78 on the real axis and 2.83 on the imaginary one
    if radius * dt > 2.5:
        raise StepSizeError(
            f"dt={dt:.3e} exceeds the RK4 stability limit for this generator", suggested_dt=2.0 / radius
        )
    step = rk4_step_matrix(sup, dt)
    vec = rho.reshape(-1)
    out = np.empty((grid.steps + 1, d * d), dtype=complex)
    out[0] = vec
    for k in range(grid.steps):
        vec = step @ vec
        out[k + 1] = vec
    states = hermitian_part(out.reshape(-1, d, d))

    traces = np.real(np.trace(states, axis1=-2, axis2=-1))
    drift = float(np.max(np.abs(traces - traces[0])))
    if drift > 1e-10:
        raise StepSizeError(f"trace drift {drift:.2e} exceeds 1e-10", suggested_dt=dt / 2)
    min_eig = float(np.min(np.linalg.eigvalsh(states)))
    if min_eig < positivity_floor:
        raise StepSizeError(f"smallest eigenvalue {min_eig:.2e} below floor {positivity_floor:.0e}", suggested_dt=dt / 2)
    return Trajectory(grid.times, states, None, unitary=False, grid=grid)


# --- ledgers ------------------------------------------------------------------------------


def trapezoid(values: np.ndarray, dt: float) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


@dataclass(frozen=True)
class LedgerTotals:
    """Trapezoidal integrals of the rate series plus endpoint energy changes."""

    q_s: float
    q_b: float
    w_s: float
    w_b: float
    w_ext_s: float
    w_ext_b: float
    s_s: float
    s_b: float
    u_chi: float
    delta_u_s: float
    delta_u_b: float
    delta_u_chi: float


@dataclass(frozen=True)
class ClosureResiduals:
    first_law_step: float
    first_law_integrated: float
    work_antisymmetry: float
    heat_balance_step: float
    heat_balance_integrated: float
    second_law_min: float
    total_heat: float


@dataclass
class ThermoLedger:
    grid: TimeGrid
    times: np.ndarray
    columns: dict[str, np.ndarray]
    rates: FluxRates
    split: EnergySplit
    time_dependent: bool = False

    @cached_property
    def snapshots(self) -> list[ThermoSnapshot]:
        q = dict(self.columns)
        q["rates"] = self.rates
        return split_snapshots(self.times, q)

    @cached_property
    def totals(self) -> LedgerTotals:
        dt = self.grid.dt
        r, c = self.rates, self.columns
        return LedgerTotals(
            q_s=trapezoid(r.dq_s, dt), q_b=trapezoid(r.dq_b, dt),
            w_s=trapezoid(r.dw_s, dt), w_b=trapezoid(r.dw_b, dt),
            w_ext_s=trapezoid(r.dw_ext_s * np.ones_like(r.dq_s), dt),
            w_ext_b=trapezoid(r.dw_ext_b * np.ones_like(r.dq_b), dt),
            s_s=trapezoid(r.ds_s, dt), s_b=trapezoid(r.ds_b, dt),
            u_chi=trapezoid(r.du_chi, dt),
            delta_u_s=float(c["u_s"][-1] - c["u_s"][0]),
            delta_u_b=float(c["u_b"][-1] - c["u_b"][0]),
            delta_u_chi=float(c["u_chi"][-1] - c["u_chi"][0]),
        )

    def residuals(self) -> ClosureResiduals:
        r, t = self.rates, self.totals
        step_s = np.abs(r.du_s - (r.dq_s + r.dw_s + r.dw_ext_s))
        step_b = np.abs(r.du_b - (r.dq_b + r.dw_b + r.dw_ext_b))
        int_s = abs(t.delta_u_s - (t.q_s + t.w_s + t.w_ext_s)) / (1 + abs(t.delta_u_s))
        int_b = abs(t.delta_u_b - (t.q_b + t.w_b + t.w_ext_b)) / (1 + abs(t.delta_u_b))
        if self.time_dependent:
            # exchanged works sum to the driving of the mean interaction; checked via dU_tot
            anti = 0.0
            heat_step = np.abs(r.dq_s + r.dq_b + r.dq_chi)
        else:
            anti = float(np.max(np.abs(r.dw_s + r.dw_b)))
            heat_step = np.abs(r.dq_s + r.dq_b + r.du_chi)
        heat_int = abs(t.q_s + t.q_b + (t.delta_u_chi if not self.time_dependent else trapezoid(r.dq_chi, self.grid.dt)))
        c = self.columns
        s_chi = c["s_s"] + c["s_b"] - c["s_sb"]
        second = float(np.min(s_chi - (c["s_s"][0] + c["s_b"][0] - c["s_sb"][0])))
        return ClosureResiduals(
            first_law_step=float(max(step_s.max(), step_b.max())),
            first_law_integrated=float(max(int_s, int_b)),
            work_antisymmetry=anti,
            heat_balance_step=float(np.max(heat_step)),
            heat_balance_integrated=float(heat_int),
            second_law_min=second,
            total_heat=float(np.max(np.abs(r.total_heat))),
        )

    def check_invariants(
        self, step_tol: float = 1e-9, integrated_tol: float = 1e-6, antisymmetry_tol: float = 1e-12, second_law_tol: float = 1e-9
    ) -> ClosureResiduals:
        """Raise ``InvariantViolation`` naming the first violated invariant."""
        res = self.residuals()
        checks = [
            ("first law (per step)", res.first_law_step, step_tol),
            ("first law (integrated)", res.first_law_integrated, integrated_tol),
            ("work antisymmetry", res.work_antisymmetry, antisymmetry_tol),
            ("heat balance (per step)", res.heat_balance_step, step_tol),
            ("heat balance (integrated)", res.heat_balance_integrated, integrated_tol),
        ]
        for name, value, tol in checks:
            if value > tol:
                raise InvariantViolation(name, value, tol)
        return res


def _merge(parts: list[dict]) -> dict:
    out = {}
    for key in parts[0]:
        if key == "rates":
            rates = [p["rates"] for p in parts]
            out["rates"] = FluxRates(**{
                k: np.concatenate([np.atleast_1d(np.asarray(getattr(r, k), dtype=float)) * np.ones(len(np.atleast_1d(r.du_s))) for r in rates])
                for k in FluxRates.__dataclass_fields__
            })
        else:
            out[key] = np.concatenate([np.atleast_1d(p[key]) for p in parts])
    return out


def build_ledger(
    trajectory: Trajectory,
    system: BipartiteSystem,
    split: EnergySplit = EnergySplit(),
    t_ref: float | None = None,
    h_dot=None,
) -> ThermoLedger:
    """Evaluate every per-step quantity along a joint trajectory."""
    if not trajectory.is_joint:
        raise PreconditionError("ledger needs joint states (correlation-dependent quantities are requested)")
    if trajectory.layout != system.layout:
        raise DimensionError("trajectory layout does not match the system")
    grid = trajectory.grid or TimeGrid(float(trajectory.times[0]), float(trajectory.times[-1]), len(trajectory) - 1)
    d = system.layout.total

    if system.is_time_dependent:
        quantities = _time_dependent_quantities(trajectory, system, split, t_ref, h_dot)
    else:
        s_sb = None
        if trajectory.unitary and d > JOINT_ENTROPY_DIM_LIMIT and trajectory.joint_entropy is not None:
            s_sb = trajectory.joint_entropy
        chunk = max(1, BATCH_ELEMENTS // (d * d))
        parts = []
        for start in range(0, len(trajectory), chunk):
            sl = slice(start, start + chunk)
            state = JointState(trajectory.states[sl], system.layout, trajectory.times[sl])
            parts.append(thermo_quantities(system, state, split, t_ref, s_sb))
        quantities = _merge(parts)
    rates = quantities.pop("rates")
    return ThermoLedger(grid, trajectory.times, quantities, rates, split, system.is_time_dependent)


def _time_dependent_quantities(trajectory, system, split, t_ref, h_dot) -> dict:
    rows = []
    for i in range(len(trajectory)):
        state = trajectory[i]
        e = internal_energies(system, state, split)
        r = flux_rates_time_dependent(system, state, split, h_dot=h_dot)
        s_s = float(von_neumann_entropy(state.rho_s))
        s_b = float(von_neumann_entropy(state.rho_b))
        s_sb = float(von_neumann_entropy(state.rho_sb))
        row = dict(u_s=e.u_s, u_b=e.u_b, u_chi=e.u_chi, u_tot=e.u_tot, s_s=s_s, s_b=s_b, s_sb=s_sb, s_chi=s_s + s_b - s_sb)
        row.update({k: float(v) for k, v in rate_derived_quantities(r, t_ref).items()})
        row["rates"] = r
        rows.append(row)
    return _merge(rows)


def max_abs(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.max(np.abs(values))) if values.size else 0.0
