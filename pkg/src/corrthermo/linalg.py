"""Dense operator algebra on finite-dimensional bipartite Hilbert spaces.

Operators are plain complex ``numpy`` arrays.  Functions that act on states
accept arrays with leading batch axes (``(..., d, d)``) wherever that costs
nothing extra, so whole trajectories can be processed in one call.

Convention: in ``S (x) B`` the system factor comes first, so the pair of
indices ``(i_s, i_b)`` lives at flat position ``i_s * dim_b + i_b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .config import settings
from .errors import DimensionError, InvalidStateError, NotHermitianError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
# eigenvalues below -NEGATIVE_EIG_ERROR mean the state upstream is broken
NEGATIVE_EIG_ERROR = 1e-8

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# ladder operators on the qubit: |0> is the sigma_z = +1 level
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class CompositeLayout:
    dim_s: int
    dim_b: int

    def __post_init__(self):
        if int(self.dim_s) != self.dim_s or self.dim_s < 2:
            raise DimensionError(f"dim_s must be an integer >= 2, got {self.dim_s}")
        if int(self.dim_b) != self.dim_b or self.dim_b < 1:
            raise DimensionError(f"dim_b must be an integer >= 1, got {self.dim_b}")
        check_dimension(self.dim_s * self.dim_b)

    @property
    def total(self) -> int:
        return self.dim_s * self.dim_b

    def flat_index(self, i_s: int, i_b: int) -> int:
        return i_s * self.dim_b + i_b

    def split_index(self, flat: int) -> tuple[int, int]:
        return divmod(flat, self.dim_b)


def check_dimension(dim: int) -> None:
    if dim > settings.max_dim:
        raise DimensionError(
            f"total dimension {dim} exceeds the configured maximum {settings.max_dim} "
            "(lower the Fock cutoff or raise CORRTHERMO_MAX_DIM)"
        )


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol * scale)


def require_hermitian(a: np.ndarray, name: str = "operator", tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not is_hermitian(a, tol):
        dev = float(np.max(np.abs(a - dagger(a))))
        raise NotHermitianError(f"{name} is not Hermitian (max |A - A^dag| = {dev:.3e})")
    return a


def trace(a: np.ndarray) -> np.ndarray | complex:
    return np.trace(a, axis1=-2, axis2=-1)


def expect(rho: np.ndarray, op: np.ndarray) -> np.ndarray | float:
    """Real part of ``Tr[rho op]``; works on batches of ``rho``."""
    # Tr[AB] = sum_ij A_ij B_ji
    return np.real(np.einsum("...ij,ji->...", rho, op))


def trace_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Complex ``Tr[a b]`` for (batched) ``a`` and ``b`` without forming the product."""
    return np.einsum("...ij,...ji->...", a, b)


def tensor_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b`` with the system factor first."""
    a = np.asarray(a)
    b = np.asarray(b)
    check_dimension(a.shape[-1] * b.shape[-1])
    return np.kron(a, b)


def embed_s(op_s: np.ndarray, layout: CompositeLayout) -> np.ndarray:
    return np.kron(op_s, np.eye(layout.dim_b))


def embed_b(op_b: np.ndarray, layout: CompositeLayout) -> np.ndarray:
    return np.kron(np.eye(layout.dim_s), op_b)


def partial_trace(op: np.ndarray, layout: CompositeLayout, keep: Literal["S", "B"]) -> np.ndarray:
    """Reduce an operator on ``S (x) B`` to one factor.

    ``keep="S"`` traces out the bath and ``keep="B"`` traces out the system.
    Leading batch axes are preserved.
    """
    op = np.asarray(op)
    if op.shape[-2:] != (layout.total, layout.total):
        raise DimensionError(
            f"operator of shape {op.shape[-2:]} does not match layout {layout.dim_s}x{layout.dim_b}"
        )
    ds, db = layout.dim_s, layout.dim_b
    t = op.reshape(op.shape[:-2] + (ds, db, ds, db))
    if keep == "S":
        return np.einsum("...ibjb->...ij", t)
    if keep == "B":
        return np.einsum("...aiaj->...ij", t)
    raise ValueError(f"keep must be 'S' or 'B', got {keep!r}")


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigen-decomposition ``H = V diag(w) V^dag`` with ascending ``w``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.apply(lambda w: w)

    def apply(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Spectral calculus: ``V diag(func(w)) V^dag``."""
        v = self.eigenvectors
        return (v * func(self.eigenvalues)[..., None, :]) @ dagger(v)

    def propagator(self, dt: float) -> np.ndarray:
        return self.apply(lambda w: np.exp(-1j * w * dt))


def hermitian_spectrum(h: np.ndarray, require_hermitian_input: bool = True) -> SpectralDecomposition:
    if require_hermitian_input:
        h = require_hermitian(h, "H")
    w, v = np.linalg.eigh(h)
    return SpectralDecomposition(w, v)


def evolve_unitary(rho: np.ndarray, h: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i H dt) rho exp(+i H dt)`` (hbar = 1)."""
    h = require_hermitian(h, "H")
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != h.shape:
        raise DimensionError(f"state shape {rho.shape} does not match H shape {h.shape}")
    if dt == 0:
        return rho.copy()
    u = hermitian_spectrum(h, False).propagator(dt)
    return u @ rho @ dagger(u)


def check_density_matrix(rho: np.ndarray, name: str = "rho") -> None:
    """Raise :class:`InvalidStateError` unless ``rho`` is a valid density matrix.

    Tolerances: trace 1e-10, Hermiticity 1e-12 (relative), eigenvalues >= -1e-10.
    """
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise InvalidStateError(f"{name} must be square, got shape {rho.shape}")
    if not is_hermitian(rho, 1e-10):
        raise InvalidStateError(f"{name} is not Hermitian")
    tr = trace(rho)
    if np.max(np.abs(tr - 1.0)) > TRACE_TOL:
        raise InvalidStateError(f"{name} has trace {np.ravel(tr)[0]:.12g}, expected 1")
    w = np.linalg.eigvalsh(hermitian_part(rho))
    if np.min(w) < -POSITIVITY_TOL:
        raise InvalidStateError(f"{name} has a negative eigenvalue {np.min(w):.3e}")


def maybe_check_density_matrix(rho: np.ndarray, name: str = "rho") -> None:
    if settings.validate_states:
        check_density_matrix(rho, name)


def _clamped_eigenvalues(rho: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(rho)))
    if np.min(w) < -NEGATIVE_EIG_ERROR:
        raise InvalidStateError(f"density matrix has eigenvalue {np.min(w):.3e} < -1e-8")
    return w


def _xlogx(w: np.ndarray, clamp: float) -> np.ndarray:
    safe = np.where(w > clamp, w, 1.0)
    return np.where(w > clamp, w * np.log(safe), 0.0)


def von_neumann_entropy(rho: np.ndarray) -> np.ndarray | float:
    """``-Tr[rho ln rho]`` in nats; eigenvalues below the clamp contribute nothing."""
    w = _clamped_eigenvalues(rho)
    s = -np.sum(_xlogx(w, settings.eig_clamp), axis=-1)
    s = np.maximum(s, 0.0)
    return float(s) if np.ndim(s) == 0 else s


def entropy_rate(rho: np.ndarray, rho_dot: np.ndarray) -> np.ndarray | float:
    """``dS/dt = -Tr[rho_dot ln rho]`` for a trace-preserving flow.

    Directions with eigenvalue below the clamp are dropped: the logarithm
    diverges there, and for truncated baths these are numerically empty levels.
    """
    w, v = np.linalg.eigh(hermitian_part(np.asarray(rho)))
    clamp = settings.eig_clamp
    logw = np.where(w > clamp, np.log(np.where(w > clamp, w, 1.0)), 0.0)
    # diagonal of rho_dot in the eigenbasis of rho
    diag = np.real(np.einsum("...ki,...kl,...li->...i", v.conj(), rho_dot, v))
    r = -np.sum(diag * logw, axis=-1)
    return float(r) if np.ndim(r) == 0 else r


def hermitian_log(rho: np.ndarray, floor: float | None = None) -> np.ndarray:
    """Matrix logarithm of a positive operator; eigenvalues are floored at ``floor``."""
    floor = settings.eig_clamp if floor is None else floor
    dec = hermitian_spectrum(hermitian_part(np.asarray(rho, dtype=complex)), False)
    return dec.apply(lambda w: np.log(np.maximum(w, floor)))


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Umegaki relative entropy ``Tr[rho (ln rho - ln sigma)]``; ``inf`` off-support."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise DimensionError(f"shapes differ: {rho.shape} vs {sigma.shape}")
    maybe_check_density_matrix(rho, "rho")
    maybe_check_density_matrix(sigma, "sigma")
    clamp = settings.eig_clamp
    p, u = np.linalg.eigh(hermitian_part(rho))
    q, v = np.linalg.eigh(hermitian_part(sigma))
    overlap = np.abs(dagger(u) @ v) ** 2  # overlap[i, j] = |<u_i|v_j>|^2
    weight_on_sigma_kernel = (p.clip(min=0.0) @ overlap)[q <= clamp]
    if np.any(weight_on_sigma_kernel > clamp):
        return float("inf")
    log_q = np.where(q > clamp, np.log(np.where(q > clamp, q, 1.0)), 0.0)
    first = float(np.sum(_xlogx(p, clamp)))
    second = float(p.clip(min=0.0) @ overlap @ log_q)
    return max(first - second, 0.0)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """GUE-like Hermitian matrix normalised to spectral norm ``scale``."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    return scale * h / np.max(np.abs(np.linalg.eigvalsh(h)))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the induced (Ginibre) measure; full rank unless ``rank`` is given."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """``(x, y, z)`` with ``rho = (I + r.sigma)/2``; batched over leading axes."""
    rho = np.asarray(rho)
    x = 2.0 * np.real(rho[..., 1, 0])
    y = 2.0 * np.imag(rho[..., 1, 0])
    z = np.real(rho[..., 0, 0] - rho[..., 1, 1])
    return np.stack([x, y, z], axis=-1)


def qubit_from_bloch(r) -> np.ndarray:
    x, y, z = (float(c) for c in r)
    if x * x + y * y + z * z > 1.0 + 1e-12:
        raise InvalidStateError(f"Bloch vector {(x, y, z)} lies outside the unit ball")
    return 0.5 * (np.eye(2) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitian_part(a - b)))))
