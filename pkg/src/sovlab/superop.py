"""Adjoint Lindbladian superoperator and Heisenberg-picture propagation.

A system driven by Gaussian white noise, H_t = H0 + sqrt(2 gamma) xi_t L
with Hermitian H0 and L, has noise-averaged Heisenberg observables
<A_t> = exp(Ldag t)[A] with

    Ldag[A] = i [H0, A] - gamma [L, [L, A]].

Operators are vectorized row-major, so vec(X A Y) = (X kron Y^T) vec(A)
and the superoperator matrix reads

    M = i (H0 kron 1 - 1 kron H0^T)
        + gamma (2 L kron L^T - L^2 kron 1 - 1 kron (L^2)^T).

Propagation uses the eigendecomposition of M by default and falls back
to a deterministic fixed-step RK4 integration of the commutator form
when the eigenvector matrix is too ill-conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .spin import HermitianOperator, as_matrix, hermiticity_defect

UNITALITY_TOL = 1e-10
ASYM_TOL = 1e-9
DEFAULT_COND_LIMIT = 1e10
DEFAULT_ODE_DT = 1e-3


class LindbladSpec:
    """Immutable (H0, L, gamma) triple defining one noise channel.

    The eigendecomposition of the superoperator matrix is computed on
    first use and cached; the spec and its cache never mutate afterwards.
    """

    def __init__(self, H0, L, gamma: float):
        h0 = as_matrix(HermitianOperator(as_matrix(H0)))
        l_op = as_matrix(HermitianOperator(as_matrix(L)))
        if h0.shape != l_op.shape:
            raise ValueError(f"H0 and L dimensions differ: {h0.shape} vs {l_op.shape}")
        if not np.isrealobj(np.asarray(gamma)) or gamma < 0:
            raise ValueError(f"gamma must be real and >= 0, got {gamma}")
        h0.flags.writeable = False
        l_op.flags.writeable = False
        self.H0 = h0
        self.L = l_op
        self.gamma = float(gamma)
        self.dim = h0.shape[0]
        self._spectral_cache = None

    def __repr__(self):
        return f"LindbladSpec(dim={self.dim}, gamma={self.gamma})"

    def spectral(self):
        """Cached (eigenvalues, V, V^-1, cond(V)) of the superoperator matrix."""
        if self._spectral_cache is None:
            m = build_adjoint_lindbladian(self)
            w, v = np.linalg.eig(m)
            cond = float(np.linalg.cond(v))
            vinv = np.linalg.inv(v)
            for arr in (w, v, vinv):
                arr.flags.writeable = False
            self._spectral_cache = (w, v, vinv, cond)
        return self._spectral_cache


@dataclass(frozen=True)
class PropagationConfig:
    """Numerical controls for exp(Ldag t) evaluation.

    method: 'spectral' (modal decomposition, default) or 'ode'
    (fixed-step RK4 on the commutator form).  The spectral route falls
    back to the ODE route when cond(V) exceeds cond_limit.
    """

    method: str = "spectral"
    ode_dt: float = DEFAULT_ODE_DT
    cond_limit: float = DEFAULT_COND_LIMIT

    def __post_init__(self):
        if self.method not in ("spectral", "ode"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if self.ode_dt <= 0:
            raise ValueError("ode_dt must be positive")


def vectorize(a: np.ndarray) -> np.ndarray:
    """Row-major stacking of a d x d matrix into a d^2 vector."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a.reshape(-1)


def devectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of vectorize."""
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return v.reshape(d, d)


def build_adjoint_lindbladian(spec: LindbladSpec) -> np.ndarray:
    """Dense d^2 x d^2 matrix of Ldag in the row-major vec convention."""
    h0, l_op, gamma = spec.H0, spec.L, spec.gamma
    d = spec.dim
    eye = np.eye(d)
    l_sq = l_op @ l_op
    m = 1j * (np.kron(h0, eye) - np.kron(eye, h0.T))
    m += gamma * (
        2.0 * np.kron(l_op, l_op.T) - np.kron(l_sq, eye) - np.kron(eye, l_sq.T)
    )
    # the identity is a fixed point of the adjoint map; roundoff only
    defect = float(np.max(np.abs(m @ vectorize(eye))))
    scale = max(1.0, float(np.max(np.abs(m))))
    if defect > UNITALITY_TOL * scale:
        raise NumericalError(f"adjoint Lindbladian not unital: defect {defect:.3e}")
    return m


def apply_adjoint(spec: LindbladSpec, a: np.ndarray) -> np.ndarray:
    """Ldag[A] in commutator form, i[H0, A] - gamma [L, [L, A]]."""
    a = np.asarray(a, dtype=complex)
    comm_h = spec.H0 @ a - a @ spec.H0
    comm_l = spec.L @ a - a @ spec.L
    return 1j * comm_h - spec.gamma * (spec.L @ comm_l - comm_l @ spec.L)


def _rk4_segment(spec: LindbladSpec, a: np.ndarray, duration: float, ode_dt: float):
    """Advance A by `duration` with fixed-step RK4 (step adjusted to land exactly)."""
    if duration == 0.0:
        return a
    n = max(1, int(np.ceil(duration / ode_dt)))
    h = duration / n
    for _ in range(n):
        k1 = apply_adjoint(spec, a)
        k2 = apply_adjoint(spec, a + 0.5 * h * k1)
        k3 = apply_adjoint(spec, a + 0.5 * h * k2)
        k4 = apply_adjoint(spec, a + h * k3)
        a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return a


def _use_spectral(spec: LindbladSpec, config: PropagationConfig) -> bool:
    if config.method == "ode":
        return False
    _, _, _, cond = spec.spectral()
    return cond <= config.cond_limit


def propagate_matrix(spec, a, t, config: PropagationConfig | None = None) -> np.ndarray:
    """exp(Ldag t)[A] for a general (not necessarily Hermitian) matrix A."""
    return propagate_matrix_series(spec, a, [t], config)[0]


def propagate_matrix_series(
    spec, a, times, config: PropagationConfig | None = None
) -> np.ndarray:
    """exp(Ldag t)[A] sampled on an ascending grid of times >= 0.

    Returns an array of shape (len(times), d, d).
    """
    config = config or PropagationConfig()
    a = np.asarray(as_matrix(a), dtype=complex)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending and non-negative")
    out = np.empty((times.size, spec.dim, spec.dim), dtype=complex)
    if _use_spectral(spec, config):
        w, v, vinv, _ = spec.spectral()
        coeff = vinv @ vectorize(a)
        for i, t in enumerate(times):
            out[i] = devectorize(v @ (np.exp(w * t) * coeff))
    else:
        cur = a
        prev_t = 0.0
        for i, t in enumerate(times):
            cur = _rk4_segment(spec, cur, t - prev_t, config.ode_dt)
            prev_t = t
            out[i] = cur
    return out


def _symmetrized(raw: np.ndarray) -> tuple[np.ndarray, float]:
    defect = hermiticity_defect(raw)
    scale = max(1.0, float(np.max(np.abs(raw))) if raw.size else 0.0)
    if defect > ASYM_TOL * scale:
        raise NumericalError(
            f"propagated operator asymmetry {defect:.3e} exceeds tolerance"
        )
    return 0.5 * (raw + raw.conj().T), defect


def propagate(spec, A, t, config: PropagationConfig | None = None) -> HermitianOperator:
    """Heisenberg propagation of a Hermitian observable.

    The result is symmetrized; its asymmetry residual is recorded on the
    returned operator as ``asym_residual`` and must stay below 1e-9
    (relative to the largest entry), else a NumericalError is raised.
    """
    a = as_matrix(HermitianOperator(as_matrix(A)))
    raw = propagate_matrix(spec, a, t, config)
    sym, defect = _symmetrized(raw)
    op = HermitianOperator(sym)
    op.asym_residual = defect
    return op


def propagate_series(spec, A, times, config: PropagationConfig | None = None):
    """Symmetrized exp(Ldag t)[A] over a time grid, shape (T, d, d)."""
    a = as_matrix(HermitianOperator(as_matrix(A)))
    raw = propagate_matrix_series(spec, a, times, config)
    out = np.empty_like(raw)
    for i in range(raw.shape[0]):
        out[i], _ = _symmetrized(raw[i])
    return out
