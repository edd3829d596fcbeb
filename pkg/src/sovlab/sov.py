"""Stochastic operator variance (SOV) and derived quantities.

The SOV of an observable A under noise-averaged Heisenberg evolution is

    SOV(t) = exp(Ldag t)[A^2] - (exp(Ldag t)[A])^2,

a Hermitian positive-semidefinite operator (Kadison's inequality for the
positive unital map exp(Ldag t)).  Its time derivative obeys

    d SOV / dt = Ldag[SOV] - 2 gamma [L, <A_t>]^2,

which ties it to the dissipative OTOC handled in :mod:`sovlab.otoc`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .spin import HermitianOperator, SpinSpec, as_matrix, hs_inner, spin_operators
from .superop import (
    LindbladSpec,
    PropagationConfig,
    apply_adjoint,
    propagate,
    propagate_matrix,
    propagate_matrix_series,
    propagate_series,
)

PSD_TOL = 1e-9


@dataclass(frozen=True)
class SOVSeries:
    """SOV matrices over a time grid together with their eigensystems.

    eigenvalues[j] is ascending; eigenvectors[j][:, k] belongs to
    eigenvalues[j][k], phase-fixed so its largest-magnitude component is
    real positive, then sign-matched to the previous time for continuity.
    """

    times: np.ndarray
    matrices: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class TransportFit:
    """Power-law fit Lambda_k(t) ~ prefactor * t**exponent on a window."""

    exponent: float
    prefactor: float
    window: tuple
    residual: float
    mode: int
    n_points: int


@dataclass(frozen=True)
class MinSOVResult:
    """Minimal-SOV eigenvector at t_max with a convergence diagnostic.

    overlap compares the eigenvector against the one extracted at
    t_max / 2; converged means overlap >= 1 - conv_tol.  degenerate is
    set when the SOV vanishes (gamma = 0) or the lowest eigenvalue is
    not isolated, in which case the state is not unique.
    """

    state: np.ndarray | None
    eigenvalue: float
    overlap: float
    converged: bool
    degenerate: bool


@dataclass(frozen=True)
class UncertaintyReport:
    """Terms of the SOV uncertainty chain lhs >= mid >= rhs on a state rho0."""

    lhs: float
    mid: float
    rhs: float
    d_plus: float
    d_minus_imag: float
    satisfied: bool


def _check_psd(mat: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    vals = np.linalg.eigvalsh(mat)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if vals[0] < -tol * scale:
        raise NumericalError(
            f"SOV minimum eigenvalue {vals[0]:.3e} below positivity tolerance"
        )
    return vals


def exact_sov(spec: LindbladSpec, A, t: float,
              config: PropagationConfig | None = None) -> HermitianOperator:
    """SOV(t) via deterministic propagation; checked Hermitian and PSD."""
    a = as_matrix(HermitianOperator(as_matrix(A)))
    p2 = propagate(spec, a @ a, t, config).mat
    p1 = propagate(spec, a, t, config).mat
    raw = p2 - p1 @ p1
    sym = 0.5 * (raw + raw.conj().T)
    _check_psd(sym)
    return HermitianOperator(sym)


def sov_matrices(spec: LindbladSpec, A, times,
                 config: PropagationConfig | None = None) -> np.ndarray:
    """SOV(t) over a time grid, shape (T, d, d), Hermitian and PSD-checked."""
    a = as_matrix(HermitianOperator(as_matrix(A)))
    p2 = propagate_series(spec, a @ a, times, config)
    p1 = propagate_series(spec, a, times, config)
    out = np.empty_like(p2)
    for j in range(out.shape[0]):
        raw = p2[j] - p1[j] @ p1[j]
        out[j] = 0.5 * (raw + raw.conj().T)
        _check_psd(out[j])
    return out


def sov_eigensystem(times, matrices) -> SOVSeries:
    """Eigendecompose a Hermitian series with deterministic conventions."""
    times = np.asarray(times, dtype=float)
    matrices = np.asarray(matrices)
    t_n, d, _ = matrices.shape
    vals = np.empty((t_n, d))
    vecs = np.empty((t_n, d, d), dtype=complex)
    for j in range(t_n):
        w, v = np.linalg.eigh(matrices[j])
        scale = max(1.0, float(np.max(np.abs(w))))
        if np.any(np.diff(w) < 1e-10 * scale):
            warnings.warn(
                f"near-degenerate SOV eigenvalues at t={times[j]:g}; "
                "mode tracking by rank order may jump",
                stacklevel=2,
            )
        for k in range(d):
            lead = np.argmax(np.abs(v[:, k]))
            phase = v[lead, k]
            if abs(phase) > 0:
                v[:, k] *= np.conj(phase) / abs(phase)
            if j > 0 and np.real(np.vdot(vecs[j - 1][:, k], v[:, k])) < 0:
                v[:, k] = -v[:, k]
        vals[j] = w
        vecs[j] = v
    return SOVSeries(times=times, matrices=matrices, eigenvalues=vals,
                     eigenvectors=vecs)


def sov_series(spec: LindbladSpec, A, times,
               config: PropagationConfig | None = None) -> SOVSeries:
    """SOV matrices plus eigensystem over a time grid."""
    mats = sov_matrices(spec, A, times, config)
    return sov_eigensystem(np.asarray(times, dtype=float), mats)


def sov_rhs_residual(spec: LindbladSpec, A, t: float, dt_fd: float = 1e-4,
                     config: PropagationConfig | None = None) -> float:
    """Max-norm residual of the SOV equation of motion at time t.

    Compares the central finite difference of SOV(t) against
    Ldag[SOV(t)] - 2 gamma [L, <A_t>]^2.  Second-order accurate in dt_fd.
    """
    if t < dt_fd:
        raise ValueError("need t >= dt_fd for the central difference")
    mats = sov_matrices(spec, A, [t - dt_fd, t, t + dt_fd], config)
    deriv = (mats[2] - mats[0]) / (2.0 * dt_fd)
    x_t = propagate(spec, A, t, config).mat
    comm = spec.L @ x_t - x_t @ spec.L
    rhs = apply_adjoint(spec, mats[1]) - 2.0 * spec.gamma * (comm @ comm)
    return float(np.max(np.abs(deriv - rhs)))


def transport_exponent_fit(series: SOVSeries, mode: int, window) -> TransportFit:
    """Least-squares power-law fit of eigenvalue branch `mode` on a window.

    Fits log(Lambda) against log(t); requires at least 10 grid points in
    the window and strictly positive eigenvalues there.
    """
    t0, t1 = window
    if not (0 < t0 < t1):
        raise ValueError("window must satisfy 0 < t0 < t1")
    mask = (series.times >= t0) & (series.times <= t1)
    n_pts = int(np.count_nonzero(mask))
    if n_pts < 10:
        raise ValueError(f"fit window holds {n_pts} points; need at least 10")
    lam = series.eigenvalues[mask, mode]
    if np.any(lam <= 0):
        raise NumericalError(
            f"mode {mode} has non-positive eigenvalues in the fit window"
        )
    logt = np.log(series.times[mask])
    logl = np.log(lam)
    slope, intercept = np.polyfit(logt, logl, 1)
    resid = float(np.sqrt(np.mean((logl - (slope * logt + intercept)) ** 2)))
    return TransportFit(exponent=float(slope), prefactor=float(np.exp(intercept)),
                        window=(float(t0), float(t1)), residual=resid,
                        mode=int(mode), n_points=n_pts)


def min_sov_state(spec: LindbladSpec, A, t_max: float, conv_tol: float = 1e-6,
                  config: PropagationConfig | None = None) -> MinSOVResult:
    """Eigenvector of SOV(t_max) with the smallest eigenvalue.

    Convergence is probed by comparing against the eigenvector at
    t_max / 2.  A vanishing SOV (gamma = 0) or a non-isolated lowest
    eigenvalue is reported as degenerate rather than answered silently.
    """
    mats = sov_matrices(spec, A, [0.5 * t_max, t_max], config)
    scale_a = max(1.0, float(np.max(np.abs(as_matrix(A)))) ** 2)
    if float(np.max(np.abs(mats[1]))) <= 1e-12 * scale_a:
        return MinSOVResult(state=None, eigenvalue=0.0, overlap=0.0,
                            converged=False, degenerate=True)
    sys_now = sov_eigensystem(np.asarray([0.5 * t_max, t_max]), mats)
    v_half = sys_now.eigenvectors[0][:, 0]
    v_full = sys_now.eigenvectors[1][:, 0]
    w_full = sys_now.eigenvalues[1]
    gap_scale = max(1.0, float(np.max(np.abs(w_full))))
    degen = bool(w_full[1] - w_full[0] < 1e-10 * gap_scale)
    overlap = float(np.abs(np.vdot(v_half, v_full)))
    return MinSOVResult(state=v_full, eigenvalue=float(w_full[0]),
                        overlap=overlap, converged=overlap >= 1.0 - conv_tol,
                        degenerate=degen)


def covariance(spec: LindbladSpec, A, B, t: float,
               config: PropagationConfig | None = None) -> np.ndarray:
    """Two-observable SOV, exp(Ldag t)[AB] - <A_t><B_t> (not Hermitian)."""
    a = as_matrix(HermitianOperator(as_matrix(A)))
    b = as_matrix(HermitianOperator(as_matrix(B)))
    p_ab = propagate_matrix(spec, a @ b, t, config)
    p_a = propagate_matrix(spec, a, t, config)
    p_b = propagate_matrix(spec, b, t, config)
    return p_ab - p_a @ p_b


def _state_expect(op: np.ndarray, rho: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def uncertainty_check(spec: LindbladSpec, A, B, rho0, t: float,
                      config: PropagationConfig | None = None,
                      tol: float = 1e-10) -> UncertaintyReport:
    """Evaluate the SOV uncertainty chain on a density matrix rho0.

    lhs = Tr(SOV_A rho0) Tr(SOV_B rho0), mid = |Tr(DeltaAB_t rho0)|^2 and
    rhs = (D_+^2 - D_-^2)/4 with

        D_eta = Tr(exp(Ldag t)[{A,B}_eta] rho0) - Tr({A_t,B_t}_eta rho0),

    where {X,Y}_eta = XY + eta YX.  D_+ is real, D_- imaginary, and
    lhs >= mid >= rhs within tolerance.
    """
    rho = np.asarray(as_matrix(rho0), dtype=complex)
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise ValueError("rho0 must have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -1e-10:
        raise ValueError("rho0 must be positive semidefinite")
    a = as_matrix(HermitianOperator(as_matrix(A)))
    b = as_matrix(HermitianOperator(as_matrix(B)))
    lhs = np.real(_state_expect(exact_sov(spec, a, t, config).mat, rho)) * \
        np.real(_state_expect(exact_sov(spec, b, t, config).mat, rho))
    mid = abs(_state_expect(covariance(spec, a, b, t, config), rho)) ** 2
    a_t = propagate(spec, a, t, config).mat
    b_t = propagate(spec, b, t, config).mat
    d_eta = {}
    for eta in (+1, -1):
        prod0 = a @ b + eta * b @ a
        prod_t = a_t @ b_t + eta * b_t @ a_t
        propagated = propagate_matrix(spec, prod0, t, config)
        d_eta[eta] = _state_expect(propagated, rho) - _state_expect(prod_t, rho)
    scale = max(1.0, abs(d_eta[+1]), abs(d_eta[-1]))
    if abs(d_eta[+1].imag) > tol * scale or abs(d_eta[-1].real) > tol * scale:
        raise NumericalError("D_+ must be real and D_- imaginary")
    rhs = float(np.real((d_eta[+1] ** 2 - d_eta[-1] ** 2) / 4.0))
    chain_scale = max(1.0, lhs, mid)
    ok = (lhs >= mid - tol * chain_scale) and (mid >= rhs - tol * chain_scale)
    return UncertaintyReport(lhs=float(lhs), mid=float(mid), rhs=rhs,
                             d_plus=float(d_eta[+1].real),
                             d_minus_imag=float(d_eta[-1].imag),
                             satisfied=bool(ok))


def quantum_variance_gap(spec: LindbladSpec, A, psi0, t: float,
                         config: PropagationConfig | None = None):
    """Gap between the quantum variance and the SOV on a pure state.

    Returns (gap_direct, gap_projector) where

        gap_direct    = Var(A_t, psi0) - <psi0| SOV(t) |psi0>,
        gap_projector = <psi0| A_t Q A_t |psi0>,  Q = 1 - |psi0><psi0|,

    with A_t = exp(Ldag t)[A].  Both agree and are non-negative: the
    quantum variance of the averaged operator exceeds the SOV expectation
    by exactly the projection onto the complement of psi0.
    """
    psi = np.asarray(psi0, dtype=complex).reshape(-1)
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError("psi0 must be normalized")
    a = as_matrix(HermitianOperator(as_matrix(A)))
    x_t = propagate(spec, a, t, config).mat
    p2 = propagate(spec, a @ a, t, config).mat
    e_a2 = float(np.real(psi.conj() @ p2 @ psi))
    phi = x_t @ psi
    e_x = float(np.real(psi.conj() @ phi))
    e_xx = float(np.real(phi.conj() @ phi))
    var = e_a2 - e_x ** 2
    sov_exp = e_a2 - e_xx
    gap_direct = var - sov_exp
    gap_projector = e_xx - abs(np.vdot(psi, phi)) ** 2
    return gap_direct, gap_projector


def swap_operator(d: int) -> np.ndarray:
    """Swap on C^d x C^d: S (x kron y) = y kron x."""
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1.0
    return s


def swap_product_check(x, y):
    """Verify Tr_2[(X kron Y) S] = X Y; returns (product, max residual)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d = x.shape[0]
    big = np.kron(x, y) @ swap_operator(d)
    # partial trace over the second factor: sum the (a == b) diagonal
    prod = np.einsum("iaja->ij", big.reshape(d, d, d, d))
    residual = float(np.max(np.abs(prod - x @ y)))
    return prod, residual


@dataclass(frozen=True)
class SOVProjection:
    """Coefficients of an operator and its principal square root along
    the orthonormal set {1, Sx, Sy, Sz} (Hilbert-Schmidt normalization)."""

    coeffs: np.ndarray
    coeffs_sqrt: np.ndarray | None
    sqrt_matrix: np.ndarray | None = field(default=None, repr=False)


def sov_projection(op, spin_spec: SpinSpec) -> SOVProjection:
    """Project an operator (and, if PSD, its square root) onto {1, Sx, Sy, Sz}."""
    mat = np.asarray(as_matrix(op), dtype=complex)
    sx, sy, sz = spin_operators(spin_spec)
    eye = np.eye(spin_spec.dim)
    basis = (eye, sx.mat, sy.mat, sz.mat)
    coeffs = np.array([np.real(hs_inner(b, mat, spin_spec)) for b in basis])
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals[0] < -PSD_TOL * scale:
        return SOVProjection(coeffs=coeffs, coeffs_sqrt=None, sqrt_matrix=None)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    coeffs_sqrt = np.array([np.real(hs_inner(b, root, spin_spec)) for b in basis])
    return SOVProjection(coeffs=coeffs, coeffs_sqrt=coeffs_sqrt, sqrt_matrix=root)
