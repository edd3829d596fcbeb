"""Dissipative out-of-time-order correlator (OTOC) and its SOV route.

For noise-averaged Heisenberg evolution the correlator

    C_t = -Tr([L, <A_t>]^2) / N,   <A_t> = exp(Ldag t)[A],

is non-negative and equals the growth rate of the total SOV,

    C_t = (1 / 2 gamma N) d/dt Tr SOV(t),

so it can be extracted either directly or by differencing Tr SOV.  The
per-dimension normalization N = dim is the default; the unnormalized
variant (N = 1) is available through the `normalization` argument.

Short times decay as C_0 exp(-t / tau_D) with

    C_0 = -Tr([L, A]^2) / N,
    1 / tau_D = 2 gamma Tr([L, [L, A]]^2) / (C_0 N),

and chaotic growth C_t ~ eps exp(lambda_Q t) is fitted on a window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .spin import HermitianOperator, as_matrix
from .superop import LindbladSpec, PropagationConfig, propagate_series

PER_DIM = "per_dim"
UNNORMALIZED = "unnormalized"
OTOC_FLOOR = -1e-10


@dataclass(frozen=True)
class OTOCSeries:
    """C_t samples on a time grid with the normalization that produced them."""

    times: np.ndarray
    values: np.ndarray
    normalization: str


@dataclass(frozen=True)
class DissipationAnalysis:
    """Initial value and decay time of the short-time OTOC model."""

    C0: float
    tau_D: float


@dataclass(frozen=True)
class OTOCGrowthFit:
    """Exponential fit C_t ~ epsilon exp(lambda_Q t) on a window."""

    lambda_q: float
    epsilon: float
    window: tuple
    residual: float
    n_points: int


def _norm_divisor(normalization: str, dim: int) -> float:
    if normalization == PER_DIM:
        return float(dim)
    if normalization == UNNORMALIZED:
        return 1.0
    raise ValueError(f"unknown normalization {normalization!r}")


def dissipative_otoc(spec: LindbladSpec, A, times,
                     normalization: str = PER_DIM,
                     config: PropagationConfig | None = None) -> OTOCSeries:
    """C_t = -Tr([L, <A_t>]^2)/N over a time grid.

    The commutator of Hermitian matrices is anti-Hermitian, so each value
    is real and non-negative up to roundoff; values below -1e-10 raise.
    """
    div = _norm_divisor(normalization, spec.dim)
    x_series = propagate_series(spec, A, times, config)
    values = np.empty(x_series.shape[0])
    for j in range(x_series.shape[0]):
        comm = spec.L @ x_series[j] - x_series[j] @ spec.L
        c = -np.trace(comm @ comm) / div
        if abs(c.imag) > 1e-10 * max(1.0, abs(c.real)):
            raise NumericalError(f"OTOC value not real: {c}")
        if c.real < OTOC_FLOOR * max(1.0, abs(c.real)):
            raise NumericalError(f"OTOC negative beyond tolerance: {c.real:.3e}")
        values[j] = c.real
    return OTOCSeries(times=np.asarray(times, dtype=float), values=values,
                      normalization=normalization)


def otoc_from_sov(times, sov_traces, gamma: float, dim: int,
                  normalization: str = PER_DIM) -> OTOCSeries:
    """C_t from differencing Tr SOV(t) on a uniform grid.

    Uses second-order central differences in the interior and one-sided
    second-order stencils at the endpoints.  Requires gamma > 0.
    """
    if gamma <= 0:
        raise ValueError("the SOV route needs gamma > 0")
    times = np.asarray(times, dtype=float)
    traces = np.asarray(sov_traces, dtype=float)
    if times.size != traces.size or times.size < 3:
        raise ValueError("need matching times/traces with at least 3 points")
    steps = np.diff(times)
    if np.max(np.abs(steps - steps[0])) > 1e-9 * max(abs(steps[0]), 1e-300):
        raise ValueError("the differencing grid must be uniform")
    div = _norm_divisor(normalization, dim)
    deriv = np.gradient(traces, times[1] - times[0], edge_order=2)
    return OTOCSeries(times=times, values=deriv / (2.0 * gamma * div),
                      normalization=normalization)


def dissipation_time(A, L, gamma: float, dim: int | None = None,
                     normalization: str = PER_DIM) -> DissipationAnalysis:
    """Short-time decay constants C0 and tau_D of the OTOC.

    tau_D is infinite when the nested commutator [L, [L, A]] vanishes;
    if A itself commutes with L the OTOC is identically zero and
    (C0=0, tau_D=inf) is returned.
    """
    a = as_matrix(HermitianOperator(as_matrix(A)))
    l_op = as_matrix(HermitianOperator(as_matrix(L)))
    if dim is None:
        dim = a.shape[0]
    div = _norm_divisor(normalization, dim)
    comm = l_op @ a - a @ l_op
    c0 = float(np.real(-np.trace(comm @ comm))) / div
    nested = l_op @ comm - comm @ l_op
    num = float(np.real(np.trace(nested @ nested)))
    if c0 <= 0.0 or num <= 0.0 or gamma == 0.0:
        return DissipationAnalysis(C0=max(c0, 0.0), tau_D=math.inf)
    rate = 2.0 * gamma * num / (c0 * div)
    return DissipationAnalysis(C0=c0, tau_D=1.0 / rate)


def commuting_otoc_closed_form(A, H0, L, gamma: float, times,
                               normalization: str = PER_DIM) -> OTOCSeries:
    """Exact C_t when [H0, L] = 0.

    In the eigenbasis of L the propagated matrix elements only pick up
    phases and the dephasing factor exp(-gamma (l_m - l_n)^2 t), so

        C_t = sum_{m,n} (l_m - l_n)^2 exp(-2 gamma (l_m - l_n)^2 t) |A_mn|^2 / N.
    """
    a = as_matrix(HermitianOperator(as_matrix(A)))
    h0 = as_matrix(HermitianOperator(as_matrix(H0)))
    l_op = as_matrix(HermitianOperator(as_matrix(L)))
    comm = h0 @ l_op - l_op @ h0
    scale = max(1.0, float(np.max(np.abs(h0)) * np.max(np.abs(l_op))))
    if float(np.max(np.abs(comm))) > 1e-10 * scale:
        raise ValueError("closed form requires [H0, L] = 0")
    div = _norm_divisor(normalization, a.shape[0])
    l_vals, v = np.linalg.eigh(l_op)
    a_eig = v.conj().T @ a @ v
    dl2 = (l_vals[:, None] - l_vals[None, :]) ** 2
    weights = dl2 * np.abs(a_eig) ** 2
    times = np.asarray(times, dtype=float)
    values = np.array([np.sum(weights * np.exp(-2.0 * gamma * dl2 * t)) / div
                       for t in times])
    return OTOCSeries(times=times, values=values, normalization=normalization)


def lyapunov_from_otoc(series: OTOCSeries, window) -> OTOCGrowthFit:
    """Fit ln C_t = ln eps + lambda_Q t on a window (C_t > 0 required there)."""
    t0, t1 = window
    if not t0 < t1:
        raise ValueError("window must satisfy t0 < t1")
    mask = (series.times >= t0) & (series.times <= t1)
    n_pts = int(np.count_nonzero(mask))
    if n_pts < 2:
        raise ValueError(f"fit window holds {n_pts} points; need at least 2")
    c = series.values[mask]
    if np.any(c <= 0):
        raise NumericalError("OTOC must be positive throughout the fit window")
    t = series.times[mask]
    logc = np.log(c)
    slope, intercept = np.polyfit(t, logc, 1)
    resid = float(np.sqrt(np.mean((logc - (slope * t + intercept)) ** 2)))
    return OTOCGrowthFit(lambda_q=float(slope), epsilon=float(np.exp(intercept)),
                         window=(float(t0), float(t1)), residual=resid,
                         n_points=n_pts)
