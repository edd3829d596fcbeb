"""Classical limit of the noisy LMG model and Lyapunov exponent routes.

Phase-space chart (Q, P) with Hamiltonian

    H = (Omega/2) P^2 + (Omega/2 - 1) Q^2 + (Q^2 P^2 + Q^4) / 4

(an additive constant is dropped).  The noisy flow multiplies the whole
vector field, dX = f(X) dt + sqrt(2 gamma) f(X) dW, integrated in the
Ito sense with the explicit order-1.0 strong scheme of
:mod:`sovlab._kernels`.

Three exponent routes:

* lyapunov_van_kampen: small-noise closed form
  lambda = sqrt(2 Omega - Omega^2) - gamma (2 Omega - Omega^2) on
  0 < Omega <= 2; outside that range only the generic matrix result
  (max real eigenvalue of A_d - gamma A_d^2) is reported.
* lyapunov_benettin: twin trajectories sharing the noise, separation
  renormalized at fixed intervals.
* lyapunov_from_classical_sov: growth rate of d_t Var(Q_t) across an
  ensemble, Var ~ eps * exp(2 lambda t).
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError
from .trajectories import trajectory_seed

DEFAULT_X0 = (1e-3, 0.0)
DEFAULT_DELTA0 = 1e-8
DEFAULT_RENORM_INTERVAL = 0.5
DEFAULT_DISCARD_INTERVALS = 2  # alignment transient dropped from the average
DEFAULT_EPS0 = 1e-3
DEFAULT_FIT_WINDOW = (2.0, 8.0)
_QVAR_STRIDE_TIME = 0.05  # ensemble-variance sampling interval
_CHUNK = 256  # realizations per kernel invocation; fixed for determinism


@dataclass(frozen=True)
class PhaseState:
    """Point of the classical chart.

    The coherent-state parameter zeta = (Q - iP) / sqrt(4 - Q^2 - P^2)
    exists only inside Q^2 + P^2 < 4; leaving that disk is a chart-exit
    event for the quantum-classical correspondence (the flow itself is
    defined on the whole plane).
    """

    Q: float
    P: float

    @property
    def in_chart(self) -> bool:
        return self.Q ** 2 + self.P ** 2 < 4.0

    @property
    def zeta(self) -> complex:
        if not self.in_chart:
            raise NumericalError(
                f"chart exit: Q^2 + P^2 = {self.Q ** 2 + self.P ** 2:.6g} >= 4"
            )
        return (self.Q - 1j * self.P) / math.sqrt(4.0 - self.Q ** 2 - self.P ** 2)


def phase_from_zeta(zeta: complex) -> PhaseState:
    """Inverse chart map: Q = 2 Re zeta / sqrt(1+|zeta|^2), P = -2 Im zeta / ..."""
    c = 2.0 / math.sqrt(1.0 + abs(zeta) ** 2)
    return PhaseState(Q=c * zeta.real, P=-c * zeta.imag)


@dataclass(frozen=True)
class SDEConfig:
    """Integration grid and base seed for the stochastic flow."""

    dt: float = 1e-3
    n_steps: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.n_steps < 1:
            raise ValueError("need dt > 0 and n_steps >= 1")

    @property
    def t_max(self) -> float:
        return self.dt * self.n_steps


@dataclass(frozen=True)
class LyapunovEstimate:
    """A Lyapunov exponent with provenance.

    n_blowups counts realizations that left |Q|,|P| <= 1e6 before the end;
    they contribute the data gathered up to termination.  reliable is
    cleared when more than 10% of realizations blew up or when fewer than
    two usable realizations remain.  note flags inapplicable routes
    (e.g. the ensemble-variance route at gamma = 0).
    """

    value: float
    stderr: float
    method: str
    realizations: int
    n_blowups: int = 0
    reliable: bool = True
    note: str = ""


def classical_hamiltonian(Omega: float, state) -> float:
    q, p = _as_qp(state)
    return float((Omega / 2.0) * p * p + (Omega / 2.0 - 1.0) * q * q
                 + 0.25 * (q * q * p * p + q ** 4))


def hamilton_rhs(Omega: float, state) -> np.ndarray:
    """Hamiltonian vector field (dQ/dt, dP/dt)."""
    q, p = _as_qp(state)
    fq = Omega * p + 0.5 * q * q * p
    fp = -(Omega - 2.0) * q - 0.5 * q * p * p - q ** 3
    return np.array([fq, fp])


def _as_qp(state):
    if isinstance(state, PhaseState):
        return state.Q, state.P
    q, p = state
    return float(q), float(p)


def sde_step_order1(drift, diffusion, y, dt: float, dw: float) -> np.ndarray:
    """One explicit order-1.0 strong step for a single Wiener channel.

    drift and diffusion map a state vector to a vector; dw is the scalar
    Wiener increment.  The derivative-free Milstein correction uses the
    supporting value Y + a dt + b sqrt(dt).
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(drift(y), dtype=float)
    b = np.asarray(diffusion(y), dtype=float)
    rdt = np.sqrt(dt)
    support = y + a * dt + b * rdt
    b_sup = np.asarray(diffusion(support), dtype=float)
    return y + a * dt + b * dw + (b_sup - b) * (dw * dw - dt) / (2.0 * rdt)


def hamiltonian_flow(Omega: float, x0, t_max: float, dt: float = 1e-3):
    """Deterministic flow by fixed-step RK4; the gamma -> 0 reference.

    Returns (times, states) with states of shape (n+1, 2).
    """
    q, p = _as_qp(x0)
    n = max(1, int(round(t_max / dt)))
    h = t_max / n
    out = np.empty((n + 1, 2))
    out[0] = (q, p)
    y = np.array([q, p])
    for i in range(n):
        k1 = hamilton_rhs(Omega, y)
        k2 = hamilton_rhs(Omega, y + 0.5 * h * k1)
        k3 = hamilton_rhs(Omega, y + 0.5 * h * k2)
        k4 = hamilton_rhs(Omega, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return np.linspace(0.0, t_max, n + 1), out


def van_kampen_matrix(Omega: float, gamma: float) -> np.ndarray:
    """A_d - gamma A_d^2 for the linearized quadratic moments (Q^2, P^2, QP)."""
    a_d = np.array([
        [0.0, 0.0, Omega],
        [0.0, 0.0, -(Omega - 2.0)],
        [-(Omega - 2.0) / 2.0, Omega / 2.0, 0.0],
    ])
    return a_d - gamma * (a_d @ a_d)


def lyapunov_van_kampen(Omega: float, gamma: float) -> LyapunovEstimate:
    """Small-noise prediction for the maximal Lyapunov exponent.

    On 0 < Omega <= 2 the closed form sqrt(2 Omega - Omega^2)
    - gamma (2 Omega - Omega^2) is returned; elsewhere the maximal real
    part of the eigenvalues of A_d - gamma A_d^2.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if 0.0 < Omega <= 2.0:
        s_sq = 2.0 * Omega - Omega * Omega
        value = math.sqrt(s_sq) - gamma * s_sq
    else:
        eigs = np.linalg.eigvals(van_kampen_matrix(Omega, gamma))
        value = float(np.max(eigs.real))
    return LyapunovEstimate(value=float(value), stderr=0.0,
                            method="van-kampen", realizations=0)


def _noise_matrix(base_seed: int, first: int, count: int, dt: float,
                  n_steps: int) -> np.ndarray:
    out = np.empty((count, n_steps))
    for r in range(count):
        rng = np.random.default_rng(trajectory_seed(base_seed, first + r))
        out[r] = rng.normal(0.0, np.sqrt(dt), n_steps)
    return out


def lyapunov_benettin(Omega: float, gamma: float, x0=DEFAULT_X0,
                      config: SDEConfig = SDEConfig(),
                      delta0: float = DEFAULT_DELTA0,
                      renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                      realizations: int = 100,
                      discard_intervals: int = DEFAULT_DISCARD_INTERVALS
                      ) -> LyapunovEstimate:
    """Benettin twin-trajectory exponent at the unstable fixed point.

    The reference trajectory is the fixed-point solution at the origin,
    which solves the noisy flow exactly for every noise path because the
    vector field vanishes there.  The companion starts at x0, near but
    not at the fixed point, and integrates the same noise path; its
    separation from the reference is renormalized to delta0 every
    renorm_interval time units and the per-interval log stretch factors
    accumulate into a finite-time exponent.  Renormalization keeps the
    companion inside the linear neighbourhood, so the estimate converges
    to the stability exponent of the origin under the multiplicative
    noise.  The first discard_intervals intervals only align the
    separation direction and are excluded from the average.  Blown-up
    realizations contribute the intervals they completed.
    """
    q0, p0 = _as_qp(x0)
    if q0 == 0.0 and p0 == 0.0:
        raise ValueError("x0 must not be the fixed point itself")
    renorm_every = max(1, int(round(renorm_interval / config.dt)))
    log_sums = []
    intervals = []
    blow_count = 0
    for first in range(0, realizations, _CHUNK):
        count = min(_CHUNK, realizations - first)
        dw = _noise_matrix(config.seed, first, count, config.dt, config.n_steps)
        ls, iv, bl = _kernels.benettin_batch(
            Omega, gamma, (0.0, 0.0), (q0, p0), delta0, config.dt,
            config.n_steps, renorm_every, dw, discard=discard_intervals)
        log_sums.append(ls)
        intervals.append(iv)
        blow_count += int(np.count_nonzero(bl))
    log_sums = np.concatenate(log_sums)
    intervals = np.concatenate(intervals)
    usable = intervals > 0
    n_usable = int(np.count_nonzero(usable))
    if n_usable == 0:
        return LyapunovEstimate(value=math.nan, stderr=math.nan,
                                method="benettin", realizations=realizations,
                                n_blowups=blow_count, reliable=False,
                                note="no realization completed an interval")
    span = intervals[usable] * renorm_every * config.dt
    lam = log_sums[usable] / span
    value = float(np.mean(lam))
    stderr = float(np.std(lam, ddof=1) / np.sqrt(n_usable)) if n_usable > 1 else math.nan
    reliable = blow_count <= 0.1 * realizations and n_usable >= 2
    return LyapunovEstimate(value=value, stderr=stderr, method="benettin",
                            realizations=realizations, n_blowups=blow_count,
                            reliable=bool(reliable))


def lyapunov_from_classical_sov(Omega: float, gamma: float,
                                eps0: float = DEFAULT_EPS0,
                                M: int = 1000,
                                config: SDEConfig = SDEConfig(),
                                fit_window=DEFAULT_FIT_WINDOW) -> LyapunovEstimate:
    """Exponent from the noise-ensemble variance of Q_t.

    The variance of Q_t across realizations started at (eps0, 0) grows as
    eps * exp(2 lambda t) while the dynamics stays near the saddle; the
    exponent is half the slope of ln d_t Var(Q_t) over the fit window.
    Inapplicable at gamma = 0, where the ensemble has zero spread.
    """
    if gamma == 0.0:
        return LyapunovEstimate(value=math.nan, stderr=math.nan,
                                method="sov-growth", realizations=M,
                                reliable=False,
                                note="inapplicable at gamma=0: no ensemble spread")
    if M < 2:
        raise ValueError("need at least 2 realizations")
    stride = max(1, int(round(_QVAR_STRIDE_TIME / config.dt)))
    n_samp = config.n_steps // stride + 1
    count_ok = np.zeros(n_samp)
    s1 = np.zeros(n_samp)
    s2 = np.zeros(n_samp)
    blow_count = 0
    for first in range(0, M, _CHUNK):
        count = min(_CHUNK, M - first)
        dw = _noise_matrix(config.seed, first, count, config.dt, config.n_steps)
        q_samp, bl = _kernels.qvar_batch(Omega, gamma, eps0, 0.0, config.dt,
                                         config.n_steps, stride, dw)
        blow_count += int(np.count_nonzero(bl))
        ok = np.isfinite(q_samp)
        count_ok += ok.sum(axis=0)
        s1 += np.where(ok, q_samp, 0.0).sum(axis=0)
        s2 += np.where(ok, q_samp * q_samp, 0.0).sum(axis=0)
    times = np.arange(n_samp) * stride * config.dt
    valid = count_ok >= 2
    var = np.full(n_samp, np.nan)
    var[valid] = (s2[valid] - s1[valid] ** 2 / count_ok[valid]) / (count_ok[valid] - 1.0)
    dvar = np.gradient(var, times, edge_order=2)
    t0, t1 = fit_window
    mask = (times >= t0) & (times <= t1) & np.isfinite(dvar) & (dvar > 0)
    if np.count_nonzero(mask) < 10:
        return LyapunovEstimate(value=math.nan, stderr=math.nan,
                                method="sov-growth", realizations=M,
                                n_blowups=blow_count, reliable=False,
                                note="fewer than 10 usable points in fit window")
    x = times[mask]
    y = np.log(dvar[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    n_pts = x.size
    se_slope = math.sqrt(np.sum(resid ** 2) / (n_pts - 2)
                         / np.sum((x - x.mean()) ** 2)) if n_pts > 2 else math.nan
    reliable = blow_count <= 0.1 * M
    return LyapunovEstimate(value=float(slope / 2.0), stderr=float(se_slope / 2.0),
                            method="sov-growth", realizations=M,
                            n_blowups=blow_count, reliable=bool(reliable))


@dataclass(frozen=True)
class PhaseDiagram:
    """Benettin exponents over an (Omega, gamma) grid."""

    omegas: np.ndarray
    gammas: np.ndarray
    values: np.ndarray      # shape (len(omegas), len(gammas))
    stderrs: np.ndarray
    n_blowups: np.ndarray
    reliable: np.ndarray


def _phase_cell(args):
    omega, gamma, x0, config, delta0, renorm_interval, realizations = args
    est = lyapunov_benettin(omega, gamma, x0, config, delta0,
                            renorm_interval, realizations)
    return est.value, est.stderr, est.n_blowups, est.reliable


def phase_diagram(omegas, gammas, config: SDEConfig = SDEConfig(),
                  realizations: int = 100, x0=DEFAULT_X0,
                  delta0: float = DEFAULT_DELTA0,
                  renorm_interval: float = DEFAULT_RENORM_INTERVAL,
                  workers: int = 1) -> PhaseDiagram:
    """Benettin exponent on a parameter grid.

    Every cell derives its noise from SeedSequence entropy
    (seed, i_omega, j_gamma), so results are independent of the worker
    count and of the grid traversal order.
    """
    omegas = np.asarray(omegas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    jobs = []
    for i, om in enumerate(omegas):
        for j, ga in enumerate(gammas):
            cell_seed = int(np.random.SeedSequence(
                entropy=[int(config.seed), i, j]).generate_state(1, np.uint64)[0])
            cell_cfg = SDEConfig(dt=config.dt, n_steps=config.n_steps,
                                 seed=cell_seed)
            jobs.append((float(om), float(ga), x0, cell_cfg, delta0,
                         renorm_interval, realizations))
    if workers > 1 and len(jobs) > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            results = pool.map(_phase_cell, jobs)
    else:
        results = [_phase_cell(job) for job in jobs]
    shape = (omegas.size, gammas.size)
    values = np.array([r[0] for r in results]).reshape(shape)
    stderrs = np.array([r[1] for r in results]).reshape(shape)
    blowups = np.array([r[2] for r in results], dtype=int).reshape(shape)
    reliable = np.array([r[3] for r in results], dtype=bool).reshape(shape)
    return PhaseDiagram(omegas=omegas, gammas=gammas, values=values,
                        stderrs=stderrs, n_blowups=blowups, reliable=reliable)
