"""Single-realization stochastic Heisenberg dynamics and Monte Carlo ensembles.

One realization of the noise drives the unitary

    U_{t+dt} = exp(-i (H0 dt + sqrt(2 gamma) dW L)) U_t,

(Ito increments, dW ~ N(0, dt)) and observables evolve as
A_t = U_t^dag A U_t.  Averaging over realizations reproduces the adjoint
Lindbladian of :mod:`sovlab.superop`.

Reproducibility contract: trajectory k of an ensemble with base seed b
uses the PCG64 stream seeded by numpy's SeedSequence with entropy
(b, k).  SeedSequence hashing is documented and stable across numpy
versions, so ensembles are bit-reproducible for a given (b, M, dt),
independent of the worker count used to compute them.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .spin import as_matrix
from .superop import LindbladSpec

_BLOCK = 32  # trajectories per reduction block; fixed so results never
# depend on how many workers the blocks are farmed out to


@dataclass(frozen=True)
class NoisePath:
    """Wiener increments on a uniform grid, dW_k ~ N(0, dt)."""

    seed: int
    dt: float
    increments: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.increments.size


@dataclass(frozen=True)
class EnsembleSpec:
    """Monte Carlo ensemble: M trajectories on a grid of step dt up to t_max."""

    M: int
    base_seed: int
    dt: float
    t_max: float

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.dt <= 0 or self.t_max < 0:
            raise ValueError("need dt > 0 and t_max >= 0")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class MomentSeries:
    """First two noise moments of A_t on sample times, with standard errors.

    mean and second hold <A_t> and <A_t^2> estimates of shape (T, d, d);
    stderr_* hold the entrywise Monte Carlo standard errors (real).
    """

    times: np.ndarray
    mean: np.ndarray
    second: np.ndarray
    stderr_mean: np.ndarray
    stderr_second: np.ndarray
    M: int


def trajectory_seed(base_seed: int, index: int) -> int:
    """Stable 64-bit seed for trajectory `index` of ensemble `base_seed`."""
    ss = np.random.SeedSequence(entropy=[int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def sample_noise_path(seed: int, dt: float, n_steps: int) -> NoisePath:
    """Draw n_steps i.i.d. N(0, dt) increments from the PCG64 stream `seed`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    rng = np.random.default_rng(int(seed))
    inc = rng.normal(0.0, np.sqrt(dt), n_steps)
    inc.flags.writeable = False
    return NoisePath(seed=int(seed), dt=float(dt), increments=inc)


def step_propagator(u: np.ndarray, spec: LindbladSpec, dt: float, dw: float):
    """Left-multiply U by exp(-i (H0 dt + sqrt(2 gamma) dW L)).

    The generator is Hermitian, so the step is exactly unitary up to the
    roundoff of one eigendecomposition.
    """
    gen = spec.H0 * dt + np.sqrt(2.0 * spec.gamma) * dw * spec.L
    w, v = np.linalg.eigh(gen)
    step = (v * np.exp(-1j * w)) @ v.conj().T
    return step @ u


def _commuting(spec: LindbladSpec) -> bool:
    comm = spec.H0 @ spec.L - spec.L @ spec.H0
    scale = max(
        1.0,
        float(np.max(np.abs(spec.H0)) * np.max(np.abs(spec.L)))
        if spec.dim
        else 0.0,
    )
    return float(np.max(np.abs(comm))) <= 1e-12 * scale


def _simultaneous_eigh(h0: np.ndarray, l_op: np.ndarray):
    """Joint eigenbasis of commuting Hermitian H0 and L.

    Diagonalizes H0 and then rotates inside each degenerate cluster to
    diagonalize L there.  Returns (E, l, V) with H0 = V diag(E) V^dag and
    L = V diag(l) V^dag.
    """
    energies, v = np.linalg.eigh(h0)
    scale_e = max(1.0, float(np.max(np.abs(energies))))
    l_rot = v.conj().T @ l_op @ v
    d = h0.shape[0]
    start = 0
    for i in range(1, d + 1):
        if i == d or energies[i] - energies[start] > 1e-10 * scale_e:
            if i - start > 1:
                _, u = np.linalg.eigh(0.5 * (l_rot[start:i, start:i]
                                             + l_rot[start:i, start:i].conj().T))
                v[:, start:i] = v[:, start:i] @ u
            start = i
    l_rot = v.conj().T @ l_op @ v
    l_diag = np.real(np.diag(l_rot))
    off = l_rot - np.diag(np.diag(l_rot))
    scale_l = max(1.0, float(np.max(np.abs(l_op))))
    if float(np.max(np.abs(off))) > 1e-9 * scale_l:
        raise NumericalError("joint diagonalization failed; operators do not commute")
    return energies, l_diag, v


def _grid_indices(sample_times, dt: float, n_steps: int) -> np.ndarray:
    times = np.asarray(sample_times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("sample_times must be a non-empty 1-d sequence")
    idx = np.round(times / dt).astype(int)
    if np.max(np.abs(times - idx * dt)) > 1e-9 * max(dt, 1e-30):
        raise ValueError("sample_times must lie on the integration grid")
    if np.any(idx < 0) or np.any(idx > n_steps):
        raise ValueError("sample_times outside the simulated range")
    return idx


def heisenberg_trajectory(A, spec: LindbladSpec, path: NoisePath, sample_times):
    """A_t = U_t^dag A U_t for one noise realization.

    Returns an array of shape (len(sample_times), d, d).  When H0 and L
    commute the propagator is a pure phase in the joint eigenbasis and is
    accumulated exactly; otherwise the step propagators are multiplied up
    one by one.
    """
    a = np.asarray(as_matrix(A), dtype=complex)
    idx = _grid_indices(sample_times, path.dt, path.n_steps)
    if _commuting(spec):
        energies, l_diag, v = _simultaneous_eigh(spec.H0, spec.L)
        a_eig = v.conj().T @ a @ v
        s = np.sqrt(2.0 * spec.gamma)
        w_cum = np.concatenate(([0.0], np.cumsum(path.increments)))
        out = np.empty((idx.size, spec.dim, spec.dim), dtype=complex)
        for j, k in enumerate(idx):
            theta = energies * (k * path.dt) + s * w_cum[k] * l_diag
            phase = np.exp(1j * theta)
            out[j] = v @ (np.outer(phase, phase.conj()) * a_eig) @ v.conj().T
        return out
    u = np.eye(spec.dim, dtype=complex)
    out = np.empty((idx.size, spec.dim, spec.dim), dtype=complex)
    order = np.argsort(idx)
    pos = 0
    for j in order:
        k = idx[j]
        while pos < k:
            u = step_propagator(u, spec, path.dt, path.increments[pos])
            pos += 1
        out[j] = u.conj().T @ a @ u
    return out


def _moment_block_fast(args):
    (k0, k1, base_seed, dt, n_steps, idx, energies, l_diag, v, a_eig, a2_eig,
     s) = args
    d = energies.size
    t_n = idx.size
    sum_m = np.zeros((t_n, d, d), dtype=complex)
    sum_m2 = np.zeros((t_n, d, d), dtype=complex)
    sum_abs_m = np.zeros((t_n, d, d))
    sum_abs_m2 = np.zeros((t_n, d, d))
    vh = v.conj().T
    for k in range(k0, k1):
        path = sample_noise_path(trajectory_seed(base_seed, k), dt, n_steps)
        w_cum = np.concatenate(([0.0], np.cumsum(path.increments)))
        for j, step in enumerate(idx):
            theta = energies * (step * dt) + s * w_cum[step] * l_diag
            phase = np.exp(1j * theta)
            ph = np.outer(phase, phase.conj())
            a_t = v @ (ph * a_eig) @ vh
            a2_t = v @ (ph * a2_eig) @ vh
            sum_m[j] += a_t
            sum_m2[j] += a2_t
            sum_abs_m[j] += np.abs(a_t) ** 2
            sum_abs_m2[j] += np.abs(a2_t) ** 2
    return sum_m, sum_m2, sum_abs_m, sum_abs_m2


def _moment_block_general(args):
    k0, k1, base_seed, dt, n_steps, idx, h0, l_op, gamma, a = args
    spec = LindbladSpec(h0, l_op, gamma)
    a2 = a @ a
    d = a.shape[0]
    t_n = idx.size
    sum_m = np.zeros((t_n, d, d), dtype=complex)
    sum_m2 = np.zeros((t_n, d, d), dtype=complex)
    sum_abs_m = np.zeros((t_n, d, d))
    sum_abs_m2 = np.zeros((t_n, d, d))
    order = np.argsort(idx)
    for k in range(k0, k1):
        path = sample_noise_path(trajectory_seed(base_seed, k), dt, n_steps)
        u = np.eye(d, dtype=complex)
        pos = 0
        for j in order:
            step = idx[j]
            while pos < step:
                u = step_propagator(u, spec, dt, path.increments[pos])
                pos += 1
            a_t = u.conj().T @ a @ u
            a2_t = u.conj().T @ a2 @ u
            sum_m[j] += a_t
            sum_m2[j] += a2_t
            sum_abs_m[j] += np.abs(a_t) ** 2
            sum_abs_m2[j] += np.abs(a2_t) ** 2
    return sum_m, sum_m2, sum_abs_m, sum_abs_m2


def ensemble_moments(A, spec: LindbladSpec, ens: EnsembleSpec, sample_times,
                     workers: int = 1) -> MomentSeries:
    """Monte Carlo estimates of <A_t> and <A_t^2> with standard errors.

    Trajectories are processed in fixed blocks of 32 and the partial sums
    are reduced in block order, so the result is bit-identical for any
    worker count.
    """
    a = np.asarray(as_matrix(A), dtype=complex)
    idx = _grid_indices(sample_times, ens.dt, ens.n_steps)
    times = idx * ens.dt
    if _commuting(spec):
        energies, l_diag, v = _simultaneous_eigh(spec.H0, spec.L)
        a_eig = v.conj().T @ a @ v
        a2_eig = v.conj().T @ (a @ a) @ v
        s = np.sqrt(2.0 * spec.gamma)
        job_fn = _moment_block_fast
        common = (ens.base_seed, ens.dt, ens.n_steps, idx, energies, l_diag,
                  v, a_eig, a2_eig, s)
    else:
        job_fn = _moment_block_general
        common = (ens.base_seed, ens.dt, ens.n_steps, idx, spec.H0, spec.L,
                  spec.gamma, a)
    blocks = [(k0, min(k0 + _BLOCK, ens.M)) + common
              for k0 in range(0, ens.M, _BLOCK)]
    if workers > 1 and len(blocks) > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            partials = pool.map(job_fn, blocks)
    else:
        partials = [job_fn(b) for b in blocks]
    sum_m = sum(p[0] for p in partials)
    sum_m2 = sum(p[1] for p in partials)
    sum_abs_m = sum(p[2] for p in partials)
    sum_abs_m2 = sum(p[3] for p in partials)
    m = ens.M
    mean = sum_m / m
    second = sum_m2 / m
    if m > 1:
        var_m = np.maximum(sum_abs_m - np.abs(sum_m) ** 2 / m, 0.0) / (m - 1)
        var_m2 = np.maximum(sum_abs_m2 - np.abs(sum_m2) ** 2 / m, 0.0) / (m - 1)
        se_m = np.sqrt(var_m / m)
        se_m2 = np.sqrt(var_m2 / m)
    else:
        se_m = np.zeros_like(sum_abs_m)
        se_m2 = np.zeros_like(sum_abs_m2)
    return MomentSeries(times=times, mean=mean, second=second,
                        stderr_mean=se_m, stderr_second=se_m2, M=m)


def empirical_sov(moments: MomentSeries) -> np.ndarray:
    """Hermitized <A_t^2> - <A_t>^2 estimate, shape (T, d, d)."""
    out = np.empty_like(moments.second)
    for j in range(out.shape[0]):
        raw = moments.second[j] - moments.mean[j] @ moments.mean[j]
        out[j] = 0.5 * (raw + raw.conj().T)
    return out


def empirical_sov_stderr(moments: MomentSeries, floor: float = 1e-14):
    """Entrywise first-order standard-error bound for the empirical SOV.

    Propagates the mean's error through the square via the triangle
    inequality, so the bound is conservative.  A small floor keeps
    zero-variance entries (e.g. at t = 0) comparable.
    """
    out = np.empty_like(moments.stderr_second)
    for j in range(out.shape[0]):
        abs_mean = np.abs(moments.mean[j])
        prod_err = moments.stderr_mean[j] @ abs_mean + abs_mean @ moments.stderr_mean[j]
        out[j] = moments.stderr_second[j] + prod_err + floor
    return out
