"""Noise-path sampling and Monte Carlo Heisenberg trajectories."""

import math

import numpy as np
import pytest

from sovlab import (
    EnsembleSpec,
    LindbladSpec,
    NoisePath,
    SpinSpec,
    empirical_sov,
    empirical_sov_stderr,
    ensemble_moments,
    exact_sov,
    heisenberg_trajectory,
    lmg_hamiltonian,
    propagate,
    sample_noise_path,
    spin_operators,
    step_propagator,
    trajectory_seed,
)


def lmg_setup(S=2, Omega=1.0, gamma=2.0, jump="h"):
    spec = SpinSpec(S=S)
    sx, sy, sz = [np.asarray(o) for o in spin_operators(spec)]
    h = np.asarray(lmg_hamiltonian(spec, Omega=Omega))
    a = (sx + sy + sz) / math.sqrt(3)
    lj = h if jump == "h" else sx
    return LindbladSpec(h, lj, gamma), a


def test_noise_path_statistics_and_determinism():
    path = sample_noise_path(123, 1e-3, 50000)
    again = sample_noise_path(123, 1e-3, 50000)
    assert np.array_equal(path.increments, again.increments)
    assert path.increments.shape == (50000,)
    # dW ~ N(0, dt): moments within 5 sigma of their sampling error
    mean = path.increments.mean()
    var = path.increments.var()
    assert abs(mean) < 5 * math.sqrt(1e-3 / 50000)
    assert abs(var - 1e-3) < 5 * math.sqrt(2) * 1e-3 / math.sqrt(50000)
    other = sample_noise_path(124, 1e-3, 50000)
    assert not np.array_equal(path.increments, other.increments)


def test_trajectory_seed_is_stable_and_injective_in_practice():
    seeds = {trajectory_seed(7, i) for i in range(10000)}
    assert len(seeds) == 10000
    assert trajectory_seed(7, 42) == trajectory_seed(7, 42)
    assert trajectory_seed(8, 42) != trajectory_seed(7, 42)


def test_step_propagator_is_unitary():
    rng = np.random.default_rng(2)
    spec, _ = lmg_setup(S=1.5, jump="sx")
    u = np.eye(4, dtype=complex)
    for _ in range(5):
        u = step_propagator(u, spec, 1e-3, rng.normal(0, math.sqrt(1e-3)))
    assert np.abs(u @ u.conj().T - np.eye(4)).max() < 1e-12


def test_commuting_trajectory_is_exact_in_the_time_argument():
    # with L = H0 the noise only reparametrizes time:
    # A_t(path) = e^{+i H (t + sqrt(2 gamma) W_t)} A e^{-i H (...)}
    spec, a = lmg_setup(S=2, gamma=0.5)
    path = sample_noise_path(11, 1e-3, 400)
    ts = np.array([0.1, 0.25, 0.4])
    got = heisenberg_trajectory(a, spec, path, ts)
    w, v = np.linalg.eigh(spec.H0)
    for k, t in enumerate(ts):
        n = int(round(t / path.dt))
        tau = t + math.sqrt(2 * spec.gamma) * path.increments[:n].sum()
        u = v @ np.diag(np.exp(1j * w * tau)) @ v.conj().T
        want = u @ a @ u.conj().T
        assert np.abs(got[k] - want).max() < 1e-10


def test_noncommuting_trajectory_reduces_to_unitary_at_gamma_zero():
    spec, a = lmg_setup(S=1.5, gamma=0.0, jump="sx")
    path = sample_noise_path(13, 1e-3, 200)
    got = heisenberg_trajectory(a, spec, path, [0.2])
    want = np.asarray(propagate(spec, a, 0.2))
    assert np.abs(got[0] - want).max() < 1e-8


def test_trajectory_average_converges_to_lindblad():
    # noise-averaged Heisenberg evolution is the dephasing semigroup
    spec, a = lmg_setup(S=2, gamma=2.0)
    t = 0.2
    acc = np.zeros_like(a, dtype=complex)
    n_paths = 400
    for i in range(n_paths):
        path = sample_noise_path(trajectory_seed(50, i), 1e-3, 200)
        acc += heisenberg_trajectory(a, spec, path, [t])[0]
    mean = acc / n_paths
    want = np.asarray(propagate(spec, a, t))
    # statistical accuracy ~ 1/sqrt(M)
    assert np.abs(mean - want).max() < 6.0 / math.sqrt(n_paths)


def test_ensemble_moments_match_exact_sov():
    spec, a = lmg_setup(S=2, gamma=2.0)
    times = np.array([0.1, 0.3])
    mom = ensemble_moments(a, spec, EnsembleSpec(M=1500, base_seed=5,
                                                 dt=1e-3, t_max=0.3), times)
    assert mom.M == 1500
    emp = empirical_sov(mom)
    err = empirical_sov_stderr(mom)
    exact = np.stack([np.asarray(exact_sov(spec, a, t)) for t in times])
    assert (np.abs(emp - exact) / err).max() < 4.0


def test_ensemble_moments_are_deterministic_in_the_seed():
    spec, a = lmg_setup(S=1, gamma=1.0)
    ens = EnsembleSpec(M=64, base_seed=9, dt=1e-3, t_max=0.2)
    one = ensemble_moments(a, spec, ens, [0.1, 0.2])
    two = ensemble_moments(a, spec, ens, [0.1, 0.2])
    assert np.array_equal(one.mean, two.mean)
    assert np.array_equal(one.second, two.second)


def test_stderr_shrinks_with_ensemble_size():
    spec, a = lmg_setup(S=1, gamma=1.0)
    small = ensemble_moments(a, spec, EnsembleSpec(M=200, base_seed=3,
                                                   dt=1e-3, t_max=0.2), [0.2])
    large = ensemble_moments(a, spec, EnsembleSpec(M=1800, base_seed=4,
                                                   dt=1e-3, t_max=0.2), [0.2])
    ratio = small.stderr_mean.mean() / large.stderr_mean.mean()
    assert 2.0 < ratio < 4.5  # expect 3 = sqrt(1800/200)


def test_empirical_sov_is_nearly_hermitian_and_nonnegative_on_average():
    spec, a = lmg_setup(S=2, gamma=2.0)
    mom = ensemble_moments(a, spec, EnsembleSpec(M=800, base_seed=77,
                                                 dt=1e-3, t_max=0.25), [0.25])
    emp = empirical_sov(mom)[0]
    assert np.abs(emp - emp.conj().T).max() < 1e-10
    lam = np.linalg.eigvalsh(0.5 * (emp + emp.conj().T))
    # finite-M noise can push the spectrum slightly negative, not far
    assert lam.min() > -0.1


def test_noise_path_rejects_bad_grid():
    with pytest.raises(ValueError):
        sample_noise_path(1, -1e-3, 10)
    with pytest.raises(ValueError):
        sample_noise_path(1, 1e-3, -1)
    assert sample_noise_path(1, 1e-3, 0).increments.size == 0


def test_sample_times_must_lie_on_the_grid():
    spec, a = lmg_setup(S=1)
    path = sample_noise_path(1, 1e-3, 100)
    with pytest.raises(ValueError):
        heisenberg_trajectory(a, spec, path, [0.05001234])
    with pytest.raises(ValueError):
        heisenberg_trajectory(a, spec, path, [0.5])  # beyond t_max
