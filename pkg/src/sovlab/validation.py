"""Self-contained invariant suite behind ``sovlab validate``.

Each check exercises one structural guarantee of the library at small
dimension so the whole suite stays fast enough to run on every checkout.
Checks return a :class:`CheckResult`; the runner collects them into a
report and the CLI turns any failure into a nonzero exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import (
    SDEConfig,
    lyapunov_benettin,
    lyapunov_van_kampen,
    phase_diagram,
    sde_step_order1,
    van_kampen_matrix,
)
from .otoc import commuting_otoc_closed_form, dissipative_otoc, otoc_from_sov
from .sov import (
    exact_sov,
    sov_matrices,
    sov_rhs_residual,
    swap_product_check,
    uncertainty_check,
)
from .spin import SpinSpec, lmg_hamiltonian, spin_operators
from .superop import LindbladSpec, PropagationConfig, propagate
from .trajectories import EnsembleSpec, empirical_sov, empirical_sov_stderr, ensemble_moments


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one named invariant check."""

    name: str
    passed: bool
    detail: str


def _rand_herm(rng: np.random.Generator, dim: int) -> np.ndarray:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (m + m.conj().T)
    return h / np.linalg.norm(h, 2)


def check_spin_algebra() -> CheckResult:
    spec = SpinSpec(S=3)
    sx, sy, sz = [np.asarray(o) for o in spin_operators(spec)]
    comm = sx @ sy - sy @ sx - 1j * sz
    casimir = sx @ sx + sy @ sy + sz @ sz - 3 * 4 * np.eye(7)
    worst = max(np.abs(comm).max(), np.abs(casimir).max(),
                np.abs(sx - sx.conj().T).max())
    return CheckResult("spin-algebra", worst < 1e-12,
                       f"commutator/Casimir/hermiticity defect {worst:.2e}")


def check_adjoint_unital() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(5):
        spec = LindbladSpec(_rand_herm(rng, 4), _rand_herm(rng, 4), 0.7)
        ident = propagate(spec, np.eye(4), 0.9)
        worst = max(worst, np.abs(np.asarray(ident) - np.eye(4)).max())
    return CheckResult("adjoint-unital", worst < 1e-10,
                       f"max |exp(Ldag t)[1] - 1| = {worst:.2e}")


def check_propagation_oracle() -> CheckResult:
    rng = np.random.default_rng(23)
    ode = PropagationConfig(method="ode", ode_dt=1e-3)
    worst = 0.0
    for _ in range(5):
        spec = LindbladSpec(_rand_herm(rng, 3), _rand_herm(rng, 3), 0.5)
        a = _rand_herm(rng, 3)
        for t in (0.1, 1.0):
            d = np.abs(np.asarray(propagate(spec, a, t))
                       - np.asarray(propagate(spec, a, t, config=ode))).max()
            worst = max(worst, d)
    return CheckResult("propagation-oracle", worst < 1e-7,
                       f"spectral vs ODE max-norm {worst:.2e}")


def check_sov_positivity() -> CheckResult:
    spin = SpinSpec(S=3)
    sx, sy, sz = [np.asarray(o) for o in spin_operators(spin)]
    a = (sx + sy + sz) / math.sqrt(3)
    worst = np.inf
    for omega in (0.7, 1.6):
        h = np.asarray(lmg_hamiltonian(spin, Omega=omega))
        for gamma in (0.5, 2.0):
            spec = LindbladSpec(h, h, gamma)
            for t in (0.05, 0.4, 2.0):
                lam = np.linalg.eigvalsh(np.asarray(exact_sov(spec, a, t)))
                worst = min(worst, lam.min())
    return CheckResult("sov-positivity", worst >= -1e-9,
                       f"min SOV eigenvalue {worst:.2e}")


def check_sov_rhs_residual() -> CheckResult:
    rng = np.random.default_rng(37)
    worst = 0.0
    for _ in range(3):
        spec = LindbladSpec(_rand_herm(rng, 3), _rand_herm(rng, 3), 0.6)
        a = _rand_herm(rng, 3)
        worst = max(worst, sov_rhs_residual(spec, a, 0.5))
    return CheckResult("sov-evolution-residual", worst <= 1e-6,
                       f"max finite-difference residual {worst:.2e}")


def check_otoc_identity() -> CheckResult:
    rng = np.random.default_rng(41)
    spec = LindbladSpec(_rand_herm(rng, 4), _rand_herm(rng, 4), 0.8)
    a = _rand_herm(rng, 4)
    # dense grid: the trace-difference route is second order in the spacing
    times = np.linspace(0.05, 1.0, 4000)
    direct = np.asarray(dissipative_otoc(spec, a, times).values)
    traces = np.einsum("tii->t", sov_matrices(spec, a, times)).real
    routed = np.asarray(otoc_from_sov(times, traces, spec.gamma, 4).values)
    mask = direct > 1e-10
    rel = np.abs(routed[mask] - direct[mask]) / direct[mask]
    return CheckResult("otoc-sov-identity", rel.max() < 1e-6,
                       f"max relative gap {rel.max():.2e}")


def check_commuting_closed_form() -> CheckResult:
    rng = np.random.default_rng(53)
    d = 4
    m = rng.normal(size=(d, d))
    v = np.linalg.qr(m)[0]
    h0 = v @ np.diag(rng.uniform(-1, 1, d)) @ v.T
    lj = v @ np.diag(rng.uniform(-1, 1, d)) @ v.T
    a = _rand_herm(rng, d)
    gamma = 1.3
    times = np.linspace(0.0, 2.0, 21)
    closed = np.asarray(commuting_otoc_closed_form(a, h0, lj, gamma, times).values)
    general = np.asarray(dissipative_otoc(LindbladSpec(h0, lj, gamma), a, times).values)
    worst = np.abs(closed - general).max()
    return CheckResult("commuting-closed-form", worst < 1e-9,
                       f"closed form vs propagation {worst:.2e}")


def check_two_level_benchmark() -> CheckResult:
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sz = np.array([[1.0, 0.0], [0.0, -1.0]])
    worst = 0.0
    for gamma in (0.3, 1.0):
        times = np.linspace(0.0, 1.0, 11)
        got = np.asarray(dissipative_otoc(LindbladSpec(0.5 * sz, sz, gamma), sx, times).values)
        worst = max(worst, np.abs(got - 4.0 * np.exp(-8.0 * gamma * times)).max())
    return CheckResult("two-level-benchmark", worst < 1e-10,
                       f"|C_t - 4 exp(-8 gamma t)| = {worst:.2e}")


def check_uncertainty_chain() -> CheckResult:
    rng = np.random.default_rng(67)
    worst = -np.inf
    for _ in range(20):
        spec = LindbladSpec(_rand_herm(rng, 3), _rand_herm(rng, 3), 0.5)
        a, b = _rand_herm(rng, 3), _rand_herm(rng, 3)
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        rho = np.outer(psi, psi.conj())
        rho /= np.trace(rho).real
        rep = uncertainty_check(spec, a, b, rho, 0.4)
        worst = max(worst, rep.mid - rep.lhs, rep.rhs - rep.mid)
    return CheckResult("uncertainty-chain", worst <= 1e-9,
                       f"max ordering violation {worst:.2e}")


def check_swap_identity() -> CheckResult:
    rng = np.random.default_rng(71)
    worst = 0.0
    for dim in (2, 3, 5):
        a, b = _rand_herm(rng, dim), _rand_herm(rng, dim)
        worst = max(worst, swap_product_check(a, b)[1])
    return CheckResult("swap-identity", worst <= 1e-12,
                       f"max residual {worst:.2e}")


def check_monte_carlo() -> CheckResult:
    spin = SpinSpec(S=2)
    sx, sy, sz = [np.asarray(o) for o in spin_operators(spin)]
    h = np.asarray(lmg_hamiltonian(spin, Omega=1.0))
    a = (sx + sy + sz) / math.sqrt(3)
    spec = LindbladSpec(h, h, 2.0)
    times = np.array([0.1, 0.3])
    mom = ensemble_moments(a, spec, EnsembleSpec(M=400, base_seed=5, dt=1e-3, t_max=0.3), times)
    emp = empirical_sov(mom)
    err = empirical_sov_stderr(mom)
    exact = np.stack([np.asarray(exact_sov(spec, a, t)) for t in times])
    dev = (np.abs(emp - exact) / err).max()
    return CheckResult("monte-carlo-consistency", dev < 6.0,
                       f"max entrywise deviation {dev:.2f} stderr")


def check_benettin_benchmark() -> CheckResult:
    est = lyapunov_benettin(1.0, 0.0, config=SDEConfig(dt=1e-3, n_steps=20000, seed=3),
                            realizations=40)
    return CheckResult("benettin-benchmark", abs(est.value - 1.0) <= 0.05,
                       f"lambda(Omega=1, gamma=0) = {est.value:.4f}")


def check_van_kampen_closed_form() -> CheckResult:
    worst = 0.0
    for omega in (0.5, 1.0, 1.7):
        s_sq = 2 * omega - omega * omega
        for gamma in (0.0, 0.4, 1.2):
            got = lyapunov_van_kampen(omega, gamma).value
            worst = max(worst, abs(got - (math.sqrt(s_sq) - gamma * s_sq)))
    for omega in (2.5, 3.0):
        # above the well merger the drift matrix only rotates; the noise
        # correction gamma |2 Omega - Omega^2| sets the growth
        for gamma in (0.4, 1.2):
            got = lyapunov_van_kampen(omega, gamma).value
            want = np.linalg.eigvals(van_kampen_matrix(omega, gamma)).real.max()
            worst = max(worst, abs(got - want),
                        abs(got - gamma * (omega * omega - 2 * omega)))
    return CheckResult("van-kampen-closed-form", worst < 1e-12,
                       f"matrix eigenvalue vs formula {worst:.2e}")


def check_sde_strong_order() -> CheckResult:
    # GBM dX = mu X dt + sigma X dW has the exact solution
    # X_T = X0 exp((mu - sigma^2/2) T + sigma W_T).
    mu, sigma, x0, t_end = 1.0, 0.5, 1.0, 0.5
    drift = lambda x: mu * x
    diff = lambda x: sigma * x
    rng = np.random.default_rng(29)
    dts = (1e-2, 1e-3)
    n_fine = int(round(t_end / dts[-1]))
    errors = []
    dw_fine = rng.normal(0.0, math.sqrt(dts[-1]), size=(60, n_fine))
    for dt in dts:
        stride = int(round(dt / dts[-1]))
        dw = dw_fine.reshape(60, n_fine // stride, stride).sum(axis=2)
        x = np.full(60, x0)
        for k in range(dw.shape[1]):
            x = np.array([float(sde_step_order1(drift, diff, xi, dt, w))
                          for xi, w in zip(x, dw[:, k])])
        exact = x0 * np.exp((mu - 0.5 * sigma ** 2) * t_end
                            + sigma * dw_fine.sum(axis=1))
        errors.append(np.mean(np.abs(x - exact)))
    slope = (math.log(errors[0]) - math.log(errors[1])) / (math.log(dts[0]) - math.log(dts[1]))
    return CheckResult("sde-strong-order", 0.7 < slope < 1.3,
                       f"two-point strong-error slope {slope:.2f}")


def check_determinism() -> CheckResult:
    omegas = np.array([0.8, 1.2])
    gammas = np.array([0.0, 0.5])
    cfg = SDEConfig(dt=1e-3, n_steps=2000, seed=17)
    one = phase_diagram(omegas, gammas, config=cfg, realizations=8, workers=1)
    two = phase_diagram(omegas, gammas, config=cfg, realizations=8, workers=2)
    same = (np.array_equal(one.values, two.values)
            and np.array_equal(one.stderrs, two.stderrs)
            and np.array_equal(one.n_blowups, two.n_blowups))
    return CheckResult("worker-determinism", same,
                       "bit-identical grids for workers {1, 2}" if same
                       else "grids differ between worker counts")


ALL_CHECKS = (
    check_spin_algebra,
    check_adjoint_unital,
    check_propagation_oracle,
    check_sov_positivity,
    check_sov_rhs_residual,
    check_otoc_identity,
    check_commuting_closed_form,
    check_two_level_benchmark,
    check_uncertainty_chain,
    check_swap_identity,
    check_monte_carlo,
    check_benettin_benchmark,
    check_van_kampen_closed_form,
    check_sde_strong_order,
    check_determinism,
)


def run_all() -> list[CheckResult]:
    """Run every registered check and return the results in order."""
    return [check() for check in ALL_CHECKS]
