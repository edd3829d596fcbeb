"""Dissipative OTOC: direct route, SOV route, closed forms, fits."""

import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from sovlab import (
    LindbladSpec,
    commuting_otoc_closed_form,
    dissipation_time,
    dissipative_otoc,
    lyapunov_from_otoc,
    otoc_from_sov,
    sov_matrices,
)
from sovlab.otoc import OTOCSeries

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def rand_herm(rng, dim):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (m + m.conj().T)
    return h / np.linalg.norm(h, 2)


def commuting_pair(rng, dim):
    v = ortho_group.rvs(dim, random_state=rng)
    h0 = v @ np.diag(rng.uniform(-1.5, 1.5, dim)) @ v.T
    lj = v @ np.diag(rng.uniform(-1.0, 1.0, dim)) @ v.T
    return h0, lj, v


def test_two_level_benchmark_per_dim():
    # dephasing of sx under L = sz: C_t = 4 exp(-8 gamma t)
    for gamma in (0.25, 1.0, 2.0):
        spec = LindbladSpec(0.5 * SZ, SZ, gamma)
        times = np.linspace(0.0, 1.5, 25)
        got = np.asarray(dissipative_otoc(spec, SX, times).values)
        assert np.abs(got - 4.0 * np.exp(-8.0 * gamma * times)).max() < 1e-10


def test_normalization_variants_differ_by_dim():
    rng = np.random.default_rng(3)
    spec = LindbladSpec(rand_herm(rng, 5), rand_herm(rng, 5), 0.7)
    a = rand_herm(rng, 5)
    times = np.linspace(0.1, 1.0, 5)
    per = np.asarray(dissipative_otoc(spec, a, times, "per_dim").values)
    raw = np.asarray(dissipative_otoc(spec, a, times, "unnormalized").values)
    assert np.abs(raw - 5.0 * per).max() < 1e-12
    with pytest.raises(ValueError):
        dissipative_otoc(spec, a, times, "bogus")


def test_otoc_is_nonnegative():
    rng = np.random.default_rng(5)
    for _ in range(6):
        spec = LindbladSpec(rand_herm(rng, 4), rand_herm(rng, 4),
                            rng.uniform(0.1, 2.0))
        a = rand_herm(rng, 4)
        vals = np.asarray(dissipative_otoc(
            spec, a, np.linspace(0.0, 3.0, 16)).values)
        assert vals.min() >= 0.0


def test_sov_route_matches_direct_route():
    rng = np.random.default_rng(7)
    spec = LindbladSpec(rand_herm(rng, 4), rand_herm(rng, 4), 0.8)
    a = rand_herm(rng, 4)
    times = np.arange(0.0, 1.0 + 1e-12, 2.5e-4)
    direct = np.asarray(dissipative_otoc(spec, a, times).values)
    traces = np.einsum("tii->t", sov_matrices(spec, a, times)).real
    routed = np.asarray(otoc_from_sov(times, traces, spec.gamma, 4).values)
    mask = direct > 1e-10
    rel = np.abs(routed[mask] - direct[mask]) / direct[mask]
    assert rel.max() < 1e-6


def test_sov_route_requires_positive_gamma():
    times = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        otoc_from_sov(times, np.ones_like(times), 0.0, 4)


def test_commuting_closed_form_matches_propagation():
    rng = np.random.default_rng(9)
    for dim in (3, 5):
        h0, lj, _ = commuting_pair(rng, dim)
        a = rand_herm(rng, dim)
        gamma = 1.1
        times = np.linspace(0.0, 2.0, 21)
        closed = np.asarray(commuting_otoc_closed_form(a, h0, lj, gamma, times).values)
        general = np.asarray(dissipative_otoc(
            LindbladSpec(h0, lj, gamma), a, times).values)
        assert np.abs(closed - general).max() < 1e-9


def test_commuting_closed_form_rejects_noncommuting_input():
    with pytest.raises(ValueError):
        commuting_otoc_closed_form(SX, SX, SZ, 1.0, [0.1])


def test_short_time_model_and_late_time_slope():
    # frozen draw with well-separated jump gaps keeps both OTOC regimes
    # numerically resolvable
    rng = np.random.default_rng(404)
    h0, lj, v = commuting_pair(rng, 5)
    m = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    a = 0.5 * (m + m.conj().T)
    gamma = 5.0
    ana = dissipation_time(a, lj, gamma, dim=5)
    assert ana.C0 > 0 and ana.tau_D > 0
    ts = np.linspace(1e-4, 0.05 * ana.tau_D, 30)
    exact = np.asarray(commuting_otoc_closed_form(a, h0, lj, gamma, ts).values)
    model = ana.C0 * np.exp(-ts / ana.tau_D)
    assert np.abs(model - exact).max() / exact.min() < 0.05

    # late window: slope -> -2 gamma min nonzero (l_m - l_n)^2 once the
    # smallest-gap mode dominates by its weight, not just its exponent
    l_diag = np.diag(v.T @ lj @ v)
    a_eig = v.T @ a @ v
    gaps = l_diag[:, None] - l_diag[None, :]
    iu = np.triu_indices(5, 1)
    d2, weight = (gaps ** 2)[iu], (np.abs(a_eig) ** 2 * gaps ** 2)[iu]
    order = np.argsort(d2)
    d2, weight = d2[order], weight[order]
    t_dom = max(math.log(500 * w / weight[0]) / (2 * gamma * (g - d2[0]))
                for g, w in zip(d2[1:], weight[1:]) if w > 0)
    tl = np.linspace(t_dom, 2 * t_dom, 50)
    cl = np.asarray(commuting_otoc_closed_form(a, h0, lj, gamma, tl).values)
    slope = np.polyfit(tl, np.log(cl), 1)[0]
    assert slope == pytest.approx(-2 * gamma * d2[0], rel=0.02)


def test_dissipation_time_against_trace_formulas():
    rng = np.random.default_rng(11)
    a, lj = rand_herm(rng, 4), rand_herm(rng, 4)
    gamma = 0.9
    ana = dissipation_time(a, lj, gamma, dim=4)
    comm = lj @ a - a @ lj
    c0 = -np.trace(comm @ comm).real / 4
    double = lj @ comm - comm @ lj
    rate = 2 * gamma * np.trace(double @ double).real / (c0 * 4)
    assert ana.C0 == pytest.approx(c0, rel=1e-12)
    assert 1.0 / ana.tau_D == pytest.approx(rate, rel=1e-12)


def test_dissipation_time_degenerate_cases():
    # [L, A] = 0 means no OTOC at all: C0 = 0 with infinite decay time
    ana = dissipation_time(SZ, SZ, 1.0, dim=2)
    assert ana.C0 == 0.0 and math.isinf(ana.tau_D)
    # gamma = 0 keeps C0 but never decays
    ana0 = dissipation_time(SX, SZ, 0.0, dim=2)
    assert ana0.C0 == pytest.approx(4.0) and math.isinf(ana0.tau_D)


def test_lyapunov_fit_recovers_synthetic_exponent():
    times = np.linspace(0.5, 4.0, 60)
    series = OTOCSeries(times=times, values=0.01 * np.exp(1.7 * times),
                        normalization="per_dim")
    fit = lyapunov_from_otoc(series, window=(1.0, 3.0))
    assert fit.lambda_q == pytest.approx(1.7, abs=1e-10)
    assert fit.epsilon == pytest.approx(0.01, rel=1e-9)
    assert fit.residual < 1e-12


def test_otoc_from_sov_endpoint_stencils():
    # quadratic trace data has an exact one-sided second-order derivative
    times = np.linspace(0.0, 1.0, 101)
    gamma, dim = 0.5, 3
    traces = 2.0 * times + 1.5 * times ** 2
    vals = np.asarray(otoc_from_sov(times, traces, gamma, dim).values)
    want = (2.0 + 3.0 * times) / (2 * gamma * dim)
    assert np.abs(vals - want).max() < 1e-9
