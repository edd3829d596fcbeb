"""Hot loops for the classical stochastic dynamics.

Every kernel exists twice: a scalar-loop version compiled with numba's
@njit, and a pure-numpy version vectorized across realizations.  The
numba path is the default; set SOVLAB_NUMBA=0 before import to force the
numpy fallback (the public functions dispatch on NUMBA_ENABLED).  Both
paths implement the identical explicit order-1.0 strong scheme

    Y' = Y + a dt + b dW + (b(Y + a dt + b sqrt(dt)) - b) (dW^2 - dt) / (2 sqrt(dt))

specialized to drift a = f and diffusion b = sqrt(2 gamma) f, where f is
the Hamiltonian vector field of

    H = (Omega/2) P^2 + (Omega/2 - 1) Q^2 + (Q^2 P^2 + Q^4) / 4.

Trajectories with |Q| or |P| beyond BLOWUP_LIMIT terminate early and are
reported as blown.  benchmarks/bench_kernels.py compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

BLOWUP_LIMIT = 1.0e6

_env = os.environ.get("SOVLAB_NUMBA", "1").strip().lower()
NUMBA_ENABLED = _env not in ("0", "false", "no", "off")
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# scalar cores (compiled when numba is enabled)
# ---------------------------------------------------------------------------

def _benettin_core(Omega, gamma, qr0, pr0, qc0, pc0, delta0, dt, n_steps,
                   renorm_every, discard, dw):
    s = np.sqrt(2.0 * gamma)
    rdt = np.sqrt(dt)
    q, p = qr0, pr0
    q2, p2 = qc0, pc0
    # separation at the start of the current interval; the first interval
    # starts from the release distance, later ones from delta0
    dq0 = q2 - q
    dp0 = p2 - p
    ell_prev = np.sqrt(dq0 * dq0 + dp0 * dp0)
    log_sum = 0.0
    intervals = 0
    renorms = 0
    blown = ell_prev <= 0.0
    for i in range(n_steps):
        if blown:
            break
        w = dw[i]
        corr = (w * w - dt) / (2.0 * rdt)

        fq = Omega * p + 0.5 * q * q * p
        fp = -(Omega - 2.0) * q - 0.5 * q * p * p - q * q * q
        uq = q + fq * dt + s * fq * rdt
        up = p + fp * dt + s * fp * rdt
        gq = Omega * up + 0.5 * uq * uq * up
        gp = -(Omega - 2.0) * uq - 0.5 * uq * up * up - uq * uq * uq
        q = q + fq * dt + s * fq * w + s * (gq - fq) * corr
        p = p + fp * dt + s * fp * w + s * (gp - fp) * corr

        fq = Omega * p2 + 0.5 * q2 * q2 * p2
        fp = -(Omega - 2.0) * q2 - 0.5 * q2 * p2 * p2 - q2 * q2 * q2
        uq = q2 + fq * dt + s * fq * rdt
        up = p2 + fp * dt + s * fp * rdt
        gq = Omega * up + 0.5 * uq * uq * up
        gp = -(Omega - 2.0) * uq - 0.5 * uq * up * up - uq * uq * uq
        q2 = q2 + fq * dt + s * fq * w + s * (gq - fq) * corr
        p2 = p2 + fp * dt + s * fp * w + s * (gp - fp) * corr

        if (not np.isfinite(q)) or (not np.isfinite(p)) or \
           (not np.isfinite(q2)) or (not np.isfinite(p2)) or \
           abs(q) > BLOWUP_LIMIT or abs(p) > BLOWUP_LIMIT or \
           abs(q2) > BLOWUP_LIMIT or abs(p2) > BLOWUP_LIMIT:
            blown = True
            break
        if (i + 1) % renorm_every == 0:
            dq = q2 - q
            dp = p2 - p
            ell = np.sqrt(dq * dq + dp * dp)
            if ell <= 0.0 or not np.isfinite(ell):
                blown = True
                break
            renorms += 1
            if renorms > discard:
                log_sum += np.log(ell / ell_prev)
                intervals += 1
            scale = delta0 / ell
            q2 = q + dq * scale
            p2 = p + dp * scale
            ell_prev = delta0
    return log_sum, intervals, blown


def _qvar_core(Omega, gamma, q0, p0, dt, n_steps, stride, dw, q_out):
    s = np.sqrt(2.0 * gamma)
    rdt = np.sqrt(dt)
    q, p = q0, p0
    q_out[0] = q
    k = 1
    blown = False
    for i in range(n_steps):
        w = dw[i]
        corr = (w * w - dt) / (2.0 * rdt)
        fq = Omega * p + 0.5 * q * q * p
        fp = -(Omega - 2.0) * q - 0.5 * q * p * p - q * q * q
        uq = q + fq * dt + s * fq * rdt
        up = p + fp * dt + s * fp * rdt
        gq = Omega * up + 0.5 * uq * uq * up
        gp = -(Omega - 2.0) * uq - 0.5 * uq * up * up - uq * uq * uq
        q = q + fq * dt + s * fq * w + s * (gq - fq) * corr
        p = p + fp * dt + s * fp * w + s * (gp - fp) * corr
        if (not np.isfinite(q)) or (not np.isfinite(p)) or \
           abs(q) > BLOWUP_LIMIT or abs(p) > BLOWUP_LIMIT:
            blown = True
            break
        if (i + 1) % stride == 0:
            q_out[k] = q
            k += 1
    if blown:
        while k < q_out.size:
            q_out[k] = np.nan
            k += 1
    return blown


if NUMBA_ENABLED:
    _benettin_core = njit(cache=True)(_benettin_core)
    _qvar_core = njit(cache=True)(_qvar_core)


# ---------------------------------------------------------------------------
# numpy fallback, vectorized across realizations
# ---------------------------------------------------------------------------

def _lmg_drift_vec(Omega, q, p):
    fq = Omega * p + 0.5 * q * q * p
    fp = -(Omega - 2.0) * q - 0.5 * q * p * p - q * q * q
    return fq, fp


def _platen_vec(Omega, s, q, p, dt, rdt, w):
    corr = (w * w - dt) / (2.0 * rdt)
    fq, fp = _lmg_drift_vec(Omega, q, p)
    uq = q + fq * dt + s * fq * rdt
    up = p + fp * dt + s * fp * rdt
    gq, gp = _lmg_drift_vec(Omega, uq, up)
    qn = q + fq * dt + s * fq * w + s * (gq - fq) * corr
    pn = p + fp * dt + s * fp * w + s * (gp - fp) * corr
    return qn, pn


def _benettin_batch_numpy(Omega, gamma, qr0, pr0, qc0, pc0, delta0, dt,
                          n_steps, renorm_every, discard, dw):
    n_r = dw.shape[0]
    s = np.sqrt(2.0 * gamma)
    rdt = np.sqrt(dt)
    q = np.full(n_r, qr0)
    p = np.full(n_r, pr0)
    q2 = np.full(n_r, qc0)
    p2 = np.full(n_r, pc0)
    ell_prev = np.full(n_r, np.hypot(qc0 - qr0, pc0 - pr0))
    log_sum = np.zeros(n_r)
    intervals = np.zeros(n_r, dtype=np.int64)
    renorms = 0
    active = np.ones(n_r, dtype=bool) & (ell_prev > 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            if not active.any():
                break
            w = dw[:, i]
            qn, pn = _platen_vec(Omega, s, q, p, dt, rdt, w)
            qn2, pn2 = _platen_vec(Omega, s, q2, p2, dt, rdt, w)
            q = np.where(active, qn, q)
            p = np.where(active, pn, p)
            q2 = np.where(active, qn2, q2)
            p2 = np.where(active, pn2, p2)
            bad = ~(np.isfinite(q) & np.isfinite(p)
                    & np.isfinite(q2) & np.isfinite(p2))
            bad |= (np.abs(q) > BLOWUP_LIMIT) | (np.abs(p) > BLOWUP_LIMIT)
            bad |= (np.abs(q2) > BLOWUP_LIMIT) | (np.abs(p2) > BLOWUP_LIMIT)
            active &= ~bad
            if (i + 1) % renorm_every == 0:
                dq = q2 - q
                dp = p2 - p
                ell = np.sqrt(dq * dq + dp * dp)
                ok = active & (ell > 0.0) & np.isfinite(ell)
                active = ok
                renorms += 1
                safe = np.where(ok, ell, 1.0)
                if renorms > discard:
                    upd = np.where(
                        ok, np.log(safe / np.where(ok, ell_prev, 1.0)), 0.0)
                    log_sum += upd
                    intervals += ok.astype(np.int64)
                scale = np.where(ok, delta0 / safe, 0.0)
                q2 = np.where(ok, q + dq * scale, q2)
                p2 = np.where(ok, p + dp * scale, p2)
                ell_prev = np.where(ok, delta0, ell_prev)
    blown = ~active
    return log_sum, intervals, blown


def _qvar_batch_numpy(Omega, gamma, q0, p0, dt, n_steps, stride, dw):
    n_r = dw.shape[0]
    n_samp = n_steps // stride + 1
    s = np.sqrt(2.0 * gamma)
    rdt = np.sqrt(dt)
    q = np.full(n_r, q0)
    p = np.full(n_r, p0)
    out = np.full((n_r, n_samp), np.nan)
    out[:, 0] = q
    active = np.ones(n_r, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            w = dw[:, i]
            qn, pn = _platen_vec(Omega, s, q, p, dt, rdt, w)
            q = np.where(active, qn, q)
            p = np.where(active, pn, p)
            bad = ~(np.isfinite(q) & np.isfinite(p))
            bad |= (np.abs(q) > BLOWUP_LIMIT) | (np.abs(p) > BLOWUP_LIMIT)
            active &= ~bad
            if (i + 1) % stride == 0:
                k = (i + 1) // stride
                out[active, k] = q[active]
    blown = ~active
    return out, blown


# ---------------------------------------------------------------------------
# public batch API
# ---------------------------------------------------------------------------

def benettin_batch(Omega, gamma, ref0, comp0, delta0, dt, n_steps,
                   renorm_every, dw, discard=0):
    """Twin-trajectory Benettin sums for a batch of shared-noise paths.

    ref0 and comp0 are (Q, P) starting points for the reference and the
    companion trajectory; both integrate the same noise path.  After every
    renorm_every steps the companion is pulled back to distance delta0
    from the reference along the current separation direction and the log
    growth ratio of that interval is accumulated.  The first discard
    intervals renormalize without contributing to the sum.  dw has shape
    (R, n_steps).  Returns (log_sums, completed_intervals, blown) arrays
    of length R; completed_intervals counts contributing intervals only.
    """
    dw = np.ascontiguousarray(dw, dtype=np.float64)
    qr0, pr0 = float(ref0[0]), float(ref0[1])
    qc0, pc0 = float(comp0[0]), float(comp0[1])
    if not NUMBA_ENABLED:
        return _benettin_batch_numpy(Omega, gamma, qr0, pr0, qc0, pc0,
                                     delta0, dt, n_steps, renorm_every,
                                     discard, dw)
    n_r = dw.shape[0]
    log_sums = np.empty(n_r)
    intervals = np.empty(n_r, dtype=np.int64)
    blown = np.empty(n_r, dtype=bool)
    for r in range(n_r):
        log_sums[r], intervals[r], blown[r] = _benettin_core(
            Omega, gamma, qr0, pr0, qc0, pc0, delta0, dt, n_steps,
            renorm_every, discard, dw[r])
    return log_sums, intervals, blown


def qvar_batch(Omega, gamma, q0, p0, dt, n_steps, stride, dw):
    """Sampled Q_t for a batch of noise paths; NaN after a blow-up.

    Returns (q_samples of shape (R, n_steps // stride + 1), blown).
    """
    dw = np.ascontiguousarray(dw, dtype=np.float64)
    if not NUMBA_ENABLED:
        return _qvar_batch_numpy(Omega, gamma, q0, p0, dt, n_steps, stride, dw)
    n_r = dw.shape[0]
    n_samp = n_steps // stride + 1
    out = np.empty((n_r, n_samp))
    blown = np.empty(n_r, dtype=bool)
    for r in range(n_r):
        blown[r] = _qvar_core(Omega, gamma, q0, p0, dt, n_steps, stride,
                              dw[r], out[r])
    return out, blown


def platen_step_lmg(Omega, gamma, q, p, dt, dw):
    """One order-1.0 step of the noisy LMG flow (reference scalar path)."""
    s = np.sqrt(2.0 * gamma)
    rdt = np.sqrt(dt)
    qn, pn = _platen_vec(Omega, s, q, p, dt, rdt, dw)
    return float(qn), float(pn)
