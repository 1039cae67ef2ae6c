"""Hot numeric kernels, with optional numba acceleration.

The Wigner kernel is compiled with ``parallel=True``; the workqueue
threading layer does not allow concurrent invocations from several Python
threads, so a module lock serializes entry (the kernel saturates the CPU on
its own).

Two code paths are provided for each kernel: a numba ``@njit`` version and a
pure-numpy fallback. Selection happens once at import time: numba is used
when it imports cleanly unless the environment variable ``PHOTONSUB_NUMBA``
is set to ``0``/``false``/``off``. Both paths perform the same per-point
arithmetic in the same order, so they agree to ~1e-12 (see
``benchmarks/bench_kernels.py``, which times and cross-checks them).

Kernels here are deliberately free of package types: plain ndarrays in,
plain ndarrays out.
"""

import os

import numpy as np


def _numba_requested():
    flag = os.environ.get("PHOTONSUB_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


def _load_numba():
    if not _numba_requested():
        return None
    try:
        import numba
    except ImportError:
        return None
    # workqueue is always available and avoids TBB version warnings
    numba.config.THREADING_LAYER = "workqueue"
    return numba


_nb = _load_numba()
USING_NUMBA = _nb is not None


# ---------------------------------------------------------------------------
# Wigner evaluation
#
# W(x, p) = (1/pi) exp(-r^2) * [ S_0 + 2 Re sum_{d>=1} a^d S_d ],
#   a = sqrt(2) (x - i p),  r^2 = x^2 + p^2,
#   S_d = sum_n (-1)^n sqrt(n!/(n+d)!) rho[n+d, n] L_n^{(d)}(2 r^2).
#
# The generalized Laguerre values come from the upward three-term recurrence,
# which stays finite at n_max ~ 20 where direct factorial formulas overflow.
# ---------------------------------------------------------------------------

def _diagonal_coefficients(rho):
    """C[dd, n] = (-1)^n sqrt(n!/(n+dd)!) rho[n+dd, n], zero-padded."""
    d = rho.shape[0]
    C = np.zeros((d, d), dtype=np.complex128)
    for dd in range(d):
        coef = 1.0
        for k in range(1, dd + 1):       # 1/sqrt(dd!)
            coef /= np.sqrt(k)
        for n in range(d - dd):
            C[dd, n] = coef * rho[n + dd, n]
            coef = -coef * np.sqrt((n + 1.0) / (n + 1.0 + dd))
    return C


def _wigner_values_numpy(C, x, p):
    X, P = np.meshgrid(x, p, indexing="ij")
    r2 = X * X + P * P
    z = 2.0 * r2
    d = C.shape[0]
    amp = np.sqrt(2.0) * (X - 1j * P)
    acc = np.zeros(X.shape, dtype=np.complex128)
    amp_pow = np.ones_like(acc)          # amp**dd, built multiplicatively
    for dd in range(d):
        S = np.zeros_like(acc)
        Lprev = np.ones_like(z)
        Lcur = 1.0 + dd - z
        for n in range(d - dd):
            if n == 0:
                L = Lprev
            elif n == 1:
                L = Lcur
            else:
                L = ((2.0 * (n - 1) + 1.0 + dd - z) * Lcur - (n - 1.0 + dd) * Lprev) / n
                Lprev, Lcur = Lcur, L
            S = S + C[dd, n] * L
        if dd == 0:
            acc += S
        else:
            amp_pow = amp_pow * amp
            acc += 2.0 * (amp_pow * S).real
    return (np.exp(-r2) / np.pi) * acc.real


def _make_wigner_numba(numba):
    # prange over grid rows: each point's sum has a fixed order, so results
    # are bitwise deterministic for any thread count
    @numba.njit(cache=True, parallel=True)
    def _wigner_values_nb(C, x, p):  # pragma: no cover - exercised via wrapper
        nx = x.shape[0]
        npts = p.shape[0]
        d = C.shape[0]
        out = np.empty((nx, npts))
        for i in numba.prange(nx):
            for j in range(npts):
                r2 = x[i] * x[i] + p[j] * p[j]
                z = 2.0 * r2
                amp = np.sqrt(2.0) * complex(x[i], -p[j])
                acc = 0.0 + 0.0j
                amp_pow = 1.0 + 0.0j
                for dd in range(d):
                    S = 0.0 + 0.0j
                    Lprev = 1.0
                    Lcur = 1.0 + dd - z
                    for n in range(d - dd):
                        if n == 0:
                            L = Lprev
                        elif n == 1:
                            L = Lcur
                        else:
                            L = ((2.0 * (n - 1) + 1.0 + dd - z) * Lcur
                                 - (n - 1.0 + dd) * Lprev) / n
                            Lprev = Lcur
                            Lcur = L
                        S = S + C[dd, n] * L
                    if dd == 0:
                        acc += S
                    else:
                        amp_pow = amp_pow * amp
                        acc += 2.0 * (amp_pow * S).real
                out[i, j] = np.exp(-r2) / np.pi * acc.real
        return out

    return _wigner_values_nb


# ---------------------------------------------------------------------------
# Iterative maximum-likelihood (R rho R) reconstruction loop
# ---------------------------------------------------------------------------

def _mle_iterate_numpy(kernels, counts, max_iters, ll_tolerance, prob_floor):
    nproj, d, _ = kernels.shape
    rho = np.eye(d, dtype=np.complex128) / d
    trace = np.empty(max_iters)
    floor_hits = 0
    converged = False
    it = 0
    ll_prev = 0.0
    for it in range(max_iters):
        pr = np.einsum("jmn,nm->j", kernels, rho).real
        low = pr < prob_floor
        if low.any():
            floor_hits += int(low.sum())
            pr = np.where(low, prob_floor, pr)
        ll = float(np.dot(counts, np.log(pr)))
        trace[it] = ll
        if it > 0 and abs(ll - ll_prev) <= ll_tolerance * abs(ll_prev):
            converged = True
            break
        ll_prev = ll
        R = np.einsum("j,jmn->mn", counts / pr, kernels)
        rho = R @ rho @ R
        rho = rho / np.trace(rho).real
        rho = 0.5 * (rho + rho.conj().T)
    return rho, trace[: it + 1].copy(), it + 1, converged, floor_hits


def _make_mle_numba(numba):
    @numba.njit(cache=True)
    def _mle_iterate_nb(kernels, counts, max_iters, ll_tolerance, prob_floor):  # pragma: no cover
        nproj = kernels.shape[0]
        d = kernels.shape[1]
        rho = np.eye(d, dtype=np.complex128) / d
        trace = np.empty(max_iters)
        floor_hits = 0
        converged = False
        it = 0
        ll_prev = 0.0
        pr = np.empty(nproj)
        R = np.empty((d, d), dtype=np.complex128)
        for it in range(max_iters):
            for j in range(nproj):
                s = 0.0
                for m in range(d):
                    for n in range(d):
                        s += (kernels[j, m, n] * rho[n, m]).real
                if s < prob_floor:
                    s = prob_floor
                    floor_hits += 1
                pr[j] = s
            ll = 0.0
            for j in range(nproj):
                ll += counts[j] * np.log(pr[j])
            trace[it] = ll
            if it > 0 and abs(ll - ll_prev) <= ll_tolerance * abs(ll_prev):
                converged = True
                break
            ll_prev = ll
            R[:, :] = 0.0
            for j in range(nproj):
                w = counts[j] / pr[j]
                for m in range(d):
                    for n in range(d):
                        R[m, n] += w * kernels[j, m, n]
            rho = np.dot(R, np.dot(rho, R))
            tr = 0.0
            for m in range(d):
                tr += rho[m, m].real
            rho = rho / tr
            rho = 0.5 * (rho + rho.conj().T.copy())
        return rho, trace[: it + 1].copy(), it + 1, converged, floor_hits

    return _mle_iterate_nb


if USING_NUMBA:
    _wigner_values = _make_wigner_numba(_nb)
    _mle_iterate = _make_mle_numba(_nb)
else:
    _wigner_values = _wigner_values_numpy
    _mle_iterate = _mle_iterate_numpy


def wigner_values(rho, x, p):
    """Evaluate W on the outer grid of `x` and `p` for a density matrix."""
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    return _wigner_values(_diagonal_coefficients(rho), x, p)


def mle_iterate(kernels, counts, max_iters, ll_tolerance, prob_floor):
    """Run the multiplicative fixed-point iteration rho <- N[R rho R].

    Returns (rho, log_likelihood_trace, iterations_used, converged,
    floor_hits) where `floor_hits` counts projector probabilities that had
    to be floored at `prob_floor`.
    """
    kernels = np.ascontiguousarray(kernels, dtype=np.complex128)
    counts = np.ascontiguousarray(counts, dtype=np.float64)
    return _mle_iterate(kernels, counts, int(max_iters), float(ll_tolerance),
                        float(prob_floor))
