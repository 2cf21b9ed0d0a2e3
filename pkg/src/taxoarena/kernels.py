"""Hot numeric kernels: Bradley-Terry minorization-maximization fits.

The bootstrap loop refits the model once per resample, which makes the MM
sweep the dominant cost of ranking. Kernels are compiled with numba when it
is importable; set ``TAXOARENA_DISABLE_NUMBA=1`` to force the pure-numpy
path (same math, vectorized across resamples). ``benchmarks/bench_kernels.py``
compares the two.

Conventions for both paths:

- ``wins[i, j]`` counts decisive wins of system i over system j.
- Strengths are iterated in pi space with a zero-mean gauge on log(pi); the
  gauge is exact unless a clamp is active (degenerate all-win/all-loss data).
- The update is simultaneous (Jacobi-style): every denominator is computed
  from the previous iterate, so the numba loop and the numpy broadcast
  produce the same sequence up to float-summation order.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("TAXOARENA_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

if not _DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        HAS_NUMBA = False
else:
    HAS_NUMBA = False


def _bt_fit_numpy(wins: np.ndarray, tol: float, max_iter: int, clamp: float):
    """One MM fit, vectorized. Returns (log_pi, iterations, converged)."""
    k = wins.shape[0]
    n = wins + wins.T
    w = wins.sum(axis=1)
    log_pi = np.zeros(k)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        iterations += 1
        pi = np.exp(log_pi)
        pair = pi[:, None] + pi[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(n > 0, n / pair, 0.0)
        denom = contrib.sum(axis=1)
        new = np.where(
            (denom > 0) & (w > 0),
            np.log(np.where(w > 0, w, 1.0)) - np.log(np.where(denom > 0, denom, 1.0)),
            np.where(denom > 0, -clamp, log_pi),
        )
        new = new - new.mean()
        np.clip(new, -clamp, clamp, out=new)
        delta = np.abs(new - log_pi).max()
        log_pi = new
        if delta < tol:
            converged = True
            break
    return log_pi, iterations, converged


def _bt_fit_batch_numpy(wins: np.ndarray, tol: float, max_iter: int, clamp: float):
    """Batched MM over resamples: wins has shape (R, K, K)."""
    r, k, _ = wins.shape
    n = wins + np.transpose(wins, (0, 2, 1))
    w = wins.sum(axis=2)
    log_pi = np.zeros((r, k))
    iterations = np.zeros(r, dtype=np.int64)
    converged = np.zeros(r, dtype=np.bool_)
    for _ in range(max_iter):
        active = ~converged
        if not active.any():
            break
        pi = np.exp(log_pi[active])
        pair = pi[:, :, None] + pi[:, None, :]
        na = n[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(na > 0, na / pair, 0.0)
        denom = contrib.sum(axis=2)
        wa = w[active]
        old = log_pi[active]
        new = np.where(
            (denom > 0) & (wa > 0),
            np.log(np.where(wa > 0, wa, 1.0)) - np.log(np.where(denom > 0, denom, 1.0)),
            np.where(denom > 0, -clamp, old),
        )
        new = new - new.mean(axis=1, keepdims=True)
        np.clip(new, -clamp, clamp, out=new)
        delta = np.abs(new - old).max(axis=1)
        log_pi[active] = new
        iterations[active] += 1
        done = np.zeros(r, dtype=np.bool_)
        done[np.flatnonzero(active)[delta < tol]] = True
        converged |= done
    return log_pi, iterations, converged


if HAS_NUMBA:

    @njit(cache=True)
    def _bt_fit_numba(wins, tol, max_iter, clamp):  # pragma: no cover - jitted
        k = wins.shape[0]
        n = wins + wins.T
        w = np.zeros(k)
        for i in range(k):
            for j in range(k):
                w[i] += wins[i, j]
        log_pi = np.zeros(k)
        new = np.zeros(k)
        iterations = 0
        converged = False
        for _ in range(max_iter):
            iterations += 1
            mean = 0.0
            for i in range(k):
                pii = np.exp(log_pi[i])
                denom = 0.0
                for j in range(k):
                    if n[i, j] > 0.0:
                        denom += n[i, j] / (pii + np.exp(log_pi[j]))
                if denom > 0.0 and w[i] > 0.0:
                    new[i] = np.log(w[i] / denom)
                elif denom > 0.0:
                    new[i] = -clamp
                else:
                    new[i] = log_pi[i]
                mean += new[i]
            mean /= k
            delta = 0.0
            for i in range(k):
                v = new[i] - mean
                if v > clamp:
                    v = clamp
                elif v < -clamp:
                    v = -clamp
                d = abs(v - log_pi[i])
                if d > delta:
                    delta = d
                log_pi[i] = v
            if delta < tol:
                converged = True
                break
        return log_pi, iterations, converged

    @njit(cache=True)
    def _bt_fit_batch_numba(wins, tol, max_iter, clamp):  # pragma: no cover - jitted
        r = wins.shape[0]
        k = wins.shape[1]
        log_pi = np.zeros((r, k))
        iterations = np.zeros(r, dtype=np.int64)
        converged = np.zeros(r, dtype=np.bool_)
        for b in range(r):
            lp, it, cv = _bt_fit_numba(wins[b], tol, max_iter, clamp)
            log_pi[b] = lp
            iterations[b] = it
            converged[b] = cv
        return log_pi, iterations, converged


def bt_fit(wins: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000,
           clamp: float = 20.0):
    """Fit log-strengths from a KxK decisive-win matrix.

    Returns (log_pi, iterations, converged). log_pi has zero mean unless a
    clamp engaged.
    """
    wins = np.ascontiguousarray(wins, dtype=np.float64)
    if HAS_NUMBA:
        return _bt_fit_numba(wins, tol, max_iter, clamp)
    return _bt_fit_numpy(wins, tol, max_iter, clamp)


def bt_fit_batch(wins: np.ndarray, tol: float = 1e-8, max_iter: int = 10_000,
                 clamp: float = 20.0):
    """Fit every (K, K) slice of an (R, K, K) win tensor independently."""
    wins = np.ascontiguousarray(wins, dtype=np.float64)
    if HAS_NUMBA:
        return _bt_fit_batch_numba(wins, tol, max_iter, clamp)
    return _bt_fit_batch_numpy(wins, tol, max_iter, clamp)
