"""Shared test oracles."""

import itertools
import math

import numpy as np


def nnls_bruteforce(f, eta, gamma):
    """Exhaustive active-set search for the nonnegative least-squares
    minimizer of 0.5 |eta - f a|^2 + gamma |a|^2, a >= 0.

    Enumerates every support pattern, solves the unconstrained problem on
    the support, and keeps the best feasible candidate; the true optimum's
    support is among the patterns, so the best value is exact.
    """
    m = f.shape[1]
    best_val, best_alpha = None, None
    for pattern in itertools.product([False, True], repeat=m):
        idx = np.flatnonzero(pattern)
        alpha = np.zeros(m)
        if idx.size:
            sub = f[:, idx]
            if gamma > 0:
                a = np.vstack([sub, math.sqrt(2 * gamma) * np.eye(idx.size)])
                b = np.concatenate([eta, np.zeros(idx.size)])
            else:
                a, b = sub, eta
            sol, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
            if np.any(sol < 0):
                continue
            alpha[idx] = sol
        r = eta - f @ alpha
        val = 0.5 * float(r @ r) + gamma * float(alpha @ alpha)
        if best_val is None or val < best_val:
            best_val, best_alpha = val, alpha
    return best_val, best_alpha
