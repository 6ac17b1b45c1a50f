"""Shared test oracles, independent of the solver paths they check."""

import numpy as np

from psiq import ModelParams, TruncatedGrid, build_generator


def dense_stationary(params: ModelParams, grid: TruncatedGrid) -> np.ndarray:
    """Dense direct solve of the identical truncated generator.

    Replaces one balance equation by the normalization row and solves the
    square system with LAPACK; completely independent of the iterative
    path in ``psiq.exact.solve_stationary``.
    """
    Q = build_generator(params, grid).toarray()
    n = Q.shape[0]
    system = Q.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(system, rhs)
    return pi.reshape(grid.n_max + 1, grid.m_max + 1)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Straightforward TV distance with shape padding (test-local copy)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    shape = tuple(max(a, b) for a, b in zip(p.shape, q.shape))
    pp = np.zeros(shape)
    qq = np.zeros(shape)
    pp[tuple(slice(0, s) for s in p.shape)] = p
    qq[tuple(slice(0, s) for s in q.shape)] = q
    return 0.5 * float(np.abs(pp - qq).sum())
