"""Dense symmetric eigensolver and numerically stable row softmax.

The eigensolver is cyclic Jacobi: plane rotations zero one off-diagonal pair
at a time, the accumulated rotation product is orthonormal by construction,
and convergence is quadratic once the off-diagonal mass is small. Pairs are
visited in round-robin (tournament) order, which makes every sweep a run of
rounds whose rotations touch disjoint index pairs; each round's rotations
commute, so they are applied as one vectorized block update instead of a
Python-level loop. Cubic cost is fine at the graph sizes this package
targets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NoConvergence

_MAX_SWEEPS = 60


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues ascending, eigenvectors as orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def residual(self, a):
        """Columnwise ||A v - lambda v||_2, for verification."""
        r = a @ self.eigenvectors - self.eigenvectors * self.eigenvalues
        return np.linalg.norm(r, axis=0)


def _tournament_rounds(n):
    """Round-robin schedule: n-1 rounds of disjoint index pairs covering
    every unordered pair exactly once. Odd n gets a dummy slot."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def eigh_symmetric(a, tol=1e-10):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Converged when the off-diagonal Frobenius mass drops below
    tol * max(1, ||A||_F). Deterministic for a fixed input.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput("expected a square matrix")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix entries must be finite")
    if a.size and np.max(np.abs(a - a.T)) > 1e-10:
        raise InvalidInput("matrix is not symmetric to 1e-10")
    if tol <= 0:
        raise InvalidInput("tol must be positive")

    n = a.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)))
    A = (a + a.T) / 2.0
    V = np.eye(n)
    if n == 1:
        return EigenDecomposition(A.diagonal().copy(), V)

    target = tol * max(1.0, float(np.linalg.norm(A)))
    rounds = _tournament_rounds(n)

    for sweep in range(_MAX_SWEEPS):
        off = np.sqrt(2.0) * float(np.linalg.norm(np.triu(A, 1)))
        if off <= target:
            break
        # Early sweeps only rotate pivots above a shrinking threshold; this
        # is the classic strategy that keeps late sweeps cheap.
        thresh = 0.2 * off / (n * n) if sweep < 4 else 0.0
        for P, Q in rounds:
            apq = A[P, Q]
            app = A[P, P]
            aqq = A[Q, Q]
            active = np.abs(apq) > max(thresh, 1e-300)
            if not np.any(active):
                continue
            safe = np.where(active, apq, 1.0)
            tau = (aqq - app) / (2.0 * safe)
            big = np.abs(tau) > 1.0e150             # tau^2 would overflow
            tau_c = np.where(big, 1.0, tau)
            t = np.sign(tau_c) / (np.abs(tau_c) + np.sqrt(1.0 + tau_c * tau_c))
            t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)  # huge-tau asymptote
            t = np.where(tau == 0.0, 1.0, t)        # sign(0) would kill the rotation
            t = np.where(active, t, 0.0)            # inactive pairs rotate by identity
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            # One round's rotations touch disjoint pairs, so the joint
            # update below is exactly J^T A J for the block rotation J.
            col_p = A[:, P]
            col_q = A[:, Q]
            A[:, P] = c * col_p - s * col_q
            A[:, Q] = s * col_p + c * col_q
            row_p = A[P, :]
            row_q = A[Q, :]
            A[P, :] = c[:, None] * row_p - s[:, None] * row_q
            A[Q, :] = s[:, None] * row_p + c[:, None] * row_q
            # Analytic values for each rotated 2x2 block beat the rounding
            # accumulated by the vector updates.
            A[P, P] = app - t * apq
            A[Q, Q] = aqq + t * apq
            zero = np.where(active, 0.0, apq)
            A[P, Q] = zero
            A[Q, P] = zero

            v_p = V[:, P]
            v_q = V[:, Q]
            V[:, P] = c * v_p - s * v_q
            V[:, Q] = s * v_p + c * v_q
    else:
        raise NoConvergence(f"Jacobi did not converge in {_MAX_SWEEPS} sweeps")

    values = A.diagonal().copy()
    order = np.argsort(values, kind="stable")
    return EigenDecomposition(values[order], V[:, order])


def softmax_rows(m, mask=None):
    """Row softmax with optional boolean mask; max-subtraction for stability.

    Masked entries are exactly zero in the output. Rows with no unmasked
    entry come back as all zeros, flagged in the returned ``empty`` vector so
    the caller can react.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInput("expected a 2-d matrix")
    if mask is None:
        mask = np.ones(m.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != m.shape:
            raise InvalidInput("mask shape must match the matrix")
    neg = np.where(mask, m, -np.inf)
    mx = neg.max(axis=1, keepdims=True, initial=-np.inf)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.where(mask, np.exp(m - mx), 0.0)
    s = e.sum(axis=1, keepdims=True)
    empty = s[:, 0] == 0.0
    out = e / np.where(s > 0.0, s, 1.0)
    return out, empty
