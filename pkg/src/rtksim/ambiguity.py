"""Integer least squares for carrier-phase ambiguities.

Bootstrapped rounding on the LDL-reduced (decorrelated) covariance plus a
bounded integer search around the bootstrap solution, validated with a
best/second-best ratio test. The search enumerates a +/-2 box per
conditional level in nearest-first order, so the first leaf reached is the
bootstrap vector and the box optimum is found exactly whenever the node cap
is not hit (the cap returns no-fix rather than a possibly wrong vector).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class FixResult:
    integers: np.ndarray  # fixed ambiguities, original ordering
    ratio: float
    q_best: float
    q_second: float


def ltdl_decompose(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor Q = L^T diag(D) L with unit lower-triangular L.

    D[i] is the conditional variance of component i given components i+1..n-1.
    """
    A = np.array(Q, dtype=float, copy=True)
    n = A.shape[0]
    L = np.zeros((n, n))
    D = np.zeros(n)
    for i in range(n - 1, -1, -1):
        D[i] = A[i, i]
        if D[i] <= 0.0:
            raise ValueError("covariance is not positive definite")
        a = math.sqrt(D[i])
        L[i, :i + 1] = A[i, :i + 1] / a
        for j in range(i):
            A[j, :j + 1] -= L[i, :j + 1] * L[i, j]
        L[i, :i + 1] /= L[i, i]
    return L, D


def _gauss(L: np.ndarray, Z: np.ndarray, i: int, j: int) -> None:
    mu = round(L[i, j])
    if mu != 0:
        L[i:, j] -= mu * L[i:, i]
        Z[:, j] -= mu * Z[:, i]


def _permute(L: np.ndarray, D: np.ndarray, Z: np.ndarray, j: int, delta: float) -> None:
    eta = D[j] / delta
    lam = D[j + 1] * L[j + 1, j] / delta
    D[j] = eta * D[j + 1]
    D[j + 1] = delta
    a0 = L[j, :j].copy()
    a1 = L[j + 1, :j].copy()
    L[j, :j] = -L[j + 1, j] * a0 + a1
    L[j + 1, :j] = eta * a0 + lam * a1
    L[j + 1, j] = lam
    tail = L[j + 2:, j].copy()
    L[j + 2:, j] = L[j + 2:, j + 1]
    L[j + 2:, j + 1] = tail
    col = Z[:, j].copy()
    Z[:, j] = Z[:, j + 1]
    Z[:, j + 1] = col


def decorrelate(Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """LAMBDA-style reduction: returns (L, D, Z) with Z^T Q Z = L^T diag(D) L."""
    L, D = ltdl_decompose(Q)
    n = len(D)
    Z = np.eye(n, dtype=np.int64)
    j = k = n - 2
    while j >= 0:
        if j <= k:
            for i in range(j + 1, n):
                _gauss(L, Z, i, j)
        delta = D[j] + L[j + 1, j] ** 2 * D[j + 1]
        if delta + 1e-6 < D[j + 1]:
            _permute(L, D, Z, j, delta)
            k = j
            j = n - 2
        else:
            j -= 1
    return L, D, Z


def _search(L: np.ndarray, D: np.ndarray, z_float: np.ndarray, box: int,
            node_cap: int) -> Optional[tuple[np.ndarray, float, float]]:
    """Depth-first conditional search; returns (best vector, q_best, q_second)."""
    n = len(z_float)
    best_vec = None
    q_best = math.inf
    q_second = math.inf
    cand = np.zeros(n, dtype=np.int64)
    w = np.zeros(n)
    nodes = 0

    def centers(level: int) -> tuple[float, list[int]]:
        center = z_float[level] + float(L[level + 1:, level] @ w[level + 1:])
        base = round(center)
        opts = sorted(range(base - box, base + box + 1), key=lambda c: abs(c - center))
        return center, opts

    def descend(level: int, cost: float) -> bool:
        nonlocal best_vec, q_best, q_second, nodes
        center, opts = centers(level)
        for c in opts:
            nodes += 1
            if nodes > node_cap:
                return False
            step = (c - center) ** 2 / D[level]
            total = cost + step
            if total >= q_second:
                break  # nearest-first ordering: later options only cost more
            cand[level] = c
            w[level] = c - center
            if level == 0:
                if total < q_best:
                    if best_vec is not None:
                        q_second = q_best
                    q_best = total
                    best_vec = cand.copy()
                elif total < q_second and not np.array_equal(cand, best_vec):
                    q_second = total
            else:
                if not descend(level - 1, total):
                    return False
        return True

    if not descend(n - 1, 0.0):
        return None
    if best_vec is None or not math.isfinite(q_second):
        return None
    return best_vec, q_best, q_second


def fix_ambiguities(a_float: np.ndarray, Q: np.ndarray,
                    ratio_threshold: float = 3.0, box: int = 2,
                    node_cap: int = 50_000) -> Optional[FixResult]:
    """Resolve float ambiguities to integers; None signals no validated fix."""
    a_float = np.asarray(a_float, dtype=float)
    Q = 0.5 * (np.asarray(Q, float) + np.asarray(Q, float).T)
    try:
        L, D, Z = decorrelate(Q)
    except ValueError:
        return None
    z_float = Z.T.astype(float) @ a_float
    found = _search(L, D, z_float, box, node_cap)
    if found is None:
        return None
    z_best, q_best, q_second = found
    ratio = q_second / max(q_best, 1e-12)
    if ratio < ratio_threshold:
        return None
    a_int = np.linalg.solve(Z.T.astype(float), z_best.astype(float))
    a_round = np.rint(a_int).astype(np.int64)
    if not np.array_equal(Z.T @ a_round, z_best):
        return None  # unimodular back-transform failed numerically
    return FixResult(integers=a_round, ratio=float(ratio),
                     q_best=float(q_best), q_second=float(q_second))
