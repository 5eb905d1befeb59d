"""Epsilon-insensitive support vector regression solved by SMO.

The dual is written over 2n variables ``a = [alpha; alpha_star]`` with signs
``s = [+1]*n + [-1]*n``::

    min  1/2 a^T Q a + p^T a,   Q_ij = s_i s_j K(x_i, x_j)
    s.t. s^T a = 0,  0 <= a <= C,   p = [eps - y; eps + y]

and solved with sequential minimal optimization using second-order working
set selection. The fitted function is
``f(x) = sum_i (alpha_i - alpha_star_i) K(x_i, x) + b``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import NoConvergence, UsageError
from .base import Regressor, check_training_data

EPSILON = 0.1
KKT_TOL = 1e-3
MAX_PASSES = 10_000
_TAU = 1e-12
KERNELS = ("rbf", "linear")


def default_gamma(X: np.ndarray) -> float:
    """``1 / (p * mean column variance)``; 1.0 when every column is constant."""
    var = float(np.mean(X.var(axis=0))) if X.shape[0] else 0.0
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-gamma * sq)
    raise UsageError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


@njit(cache=True)
def _select(K, base, sign, a, G, QD, C, active, n_active):
    """Second-order working set selection; returns (i, j, gap)."""
    gmax = -np.inf
    i = -1
    for u in range(n_active):
        t = active[u]
        if sign[t] > 0:
            if a[t] < C and -G[t] >= gmax:
                gmax = -G[t]
                i = t
        else:
            if a[t] > 0 and G[t] >= gmax:
                gmax = G[t]
                i = t
    gmax2 = -np.inf
    j = -1
    best = np.inf
    if i >= 0:
        ki = base[i]
        for u in range(n_active):
            t = active[u]
            if sign[t] > 0:
                if a[t] > 0:
                    diff = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    if diff > 0:
                        quad = QD[i] + QD[t] - 2.0 * K[ki, base[t]]
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
            else:
                if a[t] < C:
                    diff = gmax - G[t]
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    if diff > 0:
                        quad = QD[i] + QD[t] - 2.0 * K[ki, base[t]]
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
    return i, j, gmax + gmax2


@njit(cache=True)
def _shrinkable(t, sign, a, G, C, gmax1, gmax2):
    if a[t] >= C:
        if sign[t] > 0:
            return -G[t] > gmax1
        return -G[t] > gmax2
    if a[t] <= 0:
        if sign[t] > 0:
            return G[t] > gmax2
        return G[t] > gmax1
    return False


@njit(cache=True)
def _reconstruct(K, base, sign, a, G, G_bar, p, C, active, n_active, m):
    """Recompute the gradient of shrunk variables from the free active ones."""
    if n_active == m:
        return
    for u in range(n_active, m):
        t = active[u]
        G[t] = G_bar[t] + p[t]
    for v in range(n_active):
        s = active[v]
        if 0 < a[s] < C:
            ks = base[s]
            coef = sign[s] * a[s]
            for u in range(n_active, m):
                t = active[u]
                G[t] += coef * sign[t] * K[ks, base[t]]


@njit(cache=True)
def _smo(K, y, C, eps, tol, max_iter, shrinking):
    n = y.shape[0]
    m = 2 * n
    sign = np.empty(m)
    p = np.empty(m)
    QD = np.empty(m)
    base = np.empty(m, dtype=np.int64)
    for t in range(n):
        sign[t] = 1.0
        sign[t + n] = -1.0
        p[t] = eps - y[t]
        p[t + n] = eps + y[t]
        QD[t] = K[t, t]
        QD[t + n] = K[t, t]
        base[t] = t
        base[t + n] = t
    a = np.zeros(m)
    G = p.copy()
    # gradient contribution of variables sitting at the upper bound
    G_bar = np.zeros(m)
    active = np.arange(m)
    n_active = m
    unshrink = False
    counter = min(m, 1000) + 1

    it = 0
    converged = False
    while it < max_iter:
        counter -= 1
        if counter == 0:
            counter = min(m, 1000)
            if shrinking:
                gmax1 = -np.inf
                gmax2 = -np.inf
                for u in range(n_active):
                    t = active[u]
                    if sign[t] > 0:
                        if a[t] < C and -G[t] >= gmax1:
                            gmax1 = -G[t]
                        if a[t] > 0 and G[t] >= gmax2:
                            gmax2 = G[t]
                    else:
                        if a[t] < C and -G[t] >= gmax2:
                            gmax2 = -G[t]
                        if a[t] > 0 and G[t] >= gmax1:
                            gmax1 = G[t]
                if not unshrink and gmax1 + gmax2 <= tol * 10:
                    unshrink = True
                    _reconstruct(K, base, sign, a, G, G_bar, p, C, active, n_active, m)
                    n_active = m
                u = 0
                while u < n_active:
                    if _shrinkable(active[u], sign, a, G, C, gmax1, gmax2):
                        n_active -= 1
                        while n_active > u:
                            if not _shrinkable(active[n_active], sign, a, G, C, gmax1, gmax2):
                                tmp = active[u]
                                active[u] = active[n_active]
                                active[n_active] = tmp
                                break
                            n_active -= 1
                    u += 1

        i, j, gap = _select(K, base, sign, a, G, QD, C, active, n_active)
        if gap < tol or j == -1:
            _reconstruct(K, base, sign, a, G, G_bar, p, C, active, n_active, m)
            n_active = m
            i, j, gap = _select(K, base, sign, a, G, QD, C, active, n_active)
            if gap < tol or j == -1:
                converged = True
                break
            counter = 1
        it += 1

        ki = base[i]
        kj = base[j]
        q_ij = sign[i] * sign[j] * K[ki, kj]
        ai_old = a[i]
        aj_old = a[j]
        if sign[i] != sign[j]:
            quad = QD[i] + QD[j] + 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total

        ci = sign[i] * (a[i] - ai_old)
        cj = sign[j] * (a[j] - aj_old)
        for u in range(n_active):
            t = active[u]
            kt = base[t]
            G[t] += sign[t] * (K[ki, kt] * ci + K[kj, kt] * cj)

        was_up = ai_old >= C
        if was_up != (a[i] >= C):
            step = -C if was_up else C
            for t in range(m):
                G_bar[t] += step * sign[i] * sign[t] * K[ki, base[t]]
        was_up = aj_old >= C
        if was_up != (a[j] >= C):
            step = -C if was_up else C
            for t in range(m):
                G_bar[t] += step * sign[j] * sign[t] * K[kj, base[t]]

    if n_active < m:
        _reconstruct(K, base, sign, a, G, G_bar, p, C, active, n_active, m)

    # offset: average over free variables, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    n_free = 0
    free_sum = 0.0
    for t in range(m):
        yg = sign[t] * G[t]
        if a[t] >= C:
            if sign[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif a[t] <= 0:
            if sign[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            free_sum += yg
    rho = free_sum / n_free if n_free > 0 else 0.5 * (ub + lb)
    return a, -rho, it, converged


def polish(K, y, alpha, alpha_star, C, eps, slack=1e-8):
    """Exact solution on the active set found by SMO, or ``None``.

    Variables SMO left at a bound are held there and the equality part of the
    KKT system (free points sit exactly on the tube edge, and the
    multipliers sum to zero) is solved directly for the free multipliers and
    the offset. The result is returned only if it is a valid optimum: free
    multipliers keep their sign and box, and every bounded point still
    satisfies its KKT condition.
    """
    n = len(y)
    beta = alpha - alpha_star
    free_a = (alpha > 0) & (alpha < C)
    free_s = (alpha_star > 0) & (alpha_star < C)
    if np.any((alpha > 0) & (alpha_star > 0)):
        return None
    F = np.flatnonzero(free_a | free_s)
    if len(F) == 0:
        return None
    B = np.setdiff1d(np.arange(n), F)
    side = np.where(free_a[F], 1.0, -1.0)
    m = len(F)
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = K[np.ix_(F, F)]
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    rhs = np.empty(m + 1)
    rhs[:m] = y[F] - eps * side - K[np.ix_(F, B)] @ beta[B]
    rhs[m] = -beta[B].sum()
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        return None
    scale = 1.0 + np.abs(rhs).max()
    if np.abs(A @ sol - rhs).max() > slack * scale:
        return None
    bF, b = sol[:m], sol[m]
    if np.any(side * bF < -slack * C) or np.any(np.abs(bF) > C * (1 + slack)):
        return None
    new = beta.copy()
    new[F] = np.clip(bF, -C, C)
    r = y - (K @ new + b)
    at0 = B[beta[B] == 0]
    up = B[beta[B] >= C]
    lo = B[beta[B] <= -C]
    tol = slack * scale
    if (np.any(np.abs(r[at0]) > eps + tol) or np.any(r[up] < eps - tol)
            or np.any(r[lo] > -eps + tol)):
        return None
    return np.maximum(new, 0.0), np.maximum(-new, 0.0), float(b)


class EpsilonSVR(Regressor):
    kind = "svr"

    def __init__(self, n_features, params, support, dual_coef, intercept, gamma,
                 alpha, alpha_star, n_iter, epsilon):
        super().__init__(n_features, params)
        self.support_vectors = support
        self.dual_coef = dual_coef
        self.intercept = float(intercept)
        self.gamma = gamma
        self.alpha = alpha
        self.alpha_star = alpha_star
        self.n_iter = n_iter
        self.epsilon = epsilon

    @property
    def kernel(self) -> str:
        return self.params["kernel"]

    def _predict(self, X):
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.intercept)
        K = kernel_matrix(X, self.support_vectors, self.kernel, self.gamma)
        return K @ self.dual_coef + self.intercept


def fit_svr_gram(
    K: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    kernel: str,
    C: float,
    gamma: float,
    epsilon: float = EPSILON,
    tol: float = KKT_TOL,
    shrinking: bool = True,
) -> EpsilonSVR:
    """Fit on a precomputed training Gram matrix ``K`` (shared across C values).

    SMO runs to the KKT tolerance ``tol``; its active set is then polished to
    the exact optimum when that optimum is consistent with it.
    """
    if not C > 0:
        raise UsageError(f"C must be positive, got {C}")
    n = len(y)
    max_iter = MAX_PASSES * max(n, 1)
    a, b, n_iter, converged = _smo(np.ascontiguousarray(K), y, float(C), float(epsilon),
                                   float(tol), max_iter, shrinking)
    if not converged:
        raise NoConvergence(f"SMO hit the iteration cap ({max_iter}) with C={C}, kernel={kernel}")
    alpha, alpha_star = a[:n].copy(), a[n:].copy()
    polished = polish(K, y, alpha, alpha_star, float(C), float(epsilon))
    if polished is not None:
        alpha, alpha_star, b = polished
    coef = alpha - alpha_star
    sv = np.flatnonzero(coef != 0)
    params = {"kernel": kernel, "C": C}
    return EpsilonSVR(X.shape[1], params, X[sv].copy(), coef[sv], b, gamma,
                      alpha, alpha_star, n_iter, epsilon)


def fit_svr(
    X,
    y,
    kernel: str,
    C: float,
    seed: int = 0,
    epsilon: float = EPSILON,
    tol: float = KKT_TOL,
) -> EpsilonSVR:
    """Epsilon-SVR with an RBF or linear kernel.

    ``seed`` is accepted for a uniform signature; SMO itself is deterministic.
    """
    X, y = check_training_data(X, y, min_rows=1)
    if kernel not in KERNELS:
        raise UsageError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    gamma = default_gamma(X) if kernel == "rbf" else None
    K = kernel_matrix(X, X, kernel, gamma)
    return fit_svr_gram(K, X, y, kernel, C, gamma, epsilon, tol)
