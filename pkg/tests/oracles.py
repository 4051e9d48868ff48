"""Independent oracles used by the tests.

These deliberately avoid the code paths they check: the LASSO oracle is an
accelerated proximal-gradient method (the solver under test is coordinate
descent), tensor ranks come from dense matricizations, the Poisson value
from its double sine series.
"""
import numpy as np


def prox_gradient_lasso(A, y, omega, lam, iters=100_000, tol=1e-14):
    """FISTA for min ||y - Av||^2 + lam * ||omega*v||_1."""
    A = np.asarray(A, float)
    y = np.asarray(y, float)
    omega = np.asarray(omega, float)
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    step = 1.0 / L
    thr = step * lam * omega
    x = np.zeros(A.shape[1])
    z = x.copy()
    t = 1.0
    for _ in range(iters):
        grad = 2.0 * A.T @ (A @ z - y)
        x_new = z - step * grad
        x_new = np.sign(x_new) * np.maximum(np.abs(x_new) - thr, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + (t - 1.0) / t_new * (x_new - x)
        if np.abs(x_new - x).max() <= tol * max(1.0, np.abs(x_new).max()):
            x = x_new
            break
        x, t = x_new, t_new
    return x


def lasso_objective(A, y, omega, lam, v):
    r = y - A @ v
    return float(r @ r + lam * np.abs(omega * v).sum())


def unfolding_ranks(t, rtol=1e-10):
    """Ranks of the k-th matricizations of a dense tensor."""
    t = np.asarray(t, float)
    ranks = []
    for k in range(t.ndim - 1):
        mat = t.reshape(int(np.prod(t.shape[:k + 1])), -1)
        s = np.linalg.svd(mat, compute_uv=False)
        ranks.append(int(np.count_nonzero(s > rtol * s[0])) if s[0] > 0 else 1)
    return tuple(ranks)


def dense_embedding(tt, m, W):
    """Embed a candidate mode-m component into the full coefficient tensor."""
    from ttrec.tensor_core import tt_to_dense
    return tt_to_dense(tt.with_component(m, W))


def poisson_unit_square_qoi(terms=100):
    """Integral of the Poisson solution (a=1, f=1, zero boundary) by its
    double sine series."""
    total = 0.0
    for j in range(1, 2 * terms, 2):
        for k in range(1, 2 * terms, 2):
            total += 64.0 / (np.pi**6 * j**2 * k**2 * (j**2 + k**2))
    return total


def random_direction_sup(basis_values, n_directions, rng):
    """Brute-force variation estimate: max over random unit coefficient
    vectors of the squared evaluation, maximized over the grid."""
    k = basis_values.shape[1]
    w = rng.standard_normal((n_directions, k))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    vals = basis_values @ w.T
    return float((vals**2).max())


def monte_carlo_local_variation(d1, d2, r, n_draws, rng):
    """Feasible-point sampling lower bound for the structured rank-1
    local variation constant."""
    best = 0.0
    alphas = rng.uniform(1 - r, 1 + r, n_draws)
    for alpha in alphas:
        a = abs(1 - alpha)
        if a == 0:
            continue
        beta = rng.uniform(1 - a, 1 + a)
        lo, hi = -np.inf, np.inf
        feasible = True
        for c in (alpha, beta):
            if c > 0:
                lo, hi = max(lo, (1 - a) / c), min(hi, (1 + a) / c)
            elif c < 0:
                lo, hi = max(lo, (1 + a) / c), min(hi, (1 - a) / c)
            elif a < 1:
                feasible = False
        if not feasible or lo > hi:
            continue
        gamma = rng.uniform(lo, hi) if np.isfinite(lo) and np.isfinite(hi) else 1.0
        F = ((1 - alpha) ** 2 + (d2 - 1) * (1 - alpha * gamma) ** 2
             + (d1 - 1) * (1 - beta) ** 2
             + (d1 - 1) * (d2 - 1) * (1 - beta * gamma) ** 2)
        if F > 0:
            best = max(best, d1 * d2 * (1 - alpha) ** 2 / F)
    return best
