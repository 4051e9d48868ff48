"""Alternating least-squares recovery of tensor-train coefficients.

Four microstep flavors share one sweep engine:

* ``als``     -- plain least squares,
* ``als_l2``  -- ridge with cross-validated penalty,
* ``rals``    -- weighted LASSO in the eigenbasis of the local Gramian of the
                 model space (rotation by Q, weights sqrt(S), rotation back),
* ``r2als``   -- plain LASSO after a one-time Gramian-orthonormalization of
                 the univariate basis (no resubstitution needed).

Each sweep right-orthogonalizes the train, walks modes left to right, solves
the configured microstep on the training partition, left-orthogonalizes the
updated component, and adapts the bond rank via the stable/unstable
singular-value split.  The best-validation iterate is returned since the
LASSO microsteps make the error sequences non-monotonic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bases import UnivariateBasis, diag_sup_gramian, gramian_orthonormalize, h1_gramian
from .sparse_solver import (LassoProblem, cv_select_lambda, debias_on_support,
                            fold_indices, lasso_solve)
from .tensor_core import TensorTrain, canonicalize, tt_evaluate_batch, tt_random

RIDGE_RTOL = 1e-12      # relative ridge added to rank-deficient LS microsteps
EIG_FLOOR = 1e-12       # eigenvalue floor before taking square roots
UNSTABLE_MAGNITUDE = 1e-3  # size of injected singular values, relative to
                           # the smallest stable one

ALGORITHMS = ("als", "als_l2", "rals", "r2als")


class RecoveryError(RuntimeError):
    pass


@dataclass(frozen=True)
class SampleSet:
    """Point samples of the target function with optional partitions."""

    points: np.ndarray            # (n, M)
    values: np.ndarray            # (n,)
    weights: np.ndarray = None    # (n,) nonnegative, default 1
    train_idx: np.ndarray = None
    val_idx: np.ndarray = None
    test_idx: np.ndarray = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        n = pts.shape[0]
        if vals.shape != (n,):
            raise RecoveryError("values length does not match points")
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (n,) or np.any(w < 0):
            raise RecoveryError("weights must be nonnegative and match points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def order(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RecoveryConfig:
    algorithm: str = "r2als"
    max_rank: int = 8
    initial_rank: int = 1
    max_sweeps: int = 50
    stop_tol: float = 1e-4        # relative validation improvement that resets patience
    patience: int = 5
    theta: float = 0.05           # stable/unstable singular-value threshold
    buffer: int = 1               # size of the unstable group
    seed: int = 0
    cv_folds: int = 10
    lambda_grid_decades: float = 4.0
    lambda_grid_points: int = 25
    validation_fraction: float = 0.2
    gramian: str = "diag_sup"     # diag_sup | h1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise RecoveryError(f"unknown algorithm {self.algorithm!r}")
        if self.max_rank < 1 or self.initial_rank < 1:
            raise RecoveryError("ranks must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise RecoveryError("theta must lie in (0, 1)")
        if self.buffer < 0:
            raise RecoveryError("buffer must be >= 0")


@dataclass
class RecoveryReport:
    tt: TensorTrain
    basis: UnivariateBasis        # working basis (transformed for r2als)
    train_errors: list
    val_errors: list
    rank_history: list            # ranks after every sweep
    lambdas: list                 # chosen penalty per microstep, per sweep
    best_sweep: int
    test_error: float = None
    underdetermined: list = field(default_factory=list)
    aborted: str = None

    def predict(self, points) -> np.ndarray:
        return predict(self.tt, self.basis, points)


def predict(tt: TensorTrain, basis: UnivariateBasis, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    B = [basis.evaluate(pts[:, m]) for m in range(tt.order)]
    return tt_evaluate_batch(tt, B)


def relative_error(pred, values, weights=None) -> float:
    """Relative weighted empirical L2 error."""
    pred = np.asarray(pred, float)
    values = np.asarray(values, float)
    w = np.ones_like(values) if weights is None else np.asarray(weights, float)
    num = float(w @ (pred - values) ** 2)
    den = float(w @ values**2)
    if den == 0.0:
        return float(np.sqrt(num))
    return float(np.sqrt(num / den))


# ---------------------------------------------------------------------------
# microsteps (design matrices are assembled by the sweep engine or via
# tensor_core.design_matrix)


def microstep_ls(A: np.ndarray, u: np.ndarray):
    """Least-squares microstep via QR; rank-deficient systems get a 1e-12
    relative ridge, underdetermined ones the minimum-norm solution.

    Returns ``(v, underdetermined)``.
    """
    n, p = A.shape
    if n < p:
        v, *_ = np.linalg.lstsq(A, u, rcond=None)
        return v, True
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min(initial=0.0) > 1e-12 * max(diag.max(initial=0.0), 1e-300):
        from scipy.linalg import solve_triangular
        return solve_triangular(R, Q.T @ u), False
    G = A.T @ A
    ridge = RIDGE_RTOL * max(float(np.diag(G).max()), 1.0)
    return np.linalg.solve(G + ridge * np.eye(p), A.T @ u), False


def _ridge_path(e, Vtb, lams):
    # eigen-decomposed ridge solutions for all penalties at once
    return Vtb[None, :] / (e[None, :] + lams[:, None])


def microstep_l2(A: np.ndarray, u: np.ndarray, folds: int = 10, seed: int = 0,
                 decades: float = 4.0, points: int = 25):
    """Ridge microstep with the penalty chosen by k-fold cross-validation.

    Returns ``(v, lam)``; ties at the CV minimum go to the largest penalty.
    """
    A = np.asarray(A, float)
    u = np.asarray(u, float)
    p = A.shape[1]
    lam_max = 2.0 * float(np.abs(A.T @ u).max(initial=0.0))
    if lam_max == 0.0:
        return np.zeros(p), 0.0
    # unpenalized fit appended so noiseless in-class data can win exactly
    lams = np.append(np.geomspace(lam_max, lam_max * 10.0 ** (-decades), points), 0.0)
    idx = fold_indices(A.shape[0], folds, seed)
    errors = np.zeros((len(lams), folds))
    for f, hold in enumerate(idx):
        mask = np.ones(A.shape[0], dtype=bool)
        mask[hold] = False
        At, ut = A[mask], u[mask]
        e, V = np.linalg.eigh(At.T @ At)
        e = np.maximum(e, 0.0)
        coeffs = _ridge_path(e, V.T @ (At.T @ ut), lams[:-1]) @ V.T  # (points, p)
        ls = np.linalg.lstsq(At, ut, rcond=None)[0]
        coeffs = np.vstack([coeffs, ls])
        resid = u[hold][None, :] - coeffs @ A[hold].T
        errors[:, f] = np.einsum("li,li->l", resid, resid) / len(hold)
    mean_errors = errors.mean(axis=1)
    lam = float(lams[np.argmax(mean_errors <= mean_errors.min())])
    if lam == 0.0:
        return np.linalg.lstsq(A, u, rcond=None)[0], 0.0
    e, V = np.linalg.eigh(A.T @ A)
    e = np.maximum(e, 0.0)
    v = V @ (V.T @ (A.T @ u) / (e + lam))
    return v, lam


def local_gramian(tt: TensorTrain, m: int, gramians) -> np.ndarray:
    """Gramian of the local model space, ``H = Vhat_m^T (g1 (x) ... (x) gM) Vhat_m``.

    Assembled by sweeping the univariate Gramians through the orthogonalized
    interface chains; each push is rescaled with the log-scale tracked to
    dodge floating-point under- and overflow.
    """
    if not tt.is_canonical_at(m):
        raise RecoveryError(f"train is not canonical at mode {m}")
    if len(gramians) != tt.order:
        raise RecoveryError("need one univariate gramian per mode")
    log_scale = 0.0
    Lg = np.ones((1, 1))
    for k in range(m):
        C = tt.components[k]
        Lg = np.einsum("lk,ler,ef,kfs->rs", Lg, C, np.asarray(gramians[k], float), C)
        mx = float(np.abs(Lg).max())
        if mx == 0.0:
            raise RecoveryError("left interface Gramian vanished")
        Lg /= mx
        log_scale += np.log(mx)
    Rg = np.ones((1, 1))
    for k in range(tt.order - 1, m, -1):
        C = tt.components[k]
        Rg = np.einsum("ler,ef,kfs,rs->lk", C, np.asarray(gramians[k], float), C, Rg)
        mx = float(np.abs(Rg).max())
        if mx == 0.0:
            raise RecoveryError("right interface Gramian vanished")
        Rg /= mx
        log_scale += np.log(mx)
    factor = np.exp(log_scale)
    if not np.isfinite(factor):
        raise RecoveryError(f"local Gramian scale overflows (log-scale {log_scale:.1f})")
    H = np.kron(Lg, np.kron(np.asarray(gramians[m], float), Rg)) * factor
    return 0.5 * (H + H.T)


def microstep_rals(A: np.ndarray, u: np.ndarray, H: np.ndarray, folds: int = 10,
                   seed: int = 0, decades: float = 4.0, points: int = 25):
    """Variation-restricted microstep: weighted LASSO via the local Gramian.

    Rotates into the eigenbasis of ``H`` (ascending eigenvalues), weights by
    sqrt of the (floored) eigenvalues, solves a standard cross-validated
    LASSO, debiases by least squares on the selected support, and rotates
    back.  Returns ``(v, lam)``.
    """
    s, Q = np.linalg.eigh(np.asarray(H, float))
    s = np.maximum(s, EIG_FLOOR)
    W = Q / np.sqrt(s)            # combination "rotate, then unweight"
    At = A @ W
    cv = cv_select_lambda(At, u, np.ones(At.shape[1]), folds=folds, seed=seed,
                          decades=decades, points=points, refit=True)
    U = lasso_solve(LassoProblem(At, u, np.ones(At.shape[1]), cv.chosen))
    U = debias_on_support(At, u, U)
    return W @ U, cv.chosen


def microstep_r2als(A: np.ndarray, u: np.ndarray, folds: int = 10, seed: int = 0,
                    decades: float = 4.0, points: int = 25):
    """Plain cross-validated LASSO on the raw local coordinates (the basis
    is assumed Gramian-orthonormalized upfront), debiased by least squares
    on the selected support.  Returns ``(v, lam)``."""
    omega = np.ones(A.shape[1])
    cv = cv_select_lambda(A, u, omega, folds=folds, seed=seed,
                          decades=decades, points=points, refit=True)
    v = lasso_solve(LassoProblem(A, u, omega, cv.chosen))
    v = debias_on_support(A, u, v)
    return v, cv.chosen


# ---------------------------------------------------------------------------
# rank adaptation


def rank_adapt(tt: TensorTrain, m: int, theta: float, buffer: int,
               max_rank: int = None, rng=None) -> TensorTrain:
    """Adapt the bond rank right of mode ``m`` by the stable/unstable split.

    The core is left-orthogonalized by SVD; singular values at least
    ``theta`` times the largest are stable.  The unstable group is resized
    to exactly ``buffer`` members, dropping the smallest values or injecting
    random directions of magnitude 1e-3 times the smallest stable value.
    The new rank is capped by ``max_rank`` and the dimension bound; the core
    moves to mode ``m + 1``.
    """
    if m >= tt.order - 1:
        raise RecoveryError("no bond to adapt right of the last mode")
    if not tt.is_canonical_at(m):
        raise RecoveryError(f"train is not canonical at mode {m}")
    rng = np.random.default_rng() if rng is None else rng
    comps = [np.array(c) for c in tt.components]
    rl, d, rm = comps[m].shape
    U, s, Vt = np.linalg.svd(comps[m].reshape(rl * d, rm), full_matrices=False)
    k = s.size
    if s[0] > 0:
        stable = int(np.count_nonzero(s >= theta * s[0]))
        inject = UNSTABLE_MAGNITUDE * float(s[:stable].min())
    else:
        stable, inject = 1, 0.0
    nxt = comps[m + 1]
    dim_cap = min(rl * d, nxt.shape[1] * nxt.shape[2])
    target = stable + buffer
    if max_rank is not None:
        target = min(target, max_rank)
    target = max(1, min(target, dim_cap))
    carry = (s[:, None] * Vt) @ nxt.reshape(rm, -1)
    if target <= k:
        U = U[:, :target]
        carry = carry[:target]
    else:
        extra = target - k
        cols = np.empty((rl * d, extra))
        for j in range(extra):
            v = rng.standard_normal(rl * d)
            for _ in range(2):  # twice for numerical orthogonality
                v -= U @ (U.T @ v)
                if j:
                    v -= cols[:, :j] @ (cols[:, :j].T @ v)
                v /= np.linalg.norm(v)
            cols[:, j] = v
        U = np.hstack([U, cols])
        rows = rng.standard_normal((extra, carry.shape[1]))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        carry = np.vstack([carry, inject * rows])
    comps[m] = U.reshape(rl, d, target)
    comps[m + 1] = carry.reshape(target, nxt.shape[1], nxt.shape[2])
    return TensorTrain(tuple(comps), lorth=m + 1, rorth=m + 2)


# ---------------------------------------------------------------------------
# full recovery loop


def _select_gramian(basis: UnivariateBasis, name: str):
    if name == "diag_sup":
        if basis.sup_norms is None:
            # infinite sup-norms (Gaussian measure): fall back to the
            # Sobolev-style Gramian
            return h1_gramian(basis)
        return diag_sup_gramian(basis)
    if name == "h1":
        return h1_gramian(basis)
    raise RecoveryError(f"unknown gramian {name!r}")


def _initial_tt(dims, ranks, rng, scale: float) -> TensorTrain:
    """Seeded start iterate: the constant function at the data scale plus a
    one-percent random kick per component.

    A fully random rank-1 product concentrates its mass on a vanishing
    corner of the sample set once the order is large, and sweeps diverge
    from it; centering the start at the empirical mean keeps every
    microstep well-posed while the kick breaks the degeneracy.  Components
    remain unit-norm up to the kick.
    """
    tt = tt_random(dims, ranks, rng)
    comps = []
    for m, c in enumerate(tt.components):
        base = np.zeros_like(c)
        base[0, 0, 0] = 1.0
        comps.append(base + 0.01 * np.asarray(c))
    comps[0] = comps[0] * scale
    return TensorTrain(tuple(comps))


def _split_samples(samples: SampleSet, fraction: float, seed: int):
    if samples.train_idx is not None and samples.val_idx is not None:
        return np.asarray(samples.train_idx), np.asarray(samples.val_idx)
    n = samples.size
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n))) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def recover(samples: SampleSet, config: RecoveryConfig,
            basis: UnivariateBasis) -> RecoveryReport:
    """Run the configured sweep algorithm and return the best-validation
    iterate with per-sweep diagnostics."""
    if samples.size == 0:
        raise RecoveryError("no samples")
    M = samples.order
    n = samples.size
    rng = np.random.default_rng(config.seed)

    work_basis = basis
    gramians = None
    if config.algorithm == "r2als":
        work_basis, _ = gramian_orthonormalize(basis, _select_gramian(basis, config.gramian))
    elif config.algorithm == "rals":
        g = _select_gramian(basis, config.gramian)
        gramians = [g.matrix] * M

    train_idx, val_idx = _split_samples(samples, config.validation_fraction, config.seed)
    B = [work_basis.evaluate(samples.points[:, m]) for m in range(M)]
    sw = np.sqrt(samples.weights)
    target = sw * samples.values
    d = work_basis.dimension

    scale = float(np.mean(samples.values[train_idx])) if len(train_idx) else 1.0
    if scale == 0.0:
        rms = float(np.sqrt(np.mean(samples.values[train_idx] ** 2)))
        scale = rms if rms > 0 else 1.0
    tt = _initial_tt((d,) * M, (config.initial_rank,) * max(M - 1, 0), rng, scale)

    report = RecoveryReport(tt=tt, basis=work_basis, train_errors=[], val_errors=[],
                            rank_history=[], lambdas=[], best_sweep=-1)
    best_err = np.inf
    marker_err = np.inf
    stall = 0

    for sweep in range(config.max_sweeps):
        try:
            tt = canonicalize(tt, 0)
            RS = [None] * (M + 1)
            RS[M] = np.ones((n, 1))
            for k in range(M - 1, 0, -1):
                RS[k] = np.einsum("ler,ne,nr->nl", tt.components[k], B[k], RS[k + 1])
            L = np.ones((n, 1))
            lam_sweep = []
            for m in range(M):
                A_all = np.einsum("nl,ne,nr->nler", L, B[m], RS[m + 1]).reshape(n, -1)
                A_all *= sw[:, None]
                A = A_all[train_idx]
                u = target[train_idx]
                if len(train_idx) < A.shape[1]:
                    report.underdetermined.append((sweep, m))
                if config.algorithm == "als":
                    v, _ = microstep_ls(A, u)
                    lam_sweep.append(0.0)
                elif config.algorithm == "als_l2":
                    v, lam = microstep_l2(A, u, config.cv_folds, config.seed,
                                          config.lambda_grid_decades,
                                          config.lambda_grid_points)
                    lam_sweep.append(lam)
                elif config.algorithm == "rals":
                    H = local_gramian(tt, m, gramians)
                    v, lam = microstep_rals(A, u, H, config.cv_folds, config.seed,
                                            config.lambda_grid_decades,
                                            config.lambda_grid_points)
                    lam_sweep.append(lam)
                else:
                    v, lam = microstep_r2als(A, u, config.cv_folds, config.seed,
                                             config.lambda_grid_decades,
                                             config.lambda_grid_points)
                    lam_sweep.append(lam)
                shape = (tt.components[m].shape[0], d, tt.components[m].shape[2])
                tt = tt.with_component(m, v.reshape(shape))
                if m < M - 1:
                    tt = rank_adapt(tt, m, config.theta, config.buffer,
                                    config.max_rank, rng)
                    L = np.einsum("nl,ler,ne->nr", L, tt.components[m], B[m])
        except (RecoveryError, np.linalg.LinAlgError) as exc:
            report.aborted = f"sweep {sweep}: {exc}"
            break

        pred = tt_evaluate_batch(tt, B)
        err_train = relative_error(pred[train_idx], samples.values[train_idx],
                                   samples.weights[train_idx])
        err_val = relative_error(pred[val_idx], samples.values[val_idx],
                                 samples.weights[val_idx]) if len(val_idx) else err_train
        report.train_errors.append(err_train)
        report.val_errors.append(err_val)
        report.rank_history.append(tt.ranks)
        report.lambdas.append(lam_sweep)

        if err_val < best_err:
            best_err = err_val
            report.tt = tt
            report.best_sweep = sweep
        if err_val <= marker_err * (1.0 - config.stop_tol):
            marker_err = err_val
            stall = 0
        else:
            stall += 1
        if stall >= config.patience:
            break

    if samples.test_idx is not None and report.best_sweep >= 0:
        idx = np.asarray(samples.test_idx)
        pred = predict(report.tt, work_basis, samples.points[idx])
        report.test_error = relative_error(pred, samples.values[idx],
                                           samples.weights[idx])
    return report
