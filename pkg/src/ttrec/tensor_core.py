"""Tensor trains: decomposition, orthogonalization, and sample-wise contractions.

A tensor train (TT) stores an order-M coefficient tensor as a chain of order-3
components ``V_m`` of shape ``(r_{m-1}, n_m, r_m)`` with boundary ranks
``r_0 = r_M = 1``.  All multi-index linearizations are row-major (C order),
which fixes the index bijection used by :func:`design_matrix` and
:func:`save_tt`.

Instances of :class:`TensorTrain` are immutable: component arrays are copied
on construction and marked read-only, so values can be shared freely across
threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DENSIFY_CAP = 10**7
EXACT_RANK_RTOL = 1e-14  # singular values below this (relative) count as zero


class TensorTrainError(ValueError):
    pass


@dataclass(frozen=True)
class TensorTrain:
    """Chain of order-3 components with orthogonality bookkeeping.

    ``lorth`` counts the leading components known to be left-orthogonal
    (``components[:lorth]``), ``rorth`` is the first index from which all
    components are known right-orthogonal (``components[rorth:]``).  A train
    in canonical form with core at mode ``m`` has ``lorth >= m`` and
    ``rorth <= m + 1``.
    """

    components: tuple
    lorth: int = 0
    rorth: int = field(default=-1)

    def __post_init__(self):
        comps = []
        for c in self.components:
            c = np.ascontiguousarray(np.asarray(c, dtype=float))
            if c.ndim != 3:
                raise TensorTrainError(f"component has order {c.ndim}, expected 3")
            c.flags.writeable = False
            comps.append(c)
        if not comps:
            raise TensorTrainError("empty tensor train")
        if comps[0].shape[0] != 1 or comps[-1].shape[2] != 1:
            raise TensorTrainError("boundary ranks must be 1")
        for left, right in zip(comps[:-1], comps[1:]):
            if left.shape[2] != right.shape[0]:
                raise TensorTrainError(
                    f"rank mismatch: {left.shape} -> {right.shape}")
        object.__setattr__(self, "components", tuple(comps))
        if self.rorth == -1:
            object.__setattr__(self, "rorth", len(comps))
        if not (0 <= self.lorth <= len(comps)) or not (0 <= self.rorth <= len(comps)):
            raise TensorTrainError("orthogonality markers out of range")

    @property
    def order(self) -> int:
        return len(self.components)

    @property
    def dims(self) -> tuple:
        return tuple(c.shape[1] for c in self.components)

    @property
    def ranks(self) -> tuple:
        """Representation ranks ``(r_1, ..., r_{M-1})``."""
        return tuple(c.shape[2] for c in self.components[:-1])

    def norm(self) -> float:
        """Frobenius norm of the represented tensor."""
        # gram of the chain, independent of orthogonality state
        g = np.ones((1, 1))
        for c in self.components:
            g = np.einsum("lk,ler,kes->rs", g, c, c)
        return float(np.sqrt(max(g[0, 0], 0.0)))

    def with_component(self, m: int, comp: np.ndarray) -> "TensorTrain":
        comp = np.asarray(comp, dtype=float)
        comps = list(self.components)
        comps[m] = comp
        # replacing a component invalidates orthogonality through mode m
        return TensorTrain(tuple(comps), lorth=min(self.lorth, m),
                           rorth=max(self.rorth, m + 1))

    def is_canonical_at(self, m: int) -> bool:
        return self.lorth >= m and self.rorth <= m + 1


def tt_random(dims, ranks, rng, normalize: bool = True) -> TensorTrain:
    """Random TT with prescribed representation ranks; components unit-norm."""
    dims = tuple(int(n) for n in dims)
    full = (1,) + tuple(int(r) for r in ranks) + (1,)
    comps = []
    for m, n in enumerate(dims):
        c = rng.standard_normal((full[m], n, full[m + 1]))
        if normalize:
            c /= np.linalg.norm(c)
        comps.append(c)
    return TensorTrain(tuple(comps))


def _rank_from_tail(s: np.ndarray, tol_abs: float, max_rank=None) -> int:
    if s.size == 0:
        return 1
    keep = s > EXACT_RANK_RTOL * s[0]
    r = max(int(np.count_nonzero(keep)), 1)
    if tol_abs > 0:
        tail = np.sqrt(np.cumsum(s[::-1] ** 2))[::-1]  # tail[i] = ||s[i:]||
        fits = np.nonzero(tail <= tol_abs)[0]
        if fits.size:
            r = min(r, max(int(fits[0]), 1))
    if max_rank is not None:
        r = min(r, int(max_rank))
    return r


def tt_svd(t: np.ndarray, max_rank=None, tol: float = 0.0) -> TensorTrain:
    """Decompose a dense tensor by successive thin SVDs.

    The result reconstructs ``t`` with relative Frobenius error at most
    ``tol`` (when ``max_rank`` is not binding) and is left-orthogonal up to
    the last component.  Singular values below ``1e-14`` relative are always
    dropped.  An all-zero tensor yields the rank-one zero train.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim < 1 or t.size == 0:
        raise TensorTrainError("tt_svd needs a nonempty tensor with dims >= 1")
    if max_rank is not None and max_rank < 1:
        raise TensorTrainError("max_rank must be >= 1")
    if tol < 0:
        raise TensorTrainError("tol must be nonnegative")
    dims = t.shape
    M = t.ndim
    norm = float(np.linalg.norm(t))
    if norm == 0.0:
        comps = [np.zeros((1, n, 1)) for n in dims]
        return TensorTrain(tuple(comps), lorth=M - 1)
    tol_abs = tol * norm / np.sqrt(max(M - 1, 1))
    comps = []
    carry = t.reshape(1, -1)
    r_prev = 1
    for k in range(M - 1):
        mat = carry.reshape(r_prev * dims[k], -1)
        U, s, Vt = np.linalg.svd(mat, full_matrices=False)
        r = _rank_from_tail(s, tol_abs, max_rank)
        comps.append(U[:, :r].reshape(r_prev, dims[k], r))
        carry = s[:r, None] * Vt[:r]
        r_prev = r
    comps.append(carry.reshape(r_prev, dims[-1], 1))
    return TensorTrain(tuple(comps), lorth=M - 1)


def tt_to_dense(tt: TensorTrain, cap: int = DENSIFY_CAP) -> np.ndarray:
    """Contract the chain into a dense array (row-major multi-index order)."""
    total = int(np.prod(tt.dims, dtype=np.int64))
    if total > cap:
        raise TensorTrainError(f"dense tensor would have {total} entries (cap {cap})")
    arr = tt.components[0].reshape(tt.dims[0], -1)
    for c in tt.components[1:]:
        r = c.shape[0]
        arr = arr.reshape(-1, r) @ c.reshape(r, -1)
    return arr.reshape(tt.dims)


def left_orthogonalize(tt: TensorTrain) -> TensorTrain:
    """Push the non-orthogonal factor to the last component via thin QR."""
    comps = [np.array(c) for c in tt.components]
    M = len(comps)
    for k in range(M - 1):
        rl, n, rr = comps[k].shape
        Q, R = np.linalg.qr(comps[k].reshape(rl * n, rr))
        comps[k] = Q.reshape(rl, n, Q.shape[1])
        comps[k + 1] = np.tensordot(R, comps[k + 1], axes=(1, 0))
    return TensorTrain(tuple(comps), lorth=M - 1, rorth=M)


def right_orthogonalize(tt: TensorTrain) -> TensorTrain:
    """Push the non-orthogonal factor to the first component via thin QR."""
    comps = [np.array(c) for c in tt.components]
    M = len(comps)
    for k in range(M - 1, 0, -1):
        rl, n, rr = comps[k].shape
        Q, R = np.linalg.qr(comps[k].reshape(rl, n * rr).T)
        comps[k] = Q.T.reshape(Q.shape[1], n, rr)
        comps[k - 1] = np.tensordot(comps[k - 1], R.T, axes=(2, 0))
    return TensorTrain(tuple(comps), lorth=0, rorth=1)


def canonicalize(tt: TensorTrain, m: int) -> TensorTrain:
    """Return the train in canonical form with core at mode ``m``."""
    if not 0 <= m < tt.order:
        raise TensorTrainError(f"mode {m} out of range for order {tt.order}")
    tt = right_orthogonalize(tt)
    comps = [np.array(c) for c in tt.components]
    for k in range(m):
        rl, n, rr = comps[k].shape
        Q, R = np.linalg.qr(comps[k].reshape(rl * n, rr))
        comps[k] = Q.reshape(rl, n, Q.shape[1])
        comps[k + 1] = np.tensordot(R, comps[k + 1], axes=(1, 0))
    return TensorTrain(tuple(comps), lorth=m, rorth=m + 1)


def tt_rank(tt: TensorTrain) -> tuple:
    """Minimal ranks after exact truncation (relative threshold 1e-14).

    The zero tensor reports all ranks 1 by convention.
    """
    M = tt.order
    if M == 1:
        return ()
    if tt.norm() == 0.0:
        return (1,) * (M - 1)
    work = left_orthogonalize(tt)
    comps = [np.array(c) for c in work.components]
    ranks = []
    for k in range(M - 1, 0, -1):
        rl, n, rr = comps[k].shape
        U, s, Vt = np.linalg.svd(comps[k].reshape(rl, n * rr), full_matrices=False)
        r = max(int(np.count_nonzero(s > EXACT_RANK_RTOL * s[0])), 1)
        ranks.append(r)
        comps[k] = Vt[:r].reshape(r, n, rr)
        comps[k - 1] = np.tensordot(comps[k - 1], U[:, :r] * s[:r], axes=(2, 0))
    return tuple(reversed(ranks))


def insert_gauge(tt: TensorTrain, m: int, A: np.ndarray) -> TensorTrain:
    """Insert ``(A, A^{-1})`` between components ``m`` and ``m+1``.

    Leaves the represented tensor unchanged (representation non-uniqueness).
    """
    A = np.asarray(A, dtype=float)
    comps = [np.array(c) for c in tt.components]
    comps[m] = np.tensordot(comps[m], A, axes=(2, 0))
    comps[m + 1] = np.tensordot(np.linalg.inv(A), comps[m + 1], axes=(1, 0))
    return TensorTrain(tuple(comps))


# ---------------------------------------------------------------------------
# fixed-interface operator and sample-wise contractions


@dataclass(frozen=True)
class InterfaceStacks:
    """Left/right component chains around a fixed mode.

    Together these realize the isometric embedding of the mode-``m``
    component into the full coefficient space; contraction with per-sample
    basis values is deferred to :meth:`left_vectors` / :meth:`right_vectors`.
    """

    mode: int
    left: tuple   # components 0..m-1, left-orthogonal
    right: tuple  # components m+1..M-1, right-orthogonal
    dims: tuple   # (r_{m-1}, n_m, r_m)

    def left_vectors(self, basis_values) -> np.ndarray:
        """Contract left components with basis values; shape (n, r_{m-1})."""
        n = len(basis_values[0]) if self.mode > 0 else _n_samples(basis_values)
        L = np.ones((n, 1))
        for k, comp in enumerate(self.left):
            L = np.einsum("nl,ler,ne->nr", L, comp, basis_values[k])
        return L

    def right_vectors(self, basis_values) -> np.ndarray:
        """Contract right components with basis values; shape (n, r_m)."""
        n = _n_samples(basis_values)
        R = np.ones((n, 1))
        for k in range(len(self.right) - 1, -1, -1):
            b = basis_values[self.mode + 1 + k]
            R = np.einsum("ler,ne,nr->nl", self.right[k], b, R)
        return R


def _n_samples(basis_values) -> int:
    for b in basis_values:
        return np.asarray(b).shape[0]
    raise TensorTrainError("no basis values given")


def fixed_interface(tt: TensorTrain, m: int) -> InterfaceStacks:
    """Interface stacks for a microstep on mode ``m``.

    Requires the train to be canonical at ``m``; then the embedding
    ``V_m -> full tensor`` is an isometry of Frobenius norms.
    """
    if not 0 <= m < tt.order:
        raise TensorTrainError(f"mode {m} out of range")
    if not tt.is_canonical_at(m):
        raise TensorTrainError(
            f"train is not canonical at mode {m} "
            f"(lorth={tt.lorth}, rorth={tt.rorth})")
    c = tt.components[m]
    return InterfaceStacks(mode=m, left=tt.components[:m],
                           right=tt.components[m + 1:], dims=c.shape)


def design_matrix(stacks: InterfaceStacks, basis_values, weights=None) -> np.ndarray:
    """Per-sample rows of the weighted microstep operator.

    Row i is ``sqrt(w_i) * (left_i (x) b(y^i_m) (x) right_i)`` flattened
    row-major, so that ``row @ V_m.ravel()`` equals the weighted evaluation
    of the represented function at sample i.
    """
    bm = np.asarray(basis_values[stacks.mode], dtype=float)
    n = bm.shape[0]
    if bm.shape[1] != stacks.dims[1]:
        raise TensorTrainError(
            f"basis dimension {bm.shape[1]} != mode dimension {stacks.dims[1]}")
    if any(np.asarray(b).shape[0] != n for b in basis_values):
        raise TensorTrainError("per-mode basis values disagree on the sample count")
    L = stacks.left_vectors(basis_values)
    R = stacks.right_vectors(basis_values)
    A = np.einsum("nl,ne,nr->nler", L, bm, R).reshape(n, -1)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise TensorTrainError("weights length does not match sample count")
        A = np.sqrt(w)[:, None] * A
    return A


def tt_evaluate(tt: TensorTrain, basis_values) -> float:
    """Value of the represented function for one point, given per-mode
    basis vectors ``b(y_m)``."""
    v = np.ones(1)
    for comp, b in zip(tt.components, basis_values):
        b = np.asarray(b, dtype=float)
        if b.shape != (comp.shape[1],):
            raise TensorTrainError(
                f"basis vector length {b.shape} != mode dimension {comp.shape[1]}")
        v = np.einsum("l,ler,e->r", v, comp, b)
    return float(v[0])


def tt_evaluate_batch(tt: TensorTrain, basis_values) -> np.ndarray:
    """Vectorized :func:`tt_evaluate` over per-mode arrays of shape (n, d_m)."""
    n = _n_samples(basis_values)
    L = np.ones((n, 1))
    for comp, b in zip(tt.components, basis_values):
        L = np.einsum("nl,ler,ne->nr", L, comp, np.asarray(b, dtype=float))
    return L[:, 0]


# ---------------------------------------------------------------------------
# serialization

TT_FORMAT = "ttrec-tensor-train"
TT_FORMAT_VERSION = 1


def tt_to_json(tt: TensorTrain) -> dict:
    return {
        "format": TT_FORMAT,
        "version": TT_FORMAT_VERSION,
        "dims": list(tt.dims),
        "ranks": [1, *tt.ranks, 1],
        "components": [c.ravel(order="C").tolist() for c in tt.components],
    }


def tt_from_json(doc: dict) -> TensorTrain:
    if doc.get("format") != TT_FORMAT:
        raise TensorTrainError("not a serialized tensor train")
    dims = doc["dims"]
    ranks = doc["ranks"]
    comps = []
    for m, flat in enumerate(doc["components"]):
        shape = (ranks[m], dims[m], ranks[m + 1])
        comps.append(np.asarray(flat, dtype=float).reshape(shape))
    return TensorTrain(tuple(comps))


def save_tt(tt: TensorTrain, path) -> None:
    with open(path, "w") as fh:
        json.dump(tt_to_json(tt), fh)
        fh.write("\n")


def load_tt(path) -> TensorTrain:
    with open(path) as fh:
        return tt_from_json(json.load(fh))
