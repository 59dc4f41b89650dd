"""Alternating solver for multi-view novel class discovery.

The model factorizes every view as (orthonormal basis) x (centroids) x
(one-hot assignment), shares the assignment matrix across views, and learns
a simplex-constrained weight per view. Labeled samples pull their assignment
toward the ground truth; unlabeled samples pay a penalty for landing on a
class that owns labeled samples, which keeps novel clusters away from the
known classes. Every block update below is the exact minimizer of its
subproblem given the others, so the objective never increases.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from mvncd.baselines import kmeans_fit
from mvncd.dataset import (
    DatasetError,
    MultiViewDataset,
    encode_onehot,
    normalize_features,
    unlabeled_subset,
)

RIDGE = 1e-8          # keeps centroid columns of empty classes defined
DESCENT_SLACK = 1e-9  # relative slack for monotone-descent checks


@dataclass
class SolverConfig:
    """Knobs for :func:`fit`.

    lambda1 weighs the supervision term on labeled assignments, lambda2 the
    separation reward that repels novel assignments from known classes.
    ``ablate_alpha`` freezes view weights at uniform; ``ablate_labeled``
    drops the labeled samples (and with them both lambda terms) from the
    problem. ``hard_restrict_novel`` forbids known rows for unlabeled
    samples outright instead of relying on the lambda2 penalty.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    max_iter: int = 100
    tol: float = 1e-7
    seed: int = 0
    init_y_novel: str = "kmeans"    # {"kmeans", "random"}
    normalize: str = "zscore"       # {"zscore", "l2", "none"}
    ablate_alpha: bool = False
    ablate_labeled: bool = False
    hard_restrict_novel: bool = False
    track_block_objective: bool = False

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.init_y_novel not in ("kmeans", "random"):
            raise ValueError(f"unknown init_y_novel: {self.init_y_novel!r}")
        if self.normalize not in ("zscore", "l2", "none"):
            raise ValueError(f"unknown normalize mode: {self.normalize!r}")


@dataclass
class ModelState:
    """Current iterate: per-view orthonormal bases (d_v x k), per-view
    centroids (k x k), one assignment row per sample, and view weights on
    the simplex."""

    bases: list[np.ndarray]
    centroids: list[np.ndarray]
    y: np.ndarray
    view_weights: np.ndarray

    @property
    def num_views(self) -> int:
        return len(self.bases)

    @property
    def num_classes(self) -> int:
        return int(self.bases[0].shape[1])

    def y_matrix(self) -> np.ndarray:
        return encode_onehot(self.y, self.num_classes)


@dataclass
class WorkBuffers:
    """Per-iteration quantities shared by the assignment updates.

    ``maps[v]`` is basis @ centroids for view v; ``diag`` holds the
    weight-combined squared norms of its columns and ``score`` the
    weight-combined inner products with the data. ``label_counts`` counts
    ground-truth labeled samples per one-hot row (zero on novel rows).
    """

    maps: list[np.ndarray]
    gram: list[np.ndarray]
    proj: list[np.ndarray]
    diag: np.ndarray
    score: np.ndarray
    xsq: np.ndarray
    residuals: np.ndarray
    label_counts: np.ndarray


@dataclass
class FitResult:
    novel_assignment: np.ndarray     # one-hot row id per unlabeled sample
    objective_trace: list[float]     # objective after init, then per iteration
    alpha_trace: list[np.ndarray]    # view weights along the same grid
    iterations: int
    converged: bool
    wall_time: float
    state: ModelState
    block_objective_trace: list[float] | None = None


@dataclass
class _Problem:
    """Preprocessed fitting problem in one-hot row coordinates."""

    xs: list[np.ndarray]
    labeled: np.ndarray
    unlabeled: np.ndarray
    truth_rows: np.ndarray     # ground-truth row per labeled column
    label_counts: np.ndarray
    num_classes: int
    num_known: int


def _build_problem(ds: MultiViewDataset, cfg: SolverConfig) -> _Problem:
    work = unlabeled_subset(ds) if cfg.ablate_labeled else ds
    work = normalize_features(work, cfg.normalize)
    k = work.num_classes
    for view in work.views:
        if view.dim < k:
            raise DatasetError(
                f"view {view.view_index}: {view.dim} features cannot carry an "
                f"orthonormal basis for {k} classes"
            )
    rows = work.class_rows()
    truth_rows = rows[work.labels[work.labeled_indices]]
    counts = np.bincount(truth_rows, minlength=k).astype(float)
    return _Problem(
        xs=[view.data for view in work.views],
        labeled=work.labeled_indices,
        unlabeled=work.unlabeled_indices,
        truth_rows=truth_rows,
        label_counts=counts,
        num_classes=k,
        num_known=work.num_known,
    )


def initialize(ds: MultiViewDataset, cfg: SolverConfig) -> ModelState:
    """Build the starting iterate (public wrapper around the fit path)."""
    return _initialize(_build_problem(ds, cfg), cfg)


def _initialize(prob: _Problem, cfg: SolverConfig) -> ModelState:
    rng = np.random.default_rng(cfg.seed)
    k = prob.num_classes
    num_views = len(prob.xs)

    bases = [_leading_basis(x, k, rng) for x in prob.xs]

    y = np.zeros(prob.xs[0].shape[1], dtype=int)
    y[prob.labeled] = prob.truth_rows
    n_u = prob.unlabeled.size
    if n_u:
        k_u = k - prob.num_known
        if cfg.init_y_novel == "kmeans" and n_u >= k_u:
            stacked = np.vstack([x[:, prob.unlabeled] for x in prob.xs])
            km = kmeans_fit(stacked, k_u, seed=int(rng.integers(2**32)))
            y[prob.unlabeled] = prob.num_known + km.assignment
        else:
            y[prob.unlabeled] = rng.integers(prob.num_known, k, size=n_u)

    state = ModelState(
        bases=bases,
        centroids=[np.zeros((k, k)) for _ in range(num_views)],
        y=y,
        view_weights=np.full(num_views, 1.0 / num_views),
    )
    update_centroids(state, prob.xs)
    return state


def _leading_basis(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Top-k left singular vectors, padded with a random orthonormal
    completion when the factorization yields fewer than k of them."""
    u, _, _ = np.linalg.svd(x, full_matrices=False)
    if u.shape[1] >= k:
        return u[:, :k].copy()
    extra = rng.standard_normal((x.shape[0], k - u.shape[1]))
    extra -= u @ (u.T @ extra)
    q, _ = np.linalg.qr(extra)
    return np.hstack([u, q[:, : k - u.shape[1]]])


def update_basis(state: ModelState, xs: list[np.ndarray]) -> None:
    """Per view, set the basis to the polar factor of X @ Y.T @ centroids.T
    (the orthogonal-Procrustes maximizer of the trace it pairs with)."""
    ymat = state.y_matrix()
    for v, x in enumerate(xs):
        target = x @ ymat.T @ state.centroids[v].T
        u, _, vt = np.linalg.svd(target, full_matrices=False)
        state.bases[v] = u @ vt


def update_centroids(state: ModelState, xs: list[np.ndarray],
                     ridge: float = RIDGE) -> None:
    """Per view, least-squares centroids given basis and assignment.

    Y @ Y.T is diagonal with the per-class column counts; the ridge keeps
    columns of empty classes defined (they go to ~zero).
    """
    counts = np.bincount(state.y, minlength=state.num_classes).astype(float)
    inv = 1.0 / (counts + ridge)
    ymat = state.y_matrix()
    for v, x in enumerate(xs):
        state.centroids[v] = (state.bases[v].T @ x @ ymat.T) * inv[None, :]


def make_buffers(state: ModelState, xs: list[np.ndarray],
                 label_counts: np.ndarray) -> WorkBuffers:
    """Assemble the shared per-iteration quantities for the current state."""
    w2 = state.view_weights**2
    maps = [state.bases[v] @ state.centroids[v] for v in range(state.num_views)]
    gram = [m.T @ m for m in maps]
    proj = [maps[v].T @ xs[v] for v in range(state.num_views)]
    diag = sum(w2[v] * np.diag(gram[v]) for v in range(state.num_views))
    score = sum(w2[v] * proj[v] for v in range(state.num_views))
    xsq = np.array([float(np.sum(x * x)) for x in xs])
    buffers = WorkBuffers(
        maps=maps, gram=gram, proj=proj, diag=diag, score=score, xsq=xsq,
        residuals=np.zeros(state.num_views),
        label_counts=np.asarray(label_counts, dtype=float),
    )
    buffers.residuals = compute_residuals(buffers, state.y)
    return buffers


def compute_residuals(buffers: WorkBuffers, y: np.ndarray) -> np.ndarray:
    """Per-view squared reconstruction error for assignment ``y``."""
    cols = np.arange(y.size)
    out = np.empty(len(buffers.maps))
    for v in range(len(buffers.maps)):
        fit_term = 2.0 * buffers.proj[v][y, cols].sum()
        self_term = np.diag(buffers.gram[v])[y].sum()
        out[v] = max(buffers.xsq[v] - fit_term + self_term, 0.0)
    return out


def update_labels_known(state: ModelState, buffers: WorkBuffers,
                        labeled: np.ndarray, truth_rows: np.ndarray,
                        lambda1: float) -> None:
    """Exact per-column minimizer for labeled samples: reconstruction score
    plus the supervision pull toward the ground-truth row. Ties go to the
    lowest row index (argmin semantics)."""
    if labeled.size == 0:
        return
    scores = buffers.diag[:, None] - 2.0 * buffers.score[:, labeled]
    scores[truth_rows, np.arange(labeled.size)] -= 2.0 * lambda1
    state.y[labeled] = np.argmin(scores, axis=0)


def update_labels_novel(state: ModelState, buffers: WorkBuffers,
                        unlabeled: np.ndarray, lambda2: float,
                        num_known: int = 0,
                        hard_restrict: bool = False) -> None:
    """Exact per-column minimizer for unlabeled samples: reconstruction
    score plus 2*lambda2*(labeled count of the row), the one-hot form of the
    separation reward. ``hard_restrict`` masks known rows entirely."""
    if unlabeled.size == 0:
        return
    scores = buffers.diag[:, None] - 2.0 * buffers.score[:, unlabeled]
    scores += 2.0 * lambda2 * buffers.label_counts[:, None]
    if hard_restrict:
        scores[:num_known, :] = np.inf
    state.y[unlabeled] = np.argmin(scores, axis=0)


def update_view_weights(state: ModelState, residuals: np.ndarray,
                        ablate_alpha: bool = False) -> None:
    """Closed-form simplex minimizer of sum_v weight_v^2 * residual_v:
    weights proportional to inverse residuals. Views with (numerically)
    zero residual share all the weight uniformly. No-op when ablated."""
    if ablate_alpha:
        return
    r = np.maximum(np.asarray(residuals, dtype=float), 0.0)
    zero = r <= 1e-12 * (1.0 + r.max())
    if np.any(zero):
        weights = zero / zero.sum()
    else:
        inv = 1.0 / r
        weights = inv / inv.sum()
    state.view_weights = weights


def objective_value(state: ModelState, ds: MultiViewDataset,
                    cfg: SolverConfig) -> float:
    """Full objective of ``state`` on ``ds`` under ``cfg`` (same
    preprocessing fit applies: normalization and the labeled-ablation
    restriction)."""
    return _objective(state, _build_problem(ds, cfg), cfg)


def _objective(state: ModelState, prob: _Problem, cfg: SolverConfig) -> float:
    w2 = state.view_weights**2
    total = 0.0
    for v, x in enumerate(prob.xs):
        recon = (state.bases[v] @ state.centroids[v])[:, state.y]
        diff = x - recon
        total += w2[v] * float(np.sum(diff * diff))
    mismatches = int(np.count_nonzero(state.y[prob.labeled] != prob.truth_rows))
    total += cfg.lambda1 * 2.0 * mismatches
    n_l = prob.labeled.size
    n_u = prob.unlabeled.size
    if n_l and n_u:
        u_counts = np.bincount(state.y[prob.unlabeled], minlength=prob.num_classes)
        overlap = float(prob.label_counts @ u_counts)
        total -= cfg.lambda2 * 2.0 * (n_l * n_u - overlap)
    return total


def objective_lower_bound(ds: MultiViewDataset, cfg: SolverConfig) -> float:
    """Smallest value the objective can take on ``ds``: the reconstruction
    and supervision terms are nonnegative and each one-hot pair differs by
    at most 2 in squared norm, so J >= -2 * lambda2 * n_l * n_u."""
    n_l = 0 if cfg.ablate_labeled else ds.num_labeled
    return -2.0 * cfg.lambda2 * n_l * ds.num_unlabeled


def fit(ds: MultiViewDataset, cfg: SolverConfig) -> FitResult:
    """Run the alternating optimization to convergence.

    Block order per iteration: bases, centroids, assignments (labeled then
    unlabeled columns), view weights. Stops when the relative objective
    change |J_prev - J| / (|J_prev| + 1) drops below cfg.tol.
    """
    start = time.perf_counter()
    prob = _build_problem(ds, cfg)
    state = _initialize(prob, cfg)

    trace = [_objective(state, prob, cfg)]
    alphas = [state.view_weights.copy()]
    block_trace: list[float] | None = [] if cfg.track_block_objective else None
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        update_basis(state, prob.xs)
        if block_trace is not None:
            block_trace.append(_objective(state, prob, cfg))
        update_centroids(state, prob.xs)
        if block_trace is not None:
            block_trace.append(_objective(state, prob, cfg))
        buffers = make_buffers(state, prob.xs, prob.label_counts)
        update_labels_known(state, buffers, prob.labeled, prob.truth_rows,
                            cfg.lambda1)
        update_labels_novel(state, buffers, prob.unlabeled, cfg.lambda2,
                            num_known=prob.num_known,
                            hard_restrict=cfg.hard_restrict_novel)
        if block_trace is not None:
            block_trace.append(_objective(state, prob, cfg))
        residuals = compute_residuals(buffers, state.y)
        update_view_weights(state, residuals, cfg.ablate_alpha)
        current = _objective(state, prob, cfg)
        if block_trace is not None:
            block_trace.append(current)
        trace.append(current)
        alphas.append(state.view_weights.copy())
        previous = trace[-2]
        if abs(previous - current) / (abs(previous) + 1.0) < cfg.tol:
            converged = True
            break

    return FitResult(
        novel_assignment=state.y[prob.unlabeled].copy(),
        objective_trace=trace,
        alpha_trace=alphas,
        iterations=iterations,
        converged=converged,
        wall_time=time.perf_counter() - start,
        state=state,
        block_objective_trace=block_trace,
    )


def is_monotone(trace: list[float], slack: float = DESCENT_SLACK) -> bool:
    """True when the trace never increases beyond the relative slack."""
    return all(
        trace[i + 1] <= trace[i] + slack * (abs(trace[i]) + 1.0)
        for i in range(len(trace) - 1)
    )


def validate_state(state: ModelState, atol_basis: float = 1e-8,
                   atol_simplex: float = 1e-10) -> None:
    """Raise ValueError when a structural invariant is broken: orthonormal
    bases, one-hot assignments in range, view weights on the simplex."""
    k = state.num_classes
    for v, basis in enumerate(state.bases):
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(k))) > atol_basis:
            raise ValueError(f"view {v}: basis columns are not orthonormal")
        if state.centroids[v].shape != (k, k):
            raise ValueError(f"view {v}: centroids must be {k} x {k}")
    if state.y.min() < 0 or state.y.max() >= k:
        raise ValueError("assignment rows out of range")
    w = state.view_weights
    if w.min() < 0 or abs(float(w.sum()) - 1.0) > atol_simplex:
        raise ValueError("view weights are not on the simplex")
