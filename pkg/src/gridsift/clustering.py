"""Event clustering on a pairwise distance matrix.

The objective is the total within-cluster distance

    sum_c sum_{i in c} sum_{j in c} d_ij

summed over ordered pairs (the diagonal is zero), which is the direct
quadratic form of the assignment problem; its standard linearization
replaces each u_ic * u_jc product with an auxiliary variable t_ijc.
`solve_exact` explores assignments with branch and bound and is equivalent
to solving the linearized program to optimality; `solve_heuristic` is a
medoid-seeded local search for instance sizes past `exact_cap`.

Distances must be non-negative (accumulated partial cost is then a valid
lower bound).  Clusters are numbered in first-use order over events in
index order, so solutions are canonical and reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

EXACT_CAP_DEFAULT = 15
C_MAX_DEFAULT = 8
S_MIN_DEFAULT = 0.25


class EmptyClusterError(ValueError):
    """Raised when an operation requires every cluster to have members."""


@dataclass
class Assignment:
    """A clustering of n events into at most n_clusters groups."""

    labels: np.ndarray          # (n,) int cluster ids, first-use numbering
    n_clusters: int             # requested cluster budget
    objective: float            # ordered-pair within-cluster distance

    @property
    def n_used(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def members(self, c: int) -> np.ndarray:
        return np.nonzero(self.labels == c)[0]

    def to_indicator(self) -> np.ndarray:
        """Binary membership matrix u with shape (n, n_clusters)."""
        u = np.zeros((len(self.labels), self.n_clusters), dtype=np.float64)
        u[np.arange(len(self.labels)), self.labels] = 1.0
        return u


def _check_distance_matrix(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"distance matrix must be square, got {D.shape}")
    if np.any(D < 0):
        raise ValueError("distance matrix entries must be non-negative")
    return D


def clustering_objective(D: np.ndarray, labels: np.ndarray) -> float:
    """Ordered-pair within-cluster distance of an assignment."""
    D = np.asarray(D, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        total += float(D[np.ix_(idx, idx)].sum())
    return total


def solve_exact(D: np.ndarray, n_clusters: int) -> Assignment:
    """Optimal assignment by depth-first branch and bound.

    Events are placed in index order; a new cluster label may only be
    opened when all lower labels are in use (symmetry breaking).  The
    accumulated within-cluster cost of placed events is a lower bound,
    so branches at or above the incumbent are pruned; because label
    values are tried in increasing order and ties never replace the
    incumbent, the returned optimum is the lexicographically smallest
    label sequence among optima.
    """
    D = _check_distance_matrix(D)
    n = D.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n == 0:
        return Assignment(labels=np.empty(0, dtype=np.int64), n_clusters=n_clusters,
                          objective=0.0)

    labels = np.full(n, -1, dtype=np.int64)
    members: list[list[int]] = [[] for _ in range(n_clusters)]
    best_obj = np.inf
    best_labels = None

    def dfs(i: int, n_open: int, acc: float) -> None:
        nonlocal best_obj, best_labels
        if acc >= best_obj:
            return
        if i == n:
            best_obj = acc
            best_labels = labels.copy()
            return
        row = D[i]
        top = min(n_open, n_clusters - 1)
        for c in range(top + 1):
            add = 2.0 * sum(row[j] for j in members[c])
            if acc + add >= best_obj:
                continue
            labels[i] = c
            members[c].append(i)
            dfs(i + 1, max(n_open, c + 1), acc + add)
            members[c].pop()
            labels[i] = -1

    dfs(0, 0, 0.0)
    # report the canonical objective of the winning labels, not the DFS
    # accumulator: summation order must match clustering_objective exactly
    return Assignment(labels=best_labels, n_clusters=n_clusters,
                      objective=clustering_objective(D, best_labels))


def _medoid_seeds(D: np.ndarray, k: int, first: int) -> list[int]:
    """Seed from `first`, then max-min spread; ties to the lowest index."""
    n = D.shape[0]
    seeds = [first]
    while len(seeds) < min(k, n):
        dist_to_seed = np.min(D[:, seeds], axis=1)
        dist_to_seed[seeds] = -1.0
        seeds.append(int(np.argmax(dist_to_seed)))
    return seeds


def _local_search(D: np.ndarray, labels: np.ndarray, n_clusters: int,
                  max_sweeps: int) -> np.ndarray:
    """First-improvement single-event relabel moves, swept in index order
    until no move improves the objective."""
    n = D.shape[0]
    # cost_to[c, i] = sum of distances from i to current members of c
    cost_to = np.zeros((n_clusters, n), dtype=np.float64)
    for c in range(n_clusters):
        cost_to[c] = D[labels == c].sum(axis=0)

    for _ in range(max_sweeps):
        improved = False
        for i in range(n):
            cur = labels[i]
            own = cost_to[cur, i] - D[i, i]
            deltas = 2.0 * (cost_to[:, i] - own)
            deltas[cur] = 0.0
            target = -1
            for c in range(n_clusters):
                if deltas[c] < -1e-12:
                    target = c
                    break
            if target >= 0:
                labels[i] = target
                cost_to[cur] -= D[i]
                cost_to[target] += D[i]
                improved = True
        if not improved:
            break
    return labels


def solve_heuristic(D: np.ndarray, n_clusters: int, max_sweeps: int = 200,
                    n_starts: int = 5) -> Assignment:
    """Deterministic local search: medoid seeding, then first-improvement
    single-event relabel moves.

    Several deterministic seedings are tried (the global medoid plus the
    next-most-central events as alternative first seeds) and the best
    local optimum wins; ties keep the earlier start, so results depend
    only on the distance matrix.
    """
    D = _check_distance_matrix(D)
    n = D.shape[0]
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    if n == 0:
        return Assignment(labels=np.empty(0, dtype=np.int64), n_clusters=n_clusters,
                          objective=0.0)
    k = min(n_clusters, n)
    centrality_order = np.argsort(D.sum(axis=0), kind="stable")
    best_labels = None
    best_obj = np.inf
    for first in centrality_order[: min(n_starts, n)]:
        seeds = _medoid_seeds(D, k, int(first))
        labels = np.argmin(D[:, seeds], axis=1).astype(np.int64)
        labels[seeds] = np.arange(k)
        labels = _local_search(D, labels, n_clusters, max_sweeps)
        obj = clustering_objective(D, labels)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_labels = labels
    labels = _canonical_labels(best_labels)
    return Assignment(labels=labels, n_clusters=n_clusters,
                      objective=clustering_objective(D, labels))


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters in first-use order over events in index order."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def solve_clustering(D: np.ndarray, n_clusters: int,
                     exact_cap: int = EXACT_CAP_DEFAULT) -> Assignment:
    """Exact solve up to exact_cap events, heuristic beyond."""
    D = _check_distance_matrix(D)
    if D.shape[0] <= exact_cap:
        return solve_exact(D, n_clusters)
    return solve_heuristic(D, n_clusters)


def linearization_check(D: np.ndarray, assignment: Assignment,
                        tol: float = 1e-12) -> tuple[float, float]:
    """Evaluate the quadratic objective and its linearized form.

    The quadratic form sums u_ic * u_jc * d_ij directly; the linearized
    form materializes t_ijc = u_ic * u_jc (which satisfies the standard
    linearization inequalities u_ic + u_jc - t_ijc <= 1 and
    -u_ic - u_jc + 2 t_ijc <= 0) and sums t_ijc * d_ij.  Raises if the two
    disagree beyond tol.
    """
    D = _check_distance_matrix(D)
    u = assignment.to_indicator()
    quad = float(np.einsum("ic,jc,ij->", u, u, D, optimize=False))
    t = np.einsum("ic,jc->ijc", u, u, optimize=False)
    if np.any(u[:, None, :] + u[None, :, :] - t > 1.0) or np.any(2.0 * t - u[:, None, :] - u[None, :, :] > 0.0):
        raise AssertionError("t variables violate the linearization constraints")
    lin = float(np.einsum("ijc,ij->", t, D, optimize=False))
    if abs(quad - lin) > tol:
        raise AssertionError(
            f"objective mismatch between quadratic and linearized forms: "
            f"{quad!r} vs {lin!r}")
    return quad, lin


def select_representatives(D: np.ndarray, assignment: Assignment) -> dict[int, int]:
    """Per-cluster representative: the event (over all events) minimizing the
    summed distance to the cluster's members; ties to the lowest index."""
    D = _check_distance_matrix(D)
    reps: dict[int, int] = {}
    for c in range(assignment.n_used):
        idx = assignment.members(c)
        if len(idx) == 0:
            raise EmptyClusterError(f"cluster {c} has no members")
        costs = D[idx].sum(axis=0)
        reps[c] = int(np.argmin(costs))
    return reps


def silhouette_values(D: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-event silhouette on a precomputed distance matrix.

    Singleton clusters score 0; with fewer than two non-empty clusters
    every event scores 0.
    """
    D = np.asarray(D, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    uniq = np.unique(labels)
    s = np.zeros(n, dtype=np.float64)
    if len(uniq) < 2:
        return s
    masks = {c: labels == c for c in uniq}
    sizes = {c: int(masks[c].sum()) for c in uniq}
    for i in range(n):
        c = labels[i]
        if sizes[c] == 1:
            continue
        a = D[i, masks[c]].sum() / (sizes[c] - 1)
        b = min(D[i, masks[o]].mean() for o in uniq if o != c)
        denom = max(a, b)
        s[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return s


def silhouette_mean(D: np.ndarray, labels: np.ndarray) -> float:
    return float(silhouette_values(D, labels).mean()) if len(labels) else 0.0


@dataclass
class ClusterCountSelection:
    n_clusters: int
    assignment: Assignment
    scores: dict[int, float] = field(default_factory=dict)


def select_cluster_count(D: np.ndarray, c_max: int = C_MAX_DEFAULT,
                         s_min: float = S_MIN_DEFAULT,
                         exact_cap: int = EXACT_CAP_DEFAULT) -> ClusterCountSelection:
    """Pick the cluster count maximizing mean silhouette over 2..c_max.

    Falls back to a single cluster when the best mean silhouette is below
    s_min (ties in the argmax go to the smaller count).
    """
    D = _check_distance_matrix(D)
    n = D.shape[0]
    single = Assignment(labels=np.zeros(n, dtype=np.int64), n_clusters=1,
                        objective=clustering_objective(D, np.zeros(n, dtype=np.int64)))
    if n < 2:
        return ClusterCountSelection(1, single, {})

    scores: dict[int, float] = {}
    solutions: dict[int, Assignment] = {}
    for c in range(2, min(c_max, n) + 1):
        sol = solve_clustering(D, c, exact_cap=exact_cap)
        solutions[c] = sol
        scores[c] = silhouette_mean(D, sol.labels)
    best_c = max(scores, key=lambda c: (scores[c], -c))
    if scores[best_c] < s_min:
        log.info("select_cluster_count: best silhouette %.3f < %.3f, using 1 cluster",
                 scores[best_c], s_min)
        return ClusterCountSelection(1, single, scores)
    return ClusterCountSelection(best_c, solutions[best_c], scores)
