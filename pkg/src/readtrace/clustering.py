"""Z-normalisation and Ward agglomerative clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

# Merge costs closer than this (relative) count as ties and go to the lowest index pair.
TIE_RTOL = 1e-12


def znorm(matrix: np.ndarray | Sequence[Sequence[float]], names: Sequence[str] | None = None) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError(f"znorm needs a 2-D matrix with at least 2 rows, got shape {m.shape}")
    sd = m.std(axis=0, ddof=1)
    for j, s in enumerate(sd):
        if not s > 0:
            label = names[j] if names is not None else f"column {j}"
            raise ValueError(f"feature {label} is constant; cannot z-normalise")
    return (m - m.mean(axis=0)) / sd


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    merges: tuple[Merge, ...]
    k: int

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()

    def merge_tree_json(self) -> list[dict[str, float | int]]:
        return [{"left": m.left, "right": m.right, "height": m.height, "size": m.size} for m in self.merges]


def _pick_pair(d: np.ndarray, rowmin: np.ndarray) -> tuple[int, int]:
    """Lowest (i, j), i < j, whose cost ties the global minimum.

    ``d`` is symmetric with inf on the diagonal and on retired rows, so the
    first row holding a tying value has its tying partner to the right.
    """
    best = rowmin.min()
    thr = best + TIE_RTOL * abs(best)
    i = int(np.argmax(rowmin <= thr))
    j = int(np.argmax(d[i] <= thr))
    return i, j


def ward_linkage(points: np.ndarray) -> tuple[Merge, ...]:
    """Greedy Ward agglomeration via Lance-Williams updates on squared distances.

    Node ids follow the usual convention: leaves are 0..n-1 and the merge at
    step s creates node n+s. Heights are sqrt(2 * increase in within-cluster
    sum of squares), comparable with other Ward implementations.
    """
    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    if n < 1:
        raise ValueError("no points to cluster")
    diff = x[:, None, :] - x[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d, np.inf)
    size = np.ones(n)
    node = list(range(n))
    active = np.ones(n, dtype=bool)
    # cached per-row minimum and its column, kept exact across updates
    rowmin = d.min(axis=1) if n > 1 else np.full(n, np.inf)
    rowarg = d.argmin(axis=1)
    merges = []
    for step in range(n - 1):
        i, j = _pick_pair(d, rowmin)
        dij = d[i, j]
        ni, nj = size[i], size[j]
        nk = size
        with np.errstate(invalid="ignore"):
            new = ((nk + ni) * d[i] + (nk + nj) * d[j] - nk * dij) / (nk + ni + nj)
        new[~active] = np.inf
        d[i, :] = new
        d[:, i] = new
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        active[j] = False
        rowmin[j] = np.inf
        size[i] = ni + nj
        merges.append(Merge(node[i], node[j], float(np.sqrt(max(dij, 0.0))), int(size[i])))
        node[i] = n + step

        stale = active & ((rowarg == i) | (rowarg == j))
        stale[i] = True
        rows = np.flatnonzero(stale)
        rowmin[rows] = d[rows].min(axis=1)
        rowarg[rows] = d[rows].argmin(axis=1)
        better = active & ~stale & (new < rowmin)
        rowmin[better] = new[better]
        rowarg[better] = i
    return tuple(merges)


def cut_tree(merges: Sequence[Merge], n: int, k: int) -> np.ndarray:
    """Labels after the first n - k merges; ids by descending size, ties by smallest member."""
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n ({n}), got {k}")
    parent = list(range(2 * n))

    def root(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step, m in enumerate(merges[: n - k]):
        parent[root(m.left)] = n + step
        parent[root(m.right)] = n + step
    roots = [root(i) for i in range(n)]
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(roots):
        groups.setdefault(r, []).append(i)
    ordered = sorted(groups.values(), key=lambda g: (-len(g), g[0]))
    labels = np.empty(n, dtype=int)
    for cid, members in enumerate(ordered):
        labels[members] = cid
    return labels


def ward_cluster(matrix: np.ndarray | Sequence[Sequence[float]], k: int) -> ClusterAssignment:
    x = np.asarray(matrix, dtype=float)
    n = x.shape[0]
    if k > n:
        raise ValueError(f"cannot form {k} clusters from {n} rows")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    merges = ward_linkage(x)
    labels = cut_tree(merges, n, k)
    centroids = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
    return ClusterAssignment(labels, centroids, merges, k)


def within_ss(matrix: np.ndarray, labels: np.ndarray) -> float:
    x = np.asarray(matrix, dtype=float)
    total = 0.0
    for c in np.unique(labels):
        pts = x[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def write_assignments(ids: Sequence[str], assignment: ClusterAssignment, stream: IO[str]) -> None:
    stream.write("student_id,cluster\n")
    for sid, lab in sorted(zip(ids, assignment.labels.tolist())):
        stream.write(f"{sid},{lab}\n")


def write_merge_tree(assignment: ClusterAssignment, stream: IO[str]) -> None:
    json.dump({"k": assignment.k, "merges": assignment.merge_tree_json()}, stream, indent=1)
    stream.write("\n")
