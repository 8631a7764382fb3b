from __future__ import annotations

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial.distance import pdist, squareform

from transit_typology.errors import (
    InvalidK,
    LengthMismatch,
    NonFiniteInput,
    TooFewPoints,
    ZeroVector,
)
from transit_typology.model import (
    ClusterCut,
    DendrogramMerge,
    Linkage,
    LinkageConfig,
    Metric,
)

MERGE_COLUMNS = ["step", "left", "right", "height", "size"]
ASSIGNMENT_COLUMNS = ["region_id", "city", "k", "label"]


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"Vectors of length {x.size} and {y.size} cannot be compared.")
    return x, y


def euclidean_distance(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.linalg.norm(x - y))


def cosine_distance(x, y) -> float:
    """1 - cos(x, y), clamped to [0, 2]."""
    x, y = _pair(x, y)
    norm_x, norm_y = np.linalg.norm(x), np.linalg.norm(y)
    if norm_x == 0.0 or norm_y == 0.0:
        raise ZeroVector("Cosine distance is undefined for a zero vector.")
    return float(np.clip(1.0 - np.dot(x, y) / (norm_x * norm_y), 0.0, 2.0))


def distance_matrix(
    points: np.ndarray, metric: Metric, squared: bool = False
) -> np.ndarray:
    """Pairwise distances of row vectors as a square n x n matrix.

    With `squared`, euclidean distances are returned squared (ward works on
    those). The condensed form from `pdist` keeps memory at n^2 floats.
    """
    if metric == Metric.EUCLIDEAN:
        condensed = pdist(points, "sqeuclidean" if squared else "euclidean")
        return squareform(condensed)

    norms = np.linalg.norm(points, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(
            f"Row {int(zero[0])} is a zero vector; cosine distance is undefined.",
            suggestion="Use the euclidean metric or drop regions with zero embeddings.",
        )
    return squareform(np.clip(pdist(points, "cosine"), 0.0, 2.0))


def _check_points(points) -> np.ndarray:
    array = np.asarray(points, dtype=np.float64)
    if array.ndim != 2:
        raise LengthMismatch(f"Points must form an n x d matrix, got shape {array.shape}.")
    if array.shape[0] < 2:
        raise TooFewPoints(f"Clustering needs at least 2 points, got {array.shape[0]}.")
    if not np.isfinite(array).all():
        raise NonFiniteInput("Points contain NaN or Inf.")
    return array


class _NearestNeighbours:
    """Distance matrix over cluster slots with a per-row nearest-neighbour cache.

    Ties are resolved towards the partner with the smaller node id.
    """

    def __init__(self, dist: np.ndarray):
        n = dist.shape[0]
        self.dist = dist
        np.fill_diagonal(self.dist, np.inf)
        self.node = np.arange(n)
        self.active = np.ones(n, dtype=bool)
        self.nn = np.zeros(n, dtype=int)
        self.nn_dist = np.full(n, np.inf)
        for slot in range(n):
            self.refresh(slot)

    def refresh(self, slot: int) -> None:
        row = self.dist[slot]
        best = row.min()
        candidates = np.flatnonzero(row == best)
        self.nn[slot] = candidates[np.argmin(self.node[candidates])]
        self.nn_dist[slot] = best

    def closest_pair(self) -> tuple[int, int]:
        slots = np.flatnonzero(self.active)
        best = self.nn_dist[slots].min()
        tied = slots[self.nn_dist[slots] == best]
        keys = [
            tuple(sorted((self.node[s], self.node[self.nn[s]]))) for s in tied
        ]
        slot = tied[keys.index(min(keys))]
        return int(slot), int(self.nn[slot])


def agglomerate(points, config: LinkageConfig | None = None) -> list[DendrogramMerge]:
    """Bottom-up merging of points into a single cluster.

    Each step merges the closest pair of clusters; ties go to the pair with the
    lexicographically smallest (left, right) node ids. Inter-cluster distances
    follow the Lance-Williams recurrence for ward (on squared euclidean
    distances) or average linkage.

    Args:
        points: n x d matrix, one point per row.
        config (LinkageConfig | None, optional): Defaults to ward/euclidean.

    Raises:
        TooFewPoints: If n < 2.
        NonFiniteInput: If a coordinate is NaN or Inf.
        ZeroVector: If a point is zero under the cosine metric.

    Returns:
        list[DendrogramMerge]: n - 1 merges. Leaves are nodes 0..n-1, the
            cluster created in step s is node n + s.
    """
    config = config or LinkageConfig()
    points = _check_points(points)
    n = points.shape[0]
    ward = config.linkage == Linkage.WARD

    dist = distance_matrix(points, config.metric, squared=ward)
    cache = _NearestNeighbours(dist)
    size = np.ones(n, dtype=np.int64)

    merges = []
    for step in range(n - 1):
        i, j = cache.closest_pair()
        d_ij = cache.dist[i, j]
        n_i, n_j = size[i], size[j]

        others = np.flatnonzero(cache.active)
        others = others[(others != i) & (others != j)]
        d_ik, d_jk = cache.dist[i, others], cache.dist[j, others]
        if ward:
            n_k = size[others]
            updated = ((n_i + n_k) * d_ik + (n_j + n_k) * d_jk - n_k * d_ij) / (
                n_i + n_j + n_k
            )
            updated = np.maximum(updated, 0.0)
        else:
            updated = (n_i * d_ik + n_j * d_jk) / (n_i + n_j)

        left, right = sorted((int(cache.node[i]), int(cache.node[j])))
        merges.append(
            DendrogramMerge(
                step=step,
                left=left,
                right=right,
                height=float(np.sqrt(max(d_ij, 0.0)) if ward else d_ij),
                size=int(n_i + n_j),
            )
        )

        # slot i holds the merged cluster, slot j retires
        cache.node[i] = n + step
        size[i] = n_i + n_j
        cache.active[j] = False
        cache.dist[j, :] = np.inf
        cache.dist[:, j] = np.inf
        cache.dist[i, others] = updated
        cache.dist[others, i] = updated

        if others.size:
            cache.refresh(i)
        for k, d_new in zip(others, updated):
            if cache.nn[k] in (i, j):
                cache.refresh(k)
            elif d_new < cache.nn_dist[k]:
                cache.nn[k] = i
                cache.nn_dist[k] = d_new

    logger.debug(
        f"Agglomerated {n} points with {config.linkage.value}/{config.metric.value}"
    )
    return merges


def _children(merges: list[DendrogramMerge]) -> dict[int, tuple[int, int]]:
    n = len(merges) + 1
    return {n + m.step: (m.left, m.right) for m in merges}


def _leaves(node: int, children: dict[int, tuple[int, int]]) -> list[int]:
    stack, leaves = [node], []
    while stack:
        current = stack.pop()
        if current in children:
            stack.extend(children[current])
        else:
            leaves.append(current)
    return leaves


def stable_labels(merges: list[DendrogramMerge], max_k: int) -> list[ClusterCut]:
    """Cuts for k = 1..max_k whose labels persist from one k to the next.

    Going from k to k + 1 undoes one merge and splits one cluster. The larger
    child keeps the parent's label, on equal sizes the child holding the lowest
    leaf index keeps it. The other child gets label k.
    """
    n = len(merges) + 1
    if not 1 <= max_k <= n:
        raise InvalidK(f"k must lie within 1..{n}, got {max_k}.")

    children = _children(merges)
    sizes = {leaf: 1 for leaf in range(n)}
    lowest = {leaf: leaf for leaf in range(n)}
    for m in merges:
        node = n + m.step
        sizes[node] = sizes[m.left] + sizes[m.right]
        lowest[node] = min(lowest[m.left], lowest[m.right])

    root = 2 * n - 2
    label_of = {root: 0}
    cuts = []
    for k in range(1, max_k + 1):
        if k > 1:
            node = n + (n - k)
            label = label_of.pop(node)
            first, second = children[node]
            keeper, other = sorted(
                (first, second), key=lambda child: (-sizes[child], lowest[child])
            )
            label_of[keeper] = label
            label_of[other] = k - 1

        labels = [0] * n
        for node, label in label_of.items():
            for leaf in _leaves(node, children):
                labels[leaf] = label
        cuts.append(ClusterCut(k=k, labels=labels))
    return cuts


def cut_all(merges: list[DendrogramMerge], ks: list[int]) -> dict[int, ClusterCut]:
    """Stably labelled cuts for several k from a single walk down the tree."""
    if not ks:
        return {}
    n = len(merges) + 1
    for k in ks:
        if not 1 <= k <= n:
            raise InvalidK(f"k must lie within 1..{n}, got {k}.")
    cuts = stable_labels(merges, max(ks))
    return {k: cuts[k - 1] for k in sorted(set(ks))}


def cut(merges: list[DendrogramMerge], k: int) -> ClusterCut:
    """Flat k-cluster partition obtained by undoing the last k - 1 merges.

    Raises:
        InvalidK: If k is outside 1..n.
    """
    return cut_all(merges, [k])[k]


def merges_frame(merges: list[DendrogramMerge]) -> pd.DataFrame:
    return pd.DataFrame([m.model_dump() for m in merges], columns=MERGE_COLUMNS)


def merges_from_frame(frame: pd.DataFrame) -> list[DendrogramMerge]:
    return [
        DendrogramMerge(
            step=int(row.step),
            left=int(row.left),
            right=int(row.right),
            height=float(row.height),
            size=int(row.size),
        )
        for row in frame.itertuples(index=False)
    ]


def assignments_frame(keys: pd.DataFrame, cuts: dict[int, ClusterCut]) -> pd.DataFrame:
    """assignments.csv rows (region_id, city, k, label), leaf order within each k."""
    frames = []
    for k, flat in sorted(cuts.items()):
        frame = keys[["region_id", "city"]].reset_index(drop=True).copy()
        frame["k"] = k
        frame["label"] = flat.labels
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=ASSIGNMENT_COLUMNS)
    return pd.concat(frames, ignore_index=True)[ASSIGNMENT_COLUMNS]


def cuts_from_assignments(assignments: pd.DataFrame) -> dict[int, ClusterCut]:
    return {
        int(k): ClusterCut(k=int(k), labels=group["label"].astype(int).tolist())
        for k, group in assignments.groupby("k", sort=True)
    }
