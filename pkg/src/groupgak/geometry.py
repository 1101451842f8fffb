"""Face-graph geometry: spanning tree, global weights, canonical face order.

A group's faces are ranked by a global weight w_k = |1 - lam * delta_k| * S_k
where S_k is the face size relative to its spanning-tree neighbours and
delta_k the nose-tip distance to the group centroid, normalized by the group
mean. Feature sequences sorted by descending weight give every alignment
kernel a consistent structure to work on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .records import FaceRecord, GroupRecord, SortedSequence, ValidationError

DEFAULT_LAMBDA = 0.1


@dataclass(frozen=True)
class FaceGraph:
    """Minimum spanning tree over a group's nose-tip positions."""

    n: int
    edges: tuple[tuple[int, int, float], ...]  # (k, l, euclidean weight), k < l
    neighbors: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.edges) != self.n - 1:
            raise ValidationError(
                f"spanning tree on {self.n} nodes needs {self.n - 1} edges, "
                f"got {len(self.edges)}"
            )
        # connectivity check; acyclicity follows from the edge count
        seen = {0} if self.n else set()
        frontier = [0] if self.n else []
        while frontier:
            k = frontier.pop()
            for j in self.neighbors[k]:
                if j not in seen:
                    seen.add(j)
                    frontier.append(j)
        if len(seen) != self.n:
            raise ValidationError("edge list does not connect all faces")

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))


def _nose_points(faces: Sequence[FaceRecord]) -> np.ndarray:
    return np.asarray([f.nose_tip for f in faces], dtype=np.float64)


def build_mst(faces: Sequence[FaceRecord]) -> FaceGraph:
    """Minimum spanning tree of the complete nose-tip graph (Prim).

    Edge weights are Euclidean distances between nose tips. A single face
    yields the empty tree.
    """
    if len(faces) == 0:
        raise ValidationError("cannot build a face graph for an empty group")
    points = _nose_points(faces)
    if not np.all(np.isfinite(points)):
        raise ValidationError("non-finite nose-tip coordinates")
    return mst_from_points(points)


def mst_from_points(points: np.ndarray) -> FaceGraph:
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    if m == 1:
        return FaceGraph(n=1, edges=(), neighbors=((),))

    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1))
    in_tree = np.zeros(m, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    parent = np.zeros(m, dtype=int)
    best[0] = np.inf
    edges = []
    for _ in range(m - 1):
        k = int(np.argmin(np.where(in_tree, np.inf, best)))
        edges.append((min(parent[k], k), max(parent[k], k), float(best[k])))
        in_tree[k] = True
        best[k] = np.inf
        closer = ~in_tree & (dist[k] < best)
        best[closer] = dist[k][closer]
        parent[closer] = k

    edges.sort(key=lambda e: (e[0], e[1]))
    neighbors = [[] for _ in range(m)]
    for k, l, _ in edges:
        neighbors[k].append(l)
        neighbors[l].append(k)
    return FaceGraph(
        n=m,
        edges=tuple(edges),
        neighbors=tuple(tuple(sorted(ns)) for ns in neighbors),
    )


def eye_distance(face: FaceRecord) -> float:
    """Euclidean distance between the eye landmarks; the face-size proxy."""
    d = math.hypot(
        face.left_eye[0] - face.right_eye[0], face.left_eye[1] - face.right_eye[1]
    )
    if d <= 0:
        raise ValidationError("coincident eyes")
    return d


def relative_sizes(faces: Sequence[FaceRecord], graph: FaceGraph) -> np.ndarray:
    """Face size relative to the mean size of its spanning-tree neighbours.

    S_k = d_k / mean(d_j over MST neighbours j of k). A singleton group has
    no neighbours, so S = (1,) by convention.
    """
    if graph.n != len(faces):
        raise ValidationError("graph size does not match face count")
    d = np.array([eye_distance(f) for f in faces])
    if len(faces) == 1:
        return np.ones(1)
    return np.array([d[k] / d[list(graph.neighbors[k])].mean() for k in range(len(faces))])


def relative_distances(faces: Sequence[FaceRecord]) -> np.ndarray:
    """Nose-tip distance to the group centroid, normalized by the group mean.

    When every nose coincides with the centroid the mean is zero and all
    normalized distances are defined as 0.
    """
    points = _nose_points(faces)
    raw = np.linalg.norm(points - points.mean(axis=0), axis=1)
    mean = raw.mean()
    if mean == 0.0:
        return np.zeros(len(faces))
    return raw / mean


@dataclass(frozen=True)
class GlobalWeights:
    """Per-face weight factors for one group."""

    eye_distances: np.ndarray
    sizes: np.ndarray  # S_k
    raw_distances: np.ndarray  # nose distance to centroid, unnormalized
    distances: np.ndarray  # delta_k, normalized to mean 1
    weights: np.ndarray  # w_k = |1 - lam * delta_k| * S_k
    lam: float


def global_weights(
    faces: Sequence[FaceRecord],
    graph: FaceGraph | None = None,
    lam: float = DEFAULT_LAMBDA,
) -> GlobalWeights:
    """Compute w_k = |1 - lam * delta_k| * S_k for every face of a group."""
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    if graph is None:
        graph = build_mst(faces)
    points = _nose_points(faces)
    raw = np.linalg.norm(points - points.mean(axis=0), axis=1)
    sizes = relative_sizes(faces, graph)
    distances = relative_distances(faces)
    weights = np.abs(1.0 - lam * distances) * sizes
    return GlobalWeights(
        eye_distances=np.array([eye_distance(f) for f in faces]),
        sizes=sizes,
        raw_distances=raw,
        distances=distances,
        weights=weights,
        lam=float(lam),
    )


def face_order(weights: np.ndarray) -> tuple[int, ...]:
    """Indices by strictly non-increasing weight; ties keep original order."""
    w = np.asarray(weights, dtype=np.float64)
    return tuple(int(i) for i in np.argsort(-w, kind="stable"))


def sort_faces(
    group: GroupRecord,
    channel: str,
    lam: float = DEFAULT_LAMBDA,
    precomputed: GlobalWeights | None = None,
) -> SortedSequence:
    """Canonically ordered feature sequence for one channel of a group."""
    if channel not in group.channel_names:
        raise ValidationError(f"group {group.id!r} has no channel {channel!r}")
    gw = precomputed if precomputed is not None else global_weights(group.faces, lam=lam)
    order = face_order(gw.weights)
    vectors = np.stack([group.faces[k].channels[channel] for k in order])
    return SortedSequence(
        group_id=group.id,
        channel=channel,
        vectors=vectors,
        weights=gw.weights[list(order)],
        order=order,
    )


def sort_channels(
    group: GroupRecord, channels: Sequence[str], lam: float = DEFAULT_LAMBDA
) -> dict[str, SortedSequence]:
    """sort_faces for several channels, computing the weights once."""
    gw = global_weights(group.faces, lam=lam)
    return {c: sort_faces(group, c, lam=lam, precomputed=gw) for c in channels}


DEBUG_COLUMNS = (
    "group",
    "face",
    "neighbors",
    "eye_dist",
    "rel_size",
    "rel_dist",
    "weight",
    "rank",
)


def weight_debug_rows(group: GroupRecord, lam: float = DEFAULT_LAMBDA) -> list[tuple]:
    """One row per face with every weight factor; for the CLI sort dump."""
    graph = build_mst(group.faces)
    gw = global_weights(group.faces, graph=graph, lam=lam)
    order = face_order(gw.weights)
    rank = {k: r for r, k in enumerate(order)}
    return [
        (
            group.id,
            k,
            "|".join(str(j) for j in graph.neighbors[k]) or "-",
            gw.eye_distances[k],
            gw.sizes[k],
            gw.distances[k],
            gw.weights[k],
            rank[k],
        )
        for k in range(len(group.faces))
    ]
