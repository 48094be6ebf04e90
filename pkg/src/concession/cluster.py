"""Agglomerative clustering of strategy-label embeddings and annotator agreement.

Geometry is cosine throughout: complete-linkage merges on cosine distance,
Davies-Bouldin with re-normalized centroids, and silhouette on the same
pairwise distances.  Embeddings themselves are produced elsewhere and read
from CSV (``label,f1,f2,...``) or JSONL (``{"label": ..., "vector": [...]}``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ClusterError, InsufficientDataError, SchemaError


@dataclass(frozen=True)
class LabeledVector:
    label: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=float).reshape(-1)
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ClusterError(f"vector for {self.label!r} must be non-empty and finite")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    def normalized(self) -> "LabeledVector":
        norm = float(np.linalg.norm(self.vector))
        if norm == 0:
            raise ClusterError(f"zero vector for {self.label!r}")
        return LabeledVector(self.label, self.vector / norm)


@dataclass(frozen=True)
class Merge:
    """One agglomeration step; ids below n are leaves, ``n + i`` is merge i."""

    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    labels: tuple[str, ...]
    merges: tuple[Merge, ...]

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class ClusterReport:
    assignments: dict[str, int]
    k: int
    dbi: float
    silhouette: float
    # (k, dbi) for every k evaluated by select_k.
    scan: tuple[tuple[int, float], ...] = field(default=())


# ---------------------------------------------------------------------------
# Distances


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ClusterError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ClusterError("cosine distance is undefined for a zero vector")
    return float(min(2.0, max(0.0, 1.0 - float(u @ v) / (nu * nv))))


def _matrix(vectors: Sequence[LabeledVector]) -> np.ndarray:
    dims = {v.vector.size for v in vectors}
    if len(dims) != 1:
        raise ClusterError(f"vectors have mixed dimensions {sorted(dims)}")
    X = np.vstack([v.vector for v in vectors])
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ClusterError("cosine distance is undefined for a zero vector")
    return X / norms[:, None]


def pairwise_cosine(X: np.ndarray) -> np.ndarray:
    """Cosine distances between unit rows, exactly symmetric with a zero diagonal."""
    D = np.clip(1.0 - X @ X.T, 0.0, 2.0)
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    return D


# ---------------------------------------------------------------------------
# Agglomeration


def agglomerate(vectors: Sequence[LabeledVector]) -> Dendrogram:
    """Complete-linkage merges on cosine distance.

    Clusters live in slots 0..n-1; a merged cluster takes the lower slot.
    Among equally distant pairs the smallest ``(i, j)`` slot pair wins.
    """
    n = len(vectors)
    if n < 2:
        raise InsufficientDataError("clustering needs at least two vectors")
    D = pairwise_cosine(_matrix(vectors))
    active = np.ones(n, dtype=bool)
    node = list(range(n))
    size = [1] * n
    merges = []
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    for step in range(n - 1):
        mask = upper & active[:, None] & active[None, :]
        masked = np.where(mask, D, np.inf)
        # argmin scans row-major, so the first hit is the smallest (i, j).
        i, j = divmod(int(np.argmin(masked)), n)
        height = float(D[i, j])
        merges.append(Merge(node[i], node[j], height, size[i] + size[j]))
        linked = np.maximum(D[i], D[j])
        D[i, :] = linked
        D[:, i] = linked
        D[i, i] = 0.0
        active[j] = False
        node[i] = n + step
        size[i] += size[j]
    return Dendrogram(tuple(v.label for v in vectors), tuple(merges))


def cut_to_k(dendrogram: Dendrogram, k: int) -> list[int]:
    """Cluster id per input position after undoing the last ``k - 1`` merges.

    Ids are numbered by first appearance in input order.
    """
    n = dendrogram.n
    if not 1 <= k <= n:
        raise ClusterError(f"k must lie in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for step, m in enumerate(dendrogram.merges[: n - k]):
        parent[find(m.left)] = n + step
        parent[find(m.right)] = n + step
    ids: dict[int, int] = {}
    out = []
    for leaf in range(n):
        root = find(leaf)
        if root not in ids:
            ids[root] = len(ids)
        out.append(ids[root])
    return out


# ---------------------------------------------------------------------------
# Cluster quality


def _groups(assignments: Sequence[int], n: int) -> list[np.ndarray]:
    a = np.asarray(assignments, dtype=int)
    if a.size != n:
        raise ClusterError("one assignment per vector is required")
    k = int(a.max()) + 1 if n else 0
    groups = [np.flatnonzero(a == c) for c in range(k)]
    if k < 2:
        raise ClusterError("quality indices need at least two clusters")
    if any(g.size == 0 for g in groups):
        raise ClusterError("cluster ids must be contiguous with no empty cluster")
    return groups


def _require_split(groups) -> None:
    if len(groups) < 2:
        raise ClusterError("cluster quality is undefined for a single cluster")


def davies_bouldin(vectors: Sequence[LabeledVector], assignments: Sequence[int]) -> float:
    """Mean over clusters of the worst ``(S_i + S_j) / M_ij`` ratio.

    ``S_i`` is the mean cosine distance of members to their re-normalized
    centroid and ``M_ij`` the cosine distance between centroids.  Coincident
    centroids give an infinite ratio unless both clusters have zero spread.
    """
    X = _matrix(vectors)
    groups = _groups(assignments, len(X))
    _require_split(groups)
    centroids = []
    for g in groups:
        c = X[g].mean(axis=0)
        norm = np.linalg.norm(c)
        if norm == 0:
            raise ClusterError("cluster centroid vanishes; cosine DBI undefined")
        centroids.append(c / norm)
    C = np.vstack(centroids)
    S = np.array([np.clip(1.0 - X[g] @ C[i], 0.0, 2.0).mean() for i, g in enumerate(groups)])
    M = pairwise_cosine(C)
    k = len(groups)
    worst = np.empty(k)
    for i in range(k):
        best = 0.0
        for j in range(k):
            if i == j:
                continue
            spread = S[i] + S[j]
            if M[i, j] > 0:
                r = spread / M[i, j]
            else:
                r = np.inf if spread > 0 else 0.0
            best = max(best, r)
        worst[i] = best
    return float(worst.mean())


def silhouette_samples(vectors: Sequence[LabeledVector], assignments: Sequence[int]) -> np.ndarray:
    X = _matrix(vectors)
    groups = _groups(assignments, len(X))
    _require_split(groups)
    D = pairwise_cosine(X)
    labels = np.asarray(assignments, dtype=int)
    s = np.zeros(len(X))
    for i in range(len(X)):
        own = groups[labels[i]]
        if own.size == 1:
            continue
        a = D[i, own].sum() / (own.size - 1)
        b = min(D[i, g].mean() for c, g in enumerate(groups) if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return s


def silhouette(vectors: Sequence[LabeledVector], assignments: Sequence[int]) -> float:
    return float(silhouette_samples(vectors, assignments).mean())


def default_k_max(n: int) -> int:
    return min(n - 1, 30)


def select_k(vectors: Sequence[LabeledVector], k_min: int = 2, k_max: Optional[int] = None) -> ClusterReport:
    """Cut the dendrogram at the k in ``[k_min, k_max]`` with the lowest DBI.

    Ties go to the smallest k.
    """
    n = len(vectors)
    labels = [v.label for v in vectors]
    if len(set(labels)) != n:
        raise ClusterError("labels must be unique")
    k_max = default_k_max(n) if k_max is None else k_max
    if not 2 <= k_min <= k_max <= n - 1:
        raise ClusterError(f"need 2 <= k_min <= k_max <= n-1 (n={n}), got [{k_min}, {k_max}]")
    dendrogram = agglomerate(vectors)
    scan = []
    best_k, best_dbi, best_assign = None, np.inf, None
    for k in range(k_min, k_max + 1):
        assign = cut_to_k(dendrogram, k)
        dbi = davies_bouldin(vectors, assign)
        scan.append((k, dbi))
        if best_k is None or dbi < best_dbi:
            best_k, best_dbi, best_assign = k, dbi, assign
    return ClusterReport(
        assignments=dict(zip(labels, best_assign)),
        k=best_k,
        dbi=float(best_dbi),
        silhouette=silhouette(vectors, best_assign),
        scan=tuple(scan),
    )


# ---------------------------------------------------------------------------
# Agreement


@dataclass(frozen=True)
class AgreementMatrix:
    """Per-item counts of raters choosing each category."""

    counts: np.ndarray
    n_raters: int
    items: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        m = np.asarray(self.counts)
        if m.ndim != 2 or not np.issubdtype(m.dtype, np.number):
            raise ClusterError("agreement matrix must be a 2-D table of counts")
        if np.any(m < 0) or np.any(m != np.round(m)):
            raise ClusterError("counts must be non-negative integers")
        m = m.astype(np.int64)
        if m.shape[0] < 2 or self.n_raters < 2:
            raise ClusterError("kappa needs at least two items and two raters")
        if np.any(m.sum(axis=1) != self.n_raters):
            raise ClusterError(f"every row must sum to n_raters={self.n_raters}")
        m.setflags(write=False)
        object.__setattr__(self, "counts", m)

    @classmethod
    def from_counts(cls, rows, items=(), categories=()) -> "AgreementMatrix":
        m = np.asarray(rows)
        if m.ndim != 2 or m.size == 0:
            raise ClusterError("agreement matrix must be a non-empty 2-D table")
        return cls(m, int(m[0].sum()), tuple(items), tuple(categories))


@dataclass(frozen=True)
class KappaResult:
    kappa: Optional[float]
    p_bar: float
    p_e: float

    @property
    def defined(self) -> bool:
        return self.kappa is not None


def fleiss_kappa(m: AgreementMatrix) -> KappaResult:
    """Chance-corrected agreement; undefined (``kappa=None``) when P_e = 1."""
    counts = m.counts.astype(float)
    n = float(m.n_raters)
    n_items = counts.shape[0]
    p_i = ((counts**2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (n_items * n)
    p_e = float((p_j**2).sum())
    if p_e >= 1.0:
        return KappaResult(None, p_bar, p_e)
    return KappaResult((p_bar - p_e) / (1.0 - p_e), p_bar, p_e)


# ---------------------------------------------------------------------------
# Files


def _parse_floats(values: Sequence[str], where: str) -> list[float]:
    try:
        return [float(v) for v in values]
    except ValueError:
        raise SchemaError(f"{where}: non-numeric vector component") from None


def load_vectors(path: str | Path) -> list[LabeledVector]:
    """Read ``label,f1,...`` CSV or JSONL vectors, unit-normalized."""
    path = Path(path)
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        if path.suffix.lower() in (".jsonl", ".json"):
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    label, vector = obj["label"], obj["vector"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise SchemaError(f"{path}:{lineno}: expected {{label, vector}}") from None
                out.append(LabeledVector(str(label), _parse_floats(vector, f"{path}:{lineno}")))
        else:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or not "".join(row).strip():
                    continue
                if lineno == 1 and row[0].strip().lower() == "label":
                    continue
                if len(row) < 2:
                    raise SchemaError(f"{path}:{lineno}: expected a label and at least one value")
                out.append(LabeledVector(row[0], _parse_floats(row[1:], f"{path}:{lineno}")))
    try:
        return [v.normalized() for v in out]
    except ClusterError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_assignments(report: ClusterReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# k={report.k} dbi={report.dbi:.6f} silhouette={report.silhouette:.6f}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "cluster_id"])
        for label, cid in report.assignments.items():
            w.writerow([label, cid])


def load_agreement(path: str | Path) -> AgreementMatrix:
    """Read ``item,count_1,...,count_m`` CSV with a header row of category names."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and "".join(r).strip()]
    if len(rows) < 2:
        raise SchemaError(f"{path}: expected a header and at least one item row")
    header, body = rows[0], rows[1:]
    try:
        counts = [[int(c) for c in r[1:]] for r in body]
    except ValueError:
        raise SchemaError(f"{path}: counts must be integers") from None
    if any(len(r) != len(header) - 1 for r in counts):
        raise SchemaError(f"{path}: every row needs one count per category")
    try:
        return AgreementMatrix.from_counts(counts, items=[r[0] for r in body], categories=header[1:])
    except ClusterError as exc:
        raise SchemaError(f"{path}: {exc}") from None
