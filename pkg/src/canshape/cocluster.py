"""Correlation structure and bipartite spectral co-clustering of byte pairs.

Byte pairs that move together (or in mirror image) belong to the same
physical subsystem. We compute the Pearson correlation matrix over the
interpolated ambient series, treat its absolute value as the adjacency
matrix of a bipartite graph, and partition it with the normalized-cut
spectral relaxation: scale by the root of the degree matrices, take the
singular vector pairs after the first, and k-means the stacked
degree-scaled rows. Reference (canonical) series ride along as extra
rows so clusters inherit human-readable state labels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.cluster import KMeans

from .can_codec import BytePairId
from .pipeline import ConstantSeries, LengthMismatch
from .util import named_seed


class CoClusterError(ValueError):
    """Base class for co-clustering failures."""


class DegenerateRow(CoClusterError):
    """A graph node has zero total edge weight; it cannot be normalized."""


class KMeansNoConverge(UserWarning):
    """k-means hit its iteration cap; best assignment so far was used."""


@dataclass(frozen=True)
class CanonicalId:
    """Pseudo byte-pair id for a reference series, keyed by state name."""

    state: str

    def __str__(self) -> str:
        return f"~{self.state}"


SignalId = BytePairId | CanonicalId


def parse_signal_id(text: str) -> SignalId:
    if text.startswith("~"):
        return CanonicalId(text[1:])
    return BytePairId.parse(text)


def id_sort_key(sid: SignalId) -> tuple:
    """Real pairs in (aid, pair) order, then canonicals by state name."""
    if isinstance(sid, BytePairId):
        return (0, sid.aid, sid.pair_index)
    return (1, sid.state, 0)


@dataclass(frozen=True)
class CorrelationMatrix:
    ids: tuple
    M: np.ndarray

    def __post_init__(self) -> None:
        M = np.asarray(self.M, dtype=float)
        n = len(self.ids)
        if M.shape != (n, n):
            raise LengthMismatch(f"matrix {M.shape} vs {n} ids")
        if n and np.max(np.abs(M - M.T)) > 1e-12:
            raise ValueError("correlation matrix must be symmetric")
        if n and (np.max(M) > 1 + 1e-12 or np.min(M) < -1 - 1e-12):
            raise ValueError("correlations must lie in [-1, 1]")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "M", M)


def correlation_matrix(
    series: Mapping[BytePairId, np.ndarray],
    canonical: Mapping[str, np.ndarray] | None = None,
) -> CorrelationMatrix:
    """Pearson correlations of the interpolated series, canonicals appended."""
    ids: list[SignalId] = sorted(series, key=id_sort_key)
    vectors = [np.asarray(series[i], dtype=float) for i in ids]
    for state in sorted(canonical or {}):
        ids.append(CanonicalId(state))
        vectors.append(np.asarray(canonical[state], dtype=float))
    if not vectors:
        raise ValueError("no series given")
    L = len(vectors[0])
    if L < 2:
        raise LengthMismatch("series must have length >= 2")
    for sid, v in zip(ids, vectors):
        if v.ndim != 1 or len(v) != L:
            raise LengthMismatch(f"series {sid}: length {len(v)} != {L}")
        if np.ptp(v) == 0.0:
            raise ConstantSeries(f"series {sid} has zero variance")
    M = np.corrcoef(np.vstack(vectors))
    M = np.clip((M + M.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(M, 1.0)
    return CorrelationMatrix(tuple(ids), M)


@dataclass(frozen=True)
class CoClusterModel:
    cluster_count: int
    ids: tuple
    assignment: Mapping[SignalId, int]
    labels: Mapping[int, str]
    disagreement_count: int

    def __post_init__(self) -> None:
        if set(self.assignment) != set(self.ids):
            raise ValueError("assignment must cover exactly the id list")
        for sid, c in self.assignment.items():
            if not 0 <= c < self.cluster_count:
                raise ValueError(f"cluster index {c} for {sid} out of range")

    def members(self, cluster: int) -> list[SignalId]:
        return sorted(
            (sid for sid, c in self.assignment.items() if c == cluster),
            key=id_sort_key,
        )

    def cluster_for_label(self, label: str) -> int:
        for c, lab in self.labels.items():
            if lab == label or label in lab.split("+"):
                return c
        raise KeyError(f"no cluster labeled {label!r}")


def _canonical_signs(U: np.ndarray) -> np.ndarray:
    """Fix each column's sign so the largest-magnitude entry is positive."""
    out = U.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        lead = np.argmax(np.abs(col))
        if col[lead] < 0:
            out[:, j] = -col
    return out


def spectral_cocluster(
    corr: CorrelationMatrix,
    k: int,
    seed: int = 0,
) -> CoClusterModel:
    """Partition signals by the bipartite normalized-cut relaxation.

    Edge weights are |correlation|: strong anti-correlation is as much a
    subsystem tie as strong correlation. Each signal appears once as a
    row node and once as a column node; symmetry means those assignments
    should agree, so disagreements are resolved toward the row node and
    counted for the caller.
    """
    n = len(corr.ids)
    if k < 2:
        raise ValueError(f"need k >= 2 clusters, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} signals available")
    A = np.abs(corr.M)
    r = A.sum(axis=1)
    c = A.sum(axis=0)
    bad = np.where((r <= 0) | (c <= 0))[0]
    if bad.size:
        raise DegenerateRow(f"zero total edge weight for {corr.ids[bad[0]]}")

    An = A / np.sqrt(r)[:, None] / np.sqrt(c)[None, :]
    U, _, Vt = np.linalg.svd(An)
    ell = max(1, math.ceil(math.log2(k)))
    ell = min(ell, n - 1)
    U_part = _canonical_signs(U[:, 1 : 1 + ell])
    V_part = _canonical_signs(Vt[1 : 1 + ell].T)
    Z = np.vstack([U_part / np.sqrt(r)[:, None], V_part / np.sqrt(c)[:, None]])

    km = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=100,
        max_iter=300,
        random_state=int(named_seed(seed, "cocluster-kmeans").generate_state(1)[0]),
    ).fit(Z)
    if km.n_iter_ >= 300:
        warnings.warn(
            "k-means hit the 300-iteration cap; using best assignment so far",
            KMeansNoConverge,
        )
    row_assign = km.labels_[:n]
    col_assign = km.labels_[n:]
    disagreement = int(np.sum(row_assign != col_assign))

    assignment = {sid: int(row_assign[i]) for i, sid in enumerate(corr.ids)}
    labels: dict[int, str] = {}
    for sid in corr.ids:
        if isinstance(sid, CanonicalId):
            cl = assignment[sid]
            labels[cl] = (
                "+".join(sorted(labels[cl].split("+") + [sid.state]))
                if cl in labels
                else sid.state
            )
    return CoClusterModel(
        cluster_count=k,
        ids=corr.ids,
        assignment=assignment,
        labels=labels,
        disagreement_count=disagreement,
    )


def cluster_heatmap_order(model: CoClusterModel, corr: CorrelationMatrix) -> list:
    """Permute ids so cluster blocks are contiguous for plotting.

    Labeled clusters come first in label order, then unlabeled clusters by
    index; members sort by id within each cluster.
    """
    if tuple(corr.ids) != tuple(model.ids):
        raise ValueError("model and matrix cover different ids")

    def cluster_key(c: int) -> tuple:
        lab = model.labels.get(c)
        return (0, lab) if lab is not None else (1, c)

    order: list[SignalId] = []
    for c in sorted(range(model.cluster_count), key=cluster_key):
        order.extend(model.members(c))
    return order


def reorder_matrix(
    corr: CorrelationMatrix, order: Sequence[SignalId]
) -> np.ndarray:
    pos = {sid: i for i, sid in enumerate(corr.ids)}
    idx = np.array([pos[sid] for sid in order], dtype=int)
    return corr.M[np.ix_(idx, idx)]
