"""Landmark diffusion maps: fit once, embed new points in O(k) time.

The embedding is built from the Gaussian kernel K(x,y) = exp(-γ‖x−y‖²)
over the scaled training observations. Materializing the full n×n kernel
is avoided with a landmark (Nyström) factorization

    K̂ = A B Aᵀ,   A = K(x_i, x̂_j)  (n×k),   B = W⁺  (k×k),

where W is the landmark-landmark kernel and ⁺ the pseudo-inverse. The
random-walk matrix P̂ = D⁻¹K̂ (D = row sums) shares eigenvalues with the
symmetric D^(−1/2)·K̂·D^(−1/2) = Z Zᵀ for Z = D^(−1/2)·A·B^(1/2), so one
thin SVD of Z (cost O(nk² + k³), never n×n) yields the spectrum. Right
eigenvectors ξ_j = D^(−1/2)·(left singular vectors) then carry the
embedding: a point's coordinates are the inner products of its outgoing
transition row with ξ_2..ξ_(m+1); the leading pair (λ₁ = 1, ξ₁ constant)
holds no geometry and is dropped.

Embedding a new point x needs only its kernel row against the landmarks:
with the cached projections num = B(AᵀΞ) and den = B(Aᵀ1),

    Ψ(x) = (a(x)·num) / (a(x)·den),   a(x)_j = K(x, x̂_j),

which reproduces the stored training embedding exactly when x is a
training point and costs O(k·d + k·m) regardless of n.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .can_codec import BytePairId
from .pipeline import Scaler
from .util import named_rng

DEFAULT_LANDMARKS = 1000
DEFAULT_DIMENSION = 3
PINV_RTOL = 1e-10
ZERO_ROW_FLOOR = 1e-300


class DiffusionError(ValueError):
    """Base class for embedding failures."""


class DimensionMismatch(DiffusionError):
    """Vector length disagrees with the model or its peer."""


class RankCollapse(DiffusionError):
    """Kernel spectrum has too few usable eigenvalues for the requested m."""


class ZeroKernelRow(DiffusionError):
    """A point carries no kernel mass against the landmarks."""


class NoLinearRegion(UserWarning):
    """Bandwidth curve had no linear region; median-distance fallback used."""


def kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> float:
    """Gaussian affinity exp(-γ‖a−b‖²) between two observation vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def _kernel_cross(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(X, Y, "sqeuclidean"))


def select_gamma(
    sample: np.ndarray,
    grid: np.ndarray | None = None,
    min_run: int = 3,
) -> tuple[float, np.ndarray]:
    """Pick the kernel bandwidth from the log-log kernel-sum curve.

    S(γ) = log Σᵢⱼ K(xᵢ,xⱼ,γ) decreases from log n² (γ→0) to log n (γ→∞);
    in between there is typically a scaling regime where S falls linearly
    in log γ. We scan the grid for the longest contiguous run of at least
    `min_run` slope samples that stay within 20% of the run's median slope
    with magnitude > 0.1, and return the γ at the run's right end — the
    extent of the linear region. If no such run exists we fall back to
    γ = 1/median(‖xᵢ−xⱼ‖²) and warn.

    Returns (gamma, curve) with curve[:,0] = ln γ and curve[:,1] = S.
    """
    X = np.asarray(sample, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("need a 2-d sample with at least 2 points")
    if grid is None:
        grid = np.logspace(-4.0, 4.0, 41)
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 3 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be increasing with >= 3 points")
    if np.log10(grid[-1] / grid[0]) < 4 - 1e-9:
        raise ValueError("grid must span at least 4 decades")

    sq = pdist(X, "sqeuclidean")
    if not np.any(sq > 0):
        raise ValueError("sample needs at least 2 distinct points")
    n = len(X)
    # sum over ordered pairs = n (diagonal) + 2 * sum over unordered pairs
    S = np.array([np.log(n + 2.0 * np.exp(-g * sq).sum()) for g in grid])
    lg = np.log(grid)
    curve = np.column_stack([lg, S])
    slopes = np.diff(S) / np.diff(lg)

    best: tuple[int, int] | None = None
    m = len(slopes)
    for i in range(m):
        for j in range(i + min_run - 1, m):
            seg = slopes[i : j + 1]
            med = np.median(seg)
            if np.all(np.abs(seg) > 0.1) and np.all(
                np.abs(seg - med) <= 0.2 * abs(med)
            ):
                if best is None or (j - i) > (best[1] - best[0]):
                    best = (i, j)
    if best is None:
        gamma = 1.0 / float(np.median(sq[sq > 0]))
        warnings.warn(
            f"no linear region on the bandwidth curve; "
            f"falling back to 1/median squared distance = {gamma:.6g}",
            NoLinearRegion,
        )
        return gamma, curve
    return float(grid[best[1] + 1]), curve


@dataclass
class DiffusionModel:
    """Everything needed to embed new observations without the training set."""

    gamma: float
    m: int
    landmarks: np.ndarray       # k x d scaled observation vectors
    pinv: np.ndarray            # B = W+, k x k
    eigvals: np.ndarray         # lambda_1..lambda_(m+1), descending
    eigvecs: np.ndarray         # xi_1..xi_(m+1) over the training set, n x (m+1)
    train_embed: np.ndarray     # Psi(S), n x m
    proj_num: np.ndarray        # B (A^T Xi), k x m
    proj_den: np.ndarray        # B (A^T 1), k
    member_ids: tuple[BytePairId, ...] | None = None
    scaler: Scaler | None = None

    @property
    def k(self) -> int:
        return len(self.landmarks)

    @property
    def n(self) -> int:
        return len(self.train_embed)

    @property
    def dim(self) -> int:
        return self.landmarks.shape[1]


@dataclass(frozen=True)
class EmbeddedPoint:
    time: float
    psi: np.ndarray


def fit(
    observations: np.ndarray,
    k: int = DEFAULT_LANDMARKS,
    m: int = DEFAULT_DIMENSION,
    gamma: float | str = "auto",
    seed: int = 0,
    gamma_grid: np.ndarray | None = None,
    gamma_sample: int = 1500,
    member_ids: Sequence[BytePairId] | None = None,
    scaler: Scaler | None = None,
) -> DiffusionModel:
    """Fit the landmark diffusion map on scaled observation vectors.

    gamma="auto" runs select_gamma on a seeded subsample of at most
    `gamma_sample` points (the curve needs only the distance mix, not
    every point). Landmarks are a uniform seeded subsample; k=n keeps
    every point and makes the factorization exact.
    """
    X = np.asarray(observations, dtype=float)
    if X.ndim != 2:
        raise ValueError("observations must be a 2-d array")
    n = len(X)
    if not np.all(np.isfinite(X)):
        raise ValueError("observations must be finite")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not (m + 2 <= k <= n):
        raise ValueError(f"need m+2 <= k <= n, got n={n}, k={k}, m={m}")

    if gamma == "auto":
        if n > gamma_sample:
            pick = named_rng(seed, "gamma-sample").choice(
                n, size=gamma_sample, replace=False
            )
            gamma_points = X[np.sort(pick)]
        else:
            gamma_points = X
        gamma_value, _ = select_gamma(gamma_points, gamma_grid)
    else:
        gamma_value = float(gamma)
        if gamma_value <= 0:
            raise ValueError(f"gamma must be positive, got {gamma_value}")

    idx = np.sort(named_rng(seed, "landmarks").choice(n, size=k, replace=False))
    landmarks = X[idx].copy()
    A = _kernel_cross(X, landmarks, gamma_value)
    W = A[idx]
    W = (W + W.T) / 2.0
    B = np.linalg.pinv(W, rcond=PINV_RTOL, hermitian=True)
    B = (B + B.T) / 2.0

    proj_den = B @ A.sum(axis=0)
    d = A @ proj_den  # row sums of K-hat, never formed as a matrix
    if np.min(d) < -1e-12:
        raise RankCollapse(
            f"kernel row sums went negative (min {np.min(d):.3e}); "
            "the landmark factorization is unusable at this bandwidth"
        )
    d = np.clip(d, 0.0, None)
    if np.min(d) <= ZERO_ROW_FLOOR:
        raise ZeroKernelRow(
            "a training point has no kernel mass against the landmarks; "
            "gamma is too large for this data"
        )

    # B^(1/2) through its eigenbasis; Z Z^T equals D^(-1/2) K-hat D^(-1/2)
    w, Q = np.linalg.eigh(B)
    w = np.clip(w, 0.0, None)
    G = A / np.sqrt(d)[:, None]
    Z = G @ (Q * np.sqrt(w))
    U, sig, _ = np.linalg.svd(Z, full_matrices=False)
    lam = sig**2
    if np.sum(lam > 1e-12) < m + 1:
        raise RankCollapse(
            f"only {int(np.sum(lam > 1e-12))} usable eigenvalues for m={m}; "
            "reduce m or gamma"
        )
    # sign convention: leading entry of each eigenvector positive
    for j in range(m + 1):
        lead = np.argmax(np.abs(U[:, j]))
        if U[lead, j] < 0:
            U[:, j] = -U[:, j]
    eigvals = lam[: m + 1]
    eigvecs = U[:, : m + 1] / np.sqrt(d)[:, None]

    proj_num = B @ (A.T @ eigvecs[:, 1:])
    train_embed = (A @ proj_num) / d[:, None]
    return DiffusionModel(
        gamma=gamma_value,
        m=m,
        landmarks=landmarks,
        pinv=B,
        eigvals=eigvals,
        eigvecs=eigvecs,
        train_embed=train_embed,
        proj_num=proj_num,
        proj_den=proj_den,
        member_ids=tuple(member_ids) if member_ids is not None else None,
        scaler=scaler,
    )


def embed(model: DiffusionModel, x: np.ndarray, time: float = 0.0) -> EmbeddedPoint:
    """Project one scaled observation onto the learned manifold."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise DimensionMismatch(f"expected {model.dim} coordinates, got {x.shape}")
    diff = model.landmarks - x
    a = np.exp(-model.gamma * np.einsum("ij,ij->i", diff, diff))
    den = a @ model.proj_den
    if den <= ZERO_ROW_FLOOR:
        raise ZeroKernelRow(
            "observation has no kernel mass against the landmarks"
        )
    return EmbeddedPoint(time, (a @ model.proj_num) / den)


def embed_many(model: DiffusionModel, X: np.ndarray) -> np.ndarray:
    """Vectorized embed for batch work (calibration, diagnostics)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DimensionMismatch(f"expected (n, {model.dim}), got {X.shape}")
    A = _kernel_cross(X, model.landmarks, model.gamma)
    den = A @ model.proj_den
    if np.min(den) <= ZERO_ROW_FLOOR:
        i = int(np.argmin(den))
        raise ZeroKernelRow(f"observation {i} has no kernel mass")
    return (A @ model.proj_num) / den[:, None]


def markov_residuals(
    model: DiffusionModel, observations: np.ndarray, chunk: int = 512
) -> tuple[np.ndarray, np.ndarray]:
    """Diagnostics against the training set: row-sum and eigenpair errors.

    Returns (row_sum_error, eigen_residuals): |P̂·1 − 1| per training row
    and ‖P̂ξ_j − λ_jξ_j‖/‖ξ_j‖ per stored eigenpair. Row sums are taken
    over explicitly materialized rows of K̂ (in chunks, so memory stays
    O(chunk·n)) rather than the collapsed product that defines the
    normalizer, so the check is not circular.
    """
    X = np.asarray(observations, dtype=float)
    A = _kernel_cross(X, model.landmarks, model.gamma)
    d = A @ model.proj_den
    AB = A @ model.pinv
    n = len(X)
    row_err = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        rows = AB[lo:hi] @ A.T  # explicit K-hat rows
        row_err[lo:hi] = np.abs(rows.sum(axis=1) / d[lo:hi] - 1.0)
    resid = np.empty(len(model.eigvals))
    for j in range(len(model.eigvals)):
        xi = model.eigvecs[:, j]
        Pxi = (A @ (model.pinv @ (A.T @ xi))) / d
        resid[j] = np.linalg.norm(Pxi - model.eigvals[j] * xi) / np.linalg.norm(xi)
    return row_err, resid
