"""Residual vector quantization: codebook training, encode/decode, bitrate,
and the on-disk token stream format.

Frames are columns of a (dim, frames) latent; tokens are a (stages, frames)
int matrix of codebook indices. Nearest-neighbor ties break toward the lowest
index so encoding is deterministic.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

TOKEN_MAGIC = b"DQTK"
TOKEN_VERSION = 1


@dataclass
class Codebook:
    centroids: np.ndarray  # (K, dim)

    @property
    def K(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


@dataclass
class RVQ:
    stages: list  # of Codebook, all sharing dim

    @property
    def n_stages(self):
        return len(self.stages)

    @property
    def dim(self):
        return self.stages[0].dim

    @property
    def K(self):
        return self.stages[0].K


@dataclass
class TokenSequence:
    indices: np.ndarray   # (stages, frames) ints
    K: int
    frame_rate: float
    dim: int

    @property
    def n_stages(self):
        return self.indices.shape[0]

    @property
    def frames(self):
        return self.indices.shape[1]


def _sq_dists(vectors, centroids):
    # (N, K) squared Euclidean distances
    return (
        np.sum(vectors**2, axis=1)[:, None]
        - 2.0 * vectors @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )


def _nearest(vectors, centroids):
    """Nearest centroid per vector, ties to the lowest index (argmin does this)."""
    return np.argmin(_sq_dists(vectors, centroids), axis=1)


def _kmeanspp_init(vectors, K, rng):
    n = vectors.shape[0]
    centroids = np.empty((K, vectors.shape[1]))
    centroids[0] = vectors[rng.integers(n)]
    d2 = np.sum((vectors - centroids[0]) ** 2, axis=1)
    for j in range(1, K):
        total = d2.sum()
        if total <= 0:
            centroids[j] = vectors[rng.integers(n)]
        else:
            centroids[j] = vectors[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((vectors - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans_train(vectors, K: int, iters: int = 25, seed: int = 0) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid, so no centroid ever goes unused.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a (n, dim) matrix")
    if vectors.shape[0] < K:
        raise ValueError(f"need at least K={K} vectors, got {vectors.shape[0]}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(vectors, K, rng)
    for _ in range(iters):
        d2 = _sq_dists(vectors, centroids)
        assign = np.argmin(d2, axis=1)
        moved = False
        for j in range(K):
            members = vectors[assign == j]
            if len(members) == 0:
                far = np.argmax(d2[np.arange(len(vectors)), assign])
                centroids[j] = vectors[far]
                moved = True
            else:
                new = members.mean(axis=0)
                if not np.array_equal(new, centroids[j]):
                    moved = True
                centroids[j] = new
        if not moved:
            break
    return Codebook(centroids=centroids)


def rvq_train(latents, stages: int, K: int, iters: int = 25, seed: int = 0) -> RVQ:
    """Train each stage's codebook on the residuals left by earlier stages."""
    if stages < 1:
        raise ValueError("stages must be >= 1")
    residual = np.asarray(latents, dtype=np.float64).copy()
    books = []
    for i in range(stages):
        cb = kmeans_train(residual, K, iters=iters, seed=seed + i)
        idx = _nearest(residual, cb.centroids)
        residual = residual - cb.centroids[idx]
        books.append(cb)
    return RVQ(stages=books)


def rvq_encode(q: RVQ, z: np.ndarray, frame_rate: float = 0.0) -> TokenSequence:
    """Quantize latent columns: per frame, per stage, nearest residual centroid."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != q.dim:
        raise ValueError(f"latent dim {z.shape[0]} != codebook dim {q.dim}")
    residual = z.T.copy()  # (frames, dim)
    rows = []
    for cb in q.stages:
        idx = _nearest(residual, cb.centroids)
        residual -= cb.centroids[idx]
        rows.append(idx)
    return TokenSequence(indices=np.stack(rows), K=q.K,
                         frame_rate=frame_rate, dim=q.dim)


def rvq_decode(q: RVQ, tokens: TokenSequence) -> np.ndarray:
    """Sum of selected centroids across stages; returns a (dim, frames) latent."""
    idx = tokens.indices
    if idx.shape[0] != q.n_stages:
        raise ValueError(f"token stages {idx.shape[0]} != RVQ stages {q.n_stages}")
    out = np.zeros((idx.shape[1], q.dim))
    for row, cb in zip(idx, q.stages):
        if row.min() < 0 or row.max() >= cb.K:
            raise IndexError("token index out of codebook range")
        out += cb.centroids[row]
    return out.T


def bitrate(q: RVQ, frame_rate_hz: float) -> float:
    """Bits per second with ceil(log2 K) bits per token, no entropy coding."""
    if frame_rate_hz <= 0:
        raise ValueError("frame rate must be > 0")
    return frame_rate_hz * sum(math.ceil(math.log2(cb.K)) for cb in q.stages)


# -- token stream file format -------------------------------------------------
#
# Little-endian throughout:
#   magic "DQTK" | u16 version | u16 stages | u32 K | u32 dim | u32 frames
#   | f64 frame_rate | stages*frames u32 indices, row-major (stage-major).

_HEADER = struct.Struct("<4sHHIIId")


def write_tokens(path, tokens: TokenSequence):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TOKEN_MAGIC, TOKEN_VERSION, tokens.n_stages,
                             tokens.K, tokens.dim, tokens.frames,
                             tokens.frame_rate))
        f.write(np.ascontiguousarray(tokens.indices, dtype="<u4").tobytes())


def read_tokens(path) -> TokenSequence:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated token file")
        magic, version, stages, K, dim, frames, frame_rate = _HEADER.unpack(head)
        if magic != TOKEN_MAGIC:
            raise ValueError(f"{path}: not a token file")
        if version != TOKEN_VERSION:
            raise ValueError(f"{path}: unsupported token file version {version}")
        raw = f.read(4 * stages * frames)
    if len(raw) != 4 * stages * frames:
        raise ValueError(f"{path}: truncated token payload")
    payload = np.frombuffer(raw, dtype="<u4")
    idx = payload.reshape(stages, frames).astype(np.int64)
    if idx.size and idx.max() >= K:
        raise ValueError(f"{path}: token index out of range")
    return TokenSequence(indices=idx, K=K, frame_rate=frame_rate, dim=dim)
