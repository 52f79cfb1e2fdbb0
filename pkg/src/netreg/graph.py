"""Stochastic block model networks with deterministic self-loops.

Adjacency matrices are plain ``numpy`` arrays of 0/1 floats. Every matrix
produced here is symmetric with a unit diagonal: node i is always in its own
neighborhood, so downstream regression formulas never special-case the
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .community import Membership


class EdgeListFormatError(ValueError):
    """Raised for malformed edge-list files; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


def validate_adjacency(adjacency) -> np.ndarray:
    """Check symmetry, {0,1} entries, and unit diagonal; return a float64 array."""
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {A.shape}")
    if not np.all((A == 0.0) | (A == 1.0)):
        raise ValueError("adjacency entries must be 0 or 1")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    if not np.all(np.diag(A) == 1.0):
        raise ValueError("adjacency must have unit diagonal (self-loops)")
    return A


@dataclass(frozen=True)
class SbmParams:
    """Block-model parameters: a membership and a symmetric K x K edge-probability matrix."""

    membership: Membership
    block_probs: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.block_probs, dtype=np.float64)
        K = self.membership.n_communities
        if B.shape != (K, K):
            raise ValueError(f"block_probs must be {K}x{K}, got {B.shape}")
        if np.any(B < 0.0) or np.any(B > 1.0):
            raise ValueError("block_probs entries must lie in [0, 1]")
        if not np.array_equal(B, B.T):
            raise ValueError("block_probs must be symmetric")
        object.__setattr__(self, "block_probs", B)


def sample_sbm(params: SbmParams, seed: int) -> np.ndarray:
    """Sample an adjacency matrix from the stochastic block model.

    Each upper-triangle edge (i, j), i < j, is an independent Bernoulli with
    probability ``B[label_i, label_j]``; the matrix is mirrored and the
    diagonal forced to 1. The RNG stream is consumed in fixed row-major order
    over the strict upper triangle, so identical seeds give bit-identical
    matrices.
    """
    labels = params.membership.labels
    n = labels.size
    P = params.block_probs[np.ix_(labels, labels)]
    rows, cols = np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed)
    draws = rng.random(rows.size)
    A = np.zeros((n, n), dtype=np.float64)
    edges = draws < P[rows, cols]
    A[rows[edges], cols[edges]] = 1.0
    A = A + A.T
    np.fill_diagonal(A, 1.0)
    return A


def network_sparsity(block_probs) -> float:
    """Maximum entry of the block-probability matrix."""
    B = np.asarray(block_probs, dtype=np.float64)
    if np.any(B < 0.0) or np.any(B > 1.0):
        raise ValueError("block_probs entries must lie in [0, 1]")
    return float(B.max())


def load_edge_list(path, n: int) -> np.ndarray:
    """Read a whitespace-separated edge list into an n x n adjacency matrix.

    One undirected edge "i j" per line, 0-based. Self-loops are forced to 1
    regardless of the file content. Blank lines and lines starting with '#'
    are skipped.
    """
    if n < 1:
        raise ValueError("n must be positive")
    A = np.zeros((n, n), dtype=np.float64)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise EdgeListFormatError(
                    f"expected two node indices, got {len(parts)} tokens", line_no
                )
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListFormatError(
                    f"non-integer node index in {line!r}", line_no
                ) from None
            if not (0 <= i < n and 0 <= j < n):
                raise EdgeListFormatError(
                    f"node index out of range [0, {n}) in {line!r}", line_no
                )
            A[i, j] = 1.0
            A[j, i] = 1.0
    np.fill_diagonal(A, 1.0)
    return A


def save_edge_list(adjacency, path) -> None:
    """Write the strict upper triangle as "i j" lines (self-loops implicit)."""
    A = validate_adjacency(adjacency)
    rows, cols = np.nonzero(np.triu(A, k=1))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{i} {j}\n")


def save_adjacency_csv(adjacency, path) -> None:
    """Export the full 0/1 matrix as CSV (one row per node)."""
    A = validate_adjacency(adjacency)
    with open(path, "w", encoding="utf-8") as fh:
        for row in A.astype(np.int64):
            fh.write(",".join(str(v) for v in row.tolist()) + "\n")
