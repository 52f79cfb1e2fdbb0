"""Network-cohesion baseline and trivial network ablations.

The cohesion model gives every node its own intercept, shrunk toward local
smoothness by the graph Laplacian quadratic form, plus one global slope:

    minimize ||y - alpha - beta x||^2 + lam * alpha^T L alpha,  L = diag(A 1) - A.

The regularization weight is picked by node-level cross-validation; held-out
intercepts are imputed by harmonic extension of the training intercepts over
the graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_GRID_SIZE = 100
DEFAULT_GRID_RANGE = (1e-3, 10.0)


def laplacian(adjacency) -> np.ndarray:
    """Combinatorial graph Laplacian diag(A 1) - A (self-loops cancel)."""
    A = np.asarray(adjacency, dtype=np.float64)
    return np.diag(A.sum(axis=1)) - A


@dataclass
class NetcohFit:
    """Per-node intercepts, global slope, and the CV trace that chose lambda."""

    alpha: np.ndarray
    beta: float
    lam: float
    cv_curve: list | None = None
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "alpha": [float(v) for v in self.alpha],
            "beta": float(self.beta),
            "lambda": float(self.lam),
            "notes": self.notes,
        }
        if self.cv_curve is not None:
            out["cv_curve"] = [
                {"lambda": float(l), "cv_error": float(e)} for l, e in self.cv_curve
            ]
        return out

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def fit_netcoh(adjacency, covariate, response, lam: float) -> NetcohFit:
    """Solve the penalized problem exactly via its (n+1)-dimensional normal system."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    A = np.asarray(adjacency, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    n = x.size
    if A.shape != (n, n) or y.shape != (n,):
        raise ValueError("adjacency, covariate, and response dimensions disagree")
    L = laplacian(A)
    system = np.empty((n + 1, n + 1), dtype=np.float64)
    system[:n, :n] = np.eye(n) + lam * L
    system[:n, n] = x
    system[n, :n] = x
    system[n, n] = x @ x
    rhs = np.concatenate([y, [x @ y]])
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        # Singular only when the slope is unidentifiable (e.g. constant x).
        sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
    return NetcohFit(alpha=sol[:n], beta=float(sol[n]), lam=float(lam))


def predict_netcoh(fit: NetcohFit, covariate) -> np.ndarray:
    x = np.asarray(covariate, dtype=np.float64)
    return fit.alpha + fit.beta * x


def netcoh_objective(adjacency, covariate, response, alpha, beta, lam) -> float:
    """Penalized loss ||y - alpha - beta x||^2 + lam alpha^T L alpha."""
    y = np.asarray(response, dtype=np.float64)
    r = y - predict_netcoh(NetcohFit(alpha=np.asarray(alpha, float), beta=beta, lam=lam), covariate)
    a = np.asarray(alpha, dtype=np.float64)
    L = laplacian(adjacency)
    return float(r @ r + lam * (a @ L @ a))


def default_lambda_grid() -> np.ndarray:
    lo, hi = DEFAULT_GRID_RANGE
    return np.logspace(np.log10(lo), np.log10(hi), DEFAULT_GRID_SIZE)


def _harmonic_operator(A: np.ndarray, L: np.ndarray, train: np.ndarray, held: np.ndarray):
    """Precompute the held-out intercept rule alpha_h = Op @ alpha_t.

    Minimizing alpha^T L alpha over held coordinates gives
    L_hh alpha_h = A_ht alpha_t. Connected components of the held-out
    subgraph with no edge into the training set are ungrounded: their block
    of L_hh is singular and they fall back to the training mean.
    """
    A_hh = A[np.ix_(held, held)].copy()
    np.fill_diagonal(A_hh, 0.0)
    _, comp = connected_components(csr_matrix(A_hh), directed=False)
    boundary = A[np.ix_(held, train)]
    has_boundary = boundary.sum(axis=1) > 0
    grounded = np.zeros(held.size, dtype=bool)
    for c in np.unique(comp):
        members = comp == c
        if has_boundary[members].any():
            grounded[members] = True
    if not grounded.any():
        return grounded, None
    hg = held[grounded]
    L_gg = L[np.ix_(hg, hg)]
    op = np.linalg.solve(L_gg, A[np.ix_(hg, train)])
    return grounded, op


def cv_select_lambda(
    adjacency,
    covariate,
    response,
    n_folds: int = 5,
    seed: int = 0,
    grid=None,
) -> NetcohFit:
    """Pick lambda by node-level cross-validation, then refit on all nodes.

    Folds are a seeded random partition of the nodes. For each candidate
    lambda the model is fitted on the training subgraph, training intercepts
    are harmonically extended to the held-out nodes, and the held-out squared
    error is accumulated; the winner minimizes the mean held-out error (ties
    to the smallest lambda).
    """
    A = np.asarray(adjacency, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    n = x.size
    if not 2 <= n_folds <= n:
        raise ValueError(f"n_folds must be in [2, {n}], got {n_folds}")
    lambdas = default_lambda_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(lambdas <= 0.0):
        raise ValueError("all grid values must be positive")
    L = laplacian(A)
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(n), n_folds)
    total_sq_err = np.zeros(lambdas.size)
    for fold in folds:
        held = np.sort(fold)
        train = np.setdiff1d(np.arange(n), held)
        A_tt = A[np.ix_(train, train)]
        d, V = np.linalg.eigh(laplacian(A_tt))
        xt, yt = x[train], y[train]
        Vx, Vy = V.T @ xt, V.T @ yt
        xTx, xTy = float(xt @ xt), float(xt @ yt)
        grounded, op = _harmonic_operator(A, L, train, held)
        for j, lam in enumerate(lambdas):
            shrink = 1.0 / (1.0 + lam * d)
            denom = xTx - float((Vx * Vx) @ shrink)
            if denom <= 1e-12 * max(xTx, 1.0):
                beta = 0.0
            else:
                beta = (xTy - float((Vx * Vy) @ shrink)) / denom
            alpha_t = V @ ((Vy - beta * Vx) * shrink)
            alpha_h = np.full(held.size, alpha_t.mean())
            if op is not None:
                alpha_h[grounded] = op @ alpha_t
            resid = y[held] - (alpha_h + beta * x[held])
            total_sq_err[j] += float(resid @ resid)
    cv_errors = total_sq_err / n
    best = int(np.argmin(cv_errors))
    fit = fit_netcoh(A, x, y, float(lambdas[best]))
    fit.cv_curve = list(zip(lambdas.tolist(), cv_errors.tolist()))
    fit.notes = {
        "n_folds": n_folds,
        "seed": seed,
        "held_out_rule": "harmonic_extension",
        "ungrounded_rule": "training_mean",
        "grid_size": int(lambdas.size),
    }
    return fit


def ablation_network(kind: str, n: int) -> np.ndarray:
    """Degenerate networks used as estimator ablations: identity or complete."""
    if n < 1:
        raise ValueError("n must be positive")
    if kind == "identity":
        return np.eye(n)
    if kind == "complete":
        return np.ones((n, n))
    raise ValueError(f"kind must be 'identity' or 'complete', got {kind!r}")
