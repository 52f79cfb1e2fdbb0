"""Reproducible simulation experiments and empirical theory checks.

Every random quantity is derived from (base_seed, experiment, n, K, ...,
replicate) through ``numpy.random.SeedSequence``, so runs are bit-reproducible
and adding grid points never changes existing rows. Raw results are written as
canonically sorted CSV; wall times go to a separate file because they are the
one non-deterministic output.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .baseline import ablation_network, cv_select_lambda, fit_netcoh, predict_netcoh
from .community import Membership, align_permutation, detect_communities, perturb_membership
from .graph import SbmParams, sample_sbm
from .metrics import estimation_error, prediction_error
from .regression import fit_full, fit_row, fit_singleton, predict

_EXPERIMENT_CODES = {
    "network_ablation": 1,
    "coef_structure": 2,
    "misspecification": 3,
    "theory": 4,
}
_STRUCTURE_CODES = {"full": 0, "row": 1, "singleton": 2}
# Sub-stream tags so instance, detection, perturbation, and CV draws never collide.
_TAG_INSTANCE, _TAG_DETECT, _TAG_PERTURB, _TAG_NETCOH = 0, 1, 2, 3

RAW_COLUMNS = [
    "experiment",
    "estimator",
    "structure",
    "n",
    "K",
    "alpha_n",
    "replicate",
    "seed",
    "err_est",
    "err_pred",
    "status",
]


def derive_seed(base_seed: int, *fields: int) -> int:
    """Deterministic 64-bit seed from a base seed and integer coordinates."""
    ss = np.random.SeedSequence([int(base_seed), *(int(f) for f in fields)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Instance:
    """One synthetic draw: network, planted membership, data, and ground truth."""

    adjacency: np.ndarray
    membership: Membership
    covariate: np.ndarray
    response: np.ndarray
    beta_star: np.ndarray
    block_probs: np.ndarray
    noise_sd: float
    seed: int


def gen_instance(
    n: int, n_communities: int, noise_sd: float, seed: int, structure: str = "full"
) -> Instance:
    """Draw one synthetic instance.

    Memberships are uniform over communities (redrawn, boundedly, if one comes
    up empty); block probabilities are Uniform(0, 0.5) symmetrized with 0.5
    added on the diagonal; covariates and coefficients are standard normal;
    the response is the model signal plus Gaussian noise. ``structure``
    restricts the planted coefficient matrix to full, row, or singleton form.
    """
    K = int(n_communities)
    if not n >= K >= 1:
        raise ValueError(f"need n >= K >= 1, got n = {n}, K = {K}")
    if structure not in _STRUCTURE_CODES:
        raise ValueError(f"unknown structure {structure!r}")
    children = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(children[0])
    graph_seed = int(children[1].generate_state(1, np.uint64)[0])

    labels = None
    for _ in range(100):
        candidate = rng.integers(0, K, size=n)
        if np.unique(candidate).size == K:
            labels = candidate
            break
    if labels is None:
        raise RuntimeError(f"could not sample a membership with {K} non-empty communities")
    membership = Membership(labels=labels, n_communities=K)

    upper = np.triu(rng.uniform(0.0, 0.5, size=(K, K)))
    B = upper + np.triu(upper, k=1).T + 0.5 * np.eye(K)

    if structure == "full":
        beta_star = rng.standard_normal((K, K))
    elif structure == "row":
        beta_star = np.tile(rng.standard_normal(K), (K, 1))
    else:
        beta_star = np.full((K, K), rng.standard_normal())
    x = rng.standard_normal(n)

    A = sample_sbm(SbmParams(membership=membership, block_probs=B), seed=graph_seed)
    signal = predict(A, x, membership, beta_star)
    y = signal + noise_sd * rng.standard_normal(n)
    return Instance(
        adjacency=A,
        membership=membership,
        covariate=x,
        response=y,
        beta_star=beta_star,
        block_probs=B,
        noise_sd=float(noise_sd),
        seed=int(seed),
    )


def default_alpha_grid(n: int) -> list:
    """Misspecification grid 0, 1, 2, 4, ... capped at n // 10."""
    cap = n // 10
    grid = [0]
    step = 1
    while step < cap:
        grid.append(step)
        step *= 2
    if cap >= 1:
        grid.append(cap)
    return sorted(set(grid))


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment run."""

    kind: str
    n_grid: list
    k_grid: list
    replicates: int = 200
    noise_sd: float = 0.5
    estimators: list | None = None
    structures: list = field(default_factory=lambda: ["full", "row", "singleton"])
    alpha_grid: list | None = None
    base_seed: int = 0
    oracle_membership: bool = False
    kmeans_restarts: int = 10
    netcoh_folds: int = 5
    netcoh_reuse_lambda: bool = False
    output: str | None = None

    def __post_init__(self):
        if self.kind not in ("network_ablation", "coef_structure", "misspecification"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if list(self.n_grid) != sorted(self.n_grid):
            raise ValueError("n_grid must be ascending")
        if self.estimators is None:
            if self.kind == "network_ablation":
                self.estimators = ["full", "identity_net", "complete_net", "netcoh"]
            elif self.kind == "coef_structure":
                self.estimators = ["full", "row", "singleton"]
            else:
                self.estimators = ["full"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class ExperimentRow:
    experiment: str
    estimator: str
    structure: str
    n: int
    K: int
    alpha_n: int | None
    replicate: int
    seed: int
    err_est: float | None
    err_pred: float | None
    status: str
    wall_time: float


def _sort_key(row: ExperimentRow):
    return (
        row.experiment,
        row.estimator,
        row.structure,
        row.n,
        row.K,
        -1 if row.alpha_n is None else row.alpha_n,
        row.replicate,
    )


def _membership_for_fit(config: ExperimentConfig, inst: Instance, detect_seed: int) -> Membership:
    if config.oracle_membership:
        return inst.membership
    return detect_communities(
        inst.adjacency,
        inst.membership.n_communities,
        seed=detect_seed,
        restarts=config.kmeans_restarts,
    )


def run_network_ablation(config: ExperimentConfig) -> list:
    """Compare the blockwise estimator against identity/complete-network
    ablations and the network-cohesion baseline on fully synthetic data."""
    code = _EXPERIMENT_CODES["network_ablation"]
    rows = []
    lambda_cache: dict = {}
    for n in config.n_grid:
        for K in config.k_grid:
            for rep in range(config.replicates):
                inst_seed = derive_seed(config.base_seed, code, n, K, rep, _TAG_INSTANCE)
                inst = gen_instance(n, K, config.noise_sd, inst_seed)
                Z_hat = _membership_for_fit(
                    config, inst, derive_seed(config.base_seed, code, n, K, rep, _TAG_DETECT)
                )
                Q = align_permutation(Z_hat, inst.membership)
                for estimator in config.estimators:
                    t0 = time.perf_counter()
                    err_est = err_pred = None
                    status = "ok"
                    try:
                        if estimator == "netcoh":
                            if config.netcoh_reuse_lambda and (n, K) in lambda_cache:
                                nc = fit_netcoh(
                                    inst.adjacency,
                                    inst.covariate,
                                    inst.response,
                                    lambda_cache[(n, K)],
                                )
                            else:
                                nc = cv_select_lambda(
                                    inst.adjacency,
                                    inst.covariate,
                                    inst.response,
                                    n_folds=config.netcoh_folds,
                                    seed=derive_seed(
                                        config.base_seed, code, n, K, rep, _TAG_NETCOH
                                    ),
                                )
                                lambda_cache[(n, K)] = nc.lam
                            y_hat = predict_netcoh(nc, inst.covariate)
                            err_pred = prediction_error(y_hat, inst.response)
                        else:
                            if estimator == "full":
                                net = inst.adjacency
                            elif estimator == "identity_net":
                                net = ablation_network("identity", n)
                            elif estimator == "complete_net":
                                net = ablation_network("complete", n)
                            else:
                                raise ValueError(f"unknown estimator {estimator!r}")
                            fit = fit_full(net, inst.covariate, inst.response, Z_hat)
                            err_est = estimation_error(fit.beta, inst.beta_star, Q)
                            err_pred = prediction_error(fit.fitted, inst.response)
                    except Exception as exc:  # failures recorded per row, run continues
                        status = type(exc).__name__
                    rows.append(
                        ExperimentRow(
                            experiment="network_ablation",
                            estimator=estimator,
                            structure="full",
                            n=n,
                            K=K,
                            alpha_n=None,
                            replicate=rep,
                            seed=inst_seed,
                            err_est=err_est,
                            err_pred=err_pred,
                            status=status,
                            wall_time=time.perf_counter() - t0,
                        )
                    )
    rows.sort(key=_sort_key)
    return rows


_FITTERS = {"full": fit_full, "row": fit_row, "singleton": fit_singleton}


def run_coef_structure(config: ExperimentConfig) -> list:
    """Cross full/row/singleton generating structures with the three fitters."""
    code = _EXPERIMENT_CODES["coef_structure"]
    rows = []
    for structure in config.structures:
        s_code = _STRUCTURE_CODES[structure]
        for n in config.n_grid:
            for K in config.k_grid:
                for rep in range(config.replicates):
                    inst_seed = derive_seed(
                        config.base_seed, code, n, K, s_code, rep, _TAG_INSTANCE
                    )
                    inst = gen_instance(n, K, config.noise_sd, inst_seed, structure=structure)
                    Z_hat = _membership_for_fit(
                        config,
                        inst,
                        derive_seed(config.base_seed, code, n, K, s_code, rep, _TAG_DETECT),
                    )
                    Q = align_permutation(Z_hat, inst.membership)
                    for estimator in config.estimators:
                        t0 = time.perf_counter()
                        err_est = err_pred = None
                        status = "ok"
                        try:
                            fit = _FITTERS[estimator](
                                inst.adjacency, inst.covariate, inst.response, Z_hat
                            )
                            err_est = estimation_error(fit.beta, inst.beta_star, Q)
                            err_pred = prediction_error(fit.fitted, inst.response)
                        except Exception as exc:
                            status = type(exc).__name__
                        rows.append(
                            ExperimentRow(
                                experiment="coef_structure",
                                estimator=estimator,
                                structure=structure,
                                n=n,
                                K=K,
                                alpha_n=None,
                                replicate=rep,
                                seed=inst_seed,
                                err_est=err_est,
                                err_pred=err_pred,
                                status=status,
                                wall_time=time.perf_counter() - t0,
                            )
                        )
    rows.sort(key=_sort_key)
    return rows


def run_misspecification(config: ExperimentConfig) -> list:
    """Fit with increasingly perturbed planted memberships."""
    code = _EXPERIMENT_CODES["misspecification"]
    rows = []
    for n in config.n_grid:
        alpha_grid = config.alpha_grid if config.alpha_grid is not None else default_alpha_grid(n)
        for K in config.k_grid:
            if K < 2:
                raise ValueError("misspecification experiment needs K >= 2")
            for rep in range(config.replicates):
                inst_seed = derive_seed(config.base_seed, code, n, K, rep, _TAG_INSTANCE)
                inst = gen_instance(n, K, config.noise_sd, inst_seed)
                for alpha_n in alpha_grid:
                    t0 = time.perf_counter()
                    err_est = err_pred = None
                    status = "ok"
                    try:
                        Z_used = perturb_membership(
                            inst.membership,
                            alpha_n,
                            seed=derive_seed(
                                config.base_seed, code, n, K, rep, alpha_n, _TAG_PERTURB
                            ),
                        )
                        fit = fit_full(inst.adjacency, inst.covariate, inst.response, Z_used)
                        Q = align_permutation(Z_used, inst.membership)
                        err_est = estimation_error(fit.beta, inst.beta_star, Q)
                        err_pred = prediction_error(fit.fitted, inst.response)
                    except Exception as exc:
                        status = type(exc).__name__
                    rows.append(
                        ExperimentRow(
                            experiment="misspecification",
                            estimator="full",
                            structure="full",
                            n=n,
                            K=K,
                            alpha_n=alpha_n,
                            replicate=rep,
                            seed=inst_seed,
                            err_est=err_est,
                            err_pred=err_pred,
                            status=status,
                            wall_time=time.perf_counter() - t0,
                        )
                    )
    rows.sort(key=_sort_key)
    return rows


_RUNNERS = {
    "network_ablation": run_network_ablation,
    "coef_structure": run_coef_structure,
    "misspecification": run_misspecification,
}


def run_rows(config: ExperimentConfig) -> list:
    return _RUNNERS[config.kind](config)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_raw_csv(rows: list, path) -> None:
    """Raw per-replicate results, canonically sorted, byte-reproducible."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RAW_COLUMNS) + "\n")
        for r in sorted(rows, key=_sort_key):
            fh.write(
                ",".join(
                    [
                        r.experiment,
                        r.estimator,
                        r.structure,
                        str(r.n),
                        str(r.K),
                        "" if r.alpha_n is None else str(r.alpha_n),
                        str(r.replicate),
                        str(r.seed),
                        _fmt(r.err_est),
                        _fmt(r.err_pred),
                        r.status,
                    ]
                )
                + "\n"
            )


def write_timings_csv(rows: list, path) -> None:
    """Wall times per row; not covered by the byte-reproducibility guarantee."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("experiment,estimator,structure,n,K,alpha_n,replicate,wall_time\n")
        for r in sorted(rows, key=_sort_key):
            alpha = "" if r.alpha_n is None else str(r.alpha_n)
            fh.write(
                f"{r.experiment},{r.estimator},{r.structure},{r.n},{r.K},"
                f"{alpha},{r.replicate},{r.wall_time!r}\n"
            )


def _mean_stderr(values: list) -> tuple:
    arr = np.array([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return None, None
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, stderr


def summarize(rows: list) -> list:
    """Per-cell means and standard errors, recomputable from the raw rows."""
    groups: dict = {}
    for r in rows:
        key = (r.experiment, r.estimator, r.structure, r.n, r.K, r.alpha_n)
        groups.setdefault(key, []).append(r)
    summary = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3], k[4], -1 if k[5] is None else k[5])):
        members = groups[key]
        est_mean, est_se = _mean_stderr([m.err_est for m in members])
        pred_mean, pred_se = _mean_stderr([m.err_pred for m in members])
        summary.append(
            {
                "experiment": key[0],
                "estimator": key[1],
                "structure": key[2],
                "n": key[3],
                "K": key[4],
                "alpha_n": key[5],
                "replicates": len(members),
                "n_failed": sum(1 for m in members if m.status != "ok"),
                "err_est_mean": est_mean,
                "err_est_stderr": est_se,
                "err_pred_mean": pred_mean,
                "err_pred_stderr": pred_se,
            }
        )
    return summary


def write_summary_csv(summary: list, path) -> None:
    cols = [
        "experiment",
        "estimator",
        "structure",
        "n",
        "K",
        "alpha_n",
        "replicates",
        "n_failed",
        "err_est_mean",
        "err_est_stderr",
        "err_pred_mean",
        "err_pred_stderr",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in summary:
            cells = []
            for c in cols:
                v = row[c]
                if v is None:
                    cells.append("")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def run_experiment(config: ExperimentConfig, output_dir=None) -> tuple:
    """Run an experiment and write raw.csv, summary.csv, timings.csv, meta.json."""
    from . import __version__

    if output_dir is None:
        output_dir = config.output
    if output_dir is None:
        raise ValueError("no output directory: pass output_dir or set config.output")
    rows = run_rows(config)
    summary = summarize(rows)
    os.makedirs(output_dir, exist_ok=True)
    write_raw_csv(rows, os.path.join(output_dir, "raw.csv"))
    write_summary_csv(summary, os.path.join(output_dir, "summary.csv"))
    write_timings_csv(rows, os.path.join(output_dir, "timings.csv"))
    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "versions": {"netreg": __version__, "numpy": np.__version__},
    }
    with open(os.path.join(output_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows, summary


def eigenvalue_lower_bound(block_probs, membership: Membership, covariate, community: int) -> float:
    """Population lower bound for the smallest Hessian eigenvalue of one community.

    min over source communities k' of B[k', k] (1 - B[k', k]) (n_k - 1)
    ||x restricted to k'||^2.
    """
    B = np.asarray(block_probs, dtype=np.float64)
    x = np.asarray(covariate, dtype=np.float64)
    n_k = int(membership.sizes()[community])
    values = []
    for kp in range(membership.n_communities):
        norm_sq = float((x[membership.labels == kp] ** 2).sum())
        p = B[kp, community]
        values.append(p * (1.0 - p) * (n_k - 1) * norm_sq)
    return min(values)


def run_theory_checks(
    n: int = 500,
    n_communities: int = 2,
    block_probs=None,
    noise_sd: float = 0.5,
    n_eigen_draws: int = 500,
    n_noise_reps: int = 2000,
    base_seed: int = 0,
    safety: float = 0.5,
    eigen_pass_rate: float = 0.95,
    coverage_range: tuple = (0.93, 0.97),
    z_limit: float = 3.0,
) -> dict:
    """Empirical checks of the Hessian eigenvalue bound, estimator
    unbiasedness, and confidence-interval coverage on a balanced design.

    Returns a JSON-ready report with one pass flag per check.
    """
    code = _EXPERIMENT_CODES["theory"]
    K = int(n_communities)
    if n % K != 0:
        raise ValueError("theory checks use an exactly balanced design; need K | n")
    B = np.array([[0.8, 0.2], [0.2, 0.8]]) if block_probs is None else np.asarray(block_probs, float)
    if B.shape != (K, K):
        raise ValueError(f"block_probs must be {K}x{K}")
    labels = np.repeat(np.arange(K), n // K)
    membership = Membership(labels=labels, n_communities=K)
    Z = membership.onehot()
    params = SbmParams(membership=membership, block_probs=B)

    # (a) smallest Hessian eigenvalue vs. the population bound, per draw.
    n_pass = 0
    for d in range(n_eigen_draws):
        rng = np.random.default_rng(derive_seed(base_seed, code, 1, d, 0))
        x = rng.standard_normal(n)
        A = sample_sbm(params, seed=derive_seed(base_seed, code, 1, d, 1))
        N = (A * x[None, :]) @ Z
        ok = True
        for k in range(K):
            rows = N[labels == k]
            lam_min = float(np.linalg.eigvalsh(rows.T @ rows)[0])
            if lam_min < safety * eigenvalue_lower_bound(B, membership, x, k):
                ok = False
                break
        n_pass += ok
    eigen_rate = n_pass / n_eigen_draws

    # (b, c) fixed design, repeated noise: unbiasedness and CI coverage.
    rng = np.random.default_rng(derive_seed(base_seed, code, 2, 0))
    x = rng.standard_normal(n)
    beta_star = rng.standard_normal((K, K))
    A = sample_sbm(params, seed=derive_seed(base_seed, code, 2, 1))
    signal = predict(A, x, membership, beta_star)
    N = (A * x[None, :]) @ Z
    noise_rng = np.random.default_rng(derive_seed(base_seed, code, 2, 2))
    noise = noise_sd * noise_rng.standard_normal((n_noise_reps, n))
    Y = signal[None, :] + noise

    max_abs_z = 0.0
    coverage = np.zeros((K, K))
    mean_beta = np.zeros((K, K))
    for k in range(K):
        mask = labels == k
        Xk = N[mask]
        n_k = int(mask.sum())
        H = Xk.T @ Xk
        H_inv = np.linalg.inv(H)
        betas = Y[:, mask] @ (H_inv @ Xk.T).T  # reps x K
        mean_beta[k] = betas.mean(axis=0)
        mc_se = betas.std(axis=0, ddof=1) / np.sqrt(n_noise_reps)
        max_abs_z = max(max_abs_z, float(np.max(np.abs(mean_beta[k] - beta_star[k]) / mc_se)))
        resid = Y[:, mask] - betas @ Xk.T
        sigma2 = (resid**2).sum(axis=1) / (n_k - K)
        se = np.sqrt(sigma2[:, None] * np.diag(H_inv)[None, :])
        covered = np.abs(betas - beta_star[k][None, :]) <= 1.959963984540054 * se
        coverage[k] = covered.mean(axis=0)

    eigen_ok = eigen_rate >= eigen_pass_rate
    unbiased_ok = max_abs_z <= z_limit
    coverage_ok = bool(
        np.all((coverage >= coverage_range[0]) & (coverage <= coverage_range[1]))
    )
    return {
        "eigenvalue_bound": {
            "pass": bool(eigen_ok),
            "pass_rate": eigen_rate,
            "required_rate": eigen_pass_rate,
            "safety_factor": safety,
            "n_draws": n_eigen_draws,
        },
        "unbiasedness": {
            "pass": bool(unbiased_ok),
            "max_abs_z": max_abs_z,
            "z_limit": z_limit,
            "n_reps": n_noise_reps,
            "mean_beta": mean_beta.tolist(),
            "beta_star": beta_star.tolist(),
        },
        "ci_coverage": {
            "pass": coverage_ok,
            "coverage": coverage.tolist(),
            "range": list(coverage_range),
            "n_reps": n_noise_reps,
        },
        "all_pass": bool(eigen_ok and unbiased_ok and coverage_ok),
    }
