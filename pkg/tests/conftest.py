import numpy as np

from netreg import Membership, SbmParams, sample_sbm


def random_membership(rng: np.random.Generator, n: int, n_communities: int) -> Membership:
    """Uniform labels, redrawn until every community is hit."""
    while True:
        labels = rng.integers(0, n_communities, size=n)
        if np.unique(labels).size == n_communities:
            return Membership(labels=labels, n_communities=n_communities)


def assortative_params(rng: np.random.Generator, n: int, n_communities: int) -> SbmParams:
    """Block probabilities drawn as Uniform(0, 0.5) plus 0.5 on the diagonal."""
    K = n_communities
    upper = np.triu(rng.uniform(0.0, 0.5, size=(K, K)))
    B = upper + np.triu(upper, k=1).T + 0.5 * np.eye(K)
    return SbmParams(membership=random_membership(rng, n, K), block_probs=B)


def small_instance(seed: int, n: int = 40, n_communities: int = 2):
    """A modest network + covariate pair for solver-level tests."""
    rng = np.random.default_rng(seed)
    params = assortative_params(rng, n, n_communities)
    A = sample_sbm(params, seed=seed + 1)
    x = rng.standard_normal(n)
    return A, x, params.membership
