import numpy as np
import pytest

from conftest import assortative_params, random_membership
from netreg import (
    Membership,
    SbmParams,
    load_edge_list,
    network_sparsity,
    sample_sbm,
    save_adjacency_csv,
    save_edge_list,
    validate_adjacency,
)
from netreg.graph import EdgeListFormatError


def _check_adjacency_invariants(A):
    assert np.array_equal(A, A.T)
    assert np.all(np.diag(A) == 1.0)
    assert np.all((A == 0.0) | (A == 1.0))


def test_zero_probability_gives_identity():
    m = Membership(labels=np.zeros(5, dtype=int), n_communities=1)
    A = sample_sbm(SbmParams(membership=m, block_probs=[[0.0]]), seed=0)
    assert np.array_equal(A, np.eye(5))


def test_unit_probability_gives_complete_graph():
    m = Membership(labels=np.zeros(5, dtype=int), n_communities=1)
    A = sample_sbm(SbmParams(membership=m, block_probs=[[1.0]]), seed=0)
    assert np.array_equal(A, np.ones((5, 5)))


def test_block_densities_match_probabilities():
    n_k = 1000
    labels = np.repeat([0, 1], n_k)
    m = Membership(labels=labels, n_communities=2)
    B = np.array([[0.8, 0.1], [0.1, 0.8]])
    A = sample_sbm(SbmParams(membership=m, block_probs=B), seed=11)
    _check_adjacency_invariants(A)
    within_0 = (A[:n_k, :n_k].sum() - n_k) / (n_k * (n_k - 1))
    within_1 = (A[n_k:, n_k:].sum() - n_k) / (n_k * (n_k - 1))
    between = A[:n_k, n_k:].mean()
    assert abs(within_0 - 0.8) < 0.01
    assert abs(within_1 - 0.8) < 0.01
    assert abs(between - 0.1) < 0.01


def test_block_densities_within_three_binomial_se():
    n_k = 1000
    labels = np.repeat([0, 1], n_k)
    m = Membership(labels=labels, n_communities=2)
    B = np.array([[0.7, 0.15], [0.15, 0.6]])
    # Unordered node pairs per block; the edge count of each block is binomial.
    pairs = {
        (0, 0): n_k * (n_k - 1) / 2,
        (1, 1): n_k * (n_k - 1) / 2,
        (0, 1): float(n_k * n_k),
    }
    n_samples, checks, hits = 100, 0, 0
    for s in range(n_samples):
        A = sample_sbm(SbmParams(membership=m, block_probs=B), seed=1000 + s)
        edges = {
            (0, 0): (A[:n_k, :n_k].sum() - n_k) / 2,
            (1, 1): (A[n_k:, n_k:].sum() - n_k) / 2,
            (0, 1): A[:n_k, n_k:].sum(),
        }
        for key, count in pairs.items():
            p = B[key]
            se = np.sqrt(count * p * (1 - p))
            checks += 1
            hits += abs(edges[key] - count * p) <= 3 * se
    assert hits / checks >= 0.99


def test_sampling_is_deterministic_and_seed_sensitive():
    rng = np.random.default_rng(3)
    params = assortative_params(rng, 60, 3)
    A1 = sample_sbm(params, seed=42)
    A2 = sample_sbm(params, seed=42)
    A3 = sample_sbm(params, seed=43)
    assert np.array_equal(A1, A2)
    assert not np.array_equal(A1, A3)
    _check_adjacency_invariants(A1)


def test_invalid_block_probs_rejected():
    m = Membership(labels=np.array([0, 0, 1, 1]), n_communities=2)
    with pytest.raises(ValueError):
        SbmParams(membership=m, block_probs=[[0.5, 1.2], [1.2, 0.5]])
    with pytest.raises(ValueError):
        SbmParams(membership=m, block_probs=[[0.5, 0.1], [0.2, 0.5]])
    with pytest.raises(ValueError):
        # empty community is impossible to construct
        Membership(labels=np.array([0, 0, 0, 0]), n_communities=2)


def test_network_sparsity():
    assert network_sparsity([[0.3]]) == 0.3
    assert network_sparsity([[0.8, 0.1], [0.1, 0.6]]) == 0.8
    rng = np.random.default_rng(8)
    params = assortative_params(rng, 40, 4)
    s = network_sparsity(params.block_probs)
    assert 0.5 <= s <= 1.0
    assert s == params.block_probs.max()


def test_empty_edge_list_gives_identity(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    assert np.array_equal(load_edge_list(path, 3), np.eye(3))


def test_single_edge_file(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("0 1\n")
    assert np.array_equal(load_edge_list(path, 2), np.ones((2, 2)))


def test_edge_list_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    params = assortative_params(rng, 50, 2)
    A = sample_sbm(params, seed=7)
    path = tmp_path / "net.txt"
    save_edge_list(A, path)
    assert np.array_equal(load_edge_list(path, 50), A)


def test_edge_list_errors(tmp_path):
    bad_index = tmp_path / "bad_index.txt"
    bad_index.write_text("0 1\n0 7\n")
    with pytest.raises(EdgeListFormatError) as excinfo:
        load_edge_list(bad_index, 3)
    assert excinfo.value.line_number == 2

    malformed = tmp_path / "malformed.txt"
    malformed.write_text("0 1 2\n")
    with pytest.raises(EdgeListFormatError):
        load_edge_list(malformed, 3)

    not_int = tmp_path / "not_int.txt"
    not_int.write_text("0 x\n")
    with pytest.raises(EdgeListFormatError):
        load_edge_list(not_int, 3)


def test_adjacency_csv_export(tmp_path):
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    path = tmp_path / "a.csv"
    save_adjacency_csv(A, path)
    assert path.read_text() == "1,1\n1,1\n"


def test_validate_adjacency_rejects_bad_matrices():
    with pytest.raises(ValueError):
        validate_adjacency(np.zeros((3, 3)))  # missing self-loops
    bad = np.eye(3)
    bad[0, 1] = 1.0
    with pytest.raises(ValueError):
        validate_adjacency(bad)  # asymmetric
    weighted = np.eye(3)
    weighted[0, 1] = weighted[1, 0] = 0.5
    with pytest.raises(ValueError):
        validate_adjacency(weighted)


def test_sampled_membership_params_round_trip():
    rng = np.random.default_rng(0)
    m = random_membership(rng, 30, 3)
    assert m.sizes().sum() == 30
    assert np.array_equal(Membership.from_onehot(m.onehot()).labels, m.labels)
