import json
import warnings

import numpy as np
import pytest
from sklearn.metrics import balanced_accuracy_score, cohen_kappa_score, f1_score

from emod.exceptions import EmptyMatrix, TooFewSamples
from emod.metrics import bacc, confusion_matrix, kappa, per_class_f1, report, report_json, spearman_probe, weighted_f1

from oracles import confusion_bruteforce


def quiet(fn, cm):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(cm)


class TestHandCases:
    def test_diagonal(self):
        cm = np.diag([3, 4, 5])
        assert bacc(cm) == 1.0 and kappa(cm) == 1.0 and weighted_f1(cm) == 1.0

    def test_one_column(self):
        cm = [[2, 0], [2, 0]]
        assert bacc(cm) == 0.5
        assert weighted_f1(cm) == pytest.approx(1 / 3, abs=1e-15)

    def test_uniform(self):
        assert bacc([[1, 1], [1, 1]]) == 0.5

    def test_kappa_chance(self):
        assert kappa([[5, 0], [5, 0]]) == pytest.approx(0.0, abs=1e-15)

    def test_kappa_worked(self):
        assert kappa([[6, 2], [1, 7]]) == pytest.approx(0.625, abs=1e-15)

    def test_single_class_truth(self):
        cm = [[7, 0], [0, 0]]
        with pytest.warns(RuntimeWarning):
            assert bacc(cm) == 1.0
        assert weighted_f1(cm) == 1.0

    def test_degenerate_kappa(self):
        with pytest.warns(RuntimeWarning):
            assert kappa([[4, 0], [0, 0]]) == 0.0

    def test_empty(self):
        for fn in (bacc, kappa, weighted_f1):
            with pytest.raises(EmptyMatrix):
                fn(np.zeros((3, 3)))

    def test_malformed(self):
        with pytest.raises(ValueError):
            bacc([[1, 2, 3]])
        with pytest.raises(ValueError):
            bacc([[1, -1], [0, 1]])


def random_matrices(n, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        k = int(rng.integers(2, 8))
        cm = rng.integers(0, 20, (k, k))
        if rng.random() < 0.2:
            cm[rng.integers(k)] = 0  # class absent from the truth
        if cm.sum() == 0:
            cm[0, 0] = 1
        yield cm


def test_bruteforce_agreement():
    for cm in random_matrices(1000):
        b, k, f = confusion_bruteforce(cm.tolist())
        assert abs(quiet(bacc, cm) - b) < 1e-12
        assert abs(quiet(kappa, cm) - k) < 1e-12
        assert abs(weighted_f1(cm) - f) < 1e-12


def test_sklearn_agreement():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y = rng.integers(0, 4, 80)
        p = np.where(rng.random(80) < 0.5, y, rng.integers(0, 4, 80))
        cm = confusion_matrix(y, p, 4)
        assert abs(quiet(bacc, cm) - balanced_accuracy_score(y, p)) < 1e-12
        assert abs(kappa(cm) - cohen_kappa_score(y, p)) < 1e-12
        assert abs(weighted_f1(cm) - f1_score(y, p, average="weighted", zero_division=0)) < 1e-12


def test_class_permutation_invariance():
    rng = np.random.default_rng(1)
    for cm in random_matrices(100, seed=2):
        perm = rng.permutation(len(cm))
        pc = cm[np.ix_(perm, perm)]
        for fn in (bacc, kappa, weighted_f1):
            assert abs(quiet(fn, cm) - quiet(fn, pc)) < 1e-12


def test_bacc_equals_accuracy_for_balanced_truth():
    rng = np.random.default_rng(4)
    for _ in range(50):
        k = int(rng.integers(2, 6))
        cm = np.stack([rng.multinomial(30, np.ones(k) / k) for _ in range(k)])
        assert abs(bacc(cm) - np.trace(cm) / cm.sum()) < 1e-12


def test_confusion_matrix_layout():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
    np.testing.assert_array_equal(cm, [[1, 1, 0], [0, 1, 0], [1, 0, 0]])


def test_report_shape():
    rep = json.loads(report_json([[6, 2], [1, 7]]))
    assert set(rep) == {"bacc", "kappa", "wf1", "n", "per_class"}
    assert rep["n"] == 16 and len(rep["per_class"]) == 2
    assert rep["per_class"][0]["recall"] == 0.75
    np.testing.assert_allclose([c["f1"] for c in rep["per_class"]], per_class_f1([[6, 2], [1, 7]]))
    assert report([[3]])["bacc"] == 1.0


def embeddings_with_distances(target):
    """Vectors whose pairwise ``1 - z_i.z_j`` equal ``target`` off the diagonal."""
    gram = 1.0 - np.asarray(target, dtype=np.float64)
    np.fill_diagonal(gram, np.abs(gram).sum(axis=1) + 1.0)  # diagonally dominant, so positive definite
    return np.linalg.cholesky(gram)


class TestSpearmanProbe:
    va = np.random.default_rng(5).uniform(-4, 4, (20, 2))
    dist = np.linalg.norm(va[:, None] - va[None], axis=-1)

    def test_rank_preserving(self):
        z = embeddings_with_distances(np.sqrt(self.dist) + 0.1)
        assert spearman_probe(z, self.va) == pytest.approx(1.0, abs=1e-12)

    def test_reversed(self):
        z = embeddings_with_distances(-self.dist)
        assert spearman_probe(z, self.va) == pytest.approx(-1.0, abs=1e-12)

    def test_constant_embeddings(self):
        with pytest.warns(RuntimeWarning):
            assert spearman_probe(np.ones((12, 2)), self.va[:12]) == 0.0

    def test_null(self):
        rng = np.random.default_rng(9)
        hits = 0
        for _ in range(40):
            z = rng.standard_normal((50, 8))
            z /= np.linalg.norm(z, axis=1, keepdims=True)
            hits += abs(spearman_probe(z, rng.uniform(-4, 4, (50, 2)))) < 0.2
        assert hits >= 38

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            spearman_probe(np.ones((9, 2)), np.zeros((9, 2)))
