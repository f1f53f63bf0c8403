import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from emod.dataio import STANDARD_CHANNELS, SyntheticSpec, generate_synthetic, quadrant_labels
from emod.estimators import (
    AverageReference,
    BandPassFilter,
    EmodClassifier,
    EmodPretrainer,
    check_channels,
    check_segments,
    check_va,
)
from emod.exceptions import InvalidConfig, ShapeMismatch

CH = list(STANDARD_CHANNELS[:8])


@pytest.fixture(scope="module")
def data():
    ds = generate_synthetic(SyntheticSpec(n_segments=90, segment_seconds=2.0, snr=2.0, seed=0))
    return ds.data, ds.va


class TestValidation:
    def test_promotes_2d(self):
        assert check_segments(np.zeros((3, 10))).shape == (1, 3, 10)

    @pytest.mark.parametrize("bad", [np.zeros(5), np.zeros((0, 2, 3)), np.full((1, 2, 3), np.nan),
                                     np.array([[["a"]]])])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            check_segments(bad)

    def test_channel_count(self):
        with pytest.raises(ShapeMismatch):
            check_segments(np.zeros((1, 3, 4)), n_channels=2)

    def test_va_range(self):
        with pytest.raises(ValueError):
            check_va([[5.0, 0.0]], 1)
        with pytest.raises(ShapeMismatch):
            check_va([[0.0, 0.0]], 2)

    def test_channels(self):
        with pytest.raises(InvalidConfig):
            check_channels(None, 2)
        with pytest.raises(InvalidConfig):
            check_channels(["a", "a"], 2)


class TestTransformers:
    def test_bandpass_matches_signal_module(self, rng):
        t = np.arange(2000) / 200.0
        x = np.stack([np.sin(2 * np.pi * 10 * t) + np.sin(2 * np.pi * 60 * t)] * 2)[None]
        out = BandPassFilter(200.0).fit_transform(x)
        ref = np.sin(2 * np.pi * 10 * t)
        mid = slice(400, -400)
        assert np.sqrt(np.mean((out[0, 0, mid] - ref[mid]) ** 2)) < 0.1

    def test_average_reference(self, rng):
        out = AverageReference().fit_transform(rng.standard_normal((4, 5, 30)))
        assert np.abs(out.mean(axis=1)).max() < 1e-12

    def test_pipeline_and_params(self, rng):
        pipe = make_pipeline(BandPassFilter(100.0, 1.0, 30.0), AverageReference())
        out = pipe.fit_transform(rng.standard_normal((2, 3, 500)))
        assert out.shape == (2, 3, 500)
        assert pipe.get_params()["bandpassfilter__high_hz"] == 30.0
        assert clone(pipe).get_params()["bandpassfilter__low_hz"] == 1.0

    def test_not_fitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            AverageReference().transform(np.zeros((1, 2, 3)))


class TestPretrainer:
    def test_fit_transform(self, data):
        X, va = data
        est = EmodPretrainer(channels=CH, epochs=3, m=1)
        z = est.fit(X, va).transform(X[:5])
        assert z.shape == (5, 16)
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1, atol=1e-5)
        assert len(est.log_) == 3
        assert est.pooled(X[:2]).shape == (2, 32)

    def test_get_set_params(self):
        est = EmodPretrainer(channels=CH, epochs=7)
        assert est.get_params()["epochs"] == 7
        assert est.set_params(variant="hardva").variant == "hardva"
        assert clone(est).get_params()["channels"] == CH

    def test_scratch(self, data):
        X, va = data
        est = EmodPretrainer(channels=CH, variant="scratch").fit(X, va)
        assert est.log_ == []

    def test_wrong_channel_count(self, data):
        X, va = data
        with pytest.raises(ShapeMismatch):
            EmodPretrainer(channels=CH[:3], epochs=1).fit(X, va)


class TestClassifier:
    def test_fit_predict(self, data):
        X, va = data
        y = np.array(["lo", "hi"])[(va[:, 0] >= 0).astype(int)]
        clf = EmodClassifier(channels=CH, epochs=3, lr=1e-2, freeze_backbone=True, validation_fraction=0.2)
        clf.fit(X, y)
        assert set(clf.classes_) == {"hi", "lo"}
        proba = clf.predict_proba(X[:4])
        np.testing.assert_allclose(proba.sum(axis=1), 1)
        assert set(clf.predict(X)) <= {"hi", "lo"}
        assert 0 <= clf.score(X, y) <= 1
        assert clf.best_epoch_ == int(np.argmax([h["kappa"] for h in clf.history_]))

    def test_uses_pretrained_backbone(self, data):
        X, va = data
        pre = EmodPretrainer(channels=CH, epochs=2, m=1).fit(X, va)
        clf = EmodClassifier(channels=CH, backbone=pre, epochs=0).fit(X, quadrant_labels(va))
        for k, v in pre.model_.state_dict().items():
            assert np.array_equal(v, clf.model_.params[k].data)
        # zero-initialised head: one constant prediction
        assert len(set(clf.predict(X).tolist())) == 1

    def test_length_mismatch(self, data):
        X, va = data
        with pytest.raises(ShapeMismatch):
            EmodClassifier(channels=CH).fit(X, [0, 1])
