import numpy as np
import pytest

from protodx.corpus import SyntheticSpec, generate_synthetic
from protodx.errors import InputError
from protodx.estimator import LabelwisePrototypeClassifier


TEXTS = [
    "fever cough infiltrate sputum",
    "fever cough hypoxia sputum",
    "headache weakness stroke ct",
    "headache aphasia stroke ct",
    "fracture fall wrist xray",
    "fracture fall hip xray",
]
LABELS = [["pna"], ["pna"], ["ich"], ["ich"], ["fx"], ["fx"]]


def small_estimator(**overrides):
    params = dict(
        embed_dim=16, attention_heads=2, output_dim=8, total_steps=120,
        batch_size=4, lr_encoder=1e-3, lr_head=2e-2, eval_every=40, seed=0,
    )
    params.update(overrides)
    return LabelwisePrototypeClassifier(**params)


class TestParamsprotocol:
    def test_get_params_round_trip(self):
        est = LabelwisePrototypeClassifier(output_dim=12, seed=9)
        params = est.get_params()
        clone = LabelwisePrototypeClassifier(**params)
        assert clone.get_params() == params

    def test_set_params_chains_and_validates(self):
        est = LabelwisePrototypeClassifier()
        assert est.set_params(seed=4).seed == 4
        with pytest.raises(InputError):
            est.set_params(nonsense=1)

    def test_unknown_variant_rejected_at_fit(self):
        est = LabelwisePrototypeClassifier(variant="nope")
        with pytest.raises(InputError):
            est.fit(TEXTS, LABELS)


class TestFitPredict:
    def test_fit_on_texts_and_rank(self):
        est = small_estimator().fit(TEXTS, LABELS)
        assert sorted(est.classes_) == ["fx", "ich", "pna"]
        probs = est.predict_proba(["fever cough sputum infiltrate"])
        assert probs.shape == (1, 3)
        assert np.all((probs > 0) & (probs < 1))
        ranked = est.rank_labels(["headache stroke ct weakness"], top_k=2)
        assert ranked[0][0][0] == "ich"

    def test_fit_on_corpus(self):
        spec = SyntheticSpec(
            n_labels=3, n_docs=24, tokens_per_doc=10, noise_vocab_size=30,
            mean_labels_per_doc=1.0, indicative_tokens_per_label=3, seed=1,
        )
        corpus, _ = generate_synthetic(spec)
        est = small_estimator().fit(corpus)
        probs = est.predict_proba(corpus)
        assert probs.shape == (24, 3)

    def test_decision_function_orders_like_probabilities(self):
        est = small_estimator().fit(TEXTS, LABELS)
        text = ["fracture fall xray hip"]
        scores = est.decision_function(text)[0]
        probs = est.predict_proba(text)[0]
        assert list(np.argsort(scores)) == list(np.argsort(probs))

    def test_requires_labels_with_texts(self):
        with pytest.raises(InputError):
            small_estimator().fit(TEXTS)

    def test_not_fitted_error(self):
        with pytest.raises(InputError, match="not fitted"):
            small_estimator().predict_proba(["x"])

    def test_mismatched_lengths(self):
        with pytest.raises(InputError):
            small_estimator().fit(TEXTS, LABELS[:-1])

    def test_proto_probabilities_capped_at_half(self):
        est = small_estimator().fit(TEXTS, LABELS)
        probs = est.predict_proba(TEXTS)
        assert np.all(probs <= 0.5)

    def test_linear_variant_full_range(self):
        est = small_estimator(variant="linear_labelwise", total_steps=200).fit(TEXTS, LABELS)
        probs = est.predict_proba(TEXTS)
        assert probs.max() > 0.5
