"""Constrained loss, reference updates, and the alternating training loop."""
import math

import numpy as np
import pytest

import cmic.autodiff as ad
from cmic.data import gen_blobs
from cmic.errors import ConfigError, DegenerateBatchWarning
from cmic.metrics import class_centroids, cmi, error_rates, separation, variational_cmi
from cmic.nn import MLP, SGDState
from cmic.numerics import clamp_log, cross_entropy, cross_entropy_onehot, kl_divergence
from cmic.trainer import (
    EvolutionLog,
    QState,
    TrainConfig,
    cmic_loss,
    evaluate_epoch,
    train,
    train_epoch,
    update_q,
)


def hand_loss(probs, labels, q, lam, beta):
    """Literal three-term evaluation with the scalar primitives."""
    b = len(labels)
    ce = sum(cross_entropy_onehot(int(y), p) for p, y in zip(probs, labels)) / b
    concen = sum(kl_divergence(p, q[int(y)]) for p, y in zip(probs, labels)) / b
    sep = 0.0
    for j in range(b):
        for k in range(b):
            if labels[j] != labels[k]:
                sep += cross_entropy(probs[j], probs[k])
    sep /= b * b
    return ce + lam * concen - beta * sep


class TestCmicLoss:
    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def test_reduces_to_cross_entropy(self):
        probs = self.rng.dirichlet(np.ones(3), size=5)
        labels = self.rng.integers(0, 3, size=5)
        q = QState.uniform(3)
        loss = cmic_loss(probs, labels, q, lam=0.0, beta=0.0)
        expected = float(np.mean(cross_entropy_onehot(labels, probs)))
        assert float(loss.value) == pytest.approx(expected, abs=1e-12)

    def test_single_class_batch_has_zero_separation(self):
        probs = self.rng.dirichlet(np.ones(3), size=4)
        labels = np.zeros(4, dtype=int)
        q = QState.uniform(3)
        with_beta = cmic_loss(probs, labels, q, lam=0.5, beta=2.0)
        without = cmic_loss(probs, labels, q, lam=0.5, beta=0.0)
        assert float(with_beta.value) == pytest.approx(float(without.value), abs=1e-12)

    def test_hand_instance(self):
        probs = np.array([[0.7, 0.3], [0.6, 0.4], [0.2, 0.8], [0.1, 0.9]])
        labels = np.array([0, 0, 1, 1])
        q = QState.uniform(2)
        loss = cmic_loss(probs, labels, q, lam=0.7, beta=0.4)
        expected = hand_loss(probs, labels, q.q, 0.7, 0.4)
        assert float(loss.value) == pytest.approx(expected, abs=1e-12)

    def test_degenerate_batch_warns(self):
        probs = np.array([[0.5, 0.5]])
        q = QState.uniform(2)
        with pytest.warns(DegenerateBatchWarning):
            cmic_loss(probs, np.array([0]), q, lam=0.1, beta=0.5)

    def test_gradient_matches_finite_differences(self):
        model = MLP.init([3, 6, 4], seed=11)
        x = self.rng.normal(size=(8, 3))
        labels = np.concatenate([np.arange(4), self.rng.integers(0, 4, size=4)])
        q = QState(q=self.rng.dirichlet(np.ones(4), size=4))
        lam, beta = 0.7, 0.4

        logits, params = model.forward_tape(x)
        probs = ad.softmax_rows(logits)
        loss = cmic_loss(probs, labels, q, lam, beta)
        ad.backward(loss)

        def loss_at_current():
            lg = model.forward(x)
            p = np.exp(lg - lg.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            return hand_loss(p, labels, q.q, lam, beta)

        eps = 1e-5
        arrays = model.parameters()
        rng = np.random.default_rng(3)
        for _ in range(20):
            p_idx = int(rng.integers(0, len(arrays)))
            flat = arrays[p_idx].ravel()
            a_idx = int(rng.integers(0, flat.size))
            orig = flat[a_idx]
            flat[a_idx] = orig + eps
            up = loss_at_current()
            flat[a_idx] = orig - eps
            down = loss_at_current()
            flat[a_idx] = orig
            numeric = (up - down) / (2 * eps)
            analytic = params[p_idx].grad.ravel()[a_idx]
            assert analytic == pytest.approx(numeric, rel=1e-6, abs=1e-9)

    def test_frozen_pairwise_target_changes_gradient_not_value(self):
        model = MLP.init([2, 4, 3], seed=5)
        x = self.rng.normal(size=(6, 2))
        labels = np.array([0, 1, 2, 0, 1, 2])
        q = QState.uniform(3)

        values, grads = [], []
        for freeze in (False, True):
            logits, params = model.forward_tape(x)
            probs = ad.softmax_rows(logits)
            loss = cmic_loss(probs, labels, q, 0.5, 0.9,
                             freeze_pairwise_target=freeze)
            ad.backward(loss)
            values.append(float(loss.value))
            grads.append(params[0].grad.copy())
        assert values[0] == pytest.approx(values[1], abs=1e-12)
        assert not np.allclose(grads[0], grads[1])


class TestUpdateQ:
    def test_momentum_zero_is_batch_mean(self):
        rng = np.random.default_rng(0)
        rows = rng.dirichlet(np.ones(3), size=8)
        q = update_q(QState.uniform(3), {1: rows}, momentum=0.0)
        np.testing.assert_allclose(q.q[1], rows.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(q.q[0], 1 / 3)

    def test_momentum_one_is_identity(self):
        rng = np.random.default_rng(1)
        rows = rng.dirichlet(np.ones(3), size=4)
        before = QState.uniform(3)
        q = update_q(before, {0: rows, 2: rows}, momentum=1.0)
        np.testing.assert_allclose(q.q, before.q, atol=1e-15)

    def test_convex_combination(self):
        q0 = QState(q=np.array([[0.5, 0.5], [0.5, 0.5]]))
        rows = np.array([[0.9, 0.1]])
        q = update_q(q0, {0: rows}, momentum=0.5)
        np.testing.assert_allclose(q.q[0], [0.7, 0.3], atol=1e-12)

    def test_rows_stay_normalized(self):
        rng = np.random.default_rng(2)
        q = QState.uniform(4)
        for _ in range(50):
            rows = {int(rng.integers(0, 4)): rng.dirichlet(np.ones(4), size=3)}
            q = update_q(q, rows, momentum=0.99)
        np.testing.assert_allclose(q.q.sum(axis=1), 1.0, atol=1e-12)


class TestConfig:
    def test_ce_mode_requires_zero_weights(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="ce").validate()
        TrainConfig(mode="ce", lam=0.0, beta=0.0).validate()

    def test_cmic_requires_positive_lambda(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="cmic", lam=0.0).validate()

    def test_constraint_ratio(self):
        cfg = TrainConfig(lam=0.7, beta=0.4)
        assert cfg.constraint_ratio == pytest.approx(0.4 / 0.7)
        assert TrainConfig(mode="ce", lam=0.0, beta=0.0).constraint_ratio is None

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="fancy").validate()


def _tiny_blobs(seed=0, per_class=12):
    return gen_blobs(classes=3, per_class=per_class, dim=2, spread=0.12, seed=seed,
                     radius=0.25, offset=0.5, clip01=True)


class TestTrainEpoch:
    def test_ce_single_batch_is_one_sgd_step(self):
        ds = _tiny_blobs()
        config = TrainConfig(mode="ce", lam=0.0, beta=0.0, batch_size=ds.n,
                             epochs=1, seed=4)
        model = MLP.init([2, 4, 3], seed=1)
        reference = MLP(weights=[w.copy() for w in model.weights],
                        biases=[b.copy() for b in model.biases])
        state = SGDState(lr=0.1, momentum=0.9, weight_decay=5e-4)
        rng = np.random.default_rng(9)
        train_epoch(model, ds, QState.uniform(3), config, state, rng)

        # replay: same permutation, then  one hand-computed SGD step
        rng2 = np.random.default_rng(9)
        idx = rng2.permutation(ds.n)[:ds.n]
        logits, params = reference.forward_tape(ds.features[idx])
        probs = ad.softmax_rows(logits)
        loss = cmic_loss(probs, ds.labels[idx], QState.uniform(3), 0.0, 0.0)
        ad.backward(loss)
        for p, var in zip(reference.parameters(), params):
            v = var.grad + 5e-4 * p
            p -= 0.1 * v
        for a, b in zip(model.parameters(), reference.parameters()):
            np.testing.assert_allclose(a, b, atol=1e-14)

    def test_q_tracks_last_class_batch_with_zero_momentum(self):
        ds = _tiny_blobs()
        config = TrainConfig(mode="cmic", lam=0.7, beta=0.4, batch_size=ds.n,
                             class_batch_size=4, q_momentum=0.0, epochs=1, seed=4)
        model = MLP.init([2, 4, 3], seed=1)
        state = SGDState(lr=0.05, momentum=0.9, weight_decay=5e-4)
        rng = np.random.default_rng(21)
        q, _ = train_epoch(model, ds, QState.uniform(3), config, state, rng)

        # replay the identical rng consumption to recover the class batches
        rng2 = np.random.default_rng(21)
        rng2.permutation(ds.n)
        for cls in range(3):
            members = np.flatnonzero(ds.labels == cls)
            chosen = rng2.choice(members, size=4, replace=False)
            expected = model.predict_proba(ds.features[chosen]).mean(axis=0)
            expected /= expected.sum()
            np.testing.assert_allclose(q.q[cls], expected, atol=1e-12)

    def test_missing_class_fails_fast(self):
        ds = _tiny_blobs()
        broken = ds.labels.copy()
        broken[broken == 2] = 0
        from cmic.data import Dataset
        bad = Dataset(features=ds.features, labels=broken, class_count=3)
        config = TrainConfig(mode="cmic", epochs=1)
        with pytest.raises(ConfigError):
            train(bad, ds, config)


class TestObjectiveEquivalence:
    def test_full_batch_loss_equals_metric_form_at_centroids(self):
        # with references set to the exact class centroids (one full-data
        # update at momentum 0), the loss equals CE + lam*cmi - beta*gamma
        ds = _tiny_blobs(per_class=8)
        model = MLP.init([2, 5, 3], seed=2)
        probs = model.predict_proba(ds.features)
        lam, beta = 0.7, 0.4

        class_rows = {c: probs[ds.labels == c] for c in range(3)}
        q = update_q(QState.uniform(3), class_rows, momentum=0.0)

        loss = cmic_loss(probs, ds.labels, q, lam, beta)
        expected = (error_rates(probs, ds.labels).ce_bound
                    + lam * cmi(probs, ds.labels)
                    - beta * separation(probs, ds.labels))
        assert float(loss.value) == pytest.approx(expected, abs=1e-8)

    def test_full_data_q_update_never_increases_concentration_term(self):
        rng = np.random.default_rng(14)
        ds = _tiny_blobs(per_class=10)
        model = MLP.init([2, 5, 3], seed=3)
        probs = model.predict_proba(ds.features)
        random_q = rng.dirichlet(np.ones(3), size=3)
        before = variational_cmi(probs, ds.labels, random_q)
        class_rows = {c: probs[ds.labels == c] for c in range(3)}
        q = update_q(QState(q=random_q), class_rows, momentum=0.0)
        after = variational_cmi(probs, ds.labels, q.q)
        assert after <= before + 1e-12
        assert after == pytest.approx(cmi(probs, ds.labels), abs=1e-10)


class TestTrainLoop:
    def test_ce_loss_decreases_on_fixture(self):
        ds = _tiny_blobs(seed=1, per_class=20)
        eval_ds = _tiny_blobs(seed=2, per_class=20)
        config = TrainConfig(mode="ce", lam=0.0, beta=0.0, epochs=5,
                             batch_size=16, hidden=(8,), lr=0.1,
                             lr_milestones=(), seed=0)
        result = train(ds, eval_ds, config)
        losses = [r.train_loss for r in result.log.records]
        assert len(losses) == 5
        assert losses[-1] < losses[0]

    def test_determinism_bitwise(self):
        ds = _tiny_blobs(seed=3, per_class=10)
        eval_ds = _tiny_blobs(seed=4, per_class=10)
        config = TrainConfig(mode="cmic", epochs=3, batch_size=8, hidden=(6,),
                             seed=7, lr_milestones=())
        a = train(ds, eval_ds, config)
        b = train(ds, eval_ds, config)
        rows_a = [EvolutionLog.csv_row(r) for r in a.log.records]
        rows_b = [EvolutionLog.csv_row(r) for r in b.log.records]
        assert rows_a == rows_b
        for wa, wb in zip(a.model.parameters(), b.model.parameters()):
            np.testing.assert_array_equal(wa, wb)

    def test_uniform_output_model_evaluation(self):
        # zero weights emit uniform rows: gamma = (1 - 1/C) ln C, cmi = 0
        ds = _tiny_blobs(seed=5, per_class=6)
        model = MLP(weights=[np.zeros((2, 3))], biases=[np.zeros(3)])
        record = evaluate_epoch(model, ds, epoch=1, train_loss=0.0)
        assert record.cmi == pytest.approx(0.0, abs=1e-12)
        assert record.gamma == pytest.approx((1 - 1 / 3) * math.log(3), abs=1e-12)
        assert record.ncmi == pytest.approx(0.0, abs=1e-12)

    def test_record_ncmi_consistency(self):
        ds = _tiny_blobs(seed=6, per_class=8)
        config = TrainConfig(mode="ce", lam=0.0, beta=0.0, epochs=2,
                             batch_size=12, hidden=(6,), seed=1, lr_milestones=())
        result = train(ds, ds, config)
        for r in result.log.records:
            assert r.ncmi == pytest.approx(r.cmi / r.gamma, abs=1e-12)


class TestEvolutionLogCsv:
    def test_header_and_row_format(self, tmp_path):
        from cmic.trainer import EpochRecord
        log = EvolutionLog(records=[EpochRecord(
            epoch=1, cmi=0.5, gamma=1.25, ncmi=0.4, eps_top1=0.125,
            eps_expected=0.25, ce_bound=0.75, train_loss=1.5)])
        path = tmp_path / "curves.csv"
        log.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,cmi,gamma,ncmi,eps_top1,eps_expected,ce_bound,train_loss"
        assert lines[1] == "1,0.5,1.25,0.4,0.125,0.25,0.75,1.5"

    def test_none_ncmi_serializes_as_nan(self):
        from cmic.trainer import EpochRecord
        record = EpochRecord(epoch=1, cmi=0.0, gamma=0.0, ncmi=None,
                             eps_top1=0.0, eps_expected=0.0, ce_bound=0.0,
                             train_loss=0.0)
        assert ",nan," in EvolutionLog.csv_row(record)
