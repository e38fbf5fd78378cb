import math

import numpy as np
import pytest

from flatprior.experiments import (
    BooleanRecord,
    CorrelationConfig,
    ExperimentRecord,
    bound_value,
    correlation_summary,
    pearson,
    perceptron_fingerprint_counts,
    read_csv_columns,
    run_boolean,
    run_correlation,
    run_temporal,
    sample_boolean_frequencies,
    spearman,
    write_boolean_csv,
    write_experiment_csv,
    write_scatter_svg,
)
from flatprior.network import FunctionFingerprint, LabeledSet, NetworkSpec
from flatprior.optim import OptimizerConfig
from flatprior.flatness import SharpnessConfig

from oracles import orthant2


class TestCorrelationStats:
    def test_identity_and_negation(self):
        xs = [1.0, 2.0, 5.0, 7.0]
        assert spearman(xs, xs) == pytest.approx(1.0)
        assert pearson(xs, xs) == pytest.approx(1.0)
        assert spearman(xs, [-x for x in xs]) == pytest.approx(-1.0)
        assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0)

    def test_tie_fixture_hand_ranked(self):
        # ranks x: 1, 2.5, 2.5, 4; ranks y: 1, 3, 2, 4 -> rho = sqrt(0.9).
        rho = spearman([1, 2, 2, 3], [1, 3, 2, 4])
        assert rho == pytest.approx(math.sqrt(0.9), abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        xs = rng.normal(size=30)
        ys = rng.normal(size=30)
        assert spearman(np.exp(xs), ys) == pytest.approx(spearman(xs, ys), abs=1e-12)

    def test_constant_input_flagged(self):
        with pytest.raises(ValueError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_checks(self):
        with pytest.raises(ValueError):
            spearman([1.0, 2.0], [1.0, 2.0])


class TestBoundValue:
    def test_arithmetic_example(self):
        assert bound_value(-10.0, 100, math.exp(-1.0)) == pytest.approx(0.11)

    def test_certain_function_delta_near_one(self):
        assert bound_value(0.0, 50, 1.0 - 1e-12) == pytest.approx(0.0, abs=1e-10)

    def test_doubling_m_halves(self):
        a = bound_value(-7.0, 100, 0.05)
        b = bound_value(-7.0, 200, 0.05)
        assert a == pytest.approx(2.0 * b)

    def test_validation(self):
        with pytest.raises(ValueError):
            bound_value(-1.0, 0, 0.5)
        with pytest.raises(ValueError):
            bound_value(-1.0, 10, 1.5)
        with pytest.raises(ValueError):
            bound_value(0.5, 10, 0.5)


class TestPerceptronControl:
    def test_frequencies_match_orthant_closed_form(self):
        # (b, w+b) are jointly normal with correlation 1/sqrt(2):
        # P(00) = P(11) = orthant2(1/sqrt(2)) = 3/8, mixed patterns 1/8.
        n = 200_000
        counts = perceptron_fingerprint_counts(n, seed=0)
        want = {"00": orthant2(1 / math.sqrt(2)), "11": orthant2(1 / math.sqrt(2))}
        assert want["00"] == pytest.approx(3.0 / 8.0, abs=1e-12)
        for pat, p in (("00", 3 / 8), ("11", 3 / 8), ("01", 1 / 8), ("10", 1 / 8)):
            sigma = math.sqrt(p * (1 - p) / n)
            assert counts[pat] / n == pytest.approx(p, abs=4 * sigma)

    def test_counts_sum(self):
        counts = perceptron_fingerprint_counts(1000, seed=1)
        assert sum(counts.values()) == 1000


class TestBooleanSampling:
    def test_deterministic_and_total(self):
        spec = NetworkSpec((3, 8, 8, 1), sigma_w=1.0, sigma_b=0.1)
        a = sample_boolean_frequencies(spec, 2000, seed=0)
        b = sample_boolean_frequencies(spec, 2000, seed=0)
        assert a == b
        assert sum(a.values()) == 2000

    def test_constant_function_most_frequent(self):
        spec = NetworkSpec((7, 40, 40, 1), sigma_w=1.0, sigma_b=0.1)
        counts = sample_boolean_frequencies(spec, 20_000, seed=1)
        top_key = max(counts, key=lambda k: (counts[k], k))
        bits = np.unpackbits(np.frombuffer(top_key, dtype=np.uint8))
        assert bits.sum() in (0, 128)

    def test_matches_per_network_forward(self):
        # With chunk=1 the sampler consumes the rng exactly like init_params,
        # so the tally must equal a manual one-network-at-a-time loop.
        from flatprior.data import boolean_inputs
        from flatprior.network import init_params, predict_labels

        spec = NetworkSpec((3, 5, 1), sigma_w=1.0, sigma_b=0.1)
        counts = sample_boolean_frequencies(spec, 500, seed=7, chunk=1)
        X = boolean_inputs(3)
        manual: dict[bytes, int] = {}
        rng = np.random.default_rng(7)
        for _ in range(500):
            key = np.packbits(predict_labels(init_params(spec, rng), X)).tobytes()
            manual[key] = manual.get(key, 0) + 1
        assert counts == manual

    def test_run_boolean_records(self):
        spec = NetworkSpec((3, 12, 1), sigma_w=1.0, sigma_b=0.1)
        opt = OptimizerConfig(kind="sgd", learning_rate=0.2, batch_size=4)
        sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=4, ascent_epochs=5)
        records, counts, failed = run_boolean(
            spec, 10_000, 10, seed=3, opt_cfg=opt, sharp_cfg=sharp, max_epochs=500
        )
        assert len(records) + failed == 10
        for r in records:
            assert len(r.fingerprint) == 8
            assert r.sample_frequency >= 1
            assert r.log_prior_empirical == pytest.approx(
                math.log(r.sample_frequency / 10_000)
            )
            assert r.sharpness >= 0.0

    def test_run_boolean_validates_sample_floor(self):
        spec = NetworkSpec((3, 8, 1))
        with pytest.raises(ValueError):
            run_boolean(spec, 500, 2, seed=0)


@pytest.fixture(scope="module")
def tiny_correlation(mnist_set):
    spec = NetworkSpec((784, 16, 16, 1))
    cfg = CorrelationConfig(
        train_size=30, test_size=60, attack_sizes=(0, 15, 30), seeds=(0, 1),
        max_epochs=3000,
    )
    sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=16, ascent_epochs=10)
    records, skipped = run_correlation(
        mnist_set, spec, OptimizerConfig(kind="sgd", batch_size=16), cfg, sharp
    )
    return records, skipped, cfg


class TestRunCorrelation:
    def test_records_have_zero_train_error(self, tiny_correlation):
        records, skipped, cfg = tiny_correlation
        assert len(records) + len(skipped) == 6
        for r in records:
            assert r.train_error == 0.0
            assert 0.0 <= r.test_error <= 1.0
            assert r.log_prior <= 1e-6
            assert r.bound_value >= 0.0

    def test_posterior_difference_constant_within_seed(self, tiny_correlation):
        # log_prior - log_posterior is ln P(S), shared by every record of a
        # seed regardless of the attack size.
        records, _, _ = tiny_correlation
        by_seed = {}
        for r in records:
            by_seed.setdefault(r.run_id.rsplit("-s", 1)[1], []).append(
                r.log_prior - r.log_posterior
            )
        for diffs in by_seed.values():
            assert max(diffs) - min(diffs) < 1e-6

    def test_deterministic_rerun(self, mnist_set, tiny_correlation):
        records, skipped, cfg = tiny_correlation
        spec = NetworkSpec((784, 16, 16, 1))
        sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=16, ascent_epochs=10)
        again, skipped2 = run_correlation(
            mnist_set, spec, OptimizerConfig(kind="sgd", batch_size=16), cfg, sharp
        )
        assert [(r.run_id, r.test_error, r.log_prior) for r in records] == [
            (r.run_id, r.test_error, r.log_prior) for r in again
        ]

    def test_summary_fields(self, tiny_correlation):
        records, _, _ = tiny_correlation
        if len(records) >= 3:
            summary = correlation_summary(records)
            assert "spearman_neg_log_prior_vs_test_error" in summary
            assert -1.0 <= summary["spearman_neg_log_prior_vs_test_error"] <= 1.0

    def test_hessian_metrics_recorded_for_small_nets(self):
        # Low-dimensional separable set so the dense Hessian stays tiny.
        rng = np.random.default_rng(3)
        X = np.concatenate([rng.normal(0.2, 0.1, (60, 6)), rng.normal(0.8, 0.1, (60, 6))])
        y = np.concatenate([np.zeros(60, dtype=np.uint8), np.ones(60, dtype=np.uint8)])
        full = LabeledSet(np.clip(X, 0, 1), y)
        spec = NetworkSpec((6, 8, 8, 1))
        cfg = CorrelationConfig(
            train_size=20, test_size=30, attack_sizes=(0,), seeds=(0,),
            max_epochs=2000, hessian_metrics=True,
        )
        sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=8, ascent_epochs=5)
        records, skipped = run_correlation(
            full, spec, OptimizerConfig(batch_size=8), cfg, sharp
        )
        assert len(records) == 1
        assert records[0].spectral_norm is not None and records[0].spectral_norm >= 0
        assert records[0].top_k_log_product is not None


class TestRunTemporal:
    def test_alpha_one_matches_no_scaling_run(self, mnist_set):
        spec = NetworkSpec((784, 16, 16, 1))
        opt = OptimizerConfig(kind="sgd")
        sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=16, ascent_epochs=5)
        kw = dict(train_size=30, test_size=30, total_epochs=12, seed=4,
                  sharp_cfg=sharp, prior_every=4)
        recs1, diag1 = run_temporal(mnist_set, spec, opt, scale_epoch=6, alpha=1.0, **kw)
        recs2, diag2 = run_temporal(mnist_set, spec, opt, scale_epoch=10, alpha=1.0, **kw)
        assert diag1["fingerprint_unchanged"] and diag1["max_forward_dev"] == 0.0
        assert [(r.epoch, r.train_error, r.test_error, r.sharpness) for r in recs1] == [
            (r.epoch, r.train_error, r.test_error, r.sharpness) for r in recs2
        ]

    def test_fingerprint_unchanged_at_scaling(self, mnist_set):
        spec = NetworkSpec((784, 16, 16, 1))
        opt = OptimizerConfig(kind="sgd")
        sharp = SharpnessConfig(zeta=1e-4, ascent_lr=1e-3, ascent_batch=16, ascent_epochs=5)
        recs, diag = run_temporal(
            mnist_set, spec, opt, train_size=30, test_size=30,
            scale_epoch=8, alpha=4.0, total_epochs=10, seed=5,
            sharp_cfg=sharp, prior_every=20,
        )
        assert diag["fingerprint_unchanged"]
        assert diag["max_forward_dev"] < 1e-6
        assert len(recs) == 10
        assert [r.epoch for r in recs] == list(range(1, 11))
        # Prior measured at the epochs flanking the scaling event.
        by_epoch = {r.epoch: r for r in recs}
        assert by_epoch[7].log_prior is not None
        assert by_epoch[8].log_prior is not None

    def test_scale_epoch_validation(self, mnist_set):
        spec = NetworkSpec((784, 16, 16, 1))
        with pytest.raises(ValueError):
            run_temporal(mnist_set, spec, OptimizerConfig(), 30, 30,
                         scale_epoch=12, alpha=2.0, total_epochs=12, seed=0)


class TestCsvAndSvg:
    def rec(self, **kw):
        base = dict(
            run_id="sgd-a0000-s0", optimizer="sgd", attack_size=0, epoch=10,
            train_error=0.0, test_error=0.125, sharpness=1.23456789012345,
            log_prior=-45.6, log_posterior=-12.3, bound_value=0.5,
        )
        base.update(kw)
        return ExperimentRecord(**base)

    def test_experiment_csv_layout(self, tmp_path):
        path = tmp_path / "out.csv"
        write_experiment_csv(path, [self.rec()], {"seed": 0, "command": "test"})
        text = path.read_text().splitlines()
        assert text[0] == "# seed = 0"
        assert text[1] == "# command = test"
        assert text[2].startswith("run_id,optimizer,attack_size,epoch,train_error,test_error,")
        row = text[3].split(",")
        assert row[0] == "sgd-a0000-s0"
        assert row[6] == "1.23456789"  # 10 significant digits
        assert row[7] == "" and row[8] == ""  # missing optional metrics empty

    def test_csv_roundtrip_and_missing_fields(self, tmp_path):
        path = tmp_path / "out.csv"
        write_experiment_csv(
            path,
            [self.rec(), self.rec(run_id="sgd-a0010-s0", attack_size=10, sharpness=None)],
            {"seed": 1},
        )
        cols = read_csv_columns(path)
        assert cols["attack_size"] == ["0", "10"]
        assert cols["sharpness"][1] == ""

    def test_boolean_csv(self, tmp_path):
        path = tmp_path / "bool.csv"
        rec = BooleanRecord(
            fingerprint=FunctionFingerprint([1, 0, 1, 0]),
            sample_frequency=123,
            log_prior_empirical=-4.5,
            sharpness=0.25,
        )
        write_boolean_csv(path, [rec], {"samples": 1000})
        lines = path.read_text().splitlines()
        assert lines[1] == "fingerprint,sample_frequency,log_prior_empirical,sharpness,spectral_norm"
        assert lines[2].startswith("1010,123,-4.5,0.25,")

    def test_byte_identical_rewrite(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        recs = [self.rec(), self.rec(run_id="sgd-a0000-s1")]
        write_experiment_csv(a, recs, {"seed": 0})
        write_experiment_csv(b, recs, {"seed": 0})
        assert a.read_bytes() == b.read_bytes()

    def test_svg_scatter(self, tmp_path):
        path = tmp_path / "plot.svg"
        write_scatter_svg(path, [1.0, 2.0, 3.0], [2.0, 1.0, 4.0], "x", "y", "title")
        text = path.read_text()
        assert text.startswith("<svg")
        assert text.count("<circle") == 3
        assert "title" in text

    def test_svg_validates_lengths(self, tmp_path):
        with pytest.raises(ValueError):
            write_scatter_svg(tmp_path / "p.svg", [1.0], [1.0, 2.0], "x", "y")
