import numpy as np
import pytest

from tramsurv.basis import LogTimeScaler
from tramsurv.core import (
    FittedModel,
    ModelSpec,
    Observation,
    Parameterization,
    SurvivalDataset,
)
from tramsurv.errors import (
    NoComparablePairs,
    QuadratureNonConvergence,
    UnsupportedCensoringKind,
)
from tramsurv.feature import ExtractorSpec, identity_params
from tramsurv.fit import nll_observation
from tramsurv.metrics import EvaluationReport, c_index, crps, evaluate, log_score
from tramsurv.numerics import softplus_inv
from tramsurv.target import TargetFamily
from tramsurv.transform import conditional_distribution


class TestCIndex:
    def test_perfect_concordance(self):
        assert c_index([1, 2, 3], [1, 1, 1], [3, 2, 1]) == 1.0

    def test_constant_risk_is_half(self):
        assert c_index([1, 2, 3, 4], [1, 1, 1, 1], [0.3, 0.3, 0.3, 0.3]) == 0.5

    def test_censored_pairs_excluded(self):
        # comparable pairs are (1,2) and (1,3); the censored subject at t=2
        # cannot serve as the earlier event of a pair
        assert c_index([1, 2, 3], [1, 0, 1], [0.9, 0.5, 0.1]) == 1.0

    def test_anti_concordant(self):
        assert c_index([1, 2, 3], [1, 1, 1], [1, 2, 3]) == 0.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(501)
        times = rng.uniform(0.1, 5.0, 40)
        events = rng.random(40) < 0.7
        risks = rng.normal(size=40)
        base = c_index(times, events, risks)
        assert c_index(times, events, np.exp(risks)) == base
        assert c_index(times, events, 3.0 * risks + 7.0) == base

    def test_reversal_complement(self):
        rng = np.random.default_rng(503)
        times = rng.uniform(0.1, 5.0, 30)
        events = rng.random(30) < 0.6
        events[0] = True
        risks = rng.normal(size=30)  # continuous, so no ties
        np.testing.assert_allclose(
            c_index(times, events, risks) + c_index(times, events, -risks), 1.0, rtol=1e-12
        )

    def test_time_ties_excluded(self):
        # strict-time pairs are (t=1a, t=2) concordant and (t=1b, t=2)
        # discordant; the tied pair (t=1a, t=1b) would add a third
        # concordant pair (2/3) if it were not excluded
        assert c_index([1, 1, 2], [1, 1, 1], [5, 1, 3]) == 0.5

    def test_no_comparable_pairs(self):
        with pytest.raises(NoComparablePairs):
            c_index([1.0], [1], [0.5])
        with pytest.raises(NoComparablePairs):
            c_index([1, 2], [0, 0], [0.1, 0.2])


def _exponential_model(w=(0.0,)):
    w = np.asarray(w, dtype=float)
    spec = ModelSpec(
        family=TargetFamily.MEV, parameterization=Parameterization.LINEAR_SHIFT,
        extractor=ExtractorSpec(input_dim=w.size, output_dim=w.size),
    )
    return FittedModel(
        spec=spec, scaler=LogTimeScaler(0.0, 1.0),
        head_params=np.concatenate([[0.0, softplus_inv(1.0)], w]),
        extractor_params=identity_params(spec.extractor),
        train_nll=0.0, validation_nll=0.0,
    )


class TestLogScore:
    def test_exact_reference(self):
        dist = conditional_distribution(_exponential_model(), np.zeros(1))
        model_log = _exponential_model()
        # switch family to logistic for the log 4 reference point
        spec = ModelSpec(
            family=TargetFamily.LOGISTIC, parameterization=Parameterization.LINEAR_SHIFT,
            extractor=ExtractorSpec(input_dim=1, output_dim=1),
        )
        logistic = FittedModel(
            spec=spec, scaler=model_log.scaler, head_params=model_log.head_params,
            extractor_params=model_log.extractor_params, train_nll=0.0, validation_nll=0.0,
        )
        dist = conditional_distribution(logistic, np.zeros(1))
        obs = Observation.exact(1.0, [0.0])
        np.testing.assert_allclose(log_score(dist, obs), np.log(4.0), rtol=1e-12)

    def test_right_censored_reference(self):
        dist = conditional_distribution(_exponential_model(), np.zeros(1))
        obs = Observation.right_censored(1.0, [0.0])
        np.testing.assert_allclose(log_score(dist, obs), 1.0, rtol=1e-12)

    def test_bitwise_equal_to_training_nll(self):
        rng = np.random.default_rng(509)
        model = _exponential_model(w=(0.4,))
        for _ in range(20):
            x = rng.normal(size=1)
            t = float(rng.uniform(0.2, 4.0))
            obs = (
                Observation.exact(t, x) if rng.random() < 0.5
                else Observation.right_censored(t, x)
            )
            dist = conditional_distribution(model, x)
            assert log_score(dist, obs) == nll_observation(model, obs)

    @pytest.mark.parametrize(
        "obs",
        [
            Observation.left_censored(1.0, [0.0]),
            Observation.interval(0.5, 1.5, [0.0]),
        ],
    )
    def test_unsupported_kinds_rejected(self, obs):
        dist = conditional_distribution(_exponential_model(), np.zeros(1))
        with pytest.raises(UnsupportedCensoringKind):
            log_score(dist, obs)


class _ExponentialCdf:
    """Closed-form standard exponential, used as an independent CRPS oracle."""

    def cdf(self, u):
        return -np.expm1(-np.asarray(u, dtype=float))

    def survivor(self, u):
        return np.exp(-np.asarray(u, dtype=float))


class _UniformCdf:
    def __init__(self, width):
        self.width = width

    def cdf(self, u):
        return np.clip(np.asarray(u, dtype=float) / self.width, 0.0, 1.0)

    def survivor(self, u):
        return 1.0 - self.cdf(u)


class _StepCdf:
    def __init__(self, at):
        self.at = at

    def cdf(self, u):
        return (np.asarray(u, dtype=float) >= self.at).astype(float)

    def survivor(self, u):
        return 1.0 - self.cdf(u)


class _NoisyCdf:
    """Pathological pseudo-CDF that defeats grid doubling."""

    def cdf(self, u):
        return 0.5 + 0.5 * np.sin(1e6 * np.asarray(u, dtype=float))

    def survivor(self, u):
        return 1.0 - self.cdf(u)


class TestCrps:
    def test_exponential_event_closed_form(self):
        # int_0^1 (1-e^-u)^2 du + int_1^50 e^-2u du = 2/e - 1/2 (up to e^-100)
        val = crps(_ExponentialCdf(), 1.0, True, 50.0)
        np.testing.assert_allclose(val, 0.23575888234288467, rtol=0, atol=1e-6)

    def test_exponential_censored_closed_form(self):
        val = crps(_ExponentialCdf(), 1.0, False, 50.0)
        np.testing.assert_allclose(val, 0.16809124072457832, rtol=0, atol=1e-6)

    def test_uniform_segment_event(self):
        # piecewise-quadratic integrands: [t^3 + (c-t)^3] / (3 c^2) with c=2,
        # t=1; t_max=10 keeps the derivative kink at u=c resolvable within
        # the panel cap (the value is t_max-independent past u=c)
        val = crps(_UniformCdf(2.0), 1.0, True, 10.0)
        np.testing.assert_allclose(val, 1.0 / 6.0, rtol=0, atol=1e-6)

    def test_uniform_segment_censored(self):
        val = crps(_UniformCdf(2.0), 1.0, False, 50.0)
        np.testing.assert_allclose(val, 1.0 / 12.0, rtol=0, atol=1e-6)

    def test_point_mass_scores_zero(self):
        assert crps(_StepCdf(1.0), 1.0, True, 50.0) == 0.0

    def test_zero_mass_below_censored_time(self):
        assert crps(_StepCdf(3.0), 1.0, False, 50.0) == 0.0

    def test_censored_drops_upper_integral(self):
        dist = _ExponentialCdf()
        lower_only = crps(dist, 1.0, False, 50.0)
        both = crps(dist, 1.0, True, 50.0)
        assert both > lower_only

    def test_nonconvergent_quadrature_raises(self):
        with pytest.raises(QuadratureNonConvergence):
            crps(_NoisyCdf(), 1.0, True, 50.0)


def _scored_dataset(rng, n, p=1):
    obs = []
    for _ in range(n):
        x = rng.normal(size=p)
        t = float(rng.uniform(0.2, 4.0))
        if rng.random() < 0.3:
            obs.append(Observation.right_censored(t, x))
        else:
            obs.append(Observation.exact(t, x))
    return SurvivalDataset(obs)


class TestEvaluate:
    def test_baseline_c_index_is_half(self):
        rng = np.random.default_rng(601)
        ds = _scored_dataset(rng, 25)
        spec = ModelSpec(
            family=TargetFamily.LOGISTIC, parameterization=Parameterization.BASELINE,
            bernstein_order=3,
        )
        from tramsurv.transform import init_head

        model = FittedModel(
            spec=spec, scaler=LogTimeScaler(np.log(0.2), np.log(4.0)),
            head_params=init_head(spec), extractor_params=np.zeros(0),
            train_nll=0.0, validation_nll=0.0,
        )
        report = evaluate(model, ds)
        assert report.c_index == 0.5

    def test_single_subject_scores_without_c_index(self):
        ds = SurvivalDataset([Observation.exact(1.0, [0.0])])
        report = evaluate(_exponential_model(), ds)
        assert report.c_index is None
        assert report.n_subjects == 1
        assert len(report.per_subject) == 1
        assert np.isfinite(report.per_subject[0].nll)
        assert np.isfinite(report.per_subject[0].crps)

    def test_permutation_invariant_aggregates(self):
        rng = np.random.default_rng(603)
        ds = _scored_dataset(rng, 20)
        model = _exponential_model(w=(0.5,))
        report = evaluate(model, ds)
        perm = [ds.observations[i] for i in rng.permutation(20)]
        report_p = evaluate(model, SurvivalDataset(perm))
        np.testing.assert_allclose(report_p.mean_nll, report.mean_nll, rtol=1e-12)
        np.testing.assert_allclose(report_p.mean_crps, report.mean_crps, rtol=1e-12)
        assert report_p.c_index == report.c_index
        assert report_p.n_comparable_pairs == report.n_comparable_pairs

    def test_means_match_per_subject_entries(self):
        rng = np.random.default_rng(605)
        ds = _scored_dataset(rng, 15)
        report = evaluate(_exponential_model(), ds)
        np.testing.assert_allclose(
            report.mean_nll, np.mean([s.nll for s in report.per_subject]), rtol=1e-12
        )
        np.testing.assert_allclose(
            report.mean_crps, np.mean([s.crps for s in report.per_subject]), rtol=1e-12
        )

    def test_left_censored_rejected_in_scoring(self):
        ds = SurvivalDataset(
            [Observation.exact(1.0, [0.0]), Observation.left_censored(0.5, [0.0])]
        )
        with pytest.raises(UnsupportedCensoringKind):
            evaluate(_exponential_model(), ds)

    def test_report_serializes(self):
        import json

        rng = np.random.default_rng(607)
        ds = _scored_dataset(rng, 8)
        report = evaluate(_exponential_model(), ds)
        doc = json.loads(report.to_json())
        assert doc["n_subjects"] == 8
        assert len(doc["per_subject"]) == 8
        assert doc["t_max"] >= max(o.time_lower for o in ds.observations)


class TestPropriety:
    def test_true_model_wins_sign_test(self):
        """Mean log-score of the generating model beats a perturbed model on
        most of 20 seeds (one-sided sign test, level 0.05 needs >= 15)."""
        true_model = _exponential_model(w=(0.6,))
        wrong_model = _exponential_model(w=(1.6,))
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(700 + seed)
            xs = rng.uniform(-1.0, 1.0, size=(120, 1))
            score_true = 0.0
            score_wrong = 0.0
            for x in xs:
                dist_true = conditional_distribution(true_model, x)
                u = float(rng.uniform(1e-6, 1.0 - 1e-6))
                t = float(dist_true.quantile(u))
                obs = Observation.exact(t, x)
                score_true += log_score(dist_true, obs)
                score_wrong += log_score(conditional_distribution(wrong_model, x), obs)
            if score_true <= score_wrong:
                wins += 1
        assert wins >= 15
