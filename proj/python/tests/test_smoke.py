import math

import numpy as np
import pytest

import cweibull as cw


def exponential_model():
    spec = cw.ModelSpec([cw.GroupSpec([0], "only")], p=1)
    theta = cw.Theta([cw.GroupParams(0.0, [0.0], 1.0)])
    return spec, theta


def test_exponential_closed_forms():
    spec, theta = exponential_model()
    assert cw.survival(theta, spec, [0.3], 2.0) == pytest.approx(math.exp(-2.0))
    assert cw.hazard(theta, spec, [0.3], 2.0) == pytest.approx(1.0)
    assert cw.winning_probability(theta, spec, [0.3], 2.0) == pytest.approx([1.0])
    et = cw.expected_survival_time(theta, spec, [0.3])
    assert et.estimate == pytest.approx(1.0, abs=1e-6)
    assert et.tail_lower <= et.tail_upper


def test_simulate_and_fit():
    sc = cw.builtin_scenario(1, 0.1, seed=3)
    sim = cw.generate(sc)
    data = sim.data
    assert len(data) == 1000
    assert 0.05 < sim.realized_censoring_rate < 0.15
    cfg = cw.FitConfig()
    cfg.n_starts = 1
    fit = cw.fit_em(sc.model, data, cw.PenaltyConfig(0.5, 0.2), cfg)
    trace = np.asarray(fit.loglik_trace)
    assert np.all(np.diff(trace) > -1e-8)
    assert len(fit.std_errors) == len(sc.truth.flatten())
    eta = np.asarray(fit.winning_probs)
    assert eta.shape == (1000, 3)
    assert np.allclose(eta.sum(axis=1), 1.0)
    labels = cw.Theta.flat_labels(sc.model)
    assert labels[0] == "CF1.alpha"


def test_dataset_from_numpy_and_single_group_fit():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(300, 2))
    t = np.exp(0.5 + x @ np.array([0.7, -0.4]) + 0.8 * np.log(rng.exponential(size=300)))
    data = cw.Dataset(t.tolist(), [1] * 300, x)
    spec = cw.ModelSpec([cw.GroupSpec([0, 1])], p=2)
    cfg = cw.FitConfig()
    cfg.n_starts = 1
    cfg.epsilon = 1e-10
    em = cw.fit_em(spec, data, config=cfg)
    direct = cw.fit_weibull_aft(data, [0, 1])
    assert em.log_likelihood == pytest.approx(direct.log_likelihood, abs=1e-6)
    assert em.theta_hat.groups[0].sigma == pytest.approx(direct.params.sigma, abs=1e-4)


def test_metrics():
    t = [1.0, 2.0, 3.0, 4.0]
    d = [1, 1, 1, 1]
    assert cw.concordance_index([4, 3, 2, 1], t, d).value == 1.0
    roc = cw.time_dependent_roc([4, 3, 2, 1], t, d, 2.5)
    assert roc.auc == 1.0
    with pytest.raises(cw.DegenerateHorizonError):
        cw.time_dependent_roc([4, 3, 2, 1], t, d, 0.5)


def test_errors_map_to_exceptions():
    with pytest.raises(cw.SpecError):
        cw.ModelSpec([cw.GroupSpec([0]), cw.GroupSpec([0])], p=1)
    with pytest.raises(cw.Error):
        cw.builtin_scenario(4, 0.1)
    spec, theta = exponential_model()
    with pytest.raises(cw.DomainError):
        cw.risk_marker(theta, spec, [0.0], cw.MarkerMode.one_minus_survival_at, 0.0)
