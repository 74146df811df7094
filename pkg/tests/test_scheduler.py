import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transched.dataset import Decomposition, PSEUDO_INPUT, TimeSeriesSet
from transched.errors import ConfigError, DataError, NumericalError
from transched.evaluation import fit_metric
from transched.scheduler import (
    Prior,
    classify,
    log_evidence,
    pooled_sigma2,
    schedule_estimate,
    write_sample_trace,
    write_window_trace,
)
from transched.transmissibility import (
    FirModel,
    TransmissibilityFamily,
    predict_record,
    train_families,
)

from conftest import make_switching_record, make_training_record


def _aux_model(theta, sigma2, order=0, input_dim=1, dof=100):
    return FirModel(order=order, input_dim=input_dim, theta=np.asarray(theta, float),
                    sigma2=sigma2, dof=dof,
                    input_channel_names=tuple(f"u{i}" for i in range(input_dim)),
                    output_channel_name="v")


def _aux_family(models, labels=None):
    labels = labels or tuple(f"Q{i + 1}" for i in range(len(models)))
    return TransmissibilityFamily(kind="auxiliary", labels=tuple(labels),
                                  models=tuple(models),
                                  decomposition=Decomposition(aux_output_index=0))


def _window(u, v):
    u = np.atleast_2d(np.asarray(u, float))
    names = tuple(f"u{i}" for i in range(u.shape[0])) + ("v",)
    roles = tuple([PSEUDO_INPUT] * (u.shape[0] + 1))
    return TimeSeriesSet(sample_rate=1.0, names=names, roles=roles,
                         data=np.vstack([u, np.asarray(v, float)[None, :]]))


# ------------------------------------------------------------- log_evidence


def test_log_evidence_single_row_zero_residual():
    # one regression row, exact model: L = log(p) - log(sigma)
    model = _aux_model([2.0], sigma2=0.25)
    val = log_evidence(model, np.array([[3.0]]), np.array([6.0]), prior_q=0.4)
    assert val == pytest.approx(math.log(0.4) - math.log(0.5), rel=1e-14)


def test_log_evidence_equal_models_equal_value():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=(1, 30)), rng.normal(size=30)
    m1 = _aux_model([0.7, -0.1], sigma2=0.5, order=1)
    m2 = _aux_model([0.7, -0.1], sigma2=0.5, order=1)
    assert log_evidence(m1, u, v, 0.5) == log_evidence(m2, u, v, 0.5)


def test_log_evidence_decreases_with_residual():
    model = _aux_model([1.0], sigma2=1.0)
    u = np.ones((1, 10))
    vals = [log_evidence(model, u, np.ones(10) * (1.0 + eps), 0.5)
            for eps in (0.0, 0.5, 1.0)]
    assert vals[0] > vals[1] > vals[2]


def test_log_evidence_zero_prior_excludes():
    model = _aux_model([1.0], sigma2=1.0)
    assert log_evidence(model, np.ones((1, 5)), np.ones(5), 0.0) == -math.inf


def test_log_evidence_zero_variance_paths():
    model = _aux_model([1.0], sigma2=0.0)
    u = np.ones((1, 5))
    assert log_evidence(model, u, np.ones(5), 0.5) == math.inf
    with pytest.warns(RuntimeWarning, match="zero residual variance"):
        assert log_evidence(model, u, 2.0 * np.ones(5), 0.5) == -math.inf


def test_log_evidence_window_too_short():
    model = _aux_model([0.1, 0.2, 0.3], sigma2=1.0, order=2)
    with pytest.raises(DataError, match="insufficient samples"):
        log_evidence(model, np.ones((1, 2)), np.ones(2), 0.5)


# ----------------------------------------------------------------- classify


def test_classify_identical_models_split_posterior():
    rng = np.random.default_rng(1)
    m = _aux_model([0.4], sigma2=0.3)
    fam = _aux_family([m, _aux_model([0.4], sigma2=0.3)])
    win = _window(rng.normal(size=(1, 12)), rng.normal(size=12))
    res = classify(fam, win, Prior.uniform(2))
    np.testing.assert_array_equal(res.posterior, [0.5, 0.5])
    assert res.chosen == 0  # tie broken toward the first label


def test_classify_degenerate_prior_forces_choice():
    rng = np.random.default_rng(2)
    good = _aux_model([10.0], sigma2=1e-6)
    bad = _aux_model([0.0], sigma2=1e-6)
    fam = _aux_family([bad, good])
    u = rng.normal(size=(1, 12))
    win = _window(u, 10.0 * u[0])  # data matches the excluded member
    res = classify(fam, win, Prior(weights=np.array([1.0, 0.0])))
    np.testing.assert_array_equal(res.posterior, [1.0, 0.0])
    assert res.chosen == 0


def test_classify_picks_matching_model():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(1, 40))
    v = 2.0 * u[0] + rng.normal(0.0, 0.1, 40)
    fam = _aux_family([_aux_model([2.0], sigma2=0.01), _aux_model([-1.0], sigma2=0.01)])
    res = classify(fam, _window(u, v), Prior.uniform(2))
    assert res.chosen == 0
    assert res.posterior[0] > 0.999999


def test_classify_all_excluded():
    fam = _aux_family([_aux_model([1.0], 0.0), _aux_model([2.0], 0.0)])
    win = _window(np.ones((1, 6)), 5.0 * np.ones(6))
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NumericalError, match="no admissible model"):
            classify(fam, win, Prior.uniform(2))


def test_classify_window_too_short():
    fam = _aux_family([_aux_model([1.0, 0.0], sigma2=1.0, order=1)])
    win = _window(np.ones((1, 1)), np.ones(1))
    with pytest.raises(DataError, match="too short"):
        classify(fam, win, Prior.uniform(1))


def test_classify_prior_length_checked():
    fam = _aux_family([_aux_model([1.0], 1.0)])
    win = _window(np.ones((1, 6)), np.ones(6))
    with pytest.raises(ConfigError, match="weights"):
        classify(fam, win, Prior.uniform(2))


def test_classify_ambiguity_flag():
    rng = np.random.default_rng(4)
    u = rng.normal(size=(1, 20))
    v = 1.5 * u[0]
    near1 = _aux_model([1.5], sigma2=1.0)
    near2 = _aux_model([1.5000001], sigma2=1.0)
    far = _aux_model([-3.0], sigma2=1.0)
    assert classify(_aux_family([near1, near2]), _window(u, v), Prior.uniform(2)).ambiguous
    assert not classify(_aux_family([near1, far]), _window(u, v), Prior.uniform(2)).ambiguous


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_classify_posterior_normalized(seed):
    rng = np.random.default_rng(seed)
    q = int(rng.integers(2, 6))
    fam = _aux_family(
        [_aux_model(rng.normal(size=2), float(rng.uniform(0.01, 2.0)), order=1)
         for _ in range(q)]
    )
    win = _window(rng.normal(size=(1, 15)), rng.normal(size=15))
    res = classify(fam, win, Prior.uniform(q))
    assert abs(float(res.posterior.sum()) - 1.0) <= 1e-12
    assert res.chosen == int(np.argmax(res.log_evidence))
    assert res.chosen == int(np.argmax(res.posterior))


def test_prior_scaling_does_not_change_choice():
    rng = np.random.default_rng(5)
    fam = _aux_family([_aux_model([1.1], 0.5), _aux_model([0.3], 0.8)])
    win = _window(rng.normal(size=(1, 10)), rng.normal(size=10))
    w = np.array([0.3, 0.7])
    res1 = classify(fam, win, Prior.from_weights(w))
    res2 = classify(fam, win, Prior.from_weights(10.0 * w))
    assert res1.chosen == res2.chosen
    np.testing.assert_allclose(res1.posterior, res2.posterior, atol=1e-15)


def test_classify_matches_direct_bayes_formula():
    # same posteriors as the non-log likelihood-times-prior normalization
    rng = np.random.default_rng(6)
    u = rng.normal(size=(1, 8))
    v = rng.normal(size=8)
    models = [_aux_model([0.5], 0.7), _aux_model([-0.2], 1.3), _aux_model([1.0], 0.4)]
    prior = Prior.from_weights([0.2, 0.5, 0.3])
    fam = _aux_family(models)
    res = classify(fam, _window(u, v), prior)
    direct = []
    n_rows = 8  # order 0: every sample yields a row
    for k, m in enumerate(models):
        r = v - u[0] * m.theta[0]
        lik = (2.0 * math.pi * m.sigma2) ** (-n_rows / 2.0) * math.exp(
            -float(r @ r) / (2.0 * m.sigma2)
        )
        direct.append(lik * prior.weights[k])
    direct = np.array(direct) / sum(direct)
    np.testing.assert_allclose(res.posterior, direct, rtol=1e-12)
    assert res.chosen == int(np.argmax(direct))


# ------------------------------------------------------------ pooled variance


def test_pooled_sigma2_dof_weighted():
    fam = _aux_family([_aux_model([1.0], 2.0, dof=10), _aux_model([1.0], 5.0, dof=30)])
    assert pooled_sigma2(fam) == pytest.approx((10 * 2.0 + 30 * 5.0) / 40.0)


def test_classify_pooled_uses_common_variance():
    rng = np.random.default_rng(7)
    u = rng.normal(size=(1, 20))
    v = 1.0 * u[0] + rng.normal(0.0, 0.05, 20)
    # the matching model has a huge variance, the wrong one a tiny one:
    # full-variance Bayes can be fooled by the variance term, pooled cannot
    m_match = _aux_model([1.0], sigma2=4.0, dof=50)
    m_wrong = _aux_model([0.9], sigma2=0.004, dof=50)
    fam = _aux_family([m_wrong, m_match])
    pooled = classify(fam, _window(u, v), Prior.uniform(2), pooled=True)
    assert pooled.chosen == 1  # with equal variances only the residual counts


# ---------------------------------------------------------- schedule_estimate


@pytest.fixture(scope="module")
def trained_families(quarter_car_systems):
    records = [
        make_training_record(quarter_car_systems, label, 1000, seed=900 + i,
                             snr=50.0)
        for i, label in enumerate(("C1", "C2"))
    ]
    return train_families(records, Decomposition(aux_output_index=1), order=10)


def test_schedule_single_member_family(quarter_car_systems, trained_families):
    g, h = trained_families
    g1 = TransmissibilityFamily(kind="primary", labels=("C1",), models=(g.models[0],))
    h1 = TransmissibilityFamily(kind="auxiliary", labels=("C1",), models=(h.models[0],),
                                decomposition=h.decomposition)
    online = make_training_record(quarter_car_systems, "C2", 200, seed=55, snr=50.0)
    trace = schedule_estimate(g1, h1, online, Prior.uniform(1), window_len=20)
    assert trace.chosen_labels() == ["C1"] * 10
    direct = predict_record(g.models[0], online)
    np.testing.assert_allclose(trace.estimates[10:], direct, rtol=0, atol=1e-12)


def test_schedule_quarter_car_switching(quarter_car_systems, trained_families):
    g, h = trained_families
    online = make_switching_record(
        quarter_car_systems, (("C1", 80), ("C2", 80)), seed=77, snr=50.0
    )
    trace = schedule_estimate(g, h, online, Prior.uniform(2), window_len=20)
    assert trace.chosen_labels() == ["C1"] * 4 + ["C2"] * 4
    for k, res in enumerate(trace.windows):
        true_idx = 0 if k < 4 else 1
        assert res.posterior[true_idx] > 0.99
    # burn-in carry: every sample after the global first n has an estimate
    assert np.all(np.isnan(trace.estimates[:10]))
    assert np.all(np.isfinite(trace.estimates[10:]))
    assert trace.majority_label() in ("C1", "C2")


def test_schedule_stationary_record_beats_wrong_model(quarter_car_systems,
                                                      trained_families):
    g, h = trained_families
    online = make_training_record(quarter_car_systems, "C2", 400, seed=88, snr=50.0)
    trace = schedule_estimate(g, h, online, Prior.uniform(2), window_len=20)
    assert all(label == "C2" for label in trace.chosen_labels())
    measured = online.target()
    mask = np.isfinite(trace.estimates)
    fit_sched = fit_metric(measured[mask], trace.estimates[mask])
    fit_wrong = fit_metric(measured[10:], predict_record(g.member("C1"), online))
    assert fit_sched >= fit_wrong


def test_schedule_skips_short_remainder(quarter_car_systems, trained_families):
    g, h = trained_families
    online = make_training_record(quarter_car_systems, "C1", 165, seed=99, snr=50.0)
    trace = schedule_estimate(g, h, online, Prior.uniform(2), window_len=20)
    assert len(trace.windows) == 8
    assert trace.skipped == ((9, 160, 165),)
    assert np.all(np.isnan(trace.estimates[160:]))
    assert trace.sample_labels[160:] == (None,) * 5
    assert np.all(np.isfinite(trace.estimates[10:160]))


def test_schedule_record_shorter_than_one_window(quarter_car_systems,
                                                 trained_families):
    g, h = trained_families
    online = make_training_record(quarter_car_systems, "C1", 8, seed=14, snr=50.0)
    trace = schedule_estimate(g, h, online, Prior.uniform(2), window_len=20)
    assert trace.windows == () and trace.skipped == ((1, 0, 8),)
    assert np.all(np.isnan(trace.estimates))
    with pytest.raises(DataError, match="no classified windows"):
        trace.majority_label()


def test_schedule_window_must_exceed_order(quarter_car_systems, trained_families):
    g, h = trained_families
    online = make_training_record(quarter_car_systems, "C1", 100, seed=12, snr=50.0)
    with pytest.raises(ConfigError, match="exceed the FIR order"):
        schedule_estimate(g, h, online, Prior.uniform(2), window_len=10)


def test_schedule_missing_channel(trained_families):
    g, h = trained_families
    bad = TimeSeriesSet(sample_rate=10.0, names=("other",), roles=(PSEUDO_INPUT,),
                        data=np.zeros((1, 50)))
    with pytest.raises(DataError, match="missing channel"):
        schedule_estimate(g, h, bad, Prior.uniform(2), window_len=20)


# ------------------------------------------------------------------- traces


def test_trace_csvs(tmp_path, quarter_car_systems, trained_families):
    g, h = trained_families
    online = make_switching_record(
        quarter_car_systems, (("C1", 80), ("C2", 80)), seed=13, snr=50.0
    )
    trace = schedule_estimate(g, h, online, Prior.uniform(2), window_len=20)
    wpath, spath = tmp_path / "w.csv", tmp_path / "s.csv"
    write_window_trace(trace, wpath)
    write_sample_trace(trace, online, spath)

    wlines = wpath.read_text().splitlines()
    assert wlines[0].startswith("# format:")
    assert wlines[1] == ("window_id,start_sample,end_sample,chosen_label,"
                         "L_1,L_2,posterior_1,posterior_2,ambiguous")
    assert len(wlines) == 2 + 8
    first = wlines[2].split(",")
    assert first[:4] == ["1", "1", "20", "C1"]
    post = [float(first[6]), float(first[7])]
    assert abs(sum(post) - 1.0) <= 1e-12

    slines = spath.read_text().splitlines()
    assert len(slines) == 2 + 160
    r1 = slines[2].split(",")  # first sample: measured, no estimate, labeled
    assert r1[0] == "1" and r1[2] == "" and r1[3] == "C1"
    r11 = slines[12].split(",")
    assert r11[0] == "11" and float(r11[2]) == trace.estimates[10]

    # byte-identical rewrite
    write_window_trace(trace, tmp_path / "w2.csv")
    assert (tmp_path / "w.csv").read_bytes() == (tmp_path / "w2.csv").read_bytes()


# -------------------------------------------------------------------- prior


def test_prior_validation():
    with pytest.raises(ConfigError, match="non-negative"):
        Prior(weights=np.array([0.5, -0.5, 1.0]))
    with pytest.raises(ConfigError, match="sum to 1"):
        Prior(weights=np.array([0.5, 0.4]))
    with pytest.raises(ConfigError, match="positive sum"):
        Prior.from_weights([0.0, 0.0])
    uniform = Prior.uniform(3)
    assert abs(float(uniform.weights.sum()) - 1.0) <= 1e-12
