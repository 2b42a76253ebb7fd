import numpy as np
import pytest
from scipy.stats import gaussian_kde, norm
from statsmodels.stats.diagnostic import lilliefors as sm_lilliefors

from grswatermark.attacks import AttackSpec
from grswatermark.detector import (
    GRID_POINTS,
    Context,
    DetectorModel,
    Pipeline,
    build_empirical_pdf,
    calibrate,
    decide,
    false_alarm_integral,
    is_zero_watermark_trial,
    likelihood_ratio,
    lilliefors,
    lilliefors_critical_value,
    model_context,
    model_from_csv,
    model_to_csv,
    np_threshold,
    simulate,
)
from grswatermark.errors import CalibrationError, DegenerateError, InsufficientDataError


@pytest.fixture(scope="module")
def gaussian_pdfs():
    r = np.random.default_rng(2)
    return build_empirical_pdf(r.normal(0, 0.1, 10**5)), build_empirical_pdf(r.normal(0.6, 0.1, 10**5))


def test_kde_matches_scipy(rng):
    x = rng.normal(0.1, 0.05, 500)
    pdf = build_empirical_pdf(x)
    assert len(pdf.grid) == GRID_POINTS
    assert pdf.bandwidth == pytest.approx(1.06 * x.std(ddof=1) * 500 ** -0.2)
    ref = gaussian_kde(x, bw_method=pdf.bandwidth / x.std(ddof=1))(pdf.grid)
    # mass inside [-1, 1] is essentially 1, so renormalization is negligible
    np.testing.assert_allclose(pdf.density, ref, atol=1e-6 * ref.max())


def test_binned_kde_close_to_exact(rng):
    x = rng.normal(0.0, 0.1, 20000)
    pdf = build_empirical_pdf(x)
    ref = gaussian_kde(x, bw_method=pdf.bandwidth / x.std(ddof=1))(pdf.grid)
    assert np.max(np.abs(pdf.density - ref)) <= 1e-3 * ref.max()


def test_pdf_invariants(rng):
    pdf = build_empirical_pdf(0.3 + 1e-4 * rng.normal(size=200))
    assert pdf.integral() == pytest.approx(1.0, abs=1e-6)
    assert np.all(pdf.density >= 0)
    assert abs(pdf.grid[np.argmax(pdf.density)] - 0.3) < 0.002


def test_pdf_mean_consistent(rng):
    x = rng.normal(size=10**4)
    x = 0.1 * x[np.abs(x) <= 1]
    m, _ = build_empirical_pdf(x).moments()
    assert m == pytest.approx(x.mean(), abs=0.01)


def test_pdf_errors():
    with pytest.raises(InsufficientDataError):
        build_empirical_pdf(np.linspace(0, 0.1, 29))
    with pytest.raises(DegenerateError):
        build_empirical_pdf(np.zeros(50))


def test_gaussian_oracle(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    th = np_threshold(p0, p1, 0.01)
    assert th.rho_threshold == pytest.approx(norm.ppf(0.99) * 0.1, abs=0.01)
    assert th.achieved_pfa == pytest.approx(0.01, abs=1e-4)
    assert th.converged


def test_pfa_half_is_median(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    th = np_threshold(p0, p1, 0.5)
    assert th.rho_threshold == pytest.approx(p0.quantile(0.5), abs=p0.grid[1] - p0.grid[0])
    assert abs(th.rho_threshold) < 0.005


def test_np_threshold_validation(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    with pytest.raises(ValueError):
        np_threshold(p0, p1, 0.0)
    with pytest.raises(ValueError):
        np_threshold(p0, p1, 0.6)


def test_false_alarm_integral_by_hand():
    grid = np.array([0.0, 1.0, 2.0])
    p0 = np.array([1.0, 1.0, 1.0])
    lr = np.array([0.0, 2.0, 4.0])
    # L > 1 from x = 0.5 on: area 1.5
    assert false_alarm_integral(grid, p0, lr, 1.0) == pytest.approx(1.5)
    assert false_alarm_integral(grid, p0, lr, 5.0) == 0.0
    assert false_alarm_integral(grid, p0, lr, -1.0) == pytest.approx(2.0)


def test_false_alarm_continuous_in_gamma(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    lr = likelihood_ratio(p0, p1)
    g = np.exp(np.linspace(-5, 5, 400))
    vals = np.array([false_alarm_integral(p0.grid, p0.density, lr, x) for x in g])
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.max(np.abs(np.diff(vals))) < 0.01


def test_decisions(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    th = np_threshold(p0, p1, 0.01)
    model = DetectorModel(p0, p1, th.gamma, th.rho_threshold, 0.01, th.achieved_pfa)
    assert decide(1.0, model).hypothesis == "H1"
    assert decide(0.0, model).hypothesis == "H0"
    assert decide(-1.0, model).hypothesis == "H0"
    d = decide(model.rho_threshold, model)
    assert d.rho_decision == "H0"
    with pytest.raises(ValueError):
        decide(1.5, model)


def test_tie_goes_to_h0(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    lr0 = float(likelihood_ratio(p0, p1, 0.2))
    model = DetectorModel(p0, p1, lr0, 0.2, 0.01)
    assert decide(0.2, model).hypothesis == "H0"


def test_lr_decision_agrees_with_rho_threshold_on_h0(gaussian_pdfs):
    p0, p1 = gaussian_pdfs
    th = np_threshold(p0, p1, 0.01)
    model = DetectorModel(p0, p1, th.gamma, th.rho_threshold, 0.01)
    x = np.random.default_rng(9).normal(0, 0.1, 2000)
    x = x[np.abs(x - th.rho_threshold) > 0.005]
    lr = [decide(v, model) for v in x]
    assert all(d.hypothesis == d.rho_decision for d in lr)


def test_lilliefors_matches_statsmodels(rng):
    for n in (20, 100, 1000):
        x = rng.standard_t(5, size=n)
        ours = lilliefors(x)
        ref, _ = sm_lilliefors(x, dist="norm", pvalmethod="table")
        assert ours.statistic == pytest.approx(ref, abs=1e-12)


def test_lilliefors_critical_values():
    assert lilliefors_critical_value(100) == pytest.approx(0.0886)
    assert lilliefors_critical_value(20) == pytest.approx(0.1919, abs=2e-3)
    assert lilliefors_critical_value(10) > lilliefors_critical_value(30)
    with pytest.raises(InsufficientDataError):
        lilliefors_critical_value(4)


def test_lilliefors_errors():
    with pytest.raises(DegenerateError):
        lilliefors(np.ones(20))
    with pytest.raises(InsufficientDataError):
        lilliefors([1.0, 2.0, 3.0, 4.0])


def test_lilliefors_large_n(rng):
    assert lilliefors(rng.uniform(size=10**4)).reject_at_5pct
    rejects = sum(lilliefors(rng.normal(size=10**4)).reject_at_5pct for _ in range(200))
    assert 4 <= rejects <= 16


def test_zero_watermark_schedule():
    flags = [is_zero_watermark_trial(t, 0.5) for t in range(10)]
    assert sum(flags) == 5 and flags[:4] == [False, True, False, True]
    assert not any(is_zero_watermark_trial(t, 0.0) for t in range(10))
    assert all(is_zero_watermark_trial(t, 1.0) for t in range(10))


@pytest.fixture(scope="module")
def small_calibration(fixture_images):
    ctx = Context("grs4", AttackSpec("jpeg", quality=70))
    return calibrate(ctx, [fixture_images["blobs"], fixture_images["bandlimited_noise"]], 40, 0.01, seed=3)


def test_calibration_separates(small_calibration):
    s = small_calibration.samples
    assert s.h1.shape == s.h0.shape == (80,)
    se = np.sqrt(s.h1.var(ddof=1) / 80 + s.h0.var(ddof=1) / 80)
    assert (s.h1.mean() - s.h0.mean()) / se >= 5
    m = small_calibration.model
    assert m.gamma > 0 and np.isfinite(m.gamma)
    assert m.context["wavelet"] == "grs4" and m.context["strength"] == 70


def test_calibration_deterministic(small_calibration, fixture_images):
    ctx = Context("grs4", AttackSpec("jpeg", quality=70))
    again = calibrate(ctx, [fixture_images["blobs"], fixture_images["bandlimited_noise"]], 40, 0.01, seed=3)
    assert model_to_csv(again.model) == model_to_csv(small_calibration.model)


def test_model_csv_round_trip(small_calibration):
    m = small_calibration.model
    back = model_from_csv(model_to_csv(m))
    assert back.gamma == m.gamma and back.rho_threshold == m.rho_threshold
    np.testing.assert_array_equal(back.pdf_h1.density, m.pdf_h1.density)
    ctx = model_context(back)
    assert ctx.wavelet == "grs4" and ctx.attack == AttackSpec("jpeg", quality=70)
    with pytest.raises(ValueError):
        model_from_csv("a,b\n")


def test_null_trials_without_attack_give_zero(fixture_images):
    pipe = Pipeline(Context("daubechies4", AttackSpec("none")), [fixture_images["blobs"]])
    s = simulate(pipe, 4, seed=1)
    np.testing.assert_allclose(s.h1, 1.0, atol=1e-9)
    # W = 0 trials (odd indices) see an identical image, rho defined as 0
    assert s.h0[1] == 0.0 and s.h0[3] == 0.0


def test_degenerate_calibration(fixture_images):
    with pytest.raises(CalibrationError):
        calibrate(Context("grs4", AttackSpec("none")), [fixture_images["blobs"]], 30)
    with pytest.raises(InsufficientDataError):
        calibrate(Context("grs4", AttackSpec("none")), [fixture_images["blobs"]], 10)
