import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from knobrag.corpus import DebugQuestion
from knobrag.embed import HashingEmbedder
from knobrag.errors import (
    DegenerateSample,
    EmptyInput,
    MalformedRegistry,
    MissingCatalogEntry,
    SeriesTooShort,
    ZeroMad,
)
from knobrag.telemetry import (
    AnomalyNarrative,
    AnomalyPoint,
    MetricCatalog,
    MetricCatalogEntry,
    TelemetrySeries,
    analyze_series,
    analyze_telemetry,
    default_max_anomalies,
    detect_anomalies,
    deviation_scores,
    esd_critical_value,
    infer_period,
    load_catalog,
    load_series_csv,
    load_telemetry_dir,
    mad,
    narrate,
    narratives_of,
    normal_value,
    select_relevant,
    stl_decompose,
    write_series_csv,
)
from knobrag.telemetry.esd import MAD_TO_SIGMA, esd_on_residuals, lower_median, t_quantile
from knobrag.telemetry.series import format_number
from knobrag.telemetry.stl import loess_smooth, low_pass_span, residual_scales, trend_span

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def _series(values, period=None, metric="m"):
    values = np.asarray(values, dtype=float)
    return TelemetrySeries(metric, np.arange(values.size), values, period)


def _sinusoid(n=200, period=24, amp=10.0):
    return amp * np.sin(2 * np.pi * np.arange(n) / period)


class TestTelemetrySeries:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            TelemetrySeries("m", [1, 2, 3], [1.0, 2.0])

    def test_timestamps_strictly_increasing(self):
        with pytest.raises(ValueError):
            TelemetrySeries("m", [1, 2, 2], [1.0, 2.0, 3.0])

    def test_bad_period(self):
        with pytest.raises(ValueError):
            TelemetrySeries("m", [1, 2], [1.0, 2.0], period=0)

    def test_csv_round_trip(self, tmp_path):
        s = TelemetrySeries("qps", [10, 11, 12, 13], [1.5, 2.0, -3.25, 46492.0])
        path = tmp_path / "qps.csv"
        write_series_csv(s, path)
        assert path.read_text().splitlines()[0] == "timestamp,value"
        back = load_series_csv(path)
        assert back.metric == "qps"
        assert back.timestamps.tolist() == [10, 11, 12, 13]
        assert back.values.tolist() == [1.5, 2.0, -3.25, 46492.0]

    def test_csv_without_header(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1,2.5\n2,3\n\n3,4\n")
        assert load_series_csv(path, period=7).period == 7
        assert load_series_csv(path).values.tolist() == [2.5, 3.0, 4.0]

    def test_csv_bad_row(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("timestamp,value\n1,2\n2,abc\n")
        with pytest.raises(ValueError):
            load_series_csv(path)

    def test_dir_in_name_order(self, tmp_path):
        for name in ("b", "a", "c"):
            write_series_csv(TelemetrySeries(name, [1], [1.0]), tmp_path / f"{name}.csv")
        (tmp_path / "notes.txt").write_text("ignored")
        assert [s.metric for s in load_telemetry_dir(tmp_path)] == ["a", "b", "c"]


class TestCatalog:
    def test_load(self, tmp_path, small_registry):
        path = tmp_path / "catalog"
        path.write_text("# metric | explanation | knobs\n"
                        "buffer_reads | reads served by the pool | innodb_buffer_pool_size\n"
                        "\n"
                        "commits | commits per second | autocommit, unique_checks\n"
                        "uptime | seconds since start | \n")
        cat = load_catalog(path, small_registry)
        assert cat["commits"].related_knobs == ("autocommit", "unique_checks")
        assert cat["uptime"].related_knobs == ()
        with pytest.raises(MissingCatalogEntry):
            cat["nothing"]

    def test_unknown_knob(self, tmp_path, small_registry):
        path = tmp_path / "catalog"
        path.write_text("m | e | no_such_knob\n")
        with pytest.raises(MalformedRegistry):
            load_catalog(path, small_registry)
        assert load_catalog(path)["m"].related_knobs == ("no_such_knob",)

    def test_wrong_field_count(self, tmp_path):
        path = tmp_path / "catalog"
        path.write_text("m | e\n")
        with pytest.raises(MalformedRegistry):
            load_catalog(path)


class TestSTL:
    def test_constant(self):
        d = stl_decompose(np.full(48, 3.5), 12)
        assert np.abs(d.seasonal).max() < 1e-9
        assert np.abs(d.trend - 3.5).max() < 1e-9
        assert np.abs(d.residual).max() < 1e-9

    def test_pure_sinusoid(self):
        y = _sinusoid(240, 24, amp=2.0)
        d = stl_decompose(y, 24)
        assert np.abs(d.residual).max() < 0.01 * 2.0

    def test_sinusoid_plus_ramp(self):
        n = 240
        ramp = np.linspace(0.0, 20.0, n)
        d = stl_decompose(_sinusoid(n, 24, amp=3.0) + ramp, 24)
        interior = slice(n // 4, 3 * n // 4)
        assert np.abs(d.trend[interior] - ramp[interior]).max() < 0.02 * 20.0

    def test_sum_cannot_always_reproduce_input(self):
        # fit and residual both outweigh the value: their float sum lives on a coarser grid
        y, fit = np.float64(-13.21048632913019), np.float64(16.289878541897586)
        r = y - fit
        near = [r]
        for direction in (np.inf, -np.inf):
            x = r
            for _ in range(50):
                x = np.nextafter(x, direction)
                near.append(x)
        assert not any(fit + x == y for x in near)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(4, 300), st.sampled_from([None, 2, 4, 7, 12, 24]), st.integers(0, 2**32 - 1))
    def test_reconstruction_exact(self, n, period, seed):
        y = np.random.default_rng(seed).normal(scale=100.0, size=n)
        d = stl_decompose(y, period)
        assert np.array_equal(d.residual, y - d.seasonal - d.trend)
        assert d.seasonal.shape == d.trend.shape == d.residual.shape == (n,)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(48, 200), st.integers(0, 2**32 - 1), st.floats(-5, 5))
    def test_linear_in_input(self, n, seed, c):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=n), rng.normal(size=n)
        da, db, dab = stl_decompose(a, 12), stl_decompose(b, 12), stl_decompose(a + c * b, 12)
        assert np.allclose(dab.seasonal, da.seasonal + c * db.seasonal, atol=1e-9)
        assert np.allclose(dab.trend, da.trend + c * db.trend, atol=1e-9)

    @pytest.mark.parametrize("period", [4, 6, 12, 24])
    @pytest.mark.parametrize("cycles", [2, 3.5, 10, 25])
    def test_matches_statsmodels(self, period, cycles):
        from statsmodels.tsa.seasonal import STL
        n = int(cycles * period)
        rng = np.random.default_rng(period * 1000 + n)
        y = _sinusoid(n, period, 3.0) + 0.02 * np.arange(n) + rng.normal(size=n)
        ref = STL(y, period=period, seasonal=7, trend=trend_span(period), low_pass=low_pass_span(period),
                  seasonal_deg=1, trend_deg=1, low_pass_deg=1, robust=False,
                  seasonal_jump=1, trend_jump=1, low_pass_jump=1).fit(inner_iter=1, outer_iter=0)
        d = stl_decompose(y, period)
        assert np.abs(d.seasonal - ref.seasonal).max() < 1e-9
        assert np.abs(d.trend - ref.trend).max() < 1e-9

    def test_short_series_degraded(self):
        y = np.random.default_rng(0).normal(size=30)
        d = stl_decompose(y, 24)
        assert d.period is None
        assert np.array_equal(d.seasonal, np.zeros(30))
        assert np.array_equal(d.trend, loess_smooth(y, 5))

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            stl_decompose([1.0, 2.0, 3.0], None)

    def test_series_period_used(self):
        s = _series(_sinusoid(96, 12), period=12)
        assert stl_decompose(s).period == 12

    def test_infer_false_skips_inference(self):
        assert stl_decompose(_sinusoid(200, 24), infer=False).period is None

    def test_batch_columns_agree(self):
        from knobrag.telemetry.stl import stl_core
        rng = np.random.default_rng(2)
        y = rng.normal(size=(120, 3))
        s, t = stl_core(y, 12)
        for j in range(3):
            d = stl_decompose(y[:, j], 12)
            assert np.allclose(s[:, j], d.seasonal, atol=1e-12)
            assert np.allclose(t[:, j], d.trend, atol=1e-12)


class TestInferPeriod:
    def test_sinusoid(self):
        noise = np.random.default_rng(0).normal(scale=0.3, size=480)
        assert infer_period(_sinusoid(480, 24) + noise) == 24

    def test_with_trend(self):
        y = _sinusoid(600, 60) + np.linspace(0, 100, 600)
        assert infer_period(y) == 60

    def test_white_noise(self):
        assert infer_period(np.random.default_rng(1).normal(size=500)) is None

    def test_constant(self):
        assert infer_period(np.full(100, 2.0)) is None

    def test_too_short(self):
        assert infer_period(np.arange(8.0)) is None


class TestResidualScales:
    @staticmethod
    def _dense(n, period):
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            cols.append(stl_decompose(e, period, infer=False).residual)
        M = np.column_stack(cols)
        return np.sqrt((M ** 2).sum(axis=1))

    @pytest.mark.parametrize("n,period", [(10, None), (60, None), (49, 24), (100, 7), (200, 12), (400, 6)])
    def test_matches_dense_operator(self, n, period):
        assert np.allclose(residual_scales(n, period), self._dense(n, period), atol=1e-12)

    def test_white_noise_variance(self):
        rng = np.random.default_rng(3)
        draws = np.array([stl_decompose(rng.normal(size=120), 12).residual for _ in range(3000)])
        assert np.allclose(draws.std(axis=0), residual_scales(120, 12), rtol=0.08)

    def test_symmetric(self):
        s = residual_scales(500, 24)
        assert np.allclose(s, s[::-1], atol=1e-12)

    def test_two_cycles_have_no_residual(self):
        assert np.array_equal(residual_scales(48, 24), np.zeros(48))

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            residual_scales(3, None)


class TestMad:
    def test_constant(self):
        assert mad([4.0, 4.0, 4.0]) == 0.0

    def test_spike(self):
        assert mad([1, 2, 3, 4, 100]) == 1.0

    def test_symmetric(self):
        assert mad([-1, 0, 1]) == 1.0

    def test_even_length_lower_median(self):
        # lower median of [1, 2, 3, 10] is 2; deviations [1, 0, 1, 8]; lower median 1
        assert lower_median([3, 1, 10, 2]) == 2.0
        assert mad([1, 2, 3, 10]) == 1.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            mad([])

    @given(arrays(np.float64, st.integers(1, 50), elements=finite))
    def test_nonnegative_and_member(self, x):
        m = mad(x)
        assert m >= 0 and m in np.abs(x - lower_median(x))

    @given(arrays(np.float64, st.integers(1, 50), elements=finite), st.floats(-1e6, 1e6))
    def test_translation_invariant(self, x, c):
        assert mad(x + c) == pytest.approx(mad(x), abs=1e-9 * (1 + np.abs(x).max() + abs(c)))

    @given(arrays(np.float64, st.integers(1, 50), elements=finite), st.integers(-20, 20))
    def test_scales_exactly_by_powers_of_two(self, x, e):
        a = 2.0 ** e
        assert mad(a * x) == a * mad(x)

    @given(arrays(np.float64, st.integers(1, 50), elements=finite), st.floats(0, 1e3))
    def test_scale_equivariant(self, x, a):
        assert mad(a * x) == pytest.approx(a * mad(x), rel=1e-12, abs=1e-300)

    @given(arrays(np.float64, st.integers(0, 24).map(lambda k: 2 * k + 1), elements=finite), st.floats(-1e3, 0))
    def test_reflection_on_odd_lengths(self, x, a):
        assert mad(a * x) == pytest.approx(abs(a) * mad(x), rel=1e-12, abs=1e-300)

    def test_reflection_breaks_on_even_lengths(self):
        # the lower median of the mirrored sample is a different order statistic
        x = np.array([0.0, 1.0, 2.0, 2.0])
        assert mad(x) == 1.0 and mad(-x) == 0.0


class TestDeviationScores:
    def test_zero_mad(self):
        with pytest.raises(ZeroMad):
            deviation_scores([0, 0, 0, 10])

    def test_spike_score(self):
        assert deviation_scores([1, 2, 3, 4, 100])[4] == 97.0

    def test_constructed_five(self):
        spread = np.array([-2.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0])
        med, m = lower_median(spread), mad(spread)
        x = np.append(spread, med + 5 * m)
        scores = deviation_scores(x)
        assert m == 1.0 and scores[-1] == pytest.approx(5.0, abs=1e-12)


def _t_quantile_oracle(p, df):
    """Bisect the t CDF, written through the regularized incomplete beta, for p > 1/2."""
    with mpmath.workdps(40):
        p, df = mpmath.mpf(p), mpmath.mpf(df)

        def cdf(t):
            return 1 - mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, df / (df + t * t), regularized=True) / 2
        lo, hi = mpmath.mpf(0), mpmath.mpf(1000)
        for _ in range(160):
            mid = (lo + hi) / 2
            if cdf(mid) < p:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2


def _lambda_oracle(n, k, alpha):
    with mpmath.workdps(40):
        p = 1 - mpmath.mpf(alpha) / (2 * (n - k + 1))
        t = _t_quantile_oracle(p, n - k - 1)
        return float((n - k) * t / mpmath.sqrt((n - k - 1 + t * t) * (n - k + 1)))


class TestCriticalValue:
    def test_n25(self):
        assert abs(esd_critical_value(25, 0, 0.05) - _lambda_oracle(25, 0, 0.05)) < 1e-6

    @pytest.mark.parametrize("k", [0, 50])
    def test_n1000(self, k):
        assert abs(esd_critical_value(1000, k, 0.05) - _lambda_oracle(1000, k, 0.05)) < 1e-6

    @pytest.mark.parametrize("n", [20, 50, 100, 500])
    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1])
    def test_grid(self, n, alpha):
        for k in range(6):
            assert abs(esd_critical_value(n, k, alpha) - _lambda_oracle(n, k, alpha)) < 1e-6

    def test_quantile_accuracy(self):
        for p, df in [(0.975, 3), (0.999, 10), (0.9999, 497), (0.6, 2), (0.99999, 2)]:
            ref = float(_t_quantile_oracle(p, df))
            assert abs(t_quantile(p, df) - ref) < 1e-8 * max(1.0, ref)
        assert t_quantile(0.025, 3) == pytest.approx(-t_quantile(0.975, 3), rel=1e-12)
        assert t_quantile(0.5, 7) == 0.0

    def test_known_quantile(self):
        # t_{0.975, 10} = 2.228138851986...
        assert t_quantile(0.975, 10) == pytest.approx(2.2281388519649385, abs=1e-10)

    @given(st.integers(4, 5000), st.integers(0, 100), st.floats(1e-4, 0.5))
    def test_positive(self, n, k, alpha):
        assume(n - k - 1 >= 2)
        assert esd_critical_value(n, k, alpha) > 0

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            esd_critical_value(4, 2, 0.05)
        with pytest.raises(DegenerateSample):
            esd_critical_value(20, 0, 1.0)

    def test_decreasing_in_alpha(self):
        assert esd_critical_value(100, 1, 0.01) > esd_critical_value(100, 1, 0.05) > esd_critical_value(100, 1, 0.1)


class TestDetectAnomalies:
    @pytest.mark.parametrize("j", [0, 1, 5, 57, 100, 150, 198, 199])
    def test_single_spike(self, j):
        y = _sinusoid(200, 24)
        y[j] += 50 * y.std()
        pts = detect_anomalies(_series(y, 24))
        assert [p.index for p in pts] == [j]
        assert pts[0].value == y[j] and pts[0].timestamp == j and pts[0].metric == "m"

    def test_constant(self):
        assert detect_anomalies(_series(np.full(100, 7.0), 24)) == []
        assert detect_anomalies(_series(np.full(100, 7.0))) == []

    def test_clean_sinusoid(self):
        assert detect_anomalies(_series(_sinusoid(200, 24), 24)) == []

    @pytest.mark.parametrize("seed", range(5))
    def test_three_spikes(self, seed):
        rng = np.random.default_rng(seed)
        y = _sinusoid(200, 24)
        sites = sorted(int(i) for i in rng.choice(200, 3, replace=False))
        y[sites] += 50 * y.std()
        pts = detect_anomalies(_series(y, 24), alpha=0.05, max_anomalies=10)
        assert [p.index for p in pts] == sites

    def test_negative_spike(self):
        y = _sinusoid(300, 24)
        y[140] -= 40 * y.std()
        assert [p.index for p in detect_anomalies(_series(y, 24))] == [140]

    def test_every_position_of_the_200_sample_example(self):
        base = _sinusoid(200, 24)
        for j in range(200):
            y = base.copy()
            y[j] += 50 * base.std()
            assert [p.index for p in detect_anomalies(_series(y, 24))] == [j]

    def test_no_season_path(self):
        y = np.linspace(0, 10, 80) + np.random.default_rng(0).normal(scale=0.1, size=80)
        y[33] += 50.0
        assert [p.index for p in detect_anomalies(_series(y))] == [33]

    def test_exact_fit_takes_mad_zero_path(self):
        # a noise-free ramp is fit to round-off, so most residuals are zero
        y = np.linspace(0, 10, 80)
        y[33] += 50.0
        assert detect_anomalies(_series(y)) == []

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            detect_anomalies(_series([1.0, 2.0, 3.0]))

    def test_two_cycles_report_nothing(self):
        y = np.ones(48)
        y[3] = 100.0
        assert detect_anomalies(_series(y, 24)) == []

    def test_default_max(self):
        assert default_max_anomalies(10) == 1
        assert default_max_anomalies(200) == 10
        assert default_max_anomalies(201) == 11

    @settings(max_examples=40, deadline=None)
    @given(st.integers(60, 300), st.integers(1, 8), st.integers(0, 2**32 - 1), st.sampled_from([None, 12, 24]))
    def test_properties(self, n, cap, seed, period):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=n)
        y[rng.choice(n, 3, replace=False)] += rng.uniform(5, 30, 3)
        s = _series(y, period)
        pts = detect_anomalies(s, 0.05, cap)
        assert len(pts) <= cap
        assert [p.index for p in pts] == sorted({p.index for p in pts})
        assert sorted(p.iteration for p in pts) == list(range(1, len(pts) + 1))
        for p in pts:
            assert p.score > p.critical_value
            assert p.critical_value == esd_critical_value(n, p.iteration, 0.05)
        assert detect_anomalies(s, 0.05, cap) == pts

    def test_on_fixed_residuals(self):
        e = np.zeros(50)
        e[:25] = np.linspace(-1, 1, 25)
        e[25:] = np.linspace(-1, 1, 25)
        e[10] = 40.0
        hits = esd_on_residuals(e, 0.05, 5)
        assert hits[0][0] == 10 and hits[0][2] == 1
        assert all(c > MAD_TO_SIGMA * lam for _, c, _, lam in hits)


class TestNormalValue:
    def test_constant(self):
        for p in (1, 5, 50, 99):
            assert normal_value([10, 10, 10], p) == 10

    def test_ramp(self):
        assert normal_value(np.arange(101.0), 5) == 5.0

    def test_single(self):
        assert normal_value([3.25]) == 3.25

    def test_interpolates(self):
        assert normal_value([0.0, 10.0], 25) == 2.5

    def test_series_input(self):
        assert normal_value(_series(np.arange(101.0))) == 5.0

    def test_errors(self):
        with pytest.raises(EmptyInput):
            normal_value([])
        with pytest.raises(ValueError):
            normal_value([1.0], 0)
        with pytest.raises(ValueError):
            normal_value([1.0], 100)


def _point(metric="innodb_log_write_requests", value=96561.0, index=3):
    return AnomalyPoint(metric, index, 1000 + index, value, 40.0, 1, 3.0)


class TestNarrate:
    def test_running_example(self):
        entry = MetricCatalogEntry("innodb_log_write_requests", "number of write requests for the redo log",
                                   ("innodb_log_file_size",))
        n = narrate(_point(), entry, 46492.0)
        assert "changed from 46492 to 96561" in n.text
        assert "innodb_log_file_size" in n.text and "innodb_log_write_requests" in n.text
        assert n.text == ("the value of innodb_log_write_requests changed from 46492 to 96561 and the related knob is "
                          "innodb_log_file_size; number of write requests for the redo log")
        assert n.related_knobs == ("innodb_log_file_size",)

    def test_several_knobs(self):
        entry = MetricCatalogEntry("m", "", ("a", "b"))
        text = narrate(_point("m", 2.0), entry, 1.0).text
        assert text == "the value of m changed from 1 to 2 and the related knobs are a, b"

    def test_no_knobs(self):
        n = narrate(_point("m", 5.0), MetricCatalogEntry("m", "gauge"), 1.0)
        assert n.text == "the value of m changed from 1 to 5; gauge"

    def test_equal_values(self):
        n = narrate(_point("m", 7.0), MetricCatalogEntry("m", "x", ("k",)), 7.0)
        assert "changed from 7 to 7" in n.text

    def test_catalog_lookup(self):
        cat = MetricCatalog({"m": MetricCatalogEntry("m", "x")})
        assert narrate(_point("m"), cat, 1.0).metric == "m"
        with pytest.raises(MissingCatalogEntry):
            narrate(_point("other"), cat, 1.0)
        with pytest.raises(MissingCatalogEntry):
            narrate(_point("other"), {}, 1.0)
        with pytest.raises(MissingCatalogEntry):
            narrate(_point("other"), MetricCatalogEntry("m", "x"), 1.0)

    @given(st.floats(-9.99e6, 9.99e6, allow_nan=False))
    def test_no_exponent_below_1e7(self, x):
        text = format_number(x)
        assert "e" not in text.lower()
        assert abs(float(text) - x) <= 5e-7 + 1e-15 * abs(x)

    def test_format_examples(self):
        assert format_number(46492.0) == "46492"
        assert format_number(0.125) == "0.125"
        assert format_number(-0.0000001) == "0"
        assert format_number(1.5e12) == "1500000000000"

    @given(st.lists(st.from_regex(r"[a-z_]{1,12}", fullmatch=True), max_size=4, unique=True),
           st.floats(0, 1e6), st.floats(0, 1e6))
    def test_text_contains_everything(self, knobs, normal, observed):
        n = narrate(_point("metric_x", observed), MetricCatalogEntry("metric_x", "e", tuple(knobs)), normal)
        assert "metric_x" in n.text
        assert format_number(normal) in n.text and format_number(observed) in n.text
        assert all(k in n.text for k in knobs)


def _narr(metric, text):
    return AnomalyNarrative(metric, "", 0.0, 1.0, (), text)


class TestSelectRelevant:
    def test_identical_text_first(self):
        q = DebugQuestion("q", "inserts are slow after enabling autocommit", frozenset({"autocommit"}))
        ns = [_narr("a", "buffer pool reads went up"), _narr("b", q.text), _narr("c", "threads connected")]
        assert select_relevant(ns, q, 1, HashingEmbedder())[0].metric == "b"

    def test_whole_list_when_k_large(self):
        ns = [_narr(f"m{i}", f"text number {i}") for i in range(4)]
        out = select_relevant(ns, "number", 10, HashingEmbedder())
        assert sorted(n.metric for n in out) == sorted(n.metric for n in ns)

    def test_zero_and_empty(self):
        assert select_relevant([_narr("a", "x")], "x", 0, HashingEmbedder()) == []
        assert select_relevant([], "x", 3, HashingEmbedder()) == []
        with pytest.raises(ValueError):
            select_relevant([], "x", -1, HashingEmbedder())

    def test_ties_by_metric(self):
        ns = [_narr("zeta", "same words"), _narr("alpha", "same words"), _narr("mid", "same words")]
        assert [n.metric for n in select_relevant(ns, "same words", 3, HashingEmbedder())] == ["alpha", "mid", "zeta"]

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        vocab = ["log", "buffer", "pool", "flush", "commit", "lock", "wait", "read", "write", "thread"]
        ns = [_narr(f"m{i:02d}", " ".join(rng.choice(vocab, 4))) for i in range(25)]
        question = "commit waits on log flush"
        emb = HashingEmbedder()
        qv = emb.embed_one(question)

        def cos(t):
            v = emb.embed_one(t)
            d = np.linalg.norm(v) * np.linalg.norm(qv)
            return float(v @ qv / d) if d else 0.0
        want = sorted(ns, key=lambda n: (-round(cos(n.text), 12), n.metric))[:6]
        got = select_relevant(ns, DebugQuestion("q", question, frozenset({"autocommit"})), 6, emb)
        assert [n.metric for n in got] == [n.metric for n in want]


class TestAnalyze:
    def _catalog(self):
        return MetricCatalog({"spiky": MetricCatalogEntry("spiky", "a gauge", ("autocommit",))})

    def test_narrates_worst(self):
        y = _sinusoid(200, 24) + 100
        y[50] += 200
        y[120] += 400
        rep = analyze_series(_series(y, 24, "spiky"), self._catalog())
        assert [p.index for p in rep.anomalies] == [50, 120]
        assert rep.narrative.anomalous_value == y[120]
        assert rep.narrative.normal_value == normal_value(y, 5)

    def test_quiet_metric(self):
        rep = analyze_series(_series(np.full(50, 1.0), None, "spiky"), self._catalog())
        assert rep.anomalies == () and rep.narrative is None and rep.skipped is None

    def test_missing_entry_is_skipped(self):
        y = _sinusoid(200, 24)
        y[10] += 300
        rep = analyze_series(_series(y, 24, "unknown"), self._catalog())
        assert rep.narrative is None and "unknown" in rep.skipped and rep.anomalies

    def test_short_is_skipped(self):
        rep = analyze_series(_series([1.0, 2.0], None, "spiky"), self._catalog())
        assert rep.skipped and rep.narrative is None

    def test_workers_keep_order(self):
        series = []
        rng = np.random.default_rng(7)
        for i in range(6):
            y = _sinusoid(120, 12) + rng.normal(scale=0.5, size=120)
            y[10 * i + 5] += 100
            series.append(_series(y, 12, "spiky"))
        one = analyze_telemetry(series, self._catalog())
        many = analyze_telemetry(series, self._catalog(), workers=3)
        assert one == many
        assert [r.anomalies[0].index for r in one] == [5, 15, 25, 35, 45, 55]
        assert len(narratives_of(one)) == 6
