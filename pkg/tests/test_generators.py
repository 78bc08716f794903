import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from ocsu.generators import (
    SyntheticTraceSpec,
    TraceFormatError,
    XInstanceSpec,
    gen_synthetic_trace,
    gen_x_instance,
    inject_ci_error,
    load_trace_csv,
    sample_job,
    save_trace_csv,
    x_instance_prices,
)
from ocsu.model import CarbonTrace, derivative_bounds


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestTraceCsv:
    def test_two_rows(self, tmp_path):
        p = write(tmp_path / "t.csv", "timestamp,carbon_intensity\n2021-01-01T00:00:00Z,100\n2021-01-01T01:00:00Z,120.5\n")
        trace = load_trace_csv(p)
        assert len(trace) == 2
        assert trace.intensities.tolist() == [100.0, 120.5]
        assert trace.timestamps[0] == datetime(2021, 1, 1, tzinfo=timezone.utc)

    def test_negative_intensity_names_row(self, tmp_path):
        p = write(tmp_path / "t.csv", "timestamp,carbon_intensity\n2021-01-01T00:00:00Z,100\n2021-01-01T01:00:00Z,-5\n")
        with pytest.raises(TraceFormatError, match="line 3"):
            load_trace_csv(p)

    @pytest.mark.parametrize("body,needle", [
        ("2021-01-01T00:00:00Z,100\n2021-01-01T02:00:00Z,100\n", "gap"),
        ("2021-01-01T01:00:00Z,100\n2021-01-01T00:00:00Z,100\n", "not increasing"),
        ("2021-01-01T00:00:00Z,abc\n", "bad intensity"),
        ("yesterday,100\n", "bad timestamp"),
        ("2021-01-01T00:00:00Z,100,7\n", "2 fields"),
    ])
    def test_rejections(self, tmp_path, body, needle):
        p = write(tmp_path / "t.csv", "timestamp,carbon_intensity\n" + body)
        with pytest.raises(TraceFormatError, match=needle):
            load_trace_csv(p)

    def test_bad_header(self, tmp_path):
        p = write(tmp_path / "t.csv", "time,ci\n2021-01-01T00:00:00Z,100\n")
        with pytest.raises(TraceFormatError, match="header"):
            load_trace_csv(p)

    def test_round_trip_is_bit_identical(self, tmp_path):
        trace = gen_synthetic_trace(SyntheticTraceSpec(length=72, seed=4))
        first = tmp_path / "a.csv"
        save_trace_csv(trace, first)
        back = load_trace_csv(first)
        assert back.timestamps == trace.timestamps
        assert np.array_equal(back.intensities, trace.intensities)
        second = tmp_path / "b.csv"
        save_trace_csv(back, second)
        assert first.read_bytes() == second.read_bytes()


def flat_trace(values):
    origin = datetime(2020, 1, 1, tzinfo=timezone.utc)
    return CarbonTrace([origin + timedelta(hours=i) for i in range(len(values))], values)


class TestErrorInjection:
    def test_zero_error_is_identity(self):
        trace = gen_synthetic_trace(SyntheticTraceSpec(length=50))
        out = inject_ci_error(trace, 0.0, 1)
        assert np.array_equal(out.intensities, trace.intensities)

    def test_mean_absolute_error(self):
        trace = flat_trace(np.full(10_000, 250.0))
        out = inject_ci_error(trace, 0.1, 7)
        mape = float(np.mean(np.abs(out.intensities - 250.0) / 250.0))
        assert 0.095 <= mape <= 0.105
        assert out.timestamps == trace.timestamps

    def test_positive_under_large_error(self):
        trace = flat_trace(np.full(5000, 1e-6))
        out = inject_ci_error(trace, 0.5, 3)
        assert np.all(out.intensities > 0)

    def test_deterministic(self):
        trace = flat_trace(np.full(100, 250.0))
        assert np.array_equal(inject_ci_error(trace, 0.2, 5).intensities, inject_ci_error(trace, 0.2, 5).intensities)


class TestSampleJob:
    def test_exact_prediction(self):
        c, guess = sample_job(1, 3, 0.0, 11)
        assert c == guess and 1 <= c <= 3

    def test_degenerate_length(self):
        assert sample_job(1, 1, 0.5, 2) == (1.0, 1.0)

    def test_error_bound(self):
        worst = 0.0
        for seed in range(10_000):
            c, guess = sample_job(1, 3, 0.2, seed)
            assert 1 <= guess <= 3
            worst = max(worst, abs(guess - c) / c)
        assert worst <= 0.2 + 1e-12


class TestSynthetic:
    def test_constant(self):
        trace = gen_synthetic_trace(SyntheticTraceSpec(mean=200, diurnal_amplitude=0, noise_std=0, length=30))
        assert np.all(trace.intensities == 200)

    def test_mean(self):
        trace = gen_synthetic_trace(SyntheticTraceSpec(length=2000, seed=1))
        assert abs(trace.intensities.mean() - 273) <= 0.02 * 273

    def test_daily_autocorrelation(self):
        values = gen_synthetic_trace(SyntheticTraceSpec(noise_std=20, length=2000, seed=2)).intensities
        a, b = values[:-24] - values.mean(), values[24:] - values.mean()
        assert float(np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b))) > 0.8

    def test_deterministic(self):
        spec = SyntheticTraceSpec(length=100, seed=9)
        assert np.array_equal(gen_synthetic_trace(spec).intensities, gen_synthetic_trace(spec).intensities)

    def test_positivity_invariant(self):
        with pytest.raises(ValueError):
            SyntheticTraceSpec(mean=100, diurnal_amplitude=80, noise_std=10)


class TestXInstance:
    def test_top_level_is_single_run(self):
        prices, _ = x_instance_prices(XInstanceSpec(x=10, m=4, n=5, upper=10, lower=1))
        assert prices == [10] * 5

    def test_staircase_from_bottom(self):
        spec = XInstanceSpec(x=1, m=4, n=2, upper=10, lower=1)
        prices, rate = x_instance_prices(spec)
        step = 9 / 4
        top = 10
        expected = ([top] * 2 + [top - step] + [top] * 2 + [top - 2 * step] + [top] * 2
                    + [top - 3 * step] + [top] * 2 + [1 + step / 10] * 2 + [top] * 3)
        assert prices == pytest.approx(expected)
        assert rate == 1.0

    def test_last_slot_is_upper(self):
        for x in np.linspace(1, 20, 7):
            prices, _ = x_instance_prices(XInstanceSpec(x=float(x), m=10, upper=20, lower=1, c_max=4))
            assert prices[-1] == 20

    def test_cheap_slots_descend_and_bounds(self):
        spec = XInstanceSpec(x=3.3, m=10, upper=10, lower=1, beta=1, c_max=4, job_length=1.0, rate=0.5)
        inst = gen_x_instance(spec)
        cheap = [p for p in inst.intensities if p < 10]
        assert cheap == sorted(cheap, reverse=True)
        low, high = derivative_bounds(inst)
        assert (low, high) == (pytest.approx(min(cheap)), 10)
        assert (inst.spec.upper, inst.spec.lower) == (10, 1)
        assert inst.prediction == 1.0

    def test_spec_violations(self):
        with pytest.raises(ValueError):
            XInstanceSpec(x=0.5, m=4, upper=10, lower=1)
        with pytest.raises(ValueError):
            XInstanceSpec(x=2, m=0, upper=10, lower=1)
        with pytest.raises(ValueError):
            x_instance_prices(XInstanceSpec(x=2, m=4, n=1, upper=10, lower=1, c_max=4, rate=1))

    def test_deterministic(self):
        spec = XInstanceSpec(x=4.0, m=6, upper=10, lower=1, c_max=2)
        assert np.array_equal(gen_x_instance(spec).intensities, gen_x_instance(spec).intensities)
        assert math.isclose(gen_x_instance(spec).job_length, 2.0)
