import io

import numpy as np
import pytest

from voxtend import FormatError, NoiseSchedule, build_schedule, load_schedule, save_schedule
from voxtend.schedule import validate_schedule


def test_linear_endpoints_t1000():
    s = build_schedule("linear", 1000)
    assert s.beta_at(1) == 1e-4
    assert s.beta_at(1000) == 2e-2
    assert s.alpha_at(1) == 0.9999


def test_linear_single_step():
    s = build_schedule("linear", 1)
    assert s.beta_at(1) == 1e-4
    assert s.alpha_bar_at(1) == 0.9999


def test_alpha_bar_matches_high_precision_product():
    # oracle: prod_{t<=1000} (1 - beta_t) at 60 decimal digits (mpmath)
    s = build_schedule("linear", 1000)
    expected = 4.0358297653756833148e-05
    assert abs(s.alpha_bar_at(1000) - expected) / expected < 1e-12


def test_alpha_bar_spot_values_t200():
    # oracle: high-precision running product for the T=200 linear ramp
    s = build_schedule("linear", 200)
    for t, expected in [(2, 0.99970002), (100, 0.60248030530770522), (200, 0.13218275425061779)]:
        assert abs(s.alpha_bar_at(t) - expected) / expected < 1e-12


@pytest.mark.parametrize("kind,total", [("linear", 1), ("linear", 37), ("linear", 1000),
                                        ("cosine", 10), ("cosine", 200), ("cosine", 1000)])
def test_invariants_all_kinds(kind, total):
    s = build_schedule(kind, total)
    validate_schedule(s)
    assert np.all((s.beta > 0) & (s.beta < 1))
    assert np.array_equal(s.alpha, 1.0 - s.beta)
    if total > 1:
        # running-product consistency: alpha_bar_t / alpha_bar_{t-1} == alpha_t
        ratio = s.alpha_bar[1:] / s.alpha_bar[:-1]
        assert np.max(np.abs(ratio - s.alpha[1:]) / s.alpha[1:]) < 1e-12
        assert np.all(s.alpha_bar[1:] < s.alpha_bar[:-1])
    assert 0.0 < s.alpha_bar[-1] <= s.alpha_bar[0] < 1.0


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_schedule("linear", 0)
    with pytest.raises(ValueError):
        build_schedule("quadratic", 10)


def test_step_index_out_of_range():
    s = build_schedule("linear", 10)
    for t in (0, 11, -3):
        with pytest.raises(ValueError):
            s.beta_at(t)


def test_raw_constructor_bypasses_validation():
    # tests may inject edge schedules that build_schedule would refuse
    raw = NoiseSchedule(beta=np.array([0.0]), alpha=np.array([1.0]), alpha_bar=np.array([1.0]))
    assert raw.alpha_at(1) == 1.0
    with pytest.raises(ValueError):
        validate_schedule(raw)


def test_serialization_round_trip():
    s = build_schedule("cosine", 123)
    buf = io.StringIO()
    save_schedule(s, buf)
    text = buf.getvalue()
    assert text.startswith("voxtend-schedule v1\nT=123\nbeta=")
    loaded = load_schedule(io.StringIO(text))
    assert np.array_equal(loaded.beta, s.beta)
    assert np.array_equal(loaded.alpha_bar, s.alpha_bar)


def test_serialization_rejects_garbage():
    with pytest.raises(FormatError):
        load_schedule(io.StringIO("not a schedule\n"))
    with pytest.raises(FormatError):
        load_schedule(io.StringIO("voxtend-schedule v1\nT=3\nbeta=0.1\nbeta=0.1\n"))
    with pytest.raises(FormatError):
        load_schedule(io.StringIO("voxtend-schedule v1\nT=1\ngamma=0.1\n"))
