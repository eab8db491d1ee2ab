import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condor.conditioning import (ConditioningSignal, ConditioningSpec, OutOfRange,
                                 encode_conditioning)


def sig(value, **kw):
    return ConditioningSignal(ConditioningSpec(**kw), value)


def test_onehot_lower_endpoint_bin_zero():
    enc = encode_conditioning(sig(1.6, encoding="onehot", bins=14))
    assert enc[0] == 1.0 and enc.sum() == 1.0


def test_onehot_upper_endpoint_clamps_to_last_bin():
    enc = encode_conditioning(sig(4.5, encoding="onehot", bins=14))
    assert enc[13] == 1.0 and enc.sum() == 1.0


def test_continuous_midpoint_is_zero():
    enc = encode_conditioning(sig(3.05))
    assert enc.shape == (1,)
    assert enc[0] == pytest.approx(0.0, abs=1e-12)


def test_continuous_endpoints():
    assert encode_conditioning(sig(1.6))[0] == -1.0
    assert encode_conditioning(sig(4.5))[0] == 1.0


def test_out_of_range_raises():
    with pytest.raises(OutOfRange):
        encode_conditioning(sig(1.59))
    with pytest.raises(OutOfRange):
        encode_conditioning(sig(4.51, encoding="onehot"))


@settings(max_examples=100, deadline=None)
@given(st.floats(1.6, 4.5), st.floats(1.6, 4.5), st.floats(0.0, 1.0))
def test_continuous_encoding_is_affine(a, b, alpha):
    spec = ConditioningSpec()
    mix = alpha * a + (1 - alpha) * b
    if not spec.contains(mix):
        mix = spec.clamp(mix)
    lhs = encode_conditioning(ConditioningSignal(spec, mix))[0]
    rhs = (alpha * encode_conditioning(ConditioningSignal(spec, a))[0]
           + (1 - alpha) * encode_conditioning(ConditioningSignal(spec, b))[0])
    assert lhs == pytest.approx(rhs, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.6, 4.5), st.integers(2, 20))
def test_onehot_exactly_one_entry(value, bins):
    enc = encode_conditioning(sig(value, encoding="onehot", bins=bins))
    assert np.count_nonzero(enc) == 1
    assert enc.max() == 1.0


def test_view_spec_range():
    spec = ConditioningSpec.view()
    assert spec.lo == pytest.approx(-np.pi / 4)
    assert spec.hi == pytest.approx(np.pi / 4)
    assert spec.mode == "view"


def test_bin_quantizer_consistency():
    spec = ConditioningSpec(encoding="onehot", bins=14)
    for v in np.linspace(1.6, 4.5, 200):
        enc = encode_conditioning(ConditioningSignal(spec, float(v)))
        assert np.argmax(enc) == spec.bin_index(float(v))


def test_sampling_ranges():
    rng = np.random.default_rng(0)
    spec_c = ConditioningSpec()
    vals = [spec_c.sample(rng) for _ in range(500)]
    assert all(1.6 <= v <= 4.5 for v in vals)
    spec_d = ConditioningSpec(encoding="onehot", bins=14)
    centers = {spec_d.sample(rng) for _ in range(500)}
    width = (4.5 - 1.6) / 14
    for c in centers:
        k = round((c - 1.6) / width - 0.5)
        assert c == pytest.approx(1.6 + (k + 0.5) * width)
    assert len(centers) == 14


def test_clamp():
    spec = ConditioningSpec()
    assert spec.clamp(9.0) == 4.5
    assert spec.clamp(0.1) == 1.6
    assert spec.clamp(2.0) == 2.0


def test_spec_validation():
    with pytest.raises(ValueError):
        ConditioningSpec(mode="speed")
    with pytest.raises(ValueError):
        ConditioningSpec(encoding="onehot", bins=1)
    with pytest.raises(ValueError):
        ConditioningSpec(lo=4.5, hi=1.6)
