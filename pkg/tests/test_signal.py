import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boardsim.signal import (
    DC, InvalidSpecError, NarrowbandNoise, Pulse, SampleStream, SignalSpec, Sinusoid,
    WhiteNoise, measure_snr, narrowband_noise, read_stream_csv, synthesize, write_stream_csv,
)

FS = 333_000.0


def test_dc_zero():
    out = synthesize(SignalSpec(1.0, 1000.0, [DC(0.0)]))
    assert len(out) == 1000
    assert np.all(out.samples == 0.0)


def test_sinusoid_quarter_period_peak():
    out = synthesize(SignalSpec(1.0, 1000.0, [Sinusoid(50, 1.0, 0)]))
    assert out.samples[5] == pytest.approx(1.0, abs=1e-12)


def test_white_noise_moments():
    out = synthesize(SignalSpec(1.0, 1000.0, [WhiteNoise(0.5, seed=7)])).samples
    assert abs(out.mean()) <= 0.05
    assert abs(out.var() - 0.25) <= 0.03


def test_pulse_duty():
    out = synthesize(SignalSpec(0.01, 1000.0, [Pulse(0.004, 0.5, 2.0)])).samples
    assert out.tolist() == [2.0, 2.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.0, 2.0, 2.0]


@pytest.mark.parametrize("comp,field", [
    (Sinusoid(600.0, 1.0), "freq_hz"),
    (WhiteNoise(-1.0, 1), "sigma_v"),
    (Pulse(0.0, 0.5, 1.0), "period_s"),
    (Pulse(1.0, 0.0, 1.0), "duty"),
    (NarrowbandNoise(480.0, 50.0, 1.0, 1), "center_hz"),
    (NarrowbandNoise(100.0, 200.0, 1.0, 1), "bandwidth_hz"),
])
def test_invalid_components_name_field(comp, field):
    with pytest.raises(InvalidSpecError) as err:
        synthesize(SignalSpec(1.0, 1000.0, [comp]))
    assert err.value.field == field


def test_invalid_duration():
    with pytest.raises(InvalidSpecError):
        SignalSpec(0.0, 1000.0, []).validate()


def test_stream_rejects_nonfinite_and_mismatch():
    with pytest.raises(ValueError):
        SampleStream([1.0, math.nan], 10.0)
    with pytest.raises(ValueError):
        SampleStream([1.0], 10.0) + SampleStream([1.0], 20.0)
    with pytest.raises(ValueError):
        SampleStream([1.0], 10.0) - SampleStream([1.0, 2.0], 10.0)


def test_snr_identical_is_infinite():
    x = SampleStream(np.ones(10), 10.0)
    rep = measure_snr(x, x)
    assert rep.noise_power_v2 == 0 and rep.infinite and rep.snr_db == math.inf


def test_snr_zero_db_case():
    n = 20000
    ref = synthesize(SignalSpec(n / FS, FS, [Sinusoid(1000.0, 1.0)]))
    noise = synthesize(SignalSpec(n / FS, FS, [WhiteNoise(1 / math.sqrt(2), 4)]))
    assert measure_snr(ref, ref + noise).snr_db == pytest.approx(0.0, abs=0.5)


def test_snr_all_zero_does_not_crash():
    z = SampleStream(np.zeros(8), 10.0)
    rep = measure_snr(z, z)
    assert rep.signal_power_v2 == 0 and rep.noise_power_v2 == 0


def test_snr_zero_signal_is_minus_inf():
    z = SampleStream(np.zeros(4), 10.0)
    assert measure_snr(z, SampleStream(np.ones(4), 10.0)).snr_db == -math.inf


@given(sigma=st.floats(0.1, 3.0), seed=st.integers(0, 2**32 - 1))
def test_snr_recovers_analytic(sigma, seed):
    n = 10000
    ref = synthesize(SignalSpec(n / FS, FS, [Sinusoid(2000.0, 1.0)]))
    noise = WhiteNoise(sigma, seed).render(n, FS)
    # analytic SNR of the realized noise variance
    expected = 10 * math.log10(0.5 / sigma**2)
    got = measure_snr(ref, SampleStream(ref.samples + noise, FS)).snr_db
    assert abs(got - expected) <= 0.5


def test_narrowband_zero_sigma():
    assert np.all(narrowband_noise(5000, 500, 0.0, 1, 100, FS).samples == 0)


def _band_fraction(x, lo, hi, fs):
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(len(x), 1 / fs)
    return spec[(f >= lo) & (f <= hi)].sum() / spec.sum()


def test_narrowband_power_in_band():
    x = narrowband_noise(5000, 500, 1.0, 3, 65536, FS).samples
    assert x.std() == pytest.approx(1.0, rel=1e-12)
    assert _band_fraction(x, 4250, 5750, FS) >= 0.90


def test_narrowband_lowpass_variant():
    x = narrowband_noise(0, 2000, 1.0, 3, 65536, FS).samples
    assert _band_fraction(x, 0, 1500, FS) >= 0.90


def test_narrowband_deterministic():
    a = narrowband_noise(5000, 500, 1.0, 9, 4096, FS).samples
    b = narrowband_noise(5000, 500, 1.0, 9, 4096, FS).samples
    assert np.array_equal(a, b)


@given(seed=st.integers(0, 2**32 - 1), center=st.floats(1000, 100000))
def test_narrowband_parseval(seed, center):
    x = narrowband_noise(center, center / 10, 1.0, seed, 8192, FS).samples
    time_power = np.mean(x * x)
    spec = np.abs(np.fft.fft(x)) ** 2
    freq_power = spec.sum() / len(x) ** 2
    assert freq_power == pytest.approx(time_power, rel=0.01)


@given(s1=st.integers(0, 1000), s2=st.integers(1001, 2000),
       freq=st.floats(0, 100000), level=st.floats(-2, 2))
def test_linearity(s1, s2, freq, level):
    dur = 512 / FS
    a = [Sinusoid(freq, 1.0), WhiteNoise(0.3, s1)]
    b = [DC(level), NarrowbandNoise(20000, 2000, 0.5, s2)]
    whole = synthesize(SignalSpec(dur, FS, a + b)).samples
    parts = synthesize(SignalSpec(dur, FS, a)).samples + synthesize(SignalSpec(dur, FS, b)).samples
    assert np.allclose(whole, parts, rtol=0, atol=1e-12)


@given(seed=st.integers(0, 2**63))
def test_determinism(seed):
    spec = SignalSpec(300 / FS, FS, [Sinusoid(1000, 1.0), WhiteNoise(1.0, seed),
                                     NarrowbandNoise(8000, 800, 1.0, seed + 1)])
    assert synthesize(spec).samples.tobytes() == synthesize(spec).samples.tobytes()


def test_only_role():
    spec = SignalSpec(1.0, 1000.0, [DC(1.0), WhiteNoise(1.0, 1)])
    assert spec.only("beam").components == [DC(1.0)]
    assert spec.only("noise").components == [WhiteNoise(1.0, 1)]


def test_stream_csv_round_trip(tmp_path):
    x = synthesize(SignalSpec(100 / FS, FS, [WhiteNoise(1.0, 5)]))
    write_stream_csv(x, tmp_path / "s.csv")
    back = read_stream_csv(tmp_path / "s.csv", FS)
    assert np.array_equal(back.samples, x.samples)


def test_stream_csv_bad_header(tmp_path):
    (tmp_path / "s.csv").write_text("a,b\n0,1\n")
    with pytest.raises(ValueError):
        read_stream_csv(tmp_path / "s.csv")
