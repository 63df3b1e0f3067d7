import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenguard.errors import NegativeDuration
from greenguard.greenmetrics import (
    DEFAULT_CARBON_INTENSITY,
    HUB_PROFILE,
    PowerProfile,
    builtin_profiles,
    co2_mg,
    energy_wh,
    load_profiles,
    run_report,
)


def test_energy_examples():
    assert energy_wh(3600, PowerProfile("hub", 7.5)) == 7.5
    assert energy_wh(0, PowerProfile("hub", 7.5)) == 0
    assert energy_wh(1800, PowerProfile("x", 10)) == 5.0
    with pytest.raises(NegativeDuration):
        energy_wh(-1, HUB_PROFILE)


def test_co2_examples():
    assert co2_mg(7.5, 475) == 3562.5
    assert co2_mg(0, 475) == 0


def test_profile_validation():
    for watts, intensity in ((0, 475), (-1, 475), (5, 0)):
        with pytest.raises(ValueError):
            PowerProfile("bad", watts, intensity)


def test_ratio_follows_watts():
    report = run_report(120, 10, PowerProfile("hub", 7.5), PowerProfile("server", 750))
    assert report.co2_ratio == pytest.approx(100.0, rel=1e-12)


def test_reference_ratio_is_displayed_not_computed():
    report = run_report(10, 5)
    assert report.reference_ratio == pytest.approx(725.9 / 4.7)
    assert round(report.reference_ratio, 1) == 154.4
    text = report.to_text()
    header = text.splitlines()[0]
    assert "154.4x" in header and "4.7" in header and "725.9" in header and "not computed" in header
    kv = dict(line.split("=", 1) for line in report.to_kv().splitlines())
    assert kv["reference_co2_ratio"] == "154.4468"
    assert kv["measured_co2_ratio"] == f"{300 / 7.5:.4f}"


def test_zero_frames_not_applicable():
    report = run_report(60, 0)
    assert report.energy_per_frame_wh is None
    assert "energy_per_frame_wh=n/a" in report.to_kv()
    assert "per frame n/a" in report.to_text()


def test_zero_duration_ratio_not_applicable():
    assert run_report(0, 3).co2_ratio is None


def test_profiles_file(tmp_path):
    path = tmp_path / "profiles.ini"
    path.write_text("[profile jetson]\nwatts = 15\ncarbon_intensity = 300\n\n[nuc]\nwatts = 28\n")
    profiles = load_profiles(path)
    assert profiles["jetson"] == PowerProfile("jetson", 15, 300)
    assert profiles["nuc"].carbon_intensity == DEFAULT_CARBON_INTENSITY
    assert set(builtin_profiles()) == {"rpi4-hub", "x86-server"}


positive = st.floats(1e-3, 1e6)
scale = st.floats(1e-3, 1e3)


@given(positive, positive, scale)
def test_co2_linear_in_each_argument(wh, intensity, k):
    assert co2_mg(k * wh, intensity) == pytest.approx(k * co2_mg(wh, intensity), rel=1e-12)
    assert co2_mg(wh, k * intensity) == pytest.approx(k * co2_mg(wh, intensity), rel=1e-12)


@given(st.floats(0, 1e7), positive, scale)
def test_energy_linear(duration, watts, k):
    base = energy_wh(duration, PowerProfile("p", watts))
    assert energy_wh(k * duration, PowerProfile("p", watts)) == pytest.approx(k * base, rel=1e-12)
    assert energy_wh(duration, PowerProfile("p", k * watts)) == pytest.approx(k * base, rel=1e-12)


@given(st.floats(0, 1e4), positive, positive)
def test_time_unit_coherence(minutes, watts, intensity):
    p = PowerProfile("p", watts, intensity)
    via_hours = co2_mg(energy_wh(minutes / 60 * 3600, p), intensity)
    via_seconds = co2_mg(energy_wh(minutes * 60, p), intensity)
    assert via_hours == pytest.approx(via_seconds, rel=1e-12)
