"""Energy and CO2 accounting for detection runs."""

import configparser
from dataclasses import dataclass

from .errors import NegativeDuration

DEFAULT_CARBON_INTENSITY = 475.0  # gCO2/kWh; a modeling default, override per deployment

# Published reference figures for the hub versus an equivalent server. They are
# shown for comparison only and never feed a computation.
REFERENCE_HUB_MG = 4.7
REFERENCE_SERVER_MG = 725.9
REFERENCE_HUB_WATTS = 7.5


@dataclass(frozen=True)
class PowerProfile:
    device_name: str
    watts: float
    carbon_intensity: float = DEFAULT_CARBON_INTENSITY

    def __post_init__(self):
        if not self.watts > 0:
            raise ValueError(f"{self.device_name}: watts must be > 0")
        if not self.carbon_intensity > 0:
            raise ValueError(f"{self.device_name}: carbon_intensity must be > 0")


HUB_PROFILE = PowerProfile("rpi4-hub", REFERENCE_HUB_WATTS)
SERVER_PROFILE = PowerProfile("x86-server", 300.0)


def energy_wh(duration_s, profile):
    if duration_s < 0:
        raise NegativeDuration(f"duration {duration_s} s is negative")
    return profile.watts * duration_s / 3600.0


def co2_mg(wh, intensity):
    """Milligrams of CO2 for ``wh`` watt-hours at ``intensity`` gCO2/kWh.

    g/kWh and mg/Wh are the same unit, so this is a plain product.
    """
    if wh < 0:
        raise ValueError("energy must be non-negative")
    return wh * intensity


@dataclass(frozen=True)
class GreenReport:
    wall_clock_s: float
    frames_processed: int
    profile: PowerProfile
    baseline: PowerProfile
    energy_wh: float
    co2_mg: float
    baseline_energy_wh: float
    baseline_co2_mg: float

    @property
    def energy_per_frame_wh(self):
        return self.energy_wh / self.frames_processed if self.frames_processed else None

    @property
    def co2_ratio(self):
        """Baseline CO2 over measured CO2 (how many times cleaner the profile is)."""
        return self.baseline_co2_mg / self.co2_mg if self.co2_mg > 0 else None

    @property
    def reference_ratio(self):
        return REFERENCE_SERVER_MG / REFERENCE_HUB_MG

    def as_dict(self):
        per_frame = self.energy_per_frame_wh
        ratio = self.co2_ratio
        return {
            "profile": self.profile.device_name,
            "profile_watts": f"{self.profile.watts:g}",
            "carbon_intensity_g_per_kwh": f"{self.profile.carbon_intensity:g}",
            "baseline": self.baseline.device_name,
            "baseline_watts": f"{self.baseline.watts:g}",
            "wall_clock_s": f"{self.wall_clock_s:.6f}",
            "frames_processed": str(self.frames_processed),
            "energy_wh": f"{self.energy_wh:.9f}",
            "co2_mg": f"{self.co2_mg:.9f}",
            "energy_per_frame_wh": "n/a" if per_frame is None else f"{per_frame:.12f}",
            "baseline_energy_wh": f"{self.baseline_energy_wh:.9f}",
            "baseline_co2_mg": f"{self.baseline_co2_mg:.9f}",
            "measured_co2_ratio": "n/a" if ratio is None else f"{ratio:.4f}",
            "reference_co2_ratio": f"{self.reference_ratio:.4f}",
        }

    def to_kv(self):
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())

    def to_text(self):
        d = self.as_dict()
        return (
            f"reference (published, not computed here): hub {REFERENCE_HUB_MG} mgCO2 vs "
            f"server {REFERENCE_SERVER_MG} mgCO2, ratio {self.reference_ratio:.1f}x\n"
            f"profile   {self.profile.device_name}: {self.profile.watts:g} W at "
            f"{self.profile.carbon_intensity:g} gCO2/kWh (intensity is a configurable assumption)\n"
            f"baseline  {self.baseline.device_name}: {self.baseline.watts:g} W at "
            f"{self.baseline.carbon_intensity:g} gCO2/kWh\n"
            f"duration  {self.wall_clock_s:.3f} s, {self.frames_processed} frames\n"
            f"energy    {d['energy_wh']} Wh (baseline {d['baseline_energy_wh']} Wh)\n"
            f"co2       {d['co2_mg']} mg (baseline {d['baseline_co2_mg']} mg)\n"
            f"per frame {d['energy_per_frame_wh']} Wh\n"
            f"measured ratio {d['measured_co2_ratio']}x\n"
            "note: peak SoC utilization (~98%) is not modeled\n"
        )


def run_report(wall_clock, frames_processed, profile=HUB_PROFILE, baseline=SERVER_PROFILE):
    e = energy_wh(wall_clock, profile)
    be = energy_wh(wall_clock, baseline)
    return GreenReport(wall_clock, frames_processed, profile, baseline,
                       e, co2_mg(e, profile.carbon_intensity),
                       be, co2_mg(be, baseline.carbon_intensity))


def load_profiles(path):
    """Read ``[profile NAME]`` sections with ``watts`` and optional ``carbon_intensity``."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    profiles = {}
    for section in parser.sections():
        name = section.split(None, 1)[1].strip() if section.startswith("profile ") else section
        sec = parser[section]
        profiles[name] = PowerProfile(
            name, sec.getfloat("watts"),
            sec.getfloat("carbon_intensity", fallback=DEFAULT_CARBON_INTENSITY),
        )
    return profiles


def builtin_profiles():
    return {HUB_PROFILE.device_name: HUB_PROFILE, SERVER_PROFILE.device_name: SERVER_PROFILE}
