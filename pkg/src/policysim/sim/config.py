"""Simulation configuration, the bundled calibrations, and interventions."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from ..rng import Archetype, DistributionSpec, ParameterError

WAVE_SELECTIONS = ("uniform", "moderators")


@dataclass(frozen=True)
class SimConfig:
    d: float  # weekly decay fraction of engagements per post
    m0: int
    r: float
    g: float
    T: float  # moderator threshold; math.inf disables removal waves
    w_min: int
    w_max: int
    v_initial: int
    v_max: int
    t_max_venues: int
    t_policy: int
    t_max: int
    archetype: Archetype
    nudge_n: float = 0.0
    vcb_cap: int | None = None
    deplete_demand: bool = True
    decay_converted: bool = False
    wave_selection: str = "moderators"
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ParameterError(f"invalid config: {msg}")

        need(0 <= self.d < 1, f"d must be in [0, 1), got {self.d}")
        need(int(self.m0) == self.m0 and self.m0 >= 0, f"m0 must be a nonnegative integer, got {self.m0}")
        need(0 <= self.r <= 1, f"r must be in [0, 1], got {self.r}")
        need(0 <= self.g <= 1, f"g must be in [0, 1], got {self.g}")
        need(self.T > 0, f"T must be positive, got {self.T}")
        need(1 <= self.w_min <= self.w_max, f"need 1 <= w_min <= w_max, got {self.w_min}, {self.w_max}")
        need(1 <= self.v_initial <= self.v_max, f"need 1 <= v_initial <= v_max, got {self.v_initial}, {self.v_max}")
        need(self.t_max_venues >= 1, "t_max_venues must be positive")
        need(1 <= self.t_policy <= self.t_max, f"need 1 <= t_policy <= t_max, got {self.t_policy}, {self.t_max}")
        need(0 <= self.nudge_n < 1, f"nudge_n must be in [0, 1), got {self.nudge_n}")
        need(self.vcb_cap is None or (int(self.vcb_cap) == self.vcb_cap and self.vcb_cap >= 0),
             f"vcb_cap must be a nonnegative integer, got {self.vcb_cap}")
        need(self.wave_selection in WAVE_SELECTIONS, f"wave_selection must be one of {WAVE_SELECTIONS}")

    def with_changes(self, **changes) -> "SimConfig":
        return replace(self, **changes)


_SCALARS = ("d", "m0", "r", "g", "T", "w_min", "w_max", "v_initial", "v_max",
            "t_max_venues", "t_policy", "t_max", "nudge_n")
_INTS = {"m0", "w_min", "w_max", "v_initial", "v_max", "t_max_venues", "t_policy", "t_max"}


def _fmt(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return repr(value)


def dump_config(config: SimConfig) -> str:
    """Serialize to INI text; ``load_config_text(dump_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    model = {"name": config.name}
    model.update({k: _fmt(getattr(config, k)) for k in _SCALARS})
    model["vcb_cap"] = "none" if config.vcb_cap is None else str(config.vcb_cap)
    model["deplete_demand"] = str(config.deplete_demand).lower()
    model["decay_converted"] = str(config.decay_converted).lower()
    model["wave_selection"] = config.wave_selection
    parser["model"] = model
    parser["archetype"] = {
        "log_post_mean": str(config.archetype.log_post_mean),
        "dispersion": str(config.archetype.dispersion),
        "engagement_rate": str(config.archetype.engagement_rate),
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config_text(text: str) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
        model, arch = parser["model"], parser["archetype"]
    except (configparser.Error, KeyError) as exc:
        raise ParameterError(f"malformed config: {exc}") from exc
    kwargs = {}
    try:
        for key in _SCALARS:
            raw = model[key]
            kwargs[key] = int(raw) if key in _INTS else float(raw)
        cap = model.get("vcb_cap", "none").strip().lower()
        kwargs["vcb_cap"] = None if cap in ("", "none") else int(cap)
    except KeyError as exc:
        raise ParameterError(f"config is missing key {exc}") from exc
    except ValueError as exc:
        raise ParameterError(f"bad config value: {exc}") from exc
    kwargs["deplete_demand"] = model.getboolean("deplete_demand", True)
    kwargs["decay_converted"] = model.getboolean("decay_converted", False)
    kwargs["wave_selection"] = model.get("wave_selection", "moderators")
    kwargs["name"] = model.get("name", "")
    kwargs["archetype"] = Archetype(
        DistributionSpec.parse(arch["log_post_mean"]),
        DistributionSpec.parse(arch["dispersion"]),
        DistributionSpec.parse(arch["engagement_rate"]),
    )
    return SimConfig(**kwargs)


def load_config(path) -> SimConfig:
    return load_config_text(Path(path).read_text(encoding="utf-8"))


def bundled_config(name: str) -> SimConfig:
    """The ``pages`` or ``groups`` calibration shipped with the package."""
    text = resources.files("policysim.data").joinpath(f"{name}.cfg").read_text(encoding="utf-8")
    return load_config_text(text)


# Interventions ---------------------------------------------------------------

INTERVENTION_KINDS = ("scale_g", "set_g", "scale_r", "scale_m0", "scale_t", "scale_wmax",
                      "no_venue_limit", "nudge", "vcb")


@dataclass(frozen=True)
class Intervention:
    kind: str
    value: float | None = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in INTERVENTION_KINDS:
            raise ParameterError(f"unknown intervention {self.kind!r}")
        if (self.kind == "no_venue_limit") != (self.value is None):
            raise ParameterError(f"intervention {self.kind} {'takes no' if self.value is None else 'needs a'} value")

    def __str__(self) -> str:
        return self.kind if self.value is None else f"{self.kind}:{self.value:g}"

    @classmethod
    def parse(cls, text: str) -> "Intervention":
        """``"scale_g:0.2"``, ``"vcb:100"``, ``"no_venue_limit"``; an optional ``label=`` prefix names the row."""
        label = ""
        if "=" in text:
            label, _, text = text.rpartition("=")
            label = label.strip()
        kind, _, raw = text.strip().partition(":")
        kind = kind.strip()
        if not raw.strip():
            return cls(kind, None, label or kind)
        try:
            num, _, den = raw.partition("/")
            value = float(num) / float(den) if den else float(num)
        except ValueError as exc:
            raise ParameterError(f"bad intervention value in {text!r}") from exc
        return cls(kind, value, label or text.strip())


def apply_intervention(config: SimConfig, intervention: Intervention) -> SimConfig:
    """Return a modified copy of ``config``; raises ParameterError if the result is invalid."""
    k, v = intervention.kind, intervention.value
    if k == "scale_g":
        return config.with_changes(g=config.g * v)
    if k == "set_g":
        return config.with_changes(g=v)
    if k == "scale_r":
        return config.with_changes(r=config.r * v)
    if k == "scale_m0":
        return config.with_changes(m0=int(round(config.m0 * v)))
    if k == "scale_t":
        return config.with_changes(T=config.T * v)
    if k == "scale_wmax":
        return config.with_changes(w_max=int(round(config.w_max * v)))
    if k == "no_venue_limit":
        return config.with_changes(T=math.inf)
    if k == "nudge":
        return config.with_changes(nudge_n=v)
    if int(v) != v:
        raise ParameterError(f"vcb cap must be an integer, got {v}")
    return config.with_changes(vcb_cap=int(v))


def read_interventions(path) -> list[Intervention]:
    """One intervention per line; blank lines and ``#`` comments ignored."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(Intervention.parse(line))
    return out
