"""Scenario configuration: INI sections with a strict key schema.

Example::

    [waveguide]
    n1 = 1.2
    d = 1.0
    k = 20.0            ; or omega + c, or m_over_pi

    [medium]
    kernel = gaussian_bump
    a = 1.0

    [pipeline]
    name = decay

Every key that is omitted is filled from :data:`DEFAULTS` and reported in the
run manifest.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["PIPELINES", "KERNELS", "ScenarioConfig", "load_config", "parse_config"]

PIPELINES = ("modes", "coefficients", "power", "decay", "montecarlo", "diffusion",
             "continuum-check", "regime-sweep")
KERNELS = ("constant", "cosine_band", "gaussian_bump", "tabulated")
PHIS = ("cos", "one", "step", "linear")
REGIME_CHOICES = ("weak_coupling", "strong_coupling", "weak_loss", "all")

# section -> key -> (type, default); a default of None means "no default".
SCHEMA = {
    "waveguide": {
        "n1": (float, None),
        "d": (float, None),
        "k": (float, None),
        "omega": (float, None),
        "c": (float, None),
        "m_over_pi": (float, None),
    },
    "medium": {
        "kernel": (str, None),
        "a": (float, None),
        "amplitude": (float, 1.0),
        "center": (float, None),
        "width": (float, None),
        "band_limit": (str, "default"),
        "path": (str, None),
    },
    "pipeline": {
        "name": (str, None),
        "output_dir": (str, "output"),
        "seed": (int, 12345),
    },
    "power": {
        "z_max": (float, None),
        "z_points": (int, 101),
    },
    "decay": {
        "z_points": (int, 201),
    },
    "montecarlo": {
        "horizon": (float, 1.0),
        "n_paths": (int, 100000),
        "horizon_list": (str, ""),
        "batch_size": (int, 1 << 17),
    },
    "diffusion": {
        "bc": (str, "NeumannDirichlet"),
        "phi": (str, "cos"),
        "z_max": (float, None),
        "z_points": (int, 51),
        "u_resolution": (int, 256),
        "n_eigs": (int, 4),
    },
    "continuum": {
        "n_list": (str, "25,50,100,200"),
        "z_list": (str, "0.1,1,5"),
        "bc": (str, "both"),
        "phi": (str, "cos"),
        "u_resolution": (int, 512),
    },
    "regime": {
        "regime": (str, "all"),
        "tau_list": (str, "1e-1,1e-2,1e-3,1e-4"),
    },
}
REQUIRED = {"waveguide": ("n1", "d"), "medium": ("kernel", "a"), "pipeline": ("name",)}


@dataclass
class ScenarioConfig:
    """Resolved configuration: ``values[section][key]`` after defaults and overrides."""

    path: Path | None
    values: dict
    lines: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, section):
        return self.values[section]

    @property
    def pipeline(self) -> str:
        return self.values["pipeline"]["name"]

    @property
    def seed(self) -> int:
        return self.values["pipeline"]["seed"]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["pipeline"]["output_dir"])

    def line_of(self, section, key=None):
        return self.lines.get((section, key))

    def resolved_items(self):
        """``(section, key, value)`` for every schema key, in schema order."""
        for section, keys in SCHEMA.items():
            for key in keys:
                yield section, key, self.values[section].get(key)


def _line_map(text):
    lines = {}
    section = None
    sec_re = re.compile(r"^\s*\[([^\]]+)\]")
    key_re = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
    for no, raw in enumerate(text.splitlines(), start=1):
        m = sec_re.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), no)
            continue
        if section is None or raw.lstrip().startswith(("#", ";")):
            continue
        m = key_re.match(raw)
        if m:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


def _convert(typ, raw, section, key, line):
    try:
        if typ is int:
            return int(raw, 0)
        if typ is float:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {typ.__name__}", line) from None


def _floats(text, section, key, line):
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a comma-separated list of numbers", line) from None
    return vals


def parse_config(text: str, path: Path | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        On syntax errors, unknown sections or keys, missing required keys,
        bad types or physically invalid values (with the offending line).
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                   strict=True, default_section="__defaults_unused__")
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    lines = _line_map(text)

    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}",
                              lines.get((section, None)))
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = cp[section] if cp.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lines.get((section, key)))
        for key, (typ, default) in keys.items():
            if key in given:
                values[section][key] = _convert(typ, given[key], section, key, lines.get((section, key)))
            else:
                values[section][key] = default
    for section, req in REQUIRED.items():
        for key in req:
            if values[section][key] is None:
                raise ConfigError(f"missing required key [{section}] {key}", lines.get((section, None)))

    for (section, key), val in (overrides or {}).items():
        if val is not None:
            values[section][key] = val

    cfg = ScenarioConfig(path=path, values=values, lines=lines)
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig):
    v = cfg.values
    L = cfg.line_of

    def positive(section, key):
        val = v[section][key]
        if val is not None and not val > 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {val}", L(section, key))

    wg = v["waveguide"]
    if not wg["n1"] > 1:
        raise ConfigError(f"[waveguide] n1 must exceed 1, got {wg['n1']}", L("waveguide", "n1"))
    for key in ("d", "k", "omega", "c", "m_over_pi"):
        positive("waveguide", key)
    chosen = [name for name, keys in (("k", ("k",)), ("omega/c", ("omega", "c")), ("m_over_pi", ("m_over_pi",)))
              if any(wg[x] is not None for x in keys)]
    if len(chosen) != 1:
        raise ConfigError("give exactly one of k, omega + c, or m_over_pi in [waveguide]",
                          L("waveguide", None))
    if chosen == ["omega/c"] and (wg["omega"] is None or wg["c"] is None):
        raise ConfigError("omega and c must be given together", L("waveguide", None))

    md = v["medium"]
    if md["kernel"] not in KERNELS:
        raise ConfigError(f"unknown kernel {md['kernel']!r}; expected one of {', '.join(KERNELS)}",
                          L("medium", "kernel"))
    positive("medium", "a")
    positive("medium", "amplitude")
    positive("medium", "width")
    if md["kernel"] == "tabulated" and not md["path"]:
        raise ConfigError("tabulated kernel needs [medium] path", L("medium", "kernel"))
    bl = md["band_limit"].lower()
    if bl not in ("default", "none"):
        try:
            if not float(bl) > 0:
                raise ValueError
        except ValueError:
            raise ConfigError("[medium] band_limit must be 'default', 'none' or a positive number",
                              L("medium", "band_limit")) from None

    if cfg.pipeline not in PIPELINES:
        raise ConfigError(f"unknown pipeline {cfg.pipeline!r}; expected one of {', '.join(PIPELINES)}",
                          L("pipeline", "name"))
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer", L("pipeline", "seed"))

    positive("power", "z_max")
    positive("diffusion", "z_max")
    positive("montecarlo", "horizon")
    for section, key, lo in (("power", "z_points", 2), ("decay", "z_points", 3), ("montecarlo", "n_paths", 1),
                             ("montecarlo", "batch_size", 1), ("diffusion", "z_points", 2),
                             ("diffusion", "u_resolution", 32), ("diffusion", "n_eigs", 1),
                             ("continuum", "u_resolution", 32)):
        if v[section][key] < lo:
            raise ConfigError(f"[{section}] {key} must be at least {lo}", L(section, key))
    if v["diffusion"]["n_eigs"] > v["diffusion"]["u_resolution"] // 4:
        raise ConfigError("[diffusion] n_eigs must not exceed u_resolution / 4", L("diffusion", "n_eigs"))

    from .diffusion import normalize_bc

    try:
        normalize_bc(v["diffusion"]["bc"])
        if v["continuum"]["bc"].lower() != "both":
            normalize_bc(v["continuum"]["bc"])
    except ValueError as exc:
        raise ConfigError(str(exc), L("diffusion", "bc")) from None
    for section in ("diffusion", "continuum"):
        if v[section]["phi"] not in PHIS:
            raise ConfigError(f"[{section}] phi must be one of {', '.join(PHIS)}", L(section, "phi"))

    lists = {
        ("montecarlo", "horizon_list"): "increasing",
        ("continuum", "n_list"): "increasing",
        ("continuum", "z_list"): "any",
        ("regime", "tau_list"): "decreasing",
    }
    for (section, key), order in lists.items():
        raw = v[section][key]
        vals = _floats(raw, section, key, L(section, key))
        if any(x <= 0 for x in vals):
            raise ConfigError(f"[{section}] {key} entries must be positive", L(section, key))
        if order == "increasing" and any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(f"[{section}] {key} must be increasing", L(section, key))
        if order == "decreasing" and any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigError(f"[{section}] {key} must be decreasing", L(section, key))
        if key == "n_list":
            if any(x != int(x) for x in vals):
                raise ConfigError("[continuum] n_list entries must be integers", L(section, key))
            vals = [int(x) for x in vals]
        v[section][key] = vals
    if v["regime"]["regime"] not in REGIME_CHOICES:
        raise ConfigError(f"[regime] regime must be one of {', '.join(REGIME_CHOICES)}", L("regime", "regime"))
    if cfg.pipeline == "continuum-check" and md["kernel"] != "cosine_band":
        raise ConfigError("continuum-check needs the band-limited cosine_band kernel", L("medium", "kernel"))


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path, overrides)
