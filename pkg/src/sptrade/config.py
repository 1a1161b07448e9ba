"""Flat ``key = value`` experiment configuration.

Boundary units: dBm for transmit power and noise density, watts for circuit
power, kHz for bandwidths, kbit/s for rate floors, metres for distances.
Everything is converted to SI when building :class:`SystemParams`.

The rate floors (``r_sc_min_kbps``, ``r_mu_min_kbps``) are read as kbit/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import SystemParams, dbm_to_watt
from .scenario import ChannelConfig, GeometryConfig

MODES = ("solve", "sweep-pmax", "sweep-pc", "convergence")
ALL_SCHEMES = ("greedy", "exhaustive", "non-spt", "tput")

DEFAULT_GRIDS = {
    "solve": (),
    "sweep-pmax": (10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0),
    "sweep-pc": (0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0),
    "convergence": (300.0, 700.0, 1100.0),
}


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` is anchored to the offending line."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(t) for t in items)


def _schemes(text: str) -> tuple:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [s for s in items if s not in ALL_SCHEMES]
    if bad or not items:
        raise ValueError(f"unknown scheme(s) {bad}; choose from {','.join(ALL_SCHEMES)}")
    return items


def _mode(text: str) -> str:
    t = text.strip()
    if t not in MODES:
        raise ValueError(f"unknown mode {t!r}; choose from {', '.join(MODES)}")
    return t


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


# key -> parser; every key also names an ExperimentConfig field
PARSERS = {
    "mode": _mode,
    "seeds": _positive_int,
    "seed": _seed,
    "schemes": _schemes,
    "grid": _floats,
    "out": str,
    "p_max_dbm": float,
    "p_circuit_w": float,
    "pa_efficiency": float,
    "noise_dbm_per_hz": float,
    "r_sc_min_kbps": float,
    "r_mu_min_kbps": float,
    "w_mu_khz": float,
    "b_su_khz": float,
    "n_mu": _positive_int,
    "n_su": _positive_int,
    "sc_radius_m": float,
    "mu_min_m": float,
    "mu_max_m": float,
    "mc_distance_m": float,
    "pathloss_intercept_db": float,
    "pathloss_slope": float,
    "shadowing_sigma_db": float,
    "penetration_loss_db": float,
    "penetration_on_mu": _bool,
    "penetration_on_su": _bool,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run; defaults are the standard simulation constants."""

    mode: str = "sweep-pmax"
    seeds: int = 200
    seed: int = 1
    schemes: tuple = ALL_SCHEMES
    grid: tuple | None = None
    out: str = "results"
    p_max_dbm: float = 30.0
    p_circuit_w: float = 2.0
    pa_efficiency: float = 0.38
    noise_dbm_per_hz: float = -174.0
    r_sc_min_kbps: float = 1000.0
    r_mu_min_kbps: float = 700.0
    w_mu_khz: float = 240.0
    b_su_khz: float = 180.0
    n_mu: int = 5
    n_su: int = 5
    sc_radius_m: float = 50.0
    mu_min_m: float = 20.0
    mu_max_m: float = 200.0
    mc_distance_m: float = 500.0
    pathloss_intercept_db: float = 128.1
    pathloss_slope: float = 37.6
    shadowing_sigma_db: float = 8.0
    penetration_loss_db: float = 20.0
    penetration_on_mu: bool = True
    penetration_on_su: bool = False
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def sweep_grid(self) -> tuple:
        return self.grid if self.grid is not None else DEFAULT_GRIDS[self.mode]

    def system_params(self, **overrides) -> SystemParams:
        """SI system constants; ``overrides`` use the same boundary units as the config."""
        cfg = replace(self, **overrides) if overrides else self
        return SystemParams(
            p_max_sc=dbm_to_watt(cfg.p_max_dbm),
            p_circuit=cfg.p_circuit_w,
            pa_efficiency=cfg.pa_efficiency,
            noise_density=dbm_to_watt(cfg.noise_dbm_per_hz),
            r_sc_min=cfg.r_sc_min_kbps * 1e3,
            mu_bandwidths=np.full(cfg.n_mu, cfg.w_mu_khz * 1e3),
            mu_rate_floors=np.full(cfg.n_mu, cfg.r_mu_min_kbps * 1e3),
            su_bandwidths=np.full(cfg.n_su, cfg.b_su_khz * 1e3),
        )

    def geometry(self, seed: int | None = None) -> GeometryConfig:
        return GeometryConfig(
            sc_radius=self.sc_radius_m,
            mu_ring=(self.mu_min_m, self.mu_max_m),
            n_su=self.n_su,
            n_mu=self.n_mu,
            seed=self.seed if seed is None else seed,
            mc_distance=self.mc_distance_m,
        )

    def channel(self) -> ChannelConfig:
        return ChannelConfig(
            pathloss_intercept_db=self.pathloss_intercept_db,
            pathloss_slope=self.pathloss_slope,
            shadowing_sigma_db=self.shadowing_sigma_db,
            penetration_loss_db=self.penetration_loss_db,
            penetration_on_mu=self.penetration_on_mu,
            penetration_on_su=self.penetration_on_su,
        )

    def validate(self) -> None:
        """Raise :class:`ConfigError` (anchored where possible) on bad values."""
        checks = [
            ("grid", self.mode == "solve" or len(self.sweep_grid) > 0, "sweep modes need a nonempty grid"),
            ("seeds", self.seeds >= 1, "seeds must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise self._error(key, msg)
        try:
            self.system_params()
            self.geometry()
            self.channel()
        except ValueError as exc:
            raise ConfigError(str(exc), self.provenance.get("__source__", "<config>")) from exc
        if self.mode == "sweep-pc" and any(v < 0 for v in self.sweep_grid):
            raise self._error("grid", "circuit powers must be >= 0")
        if self.mode == "convergence" and any(v <= 0 for v in self.sweep_grid):
            raise self._error("grid", "MU rate floors must be > 0")

    def _error(self, key: str, msg: str) -> ConfigError:
        source, line = self.provenance.get(key, (self.provenance.get("__source__", "<config>"), None))
        return ConfigError(msg, source, line)


def parse_lines(lines, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns raw typed values."""
    values: dict = {}
    provenance: dict = {"__source__": source}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"expected 'key = value', got {text!r}", source, lineno)
        key, value = (t.strip() for t in text.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"unknown key {key!r}", source, lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", source, lineno)
        try:
            values[key] = PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", source, lineno) from None
        provenance[key] = (source, lineno)
    values["provenance"] = provenance
    return values


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the config file, then command-line ``overrides`` (already typed)."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
        values = parse_lines(text.splitlines(), str(p))
    provenance = values.pop("provenance", {})
    for key, value in (overrides or {}).items():
        values[key] = value
        provenance[key] = ("<command line>", None)
    cfg = ExperimentConfig(**values, provenance=provenance)
    cfg.validate()
    return cfg


def parse_override(text: str) -> tuple:
    """Parse one ``KEY=VALUE`` command-line override."""
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE, got {text!r}", "<command line>")
    key, value = (t.strip() for t in text.split("=", 1))
    if key not in PARSERS:
        raise ConfigError(f"unknown key {key!r}", "<command line>")
    try:
        return key, PARSERS[key](value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}", "<command line>") from None


def render_defaults() -> str:
    """Default configuration as a commented ``key = value`` file."""
    cfg = ExperimentConfig()
    lines = ["# sptrade experiment configuration (defaults)"]
    for key in PARSERS:
        value = getattr(cfg, key)
        if key == "grid":
            value = ",".join(repr(v) for v in DEFAULT_GRIDS[cfg.mode])
        elif isinstance(value, tuple):
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
