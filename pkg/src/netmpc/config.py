"""Experiment configuration files.

A sectioned INI-style text file.  Matrices carry their dimensions and are
written row by row, rows separated by semicolons::

    [system]
    A = (2x2) 1 0.1; 0 1
    B = (2x1) 0; 1

Unknown sections or keys are errors, so a typo never silently falls back
to a default.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

import numpy as np

from .channels import BernoulliChannel, GilbertElliottChannel
from .model import SystemModel
from .policy import VARIANTS, SaturatorSpec
from .simulation import SimConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section and key."""


MATRIX_KEYS = {
    "system": ("A", "B", "C", "Sigma_w", "Sigma_v", "Sigma_x0"),
    "cost": ("Q", "Q_N", "R"),
}

SCHEMA = {
    "system": {"A", "B", "C", "Sigma_w", "Sigma_v", "Sigma_x0", "orthogonal_dim"},
    "cost": {"Q", "Q_N", "R"},
    "horizon": {"N", "N_r"},
    "control": {"u_max", "saturator", "psi_max", "policy"},
    "channels": {f"{side}_{k}" for side in ("sensor", "control")
                 for k in ("kind", "p", "p_gb", "p_bg", "p_good", "p_bad")},
    "stability": {"enabled", "r", "zeta"},
    "simulation": {"T", "paths", "seed", "batch_size", "threads"},
    "moments": {"samples", "seed", "path"},
}
REQUIRED = {
    "system": {"A", "B", "C", "Sigma_w", "Sigma_v", "Sigma_x0"},
    "cost": {"Q", "Q_N", "R"},
    "horizon": {"N", "N_r"},
    "control": {"u_max"},
}

_DIMS = re.compile(r"^\(\s*(\d+)\s*x\s*(\d+)\s*\)\s*(.*)$", re.S)


def parse_matrix(text: str) -> np.ndarray:
    """``"(2x2) 1 0; 0 1"`` -> 2x2 array.  An empty body is allowed for zero-size shapes."""
    m = _DIMS.match(text.strip())
    if not m:
        raise ValueError("matrix must start with its shape, e.g. (2x2)")
    r, c, body = int(m.group(1)), int(m.group(2)), m.group(3).strip()
    rows = [row.split() for row in body.split(";")] if body else []
    rows = [row for row in rows if row]
    if len(rows) != r or any(len(row) != c for row in rows):
        raise ValueError(f"expected {r} rows of {c} entries")
    return np.array([[float(v) for v in row] for row in rows], dtype=float).reshape(r, c)


def format_matrix(M) -> str:
    """Inverse of :func:`parse_matrix`; ``repr`` keeps every float exact."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    body = "; ".join(" ".join(repr(float(v)) for v in row) for row in M)
    return f"({M.shape[0]}x{M.shape[1]}) {body}".rstrip()


@dataclass
class ExperimentConfig:
    model: SystemModel
    sensor: object
    control: object
    sat: SaturatorSpec = field(default_factory=SaturatorSpec)
    variant: str = "full"
    stability: bool = True
    r: float | None = None       # None = derived default
    zeta: float | None = None
    T: int = 120
    paths: int = 100
    seed: int = 0
    batch_size: int = 200
    threads: int = 1
    moment_samples: int = 100_000
    moment_seed: int | None = None
    moments_path: str = "generate"

    def sim_config(self, moments=None, **overrides) -> SimConfig:
        cfg = SimConfig(model=self.model, sensor=self.sensor, control=self.control,
                        variant=self.variant, stability=self.stability, r=self.r, zeta=self.zeta,
                        T=self.T, paths=self.paths, seed=self.seed, moments=moments,
                        moment_samples=self.moment_samples, moment_seed=self.moment_seed,
                        sat=self.sat, batch_size=self.batch_size, threads=self.threads,
                        orthogonal_dim=self.model.orthogonal_dim)
        return cfg.with_(**overrides) if overrides else cfg

    @classmethod
    def from_sim_config(cls, cfg: SimConfig, moments_path: str = "generate") -> "ExperimentConfig":
        model = cfg.model
        if cfg.orthogonal_dim is not None and model.orthogonal_dim is None:
            model = model.replace(orthogonal_dim=cfg.orthogonal_dim)
        return cls(model=model, sensor=cfg.sensor, control=cfg.control, sat=cfg.sat,
                   variant=cfg.variant, stability=cfg.stability, r=cfg.r, zeta=cfg.zeta, T=cfg.T,
                   paths=cfg.paths, seed=cfg.seed, batch_size=cfg.batch_size, threads=cfg.threads,
                   moment_samples=cfg.moment_samples, moment_seed=cfg.moment_seed,
                   moments_path=moments_path)


def _get(section, key, conv, default=None, required=False):
    sec_name = section.name
    if key not in section:
        if required:
            raise ConfigError(f"[{sec_name}] missing required key '{key}'")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec_name}] {key}: {exc}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _channel(sec, side: str):
    kind = _get(sec, f"{side}_kind", str, "bernoulli").strip().lower()
    if kind == "bernoulli":
        return BernoulliChannel(_get(sec, f"{side}_p", float, required=True))
    if kind in ("gilbert_elliott", "gilbert-elliott", "ge"):
        return GilbertElliottChannel(
            _get(sec, f"{side}_p_gb", float, required=True),
            _get(sec, f"{side}_p_bg", float, required=True),
            _get(sec, f"{side}_p_good", float, required=True),
            _get(sec, f"{side}_p_bad", float, 0.0))
    raise ConfigError(f"[channels] {side}_kind: unknown channel kind {kind!r}")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    cp.optionxform = str  # keys are case sensitive (Q vs q)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"[{name}] unknown section")
        for key in cp[name]:
            if key not in SCHEMA[name]:
                raise ConfigError(f"[{name}] unknown key '{key}'")
    for name, keys in REQUIRED.items():
        if name not in cp:
            raise ConfigError(f"[{name}] missing section")
        for key in keys:
            if key not in cp[name]:
                raise ConfigError(f"[{name}] missing required key '{key}'")

    def sec(name):
        if name not in cp:
            cp.add_section(name)
        return cp[name]

    mats = {key: _get(cp[name], key, parse_matrix, required=True)
            for name, keys in MATRIX_KEYS.items() for key in keys}
    system, horizon, control = sec("system"), sec("horizon"), sec("control")
    try:
        model = SystemModel(
            **mats,
            u_max=_get(control, "u_max", float, required=True),
            N=_get(horizon, "N", int, required=True),
            N_r=_get(horizon, "N_r", int, required=True),
            orthogonal_dim=_get(system, "orthogonal_dim", int))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[system] {exc}") from None

    kind = _get(control, "saturator", str, "sigmoid").strip().lower()
    try:
        sat = SaturatorSpec(kind, _get(control, "psi_max", float, 1.0))
    except ValueError as exc:
        raise ConfigError(f"[control] saturator: {exc}") from None
    variant = _get(control, "policy", str, "full").strip().lower()
    if variant not in VARIANTS:
        raise ConfigError(f"[control] policy: unknown variant {variant!r}")

    channels = sec("channels")
    try:
        sensor, ctrl = _channel(channels, "sensor"), _channel(channels, "control")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[channels] {exc}") from None

    stab, simsec, mom = sec("stability"), sec("simulation"), sec("moments")
    out = ExperimentConfig(
        model=model, sensor=sensor, control=ctrl, sat=sat, variant=variant,
        stability=_get(stab, "enabled", _bool, True),
        r=_get(stab, "r", _auto_float), zeta=_get(stab, "zeta", _auto_float),
        T=_get(simsec, "T", int, 120), paths=_get(simsec, "paths", int, 100),
        seed=_get(simsec, "seed", int, 0), batch_size=_get(simsec, "batch_size", int, 200),
        threads=_get(simsec, "threads", int, 1),
        moment_samples=_get(mom, "samples", int, 100_000),
        moment_seed=_get(mom, "seed", int),
        moments_path=_get(mom, "path", str, "generate").strip())
    for name, val in (("T", out.T), ("paths", out.paths), ("batch_size", out.batch_size),
                      ("threads", out.threads)):
        if val < 1:
            raise ConfigError(f"[simulation] {name} must be at least 1")
    return out


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _channel_lines(side: str, ch) -> list[str]:
    if isinstance(ch, BernoulliChannel):
        return [f"{side}_kind = bernoulli", f"{side}_p = {ch.p!r}"]
    return [f"{side}_kind = gilbert_elliott", f"{side}_p_gb = {ch.p_gb!r}",
            f"{side}_p_bg = {ch.p_bg!r}", f"{side}_p_good = {ch.p_good!r}",
            f"{side}_p_bad = {ch.p_bad!r}"]


def format_config(cfg: ExperimentConfig) -> str:
    """Text that :func:`parse_config` maps back to an identical configuration."""
    m = cfg.model
    lines = ["[system]"]
    lines += [f"{k} = {format_matrix(getattr(m, k))}" for k in MATRIX_KEYS["system"]]
    if m.orthogonal_dim is not None:
        lines.append(f"orthogonal_dim = {m.orthogonal_dim}")
    lines += ["", "[cost]"] + [f"{k} = {format_matrix(getattr(m, k))}" for k in MATRIX_KEYS["cost"]]
    lines += ["", "[horizon]", f"N = {m.N}", f"N_r = {m.N_r}"]
    lines += ["", "[control]", f"u_max = {m.u_max!r}", f"saturator = {cfg.sat.kind}",
              f"psi_max = {cfg.sat.psi_max!r}", f"policy = {cfg.variant}"]
    lines += ["", "[channels]"] + _channel_lines("sensor", cfg.sensor) + _channel_lines("control", cfg.control)
    lines += ["", "[stability]", f"enabled = {'true' if cfg.stability else 'false'}",
              f"r = {'auto' if cfg.r is None else repr(cfg.r)}",
              f"zeta = {'auto' if cfg.zeta is None else repr(cfg.zeta)}"]
    lines += ["", "[simulation]", f"T = {cfg.T}", f"paths = {cfg.paths}", f"seed = {cfg.seed}",
              f"batch_size = {cfg.batch_size}", f"threads = {cfg.threads}"]
    lines += ["", "[moments]", f"samples = {cfg.moment_samples}"]
    if cfg.moment_seed is not None:
        lines.append(f"seed = {cfg.moment_seed}")
    lines.append(f"path = {cfg.moments_path}")
    return "\n".join(lines) + "\n"
