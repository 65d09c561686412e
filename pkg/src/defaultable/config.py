"""Flat key=value experiment configuration.

Files hold one `key = value` pair per line with dotted section prefixes
(model.*, payoff.*, run.*, pde.*, converge.*); '#' starts a comment.
Command-line overrides beat file values. Every parameter read while a
study runs is recorded, defaults included, so the summary can echo the
full effective configuration needed to re-run it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .coefficients import CoefficientSet, ParametricFamily, load_tabulated_intensity
from .errors import ConfigError
from .payoffs import Payoff

STUDIES = ("price-discrete", "price-continuous", "simulate", "converge", "fdd-test")

_REQUIRED = object()


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' in {source}", line=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"empty key in {source}", line=lineno)
        if key in out:
            raise ConfigError(f"duplicate key in {source}", line=lineno, key=key)
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Parsed configuration plus the record of effective values."""

    values: dict
    source: str = "<config>"
    effective: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path, overrides=()) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        cfg = cls(parse_config_text(text, str(path)), source=str(path))
        cfg.apply_overrides(overrides)
        return cfg

    def apply_overrides(self, overrides):
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override '{item}' is not key=value")
            key, value = item.split("=", 1)
            self.values[key.strip()] = value.strip()

    # -- typed access, recording effective values ------------------

    def _fetch(self, key, default):
        if key in self.values:
            return self.values[key]
        if default is _REQUIRED:
            raise ConfigError("missing required parameter", key=key)
        return None

    def get_str(self, key, default=_REQUIRED) -> str:
        raw = self._fetch(key, default)
        val = raw if raw is not None else default
        self.effective[key] = val
        return val

    def get_int(self, key, default=_REQUIRED) -> int:
        raw = self._fetch(key, default)
        try:
            val = int(raw) if raw is not None else int(default)
        except (TypeError, ValueError):
            raise ConfigError(f"expected integer, got '{raw}'", key=key)
        self.effective[key] = val
        return val

    def get_float(self, key, default=_REQUIRED) -> float:
        raw = self._fetch(key, default)
        try:
            val = float(raw) if raw is not None else float(default)
        except (TypeError, ValueError):
            raise ConfigError(f"expected number, got '{raw}'", key=key)
        self.effective[key] = val
        return val

    def get_bool(self, key, default=_REQUIRED) -> bool:
        raw = self._fetch(key, default)
        if raw is None:
            val = bool(default)
        elif str(raw).lower() in ("true", "1", "yes", "on"):
            val = True
        elif str(raw).lower() in ("false", "0", "no", "off"):
            val = False
        else:
            raise ConfigError(f"expected boolean, got '{raw}'", key=key)
        self.effective[key] = val
        return val

    def get_int_list(self, key, default=_REQUIRED) -> list:
        raw = self._fetch(key, default)
        seq = raw.split(",") if raw is not None else list(default)
        try:
            val = [int(str(x).strip()) for x in seq]
        except (TypeError, ValueError):
            raise ConfigError(f"expected comma-separated integers, got '{raw}'", key=key)
        self.effective[key] = ",".join(str(v) for v in val)
        return val

    def get_float_list(self, key, default=_REQUIRED) -> list:
        raw = self._fetch(key, default)
        seq = raw.split(",") if raw is not None else list(default)
        try:
            val = [float(str(x).strip()) for x in seq]
        except (TypeError, ValueError):
            raise ConfigError(f"expected comma-separated numbers, got '{raw}'", key=key)
        self.effective[key] = ",".join(f"{v:g}" for v in val)
        return val

    def has(self, key) -> bool:
        return key in self.values

    # -- composite builders -----------------------------------------

    def seed(self) -> int:
        if "seed" not in self.values:
            raise ConfigError("seed is mandatory (no wall-clock default)", key="seed")
        return self.get_int("seed")

    def study(self, override: Optional[str] = None) -> str:
        tag = override or self.get_str("study", default=None)
        if tag is None:
            raise ConfigError("no study tag: set 'study' or use a subcommand", key="study")
        if tag not in STUDIES:
            raise ConfigError(f"unknown study '{tag}' (choose from {STUDIES})", key="study")
        if "study" in self.values and override and self.values["study"] != override:
            raise ConfigError(
                f"config study '{self.values['study']}' conflicts with subcommand '{override}'",
                key="study")
        self.effective["study"] = tag
        return tag

    def build_coefficients(self) -> CoefficientSet:
        tag = self.get_str("model.family")
        params = {}
        for name, key in (("sigma", "model.sigma"), ("r", "model.r"),
                          ("lambda", "model.lambda"), ("b", "model.b"),
                          ("mu", "model.mu"), ("c", "model.c"), ("p", "model.p"),
                          ("lambda_cap", "model.lambda_cap"),
                          ("sigma_floor", "model.sigma_floor"),
                          ("s_min", "model.s_min"), ("s_max", "model.s_max")):
            if self.has(key):
                params[name] = self.get_float(key)
        try:
            if tag == "tabulated":
                table_path = self.get_str("model.table")
                fam = load_tabulated_intensity(table_path, params)
            else:
                fam = ParametricFamily(tag, params)
            return fam.build()
        except Exception as exc:
            raise ConfigError(f"cannot build coefficient family: {exc}", key="model.family")

    def build_payoff(self) -> Payoff:
        kind = self.get_str("payoff.kind")
        try:
            if kind in ("call", "put", "digital"):
                return Payoff(kind, strike=self.get_float("payoff.strike"))
            if kind == "constant":
                return Payoff(kind, level=self.get_float("payoff.level"))
            if kind == "identity":
                return Payoff(kind)
            if kind == "table":
                return Payoff(kind,
                              breakpoints=tuple(self.get_float_list("payoff.breakpoints")),
                              values=tuple(self.get_float_list("payoff.values")))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"cannot build payoff: {exc}", key="payoff.kind")
        raise ConfigError(f"unknown payoff kind '{kind}'", key="payoff.kind")

    def echo_lines(self) -> list:
        return [f"{key} = {self.effective[key]}" for key in sorted(self.effective)]
