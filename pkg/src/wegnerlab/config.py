"""Run configuration: flat INI sections, fully echoed into every output directory."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from . import genfunc
from .covariance import CovarianceSpec, preset, read_covariance
from .experiments import DEFAULT_DELTAS


class ConfigError(ValueError):
    pass


def parse_int_list(text: str) -> list[int]:
    """``"1-5,10"`` -> ``[1, 2, 3, 4, 5, 10]``; order kept, duplicates dropped."""
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            values = range(int(lo), int(hi) + 1)
        else:
            values = [int(part)]
        for v in values:
            if v not in out:
                out.append(v)
    return out


def parse_kernel(text: str, d: int) -> CovarianceSpec:
    """Covariance source: a preset name, ``exponential:AMPLITUDE,RATE``,
    ``table:POINT=VALUE;...`` (coordinates of a point joined by ``,``) or
    ``file:PATH``."""
    text = text.strip()
    if text.startswith("file:"):
        spec = read_covariance(text[5:])
        if spec.d != d:
            raise ConfigError(f"covariance file has d={spec.d}, config has d={d}")
        return spec
    if text.startswith("exponential:"):
        try:
            amplitude, rate = (float(v) for v in text[12:].split(","))
        except ValueError:
            raise ConfigError(f"cannot parse {text!r}; expected exponential:AMPLITUDE,RATE") from None
        return CovarianceSpec.exponential(amplitude, rate, d)
    if text.startswith("table:"):
        table = {}
        try:
            for item in text[6:].split(";"):
                if item.strip():
                    point, value = item.split("=")
                    table[tuple(int(c) for c in point.split(","))] = float(value)
        except ValueError:
            raise ConfigError(f"cannot parse {text!r}; expected table:POINT=VALUE;...") from None
        return CovarianceSpec.from_table(table, d=d)
    try:
        return preset(text, d)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None


_SECTIONS = {
    "covariance": ("kernel", "d"),
    "model": ("L", "lam", "interval", "background", "background_file"),
    "run": ("samples", "seed", "threads"),
    "analysis": ("zero_tol", "tail_tol", "max_total_degree"),
    "regularity": ("l_list", "epsilon", "deltas", "mc_l", "n_max"),
    "averaging": ("trials",),
}


@dataclass
class RunConfig:
    kernel: str = "iid"
    d: int = 1
    L: int = 10
    lam: float = 1.0
    interval: tuple = (-0.5, 0.5)
    background: str = "laplacian"
    background_file: str = ""
    samples: int = 500
    seed: int = 0
    threads: int = 1
    zero_tol: float | None = None
    tail_tol: float = genfunc.DEFAULT_TAIL_TOL
    max_total_degree: int = genfunc.DEFAULT_MAX_DEGREE
    l_list: list = field(default_factory=lambda: list(range(1, 51)) + [500, 5000, 6000])
    epsilon: float = 0.1
    deltas: tuple = DEFAULT_DELTAS
    mc_l: int = 2
    n_max: int = 1_000_000
    trials: int = 50

    def covariance(self) -> CovarianceSpec:
        return parse_kernel(self.kernel, self.d)

    def _text(self, name: str) -> str:
        value = getattr(self, name)
        if name == "interval":
            return f"{value[0]!r} {value[1]!r}"
        if name == "deltas":
            return " ".join(repr(float(v)) for v in value)
        if name == "l_list":
            return ",".join(str(v) for v in value)
        if name == "zero_tol":
            return "auto" if value is None else repr(value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, keys in _SECTIONS.items():
            parser[section] = {key: self._text(key) for key in keys}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def set(self, name: str, text: str):
        """Set one field from its textual form."""
        text = str(text).strip()
        try:
            if name == "interval":
                lo, hi = (float(v) for v in text.replace(",", " ").split())
                value = (lo, hi)
            elif name == "deltas":
                value = tuple(float(v) for v in text.replace(",", " ").split())
            elif name == "l_list":
                value = parse_int_list(text)
            elif name == "zero_tol":
                value = None if text in ("", "auto") else float(text)
            elif name in ("kernel", "background", "background_file"):
                value = text
            else:
                kind = {f.name: f.type for f in fields(self)}[name]
                value = int(text) if kind == "int" else float(text)
        except (ValueError, KeyError):
            raise ConfigError(f"bad value {text!r} for {name}") from None
        setattr(self, name, value)

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser[section].items():
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                cfg.set(key, value)
        return cfg
