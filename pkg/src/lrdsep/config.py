"""INI experiment files.

Values are JSON literals (numbers, lists, ``true``/``false``); bare words are
read as strings. Unknown sections or keys are rejected so typos never pass
silently.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass
from pathlib import Path

from .function_classes import QuadratureSpec
from .lrd import LrdModel

SCHEMA: dict[str, dict[str, type | tuple[type, ...]]] = {
    "model": {"p": int, "D": (int, float), "C": list, "L": str, "beta": (int, float)},
    "class": {"kind": str, "directions": list, "n_directions": int, "offsets": list, "corners": list,
              "axis_grid": list, "radii": list, "terms": list},
    "experiment": {"m": int, "N_list": list, "replicates": int, "root_seed": int, "sampler": str,
                   "decay_ratio": (int, float), "workers": int},
    "tolerances": {"slope": (int, float), "gof_level": (int, float), "variance_sigmas": (int, float),
                   "cancellation": (int, float), "addition": (int, float), "basis": (int, float),
                   "folding": (int, float), "orthogonality": (int, float)},
    "quadrature": {"order": int, "qmc_log2": int, "qmc_replicates": int, "tol": (int, float), "seed": int},
    "simulate": {"N": int, "seed": int, "generator": str},
    "check": {"seed": int, "cases": int, "p_max": int, "m_max": int, "basis_m_max": int,
              "negative_control": bool},
    "bracket": {"epsilons": list, "r": list},
    "output": {"formats": list},
}


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


@dataclass
class ConfigFile:
    sections: dict[str, dict]
    source: str = "<defaults>"

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def model(self) -> LrdModel:
        fields = self.section("model")
        if "C" not in fields or "D" not in fields:
            raise ConfigError("[model] needs at least C and D")
        try:
            model = LrdModel.from_matrix(fields["C"], fields["D"], fields.get("L", "constant"), fields.get("beta", 0.0))
        except ValueError as exc:
            raise ConfigError(f"invalid model: {exc}") from exc
        if "p" in fields and fields["p"] != model.p:
            raise ConfigError(f"[model] p = {fields['p']} but C is {model.p}x{model.p}")
        return model

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(**self.section("quadrature"))


def parse_config(text: str, source: str = "<string>") -> ConfigFile:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{name}]")
        values = {}
        for key, raw in parser.items(name):
            if key not in SCHEMA[name]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{name}]")
            value = _parse_value(raw)
            expected = SCHEMA[name][key]
            types = expected if isinstance(expected, tuple) else (expected,)
            # bool is an int subclass; only accept it where asked for
            if (isinstance(value, bool) and bool not in types) or not isinstance(value, types):
                names = "/".join(t.__name__ for t in types)
                raise ConfigError(f"{source}: [{name}] {key} = {raw!r} is not of type {names}")
            values[key] = value
        sections[name] = values
    return ConfigFile(sections, source)


def load_config(path: str | Path | None) -> ConfigFile:
    if path is None:
        return ConfigFile({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
