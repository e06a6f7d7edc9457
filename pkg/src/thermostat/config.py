"""Plain-text model files.

INI-style sections, ``key = value`` lines and ``#`` comments::

    [model]
    name = fig1

    [system]
    levels = 0, 25          # energies E_i in u, non-decreasing

    [band.1]                # band labels are 1-based, ordered by label
    energy = 0              # mean band energy E_a
    width = 0.5             # delta epsilon
    levels = 500            # N_a

    [band.2]
    energy = 25
    width = 0.5
    levels = 500

    [block.1]
    system = 0 1            # system levels i j (0-based)
    bands = 2 1             # band labels a b (1-based)
    strength = 5e-4         # lambda_{ij,ab}

An optional ``[scenario]`` section is read by :mod:`thermostat.scenarios`.
"""
from __future__ import annotations

import configparser
import re
from pathlib import Path

from .exceptions import SpecificationError
from .model import BandSpec, CouplingBlockSpec, ModelSpec, SystemSpec

_SECTION = re.compile(r"^(band|block)\.(\d+)$")


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                     interpolation=None)


def _floats(text: str) -> list[float]:
    return [float(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in re.split(r"[,\s]+", text.strip()) if x]


def read_config(path_or_text: str | Path) -> configparser.ConfigParser:
    cp = _parser()
    try:
        if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
            path = Path(path_or_text)
            if not path.is_file():
                raise SpecificationError(f"config file not found: {path}")
            cp.read_string(path.read_text(), source=str(path))
        else:
            cp.read_string(str(path_or_text))
    except configparser.Error as exc:
        raise SpecificationError(f"cannot parse config: {exc}") from exc
    return cp


def model_from_config(cp: configparser.ConfigParser) -> ModelSpec:
    if not cp.has_section("system"):
        raise SpecificationError("config has no [system] section")
    try:
        system = SystemSpec(tuple(_floats(cp.get("system", "levels"))))
        bands, blocks = {}, {}
        for section in cp.sections():
            m = _SECTION.match(section)
            if not m:
                continue
            label = int(m.group(2))
            sec = cp[section]
            if m.group(1) == "band":
                bands[label] = BandSpec(float(sec["energy"]), float(sec["width"]), int(sec["levels"]))
            else:
                blocks[label] = sec
        if not bands:
            raise SpecificationError("config defines no [band.N] sections")
        labels = sorted(bands)
        index = {lab: k for k, lab in enumerate(labels)}
        blks = []
        for label in sorted(blocks):
            sec = blocks[label]
            i, j = _ints(sec["system"])
            a_lab, b_lab = _ints(sec["bands"])
            if a_lab not in index or b_lab not in index:
                raise SpecificationError(f"[block.{label}] references an undefined band")
            blks.append(CouplingBlockSpec((i, j), (index[a_lab], index[b_lab]), float(sec["strength"])))
    except (KeyError, ValueError, configparser.Error) as exc:
        if isinstance(exc, SpecificationError):
            raise
        raise SpecificationError(f"invalid model config: {exc}") from exc
    name = cp.get("model", "name", fallback="")
    return ModelSpec(system, tuple(bands[lab] for lab in labels), tuple(blks), name=name)


def load_model(path_or_text: str | Path) -> ModelSpec:
    return model_from_config(read_config(path_or_text))


def format_model(spec: ModelSpec) -> str:
    lines = ["[model]", f"name = {spec.name}", "", "[system]",
             "levels = " + ", ".join(repr(e) for e in spec.system.levels), ""]
    for a, band in enumerate(spec.bands, start=1):
        lines += [f"[band.{a}]", f"energy = {band.mean_energy!r}", f"width = {band.width!r}",
                  f"levels = {band.level_count}", ""]
    for k, blk in enumerate(spec.blocks, start=1):
        i, j, a, b = blk.key
        lines += [f"[block.{k}]", f"system = {i} {j}", f"bands = {a + 1} {b + 1}",
                  f"strength = {blk.strength!r}", ""]
    return "\n".join(lines)


def save_model(spec: ModelSpec, path: str | Path) -> None:
    Path(path).write_text(format_model(spec))
