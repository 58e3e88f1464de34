"""Experiment config files.

Grammar (line oriented, ``#`` or ``;`` starts a comment)::

    [experiment]
    id = kurtosis_sweep          ; registry name
    seeds = 0-9                  ; ranges and/or comma lists: 0-4, 7, 9
    out = results/sweep          ; output directory
    full = false                 ; full-scale sizes

    [params]                     ; overrides of the experiment defaults
    tau = 0.1
    g = 0.01, 0.5, 1             ; comma separated values become lists

Values are parsed as int, float, true/false, comma lists of those, or text.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_seeds(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list | None = None          # None -> registry default
    out_dir: Path | None = None
    full: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seeds is not None:
            self.seeds = parse_seeds(self.seeds)
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)


def load_config(path) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not cp.has_section("experiment") or "id" not in cp["experiment"]:
        raise ConfigError("config needs an [experiment] section with an id")
    ex = cp["experiment"]
    params = {k: parse_value(v) for k, v in cp["params"].items()} if cp.has_section("params") else {}
    return ExperimentConfig(
        experiment=ex["id"].strip(),
        seeds=parse_seeds(ex["seeds"]) if "seeds" in ex else None,
        out_dir=ex.get("out"),
        full=ex.getboolean("full", fallback=False),
        params=params,
    )
