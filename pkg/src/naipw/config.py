"""Config file loading, flag overrides, and object construction.

One YAML file drives every CLI command; its sections mirror the domain
types (``dgp``, ``hyper_grid``, ``mc``, ``stress``, ``probe``). Any value
can be overridden on the command line with ``--section.key=value``
flags, which win over the file. A stable digest of the merged config is
recorded in each run manifest.
"""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Optional, Sequence

import numpy as np
import yaml

from .dgp import DgpSpec
from .errors import ValidationError
from .firststage.params import NetHyper
from .mc import McConfig

CONFIG_SECTIONS = ("dgp", "hyper", "hyper_grid", "mc", "stress", "probe")


def load_config(path) -> dict:
    """Parse the YAML config; unreadable or non-mapping input is a config error."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a mapping of sections")
    return raw


def parse_override(flag: str) -> tuple[list[str], object]:
    """Split one ``--a.b.c=value`` flag; values parse as YAML scalars."""
    if not flag.startswith("--") or "=" not in flag:
        raise ValidationError(f"unrecognized argument {flag!r}; overrides look like --section.key=value")
    key, _, text = flag[2:].partition("=")
    if not key:
        raise ValidationError(f"override {flag!r} is missing a key")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"override {flag!r} has an unparsable value: {exc}") from exc
    return key.split("."), value


def apply_overrides(config: dict, flags: Sequence[str]) -> dict:
    """Return a copy of the config with every flag applied (flags win)."""
    merged = copy.deepcopy(config)
    for flag in flags:
        path, value = parse_override(flag)
        node = merged
        for part in path[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[path[-1]] = value
    return merged


def config_digest(config: dict) -> str:
    """sha256 of the canonicalized (sorted-key JSON) config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_dgp(config: dict) -> DgpSpec:
    section = config.get("dgp")
    if not isinstance(section, dict):
        raise ValidationError("config needs a 'dgp' section")
    try:
        return DgpSpec.from_dict(section)
    except (TypeError, ValidationError) as exc:
        raise ValidationError(f"invalid dgp section: {exc}") from exc


def build_hyper_grid(config: dict, p: int) -> tuple[NetHyper, ...]:
    """Build the grid from ``hyper_grid`` (list) or ``hyper`` (single cell).

    Cells omitting ``hidden_widths`` or ``batch_size`` get the baseline
    p-sized defaults.
    """
    raw = config.get("hyper_grid")
    if raw is None and "hyper" in config:
        raw = [config["hyper"]]
    if raw is None:
        return ()
    if not isinstance(raw, list) or not all(isinstance(c, dict) for c in raw):
        raise ValidationError("'hyper_grid' must be a list of mappings")
    cells = []
    for entry in raw:
        entry = dict(entry)
        entry.setdefault("hidden_widths", [p, p, p])
        entry.setdefault("batch_size", 3 * p)
        try:
            cells.append(NetHyper.from_dict(entry))
        except (TypeError, ValidationError) as exc:
            raise ValidationError(f"invalid hyper cell {entry}: {exc}") from exc
    return tuple(cells)


def build_mc_config(config: dict) -> McConfig:
    dgp = build_dgp(config)
    grid = build_hyper_grid(config, dgp.p)
    section = dict(config.get("mc", {}))
    if not isinstance(section, dict):
        raise ValidationError("'mc' section must be a mapping")
    if "estimators" in section:
        section["estimators"] = tuple(section["estimators"])
    known = {
        "m", "base_seed", "oracle_mode", "cap", "n_folds",
        "stratify_folds", "clamp_eps", "estimators",
    }
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown mc keys: {sorted(unknown)}")
    try:
        return McConfig(dgp=dgp, hyper_grid=grid, **section)
    except (TypeError, ValidationError) as exc:
        raise ValidationError(f"invalid mc section: {exc}") from exc


def build_stress_settings(config: dict) -> dict:
    section = dict(config.get("stress", {}))
    known = {"s_grid", "n", "seed", "two_unit_offset"}
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown stress keys: {sorted(unknown)}")
    section.setdefault("s_grid", [2.0, 4.0, 8.0, 12.0])
    return section


def build_probe_settings(config: dict) -> dict:
    section = dict(config.get("probe", {}))
    known = {"n", "seed", "eps_grid", "eps_max", "eps_points"}
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown probe keys: {sorted(unknown)}")
    if "eps_grid" not in section:
        eps_max = float(section.pop("eps_max", 0.1))
        points = int(section.pop("eps_points", 9))
        if points < 3 or points % 2 == 0:
            raise ValidationError("eps_points must be an odd count of at least 3")
        section["eps_grid"] = [float(e) for e in np.linspace(-eps_max, eps_max, points)]
    else:
        section.pop("eps_max", None)
        section.pop("eps_points", None)
    return section


def build_single_hyper(config: dict, p: int, seed: Optional[int] = None) -> NetHyper:
    """One hyper cell for the estimate command; falls back to defaults."""
    grid = build_hyper_grid(config, p)
    if grid:
        hyper = grid[0]
    else:
        hyper = NetHyper.default_for(p)
    if seed is not None:
        import dataclasses

        hyper = dataclasses.replace(hyper, seed=seed)
    return hyper
