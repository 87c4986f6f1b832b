"""Flat key/value run configuration and reproducibility manifests.

Configs are INI files with one section per module and no nesting, so
manifests diff cleanly.  All randomness in a run flows from the single
64-bit seed in the [run] section.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import time
from dataclasses import dataclass

from . import __version__
from .graphs import IntrinsicGraph, graph_from_config
from .pseudoquad import Pseudoquad, make_root_pseudoquad


class ConfigError(ValueError):
    """A run configuration is missing or malformed; names the key."""


def load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")
    return parser


def require(cfg, section: str, key: str) -> str:
    if not cfg.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    if not cfg.has_option(section, key):
        raise ConfigError(f"missing key {key!r} in section [{section}]")
    return cfg.get(section, key)


def get_float(cfg, section, key, default=None) -> float:
    if cfg.has_option(section, key):
        try:
            return cfg.getfloat(section, key)
        except ValueError as exc:
            raise ConfigError(f"key {key!r} in [{section}] is not a number") from exc
    if default is None:
        raise ConfigError(f"missing key {key!r} in section [{section}]")
    return default


def get_int(cfg, section, key, default=None) -> int:
    if cfg.has_option(section, key):
        try:
            return cfg.getint(section, key)
        except ValueError as exc:
            raise ConfigError(f"key {key!r} in [{section}] is not an integer") from exc
    if default is None:
        raise ConfigError(f"missing key {key!r} in section [{section}]")
    return default


def run_seed(cfg) -> int:
    return get_int(cfg, "run", "seed", 0)


def graph_from_run_config(cfg) -> IntrinsicGraph:
    if not cfg.has_section("graph"):
        raise ConfigError("missing section [graph]")
    mapping = dict(cfg.items("graph"))
    if "name" not in mapping:
        raise ConfigError("missing key 'name' in section [graph]")
    if "seed" not in mapping:
        mapping["seed"] = str(run_seed(cfg))
    try:
        return graph_from_config(mapping)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc


def root_from_run_config(cfg, G: IntrinsicGraph) -> Pseudoquad:
    cx = get_float(cfg, "root", "center_x", 0.0)
    cz = get_float(cfg, "root", "center_z", 0.0)
    width = get_float(cfg, "root", "width")
    height = get_float(cfg, "root", "height")
    n_half = get_int(cfg, "root", "trace_n_half", 2048)
    return make_root_pseudoquad(G, cx, cz, width, height, n_half=n_half)


@dataclass(frozen=True)
class RunManifest:
    """Sidecar record that makes a run replayable bit for bit."""

    command: str
    config_digest: str
    seed: int
    grid: str
    version: str
    wall_clock: float

    def write(self, path) -> None:
        payload = {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "grid": self.grid,
            "version": self.version,
            "wall_clock": self.wall_clock,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def make_manifest(command: str, config_path, seed: int, grid: str, started: float) -> RunManifest:
    return RunManifest(
        command=command,
        config_digest=digest_file(config_path),
        seed=seed,
        grid=grid,
        version=__version__,
        wall_clock=time.time() - started,
    )
