"""Run configuration files for the command-line front-end.

Example::

    {
      "env": {"kind": "corridor", "params": {"cadences": [2, 2, 3, 3]}},
      "search": {"strides": [1, 2, 3, 4], "length": 4, "alphas": [],
                 "filter": {"enabled": true, "margin": 0.0,
                            "distributions": ["initial", "uniform"]}},
      "outputs": "out",
      "plot": true,
      "sweep": {"margins": [0, 0.01], "distributions": [["initial"], ["uniform"]],
                "alphas": [[]], "lengths": [4]}
    }

``env`` may instead hold ``{"grid": {...GridSpec JSON...}}`` or
``{"mdp": "path/to/mdp.json", "initial": "uniform" | [p0, p1, ...]}``.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .envs import GridSpec, build_world, corridor_world, splitter_world
from .errors import InputError
from .model import Mdp
from .pareto import FilterConfig
from .search import SearchConfig, default_workers, resolve_distribution

GENERATORS = {"corridor": corridor_world, "splitter": splitter_world}

_TOP_KEYS = {"env", "search", "outputs", "plot", "sweep", "rollout"}
_SEARCH_KEYS = {"strides", "length", "alphas", "eps", "filter"}
_FILTER_KEYS = {"enabled", "margin", "distributions"}
_SWEEP_KEYS = {"margins", "distributions", "alphas", "lengths"}
_ROLLOUT_KEYS = {"n", "horizon", "seed"}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    if not isinstance(data, dict):
        raise InputError(f"config section {section!r} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise InputError(f"unknown keys in {section!r}: {sorted(unknown)}")


def dist_name(spec, index: int) -> str:
    return spec if isinstance(spec, str) else f"vector{index}"


@dataclass
class RunConfig:
    mdp: Mdp
    initial: np.ndarray
    grid: GridSpec | None
    strides: tuple[int, ...]
    length: int
    alphas: tuple[float, ...] = ()
    eps: float | None = None
    filter_enabled: bool = True
    margin: float = 0.0
    distributions: tuple = ("initial",)
    outputs: Path = Path("psmdp-out")
    plot: bool = True
    sweep: dict | None = None
    rollout: dict = field(default_factory=dict)

    def resolve(self, spec) -> np.ndarray:
        return resolve_distribution(spec, self.mdp.n_states, self.initial)

    def named_distributions(self, specs=None) -> list[tuple[str, np.ndarray]]:
        specs = self.distributions if specs is None else specs
        return [(dist_name(s, i), self.resolve(s)) for i, s in enumerate(specs)]

    def search_config(self, **over: Any) -> SearchConfig:
        c = replace(self, **over) if over else self
        flt = None
        if c.filter_enabled:
            flt = FilterConfig(tuple(d for _, d in c.named_distributions()), c.margin)
        return SearchConfig(c.strides, c.length, c.initial, c.alphas, flt, c.eps, default_workers())


def _load_env(env: dict, base: Path) -> tuple[Mdp, np.ndarray, GridSpec | None]:
    _check_keys("env", env, {"kind", "params", "grid", "mdp", "initial"})
    if "kind" in env:
        kind = env["kind"]
        if kind not in GENERATORS:
            raise InputError(f"unknown environment kind {kind!r}; choose from {sorted(GENERATORS)}")
        params = dict(env.get("params", {}))
        try:
            spec = GENERATORS[kind](**params)
        except TypeError as exc:
            raise InputError(f"bad {kind} parameters: {exc}") from exc
    elif "grid" in env:
        spec = GridSpec.from_json(env["grid"])
    elif "mdp" in env:
        path = base / env["mdp"]
        if not path.exists():
            raise InputError(f"MDP file not found: {path}")
        mdp = Mdp.load(path)
        initial = resolve_distribution(env.get("initial", "uniform"), mdp.n_states)
        return mdp, initial, None
    else:
        raise InputError("env needs one of 'kind', 'grid' or 'mdp'")
    world = build_world(spec)
    return world.mdp, world.initial, spec


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data, path.parent)


def config_from_dict(data: dict, base: Path = Path(".")) -> RunConfig:
    _check_keys("config", data, _TOP_KEYS)
    if "env" not in data:
        raise InputError("config needs an 'env' section")
    mdp, initial, grid = _load_env(data["env"], base)
    search = data.get("search", {})
    _check_keys("search", search, _SEARCH_KEYS)
    flt = search.get("filter", {})
    _check_keys("search.filter", flt, _FILTER_KEYS)
    sweep = data.get("sweep")
    if sweep is not None:
        _check_keys("sweep", sweep, _SWEEP_KEYS)
    rollout = data.get("rollout", {})
    _check_keys("rollout", rollout, _ROLLOUT_KEYS)
    try:
        cfg = RunConfig(
            mdp=mdp,
            initial=initial,
            grid=grid,
            strides=tuple(int(k) for k in search.get("strides", [1, 2, 3, 4])),
            length=int(search.get("length", 4)),
            alphas=tuple(float(a) for a in search.get("alphas", [])),
            eps=None if search.get("eps") is None else float(search["eps"]),
            filter_enabled=bool(flt.get("enabled", True)),
            margin=float(flt.get("margin", 0.0)),
            distributions=tuple(flt.get("distributions", ["initial"])),
            outputs=base / data.get("outputs", "psmdp-out"),
            plot=bool(data.get("plot", True)),
            sweep=sweep,
            rollout=rollout,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed config value: {exc}") from exc
    # validate eagerly so configuration errors surface before any solving
    cfg.named_distributions()
    cfg.search_config()
    return cfg
