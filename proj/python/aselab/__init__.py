"""Python front end for the assistive state estimation core.

Config and result documents are plain dicts with the same layout as the
JSON files the command-line tool reads and writes.
"""

from __future__ import annotations

import json
import os
from typing import Any, Iterable, Sequence

from . import _core
from ._core import AseError, ConfigError, logistic_invert, percept

__all__ = [
    "AseError",
    "Bridge",
    "ConfigError",
    "bayes_filter",
    "delay_sweep",
    "fit",
    "load_config",
    "logistic_invert",
    "percept",
    "run_experiment",
    "soft_q",
]

PathLike = str | os.PathLike


def _config_text(config: dict | PathLike) -> tuple[str, str]:
    if isinstance(config, dict):
        return json.dumps(config), ""
    path = os.fspath(config)
    return json.dumps(load_config(path)), os.path.dirname(os.path.abspath(path))


def load_config(path: PathLike) -> dict:
    """Validated config with every default filled in."""
    return json.loads(_core.load_config(os.fspath(path)))


def run_experiment(config: dict | PathLike, base_dir: PathLike = "") -> dict:
    """Runs every condition of ``config`` over paired seeds.

    Returns ``metrics`` (one dict per episode), ``demonstrations``,
    ``assistant_theta``, ``training`` (None without a learner), ``summary``
    and ``checks``.
    """
    text, cfg_dir = _config_text(config)
    return json.loads(_core.run_experiment(text, os.fspath(base_dir) or cfg_dir))


def delay_sweep(config: dict | PathLike, d_values: Sequence[int], base_dir: PathLike = "") -> list[dict]:
    text, cfg_dir = _config_text(config)
    return json.loads(_core.delay_sweep(text, list(d_values), os.fspath(base_dir) or cfg_dir))


def fit(
    config: dict | PathLike,
    demonstrations: Iterable[dict],
    init: Sequence[float] = (),
    base_dir: PathLike = "",
) -> dict:
    """Maximum-likelihood user model for the family implied by ``config``."""
    text, cfg_dir = _config_text(config)
    demos = json.dumps(list(demonstrations))
    return json.loads(_core.fit(text, demos, list(init), os.fspath(base_dir) or cfg_dir))


def bayes_filter(
    init: Sequence[float],
    dynamics: Sequence[Sequence[Sequence[float]]],
    observation_model: Sequence[Sequence[float]],
    actions: Sequence[int],
    observations: Sequence[int],
) -> list[float]:
    """Posterior over states after ``observations`` (one more than ``actions``).

    ``dynamics[s][a][s2]`` and ``observation_model[s][o]`` are probabilities.
    """
    return _core.bayes_filter(list(init), [list(map(list, d)) for d in dynamics],
                              [list(o) for o in observation_model], list(actions), list(observations))


def soft_q(map_path: PathLike, goal: int) -> dict:
    """Solves the soft Q table for ``goal`` and reports residual, BFS and greedy path lengths."""
    return _core.soft_q(os.fspath(map_path), goal)


class Bridge:
    """In-process bridge session manager; ``now`` is a monotonic time in seconds."""

    def __init__(self, config: dict | PathLike, base_dir: PathLike = ""):
        if isinstance(config, dict):
            text, cfg_dir = json.dumps(config), ""
        else:
            path = os.fspath(config)
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            cfg_dir = os.path.dirname(os.path.abspath(path))
        self._service = _core.BridgeService(text, os.fspath(base_dir) or cfg_dir)

    def handle(self, message: dict | str, now: float) -> list[dict[str, Any]]:
        text = message if isinstance(message, str) else json.dumps(message)
        return json.loads(self._service.handle(text, now))

    def tick(self, now: float) -> list[dict[str, Any]]:
        return json.loads(self._service.tick(now))

    def health(self) -> dict:
        return json.loads(self._service.health())

    def sessions(self) -> dict | list:
        return json.loads(self._service.sessions())

    def __len__(self) -> int:
        return self._service.session_count()

    def flush_log(self) -> None:
        self._service.flush_log()
