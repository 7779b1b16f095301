"""Flat ``key = value`` run configuration.

One assignment per line, ``#`` starts a comment, lists are comma separated.
Snapshot schedules are either an explicit list of times or
``log:<t_first>:<t_last>:<count>`` for log-spaced times.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any, Callable

import numpy as np

from .core import Grid, SystemParams
from .solver import PRESET_KINDS, InitialPreset, SolverConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SnapshotSchedule:
    kind: str  # "list" or "log"
    values: tuple[float, ...] = ()
    first: float = 0.0
    last: float = 0.0
    count: int = 0

    def times(self) -> tuple[float, ...]:
        if self.kind == "list":
            return self.values
        return tuple(float(t) for t in np.geomspace(self.first, self.last, self.count))

    def validate(self) -> None:
        if self.kind == "log":
            if not 0 < self.first < self.last:
                raise ValueError("log schedule needs 0 < t_first < t_last")
            if self.count < 2:
                raise ValueError("log schedule needs count >= 2")
        elif self.kind == "list":
            if any(t <= 0 for t in self.values):
                raise ValueError("snapshot times must be positive")
            if any(b <= a for a, b in zip(self.values, self.values[1:])):
                raise ValueError("snapshot times must be strictly increasing")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def serialize(self) -> str:
        if self.kind == "log":
            return f"log:{self.first!r}:{self.last!r}:{self.count}"
        return ", ".join(repr(v) for v in self.values)

    @classmethod
    def parse(cls, text: str) -> "SnapshotSchedule":
        text = text.strip()
        if text.startswith("log:"):
            parts = text.split(":")
            if len(parts) != 4:
                raise ValueError("expected log:<t_first>:<t_last>:<count>")
            return cls("log", (), float(parts[1]), float(parts[2]), int(parts[3]))
        if not text:
            return cls("list", ())
        return cls("list", tuple(float(v) for v in text.split(",")))


@dataclass(frozen=True)
class RunConfig:
    p: float
    n: int
    k: int
    cells: tuple[int, ...]
    L: float
    t_end: float
    epsilon: float = 0.0
    cfl_safety: float = 0.4
    max_steps: int = 10_000_000
    snapshots: SnapshotSchedule = SnapshotSchedule("list")
    preset: str = "bump"
    weights: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    width: tuple[float, ...] = (1.0,)
    offsets: tuple[float, ...] = ()
    t0: float = 1.0
    seed: int = 0
    out: str = "out"
    support_threshold: float = 1e-14

    def params(self) -> SystemParams:
        return SystemParams(self.p, self.n, self.k, self.epsilon)

    def grid(self) -> Grid:
        cells = self.cells * self.n if len(self.cells) == 1 else self.cells
        return Grid(cells, self.L)

    def solver(self, t_end: float | None = None, epsilon: float | None = None) -> SolverConfig:
        t_end = self.t_end if t_end is None else t_end
        return SolverConfig(
            t_end=t_end,
            cfl_safety=self.cfl_safety,
            epsilon=self.epsilon if epsilon is None else epsilon,
            max_steps=self.max_steps,
            snapshot_times=tuple(t for t in self.snapshots.times() if t <= t_end),
            support_threshold=self.support_threshold,
        )

    def initial_preset(self) -> InitialPreset:
        weights = self.weights or (1.0,) * self.k
        return InitialPreset(
            kind=self.preset,
            weights=weights,
            center=self.center,
            width=self.width,
            offsets=self.offsets,
            masses=self.masses or None,
            t0=self.t0,
            seed=self.seed,
        )

    def validate(self) -> None:
        """Raise ConfigError naming the offending key."""
        checks: list[tuple[str, Callable[[], Any]]] = [
            ("p", lambda: SystemParams(self.p, 1)),
            ("n", lambda: SystemParams(3.0, self.n)),
            ("k", lambda: SystemParams(3.0, 1, self.k)),
            ("epsilon", lambda: SystemParams(3.0, 1, 1, self.epsilon)),
            ("cells", self._check_cells),
            ("L", lambda: Grid((1,), self.L)),
            ("t_end", lambda: SolverConfig(t_end=self.t_end)),
            ("cfl_safety", lambda: SolverConfig(t_end=1.0, cfl_safety=self.cfl_safety)),
            ("max_steps", lambda: SolverConfig(t_end=1.0, max_steps=self.max_steps)),
            ("support_threshold", self._check_threshold),
            ("snapshots", self._check_snapshots),
            ("preset", self._check_preset_kind),
            ("weights", self._check_lengths("weights", self.weights)),
            ("masses", self._check_lengths("masses", self.masses)),
            ("width", self._check_per_component("width", self.width)),
            ("offsets", self._check_per_component("offsets", self.offsets)),
            ("center", self._check_center),
            ("weights", self.initial_preset),
        ]
        for key, check in checks:
            try:
                check()
            except ValueError as exc:
                raise ConfigError(str(exc), key=key) from None

    def _check_cells(self):
        if len(self.cells) not in (1, self.n):
            raise ValueError(f"cells needs 1 or {self.n} entries, got {len(self.cells)}")
        if any(c < 3 for c in self.cells):
            raise ValueError("cells must be at least 3 per axis")

    def _check_threshold(self):
        if not self.support_threshold >= 0:
            raise ValueError("support_threshold must be >= 0")

    def _check_snapshots(self):
        self.snapshots.validate()
        times = self.snapshots.times()
        if times and times[-1] > self.t_end * (1 + 1e-12):
            raise ValueError(f"snapshot times must not exceed t_end={self.t_end!r}")

    def _check_preset_kind(self):
        if self.preset not in PRESET_KINDS:
            raise ValueError(f"unknown preset {self.preset!r}; expected one of {', '.join(PRESET_KINDS)}")

    def _check_lengths(self, name, values):
        def check():
            if values and len(values) != self.k:
                raise ValueError(f"{name} needs k={self.k} entries, got {len(values)}")

        return check

    def _check_per_component(self, name, values):
        def check():
            if len(values) not in (0, 1, self.k):
                raise ValueError(f"{name} needs 1 or k={self.k} entries, got {len(values)}")

        return check

    def _check_center(self):
        if self.center and len(self.center) != self.n:
            raise ValueError(f"center needs n={self.n} coordinates, got {len(self.center)}")


REQUIRED = ("p", "n", "k", "cells", "L", "t_end")


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _float(text: str) -> float:
    return float(text)


def _str(text: str) -> str:
    if not text:
        raise ValueError("empty value")
    return text


_PARSERS: dict[str, Callable[[str], Any]] = {
    "p": _float,
    "n": int,
    "k": int,
    "cells": _ints,
    "L": _float,
    "t_end": _float,
    "epsilon": _float,
    "cfl_safety": _float,
    "max_steps": int,
    "snapshots": SnapshotSchedule.parse,
    "preset": _str,
    "weights": _floats,
    "masses": _floats,
    "center": _floats,
    "width": _floats,
    "offsets": _floats,
    "t0": _float,
    "seed": int,
    "out": _str,
    "support_threshold": _float,
}


def parse_config(text: str) -> RunConfig:
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})", lineno, key) from None
        lines[key] = lineno
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    cfg = RunConfig(**values)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(str(exc), lines.get(exc.key), exc.key) from None
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, SnapshotSchedule):
            text = v.serialize()
        elif isinstance(v, tuple):
            text = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        if text == "" and f.name not in REQUIRED:
            continue
        out.append(f"{f.name} = {text}")
    return "\n".join(out) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
