"""Explicit conservative time stepping for the regularised system

    u^l_t = div((|grad u|^(p-2) + eps) grad u^l),   l = 1..k,

with zero-flux outer faces and an adaptive parabolic CFL step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import barenblatt
from .core import (
    Grid,
    MassVector,
    SupportOverflowError,
    SystemParams,
    VectorField,
    flux_divergence,
    l1_mass,
    support_margin_cells,
)

Observer = Callable[[VectorField], None]


class NonFiniteError(FloatingPointError):
    def __init__(self, step: int, cell: tuple[int, ...]):
        super().__init__(f"non-finite value at step {step}, cell {cell}")
        self.step = step
        self.cell = cell


class MaxStepsExceeded(RuntimeError):
    """Raised when ``max_steps`` is exhausted before ``t_end``; carries the partial result."""

    def __init__(self, message: str, trajectories: list["Trajectory"]):
        super().__init__(message)
        self.trajectories = trajectories


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    cfl_safety: float = 0.4
    epsilon: float | None = None  # None: take it from SystemParams
    max_steps: int = 10_000_000
    snapshot_times: tuple[float, ...] = ()
    boundary: str = "zero-flux"
    support_threshold: float = 1e-14
    margin_cells: int = 2

    def __post_init__(self):
        object.__setattr__(self, "snapshot_times", tuple(float(s) for s in self.snapshot_times))
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.boundary != "zero-flux":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        snaps = self.snapshot_times
        if any(b < a for a, b in zip(snaps, snaps[1:])):
            raise ValueError("snapshot_times must be sorted")
        if snaps and (snaps[0] <= 0 or snaps[-1] > self.t_end * (1 + 1e-12)):
            raise ValueError("snapshot_times must lie in (0, t_end]")

    def eps(self, params: SystemParams) -> float:
        return params.epsilon if self.epsilon is None else self.epsilon


@dataclass(frozen=True)
class SimulationState:
    field: VectorField
    t: float = 0.0
    step: int = 0
    dt_last: float = 0.0
    clipped_mass: float = 0.0

    @classmethod
    def initial(cls, field: VectorField) -> "SimulationState":
        return cls(field=field, t=field.time)


@dataclass
class RunLog:
    k: int
    steps: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    masses: list[tuple[float, ...]] = field(default_factory=list)
    sup_grad: list[float] = field(default_factory=list)
    clipped: list[float] = field(default_factory=list)

    def append(self, step, t, dt, masses, sup_grad, clipped):
        self.steps.append(step)
        self.times.append(t)
        self.dts.append(dt)
        self.masses.append(tuple(masses))
        self.sup_grad.append(sup_grad)
        self.clipped.append(clipped)

    def __len__(self):
        return len(self.steps)

    def mass_array(self) -> np.ndarray:
        return np.array(self.masses, dtype=float).reshape(len(self), self.k)

    def to_csv(self) -> str:
        head = ["step", "t", "dt"] + [f"M_{l + 1}" for l in range(self.k)] + ["sup_grad", "clipped_mass"]
        rows = [",".join(head)]
        for i in range(len(self)):
            vals = [str(self.steps[i]), repr(self.times[i]), repr(self.dts[i])]
            vals += [repr(m) for m in self.masses[i]]
            vals += [repr(self.sup_grad[i]), repr(self.clipped[i])]
            rows.append(",".join(vals))
        return "\n".join(rows) + "\n"


@dataclass
class Trajectory:
    initial: VectorField
    snapshots: list[VectorField]
    log: RunLog
    final: VectorField | None = None

    @property
    def times(self) -> list[float]:
        return [s.time for s in self.snapshots]

    @property
    def grid(self) -> Grid:
        return self.initial.grid

    def with_initial(self) -> list[VectorField]:
        return [self.initial] + list(self.snapshots)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def _timestep_from_theta(theta: Sequence[np.ndarray], grid: Grid, p: float, eps: float, cfl: float) -> float:
    tmax = max(float(np.max(t)) for t in theta)
    coef = tmax ** (p - 2.0) + eps
    h2 = grid.h_min**2
    if coef == 0.0:
        return cfl * h2
    return cfl * h2 / (2.0 * grid.n * coef)


def stable_timestep(state: SimulationState, params: SystemParams, config: SolverConfig) -> float:
    _, theta = flux_divergence(state.field.data, state.field.grid.h, params.p)
    return _timestep_from_theta(theta, state.field.grid, params.p, config.eps(params), config.cfl_safety)


def _check_margin(data: np.ndarray, grid: Grid, config: SolverConfig, step: int) -> None:
    n = grid.n
    m = config.margin_cells
    thr = config.support_threshold
    for d in range(n):
        ax = data.ndim - n + d
        edge = np.concatenate(
            [np.take(data, range(m), axis=ax), np.take(data, range(data.shape[ax] - m, data.shape[ax]), axis=ax)],
            axis=ax,
        )
        if np.any(edge > thr):
            raise SupportOverflowError(
                f"support within {m} cells of the boundary at step {step} "
                f"(L={grid.half_extent}, threshold={thr})"
            )


def _check_finite(data: np.ndarray, step: int, n: int) -> None:
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise NonFiniteError(step, tuple(int(i) for i in bad[-n:]))


def _advance(data, grid, dt, div):
    new = data + dt * div
    neg = new < 0
    clipped = 0.0
    if neg.any():
        clipped = float(-grid.cell_volume * new[neg].sum())
        new[neg] = 0.0
    return new, clipped


def step(
    state: SimulationState, params: SystemParams, config: SolverConfig, dt: float | None = None
) -> SimulationState:
    """One forward-Euler step; ``dt`` defaults to the stable step."""
    grid = state.field.grid
    data = np.array(state.field.data)
    _check_margin(data, grid, config, state.step)
    eps = config.eps(params)
    div, theta = flux_divergence(data, grid.h, params.p, eps)
    if dt is None:
        dt = _timestep_from_theta(theta, grid, params.p, eps, config.cfl_safety)
    new, clipped = _advance(data, grid, dt, div)
    _check_finite(new, state.step + 1, grid.n)
    t = state.t + dt
    return SimulationState(
        field=VectorField(grid, new, t),
        t=t,
        step=state.step + 1,
        dt_last=dt,
        clipped_mass=state.clipped_mass + clipped,
    )


def run_lockstep(
    initials: Sequence[VectorField],
    params: SystemParams,
    config: SolverConfig,
    observers: Iterable[Observer] = (),
) -> list[Trajectory]:
    """Evolve several independent initial data with a shared time step.

    Every member sees the same step sequence (the minimum of the members'
    stable steps), so their snapshots are directly comparable.
    """
    if not initials:
        raise ValueError("no initial data")
    grid = initials[0].grid
    for f in initials:
        if f.grid != grid or f.k != initials[0].k:
            raise ValueError("lockstep members must share grid and component count")
        if not f.is_nonnegative():
            raise ValueError("initial data must be nonnegative")
    if config.cfl_safety > 1.0 / (params.p - 1.0):
        warnings.warn(
            f"cfl_safety={config.cfl_safety} exceeds 1/(p-1)={1.0 / (params.p - 1.0):.4g}; "
            "the linearised scheme may oscillate",
            RuntimeWarning,
            stacklevel=2,
        )
    observers = list(observers)
    B = len(initials)
    k = initials[0].k
    n = grid.n
    vol = grid.cell_volume
    eps = config.eps(params)
    p = params.p
    t0 = initials[0].time
    data = np.stack([np.array(f.data) for f in initials])
    logs = [RunLog(k) for _ in range(B)]
    snaps: list[list[VectorField]] = [[] for _ in range(B)]
    pending = [s for s in config.snapshot_times if s > t0]
    clipped = np.zeros(B)
    t = t0
    dt_last = 0.0
    steps = 0
    _check_margin(data, grid, config, 0)

    def emit(member_data, s):
        for b in range(B):
            snap = VectorField(grid, member_data[b], s)
            snaps[b].append(snap)
            for obs in observers:
                obs(snap)

    while True:
        div, theta = flux_divergence(data, grid.h, p, eps)
        masses = vol * data.reshape(B, k, -1).sum(axis=2)
        sup = [max(float(np.max(th[b])) for th in theta) for b in range(B)]
        for b in range(B):
            logs[b].append(steps, t, dt_last, masses[b], sup[b], float(clipped[b]))
        if t >= config.t_end:
            break
        if steps >= config.max_steps:
            partial = [
                Trajectory(initials[b], snaps[b], logs[b], VectorField(grid, data[b], t)) for b in range(B)
            ]
            raise MaxStepsExceeded(
                f"max_steps={config.max_steps} exhausted at t={t} before t_end={config.t_end}", partial
            )
        _check_margin(data, grid, config, steps)
        dt = min(
            _timestep_from_theta([th[b] for th in theta], grid, p, eps, config.cfl_safety) for b in range(B)
        )
        dt = min(dt, config.t_end - t)
        new = data + dt * div
        neg = new < 0
        if neg.any():
            for b in range(B):
                nb = neg[b]
                if nb.any():
                    clipped[b] += float(-vol * new[b][nb].sum())
            new[neg] = 0.0
        steps += 1
        _check_finite(new, steps, n)
        t_new = t + dt if config.t_end - t > dt else config.t_end
        while pending and pending[0] <= t_new:
            s = pending.pop(0)
            w = (s - t) / (t_new - t)
            emit(data + w * (new - data), s)
        data = new
        t = t_new
        dt_last = dt

    return [Trajectory(initials[b], snaps[b], logs[b], VectorField(grid, data[b], t)) for b in range(B)]


def run(
    initial: VectorField,
    params: SystemParams,
    config: SolverConfig,
    observers: Iterable[Observer] = (),
) -> Trajectory:
    return run_lockstep([initial], params, config, observers)[0]


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

PRESET_KINDS = ("bump", "barenblatt-weighted", "random-compact")


@dataclass(frozen=True)
class InitialPreset:
    kind: str
    weights: tuple[float, ...]
    center: tuple[float, ...] = ()
    width: tuple[float, ...] = (1.0,)
    offsets: tuple[float, ...] = ()
    masses: tuple[float, ...] | None = None
    t0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        width = self.width if isinstance(self.width, (tuple, list)) else (self.width,)
        object.__setattr__(self, "width", tuple(float(w) for w in width))
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        if self.masses is not None:
            object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if self.kind not in PRESET_KINDS:
            raise ValueError(f"unknown preset kind {self.kind!r}; expected one of {PRESET_KINDS}")
        if not self.weights or any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if all(w == 0 for w in self.weights):
            raise ValueError("weights must not all be zero")
        if any(w <= 0 for w in self.width):
            raise ValueError("width must be positive")
        if self.kind == "barenblatt-weighted" and not self.t0 > 0:
            raise ValueError("t0 must be positive for barenblatt-weighted data")
        if self.masses is not None:
            if len(self.masses) != len(self.weights):
                raise ValueError("masses and weights must have the same length")
            if any(m < 0 for m in self.masses):
                raise ValueError("masses must be nonnegative")
            if any((m > 0) != (w > 0) for m, w in zip(self.masses, self.weights)):
                raise ValueError("a positive mass needs a positive weight")

    @property
    def k(self) -> int:
        return len(self.weights)

    def _per_component(self, values: tuple[float, ...], default: float) -> tuple[float, ...]:
        if not values:
            return (default,) * self.k
        if len(values) == 1:
            return values * self.k
        if len(values) != self.k:
            raise ValueError(f"expected 1 or {self.k} values, got {len(values)}")
        return values


def _shifted_mesh(grid: Grid, center: tuple[float, ...], offset: float) -> tuple[np.ndarray, ...]:
    c = list(center) if center else [0.0] * grid.n
    if len(c) != grid.n:
        raise ValueError(f"center needs {grid.n} coordinates, got {len(c)}")
    c[0] += offset
    return tuple(x - ci for x, ci in zip(grid.mesh(), c))


def _smooth(a: np.ndarray) -> np.ndarray:
    for ax in range(a.ndim):
        pad = [(0, 0)] * a.ndim
        pad[ax] = (1, 1)
        b = np.pad(a, pad)
        n = a.shape[ax]
        a = (np.take(b, range(0, n), axis=ax) + np.take(b, range(1, n + 1), axis=ax) + np.take(b, range(2, n + 2), axis=ax)) / 3.0
    return a


def make_initial(preset: InitialPreset, grid: Grid, params: SystemParams, margin_cells: int = 2) -> VectorField:
    if preset.k != params.k:
        raise ValueError(f"preset has {preset.k} weights but k={params.k}")
    widths = preset._per_component(preset.width, 1.0)
    offsets = preset._per_component(preset.offsets, 0.0)
    w = np.array(preset.weights)
    data = np.zeros((preset.k,) + grid.cells)

    if preset.kind == "bump":
        for l in range(preset.k):
            xs = _shifted_mesh(grid, preset.center, offsets[l])
            r2 = sum(x * x for x in xs) / widths[l] ** 2
            data[l] = w[l] * np.maximum(1.0 - r2, 0.0) ** 2
    elif preset.kind == "barenblatt-weighted":
        norm = float(np.linalg.norm(w))
        profile = barenblatt.BarenblattProfile.from_mass(norm, params.p, grid.n)
        xs = _shifted_mesh(grid, preset.center, 0.0)
        base = barenblatt.evaluate(xs, preset.t0, profile)
        base = base / (grid.cell_volume * base.sum())
        for l in range(preset.k):
            data[l] = w[l] * base
    else:
        rng = np.random.default_rng(preset.seed)
        for l in range(preset.k):
            xs = _shifted_mesh(grid, preset.center, offsets[l])
            mask = sum(x * x for x in xs) < widths[l] ** 2
            vals = rng.random(grid.cells) * mask
            data[l] = w[l] * _smooth(vals)

    if preset.masses is not None:
        for l, m in enumerate(preset.masses):
            total = grid.cell_volume * data[l].sum()
            if m > 0:
                if total <= 0:
                    raise ValueError(f"component {l} is empty on this grid; cannot assign mass {m}")
                data[l] *= m / total
            else:
                data[l] = 0.0
    if support_margin_cells(data, grid.n) < margin_cells:
        raise SupportOverflowError(f"initial support exceeds the {margin_cells}-cell margin")
    return VectorField(grid, data, 0.0)


def barenblatt_field(profile: barenblatt.BarenblattProfile, grid: Grid, t: float, weights: Sequence[float] | None = None) -> VectorField:
    """Exact Barenblatt snapshot(s), optionally split into weighted components."""
    base = barenblatt.sample(profile, grid, t)
    if weights is None:
        return VectorField(grid, base[np.newaxis], t)
    w = np.asarray(weights, float)
    w = w / np.linalg.norm(w)
    return VectorField(grid, w.reshape((-1,) + (1,) * grid.n) * base, t)


def masses_of(field: VectorField) -> MassVector:
    return l1_mass(field)
