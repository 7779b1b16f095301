"""Runs and studies shared by the command line and the acceptance suite.

Each study returns a :class:`StudyResult` holding CSV texts keyed by file
name and the verdict reports; nothing here touches the filesystem.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, TypeVar

import numpy as np

from . import barenblatt, diagnostics, selfsim
from .config import RunConfig
from .core import Grid, SystemParams, VectorField, format_snapshot, l1_mass
from .diagnostics import DiagnosticsReport, verdicts_csv
from .solver import Trajectory, make_initial, run

T = TypeVar("T")
R = TypeVar("R")

LADDER = (1e-2, 1e-3, 1e-4, 0.0)
THREADS_ENV = "PLAPSYS_THREADS"


def worker_count() -> int:
    """Width of the pool for independent runs; ``PLAPSYS_THREADS=0`` or unset means auto."""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Order-preserving map over independent jobs."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class StudyResult:
    name: str
    files: dict[str, str] = field(default_factory=dict)
    reports: list[DiagnosticsReport] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def verdicts(self) -> str:
        return verdicts_csv(self.reports)


def simulate_config(cfg: RunConfig, t_end: float | None = None, epsilon: float | None = None) -> Trajectory:
    params = cfg.params()
    grid = cfg.grid()
    initial = make_initial(cfg.initial_preset(), grid, params)
    return run(initial, params, cfg.solver(t_end, epsilon))


def _snapshot_files(traj: Trajectory) -> dict[str, str]:
    return {f"snapshots/snap_{i:04d}.txt": format_snapshot(s) for i, s in enumerate(traj.snapshots)}


def simulate(cfg: RunConfig) -> StudyResult:
    params = cfg.params()
    traj = simulate_config(cfg)
    res = StudyResult("simulate", extra={"trajectory": traj})
    res.files["run_log.csv"] = traj.log.to_csv()
    res.files.update(_snapshot_files(traj))
    res.reports.append(diagnostics.mass_conservation_report(traj.log))
    if traj.snapshots:
        res.reports.append(diagnostics.gradient_bound_report(traj.snapshots, traj.snapshots[0].time, params))
    return res


def entropy_study(cfg: RunConfig) -> StudyResult:
    """Run, then the entropy, proportionality, L1 convergence and gradient
    envelope diagnostics over the snapshot schedule."""
    params = cfg.params()
    traj = simulate_config(cfg)
    snaps = traj.snapshots
    if len(snaps) < 2:
        raise ValueError("the entropy study needs at least two snapshots")
    decay = selfsim.entropy_decay_report(snaps, params)
    masses = l1_mass(traj.initial)
    rows = []
    taus, worst = [], []
    for s in snaps:
        rs = selfsim.to_self_similar(s, params)
        devs = selfsim.component_deviations(rs, masses)
        rows.extend((rs.tau, l + 1, d) for l, d in enumerate(devs))
        taus.append(rs.tau)
        worst.append(max(devs))
    conv, series = diagnostics.l1_convergence_report(snaps, masses, params)
    res = StudyResult("entropy", extra={"trajectory": traj, "decay": decay, "series": series})
    res.files["run_log.csv"] = traj.log.to_csv()
    res.files["entropy.csv"] = decay.to_csv()
    res.files["proportionality.csv"] = selfsim.proportionality_csv(rows)
    res.files["l1_distance.csv"] = _series_csv(series)
    res.reports += [
        diagnostics.mass_conservation_report(traj.log),
        diagnostics.entropy_report(decay),
        diagnostics.entropy_ordering_report(decay.records),
        conv,
        diagnostics.proportionality_report(taus, worst),
        diagnostics.gradient_bound_report(snaps, snaps[0].time, params),
    ]
    return res


def _series_csv(series: diagnostics.ConvergenceSeries) -> str:
    k = len(series.components[0]) if series.components else 0
    rows = ["t,d" + "".join(f",d_{l + 1}" for l in range(k))]
    for t, d, dl in zip(series.times, series.total, series.components):
        rows.append(f"{t!r},{d!r}" + "".join(f",{v!r}" for v in dl))
    return "\n".join(rows) + "\n"


def default_radii(T: float, p: float, L: float, count: int = 9) -> tuple[float, ...]:
    return tuple(float(r) for r in np.linspace(2.0 * T ** (1.0 / p), L / 2.0, count))


def harnack_study(cfg: RunConfig, T: float = 1.0, radii: Sequence[float] | None = None) -> StudyResult:
    params = cfg.params()
    if radii is None:
        radii = default_radii(T, params.p, cfg.L)
    traj = simulate_config(replace(cfg, snapshots=replace(cfg.snapshots, kind="list", values=())), t_end=T)
    rep = diagnostics.harnack_report(traj.initial, traj.final, radii, params)
    res = StudyResult("harnack", extra={"harnack": rep, "trajectory": traj})
    res.files["harnack.csv"] = rep.to_csv()
    res.files["run_log.csv"] = traj.log.to_csv()
    res.reports += [diagnostics.mass_conservation_report(traj.log), rep.as_report()]
    return res


def _restrict(data: np.ndarray, factor: int, n: int) -> np.ndarray:
    """Average blocks of ``factor`` cells per axis onto the coarse grid."""
    out = data
    for d in range(n):
        ax = out.ndim - n + d
        shape = list(out.shape)
        shape[ax : ax + 1] = [shape[ax] // factor, factor]
        out = out.reshape(shape).mean(axis=ax + 1)
    return out


def _exact_reference(cfg: RunConfig, grid: Grid, t: float) -> np.ndarray | None:
    """Closed-form solution for barenblatt-weighted data, else None."""
    preset = cfg.initial_preset()
    if preset.kind != "barenblatt-weighted" or preset.center and any(preset.center):
        return None
    w = np.array(preset.weights)
    norm = float(np.linalg.norm(w))
    profile = barenblatt.BarenblattProfile.from_mass(norm, cfg.p, cfg.n)
    base = barenblatt.sample(profile, grid, preset.t0 + t)
    return (w / norm).reshape((-1,) + (1,) * grid.n) * base


def convergence_study(cfg: RunConfig, levels: int = 3, min_ratio: float = 1.7) -> StudyResult:
    """Repeat the run at h, h/2, h/4, ... and report observed orders.

    With barenblatt-weighted data the error is measured against the closed
    form at ``t0 + t_end``; otherwise successive levels are compared after
    restricting the finer field onto the coarser grid.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    base_cells = cfg.grid().cells
    cfgs = [replace(cfg, cells=tuple(c * 2**i for c in base_cells)) for i in range(levels)]
    trajs = parallel_map(lambda c: simulate_config(replace(c, snapshots=replace(c.snapshots, kind="list", values=()))), cfgs)
    res = StudyResult("convergence")
    exact = [_exact_reference(c, t.grid, cfg.t_end) for c, t in zip(cfgs, trajs)]
    if all(e is not None for e in exact):
        errors = [float(t.grid.cell_volume * np.abs(t.final.data - e).sum()) for t, e in zip(trajs, exact)]
        label = "error_vs_exact"
    else:
        if levels < 3:
            raise ValueError("self-convergence needs at least three levels")
        errors = []
        for coarse, fine in zip(trajs, trajs[1:]):
            diff = coarse.final.data - _restrict(fine.final.data, 2, cfg.n)
            errors.append(float(coarse.grid.cell_volume * np.abs(diff).sum()))
        label = "successive_difference"
    ratios = [a / b if b > 0 else math.inf for a, b in zip(errors, errors[1:])]
    rows = ["level,cells,h,error,ratio,order"]
    for i, e in enumerate(errors):
        g = trajs[i].grid
        ratio = ratios[i - 1] if i > 0 else float("nan")
        order = math.log2(ratio) if i > 0 and ratio > 0 and math.isfinite(ratio) else float("nan")
        rows.append(f"{i},{'x'.join(map(str, g.cells))},{g.h_min!r},{e!r},{ratio!r},{order!r}")
    res.files["convergence.csv"] = "\n".join(rows) + "\n"
    worst = min(ratios) if ratios else math.nan
    res.reports.append(
        DiagnosticsReport(
            name="convergence_order",
            measured=tuple((f"{label}_{i}", e) for i, e in enumerate(errors)),
            worst_value=worst,
            tolerance=min_ratio,
            passed=bool(ratios) and worst >= min_ratio,
            inputs={"levels": levels, "measure": label},
        )
    )
    for i, t in enumerate(trajs):
        rep = diagnostics.mass_conservation_report(t.log)
        res.reports.append(replace(rep, name=f"mass_conservation_level{i}"))
    res.extra["errors"] = errors
    res.extra["ratios"] = ratios
    return res


def epsilon_ladder(cfg: RunConfig, epsilons: Sequence[float] = LADDER, relative_cap: float = 0.01) -> StudyResult:
    plain = replace(cfg, snapshots=replace(cfg.snapshots, kind="list", values=()))
    trajs = parallel_map(lambda e: simulate_config(plain, epsilon=e), list(epsilons))
    finals = [t.final for t in trajs]
    rep = diagnostics.epsilon_ladder_report(epsilons, finals, relative_cap)
    res = StudyResult("epsilon-ladder", extra={"finals": finals})
    rows = ["eps_a,eps_b,l1_distance"]
    vol = finals[0].grid.cell_volume
    for (ea, a), (eb, b) in zip(zip(epsilons, finals), zip(epsilons[1:], finals[1:])):
        rows.append(f"{ea!r},{eb!r},{float(vol * np.abs(a.data - b.data).sum())!r}")
    res.files["epsilon_ladder.csv"] = "\n".join(rows) + "\n"
    res.reports.append(rep)
    for e, t in zip(epsilons, trajs):
        res.reports.append(replace(diagnostics.mass_conservation_report(t.log), name=f"mass_conservation_eps={e!r}"))
    return res


@dataclass(frozen=True)
class BarenblattCheck:
    p: float
    n: int
    M: float
    C_M: float
    mass_error: float
    residual_h: float
    residual_h2: float

    @property
    def ratio(self) -> float:
        return self.residual_h / self.residual_h2 if self.residual_h2 > 0 else math.inf

    def row(self) -> str:
        vals = (self.p, self.n, self.M, self.C_M, self.mass_error, self.residual_h, self.residual_h2, self.ratio)
        return ",".join(repr(v) for v in vals)


def check_barenblatt(p: float, n: int, M: float, grid: Grid, t: float = 1.0) -> BarenblattCheck:
    profile = barenblatt.BarenblattProfile.from_mass(M, p, n)
    mass_error = abs(barenblatt.profile_mass(profile.C_M, p, n) - M) / M
    return BarenblattCheck(
        p=p,
        n=n,
        M=M,
        C_M=profile.C_M,
        mass_error=mass_error,
        residual_h=barenblatt.pde_residual(profile, grid, t),
        residual_h2=barenblatt.pde_residual(profile, grid.refined(2), t),
    )


def verify_barenblatt(
    p: float,
    n: int,
    masses: Sequence[float],
    grid: Grid,
    t: float = 1.0,
    mass_tol: float = 1e-8,
    min_ratio: float = 1.5,
) -> StudyResult:
    checks = parallel_map(lambda M: check_barenblatt(p, n, M, grid, t), list(masses))
    res = StudyResult("verify-barenblatt", extra={"checks": checks})
    rows = ["p,n,M,C_M,mass_error,residual_h,residual_h2,ratio"] + [c.row() for c in checks]
    res.files["barenblatt.csv"] = "\n".join(rows) + "\n"
    worst_mass = max(c.mass_error for c in checks)
    worst_ratio = min(c.ratio for c in checks)
    res.reports.append(
        DiagnosticsReport(
            "barenblatt_mass", tuple((f"M={c.M!r}", c.mass_error) for c in checks), worst_mass, mass_tol, worst_mass <= mass_tol
        )
    )
    res.reports.append(
        DiagnosticsReport(
            "barenblatt_residual", tuple((f"M={c.M!r}", c.ratio) for c in checks), worst_ratio, min_ratio, worst_ratio >= min_ratio
        )
    )
    return res


def scaling_law_exponent(p: float, n: int) -> float:
    """M grows like C^s with s = (p-1)/(p-2) + n(p-1)/p."""
    return (p - 1.0) / (p - 2.0) + n * (p - 1.0) / p


def rescaled_entropy_records(snapshots: Sequence[VectorField], params: SystemParams) -> list[selfsim.EntropyRecord]:
    total = l1_mass(snapshots[0]).total_norm
    profile = barenblatt.BarenblattProfile.from_mass(total, params.p, snapshots[0].grid.n)
    return [selfsim.entropy_record(s, params, profile) for s in snapshots]
