"""Verdicts for the measurable statements about the system: mass conservation,
the gradient envelope, L1 convergence to the Barenblatt profile, L2
contraction, the Harnack bracket and the weak initial trace.

Every report is a pure function of its inputs and carries enough measured
values to re-derive the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .barenblatt import BarenblattProfile, evaluate, similarity_exponents
from .core import Grid, MassVector, SystemParams, VectorField, l1_mass, sup_gradient
from .selfsim import EntropyDecayReport, EntropyRecord
from .solver import RunLog


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsReport:
    name: str
    measured: tuple[tuple[str, float], ...]
    worst_value: float
    tolerance: float
    passed: bool
    inputs: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def verdict_line(self) -> str:
        return f"{self.name},{self.verdict},{self.worst_value!r},{self.tolerance!r}"

    def to_csv(self) -> str:
        rows = ["label,value"]
        rows.extend(f"{label},{value!r}" for label, value in self.measured)
        return "\n".join(rows) + "\n"

    def __str__(self) -> str:
        return f"{self.name}: {self.verdict} (worst={self.worst_value:.6g}, tol={self.tolerance:.6g})"


def verdicts_csv(reports: Sequence[DiagnosticsReport]) -> str:
    rows = ["name,verdict,worst_value,tolerance"]
    rows.extend(r.verdict_line() for r in reports)
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------


def mass_conservation_report(log: RunLog, tolerance: float = 1e-10) -> DiagnosticsReport:
    if len(log) == 0:
        raise InsufficientDataError("empty run log")
    masses = log.mass_array()
    m0 = masses[0]
    notes = []
    drifts = []
    measured = []
    for l in range(log.k):
        if m0[l] == 0:
            notes.append(f"component {l + 1} has zero initial mass; skipped")
            continue
        drift = float(np.max(np.abs(masses[:, l] / m0[l] - 1.0)))
        drifts.append(drift)
        measured.append((f"drift_M{l + 1}", drift))
    total = float(np.sum(m0))
    clipped_rel = float(log.clipped[-1]) / total if total > 0 else 0.0
    measured.append(("clipped_relative", clipped_rel))
    worst = max(drifts + [clipped_rel])
    return DiagnosticsReport(
        name="mass_conservation",
        measured=tuple(measured),
        worst_value=worst,
        tolerance=tolerance,
        passed=worst <= tolerance,
        inputs={"entries": len(log)},
        notes=tuple(notes),
    )


def gradient_envelope_exponent(p: float, n: int) -> float:
    return n / (n * (p - 2.0) + 2.0 * p)


def gradient_bound_report(
    snapshots: Sequence[VectorField], T: float, params: SystemParams, slack: float = 0.2
) -> DiagnosticsReport:
    """E(t) = sup|grad u| t^(n/(n(p-2)+2p)) must not grow past (1+slack) E(first t >= T)."""
    window = [s for s in snapshots if s.time >= T]
    if not window:
        raise InsufficientDataError(f"no snapshots with t >= {T}")
    e = gradient_envelope_exponent(params.p, window[0].grid.n)
    values = [sup_gradient(s) * s.time**e for s in window]
    measured = tuple((f"E(t={s.time!r})", v) for s, v in zip(window, values))
    notes = []
    if len(window) == 1:
        notes.append("single snapshot in window; envelope check is vacuous")
    ref = values[0]
    worst_ratio = max(values) / ref if ref > 0 else (0.0 if max(values) == 0 else math.inf)
    return DiagnosticsReport(
        name="gradient_envelope",
        measured=measured,
        worst_value=worst_ratio,
        tolerance=1.0 + slack,
        passed=worst_ratio <= 1.0 + slack,
        inputs={"T": T, "exponent": e},
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class ConvergenceSeries:
    times: tuple[float, ...]
    total: tuple[float, ...]
    components: tuple[tuple[float, ...], ...]  # per snapshot, per component
    slope: float | None


def l1_distances(snapshot: VectorField, masses: MassVector, profile: BarenblattProfile) -> tuple[float, list[float]]:
    grid = snapshot.grid
    b = evaluate(grid.radius(), snapshot.time, profile)
    vol = grid.cell_volume
    d = float(vol * np.abs(snapshot.norm() - b).sum())
    dl = [
        float(vol * np.abs(snapshot.data[l] - masses[l] / masses.total_norm * b).sum())
        for l in range(snapshot.k)
    ]
    return d, dl


def l1_convergence_report(
    snapshots: Sequence[VectorField],
    masses: MassVector,
    params: SystemParams,
    profile: BarenblattProfile | None = None,
    rate_fraction: float = 0.6,
    quadrature_tol: float = 1e-8,
    component_fraction: float = 0.1,
) -> tuple[DiagnosticsReport, ConvergenceSeries]:
    """Distance of |u| to B_|M| with a log-log slope fit over t >= a2.

    Passes when d decreases strictly, the fitted slope is at most
    ``-rate_fraction * a2 / 2`` and every per-component distance ends below
    ``component_fraction`` of its first value.
    """
    if not snapshots:
        raise InsufficientDataError("no snapshots")
    n = snapshots[0].grid.n
    _, a2 = similarity_exponents(params.p, n)
    window = [s for s in snapshots if s.time >= a2 * (1 - 1e-12)]
    if len(window) < 4:
        raise InsufficientDataError(f"need >= 4 snapshots with t >= a2, got {len(window)}")
    if window[-1].time < 10.0 * window[0].time * (1 - 1e-12):
        raise InsufficientDataError("snapshot times must span at least one decade")
    if profile is None:
        profile = BarenblattProfile.from_mass(masses.total_norm, params.p, n)
    times, d, dls = [], [], []
    for s in window:
        dt, dl = l1_distances(s, masses, profile)
        times.append(s.time)
        d.append(dt)
        dls.append(tuple(dl))
    target = -rate_fraction * a2 / 2.0
    notes = []
    measured = [(f"d(t={t!r})", v) for t, v in zip(times, d)]
    if max(d) <= quadrature_tol * masses.total_norm:
        notes.append("distance within quadrature tolerance at every snapshot; slope fit skipped")
        series = ConvergenceSeries(tuple(times), tuple(d), tuple(dls), None)
        return (
            DiagnosticsReport("l1_convergence", tuple(measured), max(d), quadrature_tol, True, {"a2": a2}, tuple(notes)),
            series,
        )
    slope = float(np.polyfit(np.log(times), np.log(d), 1)[0])
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    if not decreasing:
        notes.append("distance not strictly decreasing")
    measured.append(("slope", slope))
    measured.append(("target_slope", target))
    components_ok = True
    for l in range(len(dls[0])):
        if dls[0][l] > 0:
            frac = dls[-1][l] / dls[0][l]
            measured.append((f"d{l + 1}_final_over_initial", frac))
            if frac >= component_fraction:
                components_ok = False
                notes.append(f"d{l + 1} ends at {frac:.3g} of its initial value")
    series = ConvergenceSeries(tuple(times), tuple(d), tuple(dls), slope)
    report = DiagnosticsReport(
        name="l1_convergence",
        measured=tuple(measured),
        worst_value=slope,
        tolerance=target,
        passed=decreasing and slope <= target and components_ok,
        inputs={"a2": a2, "snapshots": len(window)},
        notes=tuple(notes),
    )
    return report, series


def l2_contraction_report(
    traj1: Sequence[VectorField], traj2: Sequence[VectorField], rtol: float = 1e-8
) -> DiagnosticsReport:
    """D(t) = sum_l ||u1^l - u2^l||_2^2 must never exceed D(0)(1 + rtol).

    Both sequences start with the initial fields."""
    if len(traj1) != len(traj2) or not traj1:
        raise ValueError("trajectories must have the same, nonzero number of snapshots")
    for a, b in zip(traj1, traj2):
        if a.grid != b.grid or a.k != b.k:
            raise ValueError("trajectories live on different grids")
        if a.time != b.time:
            raise ValueError(f"snapshot times differ: {a.time} vs {b.time}")
    vol = traj1[0].grid.cell_volume
    D = [float(vol * np.sum((a.data - b.data) ** 2)) for a, b in zip(traj1, traj2)]
    d0 = D[0]
    worst = max(D)
    ratio = worst / d0 if d0 > 0 else (0.0 if worst == 0 else math.inf)
    return DiagnosticsReport(
        name="l2_contraction",
        measured=tuple((f"D(t={a.time!r})", v) for a, v in zip(traj1, D)),
        worst_value=ratio,
        tolerance=1.0 + rtol,
        passed=worst <= d0 * (1.0 + rtol),
        inputs={"snapshots": len(D)},
    )


def entropy_report(decay: EntropyDecayReport) -> DiagnosticsReport:
    """The exponential envelope plus strict decrease of Hhat, as one verdict."""
    notes = []
    if not decay.ordering_ok:
        notes.append("records are not in increasing tau")
    if not decay.strictly_decreasing:
        notes.append("Hhat is not strictly decreasing")
    worst = decay.worst_ratio()
    return DiagnosticsReport(
        name="entropy_decay",
        measured=tuple((f"Hhat(tau={r.tau!r})", r.Hhat) for r in decay.records),
        worst_value=worst,
        tolerance=1.0 + decay.slack,
        passed=decay.verdict and decay.strictly_decreasing and decay.ordering_ok,
        inputs={"reference_index": decay.reference_index},
        notes=tuple(notes),
    )


def entropy_ordering_report(records: Sequence[EntropyRecord]) -> DiagnosticsReport:
    """Hhat >= H >= -quad_tol at every record; worst value is the largest violation."""
    if not records:
        raise InsufficientDataError("no entropy records")
    worst = -math.inf
    for r in records:
        worst = max(worst, float(-r.H - r.quad_tol), float(r.H - r.Hhat - r.quad_tol))
    return DiagnosticsReport(
        name="entropy_ordering",
        measured=tuple((f"H(tau={r.tau!r})", r.H) for r in records),
        worst_value=worst,
        tolerance=0.0,
        passed=worst <= 0.0,
        inputs={"records": len(records)},
    )


def proportionality_report(
    taus: Sequence[float], deviations: Sequence[float], slack: float = 0.05, final_cap: float = 0.05
) -> DiagnosticsReport:
    """Deviation from proportional components must decrease (up to ``slack``
    between neighbours) and end below ``final_cap``."""
    if not deviations:
        raise InsufficientDataError("no proportionality values")
    growth = max((b / a for a, b in zip(deviations, deviations[1:]) if a > 0), default=0.0)
    monotone = all(b <= a * (1.0 + slack) for a, b in zip(deviations, deviations[1:]))
    final = deviations[-1]
    notes = [] if monotone else ["deviation grew beyond the slack between snapshots"]
    return DiagnosticsReport(
        name="component_proportionality",
        measured=tuple((f"dev(tau={t!r})", d) for t, d in zip(taus, deviations)),
        worst_value=final,
        tolerance=final_cap,
        passed=monotone and final < final_cap,
        inputs={"max_step_ratio": growth, "slack": slack},
        notes=tuple(notes),
    )


def epsilon_ladder_report(
    epsilons: Sequence[float], finals: Sequence[VectorField], relative_cap: float = 0.01
) -> DiagnosticsReport:
    """L1 distances between consecutive rungs must decrease and the last one
    must be at most ``relative_cap`` of the total mass."""
    if len(finals) < 2 or len(finals) != len(epsilons):
        raise InsufficientDataError("need at least two rungs with one final field each")
    grid = finals[0].grid
    vol = grid.cell_volume
    dists = [float(vol * np.abs(a.data - b.data).sum()) for a, b in zip(finals, finals[1:])]
    total = float(vol * finals[-1].data.sum())
    rel = dists[-1] / total if total > 0 else math.inf
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    measured = [(f"d({e1!r};{e2!r})", d) for e1, e2, d in zip(epsilons, epsilons[1:], dists)]
    measured.append(("last_over_mass", rel))
    return DiagnosticsReport(
        name="epsilon_ladder",
        measured=tuple(measured),
        worst_value=rel,
        tolerance=relative_cap,
        passed=monotone and rel <= relative_cap,
        inputs={"epsilons": tuple(epsilons)},
        notes=() if monotone else ("distances do not decrease along the ladder",),
    )


# ---------------------------------------------------------------------------
# Harnack bracket
# ---------------------------------------------------------------------------


def harnack_bracket(R, T: float, center_value: float, p: float, n: int):
    R = np.asarray(R, float)
    return R ** (n + p / (p - 2.0)) / T ** (1.0 / (p - 2.0)) + T ** (n / p) * center_value ** (
        1.0 + n * (p - 2.0) / p
    )


def ball_mass(u: np.ndarray, grid: Grid, R: float) -> float:
    """h^n * sum over cells with |x| < R."""
    return float(grid.cell_volume * u[grid.radius() < R].sum())


@dataclass(frozen=True)
class HarnackReport:
    R_values: tuple[float, ...]
    T: float
    lhs: tuple[tuple[float, ...], ...]  # per component, per R
    bracket: tuple[tuple[float, ...], ...]
    center_values: tuple[float, ...]
    mu: tuple[float, ...]
    mu0: float
    constants: tuple[tuple[float, ...], ...]
    cap: float
    stability_cap: float
    notes: tuple[str, ...] = ()

    def max_constant(self) -> float:
        vals = [c for row in self.constants for c in row]
        return max(vals) if vals else 0.0

    def stability(self) -> float:
        worst = 1.0
        for row in self.constants:
            pos = [c for c in row if c > 0]
            if pos:
                worst = max(worst, max(pos) / min(pos))
        return worst

    @property
    def passed(self) -> bool:
        finite = all(math.isfinite(c) for row in self.constants for c in row)
        return finite and self.max_constant() <= self.cap and self.stability() <= self.stability_cap

    def as_report(self) -> DiagnosticsReport:
        measured = [("mu0", self.mu0), ("max_C", self.max_constant()), ("stability", self.stability())]
        return DiagnosticsReport(
            name="harnack",
            measured=tuple(measured),
            worst_value=self.max_constant(),
            tolerance=self.cap,
            passed=self.passed,
            inputs={"T": self.T, "R_values": self.R_values},
            notes=self.notes,
        )

    def to_csv(self) -> str:
        rows = ["component,R,lhs,bracket,u0T,mu,C_hat"]
        for l, (lhs, br, c) in enumerate(zip(self.lhs, self.bracket, self.constants)):
            for R, a, b, cc in zip(self.R_values, lhs, br, c):
                rows.append(f"{l + 1},{R!r},{a!r},{b!r},{self.center_values[l]!r},{self.mu[l]!r},{cc!r}")
        return "\n".join(rows) + "\n"


def harnack_report(
    initial: VectorField,
    at_T: VectorField,
    R_values: Sequence[float],
    params: SystemParams,
    cap: float = 1e3,
    stability_cap: float = 1e2,
) -> HarnackReport:
    """Empirical constants C(R) = LHS mu^(1+n(p-2)/p) / bracket for each component."""
    grid = initial.grid
    if at_T.grid != grid:
        raise ValueError("snapshots live on different grids")
    T = at_T.time
    if not T > 0:
        raise ValueError("T must be positive")
    p, n = params.p, grid.n
    notes = []
    R_ok = []
    for R in sorted(R_values):
        if R <= T ** (1.0 / p):
            notes.append(f"R={R!r} <= T^(1/p)={T ** (1.0 / p)!r}: hypothesis violated, skipped")
        elif R >= grid.half_extent:
            notes.append(f"R={R!r} >= L={grid.half_extent!r}: outside the grid, skipped")
        else:
            R_ok.append(float(R))
    if not R_ok:
        raise ValueError("no admissible radius in the sweep (need T^(1/p) < R < L)")
    origin = grid.origin_index()
    masses = l1_mass(initial).masses
    mmax = max(masses)
    if mmax <= 0:
        raise ValueError("all components have zero mass")
    mu = tuple(m / mmax for m in masses)
    positive = [m for m in mu if m > 0]
    mu0 = min(positive)
    if len(positive) < len(mu):
        notes.append("a zero-mass component violates mu0 > 0; it is reported with C = 0")
    power = 1.0 + n * (p - 2.0) / p
    lhs_all, br_all, c_all, centers = [], [], [], []
    for l in range(initial.k):
        u0 = initial.data[l]
        center = float(at_T.data[l][origin])
        lhs = [ball_mass(u0, grid, R) for R in R_ok]
        br = [float(harnack_bracket(R, T, center, p, n)) for R in R_ok]
        assert all(b2 > b1 for b1, b2 in zip(br, br[1:])), "bracket must increase with R"
        assert all(b2 >= b1 * (1 - 1e-12) for b1, b2 in zip(lhs, lhs[1:])), "ball mass must not decrease with R"
        cs = [a * mu[l] ** power / b if mu[l] > 0 else 0.0 for a, b in zip(lhs, br)]
        lhs_all.append(tuple(lhs))
        br_all.append(tuple(br))
        c_all.append(tuple(cs))
        centers.append(center)
    return HarnackReport(
        R_values=tuple(R_ok),
        T=T,
        lhs=tuple(lhs_all),
        bracket=tuple(br_all),
        center_values=tuple(centers),
        mu=mu,
        mu0=mu0,
        constants=tuple(c_all),
        cap=cap,
        stability_cap=stability_cap,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# weak initial trace
# ---------------------------------------------------------------------------


def bump_test_function(grid: Grid, center: Sequence[float], radius: float) -> np.ndarray:
    """phi(x) = (1 - |x - c|^2 / r^2)_+^3 sampled at cell centres."""
    xs = grid.mesh()
    r2 = sum((x - c) ** 2 for x, c in zip(xs, center)) / radius**2
    return np.maximum(1.0 - r2, 0.0) ** 3


@dataclass(frozen=True)
class WeakTraceReport:
    times: tuple[float, ...]
    deviations: tuple[tuple[tuple[float, ...], ...], ...]  # [phi][component][t_j]
    growth_constants: tuple[tuple[float, ...], ...]  # [component][t_j]
    monotone: bool
    slack: float
    notes: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        finite = all(math.isfinite(c) for row in self.growth_constants for c in row)
        return self.monotone and finite

    def worst_deviation(self) -> float:
        return max((row[-1] for phi in self.deviations for row in phi), default=0.0)

    def as_report(self) -> DiagnosticsReport:
        measured = [("final_deviation", self.worst_deviation())]
        gc = [c for row in self.growth_constants for c in row]
        measured.append(("max_growth_constant", max(gc) if gc else 0.0))
        return DiagnosticsReport(
            name="weak_trace",
            measured=tuple(measured),
            worst_value=self.worst_deviation(),
            tolerance=self.slack,
            passed=self.passed,
            inputs={"times": self.times},
            notes=self.notes,
        )

    def to_csv(self) -> str:
        rows = ["phi,component,t,deviation"]
        for i, phi in enumerate(self.deviations):
            for l, row in enumerate(phi):
                for t, v in zip(self.times, row):
                    rows.append(f"{i},{l + 1},{t!r},{v!r}")
        return "\n".join(rows) + "\n"


def weak_trace_report(
    initial: VectorField,
    snapshots: Sequence[VectorField],
    test_functions: Sequence[np.ndarray],
    params: SystemParams,
    R_values: Sequence[float] = (),
    slack: float = 0.1,
    abs_floor: float = 1e-12,
) -> WeakTraceReport:
    """|int u(t_j) phi - int u0 phi| along snapshots ordered by decreasing t_j."""
    snaps = sorted(snapshots, key=lambda s: -s.time)
    if not snaps:
        raise InsufficientDataError("no small-time snapshots")
    grid = initial.grid
    vol = grid.cell_volume
    p, n = params.p, grid.n
    devs = []
    monotone = True
    for phi in test_functions:
        per_comp = []
        for l in range(initial.k):
            ref = vol * float(np.sum(initial.data[l] * phi))
            row = [abs(vol * float(np.sum(s.data[l] * phi)) - ref) for s in snaps]
            scale = max(abs(ref), vol * float(np.sum(initial.data[l])), 1e-300)
            for a, b in zip(row, row[1:]):
                if b > a * (1.0 + slack) + abs_floor * scale:
                    monotone = False
            per_comp.append(tuple(row))
        devs.append(tuple(per_comp))
    origin = grid.origin_index()
    radii = [R for R in R_values if 0 < R < grid.half_extent]
    growth = []
    for l in range(initial.k):
        row = []
        for s in snaps:
            center = float(s.data[l][origin])
            vals = [ball_mass(initial.data[l], grid, R) / float(harnack_bracket(R, s.time, center, p, n)) for R in radii]
            row.append(max(vals) if vals else 0.0)
        growth.append(tuple(row))
    return WeakTraceReport(
        times=tuple(s.time for s in snaps),
        deviations=tuple(devs),
        growth_constants=tuple(growth),
        monotone=monotone,
        slack=slack,
    )
