"""Self-similar variables and the entropy functionals measuring the distance
of |theta| to the rescaled Barenblatt profile.

With ``R(t) = (t/a2)^a2`` the rescaling is ``eta = x/R``, ``tau = log R`` and
``theta = R^n u``; it preserves mass exactly since ``d eta = dx / R^n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .barenblatt import BarenblattProfile, rescaled_profile, similarity_exponents
from .core import Grid, MassVector, SystemParams, VectorField


@dataclass(frozen=True, eq=False)
class RescaledState:
    eta_grid: Grid
    theta: np.ndarray  # (k, *cells)
    tau: float
    source_time: float
    a2: float

    def __post_init__(self):
        R = (self.source_time / self.a2) ** self.a2
        if not math.isclose(self.tau, math.log(R), rel_tol=1e-14, abs_tol=1e-14):
            raise ValueError(f"tau={self.tau} inconsistent with t={self.source_time}")

    @property
    def R(self) -> float:
        return math.exp(self.tau)

    @property
    def k(self) -> int:
        return self.theta.shape[0]

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.theta * self.theta, axis=0))

    def masses(self) -> MassVector:
        vol = self.eta_grid.cell_volume
        return MassVector(tuple(float(vol * c.sum()) for c in self.theta))


@dataclass(frozen=True)
class EntropyRecord:
    tau: float
    t: float
    H: float
    Hhat: float
    quad_tol: float


def scale_factor(t: float, a2: float) -> float:
    return (t / a2) ** a2


def to_self_similar(field: VectorField, params: SystemParams) -> RescaledState:
    t = field.time
    if not t > 0:
        raise ValueError(f"rescaling needs t > 0, got t={t}")
    _, a2 = similarity_exponents(params.p, field.grid.n)
    R = scale_factor(t, a2)
    n = field.grid.n
    return RescaledState(
        eta_grid=field.grid.scaled(1.0 / R),
        theta=R**n * np.asarray(field.data),
        tau=math.log(R),
        source_time=t,
        a2=a2,
    )


def sigma(s, p: float):
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise ValueError("sigma is defined for s >= 0")
    return (p - 1.0) ** 2 / ((2.0 * p - 3.0) * (p - 2.0)) * s ** ((2.0 * p - 3.0) / (p - 1.0))


def sigma_prime(s, p: float):
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise ValueError("sigma' is defined for s >= 0")
    return (p - 1.0) / (p - 2.0) * s ** ((p - 2.0) / (p - 1.0))


def _check_profile(rs: RescaledState, profile: BarenblattProfile) -> None:
    total = rs.masses().total_norm
    if not math.isclose(profile.M, total, rel_tol=1e-6):
        raise ValueError(f"profile mass {profile.M} does not match |M|={total}")
    if profile.n != rs.eta_grid.n:
        raise ValueError("profile dimension does not match the state")


def _profile_on_grid(rs: RescaledState, profile: BarenblattProfile) -> tuple[np.ndarray, np.ndarray]:
    r = rs.eta_grid.radius()
    return r, rescaled_profile(r, profile)


def quadrature_tolerance(rs: RescaledState, profile: BarenblattProfile) -> float:
    """Size of the discrete mass defect of the sampled profile, in entropy units.

    ``Hhat - H`` equals a nonnegative term plus ``(p-1)/(p-2) C (int f - int Bt)``;
    only the part of the last factor due to quadrature of Bt can be negative.
    """
    _, b = _profile_on_grid(rs, profile)
    p = profile.p
    defect = abs(rs.eta_grid.cell_volume * b.sum() - profile.M)
    return (p - 1.0) / (p - 2.0) * profile.C_M * defect + 1e-12 * profile.M


def entropy_H(rs: RescaledState, profile: BarenblattProfile) -> float:
    _check_profile(rs, profile)
    p = profile.p
    f = rs.norm()
    _, b = _profile_on_grid(rs, profile)
    integrand = sigma(f, p) - sigma(b, p) - sigma_prime(b, p) * (f - b)
    return float(rs.eta_grid.cell_volume * integrand.sum())


def entropy_Hhat(rs: RescaledState, profile: BarenblattProfile) -> float:
    _check_profile(rs, profile)
    p = profile.p
    f = rs.norm()
    r, b = _profile_on_grid(rs, profile)
    integrand = sigma(f, p) - sigma(b, p) + (p - 1.0) / p * r ** (p / (p - 1.0)) * (f - b)
    return float(rs.eta_grid.cell_volume * integrand.sum())


def entropy_record(field: VectorField, params: SystemParams, profile: BarenblattProfile) -> EntropyRecord:
    rs = to_self_similar(field, params)
    return EntropyRecord(
        tau=rs.tau,
        t=rs.source_time,
        H=entropy_H(rs, profile),
        Hhat=entropy_Hhat(rs, profile),
        quad_tol=quadrature_tolerance(rs, profile),
    )


@dataclass(frozen=True)
class EntropyDecayReport:
    records: tuple[EntropyRecord, ...]
    reference_index: int
    envelope: tuple[float, ...]
    passed: tuple[bool, ...]
    strictly_decreasing: bool
    ordering_ok: bool
    slack: float

    @property
    def verdict(self) -> bool:
        return all(self.passed)

    def worst_ratio(self) -> float:
        """max Hhat / envelope over the window (1 + slack is the tolerance)."""
        worst = 0.0
        for rec, env in zip(self.records[self.reference_index :], self.envelope[self.reference_index :]):
            if env > 0:
                worst = max(worst, rec.Hhat / env)
            elif rec.Hhat > rec.quad_tol:
                worst = math.inf
        return worst

    def to_csv(self) -> str:
        rows = ["tau,t,H,Hhat,envelope,pass"]
        for rec, env, ok in zip(self.records, self.envelope, self.passed):
            rows.append(f"{rec.tau!r},{rec.t!r},{rec.H!r},{rec.Hhat!r},{env!r},{'PASS' if ok else 'FAIL'}")
        return "\n".join(rows) + "\n"


def entropy_verdict(records: Sequence[EntropyRecord], slack: float = 0.15, start_tau: float = 0.0) -> EntropyDecayReport:
    """Check Hhat(tau) <= exp(-(tau - tau0)) Hhat(tau0) (1 + slack) from the first
    record with tau >= start_tau onwards."""
    records = tuple(records)
    if not records:
        raise ValueError("no entropy records")
    ref = next((i for i, r in enumerate(records) if r.tau >= start_tau), None)
    if ref is None:
        raise ValueError(f"no record with tau >= {start_tau}")
    tau0 = records[ref].tau
    h0 = records[ref].Hhat
    envelope = []
    passed = []
    for i, rec in enumerate(records):
        env = math.exp(-(rec.tau - tau0)) * h0 * (1.0 + slack)
        envelope.append(env)
        # records before the reference are outside the window; a record whose
        # tau does not exceed its predecessor's breaks the time ordering
        in_order = i <= ref or rec.tau > records[i - 1].tau
        passed.append(i < ref or (in_order and rec.Hhat <= env + rec.quad_tol))
    window = records[ref:]
    strictly = all(b.Hhat < a.Hhat for a, b in zip(window, window[1:]))
    ordering = all(b.tau > a.tau for a, b in zip(window, window[1:]))
    return EntropyDecayReport(records, ref, tuple(envelope), tuple(passed), strictly, ordering, slack)


def entropy_decay_report(
    snapshots: Sequence[VectorField], params: SystemParams, slack: float = 0.15
) -> EntropyDecayReport:
    """Entropy records for every snapshot and the decay verdict, measured from
    the first snapshot with t >= a2 (tau >= 0)."""
    if not snapshots:
        raise ValueError("no snapshots")
    for s in snapshots:
        if not s.time > 0:
            raise ValueError(f"snapshot at t={s.time} <= 0")
    total = MassVector(tuple(float(snapshots[0].grid.cell_volume * c.sum()) for c in snapshots[0].data)).total_norm
    profile = BarenblattProfile.from_mass(total, params.p, snapshots[0].grid.n)
    records = [entropy_record(s, params, profile) for s in snapshots]
    start = 0.0 if any(r.tau >= 0 for r in records) else records[0].tau
    return entropy_verdict(records, slack, start)


def component_proportionality(rs: RescaledState, masses: MassVector) -> float:
    """max_l ||theta^l - (M_l/|M|) |theta| ||_1 / M_l over components with M_l > 0."""
    if masses.total_norm <= 0:
        raise ValueError("zero total mass")
    norm = rs.norm()
    vol = rs.eta_grid.cell_volume
    worst = 0.0
    for l, m in enumerate(masses.masses):
        if m <= 0:
            continue
        dev = vol * np.abs(rs.theta[l] - m / masses.total_norm * norm).sum() / m
        worst = max(worst, float(dev))
    return worst


def proportionality_csv(rows: Sequence[tuple[float, int, float]]) -> str:
    out = ["tau,component,deviation"]
    out.extend(f"{tau!r},{comp},{dev!r}" for tau, comp, dev in rows)
    return "\n".join(out) + "\n"


def component_deviations(rs: RescaledState, masses: MassVector) -> list[float]:
    norm = rs.norm()
    vol = rs.eta_grid.cell_volume
    out = []
    for l, m in enumerate(masses.masses):
        if m <= 0:
            out.append(0.0)
            continue
        out.append(float(vol * np.abs(rs.theta[l] - m / masses.total_norm * norm).sum() / m))
    return out
