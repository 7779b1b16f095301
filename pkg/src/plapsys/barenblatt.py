"""Barenblatt (fundamental) solutions of the scalar p-Laplacian equation.

Two equivalent parameterisations are carried:

* the rescaled profile ``Bt(eta) = (C - (p-2)/p |eta|^q)_+^gamma`` with
  ``q = p/(p-1)`` and ``gamma = (p-1)/(p-2)``; ``C`` is the *profile constant*
  fixed by the mass and stored as ``BarenblattProfile.C_M``;
* the physical form ``t^-a1 (C' - (p-2)/p a2^(1/(p-1)) (|x|/t^a2)^q)_+^gamma``
  whose constant ``C' = a2^(a1 (p-2)/(p-1)) C`` is ``physical_constant``.

Both describe the same function: ``B(x, t) = (t/a2)^-a1 Bt((t/a2)^-a2 x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import Grid, SupportOverflowError, flux_divergence


class BracketError(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


def similarity_exponents(p: float, n: int) -> tuple[float, float]:
    """(a1, a2) = (n, 1) / ((p-2) n + p)."""
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    denom = (p - 2.0) * n + p
    return n / denom, 1.0 / denom


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _shape_exponents(p: float) -> tuple[float, float]:
    return p / (p - 1.0), (p - 1.0) / (p - 2.0)


def rescaled_support_radius(C: float, p: float) -> float:
    return (p * C / (p - 2.0)) ** ((p - 1.0) / p)


def profile_mass(C: float, p: float, n: int) -> float:
    """Integral over R^n of the rescaled profile with constant C (adaptive quadrature)."""
    if C <= 0:
        return 0.0
    q, gamma = _shape_exponents(p)
    c = (p - 2.0) / p
    r_star = rescaled_support_radius(C, p)

    def integrand(r):
        base = C - c * r**q
        return base**gamma * r ** (n - 1) if base > 0 else 0.0

    val, err = integrate.quad(integrand, 0.0, r_star, epsabs=0.0, epsrel=1e-13, limit=200)
    if not math.isfinite(val) or err > 1e-10 * abs(val) + 1e-300:
        raise QuadratureError(f"radial quadrature did not converge: value={val}, error={err}")
    return sphere_area(n) * val


def profile_constant(M: float, p: float, n: int, rtol: float = 1e-10, max_iter: int = 400) -> float:
    """The constant C whose rescaled profile carries mass M, by bisection."""
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")
    if not p > 2:
        raise ValueError(f"p must exceed 2, got {p}")
    lo, hi = 1e-300, 1.0
    grow = 0
    while profile_mass(hi, p, n) < M:
        lo, hi = hi, hi * 2.0
        grow += 1
        if grow > 2000 or not math.isfinite(hi):
            raise BracketError(f"could not bracket mass {M}: bracket=[{lo}, {hi}]")
    if profile_mass(lo, p, n) > M:
        raise BracketError(f"lower end already exceeds mass {M}: bracket=[{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m = profile_mass(mid, p, n)
        if abs(m - M) <= rtol * M and (hi - lo) <= 1e-13 * mid:
            return mid
        if m < M:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * math.ulp(hi):
            break
    mid = 0.5 * (lo + hi)
    if abs(profile_mass(mid, p, n) - M) > rtol * M:
        raise BracketError(f"bisection stalled for mass {M}: bracket=[{lo}, {hi}]")
    return mid


@dataclass(frozen=True)
class BarenblattProfile:
    M: float
    C_M: float
    a1: float
    a2: float
    p: float
    n: int

    @classmethod
    def from_mass(cls, M: float, p: float, n: int) -> "BarenblattProfile":
        a1, a2 = similarity_exponents(p, n)
        return cls(M=M, C_M=profile_constant(M, p, n), a1=a1, a2=a2, p=p, n=n)

    @property
    def physical_constant(self) -> float:
        p = self.p
        return self.a2 ** (self.a1 * (p - 2.0) / (p - 1.0)) * self.C_M

    @property
    def rescaled_radius(self) -> float:
        return rescaled_support_radius(self.C_M, self.p)

    def support_radius(self, t: float) -> float:
        """Radius of the support of B(., t)."""
        p = self.p
        return t**self.a2 * (
            p * self.physical_constant / ((p - 2.0) * self.a2 ** (1.0 / (p - 1.0)))
        ) ** ((p - 1.0) / p)

    def rescaled(self, eta) -> np.ndarray:
        return rescaled_profile(eta, self)

    def __call__(self, x, t: float) -> np.ndarray:
        return evaluate(x, t, self)


def _radial(points) -> np.ndarray:
    """|x| for scalar radii, 1-D coordinate arrays, or tuples of coordinate arrays."""
    if isinstance(points, tuple):
        return np.sqrt(sum(np.asarray(c, float) ** 2 for c in points))
    return np.abs(np.asarray(points, float))


def rescaled_profile(eta, profile: BarenblattProfile) -> np.ndarray:
    p = profile.p
    q, gamma = _shape_exponents(p)
    r = _radial(eta)
    base = profile.C_M - (p - 2.0) / p * r**q
    return np.where(base > 0, np.maximum(base, 0.0) ** gamma, 0.0)


def evaluate(x, t: float, profile: BarenblattProfile) -> np.ndarray:
    """B_M(x, t) in the physical form."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    p = profile.p
    q, gamma = _shape_exponents(p)
    r = _radial(x)
    k = (p - 2.0) / p * profile.a2 ** (1.0 / (p - 1.0))
    base = profile.physical_constant - k * (r / t**profile.a2) ** q
    return t ** (-profile.a1) * np.where(base > 0, np.maximum(base, 0.0) ** gamma, 0.0)


def evaluate_via_rescaling(x, t: float, profile: BarenblattProfile) -> np.ndarray:
    """(t/a2)^-a1 Bt((t/a2)^-a2 x)."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    s = t / profile.a2
    r = _radial(x)
    return s ** (-profile.a1) * rescaled_profile(s ** (-profile.a2) * r, profile)


def sample(profile: BarenblattProfile, grid: Grid, t: float) -> np.ndarray:
    return evaluate(grid.radius(), t, profile)


def gradient_magnitude(r, t: float, profile: BarenblattProfile) -> np.ndarray:
    """|grad B(x, t)| as a function of r = |x| (closed form)."""
    p = profile.p
    q, gamma = _shape_exponents(p)
    r = np.asarray(r, float)
    k = (p - 2.0) / p * profile.a2 ** (1.0 / (p - 1.0))
    s = r / t**profile.a2
    base = profile.physical_constant - k * s**q
    inner = np.where(base > 0, np.maximum(base, 0.0) ** (gamma - 1.0), 0.0)
    return t ** (-profile.a1) * gamma * inner * k * q * s ** (q - 1.0) / t**profile.a2


def pde_residual(profile: BarenblattProfile, grid: Grid, t: float, exclusion_cells: float = 5.0) -> float:
    """L1 mismatch between dB/dt and the discrete p-Laplacian of the sampled profile,
    away from the free boundary."""
    if grid.n != profile.n:
        raise ValueError(f"grid dimension {grid.n} does not match profile n={profile.n}")
    r_front = profile.support_radius(t)
    h = grid.h_min
    if r_front >= grid.half_extent - 2.0 * h:
        raise SupportOverflowError(
            f"support radius {r_front:.6g} at t={t} reaches the grid boundary "
            f"(L={grid.half_extent})"
        )
    r = grid.radius()
    b = evaluate(r, t, profile)
    div, _ = flux_divergence(b[np.newaxis], grid.h, profile.p)
    dt = t * 1e-5
    b_t = (evaluate(r, t + dt, profile) - evaluate(r, t - dt, profile)) / (2.0 * dt)
    keep = np.abs(r - r_front) > exclusion_cells * h
    return float(grid.cell_volume * np.sum(np.abs(b_t - div[0])[keep]))
