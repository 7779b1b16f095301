"""Grids, fields, parameters and the discrete operators shared by the solver
and the diagnostics.

Fields live on a cell-centered uniform grid covering ``[-L, L]^n``. Gradients
live on cell faces; a face array for axis ``d`` has ``cells[d] + 1`` entries
along that axis, the first and last being the (always zero) outer faces.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

SNAPSHOT_MAGIC = "plapsys-field"
SNAPSHOT_VERSION = "v1"


class SupportOverflowError(RuntimeError):
    """The solution support came too close to the truncated domain boundary."""


class OutsideHypothesesWarning(UserWarning):
    """Raised as a warning for runs the theory does not strictly cover (n = 1)."""


@dataclass(frozen=True)
class SystemParams:
    p: float
    n: int
    k: int = 1
    epsilon: float = 0.0

    def __post_init__(self):
        if not (self.p > 2):
            raise ValueError(f"p must exceed 2, got {self.p}")
        if self.n not in (1, 2):
            raise ValueError(f"n must be 1 or 2, got {self.n}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (self.epsilon >= 0):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def within_theory(self) -> bool:
        # the theorems are stated for n >= 2
        return self.n >= 2

    def warn_if_outside_theory(self) -> None:
        if not self.within_theory:
            warnings.warn(
                "n=1 lies outside the stated hypotheses (n >= 2); results are "
                "reported but not covered by the theory",
                OutsideHypothesesWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on ``[-half_extent, half_extent]^n``."""

    cells: tuple[int, ...]
    half_extent: float

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(cells) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(cells)}")
        if any(c < 1 for c in cells):
            raise ValueError(f"cells_per_axis must be positive, got {cells}")
        if not (self.half_extent > 0 and math.isfinite(self.half_extent)):
            raise ValueError(f"half_extent must be positive, got {self.half_extent}")

    @classmethod
    def uniform(cls, n: int, cells: int, half_extent: float) -> "Grid":
        return cls((cells,) * n, half_extent)

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(2.0 * self.half_extent / c for c in self.cells)

    @property
    def h_min(self) -> float:
        return min(self.h)

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def axis(self, d: int) -> np.ndarray:
        h = self.h[d]
        return -self.half_extent + (np.arange(self.cells[d]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.axis(d) for d in range(self.n)), indexing="ij"))

    def radius(self) -> np.ndarray:
        """|x| at every cell center."""
        return np.sqrt(sum(x * x for x in self.mesh()))

    def scaled(self, factor: float) -> "Grid":
        return Grid(self.cells, self.half_extent * factor)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(tuple(c * factor for c in self.cells), self.half_extent)

    def origin_index(self) -> tuple[int, ...]:
        """Index of the cell containing x = 0 (upper cell when 0 sits on a face)."""
        idx = []
        for d in range(self.n):
            i = int(math.floor(self.half_extent / self.h[d]))
            idx.append(min(i, self.cells[d] - 1))
        return tuple(idx)


@dataclass(frozen=True)
class MassVector:
    masses: tuple[float, ...]
    total_norm: float = field(init=False)

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        object.__setattr__(self, "masses", masses)
        if any(m < 0 for m in masses):
            raise ValueError(f"masses must be nonnegative, got {masses}")
        object.__setattr__(self, "total_norm", math.sqrt(sum(m * m for m in masses)))

    def __len__(self) -> int:
        return len(self.masses)

    def __getitem__(self, i: int) -> float:
        return self.masses[i]

    @property
    def k(self) -> int:
        return len(self.masses)


@dataclass(frozen=True, eq=False)
class VectorField:
    """k scalar components on a grid at time t; ``data`` has shape (k, *cells)."""

    grid: Grid
    data: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == self.grid.n:
            data = data[np.newaxis]
        if data.shape[1:] != self.grid.cells:
            raise ValueError(
                f"component shape {data.shape[1:]} does not match grid {self.grid.cells}"
            )
        if data.shape[0] < 1:
            raise ValueError("a field needs at least one component")
        if not np.all(np.isfinite(data)):
            raise ValueError("field values must be finite")
        if self.time < 0:
            raise ValueError(f"time must be nonnegative, got {self.time}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[0]

    def component(self, l: int) -> np.ndarray:
        if not 0 <= l < self.k:
            raise IndexError(f"component {l} out of range for k={self.k}")
        return self.data[l]

    def norm(self) -> np.ndarray:
        """Pointwise Euclidean norm over components, |u|."""
        return np.sqrt(np.sum(self.data * self.data, axis=0))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.data >= 0))

    def with_data(self, data: np.ndarray, time: float | None = None) -> "VectorField":
        return VectorField(self.grid, data, self.time if time is None else time)

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.time == other.time
            and np.array_equal(self.data, other.data)
        )


# ---------------------------------------------------------------------------
# discrete operators (array level, batch-friendly)
# ---------------------------------------------------------------------------


def face_differences(u: np.ndarray, h: Sequence[float]) -> list[np.ndarray]:
    """Two-point differences on every face, zero on the outer faces.

    ``u`` has shape (..., *cells) with ``len(h)`` trailing spatial axes.
    """
    n = len(h)
    out = []
    for d in range(n):
        ax = u.ndim - n + d
        g = np.diff(u, axis=ax) / h[d]
        pad = [(0, 0)] * u.ndim
        pad[ax] = (1, 1)
        out.append(np.pad(g, pad))
    return out


def _transverse_at_faces(g_other: np.ndarray, ax_other: int, ax_face: int) -> np.ndarray:
    """Average the four faces of the transverse family around each face of ``ax_face``."""
    # cell-centred transverse derivative (mean of the two faces bounding the cell)
    lo = [slice(None)] * g_other.ndim
    hi = [slice(None)] * g_other.ndim
    lo[ax_other] = slice(None, -1)
    hi[ax_other] = slice(1, None)
    centred = 0.5 * (g_other[tuple(lo)] + g_other[tuple(hi)])
    pad = [(0, 0)] * centred.ndim
    pad[ax_face] = (1, 1)
    centred = np.pad(centred, pad)
    lo = [slice(None)] * centred.ndim
    hi = [slice(None)] * centred.ndim
    lo[ax_face] = slice(None, -1)
    hi[ax_face] = slice(1, None)
    return 0.5 * (centred[tuple(lo)] + centred[tuple(hi)])


def face_gradient_norm(grads: list[np.ndarray], n: int, component_axis: int = -1) -> list[np.ndarray]:
    """|grad u| on each face family, summed over components.

    ``grads[d]`` has shape (..., k, *face_shape_d). The component axis is the
    one right before the spatial axes.
    """
    out = []
    for d in range(n):
        g = grads[d]
        ax_face = g.ndim - n + d
        sq = g * g
        for e in range(n):
            if e == d:
                continue
            ax_e = g.ndim - n + e
            t = _transverse_at_faces(grads[e], ax_e, ax_face)
            sq = sq + t * t
        out.append(np.sqrt(np.sum(sq, axis=g.ndim - n - 1)))
    return out


def gradient(field: VectorField, component: int) -> list[np.ndarray]:
    """Face-centred partial derivatives of one component, one array per axis."""
    u = field.component(component)
    return face_differences(u, field.grid.h)


def system_gradient_norm(field: VectorField) -> list[np.ndarray]:
    """|grad u| = sqrt(sum_l |grad u^l|^2) on every face family."""
    grads = face_differences(field.data, field.grid.h)
    return face_gradient_norm(grads, field.grid.n)


def sup_gradient(field: VectorField) -> float:
    return max(float(np.max(t)) for t in system_gradient_norm(field))


def l1_mass(field: VectorField) -> MassVector:
    vol = field.grid.cell_volume
    sums = field.data.reshape(field.k, -1).sum(axis=1)
    return MassVector(tuple(float(vol * s) for s in sums))


def lp_norm(field: VectorField, component: int, q: float) -> float:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    u = np.abs(field.component(component))
    vol = field.grid.cell_volume
    if math.isinf(q):
        return float(u.max())
    return float((vol * np.sum(u**q)) ** (1.0 / q))


def linf_norm(field: VectorField) -> float:
    return float(np.max(np.abs(field.data)))


def l1_distance(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(grid.cell_volume * np.sum(np.abs(a - b)))


def support_margin_cells(data: np.ndarray, n: int, threshold: float = 1e-14) -> int:
    """Cells between the support (values above ``threshold``) and the nearest
    outer face; a huge number for an empty support."""
    mask = np.any(data > threshold, axis=tuple(range(data.ndim - n)))
    if not mask.any():
        return 1 << 30
    margin = 1 << 30
    for d in range(n):
        other = tuple(e for e in range(n) if e != d)
        line = mask.any(axis=other) if other else mask
        idx = np.flatnonzero(line)
        margin = min(margin, int(idx[0]), int(line.size - 1 - idx[-1]))
    return margin


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------


def format_snapshot(field: VectorField) -> str:
    g = field.grid
    cells = ",".join(str(c) for c in g.cells)
    lines = [
        f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} n={g.n} k={field.k} cells={cells} "
        f"L={g.half_extent!r} t={field.time!r}"
    ]
    rows = field.data.reshape(field.k, -1).T
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> VectorField:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty snapshot")
    head = lines[0].split()
    if len(head) < 2 or head[0] != SNAPSHOT_MAGIC or head[1] != SNAPSHOT_VERSION:
        raise ValueError(f"not a {SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} file: {lines[0]!r}")
    meta = dict(tok.split("=", 1) for tok in head[2:])
    try:
        n = int(meta["n"])
        k = int(meta["k"])
        cells = tuple(int(c) for c in meta["cells"].split(","))
        L = float(meta["L"])
        t = float(meta["t"])
    except KeyError as exc:
        raise ValueError(f"snapshot header missing {exc}") from None
    if len(cells) != n:
        raise ValueError(f"header n={n} but cells={cells}")
    grid = Grid(cells, L)
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != math.prod(cells):
        raise ValueError(f"expected {math.prod(cells)} cell rows, found {len(body)}")
    values = np.array([[float(v) for v in ln.split()] for ln in body])
    if values.shape[1] != k:
        raise ValueError(f"expected {k} values per row, found {values.shape[1]}")
    return VectorField(grid, values.T.reshape((k,) + cells), t)


def write_snapshot(field: VectorField, path: str | Path) -> None:
    Path(path).write_text(format_snapshot(field), newline="\n")


def read_snapshot(path: str | Path) -> VectorField:
    return parse_snapshot(Path(path).read_text())


def flux_divergence(
    u: np.ndarray, h: Sequence[float], p: float, epsilon: float = 0.0
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Conservative discretisation of div((|grad u|^(p-2) + eps) grad u^l).

    ``u`` has shape (..., k, *cells). Returns the divergence (same shape as
    ``u``) and the face values of |grad u| used for the coefficient.
    """
    n = len(h)
    grads = face_differences(u, h)
    theta = face_gradient_norm(grads, n)
    div = np.zeros_like(u, dtype=float)
    for d in range(n):
        coef = theta[d] ** (p - 2.0)
        if epsilon:
            coef = coef + epsilon
        flux = np.expand_dims(coef, axis=coef.ndim - n) * grads[d]
        div += np.diff(flux, axis=u.ndim - n + d) / h[d]
    return div, theta
