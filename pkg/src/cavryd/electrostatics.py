"""Finite-difference electrostatics for piezo / shield conductor scenes.

Uniform Cartesian grid over a cube centred on the origin, conductors
rasterised node-wise (staircase boundaries) as Dirichlet nodes, and the
7-point Laplacian relaxed by red-black successive over-relaxation.  The atoms
sit at the origin; the cavity axis is ``x``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from .atom_light import stark_shift

MM = 1e-3


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    potential: float = 0.0
    name: str = ""

    def contains(self, x, y, z, eps=0.0):
        lo, hi = self.lo, self.hi
        return ((x >= lo[0] - eps) & (x <= hi[0] + eps) & (y >= lo[1] - eps) & (y <= hi[1] + eps)
                & (z >= lo[2] - eps) & (z <= hi[2] + eps))

    def bounds(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    def with_potential(self, v):
        return Box(self.lo, self.hi, v, self.name)


@dataclass(frozen=True)
class Cylinder:
    """Solid finite cylinder along coordinate ``axis`` (0, 1 or 2)."""

    center: tuple
    axis: int
    radius: float
    length: float
    potential: float = 0.0
    name: str = ""

    def contains(self, x, y, z, eps=0.0):
        c = [np.asarray(v) - c0 for v, c0 in zip((x, y, z), self.center)]
        a = c[self.axis]
        t1, t2 = (c[i] for i in range(3) if i != self.axis)
        return (np.abs(a) <= 0.5 * self.length + eps) & (t1**2 + t2**2 <= (self.radius + eps) ** 2)

    def bounds(self):
        half = np.full(3, self.radius)
        half[self.axis] = 0.5 * self.length
        c = np.asarray(self.center, float)
        return c - half, c + half

    def with_potential(self, v):
        return Cylinder(self.center, self.axis, self.radius, self.length, v, self.name)


@dataclass(frozen=True)
class Scene:
    """Cube ``[-extent/2, extent/2]^3`` sampled by ``n_points`` nodes per axis.

    ``boundary`` is ``None`` for a grounded outer box, or a callable
    ``(x, y, z) -> potential`` giving Dirichlet values on the outer faces.
    """

    extent: float
    n_points: int
    conductors: tuple = ()
    boundary: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.n_points < 5:
            raise ValueError("need at least 5 grid points per axis")
        if not self.extent > 0:
            raise ValueError("extent must be > 0")
        half = 0.5 * self.extent
        for c in self.conductors:
            lo, hi = c.bounds()
            if np.any(lo < -half) or np.any(hi > half):
                raise ValueError(f"conductor {c.name or c!r} overflows the domain")

    @property
    def spacing(self):
        return self.extent / (self.n_points - 1)

    @property
    def axis(self):
        # integer offsets keep the node set exactly mirror-symmetric
        return (np.arange(self.n_points) - 0.5 * (self.n_points - 1)) * self.spacing

    def scaled(self, factor):
        """Same geometry with every conductor potential multiplied by ``factor``."""
        conductors = tuple(c.with_potential(c.potential * factor) for c in self.conductors)
        bnd = None if self.boundary is None else (lambda x, y, z, f=self.boundary: factor * f(x, y, z))
        return Scene(self.extent, self.n_points, conductors, bnd, self.label)

    def rasterize(self):
        """Dirichlet mask, Dirichlet values and a conductor-interior mask."""
        n = self.n_points
        ax = self.axis
        x, y, z = np.meshgrid(ax, ax, ax, indexing="ij", sparse=True)
        fixed = np.zeros((n, n, n), dtype=bool)
        values = np.zeros((n, n, n))
        owner = np.full((n, n, n), -1, dtype=np.int32)
        # nodes on a conductor surface count as inside despite rounding
        eps = 1e-6 * self.spacing
        for idx, c in enumerate(self.conductors):
            inside = np.broadcast_to(c.contains(x, y, z, eps), (n, n, n))
            clash = inside & (owner >= 0)
            if np.any(clash):
                others = {self.conductors[o].potential for o in np.unique(owner[clash])}
                if any(v != c.potential for v in others):
                    raise ValueError(f"conductor {c.name or idx} overlaps a conductor at a different potential")
            owner[inside] = idx
            values[inside] = c.potential
        conductor = owner >= 0
        fixed |= conductor
        shell = np.ones((n, n, n), dtype=bool)
        shell[1:-1, 1:-1, 1:-1] = False
        if self.boundary is not None:
            bx, by, bz = np.meshgrid(ax, ax, ax, indexing="ij")
            bvals = np.asarray(self.boundary(bx[shell], by[shell], bz[shell]), dtype=float)
            values[shell] = np.where(conductor[shell], values[shell], bvals)
        else:
            values[shell & ~conductor] = 0.0
        fixed |= shell
        return fixed, values, conductor


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _sor_color(phi, fixed, color, omega):
    nx, ny, nz = phi.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            k0 = 1 + ((i + j + 1 + color) & 1)
            for k in range(k0, nz - 1, 2):
                if not fixed[i, j, k]:
                    s = (phi[i - 1, j, k] + phi[i + 1, j, k] + phi[i, j - 1, k]
                         + phi[i, j + 1, k] + phi[i, j, k - 1] + phi[i, j, k + 1])
                    phi[i, j, k] += omega * (s / 6.0 - phi[i, j, k])


@numba.njit(cache=True)
def _max_residual(phi, fixed):
    nx, ny, nz = phi.shape
    worst = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                if not fixed[i, j, k]:
                    r = (phi[i - 1, j, k] + phi[i + 1, j, k] + phi[i, j - 1, k]
                         + phi[i, j + 1, k] + phi[i, j, k - 1] + phi[i, j, k + 1] - 6.0 * phi[i, j, k])
                    if abs(r) > worst:
                        worst = abs(r)
    return worst


@dataclass(eq=False)
class PotentialGrid:
    """Solved potential (V) on the scene grid.

    ``residual`` is the final max-norm 7-point residual relative to
    ``6 * v_scale``, the largest Dirichlet magnitude.
    """

    phi: np.ndarray
    spacing: float
    axis: np.ndarray
    residual: float
    iterations: int
    converged: bool
    fixed: np.ndarray = field(repr=False)
    conductor: np.ndarray = field(repr=False)
    v_scale: float = 0.0

    @property
    def field_floor(self):
        """Field magnitude (V/m) indistinguishable from the iteration error."""
        return max(self.residual, 1e-15) * max(self.v_scale, 1e-300) / self.spacing


def solve(scene, tol=1e-6, max_iters=20000, omega=1.9, initial=None, check_every=10):
    """Relax the Laplace equation on ``scene`` until the relative residual < ``tol``.

    Returns a :class:`PotentialGrid`; when ``max_iters`` is exhausted the
    partial result is returned with ``converged = False``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if not 0 < omega < 2:
        raise ValueError("SOR relaxation factor must lie in (0, 2)")
    fixed, values, conductor = scene.rasterize()
    if initial is not None and np.shape(initial) != values.shape:
        raise ValueError("initial guess has the wrong shape")
    scale = float(np.max(np.abs(values[fixed]))) if fixed.any() else 0.0
    if scale == 0.0:
        return PotentialGrid(np.zeros_like(values), scene.spacing, scene.axis, 0.0, 0, True, fixed, conductor, 0.0)
    # relax in units of the largest fixed potential (robust for any magnitude)
    phi = np.zeros_like(values) if initial is None else np.array(initial, dtype=float) / scale
    phi[fixed] = values[fixed] / scale
    rel = _max_residual(phi, fixed) / 6.0
    it = 0
    while rel >= tol and it < max_iters:
        for _ in range(min(check_every, max_iters - it)):
            _sor_color(phi, fixed, 0, omega)
            _sor_color(phi, fixed, 1, omega)
            it += 1
        rel = _max_residual(phi, fixed) / 6.0
    phi *= scale
    phi[fixed] = values[fixed]
    return PotentialGrid(phi, scene.spacing, scene.axis, rel, it, rel < tol, fixed, conductor, scale)


def optimal_omega(n_points):
    """Asymptotically optimal SOR factor for the model problem on n_points^3."""
    return 2.0 / (1.0 + math.sin(math.pi / (n_points - 1)))


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSample:
    position: tuple
    vector: tuple

    @property
    def magnitude(self):
        return float(np.linalg.norm(self.vector))


def _node_field(phi, h, i, j, k):
    return -np.array([
        phi[i + 1, j, k] - phi[i - 1, j, k],
        phi[i, j + 1, k] - phi[i, j - 1, k],
        phi[i, j, k + 1] - phi[i, j, k - 1],
    ]) / (2.0 * h)


def field_at(grid, position):
    """E = -grad(phi) by central differences, trilinearly interpolated to ``position``."""
    pos = np.asarray(position, dtype=float)
    ax = grid.axis
    h = grid.spacing
    f = (pos - ax[0]) / h
    n = ax.size
    if np.any(f <= 1.0) or np.any(f >= n - 2.0):
        raise ValueError("probe must lie strictly inside the domain, one cell away from the boundary")
    nearest = tuple(np.rint(f).astype(int))
    if grid.conductor[nearest]:
        raise ValueError("probe lies inside a conductor")
    base = np.floor(f).astype(int)
    frac = f - base
    e = np.zeros(3)
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                wgt = ((frac[0] if di else 1 - frac[0]) * (frac[1] if dj else 1 - frac[1])
                       * (frac[2] if dk else 1 - frac[2]))
                if wgt:
                    e += wgt * _node_field(grid.phi, h, base[0] + di, base[1] + dj, base[2] + dk)
    return FieldSample(tuple(pos), tuple(e))


@dataclass(frozen=True)
class ShieldingResult:
    ratio: float
    lower_bound: bool
    e_unshielded: float
    e_shielded: float


def shielding_factor(unshielded, shielded, position=(0.0, 0.0, 0.0)):
    """|E_unshielded| / |E_shielded| at ``position``.

    When the shielded field is below the solver's numerical floor the ratio
    against that floor is returned with ``lower_bound = True``.
    """
    if unshielded.phi.shape != shielded.phi.shape or unshielded.spacing != shielded.spacing:
        raise ValueError("scenes must share the same grid")
    eu = field_at(unshielded, position).magnitude
    es = field_at(shielded, position).magnitude
    floor = shielded.field_floor
    if es <= floor:
        return ShieldingResult(eu / floor, True, eu, es)
    return ShieldingResult(eu / es, False, eu, es)


# --------------------------------------------------------------------------
# cavity assembly geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AssemblyGeometry:
    """Simplified cavity assembly (meters).

    Each piezo is a solid cylinder on the cavity axis whose atom-facing end
    sits ``piezo_distance`` from the origin.  When shielded it is enclosed by
    a grounded titanium box (wall ``wall``, clearance ``gap``) with a square
    aperture of side ``aperture`` in the atom-facing wall.
    """

    piezo_distance: float = 10.0 * MM
    piezo_radius: float = 3.0 * MM
    piezo_length: float = 3.0 * MM
    gap: float = 1.0 * MM
    wall: float = 1.5 * MM
    aperture: float = 4.0 * MM


def _shield_boxes(sign, g, closed):
    d, r, ln, gap, t, a = g.piezo_distance, g.piezo_radius, g.piezo_length, g.gap, g.wall, g.aperture
    x_in = d - gap  # inner surface of the atom-facing wall
    x_back = d + ln + gap
    half = r + gap
    outer = half + t

    def xr(x1, x2):
        lo, hi = sorted((sign * x1, sign * x2))
        return lo, hi

    boxes = []
    fx = xr(x_in - t, x_in)
    bx = xr(x_back, x_back + t)
    sx = xr(x_in - t, x_back + t)
    name = "shield+" if sign > 0 else "shield-"
    boxes.append(Box((bx[0], -outer, -outer), (bx[1], outer, outer), 0.0, name))
    boxes.append(Box((sx[0], -outer, -outer), (sx[1], -half, outer), 0.0, name))
    boxes.append(Box((sx[0], half, -outer), (sx[1], outer, outer), 0.0, name))
    boxes.append(Box((sx[0], -outer, -outer), (sx[1], outer, -half), 0.0, name))
    boxes.append(Box((sx[0], -outer, half), (sx[1], outer, outer), 0.0, name))
    if closed:
        boxes.append(Box((fx[0], -outer, -outer), (fx[1], outer, outer), 0.0, name))
    else:
        ha = 0.5 * a
        boxes.append(Box((fx[0], -outer, -outer), (fx[1], -ha, outer), 0.0, name))
        boxes.append(Box((fx[0], ha, -outer), (fx[1], outer, outer), 0.0, name))
        boxes.append(Box((fx[0], -ha, -outer), (fx[1], ha, -ha), 0.0, name))
        boxes.append(Box((fx[0], -ha, ha), (fx[1], ha, outer), 0.0, name))
    return boxes


def build_assembly_scene(shielded, piezo_voltages, n_points=129, extent=40.0 * MM,
                      geometry=AssemblyGeometry(), closed=False):
    """Two piezos on the cavity axis at +-10 mm, optionally buried in grounded shields."""
    v1, v2 = piezo_voltages
    if max(abs(v1), abs(v2)) > 1000:
        raise ValueError("|V| must be <= 1 kV")
    g = geometry
    conductors = []
    for sign, v in ((+1, v1), (-1, v2)):
        cx = sign * (g.piezo_distance + 0.5 * g.piezo_length)
        conductors.append(Cylinder((cx, 0.0, 0.0), 0, g.piezo_radius, g.piezo_length, float(v),
                                   "piezo+" if sign > 0 else "piezo-"))
        if shielded:
            conductors.extend(_shield_boxes(sign, g, closed))
    label = f"{'shielded' if shielded else 'exposed'} ({v1:g} V, {v2:g} V)"
    return Scene(extent, n_points, tuple(conductors), None, label)


def parallel_plate_scene(gap, voltage, n_points=65, extent=40.0 * MM, plate_thickness=None, ideal_boundary=True):
    """Two plates at z = -+gap/2 spanning the domain.

    With ``ideal_boundary`` the outer faces carry the ideal capacitor
    potential so the interior field is uniform; otherwise the outer box is
    grounded and the field is uniform only far from the side walls.
    """
    h = extent / (n_points - 1)
    t = plate_thickness if plate_thickness is not None else 2 * h
    half = 0.5 * extent
    zb, zt = -0.5 * gap, 0.5 * gap
    plates = (
        Box((-half, -half, zb - t), (half, half, zb), 0.0, "bottom"),
        Box((-half, -half, zt), (half, half, zt + t), float(voltage), "top"),
    )

    def ideal(x, y, z):
        return voltage * np.clip((np.asarray(z) - zb) / gap, 0.0, 1.0)

    return Scene(extent, n_points, plates, ideal if ideal_boundary else None,
                 f"capacitor {voltage:g} V / {gap * 1e3:g} mm")


# --------------------------------------------------------------------------
# Stark sweeps and export
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StarkPoint:
    voltage: float
    field: float
    shift: float
    converged: bool
    field_floor: float = 0.0
    iterations: int = 0


def stark_sweep(scene_builder, voltages, alpha, position=(0.0, 0.0, 0.0), offset_field=(0.0, 0.0, 0.0),
                **solve_kwargs):
    """Rydberg line shift at ``position`` for each piezo voltage.

    ``scene_builder(V)`` returns the scene for voltage ``V``.  Each solve is
    warm-started from the previous potential rescaled to the new voltage.
    ``offset_field`` is a uniform stray field (V/m) added before the shift.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    out = []
    prev, prev_v = None, None
    for v in voltages:
        scene = scene_builder(v)
        init = None
        if prev is not None and prev_v:
            init = prev.phi * (v / prev_v)
        grid = solve(scene, initial=init, **solve_kwargs)
        e = np.asarray(field_at(grid, position).vector) + np.asarray(offset_field, dtype=float)
        mag = float(np.linalg.norm(e))
        out.append(StarkPoint(float(v), mag, stark_shift(alpha, mag), grid.converged, grid.field_floor,
                              grid.iterations))
        if v:
            prev, prev_v = grid, v
    return out


def quadratic_r2(voltages, shifts):
    """Coefficient of determination of a least-squares fit shift = a V^2 + b."""
    v = np.asarray(voltages, dtype=float)
    s = np.asarray(shifts, dtype=float)
    design = np.column_stack([v**2, np.ones_like(v)])
    coef, *_ = np.linalg.lstsq(design, s, rcond=None)
    res = s - design @ coef
    tot = np.sum((s - s.mean()) ** 2)
    return 1.0 - float(res @ res) / tot if tot > 0 else 1.0


def write_field_slice_csv(path, grid, axis=2, index=None):
    """Potential and field on the plane ``axis = index`` (default: central plane)."""
    n = grid.axis.size
    index = n // 2 if index is None else index
    ex, ey, ez = (-g for g in np.gradient(grid.phi, grid.spacing))
    sl = [slice(None)] * 3
    sl[axis] = index
    sl = tuple(sl)
    ax = grid.axis
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij", sparse=True)
    xs, ys, zs = (np.broadcast_to(c, grid.phi.shape)[sl].ravel() for c in (x, y, z))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_m", "y_m", "z_m", "phi_v", "ex", "ey", "ez"])
        for row in zip(xs, ys, zs, grid.phi[sl].ravel(), ex[sl].ravel(), ey[sl].ravel(), ez[sl].ravel()):
            w.writerow([repr(float(v)) for v in row])
