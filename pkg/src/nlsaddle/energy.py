"""Discrete odd-sector energy on a triangle grid of orbit cells.

The energy of a profile w supported in B_R, written only through its values
on the outer octant {0 <= t < s}, is

    E(w, B_S) = (1/4) { I(in, in) + 2 I(in, outer \\ B_S) } + 2 sum_in G(w) mu

with the interaction

    I(A, B) = 2 sum |w_i - w_j|^2 (kbar_ij - kbar*_ij) mu_i mu_j
            + 4 sum (w_i^2 + w_j^2) kbar*_ij mu_i mu_j,

kbar*_ij = kbar(x_i, x_j^star).  Cells are midpoint squares in (s, t); the
self-cell part of the quadratic term (the only sub-h pairs on the lattice)
is reinstated by a per-node correction ~ |grad w|^2 h^(2-2 gamma) whose
constant is integrated exactly, and interactions beyond R_out are added
through the analytic power-law tail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, PreconditionError, TableError
from .kernels import RadialKernel, check_sqrt_convexity
from .doubly_radial import (QuadratureRule, exterior_tail_coefficient,
                            gauss_jacobi_rule, j_values, omega_sphere)

_ROW_CHUNK = 512


@dataclass(frozen=True)
class Grid:
    """Cell-centered triangle grid on {0 <= t < s, s^2 + t^2 <= R_out^2}.

    Node k sits at ((i_k + 1/2) h, (j_k + 1/2) h) with j_k < i_k and carries
    the orbit-cell volume weight omega^2 s^(m-1) t^(m-1) h^2.  Profiles on
    the grid vanish outside B_R; the band R < |x| <= R_out only mediates
    interactions.
    """

    R: float
    h: float
    m: int
    R_out: float
    s: np.ndarray
    t: np.ndarray
    ii: np.ndarray
    jj: np.ndarray
    weights: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.s.size

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.s, self.t)

    @property
    def cone_dist(self) -> np.ndarray:
        return (self.s - self.t) / math.sqrt(2.0)

    def inside(self, S: float) -> np.ndarray:
        return self.radius <= S * (1.0 + 1e-12)

    def node_index(self) -> dict:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(zip(self.ii, self.jj))}


def build_grid(R: float, h: float, m: int, R_out: float | None = None) -> Grid:
    """Lay out the triangle grid; R_out defaults to 1.5 R."""
    if R_out is None:
        R_out = 1.5 * R
    if not (0.0 < h < R < R_out):
        raise DomainError(f"need 0 < h < R < R_out, got h={h}, R={R}, R_out={R_out}")
    if int(m) != m or m < 1:
        raise DomainError("m must be an integer >= 1")
    n_max = int(math.ceil(R_out / h)) + 1
    i, j = np.meshgrid(np.arange(n_max), np.arange(n_max), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    s = (i + 0.5) * h
    t = (j + 0.5) * h
    keep = (j < i) & (s ** 2 + t ** 2 <= R_out ** 2)
    i, j, s, t = i[keep], j[keep], s[keep], t[keep]
    order = np.lexsort((j, i))
    i, j, s, t = i[order], j[order], s[order], t[order]
    w = omega_sphere(m) ** 2 * s ** (m - 1) * t ** (m - 1) * h ** 2
    return Grid(R=float(R), h=float(h), m=int(m), R_out=float(R_out),
                s=s, t=t, ii=i, jj=j, weights=w)


@dataclass(frozen=True)
class OddProfile:
    """Values of the odd profile on the outer-octant nodes.

    The stored values define the full function through w(t,s) = -w(s,t),
    w = 0 on the cone, and w = 0 outside B_R (enforced at construction).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_nodes,):
            raise DomainError("profile shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise DomainError("profile values must be finite")
        v = np.where(self.grid.inside(self.grid.R), v, 0.0)
        object.__setattr__(self, "values", v)

    def with_values(self, values: np.ndarray) -> "OddProfile":
        return OddProfile(self.grid, values)


def zero_profile(grid: Grid) -> OddProfile:
    return OddProfile(grid, np.zeros(grid.n_nodes))


def truncate_profile(profile: OddProfile) -> OddProfile:
    """Sign rearrangement then cap at 1: values become min(1, |w|).

    Both maps are energy-decreasing whenever the kernel table's difference
    entries are nonnegative.
    """
    return profile.with_values(np.minimum(1.0, np.abs(profile.values)))


def save_profile(profile: OddProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "t", "u"])
        for s, t, u in zip(profile.grid.s, profile.grid.t, profile.values):
            writer.writerow([repr(float(s)), repr(float(t)), repr(float(u))])


def load_profile(path, grid: Grid) -> OddProfile:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != ["s", "t", "u"]:
            raise DomainError(f"profile file {path} must have header s,t,u")
        rows = np.array([[float(c) for c in row] for row in reader])
    if rows.shape[0] != grid.n_nodes:
        raise DomainError("profile file does not match the grid size")
    order = np.lexsort((np.round(rows[:, 1] / grid.h - 0.5), np.round(rows[:, 0] / grid.h - 0.5)))
    rows = rows[order]
    if not (np.allclose(rows[:, 0], grid.s, atol=1e-9 * grid.h)
            and np.allclose(rows[:, 1], grid.t, atol=1e-9 * grid.h)):
        raise DomainError("profile node coordinates do not match the grid")
    return OddProfile(grid, rows[:, 2])


@dataclass(frozen=True)
class Potential:
    """Double-well data: G with f = -G'."""

    G: Callable
    f: Callable
    name: str = "custom"

    def well_height(self) -> float:
        return float(self.G(0.0))


def allen_cahn() -> Potential:
    return Potential(G=lambda u: 0.25 * (1.0 - np.asarray(u) ** 2) ** 2,
                     f=lambda u: np.asarray(u) - np.asarray(u) ** 3,
                     name="allen-cahn")


def zero_potential() -> Potential:
    return Potential(G=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                     f=lambda u: np.zeros_like(np.asarray(u, dtype=float)),
                     name="zero")


@dataclass
class EnergyBreakdown:
    kinetic_in_in: float
    kinetic_in_out: float
    potential: float
    S: float
    h: float
    R: float

    @property
    def total(self) -> float:
        return self.kinetic_in_in + self.kinetic_in_out + self.potential

    def as_dict(self) -> dict:
        return {"kinetic_in_in": self.kinetic_in_in,
                "kinetic_in_out": self.kinetic_in_out,
                "potential": self.potential,
                "total": self.total,
                "S": self.S, "h": self.h, "R": self.R}


# ---------------------------------------------------------------------------
# Kernel table
# ---------------------------------------------------------------------------

@dataclass
class KernelTable:
    """Pairwise averaged-kernel data over all grid node pairs.

    D[i,j]   kbar(x_i, x_j) - kbar(x_i, x_j*)   (0 on the diagonal)
    P[i,j]   kbar(x_i, x_j*)                     (finite for all pairs)
    zcol[i]  cell-integrated column sum of kbar(x_i, y*) over the grid,
             i.e. sum_j P_ij mu_j plus Gauss-Legendre corrections on the
             cells near the singular reflected corner (t_i, s_i)
    ztail[i] analytic zero-order tail, (1/2) int_{|y|>R_out} K_env(|x_i-y|) dy
    cs, ct   self-cell correction coefficients: the omitted quadratic-term
             mass is cs_i (dw_s)^2 + ct_i (dw_t)^2 with one-sided dw
    es, et   one-sided neighbor node index per axis (-1 when absent)
    """

    grid: Grid
    kernel: RadialKernel
    rule: QuadratureRule
    D: np.ndarray
    P: np.ndarray
    zcol: np.ndarray
    ztail: np.ndarray
    cs: np.ndarray
    ct: np.ndarray
    es: np.ndarray
    et: np.ndarray
    r_near_cells: int

    @property
    def zero_order(self) -> np.ndarray:
        """Per-node zero-order coefficient including the exterior tail."""
        return self.zcol + self.ztail

    def kbar_entry(self, i: int, j: int) -> float:
        if i == j:
            raise TableError("diagonal kbar entries are not stored")
        return float(self.D[i, j] + self.P[i, j])

    def kbar_star_entry(self, i: int, j: int) -> float:
        return float(self.P[i, j])

    def difference_entry(self, i: int, j: int) -> float:
        if i == j:
            raise TableError("diagonal difference entries are not stored")
        return float(self.D[i, j])


def _gl_cell(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * x, 0.5 * w  # scaled to a unit cell


def _zcol_corrections(grid: Grid, kernel: RadialKernel, rule: QuadratureRule,
                      P: np.ndarray, r_near_cells: int) -> np.ndarray:
    """Upgrades of the midpoint zero-order column sums, per row.

    Two pieces, both integrals of J(s,t,b,a) a^(m-1) b^(m-1) (the omega^2 of
    kbar cancels against the orbit measure):

    - cells near the row's singular reflected corner (t_i, s_i) are
      re-integrated with tensor Gauss-Legendre and the midpoint value
      replaced;
    - the diagonal half-cells {q h <= b < a <= (q+1) h}, which belong to no
      node, are integrated and added (for rows far from the cone this strip
      is where the zero-order mass concentrates).
    """
    h = grid.h
    m = grid.m
    n = grid.n_nodes
    corr = np.zeros(n)
    r_near = r_near_cells * h
    tiers = ((3.0 * h, 24), (8.0 * h, 16), (r_near, 12))

    cand = np.where(grid.cone_dist * math.sqrt(2.0) <= r_near + 2.0 * h)[0]
    for irow in cand:
        s_i, t_i = grid.s[irow], grid.t[irow]
        dist = np.hypot(grid.s - t_i, grid.t - s_i)
        prev = 0.0
        for radius, order in tiers:
            sel = np.where((dist > prev) & (dist <= radius))[0]
            prev = radius
            if sel.size == 0:
                continue
            gx, gw = _gl_cell(order)
            aa = grid.s[sel][:, None, None] + h * gx[None, :, None]
            bb = grid.t[sel][:, None, None] + h * gx[None, None, :]
            vals = j_values(kernel, s_i, t_i, bb, aa, rule)
            if m > 1:
                vals = vals * aa ** (m - 1) * bb ** (m - 1)
            ww = gw[:, None] * gw[None, :]
            cell = (vals * ww).sum(axis=(1, 2)) * h * h
            corr[irow] += float(cell.sum() - (P[irow, sel] * grid.weights[sel]).sum())

    # diagonal half-cell triangles (the wedge along the cone belongs to no
    # node cell), clipped exactly at the rim, plus disk/staircase slivers
    corr += _wedge_integrals(grid, kernel, rule, rows=None, order=10)
    corr += _rim_fragment_integrals(grid, kernel, rule)
    # refinement pass near the cone, where the reflected corner sits close
    # to the wedge
    near_rows = np.where(grid.cone_dist <= 8.0 * h)[0]
    for irow in near_rows:
        rowarr = np.array([irow])
        coarse = _wedge_integrals(grid, kernel, rule, rows=rowarr, order=10,
                                  only_near=8.0 * h)
        fine = _wedge_integrals(grid, kernel, rule, rows=rowarr, order=10,
                                only_near=8.0 * h, n_panels=4)
        corr[irow] += float(fine[irow] - coarse[irow])
    return corr


def _wedge_quad_points(grid: Grid, q: float, order: int, n_panels: int):
    """Quadrature points/weights for the half-cell triangle above q h,
    truncated by the disk |y| = R_out, via the collapsed map
    (a, b) = (q h + h xi, q h + h xi eta) with eta rescaled under the rim.

    Returns (a, b, w) with w carrying the jacobian h^2 xi eta_max(xi) and
    the a^(m-1) b^(m-1) orbit factor left to the caller.
    """
    h = grid.h
    Rq = grid.R_out
    xi_cap = min(1.0, (math.sqrt(max(Rq * Rq - q * q, 0.0)) - q) / h) if q < Rq else 0.0
    if xi_cap <= 0.0:
        return (np.empty(0),) * 3
    crit = (Rq / math.sqrt(2.0) - q) / h  # eta_max reaches 1 here
    xi_star = min(max(crit, 0.0), xi_cap)
    gx, gw = _gl_unit(order)
    pts_a, pts_b, pts_w = [], [], []
    for lo_all, hi_all, clipped in ((0.0, xi_star, False), (xi_star, xi_cap, True)):
        if hi_all - lo_all <= 1e-15:
            continue
        step = (hi_all - lo_all) / n_panels
        for p in range(n_panels):
            lo = lo_all + p * step
            xi = lo + step * gx
            wxi = step * gw
            a = q + h * xi
            if clipped:
                eta_max = np.clip((np.sqrt(np.maximum(Rq * Rq - a * a, 0.0)) - q)
                                  / (h * xi), 0.0, 1.0)
            else:
                eta_max = np.ones_like(xi)
            for pp in range(n_panels):
                e_lo = pp / n_panels
                e_step = 1.0 / n_panels
                eta_t = e_lo + e_step * gx
                b = q + h * xi[:, None] * (eta_max[:, None] * eta_t[None, :])
                w = (h * h * xi * eta_max * wxi)[:, None] * (e_step * gw)[None, :]
                pts_a.append(np.broadcast_to(a[:, None], b.shape).ravel())
                pts_b.append(b.ravel())
                pts_w.append(w.ravel())
    return (np.concatenate(pts_a), np.concatenate(pts_b), np.concatenate(pts_w))


def _wedge_integrals(grid: Grid, kernel: RadialKernel, rule: QuadratureRule,
                     rows: np.ndarray | None, order: int = 10,
                     n_panels: int = 1, only_near: float | None = None) -> np.ndarray:
    """Integrals of J(s,t,b,a) a^(m-1) b^(m-1) over the diagonal wedge
    triangles (rim-clipped), summed per requested row."""
    h = grid.h
    m = grid.m
    out = np.zeros(grid.n_nodes)
    if rows is None:
        rows = np.arange(grid.n_nodes)
    n_tri = int(math.ceil(grid.R_out / h))
    pts = []
    for qi in range(n_tri):
        q = qi * h
        if only_near is not None:
            centroid = q + 2.0 / 3.0 * h
            d = math.hypot(centroid - grid.t[rows[0]], centroid - grid.s[rows[0]])
            if d > only_near:
                continue
        pts.append(_wedge_quad_points(grid, q, order, n_panels))
    if not pts:
        return out
    aa = np.concatenate([p[0] for p in pts])
    bb = np.concatenate([p[1] for p in pts])
    ww = np.concatenate([p[2] for p in pts])
    if m > 1:
        ww = ww * aa ** (m - 1) * bb ** (m - 1)
    chunk = max(1, 2 ** 21 // max(1, aa.size))
    for lo in range(0, rows.size, chunk):
        sel = rows[lo:lo + chunk]
        vals = j_values(kernel, grid.s[sel][:, None], grid.t[sel][:, None],
                        bb[None, :], aa[None, :], rule)
        out[sel] = vals @ ww
    return out


def _gl_unit(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _rim_fragment_geometry(grid: Grid, n_sub: int = 6, n_ind: int = 8):
    """Signed sub-cell fragments reconciling the cell/strip tiling with the
    exact disk truncation at |y| = R_out.

    Full squares of center-inside cells overhang the disk (their outside
    sliver is also counted by the tail): negative fragments.  Squares with
    center outside but a corner inside, and diagonal squares whose wedge is
    cut by the rim, contribute uncovered interior mass: positive fragments.
    Returns centroid coordinates (a, b) and signed areas, row-independent.
    """
    h = grid.h
    n_max = int(math.ceil(grid.R_out / h)) + 1
    fa, fb, farea = [], [], []
    for i in range(n_max):
        for j in range(i):
            a0, b0 = i * h, j * h
            rmin = math.hypot(a0, b0)
            rmax = math.hypot(a0 + h, b0 + h)
            if rmax <= grid.R_out or rmin >= grid.R_out:
                continue
            center_in = math.hypot(a0 + 0.5 * h, b0 + 0.5 * h) <= grid.R_out
            # center-inside cells carry a full square in the column sums but
            # overhang the disk (sliver also counted by the tail): subtract;
            # center-outside squares have uncovered inside mass: add
            inside_sign = -1.0 if center_in else +1.0
            # near-diagonal rim squares can sit close to a row's singular
            # reflected corner; resolve them finer
            ns = 4 * n_sub if (i - j) <= 4 else n_sub
            sub = h / ns
            pts = (np.arange(n_ind) + 0.5) / n_ind * sub
            for si in range(ns):
                for sj in range(ns):
                    aa = a0 + si * sub + pts
                    bb = b0 + sj * sub + pts
                    A, B = np.meshgrid(aa, bb, indexing="ij")
                    disk = A ** 2 + B ** 2 <= grid.R_out ** 2
                    want = disk if inside_sign > 0 else ~disk
                    cnt = int(want.sum())
                    if cnt == 0:
                        continue
                    area = cnt / (n_ind * n_ind) * sub * sub
                    fa.append(float(A[want].mean()))
                    fb.append(float(B[want].mean()))
                    farea.append(inside_sign * area)
    return (np.asarray(fa), np.asarray(fb), np.asarray(farea))


def _rim_fragment_integrals(grid: Grid, kernel: RadialKernel,
                            rule: QuadratureRule) -> np.ndarray:
    fa, fb, farea = _rim_fragment_geometry(grid)
    out = np.zeros(grid.n_nodes)
    if fa.size == 0:
        return out
    m = grid.m
    meas = farea.copy()
    if m > 1:
        meas = meas * fa ** (m - 1) * fb ** (m - 1)
    frag_rule = rule if m == 1 else gauss_jacobi_rule(min(rule.order, 16), m)
    for lo in range(0, grid.n_nodes, _ROW_CHUNK):
        hi = min(grid.n_nodes, lo + _ROW_CHUNK)
        vals = j_values(kernel, grid.s[lo:hi][:, None], grid.t[lo:hi][:, None],
                        fb[None, :], fa[None, :], frag_rule)
        out[lo:hi] = vals @ meas
    return out


def _self_cell_coefficients(grid: Grid, kernel: RadialKernel, rule: QuadratureRule,
                            n_theta: int = 16, n_rad: int = 12):
    """Exact constants of the omitted self-cell quadratic mass.

    cs_i, ct_i with  (1/2) mu_i int_cell (dw . z)^2 D(x, x+z) d(orbit measure)
    ~= cs_i (dw_s)^2 + ct_i (dw_t)^2, integrated in polar coordinates over
    the square cell (integrand ~ |z|^(1 - 2 gamma + 2(m-1)), integrable).
    """
    h = grid.h
    m = grid.m
    theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
    rmax = 0.5 * h / np.maximum(np.abs(np.cos(theta)), np.abs(np.sin(theta)))
    gx, gw = np.polynomial.legendre.leggauss(n_rad)
    r01 = 0.5 * (gx + 1.0)
    w01 = 0.5 * gw
    rr = rmax[:, None] * r01[None, :]              # (n_theta, n_rad)
    wr = rmax[:, None] * w01[None, :]
    zs = rr * np.cos(theta)[:, None]
    zt = rr * np.sin(theta)[:, None]
    cs = np.zeros(grid.n_nodes)
    ct = np.zeros(grid.n_nodes)
    for lo in range(0, grid.n_nodes, _ROW_CHUNK):
        hi = min(grid.n_nodes, lo + _ROW_CHUNK)
        S = grid.s[lo:hi][:, None, None]
        T = grid.t[lo:hi][:, None, None]
        aa = S + zs[None, :, :]
        bb = T + zt[None, :, :]
        ok = (aa > 0.0) & (bb >= 0.0) & (aa > bb)
        aa_safe = np.where(ok, aa, S)
        bb_safe = np.where(ok, bb, 0.0)
        with np.errstate(invalid="ignore"):
            direct = j_values(kernel, S, T, aa_safe, bb_safe, rule)
            swapped = j_values(kernel, S, T, bb_safe, aa_safe, rule)
        dens = np.where(ok, direct - swapped, 0.0)
        if m > 1:
            dens = dens * aa_safe ** (m - 1) * bb_safe ** (m - 1)
        meas = (rr * wr)[None, :, :] * (2.0 * math.pi / n_theta)
        cs[lo:hi] = (dens * zs[None] ** 2 * meas).sum(axis=(1, 2))
        ct[lo:hi] = (dens * zt[None] ** 2 * meas).sum(axis=(1, 2))
    scale = 0.5 * grid.weights / h ** 2
    return np.maximum(cs, 0.0) * scale, np.maximum(ct, 0.0) * scale


def _one_sided_neighbors(grid: Grid):
    """Per node, a neighbor strictly inside the octant per axis (-1 if none)."""
    idx = grid.node_index()
    n = grid.n_nodes
    es = np.full(n, -1, dtype=np.int64)
    et = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        i, j = int(grid.ii[k]), int(grid.jj[k])
        for cand in ((i + 1, j), (i - 1, j)):
            if cand in idx:
                es[k] = idx[cand]
                break
        for cand in ((i, j + 1), (i, j - 1)):
            if cand in idx:
                et[k] = idx[cand]
                break
    return es, et


def build_kernel_table(grid: Grid, kernel: RadialKernel,
                       rule: QuadratureRule | None = None,
                       assume_positive: bool = False,
                       mem_cap_gb: float = 6.0,
                       r_near_cells: int = 16) -> KernelTable:
    """Cache kbar, kbar-star and their difference over all node pairs.

    Refuses kernels that fail the sqrt-convexity check unless
    assume_positive=True, and refuses grids whose dense pair tables would
    exceed mem_cap_gb (use a larger h).
    """
    n = grid.n_nodes
    need_gb = 2.0 * n * n * 8.0 / 2 ** 30
    if need_gb > mem_cap_gb:
        raise TableError(
            f"pair tables need {need_gb:.1f} GiB > cap {mem_cap_gb} GiB; increase h")
    if not assume_positive:
        tau_hi = min(4.0 * grid.R_out ** 2, 1e3)
        report = check_sqrt_convexity(kernel, np.geomspace(1e-3, tau_hi, 256))
        if report.verdict == "fails":
            raise PreconditionError(
                "kernel failed the sqrt-convexity check; pass assume_positive=True "
                "to build the table anyway")
    if rule is None:
        rule = gauss_jacobi_rule(32, kernel.m)

    om2 = omega_sphere(grid.m) ** 2
    D = np.empty((n, n))
    P = np.empty((n, n))
    for lo in range(0, n, _ROW_CHUNK):
        hi = min(n, lo + _ROW_CHUNK)
        S = grid.s[lo:hi][:, None]
        T = grid.t[lo:hi][:, None]
        direct = j_values(kernel, S, T, grid.s[None, :], grid.t[None, :], rule)
        swapped = j_values(kernel, S, T, grid.t[None, :], grid.s[None, :], rule)
        P[lo:hi] = swapped / om2
        diag = np.arange(lo, hi)
        direct[diag - lo, diag] = swapped[diag - lo, diag]  # zero difference on the diagonal
        D[lo:hi] = (direct - swapped) / om2

    zcol = P @ grid.weights
    zcol += _zcol_corrections(grid, kernel, rule, P, r_near_cells)
    ztail = 0.5 * exterior_tail_coefficient(kernel, grid.s, grid.t, grid.R_out)
    cs, ct = _self_cell_coefficients(grid, kernel, rule)
    es, et = _one_sided_neighbors(grid)
    return KernelTable(grid=grid, kernel=kernel, rule=rule, D=D, P=P,
                       zcol=zcol, ztail=np.asarray(ztail), cs=cs, ct=ct,
                       es=es, et=et, r_near_cells=r_near_cells)


# ---------------------------------------------------------------------------
# Interactions and the total energy
# ---------------------------------------------------------------------------

def _as_index(grid: Grid, sel) -> np.ndarray:
    sel = np.asarray(sel)
    if sel.dtype == bool:
        if sel.shape != (grid.n_nodes,):
            raise TableError("mask length does not match the grid")
        return np.where(sel)[0]
    idx = sel.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= grid.n_nodes):
        raise TableError("node index outside the table")
    return idx


def interaction(profile: OddProfile, A, B, table: KernelTable) -> float:
    """Discrete I(A, B): pairwise over A x B with the tabulated kernels.

    The quadratic term skips the diagonal (self pairs are handled by the
    table's self-cell coefficients at the energy level); the squared term
    includes it.
    """
    ia = _as_index(profile.grid, A)
    ib = _as_index(profile.grid, B)
    w = profile.values
    mu = profile.grid.weights
    wa, wb = w[ia], w[ib]
    ma, mb = mu[ia], mu[ib]
    total = 0.0
    for lo in range(0, ia.size, _ROW_CHUNK):
        hi = min(ia.size, lo + _ROW_CHUNK)
        sub = np.ix_(ia[lo:hi], ib)
        dw2 = (wa[lo:hi, None] - wb[None, :]) ** 2
        sq = wa[lo:hi, None] ** 2 + wb[None, :] ** 2
        mm = ma[lo:hi, None] * mb[None, :]
        total += float((2.0 * dw2 * table.D[sub] * mm).sum()
                       + (4.0 * sq * table.P[sub] * mm).sum())
    return total


def _self_cell_energy(table: KernelTable, w_full: np.ndarray, rows: np.ndarray) -> float:
    # one-sided quadratic form; nodes without an in-octant neighbor on an
    # axis simply drop that axis' correction
    val = 0.0
    for nb, c in ((table.es, table.cs), (table.et, table.ct)):
        have = rows[nb[rows] >= 0]
        wn = w_full[nb[have]]
        val += float((c[have] * (wn - w_full[have]) ** 2).sum())
    return val


def total_energy(profile: OddProfile, S: float, table: KernelTable,
                 potential: Potential | None = None) -> EnergyBreakdown:
    """Energy over B_S per the odd-sector rewriting, with tail and self-cell
    corrections; the exterior band carries the profile's implicit zeros."""
    if potential is None:
        potential = allen_cahn()
    grid = profile.grid
    if S > grid.R_out:
        raise DomainError("evaluation radius exceeds the grid extent R_out")
    w = profile.values
    mu = grid.weights
    inside = grid.inside(S)
    iin = np.where(inside)[0]
    iout = np.where(~inside)[0]

    quad_ii = 0.0
    quad_io = 0.0
    zin_cols = np.zeros(iin.size)
    for lo in range(0, iin.size, _ROW_CHUNK):
        hi = min(iin.size, lo + _ROW_CHUNK)
        rows = iin[lo:hi]
        dii = table.D[np.ix_(rows, iin)]
        dw = w[rows][:, None] - w[iin][None, :]
        mm = mu[rows][:, None] * mu[iin][None, :]
        quad_ii += 0.5 * float((dw ** 2 * dii * mm).sum())
        if iout.size:
            dio = table.D[np.ix_(rows, iout)]
            dwo = w[rows][:, None] - w[iout][None, :]
            mmo = mu[rows][:, None] * mu[iout][None, :]
            quad_io += float((dwo ** 2 * dio * mmo).sum())
        zin_cols[lo:hi] = table.P[np.ix_(rows, iin)] @ mu[iin]

    w2mu_in = w[iin] ** 2 * mu[iin]
    zero_in_in = 2.0 * float((w2mu_in * zin_cols).sum())
    zero_in_out = 2.0 * float((w2mu_in * (table.zcol[iin] - zin_cols)).sum())
    tail_in = 2.0 * float((w2mu_in * table.ztail[iin]).sum())
    zero_out = 0.0
    if iout.size:
        part = table.P[np.ix_(iout, iin)] @ mu[iin]
        zero_out = 2.0 * float((w[iout] ** 2 * mu[iout] * part).sum())

    lc = _self_cell_energy(table, w, iin)
    pot = 2.0 * float((np.asarray(potential.G(w[iin])) * mu[iin]).sum())
    return EnergyBreakdown(
        kinetic_in_in=quad_ii + lc + zero_in_in,
        kinetic_in_out=quad_io + zero_in_out + tail_in + zero_out,
        potential=pot,
        S=float(S), h=grid.h, R=grid.R)


# ---------------------------------------------------------------------------
# Differentiable objective for the minimizer (support radius = grid.R)
# ---------------------------------------------------------------------------

class EnergyModel:
    """E(u) = E(w_u, B_R) for u living on the nodes inside B_R.

    Precomputes the in-block of the difference kernel, the full-row kernel
    masses, the zero-order coefficients (column sums + tail) and the sparse
    self-cell quadratic form, so that one dense matvec per point yields both
    the value and the exact gradient.  The Euler-Lagrange identity
    grad E = 2 mu (L u - f(u)) ties the gradient to the assembled operator.
    """

    def __init__(self, table: KernelTable, potential: Potential):
        grid = table.grid
        self.table = table
        self.grid = grid
        self.potential = potential
        self.iin = np.where(grid.inside(grid.R))[0]
        self.mu = grid.weights[self.iin]
        self.D_in = np.ascontiguousarray(table.D[np.ix_(self.iin, self.iin)])
        self.dmass_full = table.D[self.iin, :] @ grid.weights
        self.Z = table.zero_order[self.iin]
        self.lc = self._lc_matrix()

    def _lc_matrix(self) -> sp.csr_matrix:
        grid = self.grid
        pos = np.full(grid.n_nodes, -1, dtype=np.int64)
        pos[self.iin] = np.arange(self.iin.size)
        rows, cols, vals = [], [], []

        def add(i, j, v):
            rows.append(i)
            cols.append(j)
            vals.append(v)

        for nb, cf in ((self.table.es, self.table.cs), (self.table.et, self.table.ct)):
            for local, k in enumerate(self.iin):
                other = nb[k]
                c = cf[k]
                if other < 0 or c == 0.0:
                    continue
                lo = pos[other]
                add(local, local, 2.0 * c)
                if lo >= 0:
                    add(lo, lo, 2.0 * c)
                    add(local, lo, -2.0 * c)
                    add(lo, local, -2.0 * c)
        n = self.iin.size
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def value(self, u: np.ndarray) -> float:
        mu = self.mu
        umu = u * mu
        Dv = self.D_in @ umu
        quad = float((u * umu * self.dmass_full).sum() - umu @ Dv)
        zero = 2.0 * float((u * umu * self.Z).sum())
        lc = 0.5 * float(u @ (self.lc @ u))
        pot = 2.0 * float((np.asarray(self.potential.G(u)) * mu).sum())
        return quad + zero + lc + pot

    def value_and_grad(self, u: np.ndarray):
        mu = self.mu
        umu = u * mu
        Dv = self.D_in @ umu
        lcu = self.lc @ u
        quad = float((u * umu * self.dmass_full).sum() - umu @ Dv)
        zero = 2.0 * float((u * umu * self.Z).sum())
        lc = 0.5 * float(u @ lcu)
        pot = 2.0 * float((np.asarray(self.potential.G(u)) * mu).sum())
        gprime = -np.asarray(self.potential.f(u))
        grad = 2.0 * mu * (u * self.dmass_full - Dv + 2.0 * u * self.Z + gprime) + lcu
        return quad + zero + lc + pot, grad

    def grad(self, u: np.ndarray) -> np.ndarray:
        return self.value_and_grad(u)[1]

    def embed(self, u: np.ndarray) -> OddProfile:
        vals = np.zeros(self.grid.n_nodes)
        vals[self.iin] = u
        return OddProfile(self.grid, vals)

    def restrict(self, profile: OddProfile) -> np.ndarray:
        return profile.values[self.iin].copy()
