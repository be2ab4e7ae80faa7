"""Conjugated Dirichlet problems on the fixed template domains.

The twisted problem is pulled back to the untwisted template, where the
geometry is frozen and the twist only enters through the conductivity ``B``.
A node-centred Cartesian grid covers the template; interface and sphere
crossings are handled with symmetric Shortley-Weller cuts, so the system is
symmetric positive definite and is solved by conjugate gradients with a
symmetric Gauss-Seidel preconditioner.

Discretization (per unit ``h``): the energy ``int grad u . B grad u`` is split
into an edge part, ``sum_e k_e (u_a - u_b)^2`` with ``k_e`` the mean of
``B_dd`` over the four cells around the edge, and a cross part,
``sum_c g_c^T B_off g_c`` with ``g_c`` the cell-averaged difference vector.
Cross terms are kept only in cells whose eight corners have nodal values.
By Jensen's inequality each such cell contributes at least ``g^T B g >= 0``,
which keeps the operator positive definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fields import (
    DomainError,
    LogScale,
    OscillatingGraph,
    TwistedSzulkin,
    coefficient_array,
    combined_rho,
    szulkin,
)
from . import _kernels as K_

OUT, OTHER, FIXED, UNKNOWN = 0, 1, 2, 3
THETA_MIN = 1e-3
_DIRS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])


class SolverError(RuntimeError):
    """CG did not converge or met a non-positive curvature."""


@dataclass
class SolveSpec:
    """A conjugated Dirichlet problem.

    Twist: template ``{side * s > 0}`` inside the ball ``|x| < K`` (minus the
    ball ``|x| <= inner`` when ``inner > 0``), data ``0`` on the interface and
    the outer data on the spheres.  Graph: ``{side * z > 0}`` inside the box
    ``[-K, K]^2 x [0, K]`` (mirrored for the minus side), data on the faces.
    """

    kind: TwistedSzulkin | OscillatingGraph
    scale: LogScale | None = None
    K: float = 2.0
    h: float = 1.0 / 48.0
    data: str | None = None
    tolerance: float = 1e-8
    inner: float = 0.0
    max_iter: int = 100_000

    def __post_init__(self):
        if self.scale is not None and not isinstance(self.scale, LogScale):
            self.scale = LogScale(float(self.scale))
        m = self.K / self.h
        if self.h <= 0 or abs(m - round(m)) > 1e-9 * m:
            raise ValueError(f"h={self.h} must divide K={self.K}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.data is None:
            self.data = "szulkin" if isinstance(self.kind, TwistedSzulkin) else "linear_z"
        if self.data not in ("szulkin", "linear_z"):
            raise ValueError(f"unknown boundary data {self.data!r}")
        if not 0.0 <= self.inner < self.K:
            raise ValueError("inner radius must lie in [0, K)")
        if isinstance(self.kind, OscillatingGraph) and self.inner:
            raise ValueError("the graph template has no inner sphere")
        if not self.is_identity:
            if self.scale is None:
                raise DomainError("a twisted or oscillating template needs a scale")
            far = self.K * (math.sqrt(3.0) if isinstance(self.kind, TwistedSzulkin) else math.sqrt(2.0))
            rho = float(combined_rho(self.scale, np.array(far)))
            rho0 = self.kind.profile.rho0 if isinstance(self.kind, TwistedSzulkin) else math.log(100.0)
            if rho < rho0:
                raise DomainError(f"combined log-scale {rho:.4g} at the grid corner is inside the blend (< {rho0:.4g})")

    @property
    def n(self) -> int:
        return int(round(self.K / self.h))

    @property
    def is_identity(self) -> bool:
        if isinstance(self.kind, TwistedSzulkin):
            return self.kind.profile.is_none
        return not self.kind.oscillating

    def describe(self) -> dict:
        return {
            "kind": self.kind.describe(),
            "rho": None if self.scale is None else self.scale.rho,
            "K": self.K,
            "h": self.h,
            "data": self.data,
            "tolerance": self.tolerance,
            "inner": self.inner,
        }


@dataclass
class CutCells:
    """Shortley-Weller cuts: unknown number, direction, fraction and boundary type."""

    node: np.ndarray
    direction: np.ndarray
    theta: np.ndarray
    on_interface: np.ndarray


@dataclass
class GridSolution:
    spec: SolveSpec
    origin: np.ndarray
    status: np.ndarray
    values: np.ndarray
    residual: float
    iterations: int
    cuts: CutCells
    history: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return self.spec.h

    def points(self, ijk):
        return self.origin + self.spec.h * np.asarray(ijk, dtype=float)

    def unknown_points(self):
        ijk = np.argwhere(self.status == UNKNOWN)
        return self.points(ijk), self.values[tuple(ijk.T)]

    @property
    def min_value(self) -> float:
        return float(np.min(self.values[self.status == UNKNOWN]))

    @property
    def max_principle_ok(self) -> bool:
        """Nonnegative data gives nonnegative nodal values (to the solver tolerance)."""
        scale = float(np.nanmax(np.abs(self.values)))
        return self.min_value >= -10.0 * self.spec.tolerance * max(scale, 1.0)

    def value_at_nodes(self, ijk):
        return self.values[tuple(np.asarray(ijk).T)]


# ---------------------------------------------------------------------------
# geometry of the template grid


def _box(spec: SolveSpec):
    n = spec.n
    if isinstance(spec.kind, TwistedSzulkin):
        lo = np.array([-n, -n, -n])
        shape = (2 * n + 1,) * 3
    else:
        lo = np.array([-n, -n, 0 if spec.kind.side > 0 else -n])
        shape = (2 * n + 1, 2 * n + 1, n + 1)
    return lo, shape


def _data(spec: SolveSpec, x):
    side = spec.kind.side
    if spec.data == "szulkin":
        return side * szulkin(x)
    return side * x[..., 2]


def _classify(spec: SolveSpec, lo, shape):
    n = spec.n
    I, J, L = (np.arange(s) + o for s, o in zip(shape, lo))
    status = np.zeros(shape, dtype=np.int8)
    values = np.full(shape, np.nan)
    h = spec.h
    side = spec.kind.side
    if isinstance(spec.kind, TwistedSzulkin):
        m_in = spec.inner / h
        for a, i in enumerate(I):
            q2 = (i * i + J[:, None] ** 2 + L[None, :] ** 2).astype(float)
            x = np.stack(np.broadcast_arrays(i * h, J[:, None] * h, L[None, :] * h), axis=-1)
            f = side * szulkin(x)
            inside = q2 < n * n
            if spec.inner > 0:
                inside &= q2 > m_in * m_in
                on_sphere = (q2 == n * n) | (q2 == m_in * m_in)
            else:
                on_sphere = q2 == n * n
            unknown = inside & (f > 0)
            fixed = (on_sphere & (f >= 0)) | (inside & (f == 0))
            other = (inside | on_sphere) & (f < 0)
            st = np.where(unknown, UNKNOWN, np.where(fixed, FIXED, np.where(other, OTHER, OUT)))
            status[a] = st
            values[a] = np.where(other, 0.0, np.nan)
            fx = st == FIXED
            values[a][fx] = np.where(f[fx] == 0, 0.0, _data(spec, x[fx]))
    else:
        zs = L * h
        interior = (np.abs(I)[:, None, None] < n) & (np.abs(J)[None, :, None] < n) \
            & (side * zs[None, None, :] > 0) & (side * zs[None, None, :] < spec.K)
        status[:] = np.where(interior, UNKNOWN, FIXED)
        x = np.stack(np.meshgrid(I * h, J * h, zs, indexing="ij"), axis=-1)
        values[:] = np.where(interior, np.nan, _data(spec, x))
        values[:, :, 0 if side > 0 else -1] = 0.0
    return status, values


def _edge_roots(spec: SolveSpec, x0, dvec):
    """Fraction ``t`` in (0, 1] where ``side * s(x0 + t h d)`` first reaches zero."""
    side = spec.kind.side
    a = np.zeros(len(x0))
    b = np.ones(len(x0))
    for _ in range(64):
        m = 0.5 * (a + b)
        pos = side * szulkin(x0 + (m * spec.h)[:, None] * dvec) > 0
        a = np.where(pos, m, a)
        b = np.where(pos, b, m)
    return b


def _sphere_fraction(x0, dvec, h, radius, outward):
    # x0 + t h d reaches |x| = radius; d is a signed unit axis vector
    c = np.sum(dvec * x0, axis=1)  # component of x0 along d
    rest = np.sum(x0 * x0, axis=1) - c * c
    disc = radius * radius - rest
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.maximum(disc, 0.0))
    # outward: the larger solution of (c + t h)^2 = disc; inward: the smaller positive
    t = (root - c) / h if outward else (-root - c) / h
    if not outward:
        t = np.where((t > 0) & (disc >= 0), t, (root - c) / h)
    return np.where(disc >= 0, t, np.inf)


def _cuts(spec, lo, ijk, nb_status):
    """Fractions and boundary values of every edge from an unknown to a non-grid value."""
    h = spec.h
    rows, dirs = np.nonzero((nb_status == OUT) | (nb_status == OTHER))
    theta = np.ones(len(rows))
    gval = np.zeros(len(rows))
    on_interface = np.zeros(len(rows), dtype=bool)
    if len(rows) == 0:
        return CutCells(rows.astype(np.int32), dirs.astype(np.int8), theta, on_interface), gval
    if not isinstance(spec.kind, TwistedSzulkin):
        raise AssertionError("the graph template has no cut edges")
    # integer node coordinates times h, exactly as in the classification
    n0 = lo + ijk[rows]
    n1 = n0 + _DIRS[dirs]
    x0 = n0 * h
    x1 = n1 * h
    dvec = _DIRS[dirs].astype(float)
    side = spec.kind.side
    best = np.full(len(rows), np.inf)
    sign_change = side * szulkin(x1) <= 0
    if np.any(sign_change):
        t = _edge_roots(spec, x0[sign_change], dvec[sign_change])
        best[sign_change] = t
        on_interface[sign_change] = True
    q1 = np.sum(n1.astype(np.int64) ** 2, axis=1)
    outside = q1 > spec.n**2
    if np.any(outside):
        t = _sphere_fraction(x0[outside], dvec[outside], h, spec.K, True)
        sel = np.flatnonzero(outside)
        take = t < best[sel]
        best[sel[take]] = t[take]
        on_interface[sel[take]] = False
    if spec.inner > 0:
        inside = q1 < (spec.inner / h) ** 2
        if np.any(inside):
            t = _sphere_fraction(x0[inside], dvec[inside], h, spec.inner, False)
            sel = np.flatnonzero(inside)
            take = t < best[sel]
            best[sel[take]] = t[take]
            on_interface[sel[take]] = False
    if not np.all(np.isfinite(best)):
        raise AssertionError("cut edge without a boundary crossing")
    best = np.clip(best, 0.0, 1.0)
    pts = x0 + (best * h)[:, None] * dvec
    sphere = ~on_interface
    gval[sphere] = _data(spec, pts[sphere])
    theta = np.maximum(best, THETA_MIN)
    return CutCells(rows.astype(np.int32), dirs.astype(np.int8), theta, on_interface), gval


def _cells_touching(status):
    known = status >= FIXED
    unk = status == UNKNOWN
    touch = np.zeros(tuple(s - 1 for s in status.shape), dtype=bool)
    full = np.ones_like(touch)
    for o in range(8):
        a, b, c = o & 1, (o >> 1) & 1, (o >> 2) & 1
        sl = (slice(a, a + touch.shape[0]), slice(b, b + touch.shape[1]), slice(c, c + touch.shape[2]))
        touch |= unk[sl]
        full &= known[sl]
    return touch, full & touch


def _cell_coefficients(spec, lo, cells, chunk=400_000):
    diag = np.empty((len(cells), 3))
    off = np.empty((len(cells), 3))
    for s in range(0, len(cells), chunk):
        c = cells[s:s + chunk]
        centers = (lo + c + 0.5) * spec.h
        b = coefficient_array(spec.kind, spec.scale, centers)
        diag[s:s + chunk] = np.stack([b[:, 0, 0], b[:, 1, 1], b[:, 2, 2]], axis=1)
        off[s:s + chunk] = np.stack([b[:, 0, 1], b[:, 0, 2], b[:, 1, 2]], axis=1)
    return diag, off


@dataclass
class Assembly:
    lo: np.ndarray
    status: np.ndarray
    values: np.ndarray
    ijk: np.ndarray
    idx: np.ndarray
    nb: np.ndarray
    diag: np.ndarray
    off: np.ndarray
    rhs: np.ndarray
    corners: np.ndarray
    boff: np.ndarray
    cuts: CutCells


def assemble(spec: SolveSpec) -> Assembly:
    lo, shape = _box(spec)
    status, values = _classify(spec, lo, shape)
    ijk = np.argwhere(status == UNKNOWN).astype(np.int32)
    n = len(ijk)
    if n == 0:
        raise DomainError("the template grid has no interior nodes")
    idx = np.full(shape, -1, dtype=np.int32)
    idx[tuple(ijk.T)] = np.arange(n, dtype=np.int32)
    nbr = ijk[:, None, :] + _DIRS[None, :, :]
    nb_status = status[nbr[..., 0], nbr[..., 1], nbr[..., 2]]
    nb = idx[nbr[..., 0], nbr[..., 1], nbr[..., 2]]

    touch, full = _cells_touching(status)
    if spec.is_identity:
        kn = np.ones((n, 6))
        corners = np.zeros((0, 8), dtype=np.int32)
        boff = np.zeros((0, 3))
        cvals = None
    else:
        cells = np.argwhere(touch).astype(np.int32)
        bdiag, offc = _cell_coefficients(spec, lo, cells)
        kn = np.zeros((n, 6))
        K_.accumulate_edges(cells, bdiag, idx, kn)
        keep = full[tuple(cells.T)]
        ccells = cells[keep]
        boff = np.ascontiguousarray(offc[keep])
        corners = K_.cross_corners(ccells, idx)
        corner_ijk = ccells[:, None, :] + np.array([[o & 1, (o >> 1) & 1, (o >> 2) & 1] for o in range(8)])[None]
        cvals = values[corner_ijk[..., 0], corner_ijk[..., 1], corner_ijk[..., 2]]
        cvals = np.where(corners >= 0, 0.0, cvals)

    cuts, gval = _cuts(spec, lo, ijk, nb_status)
    rhs = np.zeros(n)
    diag = np.zeros(n)
    off = np.where(nb >= 0, kn, 0.0)
    # fixed neighbours sit at a full grid step
    fixed = nb_status == FIXED
    diag += np.sum(np.where(nb >= 0, kn, 0.0), axis=1)
    diag += np.sum(np.where(fixed, kn, 0.0), axis=1)
    fr, fd = np.nonzero(fixed)
    np.add.at(rhs, fr, kn[fr, fd] * values[nbr[fr, fd, 0], nbr[fr, fd, 1], nbr[fr, fd, 2]])
    if len(cuts.node):
        kc = kn[cuts.node, cuts.direction]
        np.add.at(diag, cuts.node, kc / cuts.theta)
        np.add.at(rhs, cuts.node, kc * gval / cuts.theta)
    if cvals is not None and len(corners):
        K_.cell_rhs(np.ascontiguousarray(cvals), corners, boff, rhs, corners)
    return Assembly(lo, status, values, ijk, idx, np.ascontiguousarray(nb), diag,
                    np.ascontiguousarray(off), rhs, corners, boff, cuts)


def solve_conjugated(spec: SolveSpec, x0=None) -> GridSolution:
    """Solve ``-div(B grad u) = 0`` on the template with the Dirichlet data named in ``spec``.

    Raises :class:`SolverError` on non-convergence within ``spec.max_iter``
    iterations or when CG meets non-positive curvature (a coefficient bug).
    """
    asm = assemble(spec)
    x = np.zeros(len(asm.rhs)) if x0 is None else np.array(x0, dtype=float)
    history = np.zeros(min(spec.max_iter, 200_000))
    status, its, rel = K_.pcg(asm.rhs, x, asm.diag, asm.nb, asm.off, asm.corners, asm.boff,
                              spec.tolerance, spec.max_iter, history)
    if status == K_.INDEFINITE:
        raise SolverError(f"non-positive curvature after {its} iterations: the operator is not SPD")
    if status == K_.MAXITER:
        raise SolverError(f"no convergence in {its} iterations (relative residual {rel:.3g})")
    # recompute the true residual
    q = np.empty_like(x)
    K_.apply_operator(x, q, asm.diag, asm.nb, asm.off, asm.corners, asm.boff)
    bnorm = float(np.linalg.norm(asm.rhs))
    true_rel = float(np.linalg.norm(asm.rhs - q)) / bnorm if bnorm else 0.0
    values = asm.values.copy()
    values[tuple(asm.ijk.T)] = x
    return GridSolution(spec, asm.lo * spec.h, asm.status, values, true_rel, int(its), asm.cuts,
                        history[:its].copy())


# ---------------------------------------------------------------------------
# flat binary export


GRID_MAGIC = "FBLAB-GRID 1"


def write_grid(path, sol: GridSolution, manifest_id: str = "", seed: int | None = None) -> Path:
    """Text header, then the int8 mask and float64 values (little-endian, C order)."""
    path = Path(path)
    shape = sol.status.shape
    header = [
        GRID_MAGIC,
        f"dims {shape[0]} {shape[1]} {shape[2]}",
        f"spacing {sol.h!r}",
        "origin " + " ".join(repr(float(v)) for v in sol.origin),
        f"mask int8 {OUT}=outside {OTHER}=interface-side {FIXED}=dirichlet {UNKNOWN}=solved",
        "values float64-le nan=outside",
        f"residual {sol.residual!r}",
        f"manifest {manifest_id}",
        f"seed {'' if seed is None else seed}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("utf-8"))
        fh.write(sol.status.astype("<i1").tobytes(order="C"))
        fh.write(sol.values.astype("<f8").tobytes(order="C"))
    return path


def read_grid(path):
    """Return ``(header dict, mask, values)`` from :func:`write_grid` output."""
    raw = Path(path).read_bytes()
    end = raw.index(b"\nend\n") + 5
    lines = raw[:end].decode("utf-8").splitlines()
    if lines[0] != GRID_MAGIC:
        raise ValueError("not an fblab grid file")
    header = {}
    for ln in lines[1:-1]:
        key, _, rest = ln.partition(" ")
        header[key] = rest
    shape = tuple(int(v) for v in header["dims"].split())
    count = int(np.prod(shape))
    mask = np.frombuffer(raw, dtype="<i1", count=count, offset=end).reshape(shape)
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=end + count).reshape(shape)
    header["spacing"] = float(header["spacing"])
    header["origin"] = np.array([float(v) for v in header["origin"].split()])
    return header, mask.copy(), values.copy()


__all__ = [
    "Assembly", "CutCells", "GridSolution", "SolveSpec", "SolverError", "assemble", "read_grid",
    "solve_conjugated", "write_grid", "OUT", "OTHER", "FIXED", "UNKNOWN",
]
