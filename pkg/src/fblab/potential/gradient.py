"""Interface gradients of grid solutions and their two-sided ratios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fields import (
    OscillatingGraph,
    TwistedSzulkin,
    graph_jet,
    szulkin_grad,
    twist_frame,
)
from ..surfgeo import default_curve
from .grid import _DIRS, FIXED, UNKNOWN, GridSolution

FIT_RADIUS = 2.5  # in grid steps
MIN_NODES = 12


class NotAdjacentError(ValueError):
    """The sample point has too few solved nodes around it."""


def interface_samples(kind, radii=(0.5, 0.75, 1.0, 1.5, 2.0), per_shell: int = 60) -> np.ndarray:
    """Template interface points at the given distances from the origin.

    Twist: ``t c`` for ``per_shell`` points ``c`` spread along the base curve.
    Graph: points of the plane ``z = 0`` at planar radius ``t``.
    """
    out = []
    if isinstance(kind, TwistedSzulkin):
        pts = default_curve().points
        pick = pts[np.linspace(0, len(pts), per_shell, endpoint=False).astype(int)]
        for t in radii:
            out.append(t * pick)
    else:
        phi = (np.arange(per_shell) + 0.5) * (2 * np.pi / per_shell)
        for t in radii:
            out.append(np.stack([t * np.cos(phi), t * np.sin(phi), np.zeros_like(phi)], axis=1))
    return np.concatenate(out)


def _normal(kind, q):
    """Unit template normal pointing into the ``side`` domain."""
    if isinstance(kind, TwistedSzulkin):
        g = szulkin_grad(q)
        return kind.side * g / np.linalg.norm(g, axis=-1, keepdims=True)
    n = np.zeros(q.shape)
    n[..., 2] = kind.side
    return n


def _interface_cut_points(sol: GridSolution):
    cache = getattr(sol, "_cut_points", None)
    if cache is None:
        ijk = np.argwhere(sol.status == UNKNOWN)
        on = sol.cuts.on_interface
        base = sol.points(ijk[sol.cuts.node[on]])
        cache = base + (sol.h * sol.cuts.theta[on])[:, None] * _DIRS[sol.cuts.direction[on]]
        sol._cut_points = cache
    return cache


def interface_gradient(sol: GridSolution, q) -> np.ndarray:
    """One-sided gradient of the solution at interface points ``q``.

    A quadratic through ``u(q) = 0`` is fitted by least squares to the solved
    and Dirichlet nodes within ``2.5 h`` of ``q`` on the solution's side, plus
    the interface crossings of the Shortley-Weller cuts (value 0).  The
    normal component of the fitted gradient is returned as a vector along
    the template normal.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    h = sol.h
    rad = FIT_RADIUS * h
    cuts = _interface_cut_points(sol)
    normals = _normal(sol.spec.kind, q)
    w = int(np.ceil(FIT_RADIUS))
    out = np.empty_like(q)
    shape = np.array(sol.status.shape)
    for a, (pt, nrm) in enumerate(zip(q, normals)):
        c = np.rint((pt - sol.origin) / h).astype(int)
        lo = np.maximum(c - w, 0)
        hi = np.minimum(c + w + 1, shape)
        sub = tuple(slice(l, u) for l, u in zip(lo, hi))
        st = sol.status[sub]
        ijk = np.argwhere((st == UNKNOWN) | (st == FIXED)) + lo
        x = sol.points(ijk) - pt
        keep = np.linalg.norm(x, axis=1) <= rad
        x, u = x[keep], sol.values[tuple(ijk[keep].T)]
        if len(x) < MIN_NODES:
            raise NotAdjacentError(f"only {len(x)} solved nodes within {FIT_RADIUS} h of {pt}")
        near = cuts[np.all(np.abs(cuts - pt) <= rad, axis=1)] - pt
        near = near[np.linalg.norm(near, axis=1) <= rad]
        d = np.concatenate([x, near])
        val = np.concatenate([u, np.zeros(len(near))])
        dx, dy, dz = d.T / h
        # the solution's O(h) gradient noise near cuts dominates, and a
        # quadratic averages it better than a cubic
        basis = np.stack([dx, dy, dz, dx * dx, dy * dy, dz * dz, dx * dy, dx * dz, dy * dz], axis=1)
        coef, *_ = np.linalg.lstsq(basis, val, rcond=None)
        grad = coef[:3] / h
        out[a] = np.dot(grad, nrm) * nrm
    return out


def _physical_factor(kind, scale, q):
    """``D Psi^{-T}`` at template points, ``Psi`` the template-to-physical map."""
    if isinstance(kind, TwistedSzulkin):
        jac = twist_frame(kind.profile, q, scale).jacobian
    else:
        _, gv = graph_jet(q[..., :2], scale, kind.oscillating)
        jac = np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3)).copy()
        jac[..., 2, 0] = gv[..., 0]
        jac[..., 2, 1] = gv[..., 1]
        e3 = np.einsum("...ij,j->...i", jac, np.array([0.0, 0.0, 1.0]))
        if not np.all(e3 == np.array([0.0, 0.0, 1.0])):
            raise AssertionError("the graph map must fix e3")
    return np.swapaxes(np.linalg.inv(jac), -1, -2)


@dataclass
class GradientRatios:
    points: np.ndarray
    ratios: np.ndarray
    template_ratios: np.ndarray

    @property
    def log_ratios(self):
        return np.log(self.ratios)

    @property
    def max_abs_log(self) -> float:
        return float(np.max(np.abs(self.log_ratios)))


def _check_pair(a: GridSolution, b: GridSolution):
    sa, sb = a.spec, b.spec
    if type(sa.kind) is not type(sb.kind) or sa.kind.with_side(1) != sb.kind.with_side(1):
        raise ValueError("both solves must use the same domain kind")
    if sa.kind.side != -sb.kind.side:
        raise ValueError("the solves must be on opposite sides")
    if (sa.K, sa.h, sa.inner) != (sb.K, sb.h, sb.inner):
        raise ValueError("both solves must share the grid")
    if (sa.scale is None) != (sb.scale is None) or (sa.scale is not None and sa.scale.rho != sb.scale.rho):
        raise ValueError("both solves must share the scale")


def interface_gradient_ratio(sol_plus: GridSolution, sol_minus: GridSolution | None, points) -> GradientRatios:
    """``|grad u+| / |grad u-|`` at interface points, pushed to the physical domain.

    Template gradients are mapped by ``D Psi^{-T}`` (chain rule for
    ``u~ = u o Psi``).  When ``sol_minus`` is None the minus solution is taken
    from the point reflection of the plus solution, ``u~-(x) = u~+(-x)``,
    which is exact for both kinds because the templates and coefficients are
    symmetric under ``x -> -x``.  For the graph the gradients are parallel to
    ``e3`` and the physical factors of the two sides are checked to cancel to
    1e-12.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if sol_plus.spec.kind.side != 1:
        raise ValueError("sol_plus must be the plus-side solve")
    g_plus = interface_gradient(sol_plus, pts)
    if sol_minus is None:
        g_minus = -interface_gradient(sol_plus, -pts)
    else:
        _check_pair(sol_plus, sol_minus)
        g_minus = interface_gradient(sol_minus, pts)
    kind, scale = sol_plus.spec.kind, sol_plus.spec.scale
    if sol_plus.spec.is_identity and scale is None:
        jit = np.broadcast_to(np.eye(3), pts.shape + (3,))
    else:
        jit = _physical_factor(kind, scale, pts)
    p_plus = np.einsum("...ij,...j->...i", jit, g_plus)
    p_minus = np.einsum("...ij,...j->...i", jit, g_minus)
    n_plus, n_minus = np.linalg.norm(g_plus, axis=1), np.linalg.norm(g_minus, axis=1)
    ratios = np.linalg.norm(p_plus, axis=1) / np.linalg.norm(p_minus, axis=1)
    template = n_plus / n_minus
    if isinstance(kind, OscillatingGraph):
        f_plus = np.linalg.norm(p_plus, axis=1) / n_plus
        f_minus = np.linalg.norm(p_minus, axis=1) / n_minus
        if np.max(np.abs(f_plus / f_minus - 1.0)) > 1e-12:
            raise AssertionError("graph physical factors failed to cancel")
    return GradientRatios(pts, ratios, template)


__all__ = [
    "GradientRatios", "NotAdjacentError", "interface_gradient", "interface_gradient_ratio",
    "interface_samples",
]
