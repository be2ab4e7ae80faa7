"""Closed-form fields, maps and coefficient matrices for the two model domains.

Every radial argument is carried as a log-scale ``rho = -log(r)`` so that radii
such as ``exp(-exp(2*pi*k))`` never have to be materialized.  Points handed to
the rescaled routines live in "template units": a point at distance ``t`` from
the origin, evaluated at log-scale ``rho``, stands for the physical radius
``t * exp(-rho)`` and therefore sees the combined log-scale ``rho - log(t)``.

Two domains are modelled:

* the twisted Szulkin domain ``{s o Phi_{-theta} > 0}`` where ``s`` is Szulkin's
  cubic and ``Phi_theta`` rotates each sphere ``|p| = r`` about the z-axis by
  ``theta(r)``;
* the oscillating graph domain ``{z > v(x, y)}`` with
  ``v = x * A * sin(A)``, ``A = log(-log|q|)``.

All array routines are vectorized over a leading axis of points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LOG100 = math.log(100.0)
#: Largest log-scale for which angles are reduced mod 2*pi in double precision.
RHO_MAX = math.exp(70.0)
TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a closed-form law."""


# ---------------------------------------------------------------------------
# Log-scale radii
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class LogScale:
    """A radius ``r`` stored as ``rho = -log(r) > 0``."""

    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not math.isfinite(rho) or rho <= 0.0:
            raise DomainError(f"log-scale must be positive and finite, got rho={self.rho!r}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_radius(cls, r: float) -> "LogScale":
        if not 0.0 < r < 1.0:
            raise DomainError(f"radius must lie in (0, 1), got {r!r}")
        return cls(-math.log(r))

    @classmethod
    def from_blowup_index(cls, theta0: float, k: int) -> "LogScale":
        """Scale where the log-log rotation angle equals ``theta0 + 2*pi*k``."""
        return cls(math.exp(theta0 + TWO_PI * k))

    def to_radius(self) -> float:
        """Physical radius; underflows to 0.0 for ``rho`` beyond ~745."""
        return math.exp(-self.rho)

    def combined(self, t):
        """Log-scale seen by a template point at distance ``t`` (array ok)."""
        return self.rho - np.log(t)

    @property
    def in_pure_region(self) -> bool:
        return self.rho >= LOG100


def to_log_scale(r: float) -> LogScale:
    """Log-scale of a physical radius ``r`` in ``(0, 1)``."""
    return LogScale.from_radius(r)


def _rho_of(scale) -> float:
    if scale is None:
        return 0.0
    if isinstance(scale, LogScale):
        return scale.rho
    return LogScale(scale).rho


def combined_rho(scale, radius):
    """``rho - log(radius)``; physical ``-log(radius)`` when ``scale`` is None."""
    with np.errstate(divide="ignore"):
        return _rho_of(scale) - np.log(radius)


# ---------------------------------------------------------------------------
# Rotation profiles
# ---------------------------------------------------------------------------


def _hermite_coeffs(value, slope, rho0):
    # h(rho) = c2 rho^2 + c3 rho^3 with h(0) = h'(0) = 0, h(rho0) = value, h'(rho0) = slope
    c3 = (slope - 2.0 * value / rho0) / rho0**2
    c2 = value / rho0**2 - c3 * rho0
    return c2, c3


@dataclass(frozen=True)
class TwistProfile:
    """Rotation law ``theta`` as a function of the log-scale ``rho``.

    ``law`` is ``"loglog"`` (``theta = log rho``), ``"power"``
    (``theta = rho**exponent``) or ``"none"``.  For ``0 <= rho < rho0`` the law
    is replaced by the cubic Hermite blend matching value and slope at ``rho0``
    and ``theta = theta' = 0`` at ``rho = 0``; ``theta = 0`` for ``rho <= 0``.
    """

    law: str = "loglog"
    exponent: float = 1.0
    rho0: float = LOG100
    _c: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.law not in ("loglog", "power", "none"):
            raise ValueError(f"unknown twist law {self.law!r}")
        if self.law == "power" and not 0.0 < self.exponent <= 3.0:
            # the C^1 blend stops being monotone for exponents above 3
            raise ValueError(f"power-law exponent must lie in (0, 3], got {self.exponent}")
        if self.law == "none":
            c = (0.0, 0.0)
        else:
            c = _hermite_coeffs(float(self._pure(self.rho0)), float(self._dpure(self.rho0)), self.rho0)
        object.__setattr__(self, "_c", c)

    @classmethod
    def loglog(cls) -> "TwistProfile":
        return cls("loglog")

    @classmethod
    def power(cls, p: float) -> "TwistProfile":
        return cls("power", float(p))

    @classmethod
    def none(cls) -> "TwistProfile":
        return cls("none")

    @classmethod
    def parse(cls, text: str) -> "TwistProfile":
        """Parse ``loglog``, ``none``, ``power:<p>`` or a bare exponent."""
        text = str(text).strip().lower()
        if text in ("loglog", "none"):
            return cls(text)
        if text.startswith("power:"):
            text = text.split(":", 1)[1]
        return cls.power(float(text))

    @property
    def is_none(self) -> bool:
        return self.law == "none"

    def label(self) -> str:
        return f"power:{self.exponent:g}" if self.law == "power" else self.law

    def describe(self) -> dict:
        """Profile and interpolation spec, recorded in every run manifest."""
        return {
            "law": self.law,
            "exponent": self.exponent if self.law == "power" else None,
            "interpolation": "cubic-hermite-C1",
            "rho0": self.rho0,
            "blend": {"c2": self._c[0], "c3": self._c[1]},
        }

    def _pure(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.law == "loglog":
            return np.log(rho)
        if self.law == "power":
            return rho**self.exponent
        return np.zeros_like(rho)

    def _dpure(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.law == "loglog":
            return 1.0 / rho
        if self.law == "power":
            return self.exponent * rho ** (self.exponent - 1.0)
        return np.zeros_like(rho)

    def _regions(self, rho):
        rho = np.asarray(rho, dtype=float)
        pure = rho >= self.rho0
        blend = (rho > 0.0) & ~pure
        safe = np.where(pure, rho, self.rho0)
        return rho, pure, blend, safe

    def theta(self, rho):
        """Rotation angle (radians, unreduced) at log-scale ``rho``."""
        rho, pure, blend, safe = self._regions(rho)
        c2, c3 = self._c
        out = np.where(blend, c2 * rho**2 + c3 * rho**3, 0.0)
        return np.where(pure, self._pure(safe), out)

    def dtheta(self, rho):
        """``d theta / d rho``; equals ``|r theta'(r)|``."""
        rho, pure, blend, safe = self._regions(rho)
        c2, c3 = self._c
        out = np.where(blend, 2.0 * c2 * rho + 3.0 * c3 * rho**2, 0.0)
        return np.where(pure, self._dpure(safe), out)

    def d2theta(self, rho):
        rho, pure, blend, safe = self._regions(rho)
        c2, c3 = self._c
        out = np.where(blend, 2.0 * c2 + 6.0 * c3 * rho, 0.0)
        if self.law == "loglog":
            d2 = -1.0 / safe**2
        elif self.law == "power":
            p = self.exponent
            d2 = p * (p - 1.0) * safe ** (p - 2.0)
        else:
            d2 = np.zeros_like(safe)
        return np.where(pure, d2, out)

    def max_dtheta(self, lo, hi):
        """Exact ``max dtheta`` over ``rho in [lo, hi]`` (``hi`` may be inf)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.law == "none":
            return np.zeros(np.broadcast(lo, hi).shape)
        candidates = [self.dtheta(lo), self.dtheta(np.where(np.isfinite(hi), hi, lo))]
        c2, c3 = self._c
        if c3 != 0.0:
            vertex = -c2 / (3.0 * c3)
            if 0.0 < vertex < self.rho0:
                inside = (lo <= vertex) & (vertex <= hi)
                candidates.append(np.where(inside, self.dtheta(vertex), 0.0))
        inside0 = (lo <= self.rho0) & (self.rho0 <= hi)
        candidates.append(np.where(inside0, self.dtheta(self.rho0), 0.0))
        out = np.maximum.reduce([np.broadcast_to(c, np.broadcast(lo, hi).shape) for c in candidates])
        if self.law == "power" and self.exponent > 1.0:
            out = np.where(np.isinf(hi), np.inf, out)
        return out


# ---------------------------------------------------------------------------
# Szulkin's cubic
# ---------------------------------------------------------------------------


def _float_array(p):
    # keep extended-precision inputs extended; everything else becomes float64
    p = np.asarray(p)
    return p if np.issubdtype(p.dtype, np.floating) else p.astype(float)


def szulkin(p):
    p = _float_array(p)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return x**3 - 3.0 * x * y**2 + z**3 - 1.5 * (x**2 + y**2) * z


def szulkin_grad(p):
    p = _float_array(p)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack(
        [
            3.0 * x**2 - 3.0 * y**2 - 3.0 * x * z,
            -6.0 * x * y - 3.0 * y * z,
            3.0 * z**2 - 1.5 * (x**2 + y**2),
        ],
        axis=-1,
    )


def szulkin_jet(p):
    """Value and gradient of ``s = x^3 - 3xy^2 + z^3 - 1.5(x^2+y^2)z``."""
    return szulkin(p), szulkin_grad(p)


def _gradient_forms():
    # each component of grad s is a quadratic form Y^T M Y
    m1 = np.array([[3.0, 0.0, -1.5], [0.0, -3.0, 0.0], [-1.5, 0.0, 0.0]])
    m2 = np.array([[0.0, -3.0, 0.0], [-3.0, 0.0, -1.5], [0.0, -1.5, 0.0]])
    m3 = np.array([[-1.5, 0.0, 0.0], [0.0, -1.5, 0.0], [0.0, 0.0, 3.0]])
    return m1, m2, m3


#: Rigorous constant with ``|grad s(Y)| <= SZULKIN_GRAD_ENVELOPE * |Y|^2``.
SZULKIN_GRAD_ENVELOPE = float(
    math.sqrt(sum(np.max(np.abs(np.linalg.eigvalsh(m))) ** 2 for m in _gradient_forms()))
)


# ---------------------------------------------------------------------------
# Twist map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngleJet:
    theta: float
    theta_mod: float
    r_dtheta: float  # |r theta'(r)| = d theta / d rho


def theta_jet(profile: TwistProfile, scale: LogScale) -> AngleJet:
    """Rotation angle, its reduction mod 2*pi and ``|r theta'(r)|`` at ``scale``."""
    if not isinstance(scale, LogScale):
        scale = LogScale(scale)
    if scale.rho > RHO_MAX:
        raise DomainError(f"rho={scale.rho:.6g} exceeds the angle-reduction budget e^70")
    theta = float(profile.theta(scale.rho))
    return AngleJet(theta, float(np.mod(theta, TWO_PI)), float(profile.dtheta(scale.rho)))


def _rotate_xy(p, angle):
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    x, y = p[..., 0], p[..., 1]
    nx, ny = c * x - s * y, s * x + c * y
    return np.stack([nx, ny, np.broadcast_to(p[..., 2], nx.shape)], axis=-1)


def rotate_z(p, angle):
    """Rotate points about the z-axis (``angle`` broadcasts against points)."""
    return _rotate_xy(np.asarray(p, dtype=float), angle)


def _point_angles(profile, p, scale):
    r = np.linalg.norm(p, axis=-1)
    if scale is not None and np.any(r == 0.0):
        raise DomainError("the rescaled twist needs a nonzero radius")
    rho = combined_rho(scale, np.where(r > 0.0, r, 1.0))
    if np.any(rho > RHO_MAX):
        raise DomainError("combined log-scale exceeds the angle-reduction budget e^70")
    return np.where(r > 0.0, profile.theta(rho), 0.0), r, rho


def twist_map(profile: TwistProfile, direction, p, scale_offset=None):
    """``Phi_{+theta}`` (``direction="forward"``) or ``Phi_{-theta}`` at points ``p``."""
    sign = _direction_sign(direction)
    p = np.asarray(p, dtype=float)
    theta, _, _ = _point_angles(profile, p, scale_offset)
    return _rotate_xy(p, sign * theta)


def _direction_sign(direction):
    if direction in ("forward", +1, "+"):
        return 1.0
    if direction in ("backward", -1, "-"):
        return -1.0
    raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


@dataclass(frozen=True)
class FrameDecomposition:
    """``D Phi_theta = rotation + error`` with singular values ascending."""

    jacobian: np.ndarray
    rotation: np.ndarray
    error: np.ndarray
    singular_values: np.ndarray

    @property
    def dilatation(self):
        """``lambda_3 / lambda_1``."""
        return self.singular_values[..., 2] / self.singular_values[..., 0]


def _twist_parts(profile, p, scale):
    p = np.asarray(p, dtype=float)
    theta, r, rho = _point_angles(profile, p, scale)
    c, s = np.cos(theta), np.sin(theta)
    x, y = p[..., 0], p[..., 1]
    rot = np.zeros(p.shape[:-1] + (3, 3))
    rot[..., 0, 0], rot[..., 0, 1] = c, -s
    rot[..., 1, 0], rot[..., 1, 1] = s, c
    rot[..., 2, 2] = 1.0
    col = np.stack([-x * s - y * c, x * c - y * s, np.zeros_like(x)], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad_theta = np.where((r > 0.0)[..., None], -profile.dtheta(rho)[..., None] * p / (r**2)[..., None], 0.0)
    return rot, col, grad_theta


def twist_frame(profile: TwistProfile, p, scale_offset=None) -> FrameDecomposition:
    """Closed-form Jacobian of ``Phi_theta`` split as rotation plus rank-one error."""
    p = np.asarray(p, dtype=float)
    if np.any(np.linalg.norm(p, axis=-1) == 0.0):
        raise DomainError("twist_frame is undefined at the origin")
    rot, col, grad_theta = _twist_parts(profile, p, scale_offset)
    err = col[..., :, None] * grad_theta[..., None, :]
    jac = rot + err
    sv = np.linalg.svd(jac, compute_uv=False)[..., ::-1]
    return FrameDecomposition(jac, rot, err, sv)


# ---------------------------------------------------------------------------
# Oscillating graph
# ---------------------------------------------------------------------------


class GraphAmplitude:
    """Amplitude ``a(rho') = A sin A`` with ``A = log rho'``, blended to 1 at rho' = 0."""

    def __init__(self, rho0: float = LOG100):
        self.rho0 = rho0
        a0 = math.log(rho0)
        value = a0 * math.sin(a0)
        slope = (math.sin(a0) + a0 * math.cos(a0)) / rho0
        # blend a = 1 + c2 rho^2 + c3 rho^3 on [0, rho0]
        self.c2, self.c3 = _hermite_coeffs(value - 1.0, slope, rho0)
        rr = np.linspace(0.0, rho0, 4097)
        # dense sampling of a cubic and its quadratic derivative, padded
        self._blend_sup = float(np.max(np.abs(1.0 + self.c2 * rr**2 + self.c3 * rr**3))) * (1 + 1e-6)
        self._blend_dsup = float(np.max(np.abs(2.0 * self.c2 * rr + 3.0 * self.c3 * rr**2))) * (1 + 1e-6) + 1e-12

    def describe(self) -> dict:
        return {"interpolation": "cubic-hermite-C1", "rho0": self.rho0, "outer_value": 1.0,
                "blend": {"c2": self.c2, "c3": self.c3}}

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        pure = rho >= self.rho0
        big = np.log(np.where(pure, rho, self.rho0))
        blend = 1.0 + self.c2 * rho**2 + self.c3 * rho**3
        return np.where(pure, big * np.sin(big), np.where(rho > 0.0, blend, 1.0))

    def slope(self, rho):
        rho = np.asarray(rho, dtype=float)
        pure = rho >= self.rho0
        safe = np.where(pure, rho, self.rho0)
        big = np.log(safe)
        blend = 2.0 * self.c2 * rho + 3.0 * self.c3 * rho**2
        return np.where(pure, (np.sin(big) + big * np.cos(big)) / safe, np.where(rho > 0.0, blend, 0.0))

    def bounds(self, lo, hi):
        """Upper bounds for ``|a|`` and ``|a'|`` over ``rho' in [lo, hi]``.

        On the pure law ``|a'| <= (1 + A) / rho'``; ``|a|`` is bounded by the
        larger endpoint value plus the interval length times that slope bound,
        capped by ``A``.  Any overlap with the blend adds the blend's own sups.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            p_lo = np.maximum(lo, self.rho0)
            p_hi = np.maximum(hi, self.rho0)
            big = np.log(p_hi)
            da_pure = (1.0 + big) / p_lo
            ends = np.maximum(np.abs(self.value(p_lo)), np.abs(self.value(p_hi)))
            taylor = np.where(np.isfinite(p_hi), ends + (p_hi - p_lo) * da_pure, np.inf)
            a_pure = np.minimum(big, taylor)
        has_pure = hi >= self.rho0
        has_blend = lo < self.rho0
        a_bound = np.maximum(np.where(has_pure, a_pure, 0.0), np.where(has_blend, self._blend_sup, 0.0))
        da_bound = np.maximum(np.where(has_pure, da_pure, 0.0), np.where(has_blend, self._blend_dsup, 0.0))
        return a_bound, da_bound


GRAPH_AMPLITUDE = GraphAmplitude()


def graph_jet(q, scale_offset=None, oscillating: bool = True):
    """Value and gradient of the (rescaled) graph function.

    With ``scale_offset`` the rescaled function ``v(r q) / r`` is returned, i.e.
    ``x * a(rho - log|q|)``.  Raises :class:`DomainError` when the combined
    log-scale drops to 1 or below.  Without an offset the physical ``v`` is
    returned, with ``v(0, 0) = 0`` and an undefined (nan) gradient there.
    """
    q = np.asarray(q, dtype=float)
    x = q[..., 0]
    if not oscillating:
        grad = np.zeros(q.shape[:-1] + (2,))
        return np.zeros_like(x), grad
    rad = np.linalg.norm(q, axis=-1)
    if scale_offset is not None:
        if np.any(rad == 0.0):
            raise DomainError("the rescaled graph needs a nonzero planar radius")
        rho = combined_rho(scale_offset, rad)
        bad = rho <= 1.0
        if np.any(bad):
            worst = float(np.min(rho))
            raise DomainError(f"combined log-scale {worst:.6g} <= 1 leaves the graph law's domain")
    else:
        rho = combined_rho(None, np.where(rad > 0.0, rad, 1.0))
    amp = GRAPH_AMPLITUDE.value(rho)
    slope = GRAPH_AMPLITUDE.slope(rho)
    safe = np.where(rad > 0.0, rad, 1.0)
    value = np.where(rad > 0.0, x * amp, 0.0)
    gx = amp - x * slope * x / safe**2
    gy = -x * slope * q[..., 1] / safe**2
    grad = np.stack([gx, gy], axis=-1)
    grad = np.where((rad > 0.0)[..., None], grad, np.nan)
    return value, grad


# ---------------------------------------------------------------------------
# Domain kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwistedSzulkin:
    profile: TwistProfile = field(default_factory=TwistProfile.loglog)
    side: int = 1

    name = "twist"

    def with_side(self, side: int) -> "TwistedSzulkin":
        return TwistedSzulkin(self.profile, side)

    def describe(self) -> dict:
        return {"kind": self.name, "side": self.side, "profile": self.profile.describe()}


@dataclass(frozen=True)
class OscillatingGraph:
    oscillating: bool = True
    side: int = 1

    name = "graph"

    def with_side(self, side: int) -> "OscillatingGraph":
        return OscillatingGraph(self.oscillating, side)

    def describe(self) -> dict:
        info = {"kind": self.name, "side": self.side, "oscillating": self.oscillating}
        if self.oscillating:
            info["amplitude"] = GRAPH_AMPLITUDE.describe()
        return info


DomainKind = TwistedSzulkin | OscillatingGraph


def half_space(side: int = 1) -> OscillatingGraph:
    """The flat graph ``{z > 0}``, used as an oracle domain."""
    return OscillatingGraph(oscillating=False, side=side)


# ---------------------------------------------------------------------------
# Pull-back coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientMatrix:
    """Symmetric positive-definite conductivity (``(..., 3, 3)``)."""

    b: np.ndarray

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.b)

    @property
    def ellipticity(self):
        """``Lambda`` with all eigenvalues in ``[1/Lambda, Lambda]``."""
        ev = self.eigenvalues
        return np.maximum(ev[..., -1], 1.0 / ev[..., 0])

    def deviation(self):
        """Max-entry distance from the identity."""
        return np.max(np.abs(self.b - np.eye(3)), axis=(-2, -1))


def twist_coefficients(profile: TwistProfile, scale, x):
    """Conductivity of the twisted problem pulled back to the untwisted template.

    With ``J = D Phi_theta(x)`` (determinant one) this is ``J^{-1} J^{-T}``, which
    reduces to ``I - w g^T - g w^T + |g|^2 w w^T`` with ``w = (-x2, x1, 0)`` and
    ``g = grad theta``; the absolute angle drops out.
    """
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0.0):
        raise DomainError("coefficients are undefined at the origin")
    rho = combined_rho(scale, r)
    g = -profile.dtheta(rho)[..., None] * x / (r**2)[..., None]
    w = np.stack([-x[..., 1], x[..., 0], np.zeros_like(r)], axis=-1)
    eye = np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3))
    wg = w[..., :, None] * g[..., None, :]
    gg = np.sum(g * g, axis=-1)[..., None, None]
    return eye - wg - np.swapaxes(wg, -1, -2) + gg * (w[..., :, None] * w[..., None, :])


def graph_coefficients_from_slope(grad_v):
    grad_v = np.asarray(grad_v, dtype=float)
    vx, vy = grad_v[..., 0], grad_v[..., 1]
    b = np.zeros(grad_v.shape[:-1] + (3, 3))
    b[..., 0, 0] = 1.0
    b[..., 1, 1] = 1.0
    b[..., 0, 2] = b[..., 2, 0] = -vx
    b[..., 1, 2] = b[..., 2, 1] = -vy
    b[..., 2, 2] = 1.0 + vx**2 + vy**2
    return b


def coefficient_array(kind, scale, x):
    """Raw ``(..., 3, 3)`` coefficient array; see :func:`pullback_coefficient`."""
    x = np.asarray(x, dtype=float)
    if isinstance(kind, TwistedSzulkin):
        return twist_coefficients(kind.profile, scale, x)
    _, grad = graph_jet(x[..., :2], scale, kind.oscillating)
    return graph_coefficients_from_slope(grad)


def pullback_coefficient(kind, scale, x) -> CoefficientMatrix:
    """Coefficient of the conjugated Dirichlet problem on the fixed template.

    If ``u`` is harmonic on the physical domain and ``Psi`` maps the template
    onto it, ``u o Psi`` solves ``div(B grad .) = 0`` with
    ``B = (det D Psi) D Psi^{-1} D Psi^{-T}``, equivalently
    ``(det D Phi)^{-1} D Phi D Phi^T`` for the inverse map ``Phi`` evaluated at
    the physical point.  For the graph that is
    ``[[1, 0, -v_x], [0, 1, -v_y], [-v_x, -v_y, 1 + |grad v|^2]]``.
    """
    return CoefficientMatrix(coefficient_array(kind, scale, x))


# ---------------------------------------------------------------------------
# Signed defining functions
# ---------------------------------------------------------------------------


def field_value(kind, scale, p):
    """Signed defining function: positive in Omega+, negative in Omega-."""
    p = np.asarray(p, dtype=float)
    if isinstance(kind, TwistedSzulkin):
        if kind.profile.is_none:
            return szulkin(p)
        r = np.linalg.norm(p, axis=-1)
        if scale is not None and np.any(r == 0.0):
            # the field vanishes at the cone point whatever the twist
            out = np.zeros(p.shape[:-1])
            nz = r > 0.0
            out[nz] = szulkin(twist_map(kind.profile, "backward", p[nz], scale))
            return out
        return szulkin(twist_map(kind.profile, "backward", p, scale))
    q = p[..., :2]
    on_axis = np.all(q == 0.0, axis=-1)
    if scale is not None and np.any(on_axis):
        # v(0, 0) = 0 at every scale (v is odd in x)
        v = np.zeros(p.shape[:-1])
        v[~on_axis], _ = graph_jet(q[~on_axis], scale, kind.oscillating)
    else:
        v, _ = graph_jet(q, scale, kind.oscillating)
    return p[..., 2] - v


def field_gradient(kind, scale, p):
    """Exact gradient of :func:`field_value` (away from the singular axis/point)."""
    p = np.asarray(p, dtype=float)
    if isinstance(kind, TwistedSzulkin):
        if kind.profile.is_none:
            return szulkin_grad(p)
        y = twist_map(kind.profile, "backward", p, scale)
        jac = _backward_jacobian(kind.profile, p, scale)
        return np.einsum("...ji,...j->...i", jac, szulkin_grad(y))
    _, gv = graph_jet(p[..., :2], scale, kind.oscillating)
    return np.concatenate([-gv, np.ones(p.shape[:-1] + (1,))], axis=-1)


def _backward_jacobian(profile, p, scale):
    # D Phi_{-theta}(p) = R_{-theta} + col_minus (x) (-grad theta)
    rot, _, grad_theta = _twist_parts(profile, p, scale)
    theta, _, _ = _point_angles(profile, p, scale)
    c, s = np.cos(-theta), np.sin(-theta)
    x, y = p[..., 0], p[..., 1]
    rot_m = np.swapaxes(rot, -1, -2)
    col = np.stack([-x * s - y * c, x * c - y * s, np.zeros_like(x)], axis=-1)
    return rot_m + col[..., :, None] * (-grad_theta)[..., None, :]


def field_gradient_bound(kind, scale, p, radius):
    """Upper bound for ``sup |grad f|`` over the ball ``B(p, radius)``.

    Twist: ``|grad f(Y)| <= G |Y|^2 (1 + sup dtheta)``, using
    ``|grad s(Y)| <= G |Y|^2`` and ``||D Phi_{-theta}|| <= 1 + dtheta``.
    Graph: ``sqrt(1 + (sup|a| + sup|a'|)^2)``.
    """
    p = np.asarray(p, dtype=float)
    radius = np.asarray(radius, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    hi = r + radius
    lo = np.maximum(r - radius, 0.0)
    if isinstance(kind, TwistedSzulkin):
        if kind.profile.is_none:
            return SZULKIN_GRAD_ENVELOPE * hi**2
        return SZULKIN_GRAD_ENVELOPE * _twist_envelope(kind.profile, scale, lo, hi)
    if not kind.oscillating:
        return np.ones_like(r)
    qr = np.linalg.norm(p[..., :2], axis=-1)
    qhi = qr + radius
    qlo = np.maximum(qr - radius, 1e-300)
    rho_lo = combined_rho(scale, qhi)
    rho_hi = combined_rho(scale, qlo)
    a_b, da_b = GRAPH_AMPLITUDE.bounds(rho_lo, rho_hi)
    return np.sqrt(1.0 + (a_b + da_b) ** 2)


def _twist_envelope(profile, scale, lo, hi):
    # sup over |Y| in [lo, hi] of |Y|^2 (1 + dtheta(rho - log|Y|)), split into
    # dyadic shells so that balls containing the origin stay finite
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = np.zeros(np.broadcast(lo, hi).shape)
    top = hi.copy()
    for _ in range(80):
        bottom = np.maximum(top * 0.5, lo)
        rho_a = combined_rho(scale, top)
        rho_b = combined_rho(scale, np.where(bottom > 0.0, bottom, top * 0.5))
        d = profile.max_dtheta(rho_a, rho_b)
        best = np.maximum(best, top**2 * (1.0 + d))
        done = bottom <= lo
        top = np.where(done, top, bottom)
        if np.all(done | (top < hi * 1e-12)):
            break
    return best


def signed_field(kind, scale, p) -> tuple[float, Callable[[float], float]]:
    """Value at ``p`` and a callable ``radius -> sup |grad f|`` bound on ``B(p, radius)``."""
    p = np.asarray(p, dtype=float)
    value = float(field_value(kind, scale, p))
    return value, lambda radius: float(field_gradient_bound(kind, scale, p, radius))


def antipodal_pair(kind):
    """Both sides of ``kind``; they are point reflections of each other."""
    return kind.with_side(1), kind.with_side(-1)
