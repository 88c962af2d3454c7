"""Radial ground state of the focusing semilinear elliptic problem.

Computes the positive decaying solution of

    q'' + (d-1)/r q' - q + q^p = 0,   q'(0) = 0,   q(r) -> 0,

by bisection shooting on q(0), plus the scalar constants the rest of the
package consumes (tail amplitude, interaction integral, scaling pairings).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad, simpson, solve_ivp
from scipy.interpolate import make_interp_spline
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .errors import InvalidExponent, NonConvergence, QuadratureFailure, WindowTooNoisy

_OVERSHOOT = -1
_UNDERSHOOT = +1


def sobolev_limit(d: int) -> float:
    """Upper admissible exponent (d+2)/(d-2); unbounded for d <= 2."""
    return np.inf if d <= 2 else (d + 2.0) / (d - 2.0)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    return 2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0)


def closed_form_q0(p: float) -> float:
    """d=1 peak value ((p+1)/2)^(1/(p-1))."""
    return ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0))


def closed_form_profile(p: float, r) -> np.ndarray:
    """d=1 solution ((p+1)/2)^(1/(p-1)) sech^(2/(p-1))((p-1) r / 2)."""
    r = np.asarray(r, dtype=float)
    return closed_form_q0(p) * np.cosh(0.5 * (p - 1.0) * r) ** (-2.0 / (p - 1.0))


def decay_shape(d: int, r) -> np.ndarray:
    """Decaying solution r^(1-d/2) K_(d/2-1)(r) of the linearized radial equation.

    Behaves like sqrt(pi/2) r^(-(d-1)/2) e^(-r) for large r.
    """
    r = np.asarray(r, dtype=float)
    nu = d / 2.0 - 1.0
    return r ** (1.0 - d / 2.0) * kv(nu, r)


def _decay_shape_deriv(d: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    nu = d / 2.0 - 1.0
    kp = -0.5 * (kv(nu - 1.0, r) + kv(nu + 1.0, r))
    return (1.0 - d / 2.0) * r ** (-d / 2.0) * kv(nu, r) + r ** (1.0 - d / 2.0) * kp


@dataclass(frozen=True)
class GroundState:
    """Sampled radial profile with its shooting metadata.

    Samples live on a uniform mesh in r; values beyond ``r_max`` follow the
    matched linear tail ``tail_amplitude * decay_shape``.  Instances are
    immutable and safe to share between threads.
    """

    p: float
    d: int
    r_max: float
    q0: float
    r: np.ndarray
    q: np.ndarray
    dq: np.ndarray
    tail_amplitude: float
    bracket_width: float

    @cached_property
    def _spline_q(self):
        return make_interp_spline(self.r, self.q, k=5)

    @cached_property
    def _spline_dq(self):
        return make_interp_spline(self.r, self.dq, k=5)

    def q_at(self, rr) -> np.ndarray:
        """Profile value at arbitrary radii (spline inside, matched tail outside)."""
        rr = np.asarray(rr, dtype=float)
        out = np.empty_like(rr)
        inside = rr <= self.r_max
        out[inside] = self._spline_q(rr[inside])
        if not inside.all():
            out[~inside] = self.tail_amplitude * decay_shape(self.d, rr[~inside])
        return out

    def dq_at(self, rr) -> np.ndarray:
        rr = np.asarray(rr, dtype=float)
        out = np.empty_like(rr)
        inside = rr <= self.r_max
        out[inside] = self._spline_dq(rr[inside])
        if not inside.all():
            out[~inside] = self.tail_amplitude * _decay_shape_deriv(self.d, rr[~inside])
        return out

    def lam_q_at(self, rr) -> np.ndarray:
        """Radial part of the scaling generator, 2/(p-1) q + r q'."""
        rr = np.asarray(rr, dtype=float)
        return 2.0 / (self.p - 1.0) * self.q_at(rr) + rr * self.dq_at(rr)

    def d2q_at(self, rr) -> np.ndarray:
        """Second derivative from the ODE itself (regularized at r=0)."""
        rr = np.asarray(rr, dtype=float)
        q = self.q_at(rr)
        dq = self.dq_at(rr)
        out = q - q ** self.p
        small = rr < 1e-12
        out = np.where(small, out / self.d, out - np.divide(
            (self.d - 1.0) * dq, rr, out=np.zeros_like(rr), where=~small))
        return out


@dataclass(frozen=True)
class StructureConstants:
    """Scalar constants derived from one ground state.

    c_q:  amplitude of the r^(-(d-1)/2) e^(-r) tail
    i_q:  interaction integral of q^p against the e^(-x1) weight
    c1:   pairing of the scaling generator with the profile
    c2:   per-component pairing of -y_j Q with the j-th derivative
    c_p:  c_q * i_q
    c:    2 c_p / c2, the force constant of the reduced system
    l2:   squared L2 norm of the profile over R^d
    """

    c_q: float
    i_q: float
    c1: float
    c2: float
    c_p: float
    c: float
    l2: float
    c_q_residual: float


def _rhs(d: int, p: float):
    def rhs(r, y):
        q, w = y
        return (w, q - np.sign(q) * np.abs(q) ** p - (d - 1.0) / r * w)

    return rhs


def _series_start(q0: float, p: float, d: int, r0: float) -> tuple[float, float]:
    # q(r) ~ q0 + (q0 - q0^p) r^2 / (2d) removes the coordinate singularity
    curv = (q0 - q0 ** p) / d
    return q0 + 0.5 * curv * r0 ** 2, curv * r0


def _classify(q0: float, p: float, d: int, r_max: float):
    """Integrate one shot; overshoot = crosses zero, undershoot = turns upward.

    Tolerances must match the final profile pass so the bisected q0 sits on
    the same numerical manifold.
    """
    r0 = 1e-6
    y0 = _series_start(q0, p, d, r0)

    def cross(r, y):
        return y[0]

    cross.terminal = True
    cross.direction = -1

    def turn(r, y):
        return y[1]

    turn.terminal = True
    turn.direction = 1

    sol = solve_ivp(_rhs(d, p), (r0, r_max), y0, method="DOP853",
                    events=(cross, turn), rtol=1e-12, atol=1e-16)
    if sol.t_events[0].size:
        return _OVERSHOOT
    return _UNDERSHOOT


def solve_profile(p: float, d: int, tol: float = 1e-10,
                  r_max: float = 25.0, mesh_step: float = 1e-3) -> GroundState:
    """Bisection shooting for the radial ground state.

    The returned profile is the forward trajectory in the core blended into a
    backward integration of the full equation started on the matched linear
    tail, which keeps the samples accurate where bare shooting would be
    contaminated by the exponentially growing mode.
    """
    if d < 1 or int(d) != d:
        raise InvalidExponent(f"dimension must be a positive integer, got {d}")
    if not (1.0 < p < sobolev_limit(d)):
        raise InvalidExponent(f"p={p} outside (1, {sobolev_limit(d)})")
    if tol <= 0:
        raise NonConvergence("tol must be positive")

    # extend the truncation radius until the tail value can sit below 10*tol
    r_max = max(r_max, -np.log(10.0 * tol) + 4.0)

    # bracket around the d=1 closed form scaled by a dimension heuristic
    guess = closed_form_q0(p) * 1.5 ** (d - 1)
    lo = hi = guess
    for _ in range(200):
        if _classify(hi, p, d, r_max) == _OVERSHOOT:
            break
        hi *= 1.25
    else:
        raise NonConvergence("no overshoot endpoint found")
    for _ in range(200):
        if _classify(lo, p, d, r_max) == _UNDERSHOOT:
            break
        lo /= 1.25
    else:
        raise NonConvergence("no undershoot endpoint found")

    width_goal = min(tol, 8.0 * np.spacing(guess))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= max(width_goal, 2.0 * np.spacing(mid)):
            break
        if _classify(mid, p, d, r_max) == _OVERSHOOT:
            hi = mid
        else:
            lo = mid
    q0 = 0.5 * (lo + hi)
    width = hi - lo
    if width > tol:
        raise NonConvergence(f"bracket width {width:.3e} above tol {tol:.3e}")

    # forward pass with dense output; trustworthy until the growing mode
    # amplifies the residual bracket error
    r0 = 1e-6
    fwd = solve_ivp(_rhs(d, p), (r0, r_max), _series_start(q0, p, d, r0),
                    method="DOP853", dense_output=True, rtol=1e-12, atol=1e-16)

    r_match = _pick_match_radius(fwd, q0)
    window = np.linspace(max(r_match - 1.0, 1.0), r_match, 41)
    q_window = fwd.sol(window)[0]

    # amplitude of the linear tail, refined against full nonlinear backward runs
    amp = float(np.mean(q_window / decay_shape(d, window)))
    back = None
    for _ in range(3):
        y_end = (amp * decay_shape(d, r_max), amp * _decay_shape_deriv(d, r_max))
        back = solve_ivp(_rhs(d, p), (r_max, window[0] - 1.0), y_end,
                         method="DOP853", dense_output=True, rtol=1e-12, atol=1e-300)
        amp *= float(np.mean(q_window / back.sol(window)[0]))

    n = int(round(r_max / mesh_step)) + 1
    r = np.linspace(0.0, r_max, n)
    qf = np.empty(n)
    dqf = np.empty(n)
    qf[0], dqf[0] = q0, 0.0
    vals = fwd.sol(r[1:])
    qf[1:], dqf[1:] = vals[0], vals[1]

    qb = np.empty(n)
    dqb = np.empty(n)
    joinable = r >= window[0] - 0.5
    vb = back.sol(r[joinable])
    qb[joinable], dqb[joinable] = vb[0], vb[1]
    qb[~joinable], dqb[~joinable] = qf[~joinable], dqf[~joinable]

    w, dw = _smoothstep(r, r_match - 1.0, r_match)
    q = (1.0 - w) * qf + w * qb
    dq = (1.0 - w) * dqf + w * dqb + dw * (qb - qf)

    return GroundState(p=float(p), d=int(d), r_max=float(r_max), q0=float(q0),
                       r=r, q=q, dq=dq, tail_amplitude=amp, bracket_width=width)


def _pick_match_radius(fwd, q0: float) -> float:
    """Radius where the forward shot is still clean but already in the tail."""
    rr = np.linspace(2.0, fwd.t[-1], 400)
    qq = fwd.sol(rr)[0]
    target = 1e-4 * q0
    below = np.nonzero(qq < target)[0]
    if below.size == 0:
        return fwd.t[-1] - 2.0
    return float(rr[below[0]])


def _smoothstep(x, a: float, b: float):
    """Quintic smoothstep on [a, b] and its derivative."""
    t = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    w = t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)
    dw = 30.0 * t ** 2 * (1.0 - t) ** 2 / (b - a)
    return w, dw


def asymptotic_constant(gs: GroundState, window: tuple[float, float] | None = None,
                        resid_threshold: float = 1e-3) -> tuple[float, float]:
    """Tail amplitude from a least-squares fit of q(r) r^((d-1)/2) e^r.

    Fits c_q (1 + b/r) over the window and returns (c_q, max relative fit
    residual).  The 1/r term absorbs the first subleading correction of the
    tail expansion.
    """
    if window is None:
        window = (gs.r_max - 10.0, gs.r_max - 2.0)
    r_a, r_b = window
    if r_b > gs.r_max or r_a >= r_b:
        raise WindowTooNoisy(f"bad window {window} for r_max={gs.r_max}")
    rr = np.linspace(r_a, r_b, 201)
    data = gs.q_at(rr) * rr ** ((gs.d - 1) / 2.0) * np.exp(rr)
    if np.min(gs.q_at(rr)) < 1e3 * np.finfo(float).tiny:
        raise WindowTooNoisy("window reaches into truncation noise")
    basis = np.column_stack([np.ones_like(rr), 1.0 / rr])
    coef, *_ = np.linalg.lstsq(basis, data, rcond=None)
    model = basis @ coef
    resid = float(np.max(np.abs(model - data) / np.abs(data)))
    if resid > resid_threshold:
        raise WindowTooNoisy(f"relative fit residual {resid:.3e}")
    return float(coef[0]), resid


def _radial_integral(gs: GroundState, values: np.ndarray) -> float:
    """Simpson integral of values(r) r^(d-1) over the mesh, times the sphere area."""
    return sphere_area(gs.d) * simpson(values * gs.r ** (gs.d - 1), x=gs.r)


def interaction_weight(d: int, r) -> np.ndarray:
    """Integral of e^(-x1) over the sphere of radius r (area element included).

    Reduces the non-radial interaction integral to one dimension; used as an
    independent cross-check of the Cartesian rule.
    """
    r = np.asarray(r, dtype=float)
    if d == 1:
        return 2.0 * np.cosh(r)
    if d == 2:
        from scipy.special import i0
        return 2.0 * np.pi * r * i0(r)
    raise InvalidExponent(f"interaction weight implemented for d in (1, 2), got {d}")


def _i_q_cartesian(gs: GroundState, nodes_per_panel: int) -> float:
    """Tensor-product Gauss-Legendre rule for the e^(-x1)-weighted integral."""
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.arange(-gs.r_max, gs.r_max + 1e-12, 0.5)
    # composite nodes/weights along one axis
    pts = np.concatenate([(0.5 * (b - a)) * x + 0.5 * (a + b)
                          for a, b in zip(edges[:-1], edges[1:])])
    wts = np.concatenate([(0.5 * (b - a)) * w for a, b in zip(edges[:-1], edges[1:])])
    if gs.d == 1:
        return float(np.sum(wts * gs.q_at(np.abs(pts)) ** gs.p * np.exp(-pts)))
    X1, X2 = np.meshgrid(pts, pts, indexing="ij")
    rr = np.hypot(X1, X2)
    vals = gs.q_at(rr) ** gs.p * np.exp(-X1)
    return float(wts @ vals @ wts)


def structure_constants(gs: GroundState, quad_tol: float = 1e-9,
                        c_q: float | None = None) -> StructureConstants:
    """All scalar constants by quadrature over the sampled profile."""
    if c_q is None:
        c_q, c_q_resid = asymptotic_constant(gs)
    else:
        c_q_resid = 0.0

    l2 = _radial_integral(gs, gs.q ** 2)
    # c2 = <-y_j Q, d_j Q> per component; radially -(area/d) * int r^d q q' dr
    c2 = -_radial_integral(gs, gs.r * gs.q * gs.dq) / gs.d
    lam_q = 2.0 / (gs.p - 1.0) * gs.q + gs.r * gs.dq
    c1 = _radial_integral(gs, lam_q * gs.q)

    if gs.d == 1:
        val, err = quad(lambda r: gs.q_at(r) ** gs.p * 2.0 * np.cosh(r),
                        0.0, gs.r_max, epsabs=quad_tol, epsrel=1e-12, limit=400)
        if err > max(quad_tol, 1e-10 * abs(val)):
            raise QuadratureFailure(f"interaction integral error estimate {err:.3e}")
        i_q = val
    else:
        coarse = _i_q_cartesian(gs, 8)
        fine = _i_q_cartesian(gs, 12)
        if abs(fine - coarse) > max(quad_tol, 1e-9 * abs(fine)):
            raise QuadratureFailure(
                f"Cartesian rule not converged: {abs(fine - coarse):.3e}")
        i_q = fine

    c_p = c_q * i_q
    c = 2.0 * c_p / c2
    return StructureConstants(c_q=float(c_q), i_q=float(i_q), c1=float(c1),
                              c2=float(c2), c_p=float(c_p), c=float(c),
                              l2=float(l2), c_q_residual=float(c_q_resid))


def ode_residual(gs: GroundState) -> np.ndarray:
    """Pointwise residual q'' + (d-1)/r q' - q + q^p on the mesh."""
    d2 = gs._spline_dq.derivative()(gs.r)
    with np.errstate(divide="ignore", invalid="ignore"):
        geom = np.where(gs.r > 0, (gs.d - 1.0) / gs.r * gs.dq, 0.0)
    res = d2 + geom - gs.q + gs.q ** gs.p
    # at r=0 the geometric term contributes (d-1) q''(0); use the series value
    res[0] = gs.d * gs.d2q_at(np.array([0.0]))[0] - gs.q[0] + gs.q[0] ** gs.p
    return res
