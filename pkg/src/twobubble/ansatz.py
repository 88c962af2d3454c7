"""Two-bubble approximate solution and its interaction machinery.

The configuration is symmetric: bubble centers at +-z/2 carry velocities
+-v/2 and a common scale and phase.  Fields are sampled on the periodic
grids of nls_core; scalar integrals against the profile use adaptive
quadrature on the radial samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, simpson

from .errors import GridTooSmall, InvalidExponent, QuadratureFailure
from .groundstate import GroundState, sphere_area
from .nls_core import ComplexField, Grid, h1_norm_sq


@dataclass(frozen=True)
class BubbleParams:
    """Modulation vector (lambda, z, gamma, v) of the symmetric pair."""

    lam: float
    z: np.ndarray
    gamma: float
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def d(self) -> int:
        return self.z.size

    def bubble_center(self, k: int) -> np.ndarray:
        return 0.5 * self.z if k == 1 else -0.5 * self.z

    def bubble_velocity(self, k: int) -> np.ndarray:
        return 0.5 * self.v if k == 1 else -0.5 * self.v


@dataclass(frozen=True)
class ParamDerivs:
    """Time derivatives of (lambda, z, gamma, v) supplied by the caller."""

    lam_dot: float
    z_dot: np.ndarray
    gamma_dot: float
    v_dot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z_dot", np.atleast_1d(np.asarray(self.z_dot, dtype=float)))
        object.__setattr__(self, "v_dot", np.atleast_1d(np.asarray(self.v_dot, dtype=float)))


@dataclass(frozen=True)
class ModulationVector:
    """Per-bubble modulation equation values; zero on the exact reduced flow."""

    m_scale: float
    m_translation: np.ndarray
    m_phase: float
    m_velocity: np.ndarray

    def max_abs(self) -> float:
        return max(abs(self.m_scale), float(np.max(np.abs(self.m_translation))),
                   abs(self.m_phase), float(np.max(np.abs(self.m_velocity))))


@dataclass(frozen=True)
class RefinedCorrection:
    """One Helmholtz-inverted correction of the interaction tail."""

    j: int
    field: ComplexField
    sup_norm: float
    h1_norm: float


def modulation_vectors(params: BubbleParams,
                       derivs: ParamDerivs) -> tuple[ModulationVector, ModulationVector]:
    out = []
    rel = derivs.lam_dot / params.lam
    for k in (1, 2):
        sgn = 1.0 if k == 1 else -1.0
        z_k = params.bubble_center(k)
        v_k = params.bubble_velocity(k)
        zd_k = sgn * 0.5 * derivs.z_dot
        vd_k = sgn * 0.5 * derivs.v_dot
        out.append(ModulationVector(
            m_scale=rel,
            m_translation=zd_k - 2.0 * v_k + rel * z_k,
            m_phase=derivs.gamma_dot - 1.0 + float(v_k @ v_k)
                    - rel * float(v_k @ z_k) - float(v_k @ zd_k),
            m_velocity=vd_k - rel * v_k,
        ))
    return out[0], out[1]


def _check_grid(params: BubbleParams, grid: Grid):
    if params.d != grid.d:
        raise GridTooSmall(f"params dimension {params.d} != grid dimension {grid.d}")
    if 0.5 * float(np.linalg.norm(params.z)) + 10.0 >= grid.L:
        raise GridTooSmall(
            f"|z|/2 + 10 = {0.5 * np.linalg.norm(params.z) + 10:.2f} >= L = {grid.L}")


def _offsets(grid: Grid, center: np.ndarray) -> list[np.ndarray]:
    return [x - c for x, c in zip(grid.x_mesh, center)]


def single_bubble(params: BubbleParams, gs: GroundState, grid: Grid,
                  k: int) -> np.ndarray:
    """Values of one boosted bubble e^{i v_k . (y - z_k)} Q(y - z_k)."""
    offs = _offsets(grid, params.bubble_center(k))
    r = np.sqrt(sum(o ** 2 for o in offs))
    v_k = params.bubble_velocity(k)
    phase = sum(vc * o for vc, o in zip(v_k, offs))
    return np.exp(1j * phase) * gs.q_at(r)


def build_two_bubble(params: BubbleParams, gs: GroundState, grid: Grid) -> ComplexField:
    """Sum of the two boosted, translated copies of the ground state."""
    _check_grid(params, grid)
    return ComplexField(grid, single_bubble(params, gs, grid, 1)
                        + single_bubble(params, gs, grid, 2))


def nonlinearity(values: np.ndarray, p: float) -> np.ndarray:
    """F(u) = |u|^(p-1) u, elementwise."""
    return np.abs(values) ** (p - 1.0) * values


def phase_squared(values: np.ndarray) -> np.ndarray:
    """(u/|u|)^2 with the convention 0 at u = 0; safe for p < 3 weights."""
    a = np.abs(values)
    out = np.zeros_like(values)
    nz = a > 0
    out[nz] = (values[nz] / a[nz]) ** 2
    return out


def nonlinearity_derivative(P: np.ndarray, eps: np.ndarray, p: float) -> np.ndarray:
    """First variation F'(P).eps = (p+1)/2 |P|^(p-1) eps + (p-1)/2 |P|^(p-3) P^2 conj(eps)."""
    a = np.abs(P) ** (p - 1.0)
    return 0.5 * (p + 1.0) * a * eps + 0.5 * (p - 1.0) * a * phase_squared(P) * np.conj(eps)


def interaction_G(params: BubbleParams, gs: GroundState, grid: Grid) -> ComplexField:
    """Nonlinear cross term F(P1+P2) - F(P1) - F(P2)."""
    _check_grid(params, grid)
    p = gs.p
    p1 = single_bubble(params, gs, grid, 1)
    p2 = single_bubble(params, gs, grid, 2)
    return ComplexField(grid, nonlinearity(p1 + p2, p) - nonlinearity(p1, p)
                        - nonlinearity(p2, p))


def _quad_piece(f, a, b, scale, quad_tol):
    val, err = quad(f, a, b, epsabs=quad_tol * scale, epsrel=1e-10, limit=400)
    if err > 50.0 * max(quad_tol * scale, 1e-13 * abs(val)):
        raise QuadratureFailure(f"quadrature error {err:.3e} at scale {scale:.3e}")
    return val


def _force_1d(zlen: float, gs: GroundState, quad_tol: float) -> float:
    p = gs.p
    scale = np.exp(-zlen)

    def near(y):
        # Q^{p-1}(y) dQ(y) Q(y+z) on y > -z/2
        return gs.q_at(abs(y)) ** (p - 1.0) * gs.dq_at(abs(y)) * np.sign(y) \
            * gs.q_at(abs(y + zlen))

    def far(y):
        # Q^{p-1}(y+z) dQ(y) Q(y) on y < -z/2
        return gs.q_at(abs(y + zlen)) ** (p - 1.0) * gs.dq_at(abs(y)) * np.sign(y) \
            * gs.q_at(abs(y))

    cut = zlen + 40.0
    total = _quad_piece(near, -0.5 * zlen, 0.0, scale, quad_tol)
    total += _quad_piece(near, 0.0, cut, scale, quad_tol)
    total += _quad_piece(far, -cut, -zlen, scale, quad_tol)
    total += _quad_piece(far, -zlen, -0.5 * zlen, scale, quad_tol)
    return p * total


def _force_2d_nodes(zlen: float, gs: GroundState, nodes: int) -> float:
    """Tensor Gauss-Legendre rule split exactly at y1 = -|z|/2, z along e1."""
    p = gs.p
    x, w = np.polynomial.legendre.leggauss(nodes)

    def axis(a, b, step=0.5):
        edges = np.linspace(a, b, max(2, int(np.ceil((b - a) / step)) + 1))
        pts = np.concatenate([(0.5 * (e1 - e0)) * x + 0.5 * (e0 + e1)
                              for e0, e1 in zip(edges[:-1], edges[1:])])
        wts = np.concatenate([(0.5 * (e1 - e0)) * w for _ in [0]
                              for e0, e1 in zip(edges[:-1], edges[1:])])
        return pts, wts

    y2, w2 = axis(-30.0, 30.0)

    def block(y1, w1, integrand):
        Y1, Y2 = np.meshgrid(y1, y2, indexing="ij")
        return float(w1 @ integrand(Y1, Y2) @ w2)

    def near(Y1, Y2):
        r = np.hypot(Y1, Y2)
        rs = np.hypot(Y1 + zlen, Y2)
        with np.errstate(invalid="ignore"):
            grad1 = np.where(r > 0, gs.dq_at(r) * Y1 / np.maximum(r, 1e-300), 0.0)
        return gs.q_at(r) ** (p - 1.0) * grad1 * gs.q_at(rs)

    def far(Y1, Y2):
        r = np.hypot(Y1, Y2)
        rs = np.hypot(Y1 + zlen, Y2)
        with np.errstate(invalid="ignore"):
            grad1 = np.where(r > 0, gs.dq_at(r) * Y1 / np.maximum(r, 1e-300), 0.0)
        return gs.q_at(rs) ** (p - 1.0) * grad1 * gs.q_at(r)

    y1n, w1n = axis(-0.5 * zlen, 0.5 * zlen + 30.0)
    y1f, w1f = axis(-zlen - 30.0, -0.5 * zlen)
    return p * (block(y1n, w1n, near) + block(y1f, w1f, far))


def interaction_force_H(z, gs: GroundState, quad_tol: float = 1e-10,
                        min_sep: float = 5.0) -> np.ndarray:
    """Half-space-split projection of the interaction onto the translation direction.

    Two integrals split exactly at y.(z/|z|) = -|z|/2; the result is parallel
    to z and follows C_p zhat |z|^(-(d-1)/2) e^(-|z|) at leading order.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zlen = float(np.linalg.norm(z))
    if zlen < min_sep:
        raise QuadratureFailure(f"|z| = {zlen:.2f} below validity threshold {min_sep}")
    if gs.d == 1:
        mag = _force_1d(zlen, gs, quad_tol)
    elif gs.d == 2:
        coarse = _force_2d_nodes(zlen, gs, 8)
        fine = _force_2d_nodes(zlen, gs, 12)
        scale = zlen ** (-0.5) * np.exp(-zlen)
        if abs(fine - coarse) > max(quad_tol * scale, 1e-8 * abs(fine)):
            raise QuadratureFailure(
                f"2d force rule not converged: {abs(fine - coarse):.3e}")
        mag = fine
    else:
        raise QuadratureFailure(f"force implemented for d in (1, 2), got {gs.d}")
    return mag * z / zlen


def force_asymptotic(z, c_p: float, d: int) -> np.ndarray:
    """Leading-order law C_p zhat |z|^(-(d-1)/2) e^(-|z|)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zlen = float(np.linalg.norm(z))
    return c_p * (z / zlen) * zlen ** (-0.5 * (d - 1)) * np.exp(-zlen)


def _pair_fields(params: BubbleParams, gs: GroundState, grid: Grid):
    """Per-bubble phase factors and radial building blocks."""
    blocks = []
    for k in (1, 2):
        offs = _offsets(grid, params.bubble_center(k))
        r = np.sqrt(sum(o ** 2 for o in offs))
        v_k = params.bubble_velocity(k)
        phase = np.exp(1j * sum(vc * o for vc, o in zip(v_k, offs)))
        blocks.append((offs, r, v_k, phase))
    return blocks


def ansatz_residual(params: BubbleParams, derivs: ParamDerivs, gs: GroundState,
                    grid: Grid) -> ComplexField:
    """Flow residual assembled from the modulation vectors plus the cross term."""
    _check_grid(params, grid)
    m1, m2 = modulation_vectors(params, derivs)
    total = np.zeros(grid.shape, dtype=complex)
    for (offs, r, v_k, phase), m in zip(_pair_fields(params, gs, grid), (m1, m2)):
        q = gs.q_at(r)
        dq = gs.dq_at(r)
        with np.errstate(invalid="ignore"):
            unit = [np.where(r > 0, o / np.maximum(r, 1e-300), 0.0) for o in offs]
        lam_q = gs.lam_q_at(r)
        term = m.m_scale * (-1j * lam_q)
        term = term + sum(mt * (-1j * dq * u) for mt, u in zip(m.m_translation, unit))
        term = term + m.m_phase * (-q)
        term = term + sum(mv * (-o * q) for mv, o in zip(m.m_velocity, offs))
        total += phase * term
    total += interaction_G(params, gs, grid).values
    return ComplexField(grid, total)


def ansatz_residual_direct(params: BubbleParams, derivs: ParamDerivs,
                           gs: GroundState, grid: Grid) -> ComplexField:
    """Flow residual evaluated term by term from the renormalized equation.

    Independent of the assembled form; the two must agree to grid accuracy.
    """
    _check_grid(params, grid)
    p = gs.p
    rel = derivs.lam_dot / params.lam
    total = np.zeros(grid.shape, dtype=complex)
    P = np.zeros(grid.shape, dtype=complex)
    for k, (offs, r, v_k, phase) in enumerate(_pair_fields(params, gs, grid), start=1):
        sgn = 1.0 if k == 1 else -1.0
        zd_k = sgn * 0.5 * derivs.z_dot
        vd_k = sgn * 0.5 * derivs.v_dot
        q = gs.q_at(r)
        dq = gs.dq_at(r)
        with np.errstate(invalid="ignore"):
            unit = [np.where(r > 0, o / np.maximum(r, 1e-300), 0.0) for o in offs]
        grad_q = [dq * u for u in unit]
        pk = phase * q
        P += pk
        # i dP_k/ds
        idot = phase * ((-sum(vd * o for vd, o in zip(vd_k, offs))
                         + float(v_k @ zd_k)) * q
                        - 1j * sum(zd * gq for zd, gq in zip(zd_k, grad_q)))
        # Laplacian through the profile equation
        lap = phase * ((q - q ** p) + 2j * sum(vc * gq for vc, gq in zip(v_k, grad_q))
                       - float(v_k @ v_k) * q)
        grad_pk = [phase * (gq + 1j * vc * q) for gq, vc in zip(grad_q, v_k)]
        lam_pk = 2.0 / (p - 1.0) * pk + sum(x * gp for x, gp in zip(grid.x_mesh, grad_pk))
        total += idot + lap - pk - 1j * rel * lam_pk + (1.0 - derivs.gamma_dot) * pk
    total += nonlinearity(P, p)
    return ComplexField(grid, total)


def smoothstep(x) -> np.ndarray:
    """Quintic smoothstep: 0 below 0, 1 above 1."""
    t = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def interaction_cutoff(params: BubbleParams, grid: Grid) -> np.ndarray:
    """Plateau cutoff selecting points within |z| of both bubble centers."""
    zlen = float(np.linalg.norm(params.z))
    out = np.ones(grid.shape)
    for k in (1, 2):
        offs = _offsets(grid, params.bubble_center(k))
        dist = np.sqrt(sum(o ** 2 for o in offs))
        # psi0 on [-1, 0]: argument |z| - dist, quintic transition
        out = out * smoothstep(zlen - dist + 1.0)
    return out


def correction_count(p: float) -> int:
    """Smallest J with p > (J+3)/(J+2)."""
    if not 1.0 < p <= 2.0:
        raise InvalidExponent(f"refined corrections require 1 < p <= 2, got {p}")
    j = 0
    while p <= (j + 3.0) / (j + 2.0):
        j += 1
    return j


def grad_norm_sq_per_component(gs: GroundState) -> float:
    """||d_j Q||^2 over R^d per component, from the radial samples."""
    return sphere_area(gs.d) * simpson(gs.dq ** 2 * gs.r ** (gs.d - 1), x=gs.r) / gs.d


def _grad_q_fields(params: BubbleParams, gs: GroundState, grid: Grid,
                   k: int) -> list[np.ndarray]:
    offs = _offsets(grid, params.bubble_center(k))
    r = np.sqrt(sum(o ** 2 for o in offs))
    dq = gs.dq_at(r)
    with np.errstate(invalid="ignore"):
        return [np.where(r > 0, dq * o / np.maximum(r, 1e-300), 0.0) for o in offs]


def remove_translation_projections(values: np.ndarray, params: BubbleParams,
                                   gs: GroundState, grid: Grid) -> np.ndarray:
    """Subtract the real-pairing components along grad Q at both centers.

    Both coefficients come from the input field (no sequential
    re-orthogonalization), which keeps the result reflection-symmetric; the
    residual cross-projection is of the order of the bubble overlap.
    """
    denom = grad_norm_sq_per_component(gs)
    vol = grid.cell_volume
    out = values.astype(complex).copy()
    for k in (1, 2):
        for gq in _grad_q_fields(params, gs, grid, k):
            out -= (float(np.sum(values * gq).real) * vol / denom) * gq
    return out


def helmholtz_inverse(values: np.ndarray, grid: Grid) -> np.ndarray:
    """(-Delta + 1)^(-1) as the Fourier multiplier 1/(1 + |xi|^2)."""
    return np.fft.ifftn(np.fft.fftn(values) / (1.0 + grid.k_sq))


def refined_corrections(params: BubbleParams, gs: GroundState,
                        grid: Grid) -> list[RefinedCorrection]:
    """Iterated corrections for 1 < p <= 2, each an inverted projected source.

    The zeroth source is the cutoff interaction term with both translation
    projections removed; later sources are the nonlinear increments produced
    by the previous corrections.
    """
    _check_grid(params, grid)
    p = gs.p
    J = correction_count(p)
    p1 = single_bubble(params, gs, grid, 1)
    p2 = single_bubble(params, gs, grid, 2)
    base = p1 + p2

    G = nonlinearity(base, p) - nonlinearity(p1, p) - nonlinearity(p2, p)
    source = G * interaction_cutoff(params, grid)
    corrections = []
    accum = np.zeros(grid.shape, dtype=complex)
    for j in range(J + 1):
        tilde = remove_translation_projections(source, params, gs, grid)
        R = helmholtz_inverse(tilde, grid)
        field = ComplexField(grid, R)
        corrections.append(RefinedCorrection(
            j=j, field=field, sup_norm=float(np.max(np.abs(R))),
            h1_norm=float(np.sqrt(h1_norm_sq(field)))))
        prev = base + accum
        accum = accum + R
        source = nonlinearity(base + accum, p) - nonlinearity(prev, p)
    return corrections
