"""Parameter extraction by orthogonality, linearized operators, and the
localized energy functional.

The fit finds (lambda, z, gamma, v) so that the recentered error of

    u(x) = e^{i gamma} lambda^{-2/(p-1)} (P + eps)(x / lambda)

is orthogonal to the generalized null directions Q, yQ, i Lambda Q (and
i grad Q in snapshot mode).  All pairings are evaluated in lab coordinates
with exact lambda scaling factors, so the Newton loop never resamples the
input field; the analytic Jacobian keeps convergence quadratic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ansatz import BubbleParams, smoothstep
from .errors import NoConvergence, OutOfBasin
from .groundstate import GroundState
from .nls_core import ComplexField, Grid, laplacian


@dataclass(frozen=True)
class DecompResult:
    """Fitted parameters, error field, and its annihilated projections."""

    params: BubbleParams
    eps: ComplexField | None       # lab-frame error u - e^{i gamma} lam^... P(./lam)
    eta1: ComplexField | None      # error recentered on bubble 1, phase stripped
    eps_h1: float
    projections: dict
    newton_iters: int
    step_history: tuple


class _Bundle:
    """Profile data of one bubble evaluated at given coordinates."""

    def __init__(self, gs: GroundState, coords: list[np.ndarray],
                 center: np.ndarray, vel: np.ndarray):
        p = gs.p
        self.offs = [c - zc for c, zc in zip(coords, center)]
        r = np.sqrt(sum(o ** 2 for o in self.offs))
        self.r = r
        self.q = gs.q_at(r)
        self.dq = gs.dq_at(r)
        curv0 = (gs.q0 - gs.q0 ** p) / gs.d
        safe = r > 1e-12
        self.dq_over_r = np.where(safe, self.dq / np.where(safe, r, 1.0), curv0)
        self.d2q = self.q - self.q ** p - (gs.d - 1.0) * self.dq_over_r
        self.lamq = 2.0 / (p - 1.0) * self.q + r * self.dq
        dlamq = (2.0 / (p - 1.0) + 1.0) * self.dq + r * self.d2q
        self.dlamq_over_r = np.where(safe, dlamq / np.where(safe, r, 1.0),
                                     (2.0 / (p - 1.0) + 2.0) * curv0)
        self.vel = vel
        self.phase = np.exp(1j * sum(vc * o for vc, o in zip(vel, self.offs)))
        self.grad_q = [self.dq_over_r * o for o in self.offs]
        # (q'' - q'/r)/r^2 with a vanishing limit; multiplies offs_m offs_n
        self.hess_factor = np.where(safe, (self.d2q - self.dq_over_r)
                                    / np.where(safe, r ** 2, 1.0), 0.0)


def _test_fields(b: _Bundle, d: int) -> list[np.ndarray]:
    """Phase-dressed null directions: Q, y_m Q, i Lambda Q, i d_m Q."""
    out = [b.phase * b.q]
    out += [b.phase * (o * b.q) for o in b.offs]
    out.append(b.phase * (1j * b.lamq))
    out += [b.phase * (1j * gq) for gq in b.grad_q]
    return out


def _test_field_grads(b: _Bundle, d: int) -> list[list[np.ndarray]]:
    """Argument-gradients of the bare null directions (no phase)."""
    grads = [[b.grad_q[n] for n in range(d)]]
    for m in range(d):
        grads.append([(b.q if n == m else 0.0) + b.offs[m] * b.grad_q[n]
                      for n in range(d)])
    grads.append([1j * b.dlamq_over_r * o for o in b.offs])
    for m in range(d):
        grads.append([1j * (b.hess_factor * b.offs[m] * b.offs[n]
                            + (b.dq_over_r if n == m else 0.0))
                      for n in range(d)])
    return grads


def _bare_fields(b: _Bundle, d: int) -> list[np.ndarray]:
    out = [b.q]
    out += [o * b.q for o in b.offs]
    out.append(1j * b.lamq)
    out += [1j * gq for gq in b.grad_q]
    return out


class _Workspace:
    def __init__(self, u: ComplexField, gs: GroundState, mode: str,
                 v_override: np.ndarray | None):
        self.u = u
        self.g = u.grid
        self.gs = gs
        self.p = gs.p
        self.d = self.g.d
        self.vol = self.g.cell_volume
        self.mode = mode
        self.v_override = v_override
        self.n_eq = 2 + self.d + (self.d if mode == "snapshot" else 0)

    def _pair(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(f * np.conj(g)).real) * self.vol

    def unpack(self, theta: np.ndarray):
        d = self.d
        lam = theta[0]
        z = theta[1:1 + d]
        gamma = theta[1 + d]
        v = theta[2 + d:2 + 2 * d] if self.mode == "snapshot" else self.v_override
        return lam, z, gamma, np.asarray(v, dtype=float)

    def residual_jacobian(self, theta: np.ndarray):
        lam, z, gamma, v = self.unpack(theta)
        d, p, g = self.d, self.p, self.g
        b_exp = 2.0 / (p - 1.0) - d
        z1, v1 = 0.5 * z, 0.5 * v

        # u-side: test fields at scaled coordinates x / lambda
        coords_u = [x / lam for x in g.x_mesh]
        bu = _Bundle(self.gs, coords_u, z1, v1)
        T_u = _test_fields(bu, d)
        bare = _bare_fields(bu, d)
        bare_grads = _test_field_grads(bu, d)
        upre = np.exp(-1j * gamma) * self.u.values * lam ** b_exp

        n_eq = self.n_eq
        n_un = n_eq
        res = np.zeros(n_eq)
        jac = np.zeros((n_eq, n_un))

        I = np.array([self._pair(upre, T_u[j]) for j in range(n_eq)])
        dIdgamma = np.array([self._pair(-1j * upre, T_u[j]) for j in range(n_eq)])

        for j in range(n_eq):
            # full gradient of T_j including the boost phase
            gradT = [bu.phase * (1j * v1[n] * bare[j] + bare_grads[j][n])
                     for n in range(d)]
            radial = sum(c * gt for c, gt in zip(coords_u, gradT))
            dIdlam_j = b_exp / lam * I[j] - self._pair(upre, radial) / lam
            jac[j, 0] = dIdlam_j
            jac[j, 1 + d] = dIdgamma[j]
            for m in range(d):
                dT_dzm = 0.5 * bu.phase * (-1j * v1[m] * bare[j] - bare_grads[j][m])
                jac[j, 1 + m] = self._pair(upre, dT_dzm)
                if self.mode == "snapshot":
                    dT_dvm = 0.5 * bu.phase * (1j * bu.offs[m] * bare[j])
                    jac[j, 2 + d + m] = self._pair(upre, dT_dvm)

        # ansatz side on the unit lattice
        by = [_Bundle(self.gs, list(g.x_mesh), 0.5 * z, 0.5 * v),
              _Bundle(self.gs, list(g.x_mesh), -0.5 * z, -0.5 * v)]
        P = by[0].phase * by[0].q + by[1].phase * by[1].q
        Ty = _test_fields(by[0], d)
        bare_y = _bare_fields(by[0], d)
        bare_grads_y = _test_field_grads(by[0], d)

        dP_dz = []
        dP_dv = []
        for m in range(d):
            acc_z = np.zeros(g.shape, dtype=complex)
            acc_v = np.zeros(g.shape, dtype=complex)
            for sgn, bb in zip((1.0, -1.0), by):
                acc_z += sgn * 0.5 * bb.phase * (-1j * bb.vel[m] * bb.q
                                                 - bb.grad_q[m])
                acc_v += sgn * 0.5 * bb.phase * (1j * bb.offs[m] * bb.q)
            dP_dz.append(acc_z)
            dP_dv.append(acc_v)

        for j in range(n_eq):
            res[j] = I[j] - self._pair(P, Ty[j])
            for m in range(d):
                dTy_dzm = 0.5 * by[0].phase * (-1j * by[0].vel[m] * bare_y[j]
                                               - bare_grads_y[j][m])
                jac[j, 1 + m] -= self._pair(dP_dz[m], Ty[j]) + self._pair(P, dTy_dzm)
                if self.mode == "snapshot":
                    dTy_dvm = 0.5 * by[0].phase * (1j * by[0].offs[m] * bare_y[j])
                    jac[j, 2 + d + m] -= (self._pair(dP_dv[m], Ty[j])
                                          + self._pair(P, dTy_dvm))
        return res, jac

    def projections(self, theta: np.ndarray) -> dict:
        """All four pairing families at theta (also the non-enforced ones)."""
        lam, z, gamma, v = self.unpack(theta)
        full = _Workspace(self.u, self.gs, "snapshot", None)
        res, _ = full.residual_jacobian(np.concatenate([[lam], z, [gamma], v]))
        d = self.d
        return {"Q": res[0], "yQ": res[1:1 + d].copy(),
                "iLamQ": res[1 + d], "igradQ": res[2 + d:2 + 2 * d].copy()}


def ansatz_on_lattice(params: BubbleParams, gs: GroundState, grid: Grid,
                      lam_scaled: bool = False) -> np.ndarray:
    """P evaluated on the lattice, optionally at the scaled points x/lambda."""
    coords = [x / params.lam for x in grid.x_mesh] if lam_scaled else list(grid.x_mesh)
    vals = np.zeros(grid.shape, dtype=complex)
    for k in (1, 2):
        b = _Bundle(gs, coords, params.bubble_center(k), params.bubble_velocity(k))
        vals += b.phase * b.q
    return vals


def lab_frame_error(u: ComplexField, params: BubbleParams,
                    gs: GroundState) -> ComplexField:
    """eps_lab = u - e^{i gamma} lam^{-2/(p-1)} P(x / lam) on the lattice."""
    p = gs.p
    pref = np.exp(1j * params.gamma) * params.lam ** (-2.0 / (p - 1.0))
    return ComplexField(u.grid, u.values
                        - pref * ansatz_on_lattice(params, gs, u.grid, lam_scaled=True))


def renormalized_h1(eps_lab: ComplexField, lam: float, p: float) -> float:
    """H1 norm of the rescaled error in renormalized coordinates."""
    g = eps_lab.grid
    eh = np.fft.fftn(eps_lab.values)
    scale = g.cell_volume / g.N ** g.d
    l2 = float(np.sum(np.abs(eh) ** 2)) * scale
    grad2 = float(np.sum(g.k_sq * np.abs(eh) ** 2)) * scale
    a = lam ** (4.0 / (p - 1.0) - g.d)
    return float(np.sqrt(a * l2 + a * lam ** 2 * grad2))


def resample_scaled(u: ComplexField, lam: float) -> np.ndarray:
    """Trigonometric interpolation of u at the scaled points lam * y."""
    g = u.grid
    vals = np.fft.fftn(u.values)
    pts = lam * g.axis
    E = np.exp(1j * np.outer(pts + g.L, g.k_axis)) / g.N
    for ax in range(g.d):
        vals = np.moveaxis(np.tensordot(E, np.moveaxis(vals, ax, 0), axes=(1, 0)), 0, ax)
    return vals


def recentered_error(u: ComplexField, params: BubbleParams,
                     gs: GroundState) -> tuple[ComplexField, ComplexField]:
    """Renormalized error eps(y) and its recentered phase-stripped eta1."""
    g = u.grid
    p = gs.p
    w = np.exp(-1j * params.gamma) * params.lam ** (2.0 / (p - 1.0)) \
        * resample_scaled(u, params.lam)
    eps = w - ansatz_on_lattice(params, gs, g)
    # shift by +z1 spectrally, then strip the boost phase
    shift = np.ones(g.shape, dtype=complex)
    z1 = params.bubble_center(1)
    for ax in range(g.d):
        shape = [1] * g.d
        shape[ax] = g.N
        shift = shift * np.exp(1j * g.k_axis * z1[ax]).reshape(shape)
    eta1 = np.fft.ifftn(shift * np.fft.fftn(eps))
    v1 = params.bubble_velocity(1)
    phase = np.exp(-1j * sum(vc * x for vc, x in zip(v1, g.x_mesh)))
    return ComplexField(g, eps), ComplexField(g, phase * eta1)


def decompose(u: ComplexField, guess: BubbleParams, gs: GroundState,
              mode: str = "snapshot", v_override=None, with_fields: bool = True,
              max_iter: int = 40, xtol: float = 1e-12,
              trust_radius: float = 5.0) -> DecompResult:
    """Newton solve of the orthogonality conditions around a parameter guess.

    tracking mode fits (lambda, z, gamma) with v supplied by the caller;
    snapshot mode promotes the i grad Q condition to an equation and fits v
    as well.
    """
    if mode not in ("snapshot", "tracking"):
        raise NoConvergence(f"unknown mode {mode!r}")
    if mode == "tracking":
        if v_override is None:
            raise NoConvergence("tracking mode needs v_override")
        v_override = np.atleast_1d(np.asarray(v_override, dtype=float))
    ws = _Workspace(u, gs, mode, v_override)
    d = ws.d

    theta = np.concatenate([[guess.lam], guess.z, [guess.gamma]]
                           + ([guess.v] if mode == "snapshot" else []))
    history = []
    iters = 0
    for it in range(max_iter):
        res, jac = ws.residual_jacobian(theta)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Newton system: {exc}") from exc
        size = float(np.max(np.abs(step)))
        if it == 0 and size > trust_radius:
            raise OutOfBasin(f"first Newton step {size:.3e} > {trust_radius}")
        theta = theta + step
        if theta[0] <= 0:
            raise NoConvergence(f"scale went nonpositive: {theta[0]:.3e}")
        history.append(size)
        iters = it + 1
        if size < xtol:
            break
    else:
        raise NoConvergence(f"no convergence after {max_iter} iterations; "
                            f"last step {history[-1]:.3e}")

    lam, z, gamma, v = ws.unpack(theta)
    gamma = float(np.angle(np.exp(1j * gamma)))  # report in (-pi, pi]
    params = BubbleParams(lam=float(lam), z=z.copy(), gamma=gamma, v=v.copy())
    proj = ws.projections(theta)

    eps_lab = lab_frame_error(u, params, gs)
    eps_h1 = renormalized_h1(eps_lab, lam, gs.p)
    eta1 = None
    if with_fields:
        _, eta1 = recentered_error(u, params, gs)
    return DecompResult(params=params, eps=eps_lab, eta1=eta1, eps_h1=eps_h1,
                        projections=proj, newton_iters=iters,
                        step_history=tuple(history))


def apply_linearized(which: str, f: ComplexField, gs: GroundState) -> ComplexField:
    """L+ or L- around the origin-centered profile, spectral Laplacian."""
    coef = gs.p if which == "plus" else 1.0
    g = f.grid
    r = np.sqrt(sum(x ** 2 for x in g.x_mesh))
    pot = coef * gs.q_at(r) ** (gs.p - 1.0)
    return ComplexField(g, -laplacian(f) + f.values - pot * f.values)


def quadratic_form(eta: ComplexField, gs: GroundState) -> float:
    """<L+ Re eta, Re eta> + <L- Im eta, Im eta>."""
    g = eta.grid
    re = ComplexField(g, eta.values.real.astype(complex))
    im = ComplexField(g, eta.values.imag.astype(complex))
    lp = apply_linearized("plus", re, gs)
    lm = apply_linearized("minus", im, gs)
    vol = g.cell_volume
    return float((np.sum(lp.values * re.values) + np.sum(lm.values * im.values)).real) * vol


def projection_basis(gs: GroundState, grid: Grid) -> list[np.ndarray]:
    """span{Q, y_m Q, i Lambda Q, i d_m Q} centered at the origin."""
    b = _Bundle(gs, list(grid.x_mesh), np.zeros(grid.d), np.zeros(grid.d))
    return _test_fields(b, grid.d)


def project_out(values: np.ndarray, basis: list[np.ndarray], vol: float) -> np.ndarray:
    """Remove the real-pairing components along the basis fields."""
    gram = np.array([[float(np.sum(bi * np.conj(bj)).real) * vol for bj in basis]
                     for bi in basis])
    rhs = np.array([float(np.sum(values * np.conj(bi)).real) * vol for bi in basis])
    coef = np.linalg.solve(gram, rhs)
    out = values.astype(complex).copy()
    for c, bi in zip(coef, basis):
        out -= c * bi
    return out


def coercivity_check(gs: GroundState, grid: Grid, n_samples: int = 100,
                     seed: int = 0) -> tuple[float, np.ndarray]:
    """Minimum of the normalized quadratic form over projected random fields."""
    from .nls_core import h1_norm_sq

    rng = np.random.default_rng(seed)
    basis = projection_basis(gs, grid)
    envelope = np.exp(-sum(x ** 2 for x in grid.x_mesh) / (grid.L / 4.0) ** 2)
    decay = np.exp(-0.25 * grid.k_sq)
    ratios = np.empty(n_samples)
    for i in range(n_samples):
        noise = (rng.standard_normal(grid.shape)
                 + 1j * rng.standard_normal(grid.shape))
        smooth = np.fft.ifftn(decay * np.fft.fftn(noise)) * envelope
        eta = ComplexField(grid, project_out(smooth, basis, grid.cell_volume))
        ratios[i] = quadratic_form(eta, gs) / h1_norm_sq(eta)
    return float(np.min(ratios)), ratios


def momentum_cutoff(y_offsets: list[np.ndarray], radius: float) -> np.ndarray:
    """Plateau cutoff: 1 inside radius/10, 0 outside radius/8."""
    rho = np.sqrt(sum(o ** 2 for o in y_offsets)) / radius
    return 1.0 - smoothstep((rho - 0.1) / (0.125 - 0.1))


def energy_functional(u: ComplexField, params: BubbleParams, s: float,
                      gs: GroundState, chi_radius_scale: float = 1.0) -> dict:
    """Localized almost-conserved energy of the error: W = H - J.

    H is the nonlinear energy of the error relative to the two-bubble ansatz;
    J localizes the momentum around each bubble with a plateau cutoff of
    radius log(s) * chi_radius_scale.  Everything is evaluated in lab
    coordinates with exact scale factors.
    """
    g = u.grid
    p = gs.p
    lam = params.lam
    vol = g.cell_volume

    eps_lab = lab_frame_error(u, params, gs).values
    a = lam ** (4.0 / (p - 1.0) - g.d)
    eh = np.fft.fftn(eps_lab)
    l2 = float(np.sum(np.abs(eh) ** 2)) * vol / g.N ** g.d
    grads = [np.fft.ifftn(1j * k * eh) for k in g.k_mesh]
    grad2 = sum(float(np.sum(np.abs(gr) ** 2)) * vol for gr in grads)

    quad_part = 0.5 * (a * l2 + a * lam ** 2 * grad2)

    # potential part: int |P+eps|^{p+1} - |P|^{p+1} - (p+1)|P|^{p-1} Re(eps conj(P))
    P_scaled = ansatz_on_lattice(params, gs, g, lam_scaled=True)
    w_scaled = np.exp(-1j * params.gamma) * lam ** (2.0 / (p - 1.0)) * u.values
    eps_scaled = w_scaled - P_scaled
    absP = np.abs(P_scaled)
    pot = (np.abs(w_scaled) ** (p + 1.0) - absP ** (p + 1.0)
           - (p + 1.0) * absP ** (p - 1.0) * (eps_scaled * np.conj(P_scaled)).real)
    H_val = quad_part - lam ** (-g.d) * float(np.sum(pot)) * vol / (p + 1.0)

    radius = np.log(s) * chi_radius_scale
    J_val = 0.0
    grads_eps = grads
    for k in (1, 2):
        v_k = params.bubble_velocity(k)
        y_offs = [x / lam - zc for x, zc in zip(g.x_mesh, params.bubble_center(k))]
        chi = momentum_cutoff(y_offs, radius)
        b = lam ** (1.0 + 4.0 / (p - 1.0) - g.d)
        dens = sum(vc * (gr * np.conj(eps_lab)).imag for vc, gr in zip(v_k, grads_eps))
        J_val += b * float(np.sum(dens * chi)) * vol

    return {"W": H_val - J_val, "H": H_val, "J": J_val,
            "eps_h1": renormalized_h1(ComplexField(g, eps_lab), lam, p)}
