"""Damped Newton solver for stationary viscous Hamilton-Jacobi problems.

The equation solved at the nodes is

    -Lap_g u + (c1/gamma) |grad u|_g^gamma + g(B, grad u) + lam + b = f

with homogeneous Neumann conditions on boxes (imposed by mirror ghosts)
or periodicity on tori.  The unknown pair is (u, lam): because only
derivatives of u enter, constants are a gauge direction, so every solve
carries a quadrature-mean constraint on u together with the additive
multiplier lam.  In ergodic mode lam is the sought critical value; in
plain mode it is reported as the compatibility defect of the data (zero,
up to truncation, for manufactured sources).

Solver stencils are narrow: three-point second differences and centered
first differences with mirror (even-reflection) closures, so the Jacobian
keeps the classical M-matrix sparsity.  Linear solves are matrix-free
GMRES preconditioned by an exact fast-transform inverse of the flat
constrained Laplacian (FFT on tori, DCT-I on boxes).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .fields import (
    ScalarField,
    SymTensorField,
    VectorField,
    gradient,
    hessian,
    laplace_beltrami,
    lq_norm,
)
from .geometry import Grid
from .stencils import apply_along_axis, d1_matrix, d2_matrix


@dataclass
class ProblemSpec:
    """Data of one stationary problem on a fixed grid."""

    grid: Grid
    gamma: float
    c1: float = 1.0
    c2: float = 0.0
    drift: Optional[VectorField] = None
    shift: Optional[ScalarField] = None     # additive zeroth-order data b
    source: Optional[ScalarField] = None    # right-hand side f
    ergodic: bool = False
    lam: float = 0.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("gradient growth gate (In1): need gamma > 1")
        if not self.c1 > 0.0:
            raise ValueError("gradient growth gate (In1): need c1 > 0")
        if self.grid.coord_system != "cartesian":
            raise ValueError("solver runs on box/torus lattices only")

    @property
    def gamma_conj(self) -> float:
        return self.gamma / (self.gamma - 1.0)


@dataclass
class SolverConfig:
    residual_tol: float = 1e-10
    max_iter: int = 60
    min_step: float = 2.0**-20
    eps_reg: float = 1e-8
    picard_fallback: int = 20
    gmres_restart: int = 80
    gmres_maxiter: int = 400
    grad_exponents: tuple = (2.0,)
    other_exponents: tuple = (2.0,)
    initial_guess: Optional[ScalarField] = None
    verbose: bool = False


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    u: ScalarField
    lam: float
    compat_defect: float
    norms: dict
    history: list = dataclass_field(default_factory=list)
    message: str = ""
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# solver-side discrete operators (mirror/periodic closures)


class _Ops:
    """Narrow-stencil operators of one grid, with Neumann mirror closures."""

    def __init__(self, grid: Grid):
        if grid.coord_system != "cartesian":
            raise ValueError("solver operators need a cartesian lattice")
        self.grid = grid
        self.naxes = len(grid.shape)
        self.d1 = []
        self.d2 = []
        for a in range(self.naxes):
            bc1 = "periodic" if grid.periodic[a] else "mirror"
            self.d1.append(d1_matrix(grid.shape[a], grid.spacings[a], bc1))
            self.d2.append(d2_matrix(grid.shape[a], grid.spacings[a], bc1))
        if not grid.is_flat and not all(grid.periodic):
            raise NotImplementedError("conformal solving is supported on tori only")
        if grid.is_flat:
            self.dphi = None
        else:
            self.dphi = np.stack(
                [apply_along_axis(self.d1[a], grid.phi, a) for a in range(self.naxes)]
            )

    def grad(self, vals: np.ndarray) -> np.ndarray:
        return np.stack(
            [apply_along_axis(self.d1[a], vals, a) for a in range(self.naxes)]
        )

    def lap_flat(self, vals: np.ndarray) -> np.ndarray:
        out = apply_along_axis(self.d2[0], vals, 0)
        for a in range(1, self.naxes):
            out += apply_along_axis(self.d2[a], vals, a)
        return out

    def lap_metric(self, vals: np.ndarray, dvals: Optional[np.ndarray] = None) -> np.ndarray:
        flat = self.lap_flat(vals)
        if self.grid.is_flat:
            return flat
        if dvals is None:
            dvals = self.grad(vals)
        d = self.grid.dim
        corr = (d - 2.0) * np.sum(self.dphi * dvals, axis=0)
        return self.grid.conformal_factor(-2.0) * (flat + corr)

    def transport_apply(self, vals: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        """(-Lap_g + coeff . D) vals, the linearized operator."""
        dvals = self.grad(vals)
        out = -self.lap_metric(vals, dvals)
        out += np.sum(coeff * dvals, axis=0)
        return out

    def transport_transpose_apply(self, vals: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        """Plain matrix transpose of transport_apply (same coeff frozen)."""
        g = self.grid
        if not g.is_flat:
            raise NotImplementedError("transpose transport is used on flat grids only")
        out = np.zeros(g.shape)
        for a in range(self.naxes):
            out -= apply_along_axis(self.d2[a].T.tocsr(), vals, a)
            out += apply_along_axis(self.d1[a].T.tocsr(), coeff[a] * vals, a)
        return out


class _FlatInverter:
    """Exact fast-transform inverse of the flat constrained Laplacian.

    Solves  -Lap x + mu = r,  <x>_w = c  for (x, mu); used as the GMRES
    preconditioner for the bordered Newton systems (and as the exact
    linear solver inside Picard fallback sweeps on flat grids).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.periodic = all(grid.periodic)
        if not self.periodic and any(grid.periodic):
            raise ValueError("mixed periodic/box axes are not supported")
        shape = grid.shape
        sym = np.zeros(shape)
        for a, (n, h) in enumerate(zip(shape, grid.spacings)):
            if self.periodic:
                k = np.arange(n)
                s = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h**2
            else:
                k = np.arange(n)
                s = (2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / h**2
            sh = [1] * len(shape)
            sh[a] = n
            sym = sym + s.reshape(sh)
        if self.periodic:
            # real FFT shrinks the last axis
            self.sym = np.zeros(shape[:-1] + (shape[-1] // 2 + 1,))
            for a, (n, h) in enumerate(zip(shape, grid.spacings)):
                if a == len(shape) - 1:
                    k = np.arange(n // 2 + 1)
                else:
                    k = np.arange(n)
                s = (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h**2
                sh = [1] * len(shape)
                sh[a] = len(k)
                self.sym = self.sym + s.reshape(sh)
        else:
            self.sym = sym
        self.inv_sym = np.zeros_like(self.sym)
        mask = self.sym > 1e-14
        self.inv_sym[mask] = 1.0 / self.sym[mask]
        self.w = grid.weights
        self.vol = grid.vol

    def solve(self, r: np.ndarray, c: float = 0.0):
        mu = float(np.sum(self.w * r)) / self.vol
        r0 = r - mu
        if self.periodic:
            rhat = sfft.rfftn(r0)
            x = sfft.irfftn(rhat * self.inv_sym, s=self.grid.shape)
        else:
            rhat = sfft.dctn(r0, type=1)
            x = sfft.idctn(rhat * self.inv_sym, type=1)
        x = x + (c - float(np.sum(self.w * x))) / self.vol
        return x, mu


# ---------------------------------------------------------------------------
# residual and helpers


def _metric_grad_norm_sq(spec: ProblemSpec, dvals: np.ndarray) -> np.ndarray:
    sq = np.sum(dvals**2, axis=0)
    if spec.grid.is_flat:
        return sq
    return spec.grid.conformal_factor(-2.0) * sq


def residual(u: ScalarField, spec: ProblemSpec, lam: Optional[float] = None) -> ScalarField:
    """Node-wise residual of the stationary equation (solver stencils)."""
    if u.grid is not spec.grid and u.grid.shape != spec.grid.shape:
        raise ValueError("field and problem live on different grids")
    ops = _ops_for(spec.grid)
    if lam is None:
        lam_val = spec.lam if spec.ergodic else 0.0
    else:
        lam_val = lam
    vals = _residual_core(spec, ops, u.values) + lam_val
    return ScalarField(spec.grid, vals)


def _residual_core(spec: ProblemSpec, ops: _Ops, uvals: np.ndarray) -> np.ndarray:
    """-Lap_g u + (c1/gamma)|grad u|^gamma + g(B, grad u) + b - f."""
    dvals = ops.grad(uvals)
    out = -ops.lap_metric(uvals, dvals)
    gn2 = _metric_grad_norm_sq(spec, dvals)
    out += (spec.c1 / spec.gamma) * gn2 ** (spec.gamma / 2.0)
    if spec.drift is not None:
        # g(B, grad u) reduces to B^i du_i for conformal metrics as well
        out += np.sum(spec.drift.values * dvals, axis=0)
    if spec.shift is not None:
        out += spec.shift.values
    if spec.source is not None:
        out -= spec.source.values
    return out


def transport_coefficient(spec: ProblemSpec, uvals: np.ndarray, eps_reg: float) -> np.ndarray:
    """Lattice coefficient of the linearized first-order term.

    a_i = c1 e^{-gamma phi} (|du|^2 + eps^2)^{(gamma-2)/2} du_i + B_i; the
    regularization keeps the coefficient finite at critical points when
    gamma < 2.
    """
    ops = _ops_for(spec.grid)
    dvals = ops.grad(uvals)
    sq = np.sum(dvals**2, axis=0)
    amp = spec.c1 * (sq + eps_reg**2) ** ((spec.gamma - 2.0) / 2.0)
    if not spec.grid.is_flat:
        amp = amp * spec.grid.conformal_factor(-spec.gamma)
    coeff = amp * dvals
    if spec.drift is not None:
        coeff = coeff + spec.drift.values
    return coeff


_OPS_CACHE: dict = {}
_INV_CACHE: dict = {}


def _ops_for(grid: Grid) -> _Ops:
    key = id(grid)
    if key not in _OPS_CACHE or _OPS_CACHE[key][0]() is None:
        import weakref

        _OPS_CACHE[key] = (weakref.ref(grid), _Ops(grid))
    return _OPS_CACHE[key][1]


def _inverter_for(grid: Grid) -> _FlatInverter:
    key = id(grid)
    if key not in _INV_CACHE or _INV_CACHE[key][0]() is None:
        import weakref

        _INV_CACHE[key] = (weakref.ref(grid), _FlatInverter(grid))
    return _INV_CACHE[key][1]


# ---------------------------------------------------------------------------
# Newton driver


def _weighted_norm(grid: Grid, vals: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.weights * vals**2)))


def bordered_solve(
    grid: Grid,
    apply_fn,
    inv: _FlatInverter,
    rhs_field: np.ndarray,
    rhs_constraint: float,
    rtol: float,
    restart: int = 80,
    maxiter: int = 400,
):
    """Constrained system [[A, 1], [w^T, 0]] [x; mu] = [rhs; c] via GMRES.

    apply_fn maps a node array to A x; the preconditioner is the exact
    inverse of the flat constrained Laplacian.  Returns (x, mu, info)
    with info = 0 on GMRES success.
    """
    shape = grid.shape
    n = int(np.prod(shape))
    w = grid.weights

    def matvec(z):
        v = z[:-1].reshape(shape)
        mu = z[-1]
        top = apply_fn(v) + mu
        return np.concatenate([top.reshape(-1), [float(np.sum(w * v))]])

    def psolve(z):
        r = z[:-1].reshape(shape)
        c = z[-1]
        x, mu = inv.solve(r, c)
        return np.concatenate([x.reshape(-1), [mu]])

    A = LinearOperator((n + 1, n + 1), matvec=matvec)
    M = LinearOperator((n + 1, n + 1), matvec=psolve)
    b = np.concatenate([rhs_field.reshape(-1), [rhs_constraint]])
    z0 = psolve(b)
    sol, info = gmres(
        A, b, x0=z0, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter, M=M
    )
    return sol[:-1].reshape(shape), float(sol[-1]), int(info)


def solve(spec: ProblemSpec, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Damped Newton with mean constraint and additive multiplier.

    Ergodic mode returns the multiplier as the critical constant; plain
    mode reports it as the compatibility defect of the discrete data.
    """
    cfg = cfg or SolverConfig()
    grid = spec.grid
    ops = _ops_for(grid)
    inv = _inverter_for(grid)
    t0 = time.perf_counter()

    if cfg.initial_guess is not None:
        uvals = np.array(cfg.initial_guess.values, dtype=float)
        uvals -= float(np.sum(grid.weights * uvals)) / grid.vol
    else:
        uvals = np.zeros(grid.shape)
    lam = 0.0
    history = []
    picard_used = False
    message = ""

    def F(uv, lv):
        return _residual_core(spec, ops, uv) + lv

    res = F(uvals, lam)
    res_norm = _weighted_norm(grid, res)
    res0 = max(res_norm, 1e-30)
    history.append(res_norm)
    iters = 0
    converged = res_norm <= cfg.residual_tol

    while not converged and iters < cfg.max_iter:
        coeff = transport_coefficient(spec, uvals, cfg.eps_reg)
        rtol = float(np.clip(res_norm / res0, 1e-10, 1e-2))
        delta_u, delta_lam, info = bordered_solve(
            grid,
            lambda v: ops.transport_apply(v, coeff),
            inv,
            -res,
            -float(np.sum(grid.weights * uvals)),
            rtol,
            restart=cfg.gmres_restart,
            maxiter=cfg.gmres_maxiter,
        )
        alpha = 1.0
        accepted = False
        while alpha >= cfg.min_step:
            trial_u = uvals + alpha * delta_u
            trial_lam = lam + alpha * delta_lam
            trial_res = F(trial_u, trial_lam)
            trial_norm = _weighted_norm(grid, trial_res)
            if trial_norm <= (1.0 - 1e-4 * alpha) * res_norm or trial_norm <= cfg.residual_tol:
                accepted = True
                break
            alpha *= 0.5
        if accepted:
            uvals, lam, res, res_norm = trial_u, trial_lam, trial_res, trial_norm
            iters += 1
            history.append(res_norm)
            converged = res_norm <= cfg.residual_tol
            continue
        # Newton stalled: damped fixed-point sweeps, then retry Newton once
        if picard_used:
            message = "stalled: backtracking floor reached twice"
            break
        picard_used = True
        for _ in range(cfg.picard_fallback):
            rhs = -(_residual_core(spec, ops, uvals) - (-ops.lap_metric(uvals)))
            # rhs = f - b - H(grad u) - B.grad u; solve -Lap v + mu = rhs
            v, mu = inv.solve(rhs, 0.0)
            uvals = uvals + 0.5 * (v - uvals)
            lam = lam + 0.5 * (mu - lam)
        res = F(uvals, lam)
        res_norm = _weighted_norm(grid, res)
        history.append(res_norm)
        iters += 1

    # exact gauge fix: constants do not change the residual
    mean = float(np.sum(grid.weights * uvals)) / grid.vol
    uvals = uvals - mean

    u_field = ScalarField(grid, uvals)
    norms = solution_norm_table(spec, u_field, cfg)
    if not converged and not message:
        message = "iteration budget exhausted"
    return SolveReport(
        converged=bool(converged),
        iterations=iters,
        residual=res_norm,
        u=u_field,
        lam=float(lam) if spec.ergodic else 0.0,
        compat_defect=0.0 if spec.ergodic else float(lam),
        norms=norms,
        history=history,
        message=message,
        wall_time=time.perf_counter() - t0,
    )


def solve_ergodic(spec: ProblemSpec, cfg: Optional[SolverConfig] = None) -> SolveReport:
    if not spec.ergodic:
        raise ValueError("solve_ergodic needs a spec with ergodic=True")
    return solve(spec, cfg)


def solution_norm_table(spec: ProblemSpec, u: ScalarField, cfg: SolverConfig) -> dict:
    """Gradient/laplacian/Hamiltonian/Hessian norms via the analysis calculus."""
    gradu = gradient(u)
    lap = laplace_beltrami(u)
    hess = hessian(u)
    from .fields import pointwise_norm

    ham = ScalarField(u.grid, pointwise_norm(gradu) ** spec.gamma)
    out = {"grad": {}, "lap": {}, "grad_pow_gamma": {}, "hess": {}}
    for r in cfg.grad_exponents:
        out["grad"][_fmt_exp(r)] = lq_norm(gradu, r).value
    for q in cfg.other_exponents:
        out["lap"][_fmt_exp(q)] = lq_norm(lap, q).value
        out["grad_pow_gamma"][_fmt_exp(q)] = lq_norm(ham, q).value
        out["hess"][_fmt_exp(q)] = lq_norm(hess, q).value
    return out


def _fmt_exp(q: float) -> str:
    q = float(q)
    return "inf" if np.isinf(q) else repr(q)


# ---------------------------------------------------------------------------
# manufactured problems


def manufactured_solution(grid: Grid) -> ScalarField:
    """Neumann-compatible product-of-cosines reference solution."""
    mesh = grid.mesh()
    vals = np.ones(grid.shape)
    for x, L in zip(mesh, grid.domain.extents):
        vals = vals * np.cos(np.pi * x / L)
    return ScalarField(grid, vals)


def manufactured_source(spec_grid: Grid, gamma: float, c1: float = 1.0, symbolic: bool = True):
    """Source that makes the cosine product an exact (symbolic=True:
    continuum; else discrete) solution of the plain equation."""
    grid = spec_grid
    mesh = grid.mesh()
    Ls = grid.domain.extents
    ustar = manufactured_solution(grid)
    if not symbolic:
        spec = ProblemSpec(grid, gamma=gamma, c1=c1)
        ops = _ops_for(grid)
        vals = _residual_core(spec, ops, ustar.values)
        return ustar, ScalarField(grid, vals)
    lap = np.zeros(grid.shape)
    grad_sq = np.zeros(grid.shape)
    for a, (x, L) in enumerate(zip(mesh, Ls)):
        freq = np.pi / L
        lap -= freq**2 * ustar.values
        prod = np.ones(grid.shape)
        for b2, (y, M) in enumerate(zip(mesh, Ls)):
            t = np.pi * y / M
            prod = prod * (np.sin(t) if b2 == a else np.cos(t))
        grad_sq += (freq * prod) ** 2
    fvals = -lap + (c1 / gamma) * grad_sq ** (gamma / 2.0)
    return ustar, ScalarField(grid, fvals)
