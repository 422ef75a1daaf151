"""Scaling-law experiments and functional-constant measurements.

Two headline a priori bounds are checked behaviorally at desk scale: the
gradient-integrability bound (the r-norm of the gradient grows no faster
than the data norm) and maximal integrability (Laplacian and gradient
power land in the same Lebesgue space as the source).  "Bounded constant"
is operationalized as a log-log slope threshold on amplitude sweeps,
since the underlying constants are nonconstructive.  The module also
measures lower bounds for the Sobolev embedding constant (Rayleigh
quotient ascent) and the second-derivative/Laplacian norm ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np

from .bernstein import MaxRegParams, maxreg_params
from .fields import (
    ScalarField,
    VectorField,
    gradient,
    hessian,
    laplace_beltrami,
    lq_norm,
    pointwise_norm,
)
from .geometry import Grid, ricci_lower_bound
from .hjb import ProblemSpec, SolveReport, SolverConfig, solve_ergodic
from .stencils import apply_along_axis


# ---------------------------------------------------------------------------
# closed-form exponents of the gradient-integrability bound


@dataclass(frozen=True)
class ThmOneExponents:
    """Exponent bookkeeping for the gradient-integrability scaling."""

    d: int
    p: float
    r: float
    beta_p: float
    q: float


def thm1_exponents(d: int, p: float) -> ThmOneExponents:
    """r = 2(p+1)d/(d-2), beta_p = (p+1)d/(d+2p), q = 2 beta_p.

    The data exponent q stays strictly between 1 and d and climbs to d as
    p grows, so arbitrarily high gradient integrability is bought with
    data integrability still below the dimension.
    """
    if d < 3:
        raise ValueError("dimension must be at least 3")
    if p < 1:
        raise ValueError("gradient-power parameter must be at least 1")
    r = 2.0 * (p + 1.0) * d / (d - 2.0)
    beta_p = (p + 1.0) * d / (d + 2.0 * p)
    q = 2.0 * beta_p
    out = ThmOneExponents(d=d, p=float(p), r=r, beta_p=beta_p, q=q)
    if not (1.0 < q < d):
        raise AssertionError("exponent bookkeeping out of range: q must lie in (1, d)")
    return out


# ---------------------------------------------------------------------------
# amplitude sweeps


@dataclass
class SweepSpec:
    """Inputs of one amplitude sweep over f = t * f0."""

    grid: Grid
    gamma: float
    source: ScalarField                     # base profile f0
    amplitudes: tuple
    q: float
    r: Optional[float] = None               # gradient exponent (first sweep kind)
    params: Optional[MaxRegParams] = None   # exponent set (second sweep kind)
    c1: float = 1.0
    drift: Optional[VectorField] = None
    drift_s: Optional[float] = None         # integrability exponent of the drift bound
    drift_theta: Optional[float] = None     # declared bound for ||B||_{L^s}
    shift: Optional[ScalarField] = None
    cfg: Optional[SolverConfig] = None

    def __post_init__(self):
        amps = tuple(float(t) for t in self.amplitudes)
        if any(t < 0 for t in amps):
            raise ValueError("amplitudes must be nonnegative")
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("amplitudes must be strictly increasing")
        self.amplitudes = amps


@dataclass
class ScalingReport:
    kind: str
    amplitudes: tuple
    ratios: tuple
    slope: float
    slope_top_decade: float
    max_ratio: float
    ratio_at_one: Optional[float]
    lambdas: tuple
    K: float
    gates: dict
    converged: tuple
    aborted: bool = False
    message: str = ""
    norm_rows: list = dataclass_field(default_factory=list)


def _fit_slope(ts, ratios):
    """Least-squares slope of log ratio vs log t over usable points."""
    pts = [(t, r) for t, r in zip(ts, ratios) if t > 0 and r > 0]
    if len(pts) < 2:
        return 0.0
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    x = x - x.mean()
    return float(np.sum(x * (y - y.mean())) / np.sum(x * x))


def _top_decade_slope(ts, ratios):
    tmax = max(ts)
    sel = [(t, r) for t, r in zip(ts, ratios) if t >= tmax / 10.0 - 1e-12]
    return _fit_slope([s[0] for s in sel], [s[1] for s in sel])


def _drift_gate(spec: SweepSpec) -> dict:
    gates = {"theta": 0.0, "s": None}
    if spec.drift is None:
        return gates
    if spec.drift_s is None or spec.drift_s <= spec.grid.dim:
        raise ValueError(
            "drift integrability gate: need s > d when a drift is present"
        )
    norm = lq_norm(spec.drift, spec.drift_s).value
    theta = spec.drift_theta if spec.drift_theta is not None else norm
    if norm > theta * (1.0 + 1e-12):
        raise ValueError("drift bound gate: ||B||_{L^s} exceeds the declared theta")
    gates["theta"] = float(theta)
    gates["s"] = float(spec.drift_s)
    return gates


def _common_gates(spec: SweepSpec, K: float, sobolev: Optional[float]) -> dict:
    grid = spec.grid
    gates = {
        "kappa": ricci_lower_bound(grid),
        "rho": float(max(grid.domain.extents) if grid.coord_system == "cartesian" else grid.domain.radius),
        "sigma_hat": sobolev,
        "K": K,
    }
    gates.update(_drift_gate(spec))
    return gates


def _run_sweep(spec: SweepSpec, kind: str) -> ScalingReport:
    cfg = spec.cfg or SolverConfig()
    ts, ratios, lambdas, convs, rows = [], [], [], [], []
    K = 0.0
    warm = None
    aborted = False
    message = ""
    for t in spec.amplitudes:
        fvals = t * spec.source.values
        f_field = ScalarField(spec.grid, fvals)
        prob = ProblemSpec(
            grid=spec.grid,
            gamma=spec.gamma,
            c1=spec.c1,
            drift=spec.drift,
            shift=spec.shift,
            source=f_field,
            ergodic=True,
        )
        run_cfg = SolverConfig(
            residual_tol=cfg.residual_tol,
            max_iter=cfg.max_iter,
            min_step=cfg.min_step,
            eps_reg=cfg.eps_reg,
            picard_fallback=cfg.picard_fallback,
            gmres_restart=cfg.gmres_restart,
            gmres_maxiter=cfg.gmres_maxiter,
            grad_exponents=cfg.grad_exponents,
            other_exponents=cfg.other_exponents,
            initial_guess=warm,
        )
        rep = solve_ergodic(prob, run_cfg)
        convs.append(rep.converged)
        if not rep.converged:
            aborted = True
            message = "solve failed to converge at amplitude " + repr(t)
            break
        warm = rep.u
        fq = lq_norm(f_field, spec.q).value
        gradu = gradient(rep.u)
        grad1 = lq_norm(gradu, 1.0).value
        K = max(K, fq + grad1)
        if kind == "gradient-integrability":
            num = lq_norm(gradu, spec.r).value
        else:
            lap_q = lq_norm(laplace_beltrami(rep.u), spec.q).value
            ham = ScalarField(spec.grid, pointwise_norm(gradu) ** spec.gamma)
            ham_q = lq_norm(ham, spec.q).value
            num = lap_q + ham_q
        ratio = num / (1.0 + fq)
        ts.append(t)
        ratios.append(ratio)
        lambdas.append(rep.lam)
        rows.append(
            {
                "t": t,
                "ratio": ratio,
                "lambda": rep.lam,
                "f_q": fq,
                "grad_l1": grad1,
                "iterations": rep.iterations,
                "residual": rep.residual,
            }
        )
    sob = sobolev_constant_estimate(spec.grid, starts=3, iters=60)
    gates = _common_gates(spec, K, sob)
    ratio_at_one = None
    for t, r in zip(ts, ratios):
        if abs(t - 1.0) <= 1e-12:
            ratio_at_one = r
    return ScalingReport(
        kind=kind,
        amplitudes=tuple(ts),
        ratios=tuple(ratios),
        slope=_fit_slope(ts, ratios),
        slope_top_decade=_top_decade_slope(ts, ratios) if ts else 0.0,
        max_ratio=max(ratios) if ratios else 0.0,
        ratio_at_one=ratio_at_one,
        lambdas=tuple(lambdas),
        K=K,
        gates=gates,
        converged=tuple(convs),
        aborted=aborted,
        message=message,
        norm_rows=rows,
    )


def thm1_sweep(spec: SweepSpec) -> ScalingReport:
    """Amplitude sweep of the gradient r-norm against the data q-norm."""
    if spec.r is None:
        raise ValueError("this sweep needs the gradient exponent r")
    _drift_gate(spec)  # fail fast before any solve
    return _run_sweep(spec, "gradient-integrability")


def thm2_sweep(spec: SweepSpec) -> ScalingReport:
    """Amplitude sweep of Laplacian + gradient-power norms in L^q."""
    if spec.drift is not None:
        raise ValueError("maximal-integrability sweeps require zero drift")
    params = spec.params or maxreg_params(spec.grid.dim, spec.gamma, spec.q, 0.1)
    if abs(params.q - spec.q) > 1e-12 or abs(params.gamma - spec.gamma) > 1e-12:
        raise ValueError("exponent set disagrees with the sweep parameters")
    return _run_sweep(spec, "maximal-integrability")


# ---------------------------------------------------------------------------
# base source profiles


def source_family(
    grid: Grid,
    kind: str,
    q_norm: float,
    seed: int = 0,
    power_exponent: Optional[float] = None,
) -> ScalarField:
    """Smooth base profiles f0, normalized to unit L^q norm.

    kind 'mode': single cosine mode; 'bump': concentrated periodic bump;
    'power': mollified inverse-power spike min(A, |x-x0|^{-d/q~}) probing
    unbounded data at desk scale.
    """
    mesh = grid.mesh()
    Ls = grid.domain.extents
    if kind == "mode":
        vals = np.cos(2.0 * np.pi * mesh[0] / Ls[0])
    elif kind == "bump":
        vals = np.ones(grid.shape)
        for x, L in zip(mesh, Ls):
            vals = vals * np.exp(8.0 * (np.cos(2.0 * np.pi * (x - 0.5 * L) / L) - 1.0))
    elif kind == "power":
        qt = power_exponent if power_exponent is not None else q_norm * 1.1
        d = grid.dim
        dist_sq = np.zeros(grid.shape)
        for x, L in zip(mesh, Ls):
            delta = x - 0.5 * L
            if grid.periodic[0]:
                delta = np.minimum(np.abs(delta), L - np.abs(delta))
            dist_sq = dist_sq + delta**2
        h = max(grid.spacings)
        cap = (2.0 * h) ** (-d / qt)
        with np.errstate(divide="ignore"):
            vals = np.minimum(cap, np.sqrt(dist_sq) ** (-d / qt))
    else:
        raise ValueError("unknown source family: " + repr(kind))
    f = ScalarField(grid, vals)
    scale = lq_norm(f, q_norm).value
    return ScalarField(grid, vals / scale)


# ---------------------------------------------------------------------------
# Sobolev embedding constant (Rayleigh quotient ascent)


def sobolev_ratio(u: ScalarField) -> float:
    """R(u) = ||u||_{2d/(d-2)} / (||grad u||_2 + ||u||_2)."""
    d = u.grid.dim
    if d < 3:
        raise ValueError("dimension must be at least 3")
    m = 2.0 * d / (d - 2.0)
    num = lq_norm(u, m).value
    den = lq_norm(gradient(u), 2.0).value + lq_norm(u, 2.0).value
    if den == 0.0:
        raise ValueError("zero field has no quotient")
    return num / den


def _quotient_gradient(u: ScalarField) -> np.ndarray:
    """Nodal ascent direction of the quotient (adjoint differentiation)."""
    grid = u.grid
    d = grid.dim
    m = 2.0 * d / (d - 2.0)
    w = grid.weights
    vals = u.values
    num = lq_norm(u, m).value
    l2 = lq_norm(u, 2.0).value
    g2 = lq_norm(gradient(u), 2.0).value
    den = g2 + l2
    dnum = w * np.sign(vals) * np.abs(vals) ** (m - 1.0) / max(num, 1e-300) ** (m - 1.0)
    dl2 = w * vals / max(l2, 1e-300)
    scale = grid.conformal_factor(-2.0) if not grid.is_flat else 1.0
    dg2 = np.zeros(grid.shape)
    for a in range(len(grid.shape)):
        da = grid.partial(vals, a)
        dg2 += apply_along_axis(grid.d1(a).T.tocsr(), w * scale * da, a)
    dg2 = dg2 / max(g2, 1e-300)
    return (dnum * den - num * (dg2 + dl2)) / den**2


def sobolev_ascent(grid: Grid, start: np.ndarray, iters: int = 120):
    """Monotone normalized gradient ascent; returns (field, history)."""
    vals = np.array(start, dtype=float)
    nrm = math.sqrt(float(np.sum(grid.weights * vals**2)))
    vals = vals / max(nrm, 1e-300)
    u = ScalarField(grid, vals)
    history = [sobolev_ratio(u)]
    step = 0.5
    for _ in range(iters):
        direction = _quotient_gradient(u)
        dn = math.sqrt(float(np.sum(direction**2)))
        if dn == 0.0:
            break
        direction = direction / dn
        improved = False
        while step >= 1e-12:
            trial = u.values + step * direction
            tn = math.sqrt(float(np.sum(grid.weights * trial**2)))
            trial_u = ScalarField(grid, trial / max(tn, 1e-300))
            r = sobolev_ratio(trial_u)
            if r > history[-1]:
                u = trial_u
                history.append(r)
                improved = True
                step = min(step * 2.0, 1.0)
                break
            step *= 0.5
        if not improved:
            break
    return u, history


def sobolev_constant_estimate(
    grid: Grid, starts: int = 20, iters: int = 120, seed: int = 0
) -> float:
    """Best Rayleigh quotient found from random starts plus the constant.

    A lower bound for the embedding constant; the constant field alone
    already gives vol^{1/d'} scaling (exactly 1 on the unit box).
    """
    rng = np.random.default_rng(seed)
    best = sobolev_ratio(ScalarField(grid, np.ones(grid.shape)))
    for _ in range(starts):
        start = rng.normal(size=grid.shape)
        _, history = sobolev_ascent(grid, start, iters)
        best = max(best, history[-1])
    return float(best)


# ---------------------------------------------------------------------------
# second-derivative / Laplacian norm ratio


def cz_ratio(samples, p: float) -> float:
    """max ||Hess u||_{L^p} / ||Lap u||_{L^p} over the given fields.

    An empirical lower bound for the norm-conversion constant; exactly 1
    at p = 2 on flat tori, where both sides share one Fourier symbol.
    """
    if p <= 1:
        raise ValueError("norm exponent must exceed 1")
    best = None
    for u in samples:
        lap = lq_norm(laplace_beltrami(u), p).value
        if lap <= 1e-300:
            continue
        hess = lq_norm(hessian(u), p).value
        val = hess / lap
        best = val if best is None else max(best, val)
    if best is None:
        raise ValueError("all samples are harmonic: the ratio is undefined")
    return float(best)


def random_band_limited(grid: Grid, seed: int = 0, modes: int = 3) -> ScalarField:
    """Random low-frequency trigonometric polynomial (periodic grids)."""
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    Ls = grid.domain.extents
    vals = np.zeros(grid.shape)
    naxes = len(grid.shape)
    for _ in range(8):
        ks = rng.integers(-modes, modes + 1, size=naxes)
        if not np.any(ks):
            continue
        amp = rng.normal()
        phase = rng.uniform(0.0, 2.0 * np.pi)
        arg = np.zeros(grid.shape)
        for x, L, k in zip(mesh, Ls, ks):
            arg = arg + 2.0 * np.pi * k * x / L
        vals = vals + amp * np.cos(arg + phase)
    return ScalarField(grid, vals)
