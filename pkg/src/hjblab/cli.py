"""Batch front end: config-driven runs, reports, tables, and plots.

Subcommands: solve, ergodic, bochner-check, bernstein-audit, thm1-sweep,
thm2-sweep, constants, mfg.  Every run writes a schema-versioned
report.json (deterministic for a fixed config and seed: sorted keys, no
timestamps) plus CSV tables and optional SVG plots into the output
directory.  Exit status 0 means every asserted invariant passed, 1 means
an assertion or solve failed, 2 means the request itself was invalid
(usage, config syntax, or assumption gate).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np
import scipy.fft as sfft

from . import bernstein, estimates, mfg as mfg_mod
from .config import ConfigError, RunConfig, parse_config
from .fields import (
    ScalarField,
    VectorField,
    dump_field_csv,
    gradient,
    lq_norm,
)
from .geometry import DomainSpec, MetricSpec, build_grid, ricci_lower_bound
from .hjb import (
    ProblemSpec,
    SolverConfig,
    manufactured_solution,
    manufactured_source,
    solve,
    solve_ergodic,
)
from .svg import line_plot

_SUBCOMMANDS = (
    "solve",
    "ergodic",
    "bochner-check",
    "bernstein-audit",
    "thm1-sweep",
    "thm2-sweep",
    "constants",
    "mfg",
)

DEFAULT_CONFIG = ""  # all defaults; see config module


# ---------------------------------------------------------------------------
# serialization helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# field builders from config blocks


def _build_grid(cfg: RunConfig):
    return build_grid(cfg.domain, cfg.metric)


def _mode_field(grid, amplitude: float, axis: int) -> ScalarField:
    mesh = grid.mesh()
    L = grid.domain.extents[axis]
    return ScalarField(grid, amplitude * np.cos(2.0 * np.pi * mesh[axis] / L))


def _build_shift(cfg: RunConfig, grid):
    prob = cfg["problem"]
    if prob["shift_kind"] == "none":
        return None
    return _mode_field(grid, prob["shift_amplitude"], prob["shift_axis"] - 1)


def _build_drift(cfg: RunConfig, grid):
    prob = cfg["problem"]
    if prob["drift_kind"] == "none":
        return None, {}
    axis = prob["drift_axis"] - 1
    mesh = grid.mesh()
    L = grid.domain.extents[axis]
    vals = np.zeros((len(grid.shape),) + grid.shape)
    vals[0] = prob["drift_amplitude"] * np.sin(2.0 * np.pi * mesh[axis] / L)
    drift = VectorField(grid, vals)
    s = prob["drift_s"]
    norm = lq_norm(drift, s).value
    theta = prob["drift_theta"] if prob["drift_theta"] is not None else norm
    if norm > theta * (1.0 + 1e-12):
        raise ConfigError(
            "assumption gate (In2) violated: ||B||_{L^s} = "
            + repr(norm)
            + " exceeds theta = "
            + repr(theta)
        )
    return drift, {"s": s, "theta": theta}


def _build_source(cfg: RunConfig, grid, q_norm: float = 2.0):
    prob = cfg["problem"]
    kind = prob["source_kind"]
    if kind == "none":
        return None
    base = estimates.source_family(grid, kind, q_norm)
    return ScalarField(grid, prob["source_amplitude"] * base.values)


def _gate_block(grid, seed: int, drift_info=None, K=None, c_v=None) -> dict:
    gates = {
        "kappa": ricci_lower_bound(grid),
        "rho": float(
            max(grid.domain.extents)
            if grid.coord_system == "cartesian"
            else grid.domain.radius
        ),
        "sigma_hat": estimates.sobolev_constant_estimate(grid, starts=2, iters=40, seed=seed)
        if grid.dim >= 3
        else None,
        "theta": (drift_info or {}).get("theta", 0.0),
        "s": (drift_info or {}).get("s"),
        "K": K,
        "C_V": c_v,
    }
    return gates


def _report_skeleton(subcommand: str, seed: int) -> dict:
    return {
        "schema": 1,
        "subcommand": subcommand,
        "seed": seed,
        "failures": [],
        "passed": True,
    }


def _fail(report: dict, message: str) -> None:
    report["failures"].append(message)
    report["passed"] = False


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_solve(cfg: RunConfig, out: str, seed: int, ergodic: bool) -> dict:
    report = _report_skeleton("ergodic" if ergodic else "solve", seed)
    if cfg.domain.kind == "disc":
        raise ConfigError(
            "assumption gate (D1) violated: solves need a convex box or a torus"
        )
    prob_blk = cfg["problem"]
    if prob_blk["manufactured"] != "none":
        return _manufactured_study(cfg, out, seed, report)
    grid = _build_grid(cfg)
    drift, drift_info = _build_drift(cfg, grid)
    shift = _build_shift(cfg, grid)
    source = _build_source(cfg, grid)
    spec = ProblemSpec(
        grid=grid,
        gamma=prob_blk["gamma"],
        c1=prob_blk["c1"],
        c2=prob_blk["c2"],
        drift=drift,
        shift=shift,
        source=source,
        ergodic=ergodic or prob_blk["ergodic"],
    )
    scfg = SolverConfig()
    rep = solve_ergodic(spec, scfg) if spec.ergodic else solve(spec, scfg)
    if not rep.converged:
        _fail(report, "solve did not converge: " + rep.message)
    fq = lq_norm(source, 2.0).value if source is not None else 0.0
    grad1 = lq_norm(gradient(rep.u), 1.0).value
    report["gates"] = _gate_block(grid, seed, drift_info, K=fq + grad1)
    report["results"] = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "lambda": rep.lam,
        "compat_defect": rep.compat_defect,
        "norms": rep.norms,
    }
    rows = []
    for family, table in sorted(rep.norms.items()):
        for expo, value in sorted(table.items()):
            rows.append((family, expo, value))
    _write_csv(os.path.join(out, "norms.csv"), ("family", "exponent", "value"), rows)
    if cfg["output"]["dump_fields"]:
        dump_field_csv(rep.u, os.path.join(out, "u.csv"))
    return report


def _manufactured_study(cfg: RunConfig, out: str, seed: int, report: dict) -> dict:
    if cfg.domain.kind != "box":
        raise ConfigError("manufactured studies need a box domain")
    prob_blk = cfg["problem"]
    symbolic = prob_blk["manufactured"] == "symbolic"
    gamma = prob_blk["gamma"]
    c1 = prob_blk["c1"]
    resolutions = cfg["experiment"]["resolutions"]
    rows = []
    errors = []
    hs = []
    last_grid = None
    for n in resolutions:
        domain = DomainSpec(
            kind="box",
            dim=cfg.domain.dim,
            extents=cfg.domain.extents,
            resolution=(n,) * cfg.domain.dim,
        )
        grid = build_grid(domain, MetricSpec.euclidean())
        last_grid = grid
        ustar, f = manufactured_source(grid, gamma, c1, symbolic=symbolic)
        spec = ProblemSpec(grid=grid, gamma=gamma, c1=c1, source=f)
        rep = solve(spec, SolverConfig())
        if not rep.converged:
            _fail(report, "solve did not converge at n = " + str(n))
            break
        shifted = ustar.values - float(np.sum(grid.weights * ustar.values)) / grid.vol
        err = float(np.max(np.abs(rep.u.values - shifted)))
        h = max(grid.spacings)
        hs.append(h)
        errors.append(err)
        rows.append([h, err, ""])
    orders = []
    for i in range(1, len(errors)):
        if errors[i] > 0 and errors[i - 1] > 0:
            order = math.log(errors[i - 1] / errors[i]) / math.log(hs[i - 1] / hs[i])
            orders.append(order)
            rows[i][2] = repr(order)
    _write_csv(os.path.join(out, "convergence.csv"), ("h", "error_inf", "order"), rows)
    report["results"] = {
        "resolutions": list(resolutions),
        "errors": errors,
        "orders": orders,
        "symbolic_source": symbolic,
    }
    report["gates"] = _gate_block(last_grid, seed) if last_grid is not None else {}
    if symbolic:
        if not orders or orders[-1] < 1.9:
            _fail(report, "convergence order below 1.9")
    else:
        if errors and max(errors) > 1e-8:
            _fail(report, "discrete manufactured solve not exact to tolerance")
    if cfg["output"]["plots"] and errors:
        line_plot(
            os.path.join(out, "convergence.svg"),
            [("error", hs, errors)],
            title="manufactured-solution convergence",
            xlabel="h",
            ylabel="max error",
            loglog=True,
        )
    return report


def _bochner_cases(delta: float):
    """Canonical refinement cases: (name, metric maker, field maker, weighted)."""

    def flat_metric(_n):
        return MetricSpec.euclidean()

    def conf_metric(_n):
        return MetricSpec.conformal(lambda coords: 0.1 * np.cos(2.0 * np.pi * coords[0]))

    def u_flat(grid):
        mesh = grid.mesh()
        return ScalarField(grid, np.cos(2.0 * np.pi * mesh[0]) * np.cos(2.0 * np.pi * mesh[1]))

    def u_conf(grid):
        mesh = grid.mesh()
        return ScalarField(grid, np.sin(2.0 * np.pi * mesh[1]))

    return [
        ("flat_plain", "torus", flat_metric, u_flat, None, 1.5),
        ("flat_weighted", "torus", flat_metric, u_flat, delta, 1.5),
        ("conformal_plain", "conformal_torus", conf_metric, u_conf, None, 0.9),
        ("conformal_weighted", "conformal_torus", conf_metric, u_conf, delta, 0.9),
    ]


def _refinement_rows(name, kind, metric_fn, field_fn, delta, resolutions):
    norms = []
    for n in resolutions:
        domain = DomainSpec(kind=kind, dim=3, resolution=(n, n, 8))
        grid = build_grid(domain, metric_fn(n))
        u = field_fn(grid)
        if delta is None:
            res = bernstein.bochner_residual(u)
        else:
            res = bernstein.weighted_bochner_residual(u, delta)
        norms.append(float(np.max(np.abs(res.values))))
    slope = 0.0
    if len(norms) >= 2 and norms[-1] > 0 and norms[-2] > 0:
        slope = math.log(norms[-2] / norms[-1]) / math.log(
            resolutions[-1] / resolutions[-2]
        )
    return norms, slope


def interior_mask(grid, margin: int = 3) -> np.ndarray:
    """Nodes whose composed stencils use centered rows only."""
    mask = np.ones(grid.shape, dtype=bool)
    for a, per in enumerate(grid.periodic):
        if per:
            continue
        sl = [slice(None)] * len(grid.shape)
        sl[a] = slice(0, margin)
        mask[tuple(sl)] = False
        sl[a] = slice(grid.shape[a] - margin, grid.shape[a])
        mask[tuple(sl)] = False
    return mask


def _exactness_checks() -> list:
    """Round-off residual checks for polynomial data on a flat box.

    Dyadic spacing (h = 1/16) and dyadic polynomial coefficients keep
    every stencil product exactly representable, so the identity
    residuals cancel to literal zero away from the one-sided closure
    rows; the second-difference identities are exact on quadratics.
    """
    domain = DomainSpec(kind="box", dim=3, resolution=(17, 17, 17))
    grid = build_grid(domain, MetricSpec.euclidean())
    x, y, z = grid.mesh()
    inner = interior_mask(grid)
    fields = {
        "constant": np.ones(grid.shape),
        "linear": 1.0 + 2.0 * x - 0.75 * y + 0.25 * z,
        "quadratic": x**2 + y**2 + z**2 + x * y - 0.5 * y * z,
    }
    checks = []
    for name, vals in fields.items():
        u = ScalarField(grid, vals)
        plain = float(np.max(np.abs(bernstein.bochner_residual(u).values[inner])))
        checks.append(("plain_" + name, plain, plain <= 1e-12))
        if name in ("constant", "linear"):
            wres = bernstein.weighted_bochner_residual(u, 0.3)
            wmax = float(np.max(np.abs(wres.values[inner])))
            checks.append(("weighted_" + name, wmax, wmax <= 1e-12))
    # affine-profile limit agrees with the plain identity
    tdom = DomainSpec(kind="torus", dim=3, resolution=(16, 16, 8))
    tgrid = build_grid(tdom, MetricSpec.euclidean())
    mesh = tgrid.mesh()
    u = ScalarField(
        tgrid, 0.1 * np.cos(2.0 * np.pi * mesh[0]) * np.sin(2.0 * np.pi * mesh[1])
    )
    diff = np.max(
        np.abs(
            bernstein.weighted_bochner_residual(u, 1.0).values
            - bernstein.bochner_residual(u).values
        )
    )
    checks.append(("affine_limit_matches_plain", float(diff), float(diff) <= 1e-12))
    return checks


def _cmd_bochner_check(cfg: RunConfig, out: str, seed: int) -> dict:
    report = _report_skeleton("bochner-check", seed)
    resolutions = (32, 64, 128)
    delta = cfg["experiment"]["delta"]
    rows = []
    results = {}
    for name, kind, metric_fn, field_fn, case_delta, min_order in _bochner_cases(delta):
        norms, slope = _refinement_rows(
            name, kind, metric_fn, field_fn, case_delta, resolutions
        )
        results[name] = {"norms": norms, "order": slope, "min_order": min_order}
        for n, v in zip(resolutions, norms):
            rows.append((name, n, v))
        if slope < min_order:
            _fail(report, name + " refinement order " + repr(slope) + " below " + repr(min_order))
    exact = _exactness_checks()
    results["exactness"] = [
        {"name": n, "value": v, "passed": ok} for n, v, ok in exact
    ]
    for n, v, ok in exact:
        if not ok:
            _fail(report, "exactness check failed: " + n)
    report["results"] = results
    grid = build_grid(DomainSpec(kind="torus", dim=3, resolution=(16, 16, 8)), MetricSpec.euclidean())
    report["gates"] = _gate_block(grid, seed)
    _write_csv(os.path.join(out, "refinement.csv"), ("case", "n", "residual_sup"), rows)
    if cfg["output"]["plots"]:
        series = []
        for name in sorted(results):
            if name == "exactness":
                continue
            series.append(
                (
                    name,
                    [1.0 / n for n in resolutions],
                    results[name]["norms"],
                )
            )
        line_plot(
            os.path.join(out, "refinement.svg"),
            series,
            title="identity residual refinement",
            xlabel="h",
            ylabel="sup residual",
            loglog=True,
        )
    return report


def _cmd_bernstein_audit(cfg: RunConfig, out: str, seed: int) -> dict:
    report = _report_skeleton("bernstein-audit", seed)
    delta = cfg["experiment"]["delta"]
    samples = cfg["experiment"]["samples"]
    audit = []

    def entry(name, violation, passed):
        audit.append(
            {"name": name, "max_violation": float(violation), "passed": bool(passed)}
        )
        if not passed:
            _fail(report, "audit item failed: " + name)

    tk = bernstein.h_toolkit(delta)
    prof = tk.sample_audit()
    for key in ("root_growth", "convexity_defect", "derivative_recovery"):
        viol = max(0.0, -prof[key])
        entry("profile_" + key, viol, viol <= 1e-12)
    entry(
        "profile_concavity",
        max(0.0, prof["second_derivative_max"]),
        prof["second_derivative_max"] < 0.0,
    )

    suite = bernstein.pointwise_inequality_suite(samples=samples, seed=seed)
    for key in sorted(suite):
        item = suite[key]
        if not isinstance(item, dict):
            continue
        viol = max(0.0, -item["worst_margin"])
        entry("inequality_" + key, viol, item["violations"] == 0)

    for name, value, ok in _exactness_checks():
        entry("identity_" + name, value, ok)

    # continuity scalars: maximizer identity and root recovery
    worst_root = 0.0
    worst_peak = 0.0
    for d in range(3, 11):
        tools = bernstein.continuity_tools(d, q=max(3.0, d * 0.9), gamma=2.0, delta=delta)
        closed_y = ((d - 2.0) / d) ** (d / 2.0)
        closed_phi = closed_y ** ((d - 2.0) / d) - closed_y
        worst_peak = max(
            worst_peak, abs(tools.y_star - closed_y), abs(tools.phi_star - closed_phi)
        )
        for frac in (0.1, 0.5, 0.9):
            level = frac * tools.phi_star
            lo, hi = tools.roots(level)
            worst_root = max(
                worst_root,
                abs(float(tools.phi(lo)) - level),
                abs(float(tools.phi(hi)) - level),
            )
    entry("continuity_peak_closed_form", worst_peak, worst_peak <= 1e-12)
    entry("continuity_root_recovery", worst_root, worst_root <= 1e-12)

    # exponent identities on random admissible parameter sets
    rng = np.random.default_rng(seed)
    worst_bo1 = 0.0
    worst_bo2 = 0.0
    count = 0
    while count < 100:
        d = int(rng.integers(3, 8))
        gamma = float(rng.uniform(1.1, 4.0))
        q = float(rng.uniform(2.0, 8.0))
        dl = float(rng.uniform(0.05, 0.95))
        try:
            params = bernstein.maxreg_params(d, gamma, q, dl)
        except ValueError:
            continue
        count += 1
        scale = max(1.0, abs(params.eta))
        if params.bo1_residual is not None:
            worst_bo1 = max(worst_bo1, abs(params.bo1_residual) / scale)
        worst_bo2 = max(worst_bo2, abs(params.bo2_residual) / scale)
    entry("exponent_identity_bo1", worst_bo1, worst_bo1 <= 1e-12)
    entry("exponent_identity_bo2", worst_bo2, worst_bo2 <= 1e-12)

    # level-set bound on random smooth fields
    grid = build_grid(
        DomainSpec(kind="torus", dim=3, resolution=(16, 16, 16)), MetricSpec.euclidean()
    )
    params = bernstein.maxreg_params(3, 2.0, 3.0, delta)
    cheb_viol = 0
    mono_viol = 0
    for i in range(10):
        u = estimates.random_band_limited(grid, seed=seed + i)
        state = bernstein.BernsteinState.from_field(u, delta)
        zmax = float(np.max(state.z.values))
        prev_y = math.inf
        for k in np.linspace(1.0, 1.1 * zmax, 20):
            data = bernstein.level_sets(state.z, float(k), params)
            if not data.within_bound:
                cheb_viol += 1
            if data.y > prev_y * (1.0 + 1e-12):
                mono_viol += 1
            prev_y = data.y
    entry("level_set_volume_bound", float(cheb_viol), cheb_viol == 0)
    entry("level_set_monotone", float(mono_viol), mono_viol == 0)

    report["results"] = {"audit": audit, "delta": delta, "samples": samples}
    report["gates"] = _gate_block(grid, seed)
    _write_csv(
        os.path.join(out, "audit.csv"),
        ("name", "max_violation", "passed"),
        [(a["name"], a["max_violation"], a["passed"]) for a in audit],
    )
    return report


def _sweep_common(cfg: RunConfig, out: str, seed: int, kind: str) -> dict:
    report = _report_skeleton(kind, seed)
    if cfg.domain.kind == "disc":
        raise ConfigError("assumption gate (D1) violated: sweeps need a box or a torus")
    grid = _build_grid(cfg)
    prob_blk = cfg["problem"]
    exp = cfg["experiment"]
    gamma = prob_blk["gamma"]
    amplitudes = exp["amplitudes"]

    if kind == "thm1-sweep":
        if exp["q"] is not None and exp["r"] is not None:
            q, r = exp["q"], exp["r"]
        else:
            expo = estimates.thm1_exponents(grid.dim, exp["p"])
            q, r = expo.q, expo.r
        drift, drift_info = _build_drift(cfg, grid)
        src_kind = prob_blk["source_kind"] if prob_blk["source_kind"] != "none" else "mode"
        f0 = estimates.source_family(grid, src_kind, q)
        spec = estimates.SweepSpec(
            grid=grid,
            gamma=gamma,
            source=f0,
            amplitudes=amplitudes,
            q=q,
            r=r,
            drift=drift,
            drift_s=drift_info.get("s"),
            drift_theta=drift_info.get("theta"),
        )
        sweep = estimates.thm1_sweep(spec)
    else:
        if prob_blk["drift_kind"] != "none":
            raise ConfigError(
                "assumption gate (~In2) violated: this sweep requires zero drift"
            )
        q = exp["q"] if exp["q"] is not None else 2.5
        params = bernstein.maxreg_params(grid.dim, gamma, q, exp["delta"])
        src_kind = prob_blk["source_kind"] if prob_blk["source_kind"] != "none" else "bump"
        f0 = estimates.source_family(grid, src_kind, q)
        spec = estimates.SweepSpec(
            grid=grid,
            gamma=gamma,
            source=f0,
            amplitudes=amplitudes,
            q=q,
            params=params,
        )
        sweep = estimates.thm2_sweep(spec)

    if sweep.aborted:
        _fail(report, "sweep aborted: " + sweep.message)
    gates = dict(sweep.gates)
    report["gates"] = {
        "kappa": gates.get("kappa"),
        "rho": gates.get("rho"),
        "sigma_hat": gates.get("sigma_hat"),
        "theta": gates.get("theta", 0.0),
        "s": gates.get("s"),
        "K": gates.get("K"),
        "C_V": None,
    }
    report["results"] = {
        "q": q,
        "r": getattr(spec, "r", None),
        "amplitudes": list(sweep.amplitudes),
        "ratios": list(sweep.ratios),
        "lambdas": list(sweep.lambdas),
        "slope": sweep.slope,
        "slope_top_decade": sweep.slope_top_decade,
        "slope_bounded": bool(sweep.slope_top_decade <= 0.05),
        "max_ratio": sweep.max_ratio,
        "ratio_at_one": sweep.ratio_at_one,
        "K": sweep.K,
    }
    _write_csv(
        os.path.join(out, "sweep.csv"),
        ("t", "ratio", "lambda", "f_q", "grad_l1", "iterations", "residual"),
        [
            (
                row["t"],
                row["ratio"],
                row["lambda"],
                row["f_q"],
                row["grad_l1"],
                row["iterations"],
                row["residual"],
            )
            for row in sweep.norm_rows
        ],
    )
    if cfg["output"]["plots"] and sweep.ratios:
        line_plot(
            os.path.join(out, "sweep.svg"),
            [("ratio", list(sweep.amplitudes), list(sweep.ratios))],
            title=kind + " amplitude scaling",
            xlabel="amplitude t",
            ylabel="ratio",
            loglog=True,
        )
    return report


def _cmd_constants(cfg: RunConfig, out: str, seed: int) -> dict:
    report = _report_skeleton("constants", seed)
    grid = _build_grid(cfg)
    exp = cfg["experiment"]
    sigma = estimates.sobolev_constant_estimate(
        grid, starts=exp["starts"], iters=exp["iters"], seed=seed
    )
    fields_bl = [estimates.random_band_limited(grid, seed=seed + i) for i in range(50)]
    cz2 = estimates.cz_ratio(fields_bl, 2.0)
    cz4 = estimates.cz_ratio(fields_bl, 4.0)
    gamma = cfg["problem"]["gamma"]
    q = exp["q"] if exp["q"] is not None else 2.5
    params = bernstein.maxreg_params(grid.dim, gamma, q, exp["delta"])
    tools = bernstein.continuity_tools(grid.dim, q, gamma, exp["delta"], exp["zeta_c"])
    t_star = tools.t_star()
    results = {
        "sigma_hat": sigma,
        "cz_ratio_p2": cz2,
        "cz_ratio_p4": cz4,
        "exponents": {
            "p": params.p,
            "p_tilde": params.p_tilde,
            "beta": params.beta,
            "eta": params.eta,
            "phi_const": params.phi_const,
            "c_gamma": params.c_gamma,
        },
        "continuity": {
            "y_star": tools.y_star,
            "phi_star": tools.phi_star,
            "t_star": t_star,
            "zeta_C": exp["zeta_c"],
        },
    }
    flat_torus = grid.is_flat and all(grid.periodic)
    if flat_torus and abs(cz2 - 1.0) > 1e-6:
        _fail(report, "flat-torus second-derivative ratio at p=2 deviates from 1")
    if not math.isfinite(cz4):
        _fail(report, "p=4 ratio not finite")
    report["results"] = results
    report["gates"] = _gate_block(grid, seed)
    report["gates"]["sigma_hat"] = sigma
    rows = [
        ("sigma_hat", sigma),
        ("cz_ratio_p2", cz2),
        ("cz_ratio_p4", cz4),
        ("p", params.p),
        ("beta", params.beta),
        ("eta", params.eta),
        ("phi_const", params.phi_const),
        ("c_gamma", params.c_gamma),
        ("y_star", tools.y_star),
        ("phi_star", tools.phi_star),
        ("t_star", "none" if t_star is None else t_star),
    ]
    _write_csv(os.path.join(out, "constants.csv"), ("name", "value"), rows)
    return report


def _cmd_mfg(cfg: RunConfig, out: str, seed: int) -> dict:
    report = _report_skeleton("mfg", seed)
    if cfg.domain.kind == "disc":
        raise ConfigError("assumption gate (D1) violated: the system needs a box or a torus")
    grid = _build_grid(cfg)
    blk = cfg["mfg"]
    shift = _build_shift(cfg, grid)
    spec = mfg_mod.MfgSpec(
        grid=grid,
        gamma=cfg["problem"]["gamma"],
        alpha=blk["alpha"],
        c_v=blk["c_v"],
        shift=shift,
        eps=blk["eps"],
        tau=blk["tau"],
        max_outer=blk["max_outer"],
        outer_tol=blk["outer_tol"],
    )
    state, mrep = mfg_mod.mfg_fixed_point(spec)
    if not mrep.converged:
        _fail(report, "outer iteration did not converge: " + mrep.message)
    if abs(mrep.mass - 1.0) > 1e-10:
        _fail(report, "density mass deviates from 1")
    if mrep.min_density <= 0.0:
        _fail(report, "density lost positivity")
    if mrep.duality and not mrep.duality.get("margin_ok", True):
        _fail(report, "coupling energy exceeds the shift curvature bound")
    if mrep.lp_bounds and not mrep.lp_bounds.get("bound_ok", True):
        _fail(report, "smoothed-density gradient energy exceeds its bound")
    report["gates"] = _gate_block(grid, seed, K=None, c_v=blk["c_v"])
    report["results"] = {
        "converged": mrep.converged,
        "outer_iterations": mrep.outer_iterations,
        "outer_residual": mrep.outer_residual,
        "lambda": mrep.lam,
        "mass": mrep.mass,
        "min_density": mrep.min_density,
        "gate": mrep.gate,
        "duality": mrep.duality,
        "lp_bounds": mrep.lp_bounds,
        "peclet": mrep.peclet,
        "stages": mrep.stages,
    }
    dump_field_csv(state.u, os.path.join(out, "u.csv"))
    dump_field_csv(state.m, os.path.join(out, "m.csv"))
    return report


# ---------------------------------------------------------------------------
# dispatch


def run(subcommand: str, cfg: RunConfig, out_dir: str, seed: int = 0, threads: int = 1) -> int:
    """Execute one subcommand; returns the process exit status."""
    if subcommand not in _SUBCOMMANDS:
        print("unknown subcommand: " + subcommand, file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    try:
        with sfft.set_workers(max(1, threads)):
            if subcommand == "solve":
                report = _cmd_solve(cfg, out_dir, seed, ergodic=False)
            elif subcommand == "ergodic":
                report = _cmd_solve(cfg, out_dir, seed, ergodic=True)
            elif subcommand == "bochner-check":
                report = _cmd_bochner_check(cfg, out_dir, seed)
            elif subcommand == "bernstein-audit":
                report = _cmd_bernstein_audit(cfg, out_dir, seed)
            elif subcommand in ("thm1-sweep", "thm2-sweep"):
                report = _sweep_common(cfg, out_dir, seed, subcommand)
            elif subcommand == "constants":
                report = _cmd_constants(cfg, out_dir, seed)
            else:
                report = _cmd_mfg(cfg, out_dir, seed)
    except (ConfigError, ValueError) as exc:
        print("rejected: " + str(exc), file=sys.stderr)
        return 2
    _write_json(os.path.join(out_dir, "report.json"), report)
    return 0 if report["passed"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hjblab",
        description="Finite-difference laboratory for viscous Hamilton-Jacobi "
        "equations, gradient estimates, and mean-field games",
    )
    parser.add_argument("subcommand", choices=_SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="path to a run config file")
    parser.add_argument("--out", default="hjblab-out", help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        text = DEFAULT_CONFIG
        if args.config is not None:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text)
    except OSError as exc:
        print("cannot read config: " + str(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print("rejected: " + str(exc), file=sys.stderr)
        return 2
    return run(args.subcommand, cfg, args.out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
