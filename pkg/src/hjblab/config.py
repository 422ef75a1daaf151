"""Strict line-oriented run-configuration parser.

Format: `[section]` headers with `key = value` lines, full-line comments
starting with `#` or `;`.  Unknown sections or keys are rejected with
their line number, as are duplicates and type errors.  Scalar standing
assumptions are checked at parse time and violations are reported with
the assumption label, e.g. (In1) for the gradient-growth gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

from .geometry import DomainSpec, MetricSpec


class ConfigError(ValueError):
    """Raised for syntax errors, unknown keys, and assumption gates."""


_SCHEMAS = {
    "domain": {
        "kind": "str",
        "dim": "int",
        "extents": "floats",
        "resolution": "ints",
        "radius": "float",
    },
    "metric": {
        "kind": "str",
        "phi_amplitude": "float",
        "phi_axis": "int",
        "phi_frequency": "int",
    },
    "problem": {
        "gamma": "float",
        "c1": "float",
        "c2": "float",
        "ergodic": "bool",
        "drift_kind": "str",
        "drift_amplitude": "float",
        "drift_axis": "int",
        "drift_s": "float",
        "drift_theta": "float",
        "shift_kind": "str",
        "shift_amplitude": "float",
        "shift_axis": "int",
        "source_kind": "str",
        "source_amplitude": "float",
        "source_axis": "int",
        "manufactured": "str",
    },
    "experiment": {
        "amplitudes": "floats",
        "p": "float",
        "q": "float",
        "r": "float",
        "delta": "float",
        "zeta_c": "float",
        "resolutions": "ints",
        "starts": "int",
        "iters": "int",
        "samples": "int",
    },
    "mfg": {
        "alpha": "float",
        "c_v": "float",
        "eps": "float",
        "tau": "float",
        "max_outer": "int",
        "outer_tol": "float",
    },
    "output": {
        "plots": "bool",
        "dump_fields": "bool",
    },
}

_DEFAULTS = {
    "domain": {
        "kind": "torus",
        "dim": 3,
        "extents": (1.0,),
        "resolution": (16,),
        "radius": 1.0,
    },
    "metric": {
        "kind": "euclidean",
        "phi_amplitude": 0.1,
        "phi_axis": 1,
        "phi_frequency": 1,
    },
    "problem": {
        "gamma": 2.0,
        "c1": 1.0,
        "c2": 0.0,
        "ergodic": False,
        "drift_kind": "none",
        "drift_amplitude": 1.0,
        "drift_axis": 2,
        "drift_s": None,
        "drift_theta": None,
        "shift_kind": "none",
        "shift_amplitude": 0.5,
        "shift_axis": 1,
        "source_kind": "none",
        "source_amplitude": 1.0,
        "source_axis": 1,
        "manufactured": "none",
    },
    "experiment": {
        "amplitudes": (1.0, 3.0, 10.0, 30.0, 100.0),
        "p": 2.0,
        "q": None,
        "r": None,
        "delta": 0.3,
        "zeta_c": 1.0,
        "resolutions": (17, 33, 65),
        "starts": 8,
        "iters": 80,
        "samples": 100_000,
    },
    "mfg": {
        "alpha": 1.0,
        "c_v": None,
        "eps": 0.1,
        "tau": 0.5,
        "max_outer": 60,
        "outer_tol": 1e-9,
    },
    "output": {
        "plots": True,
        "dump_fields": False,
    },
}

_ENUMS = {
    ("domain", "kind"): ("box", "torus", "conformal_torus", "disc"),
    ("metric", "kind"): ("euclidean", "conformal"),
    ("problem", "drift_kind"): ("none", "shear"),
    ("problem", "shift_kind"): ("none", "mode"),
    ("problem", "source_kind"): ("none", "mode", "bump", "power"),
    ("problem", "manufactured"): ("none", "symbolic", "discrete"),
}


@dataclass
class RunConfig:
    """Validated run configuration with built geometry specs."""

    sections: dict
    domain: DomainSpec = None
    metric: MetricSpec = None
    warnings: list = dataclass_field(default_factory=list)

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]


def _parse_value(kind: str, raw: str, lineno: int):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw.lower()
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return tuple(int(part.strip()) for part in raw.split(",") if part.strip())
        if kind == "floats":
            return tuple(float(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(
            "line " + str(lineno) + ": cannot parse " + repr(raw) + " as " + kind
        ) from None
    raise ConfigError("line " + str(lineno) + ": unknown value kind " + kind)


def parse_config(text: str) -> RunConfig:
    """Parse and validate; deterministic for a given text."""
    sections = {name: dict(defaults) for name, defaults in _DEFAULTS.items()}
    seen = set()
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith(";"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip().lower()
            if name not in _SCHEMAS:
                raise ConfigError("line " + str(lineno) + ": unknown section [" + name + "]")
            current = name
            continue
        if "=" not in stripped:
            raise ConfigError("line " + str(lineno) + ": expected key = value")
        if current is None:
            raise ConfigError("line " + str(lineno) + ": key outside any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        if key not in _SCHEMAS[current]:
            raise ConfigError(
                "line " + str(lineno) + ": unknown key " + repr(key) + " in [" + current + "]"
            )
        if (current, key) in seen:
            raise ConfigError("line " + str(lineno) + ": duplicate key " + repr(key))
        seen.add((current, key))
        value = _parse_value(_SCHEMAS[current][key], raw, lineno)
        enum = _ENUMS.get((current, key))
        if enum is not None and value not in enum:
            raise ConfigError(
                "line "
                + str(lineno)
                + ": "
                + key
                + " must be one of "
                + ", ".join(enum)
            )
        sections[current][key] = value
    return _build(sections)


def _build(sections: dict) -> RunConfig:
    dom = sections["domain"]
    met = sections["metric"]
    prob = sections["problem"]
    mfg = sections["mfg"]
    warnings = []

    # Named assumption gates run before any structural bound so that a config
    # violating one is always rejected citing that assumption, even when the
    # declared dimension or resolution would also fail a plumbing check.
    declared_dim = dom["dim"]
    if not prob["gamma"] > 1.0:
        raise ConfigError(
            "assumption gate (In1) violated: need gamma > 1, got " + repr(prob["gamma"])
        )
    if not prob["c1"] > 0.0:
        raise ConfigError("assumption gate (In1) violated: need c1 > 0")
    if prob["drift_kind"] != "none":
        s = prob["drift_s"]
        if s is None or not s > declared_dim:
            raise ConfigError(
                "assumption gate (In2) violated: drift needs integrability s > d"
            )
    if not mfg["alpha"] > 0.0:
        raise ConfigError("mfg block: alpha must be positive")
    if mfg["c_v"] is None:
        # For the power coupling the admissible constant is set by alpha, so an
        # unset c_v tracks alpha instead of pinning a fixed number.
        mfg["c_v"] = max(2.0, mfg["alpha"], 1.0 / mfg["alpha"])
    if not mfg["c_v"] > 1.0 or mfg["c_v"] < max(mfg["alpha"], 1.0 / mfg["alpha"]) - 1e-12:
        raise ConfigError(
            "assumption gate (MFG1) violated: need C_V > 1 and C_V >= max(alpha, 1/alpha)"
        )
    from .mfg import exponent_gate

    gate = exponent_gate(declared_dim, prob["gamma"], mfg["alpha"])
    if not gate["alpha_ok"]:
        raise ConfigError(
            "assumption gate (MFG3) violated: alpha = "
            + repr(mfg["alpha"])
            + " must stay below "
            + repr(gate["alpha_threshold"])
        )
    if not gate["gamma_ok"]:
        warnings.append(
            "gate (MFG3) gamma condition not met (gamma <= d/(d-2)); recorded, not enforced"
        )

    try:
        domain = DomainSpec(
            kind=dom["kind"],
            dim=dom["dim"],
            extents=dom["extents"],
            resolution=dom["resolution"],
            radius=dom["radius"],
        )
    except ValueError as exc:
        raise ConfigError("domain block: " + str(exc)) from None
    if met["kind"] == "conformal" or domain.kind == "conformal_torus":
        amp = met["phi_amplitude"]
        axis = met["phi_axis"]
        freq = met["phi_frequency"]
        if not (1 <= axis <= domain.dim):
            raise ConfigError("metric block: phi_axis out of range")

        import numpy as np

        extent = domain.extents[axis - 1]

        def phi(coords, _a=amp, _ax=axis - 1, _f=freq, _L=extent):
            return _a * np.cos(2.0 * np.pi * _f * coords[_ax] / _L)

        metric = MetricSpec.conformal(phi)
    else:
        metric = MetricSpec.euclidean()

    if prob["drift_kind"] != "none":
        if not (1 <= prob["drift_axis"] <= domain.dim):
            raise ConfigError("problem block: drift_axis out of range")

    exp = sections["experiment"]
    if not (0.0 < exp["delta"] < 1.0):
        raise ConfigError("experiment block: delta must lie in (0, 1)")
    if any(n < 8 for n in exp["resolutions"]):
        raise ConfigError("experiment block: resolutions must be at least 8")

    if not (0.0 < mfg["tau"] <= 1.0):
        raise ConfigError("mfg block: tau must lie in (0, 1]")
    if mfg["eps"] < 0.0:
        raise ConfigError("mfg block: eps must be nonnegative")

    return RunConfig(sections=sections, domain=domain, metric=metric, warnings=warnings)
