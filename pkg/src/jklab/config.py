"""Experiment configuration: YAML documents checked against a strict schema.

A config names a space, a jump kernel, a scale triple and a list of
checkers.  Unknown keys anywhere are errors.  The full schema lives in
``CONFIG_SCHEMA`` and is described in the README.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from importlib import resources
from typing import Optional

import jsonschema
import yaml

from .process import JumpKernelSpec, SubordinatorSpec, hub_perturbation
from .scale import ScaleError, ScaleFunction, make_triple, phi_c_from_phi_j
from .space import DEFAULT_MAX_POINTS, build_space

SEED_ENV = "JKLAB_SEED"
DEFAULT_MAX_PATHS = 100_000


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer"}
_NAT = {"type": "integer", "minimum": 0}
_RADII = {"type": "array", "items": _POS, "minItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCALE_SCHEMA = {
    "oneOf": [
        _obj({"kind": {"const": "piecewise_power"},
              "breaks": {"type": "array", "items": _POS},
              "exponents": {"type": "array", "items": _POS, "minItems": 1}},
             ["kind", "exponents"]),
        _obj({"kind": {"const": "table"},
              "r": {"type": "array", "items": _POS, "minItems": 2},
              "v": {"type": "array", "items": _POS, "minItems": 2}},
             ["kind", "r", "v"]),
    ]
}

# per-checker parameters; every checker also takes `name` and `threshold`
CHECKER_PARAMS = {
    "vd_rvd": ({"radii": _RADII, "points": {"type": "array", "items": _NAT}}, ["radii"]),
    "tail_integral": ({"radii": _RADII}, ["radii"]),
    "exit_scaling": ({"center": _NAT, "radii": _RADII, "survival_fraction": _POS,
                      "mc_radii": {"type": "array", "items": _POS}, "n_paths": _NAT}, ["radii"]),
    "faber_krahn": ({"center": _NAT, "radii": _RADII}, ["radii"]),
    "poincare": ({"center": _NAT, "radii": _RADII, "kappa": {"type": "number", "minimum": 1}}, ["radii"]),
    "cutoff_energy": ({"center": _NAT, "radii": _RADII, "inner_factor": _POS}, ["radii"]),
    "capacity": ({"center": _NAT, "radii": _RADII}, ["radii"]),
    "ujs": ({"sources": {"type": "array", "items": _NAT, "minItems": 1},
             "targets": {"type": "array", "items": _NAT, "minItems": 1}, "radii": _RADII},
            ["sources", "targets", "radii"]),
    "phi_harnack": ({"center": _NAT, "radii": _RADII, "n_points": _NAT, "n_random": _NAT,
                     "early": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
                     "late": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
                     "reach": _POS, "n_times": {"type": "integer", "minimum": 2}, "max_ratio": _POS},
                    ["radii"]),
    "hk_corridor": ({"center": _NAT, "times": {"type": "array", "items": _POS, "minItems": 3},
                     "max_distance": _POS, "phi_c": SCALE_SCHEMA}, ["times", "max_distance"]),
}

CONDITION_NAMES = {
    "vd_rvd": "VD/RVD", "tail_integral": "J_phi", "exit_scaling": "E_phi", "faber_krahn": "FK",
    "poincare": "PI", "cutoff_energy": "CSJ-energy", "capacity": "Gcap", "ujs": "UJS",
    "phi_harnack": "PHI", "hk_corridor": "HK",
}


def _checker_schema(name: str) -> dict:
    props, req = CHECKER_PARAMS[name]
    props = dict(props, name={"const": name}, threshold=_POS)
    return _obj(props, ["name"] + req)


CONFIG_SCHEMA = _obj({
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "anchor": {"type": "string"},
    "description": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string"},
    "workers": {"type": "integer", "minimum": 1},
    "space": {"oneOf": [
        _obj({"builder": {"const": "lattice_torus"}, "dim": {"enum": [1, 2, 3]},
              "side": {"type": "integer", "minimum": 4}, "spacing": _POS}, ["builder", "dim", "side"]),
        _obj({"builder": {"const": "sierpinski_graph"}, "level": {"type": "integer", "minimum": 0}},
             ["builder", "level"]),
    ]},
    "kernel": _obj({
        "phi_j": SCALE_SCHEMA,
        "subordinator": _obj({"gamma1": _POS, "gamma2": _POS, "beta": _POS}, ["gamma1", "gamma2", "beta"]),
        "amplitude": _POS,
        "truncation": _POS,
        "perturbation": _obj({"kind": {"const": "hub"}, "hub": _NAT, "center": _NAT, "radius": _POS,
                              "factor": _POS}, ["kind", "hub", "center", "radius"]),
    }),
    "scales": _obj({
        "phi_c": {"oneOf": [SCALE_SCHEMA, _obj({"construct": {"const": "from_phi_j"}}, ["construct"])]},
        "time_cutoff": _POS,
    }, ["phi_c"]),
    "envelope": _obj({
        "center": _NAT,
        "times": {"type": "array", "items": _POS, "minItems": 1},
        "distances": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "constants": _obj({k: _POS for k in ("lower_scale", "lower_time", "upper_scale", "upper_time",
                                             "near_scale", "near_radius")}),
    }, ["times"]),
    "checkers": {"type": "array", "items": {"oneOf": [_checker_schema(n) for n in CHECKER_PARAMS]}},
    "caps": _obj({"max_points": {"type": "integer", "minimum": 1},
                  "max_paths": {"type": "integer", "minimum": 1}}),
}, ["name", "seed", "space", "kernel", "scales"])


def _first_error(errors) -> str:
    best = jsonschema.exceptions.best_match(errors)
    where = "/".join(str(p) for p in best.absolute_path) or "<root>"
    return f"{where}: {best.message}"


def validate(doc) -> dict:
    """Schema and cross-field checks; returns a deep copy with defaults filled."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    errors = list(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc))
    if errors:
        # oneOf hides the useful message; report unknown keys directly when present
        for err in errors:
            for sub in [err] + list(err.context or []):
                if sub.validator == "additionalProperties":
                    raise ConfigError(_first_error([sub]))
        raise ConfigError(_first_error(errors))
    doc = copy.deepcopy(doc)
    kern = doc["kernel"]
    if ("phi_j" in kern) == ("subordinator" in kern):
        raise ConfigError("kernel: give exactly one of phi_j or subordinator")
    names = [c["name"] for c in doc.get("checkers", [])]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"checkers: each checker may appear once, repeated {dup}")
    doc.setdefault("checkers", [])
    doc.setdefault("caps", {})
    doc["caps"].setdefault("max_points", DEFAULT_MAX_POINTS)
    doc["caps"].setdefault("max_paths", DEFAULT_MAX_PATHS)
    doc["scales"].setdefault("time_cutoff", 1.0)
    doc.setdefault("workers", 1)
    return doc


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


# ---- built-in experiments ----------------------------------------------------

def _builtin_dir():
    return resources.files("jklab") / "experiments"


def builtin_names() -> list:
    return sorted(p.name[:-5] for p in _builtin_dir().iterdir() if p.name.endswith(".yaml"))


def list_experiments() -> list:
    """(name, anchor, description) for every built-in experiment, sorted by name."""
    out = []
    for name in builtin_names():
        doc = load_config(name)
        out.append((name, doc.get("anchor", ""), doc.get("description", "")))
    return out


def load_config(ref: str) -> dict:
    """A built-in experiment name or a path to a YAML file."""
    if os.path.exists(ref):
        with open(ref) as fh:
            text = fh.read()
    elif ref in builtin_names():
        text = (_builtin_dir() / f"{ref}.yaml").read_text()
    else:
        raise ConfigError(f"no config file or built-in experiment named {ref!r}")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return validate(doc)


def resolve_seed(doc: dict, cli_seed: Optional[int] = None, env=None) -> int:
    """CLI flag beats the JKLAB_SEED variable, which beats the config field."""
    env = os.environ if env is None else env
    if cli_seed is not None:
        return int(cli_seed)
    if env.get(SEED_ENV, "") != "":
        try:
            return int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return int(doc["seed"])


# ---- builders ------------------------------------------------------------------

def kernel_phi_j(kern: dict) -> ScaleFunction:
    if "phi_j" in kern:
        return ScaleFunction.from_dict(kern["phi_j"])
    sub = kern["subordinator"]
    spec = SubordinatorSpec(sub["gamma1"], sub["gamma2"])
    b = sub["beta"]
    return ScaleFunction.piecewise_power([1.0], [b * spec.gamma1, b * spec.gamma2])


def build_scales(doc: dict):
    phi_j = kernel_phi_j(doc["kernel"])
    pc = doc["scales"]["phi_c"]
    phi_c = phi_c_from_phi_j(phi_j) if "construct" in pc else ScaleFunction.from_dict(pc)
    return make_triple(phi_j, phi_c)


def build_kernel_matrix(doc: dict, space):
    kern = doc["kernel"]
    spec = JumpKernelSpec(kernel_phi_j(kern), kern.get("amplitude", 1.0), None, kern.get("truncation"))
    jm = spec.density(space)
    pert = kern.get("perturbation")
    if pert:
        for key in ("hub", "center"):
            if pert[key] >= space.n:
                raise ConfigError(f"kernel/perturbation/{key}: point {pert[key]} outside the space")
        jm = hub_perturbation(space, jm, pert["hub"], pert["center"], pert["radius"], pert.get("factor", 1.0))
    return jm


def checker_reach(chk: dict) -> float:
    """Largest radius a checker will probe, for the diameter/4 guard."""
    name = chk["name"]
    if name == "vd_rvd" or name == "tail_integral" or name == "faber_krahn":
        return max(chk["radii"])
    if name == "exit_scaling":
        return max(list(chk["radii"]) + list(chk.get("mc_radii", [])))
    if name == "poincare":
        return chk.get("kappa", 1.0) * max(chk["radii"])
    if name == "cutoff_energy":
        return (chk.get("inner_factor", 1.0) + 1.0) * max(chk["radii"])
    if name == "capacity":
        return 2.0 * max(chk["radii"])
    if name == "ujs":
        return max(chk["radii"])
    if name == "phi_harnack":
        return chk.get("reach", 2.0) * max(chk["radii"])
    if name == "hk_corridor":
        return chk["max_distance"]
    raise ConfigError(f"unknown checker {name!r}")


def check_against_space(doc: dict, space):
    for chk in doc["checkers"]:
        reach = checker_reach(chk)
        if reach > space.guard_radius + 1e-9:
            raise ConfigError(f"checker {chk['name']}: radius {reach} exceeds diameter/4 = {space.guard_radius}")
        pts = [chk.get("center", 0)] + list(chk.get("points", [])) + list(chk.get("sources", [])) \
            + list(chk.get("targets", []))
        if max(pts) >= space.n:
            raise ConfigError(f"checker {chk['name']}: point index outside the space")
    env = doc.get("envelope")
    if env and env.get("center", 0) >= space.n:
        raise ConfigError("envelope/center: point outside the space")


def build_space_from(doc: dict):
    return build_space(doc["space"], max_points=doc["caps"]["max_points"])


__all__ = ["ConfigError", "CONFIG_SCHEMA", "CHECKER_PARAMS", "CONDITION_NAMES", "validate", "config_hash",
           "builtin_names", "list_experiments", "load_config", "resolve_seed", "build_scales",
           "build_kernel_matrix", "build_space_from", "check_against_space", "kernel_phi_j", "ScaleError"]
