"""Run configuration: JSON schema, loading, and foliation (de)serialization.

Complex numbers are [re, im] pairs; polynomial terms are
[exponent-tuple, re, im] triples per component. Chart data in a config is
frozen (no symbolic work at load time); the builtin configs are generated
from folisim.examples by write_builtin_configs.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .errors import SchemaError
from .foliation import (Chart, Foliation, HYPERBOLIC, ProjectiveAtlas,
                        SingleChartAtlas, SingularPoint, classify_eigenvalues)
from .brownian import SamplerConfig
from .poly import Poly, PolyField

_COMPLEX = {"type": "array", "minItems": 2, "maxItems": 2,
            "items": {"type": "number"}}
# spec wire format: (exponent-tuple, re, im) triples per component
_TERM = {"type": "array", "minItems": 3, "maxItems": 3,
         "prefixItems": [
             {"type": "array", "items": {"type": "integer", "minimum": 0}},
             {"type": "number"},
             {"type": "number"}]}

SCHEMA = {
    "type": "object",
    "required": ["name", "foliation", "sampler"],
    "properties": {
        "name": {"type": "string"},
        "exploratory": {"type": "boolean"},
        "start": {"type": "array", "items": _COMPLEX},
        "start_b": {"type": "array", "items": _COMPLEX},
        "foliation": {
            "type": "object",
            "required": ["dimension", "degree", "atlas", "charts"],
            "properties": {
                "dimension": {"enum": [2, 3]},
                "degree": {"type": "integer", "minimum": 1},
                "atlas": {"enum": ["single", "projective"]},
                "plane_slot": {"type": ["integer", "null"]},
                "plane_coord": {"type": ["integer", "null"]},
                "denoms": {"type": "array", "items": {"type": "integer"}},
                "metric_weights": {"enum": ["euclidean", "fubini_study"]},
                "r_switch": {"type": "number"},
                "r_valid": {"type": "number"},
                "charts": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["field"],
                        "properties": {
                            "field": {"type": "array",
                                      "items": {"type": "array", "items": _TERM}},
                            "singularities": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "required": ["location"],
                                    "properties": {
                                        "location": {"type": "array",
                                                     "items": _COMPLEX},
                                        "linear_model": {"type": ["array", "null"],
                                                         "items": _COMPLEX},
                                    },
                                },
                            },
                        },
                    },
                },
            },
        },
        "sampler": {
            "type": "object",
            "required": ["h", "horizon"],
            "properties": {
                "h": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "rtol": {"type": "number"},
                "guard_fraction": {"type": "number"},
                "flowbox_c": {"type": "number"},
                "time_convention": {"enum": ["laplacian", "half_laplacian"]},
                "subdiscretize": {"type": "boolean"},
            },
        },
        "experiments": {"type": "object"},
        "tolerances": {"type": "object"},
    },
}


def _c(pair):
    return complex(pair[0], pair[1])


def _pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    return validate_config(cfg)


def validate_config(cfg):
    import jsonschema

    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        raise SchemaError(f"config invalid: {e.message}") from e
    return cfg


def config_sha(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def foliation_from_config(cfg) -> Foliation:
    f = cfg["foliation"]
    dim = f["dimension"]
    if f["atlas"] == "single":
        atlas = SingleChartAtlas(dim, plane_coord=f.get("plane_coord"))
    else:
        atlas = ProjectiveAtlas(dim, denoms=f.get("denoms"),
                                plane_slot=f.get("plane_slot"))
    charts = []
    exploratory = cfg.get("exploratory", False)
    for k, ch in enumerate(f["charts"]):
        comps = []
        for terms in ch["field"]:
            comps.append(Poly(dim, [(tuple(t[0]), complex(t[1], t[2]))
                                    for t in terms]))
        field = PolyField(comps)
        sings = []
        for s in ch.get("singularities", []):
            loc = np.array([_c(p) for p in s["location"]])
            eigs = np.linalg.eigvals(field.jacobian(loc))
            cls = classify_eigenvalues(eigs)
            if cls != HYPERBOLIC and not exploratory:
                raise SchemaError(
                    f"chart {k}: singularity at {loc} is {cls}; set "
                    "exploratory: true to run anyway")
            model = s.get("linear_model")
            if model is not None:
                model = tuple(_c(p) for p in model)
            sings.append(SingularPoint(loc, eigs, cls, model))
        charts.append(Chart(field, sings))
    return Foliation(charts, atlas, degree=f["degree"],
                     r_switch=f.get("r_switch", 2.0),
                     r_valid=f.get("r_valid", 10.0),
                     metric_weights=f.get("metric_weights", "fubini_study"))


def sampler_from_config(cfg, **overrides) -> SamplerConfig:
    s = dict(cfg["sampler"])
    s.update({k: v for k, v in overrides.items() if v is not None})
    return SamplerConfig(
        h=s["h"], horizon=s["horizon"], seed=s.get("seed", 0),
        guard_fraction=s.get("guard_fraction", 0.2),
        flowbox_c=s.get("flowbox_c", 4.0),
        time_factor=0.5 if s.get("time_convention") == "half_laplacian" else 1.0,
        subdiscretize=s.get("subdiscretize", True),
        rtol=s.get("rtol", 1e-6))


def foliation_to_config(fol: Foliation):
    """Frozen chart data of a foliation (inverse of foliation_from_config)."""
    atlas = fol.atlas
    f = {"dimension": fol.dim, "degree": fol.degree,
         "metric_weights": fol.metric_weights,
         "r_switch": None if np.isinf(fol.r_switch) else fol.r_switch,
         "r_valid": fol.r_valid}
    if isinstance(atlas, ProjectiveAtlas):
        f["atlas"] = "projective"
        f["denoms"] = atlas.denoms
        f["plane_slot"] = atlas.plane_slot
    else:
        f["atlas"] = "single"
        f["plane_coord"] = atlas.plane_coord(0)
    charts = []
    for ch in fol.charts:
        field = [[[list(map(int, e)), *_pair(c)] for e, c in comp.terms()]
                 for comp in ch.field.components]
        sings = []
        for s in ch.singularities:
            entry = {"location": [_pair(z) for z in s.location]}
            if s.linear_model is not None:
                entry["linear_model"] = [_pair(z) for z in s.linear_model]
            sings.append(entry)
        charts.append({"field": field, "singularities": sings})
    f["charts"] = charts
    if f["r_switch"] is None:
        f["r_switch"] = 1e9
    return f


_BUILTIN_RUNS = {
    "linear2d": {
        "start": [[np.exp(-2.0), 0.0], [0.0, 0.0]],
        "sampler": {"h": 0.01, "horizon": 10.0, "paths": 50, "seed": 7,
                    "rtol": 1e-10},
        "experiments": {
            "lyapunov": {"bundles": ["N"], "record_every": 5,
                         "regression_window": 0.5,
                         "expected": {"lambda": None, "mu": None}},
            "heat_tail": {"deltas": [0.25, 0.5, 1.0],
                          "r_grid": [1.0, 1.5, 2.0, 2.5, 3.0],
                          "n_paths": 4000, "h": 0.01},
        },
    },
    "linear3d": {
        "start": [[np.exp(-2.0), 0.0], [0.05, 0.0], [0.01, 0.0]],
        "sampler": {"h": 0.01, "horizon": 10.0, "paths": 50, "seed": 7,
                    "rtol": 1e-10},
        "experiments": {},
    },
    "deg2_p2": {
        "start": [[0.31, 0.12], [-0.22, 0.27]],
        "start_b": [[-0.55, -0.31], [0.64, 0.18]],
        "sampler": {"h": 0.1, "horizon": 10000.0, "paths": 24, "seed": 77,
                    "rtol": 1e-6},
        "experiments": {
            "occupation": {"bins": 20, "box": 2.5,
                           "checkpoints": [100.0, 1000.0, 10000.0]},
            "similarity": {"checkpoints": [100.0, 1000.0, 10000.0],
                           "match_seeds": True},
            "contraction": {"theta_grid": [0.01, 0.03, 0.1], "rho": 0.2,
                            "horizon": 20.0, "eta": 0.5},
        },
    },
    "deg2_p3": {
        "start": [[0.31, 0.12], [-0.22, 0.27], [0.0, 0.0]],
        "sampler": {"h": 0.1, "horizon": 200.0, "paths": 100, "seed": 2024,
                    "rtol": 1e-6},
        "experiments": {
            "lyapunov": {"bundles": ["N", "L"], "record_every": 5,
                         "regression_window": 0.5,
                         "expected": {"lambda": 4.0, "mu": 0.3333333333333333}},
            "occupation": {"bins": 20, "box": 2.5,
                           "checkpoints": [100.0, 1000.0, 10000.0],
                           "near_plane_eps": 0.05,
                           "start": [[0.31, 0.12], [-0.22, 0.27], [0.01, 0.0]],
                           "paths": 24},
        },
    },
}


def write_builtin_configs(outdir):
    """Generate the shipped run configs from the builtin examples."""
    import os

    from . import examples

    os.makedirs(outdir, exist_ok=True)
    paths = []
    for name, run in _BUILTIN_RUNS.items():
        fol = examples.make(name)
        cfg = {"name": name, "exploratory": False,
               "foliation": foliation_to_config(fol)}
        cfg.update(run)
        validate_config(cfg)
        path = os.path.join(outdir, f"{name}.json")
        with open(path, "w") as fh:
            json.dump(cfg, fh, indent=1)
        paths.append(path)
    return paths
