"""Run configuration: JSON schema, loading, overrides and the built-in presets.

Seller ids in JSON documents are 1-based (``"gamma": {"2": {...}}`` is the
sensitivity of seller 1's demand to seller 2's price).
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .model import AffinePath, MarketSpec, TimeGrid, UncertaintyModel, make_seller
from .rules import PricingRule
from .simulation import DistributionSpec
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("solve", "matrix", "sweep", "robustness", "check")

_AFFINE = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {"a": {"type": "number"}, "b": {"type": "number"}},
            "required": ["a"],
            "additionalProperties": False,
        },
    ]
}

_UNCERTAINTY = {
    "type": "object",
    "properties": {"xi0": _AFFINE, "tau": {"type": "number", "minimum": 0}},
    "required": ["xi0", "tau"],
    "additionalProperties": False,
}

_DIST = {
    "type": "object",
    "properties": {
        "family": {"const": "beta"},
        "a": {"type": "number", "exclusiveMinimum": 0},
        "b": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["a", "b"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dpfi run configuration",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "note": {"type": "string"},
        "market": {
            "type": "object",
            "properties": {
                "grid": {
                    "type": "object",
                    "properties": {
                        "t0": {"type": "number"},
                        "tf": {"type": "number"},
                        "n": {"type": "integer", "minimum": 2},
                    },
                    "required": ["t0", "tf", "n"],
                    "additionalProperties": False,
                },
                "rho": {"type": "number", "minimum": 0},
                "sellers": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string"},
                            "alpha": _AFFINE,
                            "beta": _AFFINE,
                            "gamma": {
                                "type": "object",
                                "patternProperties": {"^[1-9][0-9]*$": _AFFINE},
                                "additionalProperties": False,
                            },
                            "inventory_K": {"type": "number", "exclusiveMinimum": 0},
                            "pi_min": {"type": "number", "minimum": 0},
                            "pi_max": {"type": ["number", "null"]},
                            "d_min": {"type": ["number", "null"], "exclusiveMinimum": 0},
                        },
                        "required": ["alpha", "beta", "inventory_K"],
                        "additionalProperties": False,
                    },
                },
                "uncertainty": {"oneOf": [_UNCERTAINTY, {"type": "array", "items": _UNCERTAINTY, "minItems": 1}]},
            },
            "required": ["grid", "rho", "sellers", "uncertainty"],
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "step_alpha": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "eps1": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "qp_tol": {"type": "number", "exclusiveMinimum": 0},
                "representation": {"enum": ["grid", "poly5"]},
                "gap_check": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "kind": {"enum": ["response", "monotone", "moving_average"]},
                    "delta": {"type": "number", "exclusiveMinimum": 0},
                    "sigma": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]},
                    "epsilon_start": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["kind", "delta"],
                "additionalProperties": False,
            },
        },
        "experiment": {
            "type": "object",
            "properties": {
                "kind": {"enum": list(EXPERIMENTS)},
                "mode": {"enum": ["robust", "nominal"]},
                "sweep": {
                    "type": "object",
                    "properties": {
                        "seller": {"type": "integer", "minimum": 1},
                        "coefficient": {"enum": ["alpha", "beta", "gamma"]},
                        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    },
                    "required": ["seller", "coefficient", "values"],
                    "additionalProperties": False,
                },
                "case": {"enum": ["I", "II", "III"]},
                "tau_bar_values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "distributions": {"type": "array", "items": _DIST, "minItems": 1},
        "n_draws": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
    },
    "required": ["market", "experiment"],
    "additionalProperties": False,
}


@dataclass
class RunConfig:
    raw: dict
    market: MarketSpec
    solver: SolverConfig
    rules: tuple
    experiment: dict
    distributions: tuple
    n_draws: int
    seed: int
    output: str | None

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    @property
    def mode(self) -> str:
        return self.experiment.get("mode", "robust")


def _affine(obj) -> AffinePath:
    return AffinePath.coerce(obj)


def _market(doc: dict) -> MarketSpec:
    g = doc["grid"]
    grid = TimeGrid(float(g["t0"]), float(g["tf"]), int(g["n"]))
    n = len(doc["sellers"])
    sellers = []
    for s, sd in enumerate(doc["sellers"]):
        gamma = {}
        for key, val in (sd.get("gamma") or {}).items():
            r = int(key) - 1
            if not 0 <= r < n or r == s:
                raise ConfigError(f"seller {s + 1}: gamma refers to invalid seller {key}")
            gamma[r] = _affine(val)
        sellers.append(
            make_seller(
                _affine(sd["alpha"]), _affine(sd["beta"]), gamma, float(sd["inventory_K"]),
                pi_min=float(sd.get("pi_min", 0.0)), pi_max=sd.get("pi_max"), d_min=sd.get("d_min"),
                grid=grid, name=sd.get("name", f"seller {s + 1}"),
            )
        )
    unc = doc["uncertainty"]
    if isinstance(unc, dict):
        unc = [unc] * n
    if len(unc) != n:
        raise ConfigError("uncertainty list needs one entry per seller")
    models = [UncertaintyModel(_affine(u["xi0"]), float(u["tau"])) for u in unc]
    return MarketSpec(grid, float(doc["rho"]), sellers, models)


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def from_dict(doc: dict) -> RunConfig:
    """Validate against the schema and build typed objects."""
    validate(doc)
    try:
        market = _market(doc["market"])
        solver = SolverConfig(**doc.get("solver", {}))
        rules = tuple(PricingRule(**r) for r in doc.get("rules", []))
        dists = tuple(DistributionSpec(d["a"], d["b"], d.get("family", "beta"))
                      for d in doc.get("distributions", [{"a": 1, "b": 1}]))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    exp = dict(doc["experiment"])
    if exp["kind"] == "sweep" and "sweep" not in exp:
        raise ConfigError("a sweep experiment needs experiment.sweep")
    if exp["kind"] == "robustness" and ("case" not in exp or "tau_bar_values" not in exp):
        raise ConfigError("a robustness experiment needs experiment.case and experiment.tau_bar_values")
    if exp["kind"] in ("sweep",) and exp["sweep"]["seller"] > market.n_sellers:
        raise ConfigError("sweep seller id out of range")
    return RunConfig(doc, market, solver, rules, exp, dists, int(doc.get("n_draws", 10000)),
                     int(doc.get("seed", 0)), doc.get("output"))


def load(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply ``a.b.0.c=value`` to a copy of ``doc``; value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key=value")
    key, text = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty override key in {assignment!r}")
    out = copy.deepcopy(doc)
    node = out
    for i, p in enumerate(parts[:-1]):
        if isinstance(node, list):
            try:
                node = node[int(p)]
            except (ValueError, IndexError):
                raise ConfigError(f"bad list index {p!r} in override {key}") from None
        else:
            node = node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = _parse_value(text)
        except (ValueError, IndexError):
            raise ConfigError(f"bad list index {last!r} in override {key}") from None
    elif isinstance(node, dict):
        node[last] = _parse_value(text)
    else:
        raise ConfigError(f"override {key} descends into a scalar")
    return out


# ---------------------------------------------------------------- presets

PRESET_NOTE = (
    "rho = 0 is a calibration choice: the source examples never state a discount rate. "
    "Price caps are 1.2x the single-seller choke price alpha(t0)/beta(tf), rounded up; "
    "demand floors are 1e-6 K/(tf - t0)."
)


def _lin(a, b=0.0):
    return {"a": a, "b": b}


def _two_sellers(alphas, betas, gammas, n=64):
    sellers = []
    for s in range(2):
        sellers.append({
            "name": f"seller {s + 1}",
            "alpha": alphas[s],
            "beta": betas[s],
            "gamma": {str(2 - s): gammas[s]},
            "inventory_K": [2500.0, 3000.0][s],
            "pi_min": 0.0,
        })
    return {
        "grid": {"t0": 1.0, "tf": 10.0, "n": n},
        "rho": 0.0,
        "sellers": sellers,
        "uncertainty": {"xi0": _lin(3.0, 0.1), "tau": 0.8},
    }


def _base(name, market, experiment, dists=((1, 1),)):
    return {
        "name": name,
        "note": PRESET_NOTE,
        "market": market,
        "solver": {"eps1": 1e-7, "max_iters": 5000, "qp_tol": 1e-8, "representation": "grid", "gap_check": True},
        "rules": [],
        "experiment": experiment,
        "distributions": [{"family": "beta", "a": a, "b": b} for a, b in dists],
        "n_draws": 10000,
        "seed": 20240601,
    }


_EX_82 = ((_lin(2500), _lin(3500)), (_lin(175, -4), _lin(170, -4)), (_lin(35, -2), _lin(34, -2)))
_SENS = ((_lin(2500), _lin(3500)), (_lin(170, -4), _lin(170, -4)), (_lin(40, -2), _lin(40, -2)))
TAU_BARS = [round(0.1 * k, 10) for k in range(9)]


def _sweep(seller, coef, values):
    return {"kind": "sweep", "mode": "robust", "sweep": {"seller": seller, "coefficient": coef, "values": values}}


def _robust_case(case):
    return {"kind": "robustness", "case": case, "tau_bar_values": TAU_BARS}


_PRESETS = {
    "ex-8.1.1": lambda: _base(
        "ex-8.1.1",
        _two_sellers((_lin(3000), _lin(3000)), (_lin(180, -4),) * 2, (_lin(36, -2),) * 2),
        {"kind": "solve", "mode": "robust"},
    ),
    "ex-8.1.2": lambda: _base(
        "ex-8.1.2",
        _two_sellers((_lin(2500), _lin(3000)), (_lin(180, -4), _lin(170, -4)), (_lin(36, -2), _lin(34, -2))),
        {"kind": "solve", "mode": "robust"},
    ),
    "ex-8.2": lambda: _base("ex-8.2", _two_sellers(*_EX_82), {"kind": "matrix"}, dists=((1, 1), (1, 3))),
    "sens-alpha1": lambda: _base("sens-alpha1", _two_sellers(*_SENS),
                                 _sweep(1, "alpha", [2000.0, 2250.0, 2500.0, 2750.0, 3000.0])),
    "sens-beta1": lambda: _base("sens-beta1", _two_sellers(*_SENS),
                                _sweep(1, "beta", [150.0, 160.0, 170.0, 180.0, 190.0])),
    "sens-gamma2": lambda: _base("sens-gamma2", _two_sellers(*_SENS),
                                 _sweep(2, "gamma", [30.0, 35.0, 40.0, 45.0, 50.0])),
    "robust-case-I": lambda: _base("robust-case-I", _two_sellers(*_EX_82), _robust_case("I"), dists=((1, 3),)),
    "robust-case-II": lambda: _base("robust-case-II", _two_sellers(*_EX_82), _robust_case("II"), dists=((1, 3),)),
    "robust-case-III": lambda: _base("robust-case-III", _two_sellers(*_EX_82), _robust_case("III"), dists=((1, 3),)),
}

PRESET_NAMES = tuple(_PRESETS)


def preset_document(name: str) -> dict:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None


def preset(name: str) -> RunConfig:
    return from_dict(preset_document(name))


def write_schema(path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
