"""Experiment configuration files.

Grammar (one item per line; blank lines and ``#`` comments ignored)::

    [section]
    key = value

Sections are ``experiment``, ``design``, ``integrator`` and ``output``.
Lists are comma-separated; booleans are ``true``/``false``. Every key
defaults sensibly except ``experiment.name`` and, for cooling, the coupling
bound (``g_max`` or ``g_max_preset``); keys that do not apply to the chosen
experiment or control law are rejected.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .cooling import G_MAX_PRESETS, CoolingParams
from .designs import ControlDesign, Conventional, PowerConstrained, StrengthConstrained
from .dynamics import METHODS, IntegratorConfig
from .errors import ConfigError

EXPERIMENTS = (
    "three-level",
    "convergence-ensemble",
    "robustness-h0",
    "robustness-decoherence",
    "cooling",
)
LAWS = {"conventional": "conventional", "power": "power", "strength": "strength", "bang-bang": "strength"}
FORMATS = ("csv", "json")

_COOLING_DEFAULTS = CoolingParams()

# key -> (type, default); a default of None means "no default, optional"
_EXPERIMENT_KEYS = {
    "three-level": {
        "initial_state": ("choice:uniform,random", "uniform"),
        "run_past_stop": ("bool", False),
    },
    "convergence-ensemble": {
        "n_states": ("int", 50),
    },
    "robustness-h0": {
        "n_states": ("int", 1000),
        "generator": ("int", 1),
        "deltas": ("reals", [0.005, 0.01, 0.02]),
    },
    "robustness-decoherence": {
        "n_states": ("int", 1000),
        "gammas": ("positive_reals", [0.0005, 0.001, 0.002]),
        "lindblad_substeps": ("int", 10),
    },
    "cooling": {
        "omega_ratio": ("real", _COOLING_DEFAULTS.omega_ratio),
        "dim": ("int", _COOLING_DEFAULTS.dim),
        "nbar0": ("real", _COOLING_DEFAULTS.nbar0),
        "g_max_preset": ("choice:" + ",".join(G_MAX_PRESETS), None),
        "g_max": ("real", None),
        "g_seed": ("real", _COOLING_DEFAULTS.g_seed),
        "seed_duration": ("real", _COOLING_DEFAULTS.seed_duration),
        "stop_phonons": ("real", _COOLING_DEFAULTS.stop_phonons),
        "run_past_stop": ("bool", False),
    },
}

_INTEGRATOR_DEFAULTS = {
    "three-level": (0.01, 400.0),
    "convergence-ensemble": (0.01, 1000.0),
    "robustness-h0": (0.01, 3000.0),
    "robustness-decoherence": (0.01, 3000.0),
    "cooling": (2e-4, 60.0),
}

_LAW_KEYS = {"conventional": "k", "power": "w_max", "strength": "s"}


@dataclass
class ExperimentConfig:
    experiment: str
    design: ControlDesign
    integrator: IntegratorConfig
    seed: int = 0
    output_path: Optional[str] = None
    output_format: str = "csv"
    record_every: int = 1
    params: Dict[str, Any] = field(default_factory=dict)

    def cooling_params(self):
        p = self.params
        return CoolingParams(
            omega_ratio=p["omega_ratio"],
            dim=p["dim"],
            nbar0=p["nbar0"],
            g_max=p["g_max"],
            g_seed=p["g_seed"],
            seed_duration=p["seed_duration"],
            stop_phonons=p["stop_phonons"],
        )

    def resolved(self):
        """Every setting, defaults included, as plain JSON-serialisable data."""
        law = self.design.law
        law_name = {Conventional: "conventional", PowerConstrained: "power",
                    StrengthConstrained: "strength"}[type(law)]
        return {
            "experiment": {"name": self.experiment, "seed": self.seed, **self.params},
            "design": {
                "law": law_name,
                _LAW_KEYS[law_name]: getattr(law, _LAW_KEYS[law_name]),
                "epsilon": self.design.epsilon,
                "averaging_window": self.design.averaging_window,
            },
            "integrator": {
                "dt": self.integrator.dt,
                "t_max": self.integrator.t_max,
                "method": self.integrator.method,
                "record_every": self.record_every,
            },
            "output": {"path": self.output_path, "format": self.output_format},
        }


def _split(text):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            current = line[1:-1].strip().lower()
            if current not in ("experiment", "design", "integrator", "output"):
                raise ConfigError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno)
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
        sections[current][key] = (value, lineno)
    return sections


def _convert(key, kind, value, lineno):
    def real(v):
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {v!r}", lineno) from None

    def positive(x):
        if not x > 0:
            raise ConfigError(f"{key} must be strictly positive, got {x!r}", lineno)
        return x

    if kind == "real":
        return positive(real(value))
    if kind == "int":
        try:
            n = int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}", lineno) from None
        return positive(n)
    if kind == "bool":
        if value.lower() not in ("true", "false"):
            raise ConfigError(f"{key}: expected true or false, got {value!r}", lineno)
        return value.lower() == "true"
    if kind in ("reals", "positive_reals"):
        items = [s.strip() for s in value.split(",") if s.strip()]
        if not items:
            raise ConfigError(f"{key}: empty list", lineno)
        vals = [real(s) for s in items]
        return [positive(v) for v in vals] if kind == "positive_reals" else vals
    if kind.startswith("choice:"):
        choices = kind.split(":", 1)[1].split(",")
        if value not in choices:
            raise ConfigError(f"{key}: expected one of {choices}, got {value!r}", lineno)
        return value
    raise AssertionError(kind)


def _take(section, allowed, section_name, context):
    out = {}
    for key, (value, lineno) in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{section_name}] for {context}", lineno)
        out[key] = _convert(key, allowed[key], value, lineno)
    return out


def parse_config(text):
    """Parse and validate a configuration document into an ExperimentConfig."""
    sections = _split(text)
    exp = sections.get("experiment", {})
    if "name" not in exp:
        raise ConfigError("missing experiment name ([experiment] name = ...)")
    name, lineno = exp.pop("name")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}", lineno)

    seed = 0
    if "seed" in exp:
        value, lineno = exp.pop("seed")
        try:
            seed = int(value)
        except ValueError:
            raise ConfigError(f"seed: expected an integer, got {value!r}", lineno) from None
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer", lineno)

    schema = _EXPERIMENT_KEYS[name]
    given = _take(exp, {k: kind for k, (kind, _) in schema.items()}, "experiment", name)
    params = {k: given.get(k, default) for k, (_, default) in schema.items()}
    if name == "robustness-h0" and not 1 <= params["generator"] <= 8:
        raise ConfigError("generator must be in 1..8", exp["generator"][1])
    if name == "cooling":
        # the coupling bound has no default: the two published values differ tenfold
        if params["g_max"] is None and params["g_max_preset"] is None:
            raise ConfigError(f"cooling needs g_max or g_max_preset (one of {list(G_MAX_PRESETS)})")
        if params["g_max"] is not None and params["g_max_preset"] is not None:
            raise ConfigError("give either g_max or g_max_preset, not both", exp["g_max"][1])
        if params["g_max"] is None:
            params["g_max"] = G_MAX_PRESETS[params["g_max_preset"]]

    design = _parse_design(sections.get("design", {}), name, params)
    integrator, record_every = _parse_integrator(sections.get("integrator", {}), name)

    out = _parse_output(sections.get("output", {}))
    return ExperimentConfig(
        experiment=name,
        design=design,
        integrator=integrator,
        seed=seed,
        output_path=out.get("path"),
        output_format=out.get("format", "csv"),
        record_every=record_every,
        params=params,
    )


def _parse_design(section, experiment, params):
    section = dict(section)
    law_name = "conventional"
    if "law" in section:
        value, lineno = section.pop("law")
        if value not in LAWS:
            raise ConfigError(f"law: expected one of {list(LAWS)}, got {value!r}", lineno)
        law_name = LAWS[value]
    if experiment == "cooling" and law_name == "power":
        raise ConfigError("cooling supports the conventional and strength laws only")
    law_key = _LAW_KEYS[law_name]
    allowed = {law_key: "real", "epsilon": "real", "averaging_window": "real"}
    if experiment == "cooling":
        del allowed["epsilon"]
        del allowed["averaging_window"]
    given = _take(section, allowed, "design", f"law {law_name!r} in {experiment}")
    if experiment == "cooling":
        defaults = {"k": _COOLING_DEFAULTS.k_gain, "s": params["g_max"]}
    else:
        defaults = {"k": 0.01, "w_max": 1e-4, "s": 0.007}
    value = given.get(law_key, defaults[law_key])
    law = {"conventional": Conventional, "power": PowerConstrained, "strength": StrengthConstrained}[law_name](value)
    if experiment == "cooling" and law_name == "strength" and value > params["g_max"]:
        raise ConfigError(f"s = {value} exceeds g_max = {params['g_max']}", section.get("s", (None, None))[1])
    return ControlDesign(law=law, epsilon=given.get("epsilon", 1e-3),
                         averaging_window=given.get("averaging_window"))


def _parse_integrator(section, experiment):
    section = dict(section)
    method = "unitary-step"
    if "method" in section:
        value, lineno = section.pop("method")
        if value not in METHODS:
            raise ConfigError(f"method: expected one of {list(METHODS)}, got {value!r}", lineno)
        method = value
    given = _take(section, {"dt": "real", "t_max": "real", "record_every": "int"}, "integrator", experiment)
    dt, t_max = _INTEGRATOR_DEFAULTS[experiment]
    dt = given.get("dt", dt)
    t_max = given.get("t_max", t_max)
    if t_max < dt:
        raise ConfigError(f"t_max ({t_max}) must be at least dt ({dt})")
    return IntegratorConfig(dt=dt, t_max=t_max, method=method), given.get("record_every", 1)


def _parse_output(section):
    out = {}
    for key, (value, lineno) in section.items():
        if key == "path":
            if not value:
                raise ConfigError("path: empty value", lineno)
            out["path"] = value
        elif key == "format":
            if value not in FORMATS:
                raise ConfigError(f"format: expected one of {list(FORMATS)}, got {value!r}", lineno)
            out["format"] = value
        else:
            raise ConfigError(f"unknown key {key!r} in [output]", lineno)
    return out
