"""Scenario files: strict JSON parsing, defaults, canonical serialization.

A scenario is the single source of truth for a run: the multi-time state, the
diagonal chart, sampler settings, and the list of analyses with their
parameters. Parsing is strict (unknown keys are errors) so a typo cannot
silently change an experiment. Serialization is canonical (sorted keys,
defaults filled, complex values always as [re, im] pairs), so
parse -> serialize -> parse is the identity on scenarios and the scenario
hash identifies the physics, not the formatting.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from importlib import resources

from .dynamics import DEFAULT_STEP
from .ensemble import SamplerConfig
from .errors import ParseError, ValidationError
from .packets import GaussianPacket, Potential, PotentialSpec
from .wavefunction import MftState

ANALYSIS_OPS = ("simulate", "equivariance", "collapse", "sensitivity",
                "epr-scan", "newton-check", "residuals")

# squared-sum deviation below _COEFF_SILENT is representation noise and the
# coefficients are kept bit-for-bit (round-trip identity); up to _COEFF_ERR
# they are renormalized with a warning; beyond that the file is rejected.
_COEFF_SILENT = 1e-12
_COEFF_ERR = 1e-6


def _fail(path: str, msg: str):
    raise ValidationError(f"{path}: {msg}")


def _expect_obj(obj, path: str, allowed, required):
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        _fail(path, f"unknown key(s) {unknown} (strict mode)")
    missing = sorted(set(required) - set(obj))
    if missing:
        _fail(path, f"missing required key(s) {missing}")


def _expect_list(obj, path: str):
    if not isinstance(obj, list):
        _fail(path, f"expected an array, got {type(obj).__name__}")
    return obj


def _real(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {type(v).__name__}")
    return float(v)


def _integer(v, path: str, minimum=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        _fail(path, f"expected >= {minimum}, got {v}")
    return v


def _complex_value(v, path: str) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(float(v), 0.0)
    if isinstance(v, list) and len(v) == 2:
        return complex(_real(v[0], path + "[0]"), _real(v[1], path + "[1]"))
    _fail(path, "expected a number or an [re, im] pair")


def _real_vector(v, path: str, length=None) -> tuple:
    vals = tuple(_real(x, f"{path}[{k}]") for k, x in
                 enumerate(_expect_list(v, path)))
    if length is not None and len(vals) != length:
        _fail(path, f"expected {length} entries, got {len(vals)}")
    return vals


_PACKET_KEYS = ("mass", "potential", "omega", "center", "momentum",
                "width_param", "phase", "ref_time")
_PACKET_REQUIRED = ("mass", "potential", "center", "momentum", "width_param")


def _parse_packet(obj, path: str) -> GaussianPacket:
    _expect_obj(obj, path, _PACKET_KEYS, _PACKET_REQUIRED)
    kind = obj["potential"]
    if kind == "harmonic":
        if "omega" not in obj:
            _fail(path, "harmonic potential requires 'omega'")
        pot = PotentialSpec(Potential.HARMONIC, _real(obj["omega"], path + ".omega"))
    elif kind == "free":
        if "omega" in obj:
            _fail(path + ".omega", "free potential must not set omega")
        pot = PotentialSpec(Potential.FREE)
    else:
        _fail(path + ".potential", f"expected 'free' or 'harmonic', got {kind!r}")
    try:
        return GaussianPacket(
            mass=_real(obj["mass"], path + ".mass"),
            potential=pot,
            center=_real(obj["center"], path + ".center"),
            momentum=_real(obj["momentum"], path + ".momentum"),
            width_param=_complex_value(obj["width_param"], path + ".width_param"),
            phase=_real(obj.get("phase", 0.0), path + ".phase"),
            ref_time=_real(obj.get("ref_time", 0.0), path + ".ref_time"),
        )
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_state(obj, path: str) -> MftState:
    _expect_obj(obj, path, ("branches", "coefficients"),
                ("branches", "coefficients"))
    branches = []
    for a, br in enumerate(_expect_list(obj["branches"], path + ".branches")):
        packets = _expect_list(br, f"{path}.branches[{a}]")
        branches.append(tuple(_parse_packet(p, f"{path}.branches[{a}][{i}]")
                              for i, p in enumerate(packets)))
    if not branches:
        _fail(path + ".branches", "at least one branch is required")
    n = len(branches[0])
    for a, br in enumerate(branches):
        if len(br) != n:
            _fail(f"{path}.branches[{a}]",
                  f"particle count {len(br)} != {n} of branches[0]")
    coeffs = [_complex_value(c, f"{path}.coefficients[{a}]")
              for a, c in enumerate(_expect_list(obj["coefficients"], path + ".coefficients"))]
    if len(coeffs) != len(branches):
        _fail(path + ".coefficients",
              f"{len(coeffs)} coefficients for {len(branches)} branches")
    norm2 = sum(abs(c) ** 2 for c in coeffs)
    dev = abs(norm2 - 1.0)
    if dev >= _COEFF_ERR:
        _fail(path + ".coefficients",
              f"squared sum {norm2!r} is off unity by {dev:.3e} (>= {_COEFF_ERR:g})")
    if dev > _COEFF_SILENT:
        scale = norm2 ** -0.5
        coeffs = [c * scale for c in coeffs]
        warnings.warn(f"{path}.coefficients renormalized "
                      f"(squared sum off unity by {dev:.3e})")
    try:
        return MftState(branches=tuple(branches), coefficients=tuple(coeffs))
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_dynamics(obj, path: str, n: int):
    _expect_obj(obj, path, ("delta_offsets", "tau0", "tau1", "step"),
                ("delta_offsets", "tau1"))
    delta = _real_vector(obj["delta_offsets"], path + ".delta_offsets", n)
    if abs(sum(delta)) > 1e-12:
        _fail(path + ".delta_offsets",
              f"offsets must sum to zero, got {sum(delta)!r}")
    tau0 = _real(obj.get("tau0", 0.0), path + ".tau0")
    tau1 = _real(obj["tau1"], path + ".tau1")
    step = _real(obj.get("step", DEFAULT_STEP), path + ".step")
    if not step > 0.0:
        _fail(path + ".step", f"step must be positive, got {step!r}")
    return delta, tau0, tau1, step


def _parse_sampler(obj, path: str) -> SamplerConfig:
    _expect_obj(obj, path,
                ("n_samples", "seed", "burn_in", "thinning", "proposal"), ())
    try:
        return SamplerConfig(
            n_samples=_integer(obj.get("n_samples", 10000), path + ".n_samples", 1),
            seed=_integer(obj.get("seed", 42), path + ".seed", 0),
            burn_in=_integer(obj.get("burn_in", 1000), path + ".burn_in", 0),
            thinning=_integer(obj.get("thinning", 10), path + ".thinning", 1),
            proposal=obj.get("proposal", "MixtureIndependence"),
        )
    except ValueError as exc:
        _fail(path, str(exc))


# allowed / required / defaults per analysis op; vectors of per-particle
# length are validated against the state separately.
_OP_SCHEMAS = {
    "simulate": (("x0",), ("x0",), {}),
    "equivariance": ((), (), {}),
    "collapse": (("recheck_dtau",), (), {"recheck_dtau": 0.5}),
    "sensitivity": (("i", "j", "times", "n_per_axis", "half_widths"),
                    ("i", "j", "times"),
                    {"n_per_axis": 5, "half_widths": 2.0}),
    "epr-scan": (("t1_fixed", "t2_grid"), ("t1_fixed", "t2_grid"), {}),
    "newton-check": (("x0", "q_step"), ("x0",), {"q_step": 1e-3}),
    "residuals": (("times", "hx", "ht"), ("times",),
                  {"hx": 1e-3, "ht": 1e-3}),
}


def _parse_analysis(obj, path: str, n: int) -> tuple:
    entries = []
    seen = set()
    for k, raw in enumerate(_expect_list(obj, path)):
        p = f"{path}[{k}]"
        if not isinstance(raw, dict) or "op" not in raw:
            _fail(p, "expected an object with an 'op' key")
        op = raw["op"]
        if op not in _OP_SCHEMAS:
            _fail(p + ".op", f"unknown op {op!r}; expected one of {list(_OP_SCHEMAS)}")
        if op in seen:
            _fail(p + ".op", f"duplicate analysis entry for {op!r}")
        seen.add(op)
        allowed, required, defaults = _OP_SCHEMAS[op]
        _expect_obj(raw, p, ("op",) + allowed, ("op",) + required)
        params = dict(defaults)
        params.update((key, raw[key]) for key in allowed if key in raw)
        if op in ("simulate", "newton-check"):
            params["x0"] = list(_real_vector(params["x0"], p + ".x0", n))
        if op == "sensitivity":
            params["i"] = _integer(params["i"], p + ".i", 0)
            params["j"] = _integer(params["j"], p + ".j", 0)
            if params["i"] >= n or params["j"] >= n or params["i"] == params["j"]:
                _fail(p, f"need distinct particle indices below {n}, "
                         f"got i={params['i']}, j={params['j']}")
            params["times"] = list(_real_vector(params["times"], p + ".times", n))
            params["n_per_axis"] = _integer(params["n_per_axis"], p + ".n_per_axis", 2)
            params["half_widths"] = _real(params["half_widths"], p + ".half_widths")
        if op == "epr-scan":
            if n != 2:
                _fail(p, "epr-scan needs a 2-particle state")
            params["t1_fixed"] = _real(params["t1_fixed"], p + ".t1_fixed")
            params["t2_grid"] = list(_real_vector(params["t2_grid"], p + ".t2_grid"))
        if op == "collapse":
            params["recheck_dtau"] = _real(params["recheck_dtau"], p + ".recheck_dtau")
        if op == "newton-check":
            params["q_step"] = _real(params["q_step"], p + ".q_step")
        if op == "residuals":
            params["times"] = [list(_real_vector(tv, f"{p}.times[{q}]", n))
                               for q, tv in enumerate(_expect_list(params["times"], p + ".times"))]
            params["hx"] = _real(params["hx"], p + ".hx")
            params["ht"] = _real(params["ht"], p + ".ht")
        entries.append((op, params))
    return tuple(entries)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated run configuration with all defaults filled."""

    name: str
    state: MftState
    delta_offsets: tuple
    tau0: float
    tau1: float
    step: float
    sampler: SamplerConfig
    analysis: tuple          # of (op_name, params dict)
    output_dir: str

    def analysis_params(self, op: str):
        """Parameters for one analysis op, or None if the scenario lacks it."""
        for name, params in self.analysis:
            if name == op:
                return params
        return None

    @property
    def canonical(self) -> str:
        return serialize_scenario(self)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()

    def __eq__(self, other):
        return isinstance(other, Scenario) and self.canonical == other.canonical

    def __hash__(self):
        return hash(self.canonical)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario JSON; fill defaults.

    Raises ParseError (with line/column) for malformed JSON and
    ValidationError naming the offending key path for schema violations.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno, column=exc.colno) from None
    _expect_obj(obj, "scenario",
                ("name", "state", "dynamics", "sampler", "analysis", "output_dir"),
                ("name", "state", "dynamics"))
    if not isinstance(obj["name"], str) or not obj["name"]:
        _fail("scenario.name", "expected a non-empty string")
    state = _parse_state(obj["state"], "scenario.state")
    n = state.n_particles
    delta, tau0, tau1, step = _parse_dynamics(obj["dynamics"], "scenario.dynamics", n)
    sampler = _parse_sampler(obj.get("sampler", {}), "scenario.sampler")
    analysis = _parse_analysis(obj.get("analysis", []), "scenario.analysis", n)
    output_dir = obj.get("output_dir", "./out")
    if not isinstance(output_dir, str) or not output_dir:
        _fail("scenario.output_dir", "expected a non-empty string")
    return Scenario(name=obj["name"], state=state, delta_offsets=delta,
                    tau0=tau0, tau1=tau1, step=step, sampler=sampler,
                    analysis=analysis, output_dir=output_dir)


def _packet_obj(p: GaussianPacket) -> dict:
    obj = {
        "mass": p.mass,
        "potential": p.potential.kind.value,
        "center": p.center,
        "momentum": p.momentum,
        "width_param": [p.width_param.real, p.width_param.imag],
        "phase": p.phase,
        "ref_time": p.ref_time,
    }
    if p.potential.kind is Potential.HARMONIC:
        obj["omega"] = p.potential.omega
    return obj


def serialize_scenario(sc: Scenario) -> str:
    """Canonical JSON: sorted keys, defaults filled, complex as [re, im]."""
    obj = {
        "name": sc.name,
        "state": {
            "branches": [[_packet_obj(p) for p in br] for br in sc.state.branches],
            "coefficients": [[c.real, c.imag] for c in sc.state.coefficients],
        },
        "dynamics": {
            "delta_offsets": list(sc.delta_offsets),
            "tau0": sc.tau0,
            "tau1": sc.tau1,
            "step": sc.step,
        },
        "sampler": {
            "n_samples": sc.sampler.n_samples,
            "seed": sc.sampler.seed,
            "burn_in": sc.sampler.burn_in,
            "thinning": sc.sampler.thinning,
            "proposal": sc.sampler.proposal,
        },
        "analysis": [{"op": op, **params} for op, params in sc.analysis],
        "output_dir": sc.output_dir,
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def bundled_names() -> tuple:
    root = resources.files(__package__) / "scenarios"
    return tuple(sorted(p.name[:-5] for p in root.iterdir()
                        if p.name.endswith(".json")))


def load_bundled(name: str) -> Scenario:
    ref = resources.files(__package__) / "scenarios" / f"{name}.json"
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(
            f"no bundled scenario {name!r}; available: {list(bundled_names())}"
        ) from None
    return parse_scenario(text)
