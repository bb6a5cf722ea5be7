"""Scenario files: validation, eager parsing, and seeded random generation.

A scenario is a JSON object that fixes everything a run needs:

    {
      "chart": {"n": 1, "q": 2, "box": [[-0.9], [0.9]]},
      "metric": {"parity": 0, "coefficients": {"x1,x1": "1", "e1,e2": "1 + x1"}},
      "initial_conditions": [{"x0": [0.1], "v0": [0.4], "e0": [0.2, -0.3], "w0": [0.0, 0.1]}],
      "integration": {"dt": 0.001, "t_end": 1.0},
      "checks": ["levi-civita", "correspondence"],
      "seed": 7
    }

Exactly one of "metric" / "connection" must be present.  Metric coefficients
are keyed by coordinate-label pairs "r,s" (labels x1..xn, e1..eq); omitted
entries default to the graded-symmetric partner, or to zero.  A connection
block instead carries {"christoffels": {"s,u,r": text}} where the key names
the coefficient of nabla_{d_s} d_u along d_r.  All expression texts are
parsed when the file is loaded, so a malformed entry fails up front with a
JSON-pointer-style location rather than mid-integration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .flow import InitialCondition
from .geometry import (
    SuperConnection,
    SuperMetric,
    SupergeometryError,
    levi_civita,
)
from .superfield import ChartSpec, SuperfieldError

SUITES = (
    "levi-civita",
    "reduction-structure",
    "torsion-compat-preservation",
    "levi-civita-preservation",
    "correspondence",
    "appendix-a",
    "equivariance",
)

#: suites that only make sense when the scenario supplies a metric
METRIC_ONLY_SUITES = frozenset(
    {"levi-civita", "levi-civita-preservation", "appendix-a"}
)

DEFAULT_BOX_HALF_WIDTH = 0.9


class ScenarioError(Exception):
    """Schema or consistency problem, located by a JSON-pointer-like path."""

    def __init__(self, message, where="/"):
        self.where = where
        self.message = message
        super().__init__(f"{where}: {message}")


def _fail(message, where):
    raise ScenarioError(message, where)


def _expect_type(value, types, what, where):
    bad = not isinstance(value, types) or isinstance(value, bool)
    if bad:
        if not isinstance(types, tuple):
            types = (types,)
        names = "/".join(t.__name__ for t in types)
        _fail(f"{what} must be {names}, got {type(value).__name__}", where)
    return value


def _get(obj, key, types, where, default=None, required=True):
    if key not in obj:
        if required:
            _fail(f"missing required field {key!r}", where)
        return default
    return _expect_type(obj[key], types, key, f"{where}/{key}")


def _float_list(value, length, what, where):
    if not isinstance(value, list) or len(value) != length:
        _fail(f"{what} must be a list of {length} numbers", where)
    out = []
    for k, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            _fail("entries must be numbers", f"{where}/{k}")
        out.append(float(v))
    return out


@dataclass(frozen=True)
class Scenario:
    """A fully parsed scenario; every text field has become an object."""

    chart: ChartSpec
    box: tuple  # (lo, hi) arrays over the base coordinates
    metric: SuperMetric | None
    connection: SuperConnection | None
    initial_conditions: tuple
    dt: float
    t_end: float
    checks: tuple
    seed: int
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def parity(self):
        return self.metric.parity if self.metric is not None else None

    def working_connection(self):
        """The connection the checks and integrators act on: the explicit one,
        or the Levi-Civita connection of the metric."""
        if self.connection is not None:
            return self.connection
        return levi_civita(self.metric)

    def to_json_dict(self):
        return json.loads(json.dumps(self.raw))


def _parse_slot_key(key, chart, arity, where):
    parts = [p.strip() for p in key.split(",")]
    if len(parts) != arity:
        _fail(f"key must name {arity} comma-separated coordinates", where)
    slots = []
    for p in parts:
        try:
            slots.append(chart.slot(p))
        except SuperfieldError as err:
            _fail(str(err), where)
    return tuple(slots)


def _parse_chart(data, where="/chart"):
    block = _expect_type(data, dict, "chart", where)
    n = _get(block, "n", int, where)
    q = _get(block, "q", int, where)
    try:
        chart = ChartSpec(n, q)
    except SuperfieldError as err:
        _fail(str(err), where)
    box = _get(block, "box", list, where)
    if len(box) != 2:
        _fail("box must be [lower_bounds, upper_bounds]", f"{where}/box")
    lo = np.array(_float_list(box[0], n, "lower bounds", f"{where}/box/0"))
    hi = np.array(_float_list(box[1], n, "upper bounds", f"{where}/box/1"))
    if not np.all(lo < hi):
        _fail("each lower bound must be strictly below its upper bound", f"{where}/box")
    return chart, (lo, hi)


def _parse_metric(block, chart, where="/metric"):
    parity = _get(block, "parity", int, where)
    if parity not in (0, 1):
        _fail("parity must be 0 or 1", f"{where}/parity")
    if parity == 1 and chart.n != chart.q:
        _fail("odd metric requires n=q", f"{where}/parity")
    if parity == 0 and chart.q % 2 != 0:
        _fail("even metric requires an even number of odd coordinates", f"{where}/parity")
    coeffs = _get(block, "coefficients", dict, where)
    entries = {}
    for key, text in coeffs.items():
        kwhere = f"{where}/coefficients/{key}"
        slots = _parse_slot_key(key, chart, 2, kwhere)
        _expect_type(text, str, "coefficient", kwhere)
        try:
            entries[slots] = text
        except SuperfieldError as err:  # pragma: no cover - defensive
            _fail(str(err), kwhere)
    try:
        return SuperMetric.from_components(chart, parity, entries)
    except (SupergeometryError, SuperfieldError, ex.ExprError) as err:
        _fail(str(err), f"{where}/coefficients")


def _parse_connection(block, chart, where="/connection"):
    coeffs = _get(block, "christoffels", dict, where)
    entries = {}
    for key, text in coeffs.items():
        kwhere = f"{where}/christoffels/{key}"
        slots = _parse_slot_key(key, chart, 3, kwhere)
        _expect_type(text, str, "christoffel", kwhere)
        entries[slots] = text
    try:
        return SuperConnection.from_components(chart, entries, validate=True)
    except (SupergeometryError, SuperfieldError, ex.ExprError) as err:
        _fail(str(err), f"{where}/christoffels")


def _parse_initial_conditions(data, chart, box, where="/initial_conditions"):
    block = _expect_type(data, list, "initial_conditions", where)
    if not block:
        _fail("need at least one initial condition", where)
    lo, hi = box
    out = []
    for k, item in enumerate(block):
        iwhere = f"{where}/{k}"
        _expect_type(item, dict, "initial condition", iwhere)
        x0 = _float_list(_get(item, "x0", list, iwhere), chart.n, "x0", f"{iwhere}/x0")
        v0 = _float_list(_get(item, "v0", list, iwhere), chart.n, "v0", f"{iwhere}/v0")
        e0 = _float_list(_get(item, "e0", list, iwhere), chart.q, "e0", f"{iwhere}/e0")
        w0 = _float_list(_get(item, "w0", list, iwhere), chart.q, "w0", f"{iwhere}/w0")
        if not np.all((lo <= np.array(x0)) & (np.array(x0) <= hi)):
            _fail("x0 lies outside the chart box", f"{iwhere}/x0")
        out.append(InitialCondition.from_arrays(x0, v0, e0, w0))
    return tuple(out)


def scenario_from_dict(data, where=""):
    """Validate a decoded JSON object and parse every text field."""
    root = where or "/"
    _expect_type(data, dict, "scenario", root)
    chart, box = _parse_chart(_get(data, "chart", dict, root))

    has_metric = "metric" in data
    has_connection = "connection" in data
    if has_metric == has_connection:
        _fail("exactly one of 'metric' and 'connection' must be present", root)
    metric = connection = None
    if has_metric:
        metric = _parse_metric(_expect_type(data["metric"], dict, "metric", "/metric"), chart)
    else:
        connection = _parse_connection(
            _expect_type(data["connection"], dict, "connection", "/connection"), chart
        )

    ics = _parse_initial_conditions(_get(data, "initial_conditions", list, root), chart, box)

    integ = _get(data, "integration", dict, root)
    dt = float(_get(integ, "dt", (int, float), "/integration"))
    t_end = float(_get(integ, "t_end", (int, float), "/integration"))
    if dt <= 0 or t_end <= 0:
        _fail("dt and t_end must be positive", "/integration")
    steps = round(t_end / dt)
    if steps < 1 or abs(steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        _fail("t_end must be a positive integer multiple of dt", "/integration")

    checks = _get(data, "checks", list, root, default=[], required=False)
    for k, name in enumerate(checks):
        cwhere = f"/checks/{k}"
        _expect_type(name, str, "check name", cwhere)
        if name not in SUITES:
            _fail(f"unknown check suite {name!r}; valid: {', '.join(SUITES)}", cwhere)
        if name in METRIC_ONLY_SUITES and metric is None:
            _fail(f"suite {name!r} requires a metric scenario", cwhere)
        if name == "levi-civita-preservation" and metric is not None and metric.parity == 0:
            _fail("suite 'levi-civita-preservation' applies to odd metrics only", cwhere)

    seed = _get(data, "seed", int, root, default=0, required=False)
    if isinstance(seed, bool) or seed < 0:
        _fail("seed must be a non-negative integer", "/seed")

    tolerances = _get(data, "tolerances", dict, root, default={}, required=False)
    for name, value in tolerances.items():
        twhere = f"/tolerances/{name}"
        if name not in SUITES:
            _fail(f"unknown check suite {name!r}", twhere)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            _fail("tolerance must be a positive number", twhere)

    return Scenario(
        chart=chart,
        box=box,
        metric=metric,
        connection=connection,
        initial_conditions=ics,
        dt=dt,
        t_end=t_end,
        checks=tuple(checks),
        seed=seed,
        tolerances={k: float(v) for k, v in tolerances.items()},
        raw=json.loads(json.dumps(data)),
    )


def load_scenario(path):
    """Read and validate a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as err:
        raise ScenarioError(str(err), "/") from err
    except json.JSONDecodeError as err:
        raise ScenarioError(f"not valid JSON: {err}", "/") from err
    return scenario_from_dict(data)


def dump_scenario(scenario, path):
    """Write the scenario's raw JSON form, byte-stable for a fixed dict."""
    text = json.dumps(scenario.raw, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


# ---- random generation ---------------------------------------------------------------


def _fmt(c):
    return f"{c:.6f}"


def _poly_text(rng, n, scale, constant=0.0):
    """Low-degree polynomial text with perturbation sup-norm below `scale` on
    the standard box.  With scale 0 only the constant survives."""
    parts = []
    if constant != 0.0:
        parts.append(_fmt(constant))
    if scale > 0.0:
        monomials = [f"x{i + 1}" for i in range(n)]
        monomials += [f"x{i + 1}^2" for i in range(n)]
        if n >= 2:
            monomials.append("x1*x2")
        budget = scale / (len(monomials) + 1)
        const_pert = rng.uniform(-1, 1) * budget
        if not parts:
            parts.append(_fmt(const_pert))
        else:
            parts.append(("+ " if const_pert >= 0 else "- ") + _fmt(abs(const_pert)))
        for mono in monomials:
            c = rng.uniform(-1, 1) * budget
            parts.append(("+ " if c >= 0 else "- ") + f"{_fmt(abs(c))}*{mono}")
    if not parts:
        return ""
    return " ".join(parts)


def _odd_text(rng, n, q, scale):
    """A parity-1 element: sum of polynomial coefficients times single e's."""
    if scale <= 0.0:
        return ""
    terms = []
    for b in range(q):
        coeff = _poly_text(rng, n, scale * 0.5, constant=rng.uniform(-1, 1) * scale)
        terms.append(f"({coeff})*e[{b + 1}]")
    return " + ".join(terms)


def _soul_even_text(rng, q, scale):
    """An even nilpotent correction, one e[a,b] term, or nothing."""
    if scale <= 0.0 or q < 2:
        return ""
    c = rng.uniform(-1, 1) * scale
    return ("+ " if c >= 0 else "- ") + f"{_fmt(abs(c))}*e[1,2]"


def _label(chart, slot):
    return chart.label(slot)


def random_scenario(n, q, parity, seed, scale=0.1):
    """Deterministic scenario with an invertible random metric.

    The metric is a constant nondegenerate block plus low-degree polynomial
    perturbations whose sup-norm on the box stays below the block's margin,
    so the body matrix is invertible everywhere by construction.  The same
    seed always produces the identical scenario; scale 0 gives the flat one.
    """
    if parity not in (0, 1):
        raise ScenarioError("parity must be 0 or 1", "/metric/parity")
    if parity == 1 and n != q:
        raise ScenarioError("odd metric requires n=q", "/metric/parity")
    if parity == 0 and q % 2 != 0:
        raise ScenarioError(
            "even metric requires an even number of odd coordinates", "/metric/parity"
        )
    chart = ChartSpec(n, q)
    rng = np.random.default_rng(seed)
    scale = float(scale)
    if scale < 0 or scale > 0.4:
        raise ScenarioError("perturbation scale must lie in [0, 0.4]", "/")

    coeffs = {}

    def put(r, s, text):
        if text:
            coeffs[f"{_label(chart, r)},{_label(chart, s)}"] = text

    if parity == 0:
        for i in range(n):
            base = _poly_text(rng, n, scale, constant=1.0 + rng.uniform(-0.2, 0.2))
            soul = _soul_even_text(rng, q, scale * 0.5)
            put(i, i, f"{base} {soul}".strip())
            for j in range(i + 1, n):
                put(i, j, _poly_text(rng, n, scale * 0.5))
        # fiber pairing: symplectic-style constant block plus perturbations
        for a in range(0, q - 1, 2):
            base = _poly_text(rng, n, scale, constant=1.0 + rng.uniform(-0.2, 0.2))
            put(n + a, n + a + 1, base)
        for a in range(q):
            for b in range(a + 1, q):
                if b == a + 1 and a % 2 == 0:
                    continue
                put(n + a, n + b, _poly_text(rng, n, scale * 0.5))
        for i in range(n):
            for a in range(q):
                put(i, n + a, _odd_text(rng, n, q, scale * 0.3))
    else:
        # the even/odd pairing carries the nondegeneracy: body = I + small
        for i in range(n):
            for a in range(q):
                const = (1.0 + rng.uniform(-0.2, 0.2)) if i == a else 0.0
                text = _poly_text(rng, n, scale * (1.0 if i == a else 0.5), constant=const)
                put(i, n + a, text)
        for i in range(n):
            for j in range(i, n):
                put(i, j, _odd_text(rng, n, q, scale * 0.5))
        for a in range(q):
            for b in range(a + 1, q):
                put(n + a, n + b, _odd_text(rng, n, q, scale * 0.3))

    half = DEFAULT_BOX_HALF_WIDTH
    ics = []
    for _ in range(2):
        ics.append(
            {
                "x0": [round(v, 6) for v in rng.uniform(-half * 0.4, half * 0.4, n)],
                "v0": [round(v, 6) for v in rng.uniform(-0.4, 0.4, n)],
                "e0": [round(v, 6) for v in rng.uniform(-0.5, 0.5, q)],
                "w0": [round(v, 6) for v in rng.uniform(-0.5, 0.5, q)],
            }
        )

    checks = [s for s in SUITES if parity == 1 or s != "levi-civita-preservation"]
    data = {
        "chart": {"n": n, "q": q, "box": [[-half] * n, [half] * n]},
        "metric": {"parity": parity, "coefficients": coeffs},
        "initial_conditions": ics,
        "integration": {"dt": 0.001, "t_end": 1.0},
        "checks": checks,
        "seed": int(seed),
    }
    return scenario_from_dict(data)
