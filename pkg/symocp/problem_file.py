"""Problem files.

A problem file is a YAML/JSON mapping::

    name: integrator                # optional
    n: 1                            # state dimension
    m: 1                            # control dimension
    dynamics: ["u1"]                # n polynomial strings in x1..xn, u1..um
    running_cost: "1"               # polynomial string in t, x, u
    terminal_cost: "0"              # polynomial string in x
    state_ineqs: ["1 - x1^2"]       # p(x) >= 0
    control_ineqs: ["1 - u1^2"]     # p(u) >= 0
    terminal_ineqs: []              # p(x) >= 0
    state_eqs: []                   # optional, p(x) = 0 (expanded into +-p >= 0)
    control_eqs: []                 # optional
    terminal_eqs: ["x1^2 - 1"]      # optional
    x0: [0]
    horizon: {type: free, tmax: 2}  # or "fixed" / {type: fixed}
    generators:                     # optional, sign-symmetry generators
      - {dx: [-1], du: [-1]}

JSON documents are valid YAML, so both spellings load with the same reader.
"""

from pathlib import Path
from typing import Any, Dict, List, Union

import yaml

from .ocp import FixedUnit, FreeTime, OCProblem, SemialgebraicSet, SetLabel
from .parsing import parse_polynomial
from .poly import GroupElement, Polynomial, SignGroup, VarLayout


class ProblemFileError(ValueError):
    """Raised when a problem file is malformed."""


def _require(data: Dict[str, Any], key: str) -> Any:
    if key not in data:
        raise ProblemFileError(f"missing required field {key!r}")
    return data[key]


def _poly_list(data: Dict[str, Any], key: str, layout: VarLayout) -> List[Polynomial]:
    items = data.get(key) or []
    if not isinstance(items, list):
        raise ProblemFileError(f"field {key!r} must be a list of polynomial strings")
    return [parse_polynomial(str(item), layout) for item in items]


def _horizon(spec: Any) -> Union[FixedUnit, FreeTime]:
    if spec is None or spec == "fixed":
        return FixedUnit()
    if spec == "free":
        raise ProblemFileError("free horizon needs a tmax, e.g. {type: free, tmax: 2}")
    if isinstance(spec, dict):
        kind = spec.get("type", "fixed")
        if kind == "fixed":
            return FixedUnit()
        if kind == "free":
            if "tmax" not in spec:
                raise ProblemFileError("free horizon needs a tmax")
            return FreeTime(float(spec["tmax"]))
        raise ProblemFileError(f"unknown horizon type {kind!r}")
    raise ProblemFileError(f"cannot read horizon {spec!r}")


def problem_from_dict(data: Dict[str, Any]) -> OCProblem:
    """Build an OCProblem from a parsed problem document."""
    if not isinstance(data, dict):
        raise ProblemFileError("a problem file must contain a mapping")
    n = int(_require(data, "n"))
    m = int(_require(data, "m"))
    layout = VarLayout(n, m)

    dynamics = _poly_list(data, "dynamics", layout)
    if len(dynamics) != n:
        raise ProblemFileError(f"expected {n} dynamics components, got {len(dynamics)}")
    x0 = _require(data, "x0")
    if not isinstance(x0, list) or len(x0) != n:
        raise ProblemFileError(f"x0 must be a list of {n} numbers")

    generators = []
    for item in data.get("generators") or []:
        try:
            generators.append(GroupElement(tuple(item["dx"]), tuple(item.get("du", [1] * m))))
        except (KeyError, TypeError) as e:
            raise ProblemFileError(f"malformed generator {item!r}") from e
    group = SignGroup(generators, n, m)

    try:
        return OCProblem(
            n=n,
            m=m,
            f=tuple(dynamics),
            h=parse_polynomial(str(data.get("running_cost", "0")), layout),
            H=parse_polynomial(str(data.get("terminal_cost", "0")), layout),
            X=SemialgebraicSet.from_constraints(
                SetLabel.STATE, _poly_list(data, "state_ineqs", layout),
                _poly_list(data, "state_eqs", layout)),
            U=SemialgebraicSet.from_constraints(
                SetLabel.CONTROL, _poly_list(data, "control_ineqs", layout),
                _poly_list(data, "control_eqs", layout)),
            K=SemialgebraicSet.from_constraints(
                SetLabel.TERMINAL, _poly_list(data, "terminal_ineqs", layout),
                _poly_list(data, "terminal_eqs", layout)),
            x0=tuple(float(v) for v in x0),
            horizon=_horizon(data.get("horizon")),
            group=group,
            name=str(data.get("name", "problem")),
        )
    except ProblemFileError:
        raise
    except ValueError as e:
        raise ProblemFileError(str(e)) from e


def load_problem(path: Union[str, Path]) -> OCProblem:
    """Read a problem file (YAML or JSON)."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except (yaml.YAMLError, IOError) as e:
        raise ProblemFileError(f"could not read problem file {path}: {e}") from e
    data = data or {}
    if isinstance(data, dict):
        data.setdefault("name", path.stem)
    return problem_from_dict(data)


def problem_to_dict(prob: OCProblem) -> Dict[str, Any]:
    """Inverse of problem_from_dict for problems whose x0 is fully prescribed."""
    if prob.free_initial:
        raise ProblemFileError("problems with free initial coordinates cannot be written")
    horizon: Any = (
        "fixed" if isinstance(prob.horizon, FixedUnit)
        else {"type": "free", "tmax": prob.horizon.tmax}
    )
    return {
        "name": prob.name,
        "n": prob.n,
        "m": prob.m,
        "dynamics": [fi.to_string() for fi in prob.f],
        "running_cost": prob.h.to_string(),
        "terminal_cost": prob.H.to_string(),
        "state_ineqs": [p.to_string() for p in prob.X.inequalities],
        "control_ineqs": [p.to_string() for p in prob.U.inequalities],
        "terminal_ineqs": [p.to_string() for p in prob.K.inequalities],
        "x0": list(prob.x0),
        "horizon": horizon,
        "generators": [{"dx": list(g.dx), "du": list(g.du)} for g in prob.group.generators],
    }
