"""Declarative experiment plans (JSON)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ValidationError
from .kernels import KernelKind, XiDistribution
from .offdiag import DiagonalRule, QuadratureConfig
from .testfunctions import (
    DEFAULT_CELL_BUDGET,
    MAX_ARITY,
    NamedClosedForm,
    NamedForm,
    StepRectangles,
    TensorProduct,
    Term,
    TestFunction,
    grid_from_csv,
    symmetrize,
    zero,
)

TESTS = ("bounds", "fdd", "vector", "tightness", "covariance")
DEFAULT_EPSILONS = (0.5, 0.3, 0.2, 0.1)
DEFAULT_COVARIANCE_PAIRS = (
    (0.1, 0.1),
    (0.1, 0.12),
    (0.1, 0.15),
    (0.1, 0.2),
    (0.3, 0.32),
    (0.3, 0.4),
    (0.5, 0.52),
    (0.5, 0.55),
    (0.7, 0.75),
    (0.2, 0.8),
)


@dataclass
class ExperimentPlan:
    kernel: str = "donsker"
    xi: str = "rademacher"
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    n: int = 2
    T: float = 1.0
    times: list | None = None
    time_pairs: list | None = None
    f: object = "one"
    fs: list = field(default_factory=list)
    tests: list = field(default_factory=lambda: ["bounds"])
    count: int = 5000
    grid_m: int = 64
    seed: int = 0
    cell_budget: int = DEFAULT_CELL_BUDGET
    diagonal_rule: str | None = None
    covariance_pairs: list = field(default_factory=lambda: [list(p) for p in DEFAULT_COVARIANCE_PAIRS])
    out: str = "report.json"
    samples_out: str = "samples.csv"
    base_dir: str = field(default=".", repr=False, compare=False)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "base_dir"}

    @property
    def kernel_kind(self) -> KernelKind:
        return KernelKind(self.kernel)

    @property
    def xi_law(self) -> XiDistribution:
        return XiDistribution(self.xi)

    def quadrature(self) -> QuadratureConfig:
        rule = None if self.diagonal_rule is None else DiagonalRule(self.diagonal_rule)
        return QuadratureConfig(grid_m=self.grid_m, diagonal_rule=rule, cell_budget=self.cell_budget)

    def function(self) -> TestFunction:
        return build_function(self.f, self.n, self.T, self.base_dir, "f")

    def functions(self) -> list[TestFunction]:
        if not self.fs:
            return [self.function()]
        return [build_function(d, self.n, self.T, self.base_dir, f"fs[{i}]") for i, d in enumerate(self.fs)]


def build_function(desc, n: int, T: float, base_dir=".", where="f") -> TestFunction:
    """Integrand from a plan descriptor.

    Accepted forms: a named form string (``"one"``, ``"sum_coords"``,
    ``"product_coords"``, ``"exp_neg_sum"``, ``"zero"``), or an object with
    one of ``named``, ``steps``, ``grid`` (CSV path), ``tensor``, plus an
    optional ``symmetrize`` flag.
    """
    if isinstance(desc, str):
        desc = {"named": desc}
    if not isinstance(desc, dict):
        raise ValidationError(f"{where}: expected a string or an object", where)
    desc = dict(desc)
    sym = desc.pop("symmetrize", False)
    if len(desc) != 1:
        raise ValidationError(f"{where}: need exactly one of named/steps/grid/tensor", where)
    (key, value), = desc.items()
    try:
        if key == "named":
            if value == "zero":
                f = zero(n, T)
            else:
                f = NamedClosedForm(n, T, NamedForm(value))
        elif key == "steps":
            terms = [Term(float(t["alpha"]), tuple(tuple(ab) for ab in t["rect"])) for t in value]
            f = StepRectangles(n, T, tuple(terms))
        elif key == "tensor":
            f = TensorProduct(n, T, tuple(value))
        elif key == "grid":
            path = Path(value)
            if not path.is_absolute():
                path = Path(base_dir) / path
            if not path.is_file():
                raise ValidationError(f"{where}: grid file not found: {path}", where)
            f = grid_from_csv(path)
            if f.n != n or f.T != T:
                raise ValidationError(f"{where}: grid file {path} has n={f.n}, T={f.T}", where)
        else:
            raise ValidationError(f"{where}: unknown function form '{key}'", where)
    except ValidationError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"{where}: {exc}", where) from None
    return symmetrize(f) if sym else f


def _type_check(name, value, kinds):
    if isinstance(value, bool) and bool not in kinds:
        raise ValidationError(f"field '{name}' has the wrong type", name)
    if not isinstance(value, kinds):
        raise ValidationError(f"field '{name}' has the wrong type", name)


def _number_list(name, value, allow_none=False):
    if value is None and allow_none:
        return None
    _type_check(name, value, (list, tuple))
    for v in value:
        _type_check(name, v, (int, float))
    return [float(v) for v in value]


def plan_from_dict(data: dict, base_dir=".") -> ExperimentPlan:
    if not isinstance(data, dict):
        raise ValidationError("plan must be a JSON object")
    known = {f.name for f in fields(ExperimentPlan)} - {"base_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown plan field '{unknown[0]}'", unknown[0])
    d = dict(data)
    plan = ExperimentPlan(base_dir=str(base_dir))

    for name, kinds in (("kernel", str), ("xi", str), ("out", str), ("samples_out", str)):
        if name in d:
            _type_check(name, d[name], kinds)
            setattr(plan, name, d[name])
    for name in ("n", "count", "grid_m", "seed", "cell_budget"):
        if name in d:
            _type_check(name, d[name], (int,))
            setattr(plan, name, int(d[name]))
    if "T" in d:
        _type_check("T", d["T"], (int, float))
        plan.T = float(d["T"])
    if "diagonal_rule" in d:
        if d["diagonal_rule"] is not None:
            _type_check("diagonal_rule", d["diagonal_rule"], (str,))
        plan.diagonal_rule = d["diagonal_rule"]
    if "epsilons" in d:
        plan.epsilons = _number_list("epsilons", d["epsilons"])
    if "times" in d:
        plan.times = _number_list("times", d["times"], allow_none=True)
    for name in ("time_pairs", "covariance_pairs"):
        if name in d and d[name] is not None:
            _type_check(name, d[name], (list, tuple))
            pairs = [_number_list(name, p) for p in d[name]]
            if any(len(p) != 2 for p in pairs):
                raise ValidationError(f"field '{name}' needs pairs of numbers", name)
            setattr(plan, name, pairs)
    if "tests" in d:
        _type_check("tests", d["tests"], (list, tuple))
        for t in d["tests"]:
            if t not in TESTS:
                raise ValidationError(f"unknown test '{t}' (choose from {', '.join(TESTS)})", "tests")
        plan.tests = list(d["tests"])
    if "f" in d:
        plan.f = d["f"]
    if "fs" in d:
        _type_check("fs", d["fs"], (list, tuple))
        plan.fs = list(d["fs"])

    _validate(plan)
    return plan


def _validate(plan: ExperimentPlan) -> None:
    try:
        KernelKind(plan.kernel)
    except ValueError:
        raise ValidationError(f"unknown kernel '{plan.kernel}'", "kernel") from None
    try:
        XiDistribution(plan.xi)
    except ValueError:
        raise ValidationError(f"unknown xi law '{plan.xi}'", "xi") from None
    if plan.diagonal_rule is not None:
        try:
            DiagonalRule(plan.diagonal_rule)
        except ValueError:
            raise ValidationError(f"unknown diagonal rule '{plan.diagonal_rule}'", "diagonal_rule") from None
    if not (1 <= plan.n <= MAX_ARITY):
        raise ValidationError(f"n must be in 1..{MAX_ARITY}", "n")
    if not (plan.T > 0 and math.isfinite(plan.T)):
        raise ValidationError("T must be positive", "T")
    eps = plan.epsilons
    if not eps:
        raise ValidationError("epsilons must be non-empty", "epsilons")
    if any(not (0.0 < e < 1.0) for e in eps):
        raise ValidationError("every epsilon must lie in (0, 1)", "epsilons")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValidationError("epsilons must be strictly decreasing", "epsilons")
    if plan.times is None:
        plan.times = [plan.T]
    if not plan.times or any(not (0.0 <= t <= plan.T) for t in plan.times):
        raise ValidationError(f"times must be non-empty and lie in [0, {plan.T}]", "times")
    if plan.time_pairs is None:
        plan.time_pairs = [[0.0, plan.T / 2], [plan.T / 4, 3 * plan.T / 4], [plan.T / 2, plan.T]]
    for s, t in plan.time_pairs:
        if not (0.0 <= s <= plan.T and 0.0 <= t <= plan.T):
            raise ValidationError("time_pairs must lie in [0, T]", "time_pairs")
    for x, y in plan.covariance_pairs:
        if not (0.0 <= x <= plan.T and 0.0 <= y <= plan.T):
            raise ValidationError("covariance_pairs must lie in [0, T]", "covariance_pairs")
    if plan.count < 2:
        raise ValidationError("count must be at least 2", "count")
    if plan.grid_m < 1:
        raise ValidationError("grid_m must be at least 1", "grid_m")
    if plan.cell_budget < 1:
        raise ValidationError("cell_budget must be positive", "cell_budget")
    if plan.seed < 0 or plan.seed >= 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer", "seed")
    # resolving the integrands checks descriptors and grid files
    plan.function()
    plan.functions()


def parse_plan(path) -> ExperimentPlan:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read plan {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    return plan_from_dict(data, base_dir=path.parent)
