"""Input augmentation with fixed and learnable extra features.

A feature is a closed-form scalar function of the raw inputs (and, for
parametric problems, of the parameters) appended to the network input:
``x -> [x, k_1(x), ..., k_Nf(x)]``.  Learnable features additionally
carry named trainable scalars that the trainer updates alongside the
network weights.

Features reference inputs by name (``x0``, ``x1``, ``t``, ``mu1``,
``mu2``); a feature set is immutable and its learnable parameter
variables are created once, so repeated augmentation is stable.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

from . import expr as ex

__all__ = [
    "Feature",
    "FeatureSet",
    "augment",
    "feature_params",
    "preset",
    "from_expression",
    "PRESET_NAMES",
    "EMPTY",
]


@dataclass(frozen=True)
class Feature:
    """One extra input.

    ``build(inputs, params)`` returns the feature expression given a
    name->Expr map of raw inputs and (for learnable features) a
    name->Expr map of this feature's own parameters.
    """
    name: str
    requires: tuple
    build: callable
    param_init: tuple = ()       # ((name, initial value), ...)

    @property
    def learnable(self) -> bool:
        return bool(self.param_init)


class FeatureSet:
    def __init__(self, features=()):
        self.features = tuple(features)
        names = [n for f in self.features for n, _ in f.param_init]
        if len(names) != len(set(names)):
            raise ValueError("learnable parameter names must be unique")
        self._param_vars = []
        for f in self.features:
            for pname, init in f.param_init:
                self._param_vars.append((ex.fresh_var(pname), float(init)))

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)


EMPTY = FeatureSet()


def augment(features: FeatureSet, input_vars):
    """Raw inputs followed by feature expressions.

    ``input_vars`` is an ordered list of named VarIds; the result has
    length ``len(input_vars) + len(features)``.  Unknown input
    references raise KeyError naming the missing input.
    """
    by_name = {}
    nodes = []
    for v in input_vars:
        by_name[v.name] = ex.var(v)
        nodes.append(ex.var(v))
    pvars = iter(features._param_vars)
    for f in features.features:
        missing = [r for r in f.requires if r not in by_name]
        if missing:
            raise KeyError(f"feature {f.name!r} references unknown "
                           f"input(s) {missing}; available: {sorted(by_name)}")
        params = {}
        for pname, _ in f.param_init:
            pv, _init = next(pvars)
            params[pname] = ex.var(pv)
        nodes.append(f.build(by_name, params))
    return nodes


def feature_params(features: FeatureSet):
    """Every learnable parameter with its initial value."""
    return list(features._param_vars)


# ---------------------------------------------------------------------------
# Shipped presets (the forcing terms / initial conditions of the catalog)
# ---------------------------------------------------------------------------

def _poisson_sine(v, p):
    return ex.mul(ex.sin_(ex.scale(math.pi, v["x0"])),
                  ex.sin_(ex.scale(math.pi, v["x1"])))


def _poisson_sine_learnable(v, p):
    # b0*sin(a0*x0 + g0) * b1*sin(a1*x1 + g1)
    s0 = ex.sin_(ex.add(ex.mul(p["a0"], v["x0"]), p["g0"]))
    s1 = ex.sin_(ex.add(ex.mul(p["a1"], v["x1"]), p["g1"]))
    return ex.mul(ex.mul(p["b0"], s0), ex.mul(p["b1"], s1))


def _poisson2_forcing(v, p):
    bump = lambda x: ex.mul(x, ex.sub(1.0, x))
    return ex.scale(-2.0, ex.add(bump(v["x1"]), bump(v["x0"])))


def _burgers_ic(v, p):
    return ex.sin_(ex.scale(math.pi, v["x0"]))


def _ocp_bubble(v, p):
    return ex.mul(ex.sub(1.0, ex.pow_(v["x0"], 2.0)),
                  ex.sub(1.0, ex.pow_(v["x1"], 2.0)))


def _parametric_gaussian(v, p):
    # exp(-2((x0-mu1)^2 + (x1-mu1)^2)); mu1 appears in both terms,
    # exactly as the source problem states it (see README note)
    d0 = ex.sub(v["x0"], v["mu1"])
    d1 = ex.sub(v["x1"], v["mu1"])
    return ex.exp_(ex.scale(-2.0, ex.add(ex.pow_(d0, 2.0),
                                         ex.pow_(d1, 2.0))))


_PRESETS = {
    "poisson_sine": lambda: Feature("poisson_sine", ("x0", "x1"),
                                    _poisson_sine),
    "poisson_sine_learnable": lambda: Feature(
        "poisson_sine_learnable", ("x0", "x1"), _poisson_sine_learnable,
        param_init=(("a0", 1.0), ("a1", 1.0), ("b0", 1.0), ("b1", 1.0),
                    ("g0", 0.0), ("g1", 0.0))),
    "poisson2_forcing": lambda: Feature("poisson2_forcing", ("x0", "x1"),
                                        _poisson2_forcing),
    "burgers_ic": lambda: Feature("burgers_ic", ("x0",), _burgers_ic),
    "ocp_bubble": lambda: Feature("ocp_bubble", ("x0", "x1"), _ocp_bubble),
    "parametric_gaussian": lambda: Feature(
        "parametric_gaussian", ("x0", "x1", "mu1"), _parametric_gaussian),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> FeatureSet:
    """Feature set holding the named preset feature."""
    try:
        return FeatureSet([_PRESETS[name]()])
    except KeyError:
        raise KeyError(f"unknown feature preset {name!r}; "
                       f"available: {list(PRESET_NAMES)}") from None


# ---------------------------------------------------------------------------
# Generic expression features
# ---------------------------------------------------------------------------

_ALLOWED_NAMES = ("x0", "x1", "t", "mu1", "mu2")
_FUNCS = {"sin": ex.sin_, "cos": ex.cos_, "exp": ex.exp_}


def from_expression(text: str) -> FeatureSet:
    """Parse a feature from a string over x0, x1, t, mu1, mu2, pi.

    Supports + - * / ** (constant exponent) and sin/cos/exp.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise ValueError(f"invalid feature expression {text!r}: {e}") from None
    used = set()

    def conv(node):
        if isinstance(node, ast.Expression):
            return conv(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return ex.const(float(node.value))
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return ex.const(math.pi)
            if node.id in _ALLOWED_NAMES:
                used.add(node.id)
                return ("input", node.id)
            raise ValueError(f"unknown name {node.id!r} in feature expression")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = conv(node.operand)
            if isinstance(node.op, ast.UAdd):
                return inner
            if isinstance(inner, ex.Expr) and inner.kind == ex.CONST:
                return ex.const(-inner.fconst)
            return ("neg", inner)
        if isinstance(node, ast.BinOp):
            op = node.op
            lhs, rhs = conv(node.left), conv(node.right)
            if isinstance(op, ast.Pow):
                if not (isinstance(rhs, ex.Expr) and rhs.kind == ex.CONST):
                    raise ValueError("exponent must be a constant")
                return ("pow", lhs, rhs)
            for cls, tag in ((ast.Add, "add"), (ast.Sub, "sub"),
                             (ast.Mult, "mul"), (ast.Div, "div")):
                if isinstance(op, cls):
                    return (tag, lhs, rhs)
            raise ValueError("unsupported operator in feature expression")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            if node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
                raise ValueError(f"unsupported call {ast.dump(node.func)}")
            return (node.func.id, conv(node.args[0]))
        raise ValueError(f"unsupported syntax in feature expression {text!r}")

    tree_ir = conv(tree)
    requires = tuple(sorted(used))

    def build(v, p):
        def emit(ir):
            if isinstance(ir, ex.Expr):
                return ir
            kind = ir[0]
            if kind == "input":
                return v[ir[1]]
            if kind == "neg":
                return ex.neg(emit(ir[1]))
            args = [emit(q) for q in ir[1:]]
            if kind == "add":
                return ex.add(*args)
            if kind == "sub":
                return ex.sub(*args)
            if kind == "mul":
                return ex.mul(*args)
            if kind == "div":
                return ex.div(*args)
            if kind == "pow":
                if args[1].kind != ex.CONST:
                    raise ValueError("exponent must be a constant")
                return ex.pow_(args[0], args[1].fconst)
            return _FUNCS[kind](args[0])
        return emit(tree_ir)

    return FeatureSet([Feature(f"expr:{text}", requires, build)])
