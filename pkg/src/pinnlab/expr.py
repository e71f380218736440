"""Scalar expression graphs with symbolic differentiation.

Every residual, boundary mismatch and loss term in this package is built
from these nodes.  Graphs are immutable and hash-consed: structurally
identical subexpressions are the same object, so repeated differentiation
shares work instead of exploding.  ``derive`` returns a new graph, which
makes nesting to any order uniform (second spatial derivatives of a
network output, then gradients of the resulting loss).

Node kinds: constant, variable, weighted sum (affine combination),
binary product, power with constant exponent, and the unary functions
exp, log, sin, cos, tanh, softplus, sigmoid.  This set is closed under
differentiation.  All arithmetic is float64.
"""

from __future__ import annotations

import math
import weakref

__all__ = [
    "VarId",
    "Expr",
    "MissingBindingError",
    "fresh_var",
    "const",
    "var",
    "add",
    "sub",
    "neg",
    "scale",
    "sum_of",
    "mul",
    "div",
    "pow_",
    "exp_",
    "log_",
    "sin_",
    "cos_",
    "tanh_",
    "softplus",
    "sigmoid",
    "derive",
    "evaluate",
    "gradient",
    "fd_check",
    "topo_order",
]

# Node kind tags.
CONST = 0
VAR = 1
SUM = 2
PROD = 3
POW = 4
EXP = 5
LOG = 6
SIN = 7
COS = 8
TANH = 9
SOFTPLUS = 10
SIGMOID = 11

UNARY_KINDS = (EXP, LOG, SIN, COS, TANH, SOFTPLUS, SIGMOID)
_UNARY_NAMES = {EXP: "exp", LOG: "log", SIN: "sin", COS: "cos",
                TANH: "tanh", SOFTPLUS: "softplus", SIGMOID: "sigmoid"}


class MissingBindingError(KeyError):
    """Raised when evaluation reaches a variable with no bound value."""

    def __init__(self, var_id):
        super().__init__(str(var_id))
        self.var_id = var_id

    def __str__(self):
        return f"missing binding for variable {self.var_id}"


class VarId:
    """Opaque identifier of one input or parameter variable."""

    __slots__ = ("name", "uid", "__weakref__")
    _counter = 0

    def __init__(self, name: str, uid: int):
        self.name = name
        self.uid = uid

    def __repr__(self):
        return f"{self.name}#{self.uid}"

    def __hash__(self):
        return self.uid

    def __eq__(self, other):
        return self is other


def fresh_var(name: str) -> VarId:
    """Create a new unique variable identifier."""
    VarId._counter += 1
    return VarId(name, VarId._counter)


class Expr:
    """One node of an immutable expression graph.

    Do not call the constructor directly; use the module factory
    functions, which intern nodes and fold constants.
    """

    __slots__ = ("kind", "children", "coefs", "fconst", "var", "uid",
                 "__weakref__")
    _counter = 0

    def __init__(self, kind, children, coefs, fconst, var_id):
        self.kind = kind
        self.children = children      # tuple of Expr
        self.coefs = coefs            # tuple of float (SUM only)
        self.fconst = fconst          # float payload (const value, exponent, sum offset)
        self.var = var_id             # VarId (VAR only)
        Expr._counter += 1
        self.uid = Expr._counter

    def __repr__(self):
        return f"<Expr {_describe(self)} uid={self.uid}>"

    # Operator sugar so residuals read naturally.
    def __add__(self, other):
        return add(self, _as_expr(other))

    def __radd__(self, other):
        return add(_as_expr(other), self)

    def __sub__(self, other):
        return sub(self, _as_expr(other))

    def __rsub__(self, other):
        return sub(_as_expr(other), self)

    def __mul__(self, other):
        return mul(self, _as_expr(other))

    def __rmul__(self, other):
        return mul(_as_expr(other), self)

    def __truediv__(self, other):
        return div(self, _as_expr(other))

    def __rtruediv__(self, other):
        return div(_as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_(self, p)


def _describe(e: Expr) -> str:
    if e.kind == CONST:
        return f"const {e.fconst}"
    if e.kind == VAR:
        return f"var {e.var}"
    if e.kind == SUM:
        return f"sum[{len(e.children)}]"
    if e.kind == PROD:
        return "prod"
    if e.kind == POW:
        return f"pow {e.fconst}"
    return _UNARY_NAMES[e.kind]


def _as_expr(x):
    if isinstance(x, Expr):
        return x
    return const(float(x))


# Hash-consing table: structurally identical nodes are one object.
_intern: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _node(kind, children=(), coefs=(), fconst=0.0, var_id=None):
    key = (kind,
           tuple(c.uid for c in children),
           coefs,
           fconst,
           var_id.uid if var_id is not None else -1)
    node = _intern.get(key)
    if node is None:
        node = Expr(kind, children, coefs, fconst, var_id)
        _intern[key] = node
    return node


def const(value: float) -> Expr:
    return _node(CONST, fconst=float(value))


ZERO = const(0.0)
ONE = const(1.0)
# Keep the shared constants alive in the weak table.
_pinned = (ZERO, ONE)


def var(var_id: VarId) -> Expr:
    return _node(VAR, var_id=var_id)


def sum_of(terms, coefs=None, offset: float = 0.0) -> Expr:
    """Affine combination ``offset + sum(coef_i * term_i)``.

    Constant terms fold into the offset and zero coefficients are
    dropped; a bare single term with coefficient 1 collapses to the term
    itself.  Folding never changes the mathematical value.
    """
    terms = list(terms)
    if coefs is None:
        coefs = [1.0] * len(terms)
    else:
        coefs = [float(c) for c in coefs]
    if len(terms) != len(coefs):
        raise ValueError("terms and coefs must have equal length")
    offset = float(offset)
    kept_t, kept_c = [], []
    for t, c in zip(terms, coefs):
        if c == 0.0:
            continue
        if t.kind == CONST:
            offset += c * t.fconst
        else:
            kept_t.append(t)
            kept_c.append(c)
    # exact cancellation: drop a node whose coefficients sum to zero
    # (e.g. t - t), which is how hardwired relations zero out their
    # redundant residual
    totals = {}
    for t, c in zip(kept_t, kept_c):
        totals[t.uid] = totals.get(t.uid, 0.0) + c
    if any(v == 0.0 for v in totals.values()):
        pairs = [(t, c) for t, c in zip(kept_t, kept_c)
                 if totals[t.uid] != 0.0]
        kept_t = [t for t, _ in pairs]
        kept_c = [c for _, c in pairs]
    if not kept_t:
        return const(offset)
    if len(kept_t) == 1 and kept_c[0] == 1.0 and offset == 0.0:
        return kept_t[0]
    return _node(SUM, tuple(kept_t), tuple(kept_c), offset)


def add(*exprs) -> Expr:
    return sum_of([_as_expr(e) for e in exprs])


def sub(a, b) -> Expr:
    return sum_of([_as_expr(a), _as_expr(b)], [1.0, -1.0])


def neg(a) -> Expr:
    return sum_of([_as_expr(a)], [-1.0])


def scale(c: float, a) -> Expr:
    return sum_of([_as_expr(a)], [float(c)])


def mul(a, b) -> Expr:
    a, b = _as_expr(a), _as_expr(b)
    if a.kind == CONST and b.kind == CONST:
        return const(a.fconst * b.fconst)
    if a.kind == CONST:
        return scale(a.fconst, b)
    if b.kind == CONST:
        return scale(b.fconst, a)
    return _node(PROD, (a, b))


def div(a, b) -> Expr:
    a, b = _as_expr(a), _as_expr(b)
    if b.kind == CONST:
        return scale(1.0 / b.fconst, a)
    return mul(a, pow_(b, -1.0))


def pow_(a, p: float) -> Expr:
    a = _as_expr(a)
    p = float(p)
    if p == 0.0:
        return ONE
    if p == 1.0:
        return a
    if a.kind == CONST:
        return const(a.fconst ** p)
    return _node(POW, (a,), fconst=p)


def _softplus_val(x: float) -> float:
    # Stable for large |x|: max(x, 0) + log1p(exp(-|x|)).
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _sigmoid_val(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


_UNARY_FN = {
    EXP: math.exp,
    LOG: math.log,
    SIN: math.sin,
    COS: math.cos,
    TANH: math.tanh,
    SOFTPLUS: _softplus_val,
    SIGMOID: _sigmoid_val,
}


def _unary(kind, a) -> Expr:
    a = _as_expr(a)
    if a.kind == CONST:
        return const(_UNARY_FN[kind](a.fconst))
    return _node(kind, (a,))


def exp_(a) -> Expr:
    return _unary(EXP, a)


def log_(a) -> Expr:
    return _unary(LOG, a)


def sin_(a) -> Expr:
    return _unary(SIN, a)


def cos_(a) -> Expr:
    return _unary(COS, a)


def tanh_(a) -> Expr:
    return _unary(TANH, a)


def softplus(a) -> Expr:
    return _unary(SOFTPLUS, a)


def sigmoid(a) -> Expr:
    return _unary(SIGMOID, a)


def topo_order(roots) -> list:
    """All nodes reachable from ``roots``, children before parents."""
    order = []
    seen = set()
    stack = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for child in reversed(node.children):
            if child.uid not in seen:
                stack.append((child, False))
    return order


# ---------------------------------------------------------------------------
# Symbolic differentiation
# ---------------------------------------------------------------------------

# Memo shared across calls: derivatives of a hash-consed node are reusable.
_deriv_memo: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def derive(expr: Expr, wrt: VarId) -> Expr:
    """Differentiate ``expr`` with respect to one variable.

    Returns a new graph; differentiating an expression that never
    mentions ``wrt`` yields the zero constant.  The result is itself
    differentiable, so second and third derivatives are just repeated
    calls.
    """
    order = topo_order([expr])
    memo = {}
    for node in order:
        key = (node.uid, wrt.uid)
        cached = _deriv_memo.get(key)
        if cached is not None:
            memo[node.uid] = cached
            continue
        d = _derive_node(node, wrt, memo)
        memo[node.uid] = d
        _deriv_memo[key] = d
    return memo[expr.uid]


def _derive_node(node: Expr, wrt: VarId, memo) -> Expr:
    kind = node.kind
    if kind == CONST:
        return ZERO
    if kind == VAR:
        return ONE if node.var is wrt else ZERO
    ch = [memo[c.uid] for c in node.children]
    if kind == SUM:
        return sum_of(ch, node.coefs)
    if kind == PROD:
        a, b = node.children
        return add(mul(ch[0], b), mul(a, ch[1]))
    da = ch[0]
    a = node.children[0]
    if kind == POW:
        p = node.fconst
        return scale(p, mul(pow_(a, p - 1.0), da))
    if kind == EXP:
        return mul(node, da)
    if kind == LOG:
        return mul(pow_(a, -1.0), da)
    if kind == SIN:
        return mul(cos_(a), da)
    if kind == COS:
        return scale(-1.0, mul(sin_(a), da))
    if kind == TANH:
        return mul(sub(ONE, pow_(node, 2.0)), da)
    if kind == SOFTPLUS:
        return mul(sigmoid(a), da)
    if kind == SIGMOID:
        return mul(mul(node, sub(ONE, node)), da)
    raise AssertionError(f"unhandled node kind {kind}")


# ---------------------------------------------------------------------------
# Numeric evaluation on scalars
# ---------------------------------------------------------------------------

def _values(order, bindings) -> dict:
    vals = {}
    for node in order:
        kind = node.kind
        if kind == CONST:
            v = node.fconst
        elif kind == VAR:
            try:
                v = float(bindings[node.var])
            except KeyError:
                raise MissingBindingError(node.var) from None
        elif kind == SUM:
            v = node.fconst
            for c, child in zip(node.coefs, node.children):
                v += c * vals[child.uid]
        elif kind == PROD:
            v = vals[node.children[0].uid] * vals[node.children[1].uid]
        elif kind == POW:
            v = vals[node.children[0].uid] ** node.fconst
        else:
            v = _UNARY_FN[kind](vals[node.children[0].uid])
        vals[node.uid] = v
    return vals


def evaluate(expr: Expr, bindings) -> float:
    """Evaluate the graph with the given variable bindings."""
    order = topo_order([expr])
    return _values(order, bindings)[expr.uid]


def gradient(expr: Expr, wrt, bindings) -> list:
    """All first partials of ``expr`` in one reverse sweep.

    Agrees with ``evaluate(derive(expr, v), bindings)`` for each ``v``;
    variables absent from the graph get gradient zero.
    """
    order = topo_order([expr])
    vals = _values(order, bindings)
    adj = {expr.uid: 1.0}
    for node in reversed(order):
        a_out = adj.get(node.uid, 0.0)
        if a_out == 0.0:
            continue
        kind = node.kind
        if kind in (CONST, VAR):
            continue
        if kind == SUM:
            for c, child in zip(node.coefs, node.children):
                adj[child.uid] = adj.get(child.uid, 0.0) + c * a_out
            continue
        if kind == PROD:
            a, b = node.children
            adj[a.uid] = adj.get(a.uid, 0.0) + vals[b.uid] * a_out
            adj[b.uid] = adj.get(b.uid, 0.0) + vals[a.uid] * a_out
            continue
        child = node.children[0]
        x = vals[child.uid]
        if kind == POW:
            g = node.fconst * x ** (node.fconst - 1.0)
        elif kind == EXP:
            g = vals[node.uid]
        elif kind == LOG:
            g = 1.0 / x
        elif kind == SIN:
            g = math.cos(x)
        elif kind == COS:
            g = -math.sin(x)
        elif kind == TANH:
            t = vals[node.uid]
            g = 1.0 - t * t
        elif kind == SOFTPLUS:
            g = _sigmoid_val(x)
        elif kind == SIGMOID:
            s = vals[node.uid]
            g = s * (1.0 - s)
        else:
            raise AssertionError(f"unhandled node kind {kind}")
        adj[child.uid] = adj.get(child.uid, 0.0) + g * a_out
    # Variables can occur at several VAR nodes only if created twice with
    # the same VarId; hash-consing makes them one node, so a dict lookup
    # per requested id suffices.
    by_var = {}
    for node in order:
        if node.kind == VAR:
            by_var[node.var] = adj.get(node.uid, 0.0)
    return [by_var.get(v, 0.0) for v in wrt]


def fd_check(expr: Expr, bindings, step: float) -> float:
    """Max |central difference - autodiff| over all bound variables.

    Verification helper: compares ``gradient`` against a second-order
    central finite difference with the given step.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    variables = [node.var for node in topo_order([expr]) if node.kind == VAR]
    if not variables:
        return 0.0
    grads = gradient(expr, variables, bindings)
    worst = 0.0
    work = dict(bindings)
    for v, g in zip(variables, grads):
        x0 = float(bindings[v])
        work[v] = x0 + step
        fp = evaluate(expr, work)
        work[v] = x0 - step
        fm = evaluate(expr, work)
        work[v] = x0
        worst = max(worst, abs((fp - fm) / (2.0 * step) - g))
    return worst
