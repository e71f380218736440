"""Problem catalog: residual operators, boundary conditions, exact
solutions, parameter boxes, and per-problem default hyperparameters.

Each problem states its unknown fields and builds residual expressions
from model output graphs, taking spatial/temporal derivatives
symbolically.  Sign conventions follow the source problems verbatim:
``poisson1``/``poisson2`` use ``lap(w) = f`` while ``poisson_param``
uses ``-lap(w) = f``.  The Burgers initial condition enters as one more
boundary facet (t = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import features as ft
from . import sampling as sp

__all__ = [
    "Ctx",
    "BoundaryCondition",
    "Relation",
    "Problem",
    "catalog",
    "get",
    "names",
    "residual_exprs",
    "exact_solution",
    "cost_functional",
]

STOKES_VISCOSITY = 0.1
STOKES_ALPHA = 0.008
BURGERS_NU = 0.01 / math.pi


class Ctx:
    """Named access to input variables plus derivative helpers."""

    def __init__(self, var_ids, spatial_names):
        self.ids = dict(var_ids)
        self.spatial_names = tuple(spatial_names)

    def __getitem__(self, name) -> ex.Expr:
        return ex.var(self.ids[name])

    def d(self, e: ex.Expr, name: str) -> ex.Expr:
        return ex.derive(e, self.ids[name])

    def d2(self, e: ex.Expr, name: str) -> ex.Expr:
        return self.d(self.d(e, name), name)

    def lap(self, e: ex.Expr) -> ex.Expr:
        return ex.add(*[self.d2(e, n) for n in self.spatial_names])


@dataclass(frozen=True)
class BoundaryCondition:
    """Mismatch components on a set of facets.

    ``build(fields, ctx)`` returns the expressions whose squares enter
    the boundary loss: field minus prescribed value for Dirichlet rows,
    the traction expression for Neumann rows.
    """
    name: str
    facets: tuple
    build: callable


@dataclass(frozen=True)
class Relation:
    """Closed-form coupling producing later-stage fields from earlier
    ones (the optimality relation hardwired by the composed
    architecture)."""
    inputs: tuple       # field names consumed
    outputs: tuple      # field names produced
    build: callable     # (fields: name->Expr, ctx) -> dict name->Expr
    raw_inputs: tuple = ()   # raw input names the relation reads


@dataclass(frozen=True)
class Problem:
    name: str
    fields: tuple
    input_names: tuple          # raw inputs in order: spatial(+time), then mu
    domain: sp.Box              # spatial (+ time) axes
    param_box: sp.Box | None
    build_residuals: callable   # (fields, ctx) -> list[Expr]
    bcs: tuple
    exact_fn: callable | None   # (X spatial (n,d), mu) -> (n, n_fields)
    exact_exprs: callable | None  # (ctx) -> list[Expr]
    feature_preset: str | None
    defaults: dict
    relation: Relation | None = None
    base_fields: tuple | None = None   # 1-out fields of the composed form
    cost: dict | None = None

    @property
    def n_mu(self):
        return self.param_box.dim if self.param_box is not None else 0

    @property
    def spatial_names(self):
        return tuple(a.name for a in self.domain.axes if a.kind != sp.PARAM)

    def make_input_vars(self):
        return [ex.fresh_var(n) for n in self.input_names]

    def make_features(self) -> ft.FeatureSet:
        if self.feature_preset is None:
            return ft.EMPTY
        return ft.preset(self.feature_preset)

    def ctx_for(self, input_vars) -> Ctx:
        if len(input_vars) != len(self.input_names):
            raise ValueError(f"{self.name}: expected inputs "
                             f"{self.input_names}, got {len(input_vars)}")
        return Ctx(dict(zip(self.input_names, input_vars)),
                   self.spatial_names)


def residual_exprs(problem: Problem, outputs, input_vars, mu_vars=()):
    """Residual graphs r_j for model output expressions.

    ``outputs`` must match the problem's field count; derivatives are
    taken symbolically with respect to the given input variables.
    """
    if len(outputs) != len(problem.fields):
        raise ValueError(f"{problem.name}: expected {len(problem.fields)} "
                         f"outputs, got {len(outputs)}")
    ctx = problem.ctx_for(list(input_vars) + list(mu_vars))
    fields = dict(zip(problem.fields, outputs))
    return problem.build_residuals(fields, ctx)


def exact_solution(problem: Problem, x, mu=None):
    """Closed-form solution at one point, or None if absent."""
    if problem.exact_fn is None:
        return None
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = problem.exact_fn(X, mu)
    return out[0] if np.ndim(x) == 1 else out


def cost_functional(problem: Problem, predict, mu, n=64):
    """Tracking-plus-penalty cost evaluated by midpoint quadrature.

    ``predict`` maps an (n, d+D) input batch to field columns.  This is
    a diagnostic only; training targets the optimality system.
    """
    if problem.cost is None:
        raise ValueError(f"{problem.name} declares no cost functional")
    grid = sp.interior_grid(problem.domain, n)
    X = grid.points
    if problem.n_mu:
        mu_arr = np.broadcast_to(np.asarray(mu, dtype=float),
                                 (X.shape[0], problem.n_mu))
        X = np.concatenate([X, mu_arr], axis=1)
    Y = predict(X)
    vol = float(np.prod(problem.domain.highs - problem.domain.lows))
    cost = problem.cost
    track = 0.0
    for fname, target in cost["track"]:
        idx = problem.fields.index(fname)
        tgt = target(grid.points, mu)
        track += float(np.mean((Y[:, idx] - tgt) ** 2)) * vol
    pen = 0.0
    for fname in cost["penalty"]:
        idx = problem.fields.index(fname)
        pen += float(np.mean(Y[:, idx] ** 2)) * vol
    alpha = cost["alpha"](mu)
    return 0.5 * track + 0.5 * alpha * pen


# ---------------------------------------------------------------------------
# Poisson problems on the unit square
# ---------------------------------------------------------------------------

def _poisson1_residuals(fields, ctx):
    w = fields["w"]
    f = ex.mul(ex.sin_(ex.scale(math.pi, ctx["x0"])),
               ex.sin_(ex.scale(math.pi, ctx["x1"])))
    return [ex.sub(ctx.lap(w), f)]


def _poisson1_exact(X, mu):
    vals = -np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]) / (2 * np.pi ** 2)
    return vals[:, None]


def _poisson1_exact_exprs(ctx):
    s = ex.mul(ex.sin_(ex.scale(math.pi, ctx["x0"])),
               ex.sin_(ex.scale(math.pi, ctx["x1"])))
    return [ex.scale(-1.0 / (2.0 * math.pi ** 2), s)]


def _poisson2_residuals(fields, ctx):
    w = fields["w"]
    bump = lambda v: ex.mul(v, ex.sub(1.0, v))
    f = ex.scale(-2.0, ex.add(bump(ctx["x1"]), bump(ctx["x0"])))
    return [ex.sub(ctx.lap(w), f)]


def _poisson2_exact(X, mu):
    x0, x1 = X[:, 0], X[:, 1]
    return (x0 * (1 - x0) * x1 * (1 - x1))[:, None]


def _poisson2_exact_exprs(ctx):
    bump = lambda v: ex.mul(v, ex.sub(1.0, v))
    return [ex.mul(bump(ctx["x0"]), bump(ctx["x1"]))]


def _zero_dirichlet(field_names):
    def build(fields, ctx):
        return [fields[f] for f in field_names]
    return build


# ---------------------------------------------------------------------------
# Burgers on [-1, 1] x [0, 1]
# ---------------------------------------------------------------------------

def _burgers_residuals(fields, ctx):
    w = fields["w"]
    return [ex.add(ctx.d(w, "t"),
                   ex.mul(w, ctx.d(w, "x0")),
                   ex.scale(-BURGERS_NU, ctx.d2(w, "x0")))]


def _burgers_ic(fields, ctx):
    # w(x, 0) = -sin(pi x): mismatch is w + sin(pi x)
    return [ex.add(fields["w"], ex.sin_(ex.scale(math.pi, ctx["x0"])))]


# ---------------------------------------------------------------------------
# Parametric Poisson on [-1, 1]^2
# ---------------------------------------------------------------------------

def _poisson_param_residuals(fields, ctx):
    w = fields["w"]
    d0 = ex.sub(ctx["x0"], ctx["mu1"])
    d1 = ex.sub(ctx["x1"], ctx["mu1"])
    f = ex.exp_(ex.scale(-2.0, ex.add(ex.pow_(d0, 2.0), ex.pow_(d1, 2.0))))
    return [ex.sub(ex.neg(ctx.lap(w)), f)]


# ---------------------------------------------------------------------------
# Optimal control of Poisson: fields (y, u, z) on [-1, 1]^2
# ---------------------------------------------------------------------------

def _ocp_poisson_residuals(fields, ctx):
    y, u, z = fields["y"], fields["u"], fields["z"]
    return [
        ex.sub(ex.sub(y, ctx.lap(z)), ctx["mu1"]),
        ex.sub(ex.mul(ctx["mu2"], u), z),
        ex.sub(ex.neg(ctx.lap(y)), u),
    ]


_OCP_POISSON_RELATION = Relation(
    inputs=("u",),
    outputs=("z",),
    build=lambda fields, ctx: {"z": ex.mul(ctx["mu2"], fields["u"])},
    raw_inputs=("mu2",),
)


# ---------------------------------------------------------------------------
# Optimal control of Stokes: fields (v1, v2, p, z1, z2, r, u1, u2)
# on [0, 1] x [0, 2]; Dirichlet inflow/top/bottom, traction outflow
# ---------------------------------------------------------------------------

def _ocp_stokes_residuals(fields, ctx):
    v1, v2, p = fields["v1"], fields["v2"], fields["p"]
    z1, z2, r = fields["z1"], fields["z2"], fields["r"]
    u1, u2 = fields["u1"], fields["u2"]
    nu = STOKES_VISCOSITY
    al = STOKES_ALPHA
    return [
        # state momentum, forcing f = (mu1, 0) plus control
        ex.sub(ex.add(ex.scale(-nu, ctx.lap(v1)), ctx.d(p, "x0")),
               ex.add(ctx["mu1"], u1)),
        ex.sub(ex.add(ex.scale(-nu, ctx.lap(v2)), ctx.d(p, "x1")), u2),
        # state incompressibility
        ex.add(ctx.d(v1, "x0"), ctx.d(v2, "x1")),
        # adjoint momentum, tracking x1 - v1 in the first component
        ex.sub(ex.add(ex.scale(-nu, ctx.lap(z1)), ctx.d(r, "x0")),
               ex.sub(ctx["x1"], v1)),
        ex.add(ex.scale(-nu, ctx.lap(z2)), ctx.d(r, "x1")),
        # adjoint incompressibility
        ex.add(ctx.d(z1, "x0"), ctx.d(z2, "x1")),
        # optimality
        ex.sub(ex.scale(al, u1), z1),
        ex.sub(ex.scale(al, u2), z2),
    ]


def _stokes_dirichlet(fields, ctx):
    # v = (x1, 0), z = 0 on the Dirichlet part
    return [ex.sub(fields["v1"], ctx["x1"]), fields["v2"],
            fields["z1"], fields["z2"]]


def _stokes_neumann(fields, ctx):
    # outflow x0 = 1, outward normal +e_x0:
    # -p + nu dv1/dx0 = 0 and v2 = 0; same for the adjoint pair
    nu = STOKES_VISCOSITY
    return [
        ex.add(ex.neg(fields["p"]), ex.scale(nu, ctx.d(fields["v1"], "x0"))),
        fields["v2"],
        ex.add(ex.neg(fields["r"]), ex.scale(nu, ctx.d(fields["z1"], "x0"))),
        fields["z2"],
    ]


_OCP_STOKES_RELATION = Relation(
    inputs=("u1", "u2"),
    outputs=("z1", "z2"),
    build=lambda fields, ctx: {
        "z1": ex.scale(STOKES_ALPHA, fields["u1"]),
        "z2": ex.scale(STOKES_ALPHA, fields["u2"]),
    },
)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _build_catalog():
    unit_sq = sp.box2d((0.0, 1.0), (0.0, 1.0))
    sym_sq = sp.box2d((-1.0, 1.0), (-1.0, 1.0))

    poisson1 = Problem(
        name="poisson1",
        fields=("w",),
        input_names=("x0", "x1"),
        domain=unit_sq,
        param_box=None,
        build_residuals=_poisson1_residuals,
        bcs=(BoundaryCondition("dirichlet", unit_sq.all_facets(),
                               _zero_dirichlet(["w"])),),
        exact_fn=_poisson1_exact,
        exact_exprs=_poisson1_exact_exprs,
        feature_preset="poisson_sine",
        defaults=dict(hidden=(10, 10), activation="softplus", lr=0.003,
                      epochs=1000, interior=("grid", (10, 10)),
                      boundary=("equispaced", 40), mu=None),
    )

    poisson2 = Problem(
        name="poisson2",
        fields=("w",),
        input_names=("x0", "x1"),
        domain=unit_sq,
        param_box=None,
        build_residuals=_poisson2_residuals,
        bcs=(BoundaryCondition("dirichlet", unit_sq.all_facets(),
                               _zero_dirichlet(["w"])),),
        exact_fn=_poisson2_exact,
        exact_exprs=_poisson2_exact_exprs,
        feature_preset="poisson2_forcing",
        defaults=dict(hidden=(10, 10), activation="softplus", lr=0.003,
                      epochs=10000, interior=("grid", (10, 10)),
                      boundary=("equispaced", 40), mu=None),
    )

    slab = sp.Box((sp.Axis("x0", -1.0, 1.0),
                   sp.Axis("t", 0.0, 1.0, sp.TIME)))
    burgers = Problem(
        name="burgers",
        fields=("w",),
        input_names=("x0", "t"),
        domain=slab,
        param_box=None,
        build_residuals=_burgers_residuals,
        bcs=(
            BoundaryCondition("walls", ((0, 0), (0, 1)),
                              _zero_dirichlet(["w"])),
            BoundaryCondition("initial", ((1, 0),), _burgers_ic),
        ),
        exact_fn=None,
        exact_exprs=None,
        feature_preset="burgers_ic",
        defaults=dict(hidden=(20, 10, 5), activation="tanh", lr=0.006,
                      epochs=10000, interior=("lhs", 8000),
                      boundary=("uniform_random", 150), mu=None,
                      full_epochs=200000, full_loss_tol=1e-4),
    )

    gauss_box = sp.Box((sp.Axis("mu1", -1.0, 1.0, sp.PARAM),
                        sp.Axis("mu2", -1.0, 1.0, sp.PARAM)))
    poisson_param = Problem(
        name="poisson_param",
        fields=("w",),
        input_names=("x0", "x1", "mu1", "mu2"),
        domain=sym_sq,
        param_box=gauss_box,
        build_residuals=_poisson_param_residuals,
        bcs=(BoundaryCondition("dirichlet", sym_sq.all_facets(),
                               _zero_dirichlet(["w"])),),
        exact_fn=None,
        exact_exprs=None,
        feature_preset="parametric_gaussian",
        defaults=dict(hidden=(20, 20, 20), activation="softplus", lr=0.03,
                      epochs=1000, interior=("grid", (20, 20)),
                      boundary=("equispaced", 80), mu=("grid", (8, 5))),
    )

    ocp_box = sp.Box((sp.Axis("mu1", 0.5, 3.0, sp.PARAM),
                      sp.Axis("mu2", 0.01, 1.0, sp.PARAM)))
    ocp_poisson = Problem(
        name="ocp_poisson",
        fields=("y", "u", "z"),
        input_names=("x0", "x1", "mu1", "mu2"),
        domain=sym_sq,
        param_box=ocp_box,
        build_residuals=_ocp_poisson_residuals,
        bcs=(BoundaryCondition("dirichlet", sym_sq.all_facets(),
                               _zero_dirichlet(["y", "z"])),),
        exact_fn=None,
        exact_exprs=None,
        feature_preset="ocp_bubble",
        defaults=dict(hidden=(40, 40, 20), activation="softplus", lr=0.002,
                      epochs=10000, interior=("grid", (30, 30)),
                      boundary=("equispaced", 200), mu=("grid", (10, 5))),
        relation=_OCP_POISSON_RELATION,
        base_fields=("u", "y"),
        cost=dict(track=[("y", lambda X, mu: np.full(X.shape[0], mu[0]))],
                  penalty=["u"], alpha=lambda mu: mu[1]),
    )

    channel = sp.box2d((0.0, 1.0), (0.0, 2.0))
    stokes_box = sp.Box((sp.Axis("mu1", 0.5, 1.5, sp.PARAM),))
    ocp_stokes = Problem(
        name="ocp_stokes",
        fields=("v1", "v2", "p", "z1", "z2", "r", "u1", "u2"),
        input_names=("x0", "x1", "mu1"),
        domain=channel,
        param_box=stokes_box,
        build_residuals=_ocp_stokes_residuals,
        bcs=(
            BoundaryCondition("dirichlet", ((0, 0), (1, 0), (1, 1)),
                              _stokes_dirichlet),
            BoundaryCondition("neumann", ((0, 1),), _stokes_neumann),
        ),
        exact_fn=None,
        exact_exprs=None,
        feature_preset=None,
        defaults=dict(hidden=(40, 40, 40, 40), activation="softplus",
                      lr=0.003, epochs=10000, interior=("lhs", 400),
                      boundary=("uniform_random", 1800), mu=("lhs", 10)),
        relation=_OCP_STOKES_RELATION,
        base_fields=("v1", "v2", "p", "r", "u1", "u2"),
        cost=dict(track=[("v1", lambda X, mu: X[:, 1].copy())],
                  penalty=["u1", "u2"], alpha=lambda mu: STOKES_ALPHA),
    )

    return (poisson1, poisson2, burgers, poisson_param, ocp_poisson,
            ocp_stokes)


_CATALOG = None


def catalog():
    """The six shipped problems."""
    global _CATALOG
    if _CATALOG is None:
        _CATALOG = _build_catalog()
    return _CATALOG


def names():
    return tuple(p.name for p in catalog())


def get(name: str) -> Problem:
    for p in catalog():
        if p.name == name:
            return p
    raise KeyError(f"unknown problem {name!r}; available: {list(names())}")
