"""Physics-informed composed architectures.

A composed model splits the unknown fields across stages: a base
network predicts the first-stage fields, and a known relation between
the unknowns produces the remaining ones, either as a closed-form
expression wired into the graph (so the corresponding optimality
equation holds exactly, by construction) or as a second trainable
network approximating that relation.  Gradients flow end to end either
way.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from . import models as md
from . import network as nw
from . import problems as pb
from . import tape as tp


class ComposedModel:
    """Base network for the first-stage fields plus relation stages."""

    def __init__(self, problem: pb.Problem, base: md.FlatModel,
                 base_fields, relation: pb.Relation,
                 relation_net: nw.Network | None = None):
        self.problem = problem
        self.base = base
        self.base_fields = tuple(base_fields)
        self.relation = relation
        self.relation_net = relation_net
        self.input_names = base.input_names

        covered = list(self.base_fields) + list(relation.outputs)
        if sorted(covered) != sorted(set(covered)):
            dupes = {f for f in covered if covered.count(f) > 1}
            raise ValueError(f"fields covered more than once: {sorted(dupes)}")
        missing = set(problem.fields) - set(covered)
        if missing:
            raise ValueError(f"fields not produced by any stage: "
                             f"{sorted(missing)}")
        extra = set(covered) - set(problem.fields)
        if extra:
            raise ValueError(f"unknown fields produced: {sorted(extra)}")
        for f in relation.inputs:
            if f not in self.base_fields:
                raise ValueError(f"relation input {f!r} is not a base field")
        if base.n_outputs != len(self.base_fields):
            raise ValueError("base network output count must match the "
                             "first-stage field list")

        self.param_vars = list(base.param_vars)
        self.values = base.values.copy()
        if relation_net is not None:
            self.param_vars += list(relation_net.param_vars)
            self.values = np.concatenate([self.values, relation_net.values])
        self._graph_cache = {}
        self._tape = None

    @property
    def n_outputs(self):
        return len(self.problem.fields)

    def set_params(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("parameter count mismatch")
        self.values = values.copy()

    def forward_graph(self, input_vars):
        key = tuple(v.uid for v in input_vars)
        outs = self._graph_cache.get(key)
        if outs is not None:
            return outs
        base_outs = self.base.forward_graph(input_vars)
        fields = dict(zip(self.base_fields, base_outs))
        ctx = self.problem.ctx_for(input_vars)
        if self.relation_net is None:
            produced = self.relation.build(fields, ctx)
        else:
            net_in = [fields[f] for f in self.relation.inputs]
            net_in += [ctx[n] for n in self.relation.raw_inputs]
            net_out = self.relation_net.forward_graph(net_in)
            produced = dict(zip(self.relation.outputs, net_out))
        outs = [fields[f] if f in fields else produced[f]
                for f in self.problem.fields]
        self._graph_cache[key] = outs
        return outs

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if self._tape is None:
            ivars = [ex.fresh_var(n) for n in self.input_names]
            self._tape = tp.compile_graphs(self.forward_graph(ivars), ivars,
                                           self.param_vars)
        Y = self._tape.evaluate(np.atleast_2d(X), self.values)
        return Y[0] if single else Y


def compose(problem: pb.Problem, base: md.FlatModel, base_fields=None,
            relation: pb.Relation | None = None,
            relation_net_spec: nw.NetworkSpec | None = None) -> ComposedModel:
    """Build the composed architecture for a problem.

    Defaults to the problem's declared first-stage fields and
    optimality relation with the closed-form wiring; pass
    ``relation_net_spec`` to approximate the relation with a second
    network instead.
    """
    relation = relation if relation is not None else problem.relation
    if relation is None:
        raise ValueError(f"{problem.name} declares no optimality relation")
    base_fields = tuple(base_fields) if base_fields is not None \
        else problem.base_fields
    relation_net = None
    if relation_net_spec is not None:
        expected = len(relation.inputs) + len(relation.raw_inputs)
        if relation_net_spec.input_dim != expected:
            raise ValueError(f"relation network needs {expected} inputs")
        if relation_net_spec.output_dim != len(relation.outputs):
            raise ValueError(f"relation network must produce "
                             f"{len(relation.outputs)} outputs")
        relation_net = nw.init(relation_net_spec)
    return ComposedModel(problem, base, base_fields, relation, relation_net)


def base_model(problem: pb.Problem, hidden=None, activation=None, seed=0,
               features=None) -> md.FlatModel:
    """Flat model sized for the problem's first-stage fields."""
    d = problem.defaults
    hidden = tuple(d["hidden"]) if hidden is None else tuple(hidden)
    activation = d["activation"] if activation is None else activation
    if features is None:
        features = problem.make_features()
    spec = nw.NetworkSpec(len(problem.input_names) + len(features), hidden,
                          len(problem.base_fields), activation, seed)
    return md.FlatModel(problem.input_names, nw.init(spec), features)


_XI_TAPES = {}


def _xi_tape(problem: pb.Problem):
    """Tape computing the relation outputs from its declared inputs."""
    tape = _XI_TAPES.get(problem.name)
    if tape is None:
        rel = problem.relation
        fvars = [ex.fresh_var(f) for f in rel.inputs]
        rvars = [ex.fresh_var(n) for n in problem.input_names]
        ctx = problem.ctx_for(rvars)
        fields = dict(zip(rel.inputs, [ex.var(v) for v in fvars]))
        produced = rel.build(fields, ctx)
        outs = [produced[f] for f in rel.outputs]
        tape = tp.compile_graphs(outs, fvars + rvars, [])
        _XI_TAPES[problem.name] = tape
    return tape


def relation_violation(model, problem: pb.Problem, points, mu=None) -> float:
    """Max over points of |Xi(first-stage fields) - produced fields|.

    Exactly zero for closed-form composed models; generically positive
    for flat networks.
    """
    rel = problem.relation
    if rel is None:
        raise ValueError(f"{problem.name} declares no optimality relation")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if mu is not None:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        X = np.concatenate(
            [points, np.broadcast_to(mu, (points.shape[0], mu.shape[0]))],
            axis=1)
    else:
        X = points
    fields = model.forward(X)
    cols = {f: fields[:, i] for i, f in enumerate(problem.fields)}
    tape = _xi_tape(problem)
    xi_in = np.stack([cols[f] for f in rel.inputs]
                     + [X[:, i] for i in range(len(problem.input_names))],
                     axis=1)
    xi = tape.evaluate(xi_in, np.zeros(0))
    worst = 0.0
    for j, f in enumerate(rel.outputs):
        worst = max(worst, float(np.max(np.abs(xi[:, j] - cols[f]))))
    return worst
