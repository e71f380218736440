"""Trainable models: a network over feature-augmented raw inputs.

A model owns one flat trainable vector (network weights first, then
learnable feature parameters) and exposes symbolic output graphs plus
batched numeric prediction.  Composed physics-informed architectures
build on this in :mod:`pinnlab.piarch`.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from . import features as ft
from . import network as nw
from . import tape as tp


class FlatModel:
    """Standard architecture: one dense network predicts every field."""

    def __init__(self, input_names, network: nw.Network,
                 features: ft.FeatureSet = ft.EMPTY):
        self.input_names = tuple(input_names)
        self.network = network
        self.features = features
        feat_params = ft.feature_params(features)
        expected = len(self.input_names) + len(features)
        if network.spec.input_dim != expected:
            raise ValueError(
                f"network expects {network.spec.input_dim} inputs but raw "
                f"inputs + features give {expected}")
        self.param_vars = list(network.param_vars) + [v for v, _ in feat_params]
        self.values = np.concatenate(
            [network.values, np.array([init for _, init in feat_params])]) \
            if feat_params else network.values.copy()
        self._graph_cache = {}
        self._tape = None
        self._tape_vars = None

    @property
    def n_outputs(self):
        return self.network.spec.output_dim

    @property
    def n_network_params(self):
        return self.network.spec.n_params

    def set_params(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("parameter count mismatch")
        self.values = values.copy()

    def forward_graph(self, input_vars):
        """Output expressions over named raw input variables."""
        if len(input_vars) != len(self.input_names):
            raise ValueError(f"expected {len(self.input_names)} raw inputs")
        key = tuple(v.uid for v in input_vars)
        outs = self._graph_cache.get(key)
        if outs is None:
            augmented = ft.augment(self.features, input_vars)
            outs = self.network.forward_graph(augmented)
            self._graph_cache[key] = outs
        return outs

    def forward(self, X) -> np.ndarray:
        """Field values for a batch of raw inputs, shape (n, n_fields)."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if self._tape is None:
            self._tape_vars = [ex.fresh_var(n) for n in self.input_names]
            outs = self.forward_graph(self._tape_vars)
            self._tape = tp.compile_graphs(outs, self._tape_vars,
                                           self.param_vars)
        Y = self._tape.evaluate(np.atleast_2d(X), self.values)
        return Y[0] if single else Y


class ExactModel:
    """Model hardwired to a problem's closed-form solution.

    No trainable parameters; used to check that exact solutions zero
    the losses.
    """

    def __init__(self, problem):
        if problem.exact_exprs is None:
            raise ValueError(f"{problem.name} has no closed-form solution")
        self.problem = problem
        self.input_names = problem.input_names
        self.param_vars = []
        self.values = np.zeros(0)
        self.n_outputs = len(problem.fields)

    def set_params(self, values):
        if len(values):
            raise ValueError("exact model has no parameters")

    def forward_graph(self, input_vars):
        return self.problem.exact_exprs(self.problem.ctx_for(input_vars))

    def forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = len(self.problem.spatial_names)
        return self.problem.exact_fn(X[:, :d], X[0, d:] if X.shape[1] > d else None)


class FixedFieldModel:
    """Parameter-free model built from closed-form field expressions.

    ``build`` maps a name->Expr dict of the raw inputs to the list of
    field expressions.
    """

    def __init__(self, input_names, build):
        self.input_names = tuple(input_names)
        self.build = build
        self.param_vars = []
        self.values = np.zeros(0)
        self.n_outputs = len(self.forward_graph(
            [ex.fresh_var(n) for n in self.input_names]))

    def set_params(self, values):
        pass

    def forward_graph(self, input_vars):
        v = {vid.name: ex.var(vid) for vid in input_vars}
        return self.build(v)

    def forward(self, X):
        from . import tape as tp
        ivars = [ex.fresh_var(n) for n in self.input_names]
        t = tp.compile_graphs(self.forward_graph(ivars), ivars, [])
        return t.evaluate(np.atleast_2d(X), self.values)


def flat_model(problem, hidden=None, activation=None, seed=0,
               features=None) -> FlatModel:
    """Build the standard model for a problem, defaulting to its
    recommended architecture and feature preset."""
    d = problem.defaults
    hidden = tuple(d["hidden"]) if hidden is None else tuple(hidden)
    activation = d["activation"] if activation is None else activation
    if features is None:
        features = problem.make_features()
    spec = nw.NetworkSpec(len(problem.input_names) + len(features), hidden,
                          len(problem.fields), activation, seed)
    return FlatModel(problem.input_names, nw.init(spec), features)
