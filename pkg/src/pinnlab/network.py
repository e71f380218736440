"""Dense feed-forward networks expressed as expression graphs.

A network owns a flat float64 parameter vector (per layer: row-major
weights, then biases) and matching parameter variables, so the same
object serves numeric prediction and symbolic residual construction.
Initial weights are uniform on (-sqrt(1/fan_in), +sqrt(1/fan_in)) drawn
from a PCG64 generator seeded with SeedSequence(seed); biases start at
zero.  Two networks built from the same spec are identical.

Layer conventions: ``hidden`` counts hidden layers only (a "2-layer,
10-neuron" description means two hidden layers of 10); the output layer
is linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import tape as tp

ACTIVATIONS = {
    "softplus": ex.softplus,
    "tanh": ex.tanh_,
}


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden: tuple
    output_dim: int
    activation: str = "softplus"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input and output dimensions must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; "
                             f"choose from {sorted(ACTIVATIONS)}")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def n_params(self):
        dims = self.layer_dims
        return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


class Network:
    """Feed-forward network with parameters bound to graph variables."""

    def __init__(self, spec: NetworkSpec, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, "
                             f"got {values.shape}")
        self.spec = spec
        self.values = values.copy()
        self.param_vars = []
        dims = spec.layer_dims
        for l in range(len(dims) - 1):
            for j in range(dims[l + 1]):
                for i in range(dims[l]):
                    self.param_vars.append(ex.fresh_var(f"w{l}_{j}_{i}"))
            for j in range(dims[l + 1]):
                self.param_vars.append(ex.fresh_var(f"b{l}_{j}"))
        self._graph_cache = {}
        self._default_vars = None
        self._fwd_tape = None

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def forward_graph(self, inputs):
        """One expression per output over the given inputs.

        ``inputs`` may be variable ids or already-built expressions
        (e.g. feature-augmented inputs); length must match the spec.
        Graphs are cached per distinct input tuple.
        """
        nodes = [ex.var(v) if isinstance(v, ex.VarId) else v for v in inputs]
        if len(nodes) != self.spec.input_dim:
            raise ValueError(f"expected {self.spec.input_dim} inputs, "
                             f"got {len(nodes)}")
        key = tuple(n.uid for n in nodes)
        cached = self._graph_cache.get(key)
        if cached is not None:
            return cached
        act = ACTIVATIONS[self.spec.activation]
        dims = self.spec.layer_dims
        pv = self.param_vars
        off = 0
        current = nodes
        for l in range(len(dims) - 1):
            n_in, n_out = dims[l], dims[l + 1]
            nxt = []
            for j in range(n_out):
                terms = [ex.mul(ex.var(pv[off + j * n_in + i]), current[i])
                         for i in range(n_in)]
                terms.append(ex.var(pv[off + n_in * n_out + j]))
                s = ex.sum_of(terms)
                nxt.append(act(s) if l < len(dims) - 2 else s)
            off += (n_in + 1) * n_out
            current = nxt
        self._graph_cache[key] = current
        return current

    def forward(self, x) -> np.ndarray:
        """Evaluate the network; accepts one point or a batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if self._fwd_tape is None:
            self._default_vars = [ex.fresh_var(f"in{i}")
                                  for i in range(self.spec.input_dim)]
            outs = self.forward_graph(self._default_vars)
            self._fwd_tape = tp.compile_graphs(outs, self._default_vars,
                                               self.param_vars)
        Y = self._fwd_tape.evaluate(x, self.values)
        return Y[0] if single else Y

    def set_params(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("parameter count mismatch")
        self.values = values.copy()

    # -- checkpoint format: flat array, layer-major, row-major weights
    #    then biases -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({
            "input_dim": self.spec.input_dim,
            "hidden": list(self.spec.hidden),
            "output_dim": self.spec.output_dim,
            "activation": self.spec.activation,
            "seed": self.spec.seed,
            "params": self.values.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "Network":
        d = json.loads(text)
        spec = NetworkSpec(d["input_dim"], tuple(d["hidden"]),
                           d["output_dim"], d["activation"], d["seed"])
        return cls(spec, np.asarray(d["params"]))


def init(spec: NetworkSpec) -> Network:
    """Deterministic fan-in-scaled uniform init, zero biases."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    dims = spec.layer_dims
    chunks = []
    for l in range(len(dims) - 1):
        bound = np.sqrt(1.0 / dims[l])
        chunks.append(rng.uniform(-bound, bound, size=dims[l] * dims[l + 1]))
        chunks.append(np.zeros(dims[l + 1]))
    return Network(spec, np.concatenate(chunks))
