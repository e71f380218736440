"""Loss assembly and full-batch Adam training.

The global loss averages boundary and residual mean-square terms over
the parameter samples: with residuals r_j at interior points x_k and
boundary mismatches at points x_k^b,

    loss = (1/N_mu) sum_i [ sum_l (1/N_b^l) sum_k |mismatch(x_k^b, mu_i)|^2
                          + sum_j (1/N_p)  sum_k |r_j(x_k, mu_i)|^2 ].

Non-parametric problems are the N_mu = 1 case with no parameter
columns.  Training is full batch: every collocation point of the tensor
product (points x parameter samples) contributes to every gradient.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import problems as pb
from . import sampling as sp
from . import tape as tp


@dataclass
class LossSpec:
    """Collocation data binding a problem to concrete point sets."""
    problem: pb.Problem
    interior: sp.PointSet
    boundary: dict
    params: sp.PointSet | None = None

    def __post_init__(self):
        if len(self.interior) == 0:
            raise ValueError("interior point set must be nonempty")
        for bc in self.problem.bcs:
            ps = self.boundary.get(bc.name)
            if ps is None or len(ps) == 0:
                raise ValueError(f"boundary condition {bc.name!r} needs "
                                 f"at least one point")
        if self.params is not None and len(self.params) == 0:
            self.params = None

    @property
    def n_mu(self):
        return len(self.params) if self.params is not None else 1


def default_lossspec(problem: pb.Problem, seed: int = 0,
                     interior=None, boundary=None, mu=None) -> LossSpec:
    """Point sets from the problem's recommended sampler settings.

    ``interior``/``boundary``/``mu`` override the defaults; each is a
    (mode, count) pair as stored in ``problem.defaults``.
    """
    d = problem.defaults
    interior = interior if interior is not None else d["interior"]
    boundary = boundary if boundary is not None else d["boundary"]
    mu = mu if mu is not None else d["mu"]

    mode, count = interior
    if mode == "grid":
        ps_int = sp.interior_grid(problem.domain, count)
    elif mode == "lhs":
        ps_int = sp.latin_hypercube(problem.domain, int(count), seed)
    else:
        raise ValueError(f"unknown interior sampler {mode!r}")

    bmode, btotal = boundary
    measures = {bc.name: sum(problem.domain.facet_measure(f)
                             for f in bc.facets)
                for bc in problem.bcs}
    counts = sp._allocate(int(btotal), [measures[bc.name]
                                        for bc in problem.bcs])
    bsets = {}
    for bc, n in zip(problem.bcs, counts):
        bsets[bc.name] = sp.boundary_sample(problem.domain, int(n), bmode,
                                            seed=seed + 1, facets=bc.facets)

    ps_mu = None
    if problem.param_box is not None and mu is not None:
        mmode, mcount = mu
        if mmode == "grid":
            ps_mu = sp.cartesian_grid(problem.param_box, mcount)
        elif mmode == "lhs":
            ps_mu = sp.latin_hypercube(problem.param_box, int(mcount),
                                       seed + 2)
        else:
            raise ValueError(f"unknown parameter sampler {mmode!r}")
    return LossSpec(problem, ps_int, bsets, ps_mu)


class LossPipeline:
    """Compiled tapes and batches for one (model, loss spec) pair."""

    def __init__(self, model, lossspec: LossSpec):
        self.model = model
        self.spec = lossspec
        problem = lossspec.problem
        ivars = problem.make_input_vars()
        ctx = problem.ctx_for(ivars)
        outs = model.forward_graph(ivars)
        fields = dict(zip(problem.fields, outs))
        residuals = problem.build_residuals(fields, ctx)
        self.res_tape = tp.compile_graphs(residuals, ivars, model.param_vars)
        self.bc_tapes = {}
        for bc in problem.bcs:
            mism = bc.build(fields, ctx)
            self.bc_tapes[bc.name] = tp.compile_graphs(mism, ivars,
                                                       model.param_vars)
        n_mu = lossspec.n_mu
        self.X_res = sp.tensor_product(lossspec.interior, lossspec.params)
        self.w_res = np.full(len(residuals),
                             1.0 / (len(lossspec.interior) * n_mu))
        self.X_bc, self.w_bc = {}, {}
        for bc in problem.bcs:
            ps = lossspec.boundary[bc.name]
            self.X_bc[bc.name] = sp.tensor_product(ps, lossspec.params)
            n_out = self.bc_tapes[bc.name].n_outputs
            self.w_bc[bc.name] = np.full(n_out, 1.0 / (len(ps) * n_mu))

    def loss_and_grad(self, theta):
        sumsq, grad = self.res_tape.loss_and_grad(self.X_res, theta,
                                                  self.w_res)
        mse_p = float(self.w_res @ sumsq)
        mse_b = 0.0
        for name, tape in self.bc_tapes.items():
            s, g = tape.loss_and_grad(self.X_bc[name], theta,
                                      self.w_bc[name])
            mse_b += float(self.w_bc[name] @ s)
            grad = grad + g
        return mse_b, mse_p, grad


def _mu_batch(points: sp.PointSet, mu) -> np.ndarray:
    if mu is None:
        return points.points
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return np.concatenate(
        [points.points,
         np.broadcast_to(mu, (len(points), mu.shape[0]))], axis=1)


def _pipeline(model, lossspec) -> LossPipeline:
    cache = getattr(lossspec, "_pipelines", None)
    if cache is None:
        cache = {}
        lossspec._pipelines = cache
    key = id(model)
    entry = cache.get(key)
    if entry is None or entry[0] is not model:
        entry = (model, LossPipeline(model, lossspec))
        cache[key] = entry
    return entry[1]


def residual_loss(model, lossspec: LossSpec, mu=None) -> float:
    """Mean squared residual over interior points at one parameter."""
    pipe = _pipeline(model, lossspec)
    X = _mu_batch(lossspec.interior, mu)
    R = pipe.res_tape.evaluate(X, model.values)
    return float(np.sum(R * R) / len(lossspec.interior))


def boundary_loss(model, lossspec: LossSpec, mu=None) -> float:
    """Sum over boundary conditions of per-condition mean squared
    mismatch at one parameter."""
    pipe = _pipeline(model, lossspec)
    total = 0.0
    for bc in lossspec.problem.bcs:
        ps = lossspec.boundary[bc.name]
        M = pipe.bc_tapes[bc.name].evaluate(_mu_batch(ps, mu), model.values)
        total += float(np.sum(M * M) / len(ps))
    return total


def global_loss(model, lossspec: LossSpec) -> float:
    """Boundary plus residual loss averaged over the parameter set."""
    pipe = _pipeline(model, lossspec)
    mse_b, mse_p, _ = pipe.loss_and_grad(model.values)
    return mse_b + mse_p


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(n: int, lr: float) -> AdamState:
    return AdamState(np.zeros(n), np.zeros(n), 0, lr)


def adam_step(params, grads, state: AdamState) -> np.ndarray:
    """One bias-corrected Adam update; state advances in place."""
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    mhat = state.m / (1.0 - state.beta1 ** state.step)
    vhat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainRun:
    config: dict
    mse_b: np.ndarray
    mse_p: np.ndarray
    wall_ms: np.ndarray
    final_params: np.ndarray
    termination: str

    @property
    def total(self):
        return self.mse_b + self.mse_p

    @property
    def epochs(self):
        return len(self.mse_b)

    def write_history_csv(self, path):
        """Deterministic loss history: epoch, mse_b, mse_p, total."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "mse_b", "mse_p", "total"])
            tot = self.total
            for i in range(self.epochs):
                wr.writerow([i, repr(float(self.mse_b[i])),
                             repr(float(self.mse_p[i])),
                             repr(float(tot[i]))])

    def write_timing_csv(self, path):
        """Per-epoch wall clock, kept apart from the loss history so
        reruns stay byte-identical."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "wall_ms"])
            for i in range(self.epochs):
                wr.writerow([i, f"{self.wall_ms[i]:.3f}"])


def train(problem, model, lossspec: LossSpec, lr: float, max_epochs: int,
          loss_tol: float | None = None, seed: int = 0,
          log_every: int = 0) -> TrainRun:
    """Full-batch Adam on the global loss.

    Stops at ``max_epochs`` or when the total loss reaches
    ``loss_tol``; aborts with termination "diverged" on a non-finite
    loss.  Learnable feature parameters ride in the same trainable
    vector as the network weights.
    """
    pipe = LossPipeline(model, lossspec)
    theta = model.values.copy()
    state = adam_init(len(theta), lr)
    hist_b, hist_p, hist_ms = [], [], []
    termination = "max_epochs"
    for epoch in range(max_epochs):
        t0 = time.perf_counter()
        mse_b, mse_p, grad = pipe.loss_and_grad(theta)
        total = mse_b + mse_p
        hist_b.append(mse_b)
        hist_p.append(mse_p)
        hist_ms.append((time.perf_counter() - t0) * 1e3)
        if log_every and (epoch % log_every == 0 or epoch == max_epochs - 1):
            print(f"epoch {epoch:6d}  mse_b {mse_b:.3e}  mse_p {mse_p:.3e}"
                  f"  total {total:.3e}", flush=True)
        if not np.isfinite(total):
            termination = "diverged"
            break
        if loss_tol is not None and total <= loss_tol:
            termination = "loss_threshold"
            break
        theta = adam_step(theta, grad, state)
    model.set_params(theta)
    return TrainRun(
        config=dict(problem=problem.name, lr=lr, max_epochs=max_epochs,
                    loss_tol=loss_tol, seed=seed,
                    n_interior=len(lossspec.interior),
                    n_boundary={k: len(v) for k, v in lossspec.boundary.items()},
                    n_mu=lossspec.n_mu),
        mse_b=np.asarray(hist_b),
        mse_p=np.asarray(hist_p),
        wall_ms=np.asarray(hist_ms),
        final_params=theta.copy(),
        termination=termination,
    )
