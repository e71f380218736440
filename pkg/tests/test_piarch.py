import numpy as np
import pytest

from pinnlab import models as md
from pinnlab import network as nw
from pinnlab import piarch as pa
from pinnlab import problems as pb
from pinnlab import sampling as sp
from pinnlab import training as tr


def _ocp_points(problem, n=30, seed=4):
    rng = np.random.default_rng(seed)
    return rng.uniform(problem.domain.lows, problem.domain.highs,
                       size=(n, problem.domain.dim))


def test_composed_ocp_poisson_relation_exact_zero():
    p = pb.get("ocp_poisson")
    model = pa.compose(p, pa.base_model(p, hidden=(8,), seed=1))
    pts = _ocp_points(p)
    assert pa.relation_violation(model, p, pts, mu=[2.0, 0.01]) == 0.0
    assert pa.relation_violation(model, p, pts, mu=[1.0, 1.0]) == 0.0


def test_composed_ocp_stokes_relation_exact_zero():
    p = pb.get("ocp_stokes")
    model = pa.compose(p, pa.base_model(p, hidden=(8,), seed=2))
    pts = _ocp_points(p)
    assert pa.relation_violation(model, p, pts, mu=[1.0]) == 0.0


def test_composed_stokes_optimality_residuals_identically_zero():
    p = pb.get("ocp_stokes")
    model = pa.compose(p, pa.base_model(p, hidden=(6,), seed=3))
    ivars = p.make_input_vars()
    res = pb.residual_exprs(p, model.forward_graph(ivars), ivars)
    # alpha*u1 - z1 and alpha*u2 - z2 fold to the zero constant
    from pinnlab import expr as ex
    assert res[6].kind == ex.CONST and res[6].fconst == 0.0
    assert res[7].kind == ex.CONST and res[7].fconst == 0.0


def test_flat_model_has_positive_violation():
    p = pb.get("ocp_poisson")
    model = md.flat_model(p, hidden=(8,), seed=5)
    pts = _ocp_points(p)
    assert pa.relation_violation(model, p, pts, mu=[2.0, 0.5]) > 0.0


def test_empty_relation_reproduces_flat_losses_bitwise():
    p = pb.get("ocp_poisson")
    flat = md.flat_model(p, hidden=(6,), seed=7)
    # degenerate composition: base covers every field, no relation stage
    degenerate = pb.Relation(inputs=(), outputs=(), build=lambda f, c: {})
    base = md.flat_model(p, hidden=(6,), seed=7)
    composed = pa.ComposedModel(p, base, p.fields, degenerate)
    ls = tr.default_lossspec(p, seed=0, interior=("grid", (5, 5)),
                             boundary=("equispaced", 16), mu=("grid", (2, 2)))
    pf = tr.LossPipeline(flat, ls)
    pc = tr.LossPipeline(composed, ls)
    bf, qf, gf = pf.loss_and_grad(flat.values)
    bc_, qc, gc = pc.loss_and_grad(composed.values)
    assert bf == bc_ and qf == qc
    assert np.array_equal(gf, gc)


def test_coverage_validation():
    p = pb.get("ocp_poisson")
    base = pa.base_model(p, hidden=(4,), seed=0)
    with pytest.raises(ValueError, match="more than once"):
        pa.ComposedModel(p, base, ("u", "z"), p.relation)
    small = md.flat_model(p, hidden=(4,), seed=0)
    with pytest.raises(ValueError, match="not produced"):
        degenerate = pb.Relation(inputs=(), outputs=(), build=lambda f, c: {})
        pa.ComposedModel(p, pa.base_model(p, hidden=(4,), seed=0),
                         ("u", "y"), degenerate)


def test_gradient_through_relation_matches_fd():
    p = pb.get("ocp_poisson")
    model = pa.compose(p, pa.base_model(p, hidden=(3,), seed=9))
    ls = tr.default_lossspec(p, seed=0, interior=("grid", (4, 4)),
                             boundary=("equispaced", 8), mu=("grid", (2, 2)))
    pipe = tr.LossPipeline(model, ls)
    theta = model.values.copy()
    _, _, grad = pipe.loss_and_grad(theta)

    def loss_at(t):
        b, q, _ = pipe.loss_and_grad(t)
        return b + q

    rng = np.random.default_rng(0)
    idx = rng.choice(len(theta), size=25, replace=False)
    h = 1e-5
    for i in idx:
        tp_ = theta.copy(); tp_[i] += h
        tm_ = theta.copy(); tm_[i] -= h
        fd = (loss_at(tp_) - loss_at(tm_)) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_option_b_network_relation():
    p = pb.get("ocp_poisson")
    base = pa.base_model(p, hidden=(5,), seed=11)
    spec = nw.NetworkSpec(2, (4,), 1, "softplus", seed=12)
    model = pa.compose(p, base, relation_net_spec=spec)
    assert len(model.values) == len(base.values) + spec.n_params
    pts = _ocp_points(p)
    # an untrained learned relation will not satisfy the coupling
    assert pa.relation_violation(model, p, pts, mu=[2.0, 0.5]) > 0.0
    # and it trains end to end
    ls = tr.default_lossspec(p, seed=0, interior=("grid", (4, 4)),
                             boundary=("equispaced", 8), mu=("grid", (2, 2)))
    before = model.values.copy()
    tr.train(p, model, ls, lr=0.01, max_epochs=10)
    assert not np.array_equal(model.values[-spec.n_params:],
                              before[-spec.n_params:])


def test_relation_violation_requires_relation():
    p = pb.get("poisson1")
    model = md.flat_model(p, hidden=(3,), seed=1)
    with pytest.raises(ValueError, match="relation"):
        pa.relation_violation(model, p, np.zeros((1, 2)))
