import numpy as np
import pytest

from pinnlab import expr as ex
from pinnlab import network as nw


def test_same_seed_same_parameters():
    spec = nw.NetworkSpec(3, (8, 8), 2, "softplus", seed=42)
    a = nw.init(spec)
    b = nw.init(spec)
    assert np.array_equal(a.values, b.values)


def test_parameter_count_no_hidden():
    spec = nw.NetworkSpec(5, (), 1, "tanh", seed=0)
    assert spec.n_params == 6
    net = nw.init(spec)
    assert len(net.param_vars) == 6


def test_init_bound_respects_fan_in():
    spec = nw.NetworkSpec(10, (4,), 1, "softplus", seed=7)
    net = nw.init(spec)
    first_w = net.values[:40]
    assert np.all(np.abs(first_w) <= np.sqrt(0.1))


def test_biases_start_zero():
    spec = nw.NetworkSpec(2, (3,), 1, "softplus", seed=1)
    net = nw.init(spec)
    # layout: 6 weights, 3 biases, 3 weights, 1 bias
    assert np.all(net.values[6:9] == 0.0)
    assert net.values[12] == 0.0


def test_forward_zero_params_zero_output():
    spec = nw.NetworkSpec(2, (4,), 2, "tanh", seed=0)
    net = nw.Network(spec, np.zeros(spec.n_params))
    out = net.forward(np.array([0.3, -0.7]))
    assert np.all(out == 0.0)


def test_forward_no_hidden_is_affine():
    spec = nw.NetworkSpec(2, (), 1, "softplus", seed=0)
    net = nw.init(spec)
    w = net.values[:2]
    b = net.values[2]
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.uniform(-2, 2, 2)
        assert net.forward(x)[0] == pytest.approx(w @ x + b, rel=1e-14)


def test_forward_deterministic():
    net = nw.init(nw.NetworkSpec(2, (6, 5), 1, "softplus", seed=3))
    x = np.array([0.2, 0.9])
    assert net.forward(x)[0] == net.forward(x)[0]


def test_forward_dimension_mismatch():
    net = nw.init(nw.NetworkSpec(3, (4,), 1, "softplus", seed=0))
    with pytest.raises(ValueError):
        net.forward(np.array([1.0, 2.0]))


def test_forward_graph_matches_forward():
    net = nw.init(nw.NetworkSpec(2, (7, 5), 2, "softplus", seed=11))
    xs = [ex.fresh_var("x0"), ex.fresh_var("x1")]
    outs = net.forward_graph(xs)
    bindings = dict(zip(net.param_vars, net.values))
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1.5, 1.5, 2)
        ref = net.forward(x)
        bindings[xs[0]], bindings[xs[1]] = x
        got = [ex.evaluate(o, bindings) for o in outs]
        worst = max(worst, float(np.max(np.abs(np.array(got) - ref))))
    assert worst < 1e-15


def test_forward_graph_param_vars_coincide():
    net = nw.init(nw.NetworkSpec(2, (3,), 1, "softplus", seed=2))
    xs = [ex.fresh_var("x0"), ex.fresh_var("x1")]
    outs = net.forward_graph(xs)
    graph_vars = {n.var for n in ex.topo_order(outs) if n.kind == ex.VAR}
    assert graph_vars == set(net.param_vars) | set(xs)


def test_forward_graph_derivative_finite_softplus():
    net = nw.init(nw.NetworkSpec(2, (6,), 1, "softplus", seed=9))
    xs = [ex.fresh_var("x0"), ex.fresh_var("x1")]
    out = net.forward_graph(xs)[0]
    d = ex.derive(out, xs[0])
    bindings = dict(zip(net.param_vars, net.values))
    rng = np.random.default_rng(1)
    for _ in range(20):
        bindings[xs[0]], bindings[xs[1]] = rng.uniform(-3, 3, 2)
        assert np.isfinite(ex.evaluate(d, bindings))


def test_second_derivative_matches_fd():
    net = nw.init(nw.NetworkSpec(2, (6, 4), 1, "softplus", seed=13))
    xs = [ex.fresh_var("x0"), ex.fresh_var("x1")]
    out = net.forward_graph(xs)[0]
    dxx = ex.derive(ex.derive(out, xs[0]), xs[0])
    bindings = dict(zip(net.param_vars, net.values))
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(-1, 1, 2)
        bindings[xs[0]], bindings[xs[1]] = x
        val = ex.evaluate(dxx, bindings)
        h = 1e-4
        bindings[xs[0]] = x[0] + h
        fp = ex.evaluate(out, bindings)
        bindings[xs[0]] = x[0] - h
        fm = ex.evaluate(out, bindings)
        bindings[xs[0]] = x[0]
        f0 = ex.evaluate(out, bindings)
        fd = (fp - 2 * f0 + fm) / h ** 2
        assert val == pytest.approx(fd, abs=1e-5)


def test_param_update_not_stale():
    net = nw.init(nw.NetworkSpec(2, (4,), 1, "softplus", seed=4))
    x = np.array([0.5, 0.5])
    before = net.forward(x)[0]
    net.set_params(net.values * 2.0)
    after = net.forward(x)[0]
    assert before != after


def test_json_roundtrip():
    net = nw.init(nw.NetworkSpec(3, (5,), 2, "tanh", seed=21))
    clone = nw.Network.from_json(net.to_json())
    assert clone.spec == net.spec
    assert np.array_equal(clone.values, net.values)
    x = np.array([0.1, -0.4, 0.9])
    assert np.array_equal(clone.forward(x), net.forward(x))


def test_bad_spec_rejected():
    with pytest.raises(ValueError):
        nw.NetworkSpec(2, (0,), 1, "softplus", 0)
    with pytest.raises(ValueError):
        nw.NetworkSpec(2, (3,), 1, "relu", 0)
