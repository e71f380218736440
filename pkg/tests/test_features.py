import math

import numpy as np
import pytest

from pinnlab import expr as ex
from pinnlab import features as ft


def _vars(names):
    return [ex.fresh_var(n) for n in names]


def test_poisson_sine_at_center():
    xs = _vars(["x0", "x1"])
    nodes = ft.augment(ft.preset("poisson_sine"), xs)
    assert len(nodes) == 3
    val = ex.evaluate(nodes[2], {xs[0]: 0.5, xs[1]: 0.5})
    assert val == pytest.approx(1.0, abs=1e-15)


def test_ocp_bubble_vanishes_on_boundary():
    xs = _vars(["x0", "x1"])
    k = ft.augment(ft.preset("ocp_bubble"), xs)[2]
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = rng.uniform(-1, 1)
        for pt in [(1.0, s), (-1.0, s), (s, 1.0), (s, -1.0)]:
            assert ex.evaluate(k, dict(zip(xs, pt))) == pytest.approx(0.0, abs=1e-15)


def test_empty_featureset_is_identity():
    xs = _vars(["x0", "x1"])
    nodes = ft.augment(ft.EMPTY, xs)
    assert len(nodes) == 2
    assert all(n.kind == ex.VAR for n in nodes)


def test_learnable_template_has_six_params():
    fs = ft.preset("poisson_sine_learnable")
    params = ft.feature_params(fs)
    assert len(params) == 6
    names = sorted(v.name for v, _ in params)
    assert names == ["a0", "a1", "b0", "b1", "g0", "g1"]
    inits = {v.name: init for v, init in params}
    assert inits["a0"] == 1.0 and inits["b0"] == 1.0 and inits["g0"] == 0.0


def test_all_fixed_set_has_no_params():
    assert ft.feature_params(ft.preset("poisson_sine")) == []


def test_two_learnable_sets_have_disjoint_ids():
    a = ft.preset("poisson_sine_learnable")
    b = ft.preset("poisson_sine_learnable")
    ids_a = {v for v, _ in ft.feature_params(a)}
    ids_b = {v for v, _ in ft.feature_params(b)}
    assert not (ids_a & ids_b)


def test_augment_count_invariant():
    for name in ft.PRESET_NAMES:
        fs = ft.preset(name)
        req = fs.features[0].requires
        names = sorted(set(req) | {"x0", "x1", "mu1", "mu2", "t"})
        xs = _vars(names)
        assert len(ft.augment(fs, xs)) == len(xs) + 1


def test_fixed_features_contain_no_parameter_vars():
    xs = _vars(["x0", "x1"])
    k = ft.augment(ft.preset("poisson_sine"), xs)[2]
    vars_in = {n.var for n in ex.topo_order([k]) if n.kind == ex.VAR}
    assert vars_in <= set(xs)


def test_learnable_feature_receives_gradient():
    xs = _vars(["x0", "x1"])
    fs = ft.preset("poisson_sine_learnable")
    k = ft.augment(fs, xs)[2]
    params = ft.feature_params(fs)
    loss = ex.pow_(ex.sub(k, 0.3), 2.0)
    bindings = {xs[0]: 0.4, xs[1]: 0.6}
    bindings.update({v: init for v, init in params})
    grads = ex.gradient(loss, [v for v, _ in params], bindings)
    assert any(abs(g) > 1e-8 for g in grads)


def test_unknown_input_reference_errors():
    xs = _vars(["x0"])
    with pytest.raises(KeyError, match="x1"):
        ft.augment(ft.preset("poisson_sine"), xs)


def test_parametric_gaussian_uses_mu1_twice():
    xs = _vars(["x0", "x1", "mu1", "mu2"])
    k = ft.augment(ft.preset("parametric_gaussian"), xs)[4]
    # with x0 = x1 = mu1 the exponent is zero regardless of mu2
    v = ex.evaluate(k, {xs[0]: 0.3, xs[1]: 0.3, xs[2]: 0.3, xs[3]: -0.9})
    assert v == pytest.approx(1.0, abs=1e-15)
    # symmetric in (x0, x1) about mu1
    a = ex.evaluate(k, {xs[0]: 0.5, xs[1]: 0.1, xs[2]: 0.3, xs[3]: 0.0})
    b = ex.evaluate(k, {xs[0]: 0.1, xs[1]: 0.5, xs[2]: 0.3, xs[3]: 0.0})
    assert a == pytest.approx(b, rel=1e-15)


def test_expression_feature_parses_and_evaluates():
    fs = ft.from_expression("sin(pi*x0)*cos(x1) + exp(-t)/2 - mu1**2")
    xs = _vars(["x0", "x1", "t", "mu1"])
    k = ft.augment(fs, xs)[-1]
    pt = {xs[0]: 0.5, xs[1]: 0.0, xs[2]: 0.0, xs[3]: 2.0}
    assert ex.evaluate(k, pt) == pytest.approx(
        math.sin(math.pi * 0.5) * math.cos(0.0) + 0.5 - 4.0, rel=1e-14)


def test_expression_feature_rejects_bad_syntax():
    with pytest.raises(ValueError):
        ft.from_expression("__import__('os')")
    with pytest.raises(ValueError):
        ft.from_expression("sin(x0")
    with pytest.raises(ValueError):
        ft.from_expression("x0 ** x1")


def test_unknown_preset():
    with pytest.raises(KeyError, match="unknown feature preset"):
        ft.preset("nope")
