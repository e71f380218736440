import math

import numpy as np
import pytest

from pinnlab import expr as ex


def test_evaluate_square():
    x = ex.fresh_var("x")
    e = ex.mul(ex.var(x), ex.var(x))
    assert ex.evaluate(e, {x: 3.0}) == 9.0


def test_evaluate_softplus_zero():
    x = ex.fresh_var("x")
    e = ex.softplus(ex.var(x))
    assert ex.evaluate(e, {x: 0.0}) == pytest.approx(math.log(2.0), abs=1e-15)


def test_evaluate_sine_product():
    x, y = ex.fresh_var("x"), ex.fresh_var("y")
    e = ex.mul(ex.sin_(ex.scale(math.pi, ex.var(x))),
               ex.sin_(ex.scale(math.pi, ex.var(y))))
    assert ex.evaluate(e, {x: 0.5, y: 0.5}) == pytest.approx(1.0, abs=1e-15)


def test_evaluate_missing_binding_names_variable():
    x = ex.fresh_var("lonely")
    with pytest.raises(ex.MissingBindingError, match="lonely"):
        ex.evaluate(ex.var(x), {})


def test_evaluate_bit_identical_across_calls():
    x = ex.fresh_var("x")
    e = ex.tanh_(ex.add(ex.exp_(ex.var(x)), ex.sin_(ex.var(x))))
    first = ex.evaluate(e, {x: 0.731})
    for _ in range(5):
        assert ex.evaluate(e, {x: 0.731}) == first


def test_derive_square():
    x = ex.fresh_var("x")
    d = ex.derive(ex.pow_(ex.var(x), 2.0), x)
    assert ex.evaluate(d, {x: 3.0}) == pytest.approx(6.0, abs=1e-14)


def test_derive_second_of_sin():
    x = ex.fresh_var("x")
    d2 = ex.derive(ex.derive(ex.sin_(ex.var(x)), x), x)
    assert ex.evaluate(d2, {x: 0.0}) == pytest.approx(0.0, abs=1e-15)


def test_derive_softplus_at_zero():
    x = ex.fresh_var("x")
    d = ex.derive(ex.softplus(ex.var(x)), x)
    assert ex.evaluate(d, {x: 0.0}) == pytest.approx(0.5, abs=1e-15)


def test_derive_absent_variable_is_zero_graph():
    x, y = ex.fresh_var("x"), ex.fresh_var("y")
    d = ex.derive(ex.exp_(ex.var(x)), y)
    assert d.kind == ex.CONST and d.fconst == 0.0


def test_gradient_linear():
    x, y = ex.fresh_var("x"), ex.fresh_var("y")
    e = ex.add(ex.var(x), ex.scale(2.0, ex.var(y)))
    assert ex.gradient(e, [x, y], {x: 1.3, y: -0.2}) == [1.0, 2.0]


def test_gradient_product():
    x, y = ex.fresh_var("x"), ex.fresh_var("y")
    e = ex.mul(ex.var(x), ex.var(y))
    assert ex.gradient(e, [x, y], {x: 2.0, y: 3.0}) == [3.0, 2.0]


def _tiny_network_loss():
    """Hand-built 1-hidden-layer net squared output, with its variables."""
    rng = np.random.default_rng(7)
    xs = [ex.fresh_var(f"x{i}") for i in range(2)]
    params = []
    bindings = {}
    hidden = []
    for j in range(3):
        terms = []
        for i, xv in enumerate(xs):
            w = ex.fresh_var(f"w{j}{i}")
            params.append(w)
            bindings[w] = rng.uniform(-0.7, 0.7)
            terms.append(ex.mul(ex.var(w), ex.var(xv)))
        b = ex.fresh_var(f"b{j}")
        params.append(b)
        bindings[b] = rng.uniform(-0.2, 0.2)
        terms.append(ex.var(b))
        hidden.append(ex.tanh_(ex.sum_of(terms)))
    out_terms = []
    for j, h in enumerate(hidden):
        w = ex.fresh_var(f"v{j}")
        params.append(w)
        bindings[w] = rng.uniform(-0.7, 0.7)
        out_terms.append(ex.mul(ex.var(w), h))
    out = ex.sum_of(out_terms)
    loss = ex.pow_(out, 2.0)
    bindings[xs[0]] = 0.4
    bindings[xs[1]] = -0.9
    return loss, params, bindings


def test_gradient_matches_derive_per_weight():
    loss, params, bindings = _tiny_network_loss()
    bulk = ex.gradient(loss, params, bindings)
    worst = 0.0
    for p, g in zip(params, bulk):
        ref = ex.evaluate(ex.derive(loss, p), bindings)
        denom = max(1.0, abs(ref))
        worst = max(worst, abs(g - ref) / denom)
    assert worst < 1e-12


def test_fd_check_exp():
    x = ex.fresh_var("x")
    e = ex.exp_(ex.var(x))
    assert ex.fd_check(e, {x: 1.0}, 1e-5) < 1e-6


def test_fd_check_constant_is_zero():
    assert ex.fd_check(ex.const(4.2), {}, 1e-5) == 0.0


def test_fd_check_rejects_bad_step():
    x = ex.fresh_var("x")
    with pytest.raises(ValueError):
        ex.fd_check(ex.var(x), {x: 1.0}, 0.0)


ACTIVATIONS = {
    "exp": ex.exp_,
    "log": lambda a: ex.log_(ex.add(ex.const(1.5), ex.pow_(a, 2.0))),
    "sin": ex.sin_,
    "cos": ex.cos_,
    "tanh": ex.tanh_,
    "softplus": ex.softplus,
    "sigmoid": ex.sigmoid,
}


@pytest.mark.parametrize("name", sorted(ACTIVATIONS))
def test_fd_check_activations_100_points(name):
    x = ex.fresh_var("x")
    e = ACTIVATIONS[name](ex.var(x))
    rng = np.random.default_rng(11)
    for _ in range(100):
        assert ex.fd_check(e, {x: rng.uniform(-2.0, 2.0)}, 1e-5) < 1e-6


def test_linearity_of_derive():
    x = ex.fresh_var("x")
    f = ex.sin_(ex.var(x))
    g = ex.exp_(ex.var(x))
    a, b = 2.5, -1.25
    combo = ex.sum_of([f, g], [a, b])
    d_combo = ex.derive(combo, x)
    df, dg = ex.derive(f, x), ex.derive(g, x)
    rng = np.random.default_rng(3)
    for _ in range(25):
        pt = {x: rng.uniform(-2.0, 2.0)}
        lhs = ex.evaluate(d_combo, pt)
        rhs = a * ex.evaluate(df, pt) + b * ex.evaluate(dg, pt)
        assert abs(lhs - rhs) < 1e-12


def test_mixed_partials_commute():
    x, y = ex.fresh_var("x"), ex.fresh_var("y")
    e = ex.mul(ex.tanh_(ex.mul(ex.var(x), ex.var(y))),
               ex.exp_(ex.sum_of([ex.var(x), ex.var(y)], [0.3, -0.7])))
    dxy = ex.derive(ex.derive(e, x), y)
    dyx = ex.derive(ex.derive(e, y), x)
    rng = np.random.default_rng(5)
    for _ in range(25):
        pt = {x: rng.uniform(-1.5, 1.5), y: rng.uniform(-1.5, 1.5)}
        assert abs(ex.evaluate(dxy, pt) - ex.evaluate(dyx, pt)) < 1e-10


def test_third_derivative_of_quartic():
    x = ex.fresh_var("x")
    e = ex.pow_(ex.var(x), 4.0)
    d3 = ex.derive(ex.derive(ex.derive(e, x), x), x)
    assert abs(ex.evaluate(d3, {x: 2.0}) - 48.0) < 1e-9


def test_constant_folding_is_value_preserving():
    x = ex.fresh_var("x")
    # mul by constants folds into sum coefficients
    e = ex.mul(ex.const(3.0), ex.mul(ex.var(x), ex.const(2.0)))
    assert ex.evaluate(e, {x: 1.5}) == 9.0
    # folding never loses terms
    e2 = ex.sum_of([ex.var(x), ex.const(2.0)], [4.0, 3.0], offset=1.0)
    assert ex.evaluate(e2, {x: 0.5}) == 4.0 * 0.5 + 3.0 * 2.0 + 1.0


def test_hash_consing_shares_nodes():
    x = ex.fresh_var("x")
    a = ex.sin_(ex.var(x))
    b = ex.sin_(ex.var(x))
    assert a is b
