import numpy as np
import pytest

from pinnlab import sampling as sp


def unit_square():
    return sp.box2d((0.0, 1.0), (0.0, 1.0))


def test_cartesian_grid_corners():
    ps = sp.cartesian_grid(unit_square(), (2, 2))
    got = {tuple(p) for p in ps.points}
    assert got == {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}


def test_cartesian_grid_count_100():
    ps = sp.cartesian_grid(unit_square(), (10, 10))
    assert len(ps) == 100


def test_cartesian_grid_midpoint():
    box = sp.Box((sp.Axis("x", 0.0, 1.0),))
    ps = sp.cartesian_grid(box, (3,))
    assert 0.5 in ps.points[:, 0]


def test_interior_grid_excludes_boundary():
    ps = sp.interior_grid(unit_square(), (10, 10))
    assert len(ps) == 100
    assert np.all(ps.points > 0.0) and np.all(ps.points < 1.0)


def test_latin_hypercube_stratification():
    box = unit_square()
    ps = sp.latin_hypercube(box, 4, seed=5)
    for d in range(2):
        bins = np.floor(ps.points[:, d] * 4).astype(int)
        assert sorted(bins) == [0, 1, 2, 3]


def test_latin_hypercube_deterministic():
    box = unit_square()
    a = sp.latin_hypercube(box, 16, seed=9)
    b = sp.latin_hypercube(box, 16, seed=9)
    assert np.array_equal(a.points, b.points)
    c = sp.latin_hypercube(box, 16, seed=10)
    assert not np.array_equal(a.points, c.points)


def test_latin_hypercube_burgers_scale_inside_box():
    box = sp.Box((sp.Axis("x0", -1.0, 1.0), sp.Axis("t", 0.0, 1.0, sp.TIME)))
    ps = sp.latin_hypercube(box, 8000, seed=1)
    assert len(ps) == 8000
    assert box.contains(ps.points.min(axis=0)) and box.contains(ps.points.max(axis=0))


def test_boundary_equispaced_unit_square_40():
    ps = sp.boundary_sample(unit_square(), 40, "equispaced")
    assert len(ps) == 40
    x0, x1 = ps.points[:, 0], ps.points[:, 1]
    dist = np.minimum(np.minimum(x0, 1 - x0), np.minimum(x1, 1 - x1))
    assert np.all(dist == 0.0)
    # proportional split: 10 per edge
    for axis, side in unit_square().all_facets():
        val = 1.0 if side else 0.0
        assert (ps.points[:, axis] == val).sum() >= 10


def test_boundary_facet_mask_excludes_terminal_time():
    box = sp.Box((sp.Axis("x0", -1.0, 1.0), sp.Axis("t", 0.0, 1.0, sp.TIME)))
    facets = [(0, 0), (0, 1), (1, 0)]  # x=-1, x=+1, t=0
    ps = sp.boundary_sample(box, 150, "uniform_random", seed=3, facets=facets)
    assert len(ps) == 150
    assert not np.any(ps.points[:, 1] == 1.0)
    on_walls = (np.abs(ps.points[:, 0]) == 1.0).sum()
    at_t0 = (ps.points[:, 1] == 0.0).sum()
    assert on_walls + at_t0 >= 150  # every point on a selected facet


def test_boundary_uniform_random_deterministic():
    a = sp.boundary_sample(unit_square(), 33, "uniform_random", seed=7)
    b = sp.boundary_sample(unit_square(), 33, "uniform_random", seed=7)
    assert np.array_equal(a.points, b.points)


def test_boundary_empty_facet_mask_errors():
    with pytest.raises(ValueError, match="facet"):
        sp.boundary_sample(unit_square(), 10, "equispaced", facets=[])


def test_allocation_proportional_to_measure():
    # x0 edges have measure 2, x1 edges measure 1
    assert list(sp._allocate(60, [2.0, 2.0, 1.0, 1.0])) == [20, 20, 10, 10]
    # largest remainder breaks ties deterministically
    assert sum(sp._allocate(7, [1.0, 1.0, 2.0])) == 7
    assert list(sp._allocate(7, [1.0, 1.0, 2.0])) == list(sp._allocate(7, [1.0, 1.0, 2.0]))


def test_tensor_product_pairs():
    box = unit_square()
    xs = sp.cartesian_grid(box, (2, 2))
    mbox = sp.Box((sp.Axis("mu1", 0.0, 1.0, sp.PARAM),))
    ms = sp.PointSet(np.array([[0.25], [0.75]]), mbox, "manual")
    prod = sp.tensor_product(xs, ms)
    assert prod.shape == (8, 3)
    assert np.all(prod[:4, 2] == 0.25) and np.all(prod[4:, 2] == 0.75)


def test_pointset_csv_roundtrip(tmp_path):
    ps = sp.latin_hypercube(unit_square(), 5, seed=2)
    path = tmp_path / "pts.csv"
    ps.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x0,x1"
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.array_equal(vals, ps.points)
