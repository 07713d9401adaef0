import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mixkpls.benchmarks import (
    FILLS,
    CrossSectionTable,
    _polygon_normalized_inertia,
    cantilever_fn,
    cantilever_problem,
    cosine_fn,
    cosine_problem,
    get_problem,
    hollow_factor,
    i_beam_vertices,
    pva,
    pva_excluding_zero_variance,
    rmse,
    run_model_benchmark,
    run_optim_benchmark,
    star_vertices,
    toy_fn,
    toy_global_minimum,
    toy_problem,
)
from mixkpls.design_space import MixedPoint
from mixkpls.gp import kernel_config


# -- scalar transcriptions used as oracles --------------------------------

def cosine_scalar(x, c):
    if c <= 9:
        return math.cos(7 * math.pi / 2 * x + (0.4 * math.pi + math.pi / 15 * c) - c / 20)
    return math.cos(7 * math.pi / 2 * x - c / 20)


def toy_scalar(x, c):
    pi = math.pi
    return [
        lambda: math.cos(3.6 * pi * (x - 2)) + x - 1,
        lambda: 2 * math.cos(1.1 * pi * math.exp(x)) - x / 2 + 2,
        lambda: math.cos(2 * pi * x) + x / 2,
        lambda: x * (math.cos(3.4 * pi * (x - 1)) - (x - 1) / 2),
        lambda: -x * x / 2,
        lambda: 2 * math.cos(0.25 * pi * math.exp(-x**4)) ** 2 - x / 2 + 1,
        lambda: x * math.cos(3.4 * pi * x) - x / 2 + 1,
        lambda: -x * (math.cos(3.5 * pi * x) + x / 2) + 2,
        lambda: -x**5 / 2 + 1,
        lambda: -math.cos(2.5 * pi * x) ** 2 * math.sqrt(x) - 0.5 * math.log(x + 0.5) - 1.3,
    ][c]()


@given(st.floats(0, 1), st.integers(1, 13))
def test_cosine_matches_scalar_oracle(x, c):
    assert cosine_fn(x, c) == pytest.approx(cosine_scalar(x, c), abs=1e-14)


def test_cosine_spot_value():
    assert cosine_fn(0.0, 1) == pytest.approx(math.cos(0.4 * math.pi + math.pi / 15 - 0.05), abs=1e-15)
    assert cosine_fn(0.0, 1) == pytest.approx(0.154103, abs=1e-6)


def test_function_spot_values():
    assert cosine_fn(0.0, 10) == pytest.approx(math.cos(-0.5), abs=1e-15)
    assert toy_fn(1.0, 4) == pytest.approx(-0.5)
    assert toy_fn(0.0, 8) == pytest.approx(1.0)
    assert toy_fn(0.0, 2) == pytest.approx(1.0)


@pytest.mark.parametrize("fn, level", [(cosine_fn, 1), (toy_fn, 0)])
def test_x_bounds(fn, level):
    for x in (-0.01, 1.01, float("nan")):
        with pytest.raises(ValueError):
            fn(x, level)


def test_cosine_range_and_errors():
    x = np.linspace(0, 1, 101)
    for c in range(1, 14):
        assert np.all(np.abs(cosine_fn(x, c)) <= 1)
    with pytest.raises(ValueError):
        cosine_fn(0.5, 14)


@given(st.floats(0, 1), st.integers(0, 9))
def test_toy_matches_scalar_oracle(x, c):
    assert toy_fn(x, c) == pytest.approx(toy_scalar(x, c), abs=1e-13)


def test_toy_problem_uses_zero_based_labels():
    p = toy_problem()
    assert p(MixedPoint((0.3,), (), (1,))) == pytest.approx(toy_scalar(0.3, 0))
    assert p(MixedPoint((0.3,), (), (10,))) == pytest.approx(toy_scalar(0.3, 9))


def test_toy_global_minimum_against_brute_force():
    val, x, c = toy_global_minimum()
    grid = np.linspace(0, 1, 10001)
    brute = min((toy_scalar(float(t), k), k) for k in range(10) for t in grid)
    assert val == pytest.approx(brute[0], abs=1e-12)
    assert c == brute[1] == 9
    assert toy_scalar(x, c) == pytest.approx(val, abs=1e-12)


# -- cantilever -----------------------------------------------------------

def test_hollow_square_closed_form():
    # side a with a centered square hole of side r*a
    for r in FILLS.values():
        area = 1 - r**2
        inertia = (1 - r**4) / 12
        assert inertia / area**2 == pytest.approx(hollow_factor(r) / 12, rel=1e-14)


def test_polygon_inertia_of_rectangle():
    w, h = 2.0, 0.5
    rect = np.array([[0, 0], [w, 0], [w, h], [0, h]])
    assert _polygon_normalized_inertia(rect) == pytest.approx((w * h**3 / 12) / (w * h) ** 2)
    # orientation does not matter
    assert _polygon_normalized_inertia(rect[::-1]) == pytest.approx(_polygon_normalized_inertia(rect))


def test_i_beam_against_composite_rectangles():
    tf, tw = 0.32, 0.48
    web_h = 1 - 2 * tf
    area = 2 * tf + tw * web_h
    flange = 2 * (tf**3 / 12 + tf * (0.5 - tf / 2) ** 2)
    web = tw * web_h**3 / 12
    assert _polygon_normalized_inertia(i_beam_vertices(tf, tw)) == pytest.approx(
        (flange + web) / area**2, rel=1e-12
    )


def inside_polygon(px, py, vertices):
    """Even-odd rule, vectorized over query points."""
    inside = np.zeros(px.shape, dtype=bool)
    x0, y0 = vertices[-1]
    for x1, y1 in vertices:
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (px < xint)
        x0, y0 = x1, y1
    return inside


def raster_normalized_inertia(vertices, n=1500):
    """Pixel-count estimate of I_x / A^2 for a polygon."""
    lo, hi = vertices.min(0), vertices.max(0)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X, Y = np.meshgrid(xs, ys)
    inside = inside_polygon(X.ravel(), Y.ravel(), vertices)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    yy = Y.ravel()[inside]
    area = inside.sum() * cell
    cy = yy.mean()
    return ((yy - cy) ** 2).sum() * cell / area**2


def test_raster_oracle_on_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert raster_normalized_inertia(sq, 800) == pytest.approx(1 / 12, rel=5e-3)


def test_hexagram_against_raster():
    star = star_vertices()
    assert _polygon_normalized_inertia(star) == pytest.approx(raster_normalized_inertia(star), rel=5e-3)


def test_cross_section_table_layout():
    t = CrossSectionTable.default()
    assert len(t.labels) == len(t.values) == 12
    assert [t.labels[i] for i in (0, 3, 6, 9)] == ["full-square", "full-circle", "full-I", "full-star"]
    assert t.values[0] == pytest.approx(1 / 12)
    assert t.values[3] == pytest.approx(1 / (4 * math.pi))
    for s in range(4):
        full, med, hol = t.values[3 * s : 3 * s + 3]
        assert full < med < hol
        assert hol / full == pytest.approx(hollow_factor(0.8))
    assert {t.group(lab) for lab in t.labels} == {"full", "medium", "hollow"}


def test_cantilever_formula():
    t = CrossSectionTable.default()
    got = cantilever_fn(12.0, 1.5, 4, t)
    assert got == pytest.approx(5e4 * 12.0**3 / (3 * 2e11 * 1.5**2 * t.values[3]))


def test_cantilever_unit_inertia_example():
    unit = CrossSectionTable(("unit",), (1.0,))
    assert cantilever_fn(10.0, 1.0, 1, unit) == pytest.approx(5e4 * 1e3 / 6e11, rel=1e-14)
    assert cantilever_fn(10.0, 1.0, 1, unit) == pytest.approx(8.3333e-5, rel=1e-5)


@given(st.floats(10, 10), st.floats(1, 1), st.integers(1, 12), st.floats(1, 2))
def test_cantilever_scaling_laws(length, area, sec, k):
    base = cantilever_fn(length, area, sec)
    assert cantilever_fn(length * k, area, sec) == pytest.approx(base * k**3, rel=1e-12)
    assert cantilever_fn(length, area * k, sec) == pytest.approx(base / k**2, rel=1e-12)
    t = CrossSectionTable.default()
    scaled = CrossSectionTable(t.labels, tuple(v * k for v in t.values))
    assert cantilever_fn(length, area, sec, scaled) == pytest.approx(base / k, rel=1e-12)


def test_cantilever_doubling_examples():
    assert cantilever_fn(20.0, 1.0, 3) == pytest.approx(8 * cantilever_fn(10.0, 1.0, 3), rel=1e-14)
    assert cantilever_fn(10.0, 2.0, 3) == pytest.approx(cantilever_fn(10.0, 1.0, 3) / 4, rel=1e-14)


@pytest.mark.parametrize("args", [(9.9, 1.0, 1), (10.0, 2.5, 1), (10.0, 1.0, 13), (10.0, 1.0, 0)])
def test_cantilever_bounds(args):
    with pytest.raises(ValueError):
        cantilever_fn(*args)


def test_cross_section_table_validation():
    with pytest.raises(ValueError):
        CrossSectionTable(("a", "b"), (1.0, 0.0))
    with pytest.raises(ValueError):
        CrossSectionTable(("a", "a"), (1.0, 2.0))
    with pytest.raises(ValueError):
        CrossSectionTable(("a",), (1.0, 2.0))


@given(st.floats(10, 20), st.floats(10, 20), st.floats(1, 2), st.integers(1, 12))
def test_cantilever_monotone_in_length(l1, l2, s, sec):
    a, b = sorted((l1, l2))
    assert cantilever_fn(a, s, sec) <= cantilever_fn(b, s, sec)


def test_problem_registry():
    assert get_problem("cantilever").space.categoricals[0].n_levels == 12
    with pytest.raises(ValueError):
        get_problem("rosenbrock")


def test_validation_grid_sizes():
    assert len(cosine_problem().validation_set()) == 13000
    assert len(cantilever_problem().validation_set()) == 30 * 30 * 12


# -- metrics --------------------------------------------------------------

def test_rmse_and_pva_examples():
    assert rmse([1, 2, 3], [1, 2, 5]) == pytest.approx(math.sqrt(4 / 3))
    assert pva([0, 0], [1, 2], [1, 4]) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        pva([1], [1], [0.0])


def test_pva_excluding_zero_variance():
    val, n_out = pva_excluding_zero_variance([0, 0, 0], [1, 5, 2], [1, 0, 4])
    assert n_out == 1 and val == pytest.approx(0.0)
    val, n_out = pva_excluding_zero_variance([0], [1], [0])
    assert n_out == 1 and math.isnan(val)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(0.1, 10))
def test_pva_scales_with_variance(errors, k):
    e = np.array(errors)
    var = np.full(e.size, 0.5)
    assume(np.mean(e**2) > 1e-200)
    assert pva(e, np.zeros_like(e), var * k) == pytest.approx(pva(e, np.zeros_like(e), var) - math.log(k))


# -- drivers --------------------------------------------------------------

def test_model_benchmark_small():
    p = cosine_problem()
    kernels = {"GD": kernel_config("gd"), "HH_PLS": kernel_config("hh-pls")}
    report = run_model_benchmark(p, kernels, 20, [0, 1], starts=2, max_evals_per_dim=30,
                                 keep_level_matrices=True)
    assert len(report.rows) == 4
    med = report.medians()
    assert med["GD"]["n_hyper"] == 2 and med["HH_PLS"]["n_hyper"] == 2
    assert all(np.isfinite(med[k]["rmse"]) for k in med)
    M = report.level_matrices[("GD", 0)]["c"]
    assert M.shape == (13, 13) and np.allclose(np.diag(M), 1)
    csv_text = report.to_csv()
    assert csv_text.splitlines()[0].startswith("kernel,seed,n_hyper,rmse,pva")
    with pytest.raises(ValueError):
        run_model_benchmark(p, kernels, 20, [])


def test_optim_benchmark_small():
    p = toy_problem()
    report = run_optim_benchmark(p, {"GD": kernel_config("gd")}, [4], runs=2, budget=3, fit_starts=2)
    assert report.best_after("GD", 4, 7).shape == (2,)
    curve = report.median_curve("GD", 4)
    assert curve.size == 7 and np.all(np.diff(curve) <= 0)
    assert report.summary()["GD/doe4"]["runs"] == 2
