import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixkpls import categorical_kernels as ck
from mixkpls.benchmarks import cantilever_problem, cosine_problem, toy_problem
from mixkpls.design_space import DesignSpace, Doe, MixedPoint, VariableSpec, lhs_sample
from mixkpls.gp import (
    ABSOLUTE_EXPONENTIAL,
    NUGGET_LADDER,
    FitError,
    KernelConfig,
    MixedKernel,
    NotSPDError,
    TrainedGp,
    ensure_spd,
    fit,
    kernel_config,
    log_likelihood,
    start_points,
)

ALL_KERNELS = ("gd", "cr", "ehh", "hh", "hh-pls", "ehh-pls", "cr-pls")


@pytest.fixture
def small_space():
    return DesignSpace((
        VariableSpec.continuous("x1", 0.0, 1.0),
        VariableSpec.continuous("x2", -2.0, 3.0),
        VariableSpec.categorical("a", ["p", "q", "r", "s"]),
        VariableSpec.categorical("b", ["u", "v", "w"]),
    ))


def toy_response(doe):
    return np.sin(3 * doe.x[:, 0]) + 0.3 * doe.x[:, 1] + 0.5 * doe.c[:, 0] - 0.2 * doe.c[:, 1] ** 2


def test_ensure_spd_identity_needs_no_nugget():
    _, nug = ensure_spd(np.eye(4))
    assert nug == 0.0


def test_ensure_spd_duplicates_take_smallest_rung():
    L, nug = ensure_spd(np.ones((2, 2)))
    assert nug == NUGGET_LADDER[1]
    assert np.allclose(L @ L.T, np.ones((2, 2)) + nug * np.eye(2))


def test_ensure_spd_gives_up():
    with pytest.raises(NotSPDError):
        ensure_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def oracle_log_likelihood(R, y):
    n = y.size
    ones = np.ones(n)
    Ri_y = np.linalg.solve(R, y)
    Ri_1 = np.linalg.solve(R, ones)
    mu = ones @ Ri_y / (ones @ Ri_1)
    res = y - mu
    s2 = res @ np.linalg.solve(R, res) / n
    _, logdet = np.linalg.slogdet(R)
    return -0.5 * (n * np.log(s2) + logdet + n * (1 + np.log(2 * np.pi)))


@pytest.mark.parametrize("name", ALL_KERNELS)
def test_log_likelihood_matches_dense_oracle(name, small_space, rng):
    doe = lhs_sample(small_space, 15, seed=2)
    doe = doe.with_responses(toy_response(doe))
    kernel = MixedKernel.for_doe(small_space, kernel_config(name), doe)
    t = kernel.hyper_template()
    values = np.clip(t.values * rng.uniform(0.5, 1.5, t.values.size), t.lower, t.upper)
    values[~t.log] = rng.uniform(0.5, 1.2, (~t.log).sum())  # keep PLS matrices PSD
    R = kernel.matrix(values, doe)
    assert np.allclose(R, R.T) and np.all(np.diag(R) == 1.0)
    try:
        ll = log_likelihood(kernel, values, doe)
    except NotSPDError:
        pytest.skip("random hyperparameters gave a non-SPD matrix")
    assert ll == pytest.approx(oracle_log_likelihood(R, doe.y), rel=1e-8)


def test_kernel_is_product_of_parts(small_space):
    cfg = KernelConfig(categorical=(ck.GD, ck.CR))
    doe = lhs_sample(small_space, 4, seed=0)
    kernel = MixedKernel(small_space, cfg)
    values = np.array([2.0, 0.5, 1.3, 0.1, 0.2, 0.3])
    a, b = doe[0], doe[1]
    ax = (np.array(a.x) - [0, -2]) / [1, 5]
    bx = (np.array(b.x) - [0, -2]) / [1, 5]
    cont = np.exp(-np.sum([2.0, 0.5] * (ax - bx) ** 2))
    gd = 1.0 if a.c[0] == b.c[0] else np.exp(-1.3)
    diag = np.array([0.1, 0.2, 0.3])
    cr = 1.0 if a.c[1] == b.c[1] else np.exp(-diag[a.c[1] - 1] - diag[b.c[1] - 1])
    assert kernel(values, a, b) == pytest.approx(cont * gd * cr)
    assert kernel(values, a, a) == pytest.approx(1.0)


def test_absolute_exponential(small_space):
    cfg = KernelConfig(categorical=ck.GD, continuous_kernel=ABSOLUTE_EXPONENTIAL)
    kernel = MixedKernel(small_space, cfg)
    a = MixedPoint((0.0, -2.0), (), (1, 1))
    b = MixedPoint((0.5, 3.0), (), (1, 1))
    values = np.array([1.0, 1.0, 1.0, 1.0])
    assert kernel(values, a, b) == pytest.approx(np.exp(-1.5))


def dense_predictions(gp, doe_q):
    """Mean and variance written directly from the kriging equations."""
    y = (gp.doe.y - gp.y_mean) / gp.y_std
    R = gp.kernel.matrix(gp.hyper.values, gp.doe) + gp.nugget * np.eye(len(gp.doe))
    r = gp.kernel.cross(gp.hyper.values, gp.kernel.encode(doe_q), gp.kernel.encode(gp.doe))
    ones = np.ones(len(gp.doe))
    Ri = np.linalg.inv(R)
    mu = ones @ Ri @ y / (ones @ Ri @ ones)
    s2 = (y - mu) @ Ri @ (y - mu) / y.size
    mean = mu + r @ Ri @ (y - mu)
    quad = np.einsum("ij,jk,ik->i", r, Ri, r)
    lin = 1 - r @ Ri @ ones
    var = s2 * (1 - quad + lin**2 / (ones @ Ri @ ones))
    return gp.y_mean + gp.y_std * mean, np.maximum(var, 0) * gp.y_std**2


@pytest.mark.parametrize("name", ["gd", "cr", "hh", "hh-pls"])
def test_predictions_match_dense_equations(name, small_space):
    # fixed, well-conditioned hyperparameters so the dense inverse is trustworthy
    doe = lhs_sample(small_space, 20, seed=5)
    doe = doe.with_responses(toy_response(doe))
    kernel = MixedKernel.for_doe(small_space, kernel_config(name), doe)
    t = kernel.hyper_template()
    values = np.where(t.log, 3.0, 0.3)
    gp = TrainedGp(small_space, kernel.config, doe, kernel, t.with_values(values))
    assert gp.nugget == 0.0
    q = lhs_sample(small_space, 30, seed=9)
    m, v = gp.predict(q)
    dm, dv = dense_predictions(gp, q)
    assert np.allclose(m, dm, atol=1e-8 * np.ptp(doe.y))
    assert np.allclose(v, dv, atol=1e-8 * gp.sigma2)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(ALL_KERNELS))
def test_interpolates_training_points(seed, name):
    rng = np.random.default_rng(seed)
    specs = [VariableSpec.continuous(f"x{i}", 0, 1) for i in range(rng.integers(1, 4))]
    specs += [VariableSpec.categorical(f"c{i}", [str(j) for j in range(rng.integers(2, 7))])
              for i in range(rng.integers(1, 3))]
    space = DesignSpace(tuple(specs))
    doe = lhs_sample(space, int(rng.integers(8, 31)), seed=seed)
    doe = doe.with_responses(np.cos(doe.x.sum(1) * 4) + doe.c.sum(1) * 0.3)
    gp, _ = fit(space, doe, kernel_config(name), starts=3, seed=seed, max_evals_per_dim=40)
    m, v = gp.predict(doe)
    if gp.nugget == 0.0:
        assert np.max(np.abs(m - doe.y)) <= 1e-6 * np.ptp(doe.y)
        assert np.max(v) <= 1e-6 * gp.sigma2


def test_far_point_predicts_process_mean(small_space):
    doe = lhs_sample(small_space, 12, seed=1)
    doe = doe.with_responses(toy_response(doe))
    kernel = MixedKernel(small_space, KernelConfig(categorical=ck.GD))
    t = kernel.hyper_template()
    gp = TrainedGp(small_space, kernel.config, doe, kernel, t.with_values([20.0, 20.0, 20.0, 20.0]))
    cand = lhs_sample(small_space, 200, seed=4)
    r_all = kernel.cross(gp.hyper.values, kernel.encode(cand), kernel.encode(doe))
    far = cand.subset([int(np.argmin(r_all.max(axis=1)))])
    r = kernel.cross(gp.hyper.values, kernel.encode(far), kernel.encode(doe))
    assert r.max() < 1e-4
    assert gp.predict_mean(far[0]) == pytest.approx(gp.mu, abs=1e-2 * np.ptp(doe.y))


@pytest.mark.parametrize(
    "factory, name, expected",
    [
        (cosine_problem, "gd", 2),
        (cosine_problem, "cr", 14),
        (cosine_problem, "hh-pls", 2),
        (cosine_problem, "ehh-pls", 2),
        (cosine_problem, "hh", 79),
        (cosine_problem, "ehh", 79),
        (cosine_problem, "cr-pls", 2),
        (toy_problem, "cr", 11),
        (toy_problem, "hh", 46),
        (cantilever_problem, "hh", 68),
        (cantilever_problem, "gd", 3),
        (cantilever_problem, "hh-pls", 3),
    ],
)
def test_hyperparameter_counts(factory, name, expected):
    p = factory()
    doe = p.evaluate(lhs_sample(p.space, 98, seed=0))
    assert MixedKernel.for_doe(p.space, kernel_config(name), doe).n_hyper == expected


@pytest.mark.parametrize("ell, expected", [(2, 2), (3, 4)])
def test_hh_pls_counts_on_cosine(ell, expected):
    p = cosine_problem()
    doe = p.evaluate(lhs_sample(p.space, 98, seed=0))
    assert MixedKernel.for_doe(p.space, kernel_config("hh-pls", pls_levels=ell), doe).n_hyper == expected


@pytest.mark.parametrize("ell", [4, 5])
def test_matrix_pls_exhaustion_reduces_levels(ell):
    # a near-balanced 13-level design leaves only a few informative directions,
    # so the reduced level count drops until every component is informative
    p = cosine_problem()
    doe = p.evaluate(lhs_sample(p.space, 98, seed=0))
    with pytest.warns(UserWarning, match="matrix PLS"):
        k = MixedKernel.for_doe(p.space, kernel_config("hh-pls", pls_levels=ell), doe)
    full = 1 + ell * (ell - 1) // 2
    assert 2 <= k.n_hyper < full


def test_pls_levels_at_or_above_L_fall_back_to_full_kernel(small_space):
    doe = lhs_sample(small_space, 15, seed=0)
    doe = doe.with_responses(toy_response(doe))
    k = MixedKernel.for_doe(small_space, kernel_config("hh-pls", pls_levels=3), doe)
    assert k.kinds == (ck.HH_PLS, ck.HH)


def test_serialization_round_trip(small_space, tmp_path):
    doe = lhs_sample(small_space, 18, seed=3)
    doe = doe.with_responses(toy_response(doe))
    for name in ("hh-pls", "cr-pls", "cr"):
        gp, _ = fit(small_space, doe, kernel_config(name), starts=2, seed=0, max_evals_per_dim=30)
        path = tmp_path / f"{name}.json"
        gp.save(path)
        back = TrainedGp.load(path)
        q = lhs_sample(small_space, 25, seed=11)
        m1, v1 = gp.predict(q)
        m2, v2 = back.predict(q)
        assert np.allclose(m1, m2, atol=1e-10, rtol=0)
        assert np.allclose(v1, v2, atol=1e-10, rtol=0)
        assert back.n_hyper == gp.n_hyper


def test_constant_responses_give_constant_model(small_space):
    doe = lhs_sample(small_space, 6, seed=0).with_responses(np.full(6, 4.2))
    with pytest.warns(UserWarning, match="constant"):
        gp, _ = fit(small_space, doe, kernel_config("gd"))
    m, v = gp.predict(lhs_sample(small_space, 5, seed=1))
    assert np.all(m == 4.2) and np.all(v == 0.0)


def test_fit_input_errors(small_space):
    doe = lhs_sample(small_space, 6, seed=0)
    with pytest.raises(ValueError):
        fit(small_space, doe, kernel_config("gd"))
    with pytest.raises(ValueError):
        fit(small_space, doe.subset([0]).with_responses([1.0]), kernel_config("gd"))
    with pytest.raises(ValueError):
        kernel_config("nope")


def test_fit_is_deterministic(small_space):
    doe = lhs_sample(small_space, 14, seed=0)
    doe = doe.with_responses(toy_response(doe))
    a, _ = fit(small_space, doe, kernel_config("cr"), starts=2, seed=7, max_evals_per_dim=30)
    b, _ = fit(small_space, doe, kernel_config("cr"), starts=2, seed=7, max_evals_per_dim=30)
    assert np.array_equal(a.hyper.values, b.hyper.values)


def test_fit_report(small_space):
    doe = lhs_sample(small_space, 14, seed=0)
    doe = doe.with_responses(toy_response(doe))
    gp, report = fit(small_space, doe, kernel_config("gd"), starts=4, seed=0, max_evals_per_dim=20)
    assert len(report.starts) == 4
    assert report.best_log_likelihood == pytest.approx(gp.log_likelihood)
    assert max(s.log_likelihood for s in report.starts) == pytest.approx(gp.log_likelihood)
    assert all(s.n_eval <= 20 * gp.n_hyper + 2 for s in report.starts)


def test_start_points_spread_along_diagonal():
    lo, hi = np.zeros(3), np.ones(3)
    pts = start_points(lo, hi, 10, seed=0)
    assert np.all(pts >= 0) and np.all(pts <= 1)
    centres = (np.arange(10) + 0.5) / 10
    assert np.all(np.abs(pts - centres[:, None]) <= 0.1 + 1e-12)
    assert np.array_equal(pts, start_points(lo, hi, 10, seed=0))


def test_level_matrix_access(small_space):
    doe = lhs_sample(small_space, 14, seed=0)
    doe = doe.with_responses(toy_response(doe))
    gp, _ = fit(small_space, doe, kernel_config("gd"), starts=2, max_evals_per_dim=20)
    M = gp.level_matrix("a")
    assert M.shape == (4, 4)
    off = M[~np.eye(4, dtype=bool)]
    assert np.allclose(off, off[0])
    with pytest.raises(KeyError):
        gp.level_matrix("nope")
    cont = DesignSpace((VariableSpec.continuous("x", 0, 1),))
    d2 = lhs_sample(cont, 6, seed=0)
    gp2, _ = fit(cont, d2.with_responses(np.sin(5 * d2.x[:, 0])), kernel_config("gd"), starts=1)
    with pytest.raises(ValueError, match="no categorical"):
        gp2.level_matrix("x")
    gp3, _ = fit(small_space, doe, kernel_config("cr-pls"), starts=1, max_evals_per_dim=20)
    with pytest.raises(ValueError):
        gp3.level_matrix("a")


def test_integer_variables_are_handled_as_continuous():
    space = DesignSpace((VariableSpec.integer("n", 0, 10), VariableSpec.categorical("c", ["a", "b"])))
    doe = lhs_sample(space, 10, seed=0)
    doe = doe.with_responses(doe.z[:, 0] ** 2 * 0.1 + doe.c[:, 0])
    gp, _ = fit(space, doe, kernel_config("hh"), starts=2, max_evals_per_dim=40)
    assert gp.n_hyper == 2
    m, _ = gp.predict(doe)
    if gp.nugget == 0:
        assert np.allclose(m, doe.y, atol=1e-6 * np.ptp(doe.y))


def test_continuous_pls_option(small_space):
    doe = lhs_sample(small_space, 15, seed=0)
    doe = doe.with_responses(toy_response(doe))
    cfg = KernelConfig(categorical=ck.GD, continuous_pls=1)
    gp, _ = fit(small_space, doe, cfg, starts=2, max_evals_per_dim=30)
    assert gp.n_hyper == 3
