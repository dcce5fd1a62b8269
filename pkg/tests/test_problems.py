import math

import numpy as np
import pytest

from holdercg.exceptions import DomainError
from holdercg.numerics import lp_norm
from holdercg.problems import (
    gen_entropy_instance,
    gen_lq_instance,
    gen_nmf_instance,
    grad_lp_residual,
    holder_constant_lp,
    instance_record,
    load_instance,
    lp_residual_value,
    lq_ball_diameter,
    make_problem,
    nmf_lipschitz_bound,
    nmf_split,
    nmf_value_and_grads,
    sample_lq_sphere,
    save_instance,
)
from holdercg.theory import check_holder, check_uniform_convexity


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# lp residual


def test_grad_zero_residual():
    inst = gen_lq_instance(5, 2.0, seed=0, p=1.5)
    np.testing.assert_allclose(grad_lp_residual(inst, inst.x_bar), 0.0, atol=1e-9)


def test_grad_p2_is_least_squares(rng):
    inst = gen_lq_instance(5, 2.0, seed=1)
    x = rng.normal(size=5)
    np.testing.assert_allclose(grad_lp_residual(inst, x), inst.A.T @ (inst.A @ x - inst.b), rtol=1e-12)


@pytest.mark.parametrize("p", [1.3, 1.5, 1.75, 2.0])
def test_grad_lp_finite_differences(rng, p):
    inst = gen_lq_instance(5, 1.5, seed=2, p=p)
    x = rng.normal(size=5)
    fd = central_diff(lambda z: lp_residual_value(inst, z), x)
    assert rel_err(grad_lp_residual(inst, x), fd) <= 1e-5


def test_grad_entropy_family_finite_differences(rng):
    inst = gen_entropy_instance(4, 6, 1.5, 1.0, seed=3)
    x = rng.dirichlet(np.ones(6))
    fd = central_diff(lambda z: lp_residual_value(inst, z), x)
    assert rel_err(grad_lp_residual(inst, x), fd) <= 1e-5


def test_holder_constant_examples():
    assert holder_constant_lp(2.0, 7, 3.0) == pytest.approx(9.0)
    assert holder_constant_lp(1.5, 4, 2.0) == pytest.approx(2**0.5 * 4 ** (1 / 12) * 2**1.5, rel=1e-14)
    assert holder_constant_lp(1.5, 4, 2.0) == pytest.approx(4.4898, abs=5e-5)
    assert holder_constant_lp(1.3, 1, 1.0) == pytest.approx(2**0.7)


@pytest.mark.parametrize("p", [1.0, 2.5])
def test_holder_constant_domain(p):
    with pytest.raises(DomainError):
        holder_constant_lp(p, 3, 1.0)


@pytest.mark.parametrize("p", [1.3, 1.5, 2.0])
def test_holder_sampling_lq(p):
    prob = make_problem(gen_lq_instance(20, 1.5, seed=4, p=p))
    assert check_holder(prob, p - 1, prob.constants.M, n_pairs=500, seed=1) <= 1e-8


def test_holder_sampling_entropy():
    prob = make_problem(gen_entropy_instance(10, 20, 1.5, 1.0, seed=5))
    c = prob.constants
    assert check_holder(prob, c.nu, c.M, n_pairs=500, seed=2) <= 1e-8


def test_holder_identical_pair_is_not_a_violation():
    prob = make_problem(gen_lq_instance(6, 2.0, seed=0))
    prob.sample_feasible = lambda rng: np.full(6, 0.1)
    assert check_holder(prob, 1.0, prob.constants.M, n_pairs=4) <= 0.0


def test_p2_check_is_lipschitz_check():
    inst = gen_lq_instance(8, 2.0, seed=6)
    prob = make_problem(inst)
    assert prob.constants.M == pytest.approx(inst.spec_norm**2)
    assert prob.constants.M == pytest.approx(np.linalg.eigvalsh(inst.A).max() ** 2)


# generators


def test_lq_generator_contract():
    inst = gen_lq_instance(40, 1.5, seed=7)
    ev = np.linalg.eigvalsh(inst.A)
    assert ev.min() >= 1 - 1e-9 and ev.max() <= 100 + 1e-9
    np.testing.assert_allclose(inst.A, inst.A.T)
    assert lp_norm(inst.x_bar, 1.5) == pytest.approx(10.0, abs=1e-10)
    again = gen_lq_instance(40, 1.5, seed=7)
    assert np.array_equal(inst.A, again.A) and np.array_equal(inst.b, again.b)
    assert not np.array_equal(inst.A, gen_lq_instance(40, 1.5, seed=8).A)


def test_lq_sphere_sampler_radius(rng):
    for q in (1.2, 2.0, 5.0):
        assert lp_norm(sample_lq_sphere(rng, 30, q, radius=10.0), q) == pytest.approx(10.0, rel=1e-12)


def test_lq_sphere_sampler_is_sign_symmetric(rng):
    X = np.array([sample_lq_sphere(rng, 3, 1.5) for _ in range(4000)])
    assert np.abs(X.mean(axis=0)).max() < 0.05


def test_lq_diameter_bound(rng):
    for q in (1.5, 2.0, 3.0):
        n = 25
        D = lq_ball_diameter(n, q)
        for _ in range(300):
            x = sample_lq_sphere(rng, n, q)
            assert 2 * np.linalg.norm(x) <= D + 1e-12
    # attained at the flat point for q > 2 and at a vertex for q <= 2
    assert lq_ball_diameter(16, 4.0) == pytest.approx(2 * np.linalg.norm(np.full(16, 16 ** (-1 / 4))))
    assert lq_ball_diameter(16, 1.5) == 2.0


def test_entropy_generator_contract():
    inst = gen_entropy_instance(30, 50, 2.0, 1.0, seed=9)
    s = np.linalg.svd(inst.A, compute_uv=False)
    assert s.max() <= 100 + 1e-6
    assert inst.spec_norm == pytest.approx(s.max(), rel=1e-10)
    ev = np.sort(np.linalg.eigvalsh(inst.A.T @ inst.A))[::-1]
    np.testing.assert_allclose(ev[:30], np.sort(s**2)[::-1], rtol=1e-8, atol=1e-8)
    assert np.abs(ev[30:]).max() <= 1e-8 * ev[0]
    assert np.all((inst.b >= 0) & (inst.b <= 1))
    assert np.array_equal(inst.A, gen_entropy_instance(30, 50, 2.0, 1.0, seed=9).A)
    with pytest.raises(DomainError):
        gen_entropy_instance(5, 4, 2.0, 1.0, seed=0)


def test_entropy_problem_uniform_convexity():
    prob = make_problem(gen_entropy_instance(10, 20, 2.0, 3.0, seed=10))
    assert check_uniform_convexity(prob, 3.0, 2.0, n_samples=500, seed=3) <= 1e-8


def test_entropy_problem_rejects_infeasible():
    prob = make_problem(gen_entropy_instance(3, 4, 2.0, 1.0, seed=0))
    assert math.isinf(prob.g_value(np.array([0.5, 0.5, 0.5, -0.5])))
    assert math.isfinite(prob.g_value(np.array([0.0, 0.0, 0.0, 1.0])))


@pytest.mark.parametrize("law", ["normal", "abs_normal"])
def test_nmf_generator_contract(law):
    inst = gen_nmf_instance(120, 100, 5, 2.0, seed=11, v_law=law)
    np.testing.assert_allclose(inst.V_star.sum(axis=0), 1.0, atol=1e-10)
    assert inst.U_star.min() >= 0 and inst.U_star.max() <= 2.0
    E = inst.X - inst.U_star @ inst.V_star
    assert abs(E.std() - 0.01) <= 0.2 * 0.01
    if law == "abs_normal":
        assert inst.V_star.min() >= 0
    assert np.array_equal(inst.X, gen_nmf_instance(120, 100, 5, 2.0, seed=11, v_law=law).X)


def test_nmf_generator_errors():
    with pytest.raises(DomainError):
        gen_nmf_instance(4, 4, 5, 2.0, seed=0)
    with pytest.raises(DomainError):
        gen_nmf_instance(4, 4, 2, 2.0, seed=0, v_law="cauchy")


# nmf objective


def test_nmf_exact_factorization():
    inst = gen_nmf_instance(6, 5, 2, 2.0, seed=12, noise=0.0)
    f, GU, GV = nmf_value_and_grads(inst, inst.U_star, inst.V_star)
    assert f == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(GU, 0, atol=1e-12)
    np.testing.assert_allclose(GV, 0, atol=1e-12)


def test_nmf_zero_U(rng):
    inst = gen_nmf_instance(6, 5, 2, 2.0, seed=13)
    V = rng.dirichlet(np.ones(2), size=5).T
    f, GU, GV = nmf_value_and_grads(inst, np.zeros((6, 2)), V)
    assert f == pytest.approx(0.5 * np.sum(inst.X**2))
    np.testing.assert_allclose(GU, -inst.X @ V.T)
    np.testing.assert_allclose(GV, 0)


def test_nmf_gradients_finite_differences(rng):
    inst = gen_nmf_instance(6, 5, 2, 2.0, seed=14)
    U = rng.uniform(0, 2, size=(6, 2))
    V = rng.dirichlet(np.ones(2), size=5).T
    _, GU, GV = nmf_value_and_grads(inst, U, V)
    fu = central_diff(lambda z: nmf_value_and_grads(inst, z.reshape(6, 2), V)[0], U.ravel())
    fv = central_diff(lambda z: nmf_value_and_grads(inst, U, z.reshape(2, 5))[0], V.ravel())
    assert rel_err(GU.ravel(), fu) <= 1e-5
    assert rel_err(GV.ravel(), fv) <= 1e-5


def test_nmf_shape_mismatch():
    inst = gen_nmf_instance(6, 5, 2, 2.0, seed=0)
    with pytest.raises(DomainError):
        nmf_value_and_grads(inst, np.zeros((6, 3)), np.zeros((3, 5)))


def test_nmf_problem_flat_layout(rng):
    inst = gen_nmf_instance(6, 5, 2, 2.0, seed=15)
    prob = make_problem(inst)
    z = prob.sample_feasible(rng)
    U, V = nmf_split(inst, z)
    f, GU, GV = nmf_value_and_grads(inst, U, V)
    f2, g = prob.f_and_grad(z)
    assert f == f2
    np.testing.assert_array_equal(g, np.concatenate([GU.ravel(), GV.ravel()]))
    assert prob.g_value(z) == pytest.approx(inst.lam * (np.sum(U**2) + np.sum(V**2)))
    U0, V0 = nmf_split(inst, prob.x0)
    assert np.all(U0 == 1.0) and np.allclose(V0, 0.5)


def test_nmf_lipschitz_bound_is_valid():
    inst = gen_nmf_instance(8, 6, 2, 2.0, seed=16)
    prob = make_problem(inst)
    assert prob.constants.M == nmf_lipschitz_bound(inst)
    assert check_holder(prob, 1.0, prob.constants.M, n_pairs=300, seed=4) <= 1e-8


def test_nmf_uniform_convexity_of_regularizer():
    prob = make_problem(gen_nmf_instance(8, 6, 2, 2.0, seed=17, lam=0.05))
    assert check_uniform_convexity(prob, 0.1, 2.0, n_samples=500, seed=5) <= 1e-8


def test_finite_differences_through_problem_wrappers(rng):
    for inst in (gen_lq_instance(6, 3.0, seed=18, p=1.6), gen_entropy_instance(4, 7, 1.75, 2.0, seed=19)):
        prob = make_problem(inst)
        x = prob.sample_feasible(rng)
        assert rel_err(prob.f_grad(x), central_diff(prob.f_value, x)) <= 1e-5
        f, g = prob.f_and_grad(x)
        assert f == prob.f_value(x)
        seg = prob.f_on_segment(x, prob.x0)
        assert seg(0.3) == pytest.approx(prob.f_value(0.7 * x + 0.3 * prob.x0), rel=1e-12)


# persistence


@pytest.mark.parametrize(
    "inst",
    [
        gen_lq_instance(7, 1.5, seed=20, p=1.3),
        gen_entropy_instance(4, 6, 1.5, 2.0, seed=21),
        gen_nmf_instance(5, 4, 2, 1.0, seed=22, lam=0.02, noise=0.05, v_law="abs_normal"),
    ],
    ids=["lq", "entropy", "nmf"],
)
def test_record_roundtrip(tmp_path, inst):
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert instance_record(back) == instance_record(inst)
    for name in ("A", "b", "X"):
        if hasattr(inst, name):
            assert np.array_equal(getattr(inst, name), getattr(back, name))
