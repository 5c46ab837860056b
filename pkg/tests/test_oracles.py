"""Tests for gradient oracles and constraint samplers.

Unbiasedness is checked two ways wherever possible: exact enumeration over
finite supports, and Monte Carlo against a generous standard-error band.
"""

import numpy as np
import pytest

from spal.core import SeededRng
from spal.oracles import (
    AdditiveNoiseOracle,
    BernoulliEdgeSampler,
    DegenerateSampler,
    ExactOracle,
    FiniteAtomSampler,
    FiniteSumOracle,
    GaussianConstraintSampler,
    sample_objective_grad,
    stochastic_k_grad_twosample,
    stochastic_prox_al_grad,
    storm_two_point,
)
from spal.problem import QuadraticObjective, prox_al_grad, zero_objective


def _toy_quadratic(n=3, seed=0):
    rng = np.random.default_rng(seed)
    Qh = rng.standard_normal((n, n))
    return QuadraticObjective((Qh + Qh.T) / 2, rng.standard_normal(n))


def test_exact_oracle_is_the_gradient():
    f = _toy_quadratic()
    o = ExactOracle(f)
    x = np.array([0.3, -0.7, 1.1])
    np.testing.assert_array_equal(o.sample(x), f.grad(x))
    assert o.sigma2 == 0.0 and o.l0 == f.l_f
    gn, go = o.sample_pair(x, 2 * x)
    np.testing.assert_array_equal(gn, f.grad(x))
    np.testing.assert_array_equal(go, f.grad(2 * x))


def test_additive_noise_mean_and_variance():
    f = _toy_quadratic(n=4, seed=1)
    sigma = 0.7
    o = AdditiveNoiseOracle(f, sigma, rng=SeededRng(3))
    x = np.array([1.0, 0.0, -1.0, 0.5])
    g = f.grad(x)
    n_draws = 20000
    draws = np.array([o.sample(x) for _ in range(n_draws)])
    err = draws - g
    # mean within 5 standard errors, per coordinate
    se = sigma / np.sqrt(4) / np.sqrt(n_draws)
    np.testing.assert_allclose(draws.mean(axis=0), g, atol=5 * se)
    # E||noise||^2 = sigma^2 regardless of dimension
    assert np.mean(np.sum(err**2, axis=1)) == pytest.approx(sigma**2, rel=0.05)


def test_additive_pair_shares_the_ticket():
    f = _toy_quadratic(n=2, seed=2)
    o = AdditiveNoiseOracle(f, sigma=5.0, rng=SeededRng(9))
    x1, x0 = np.array([1.0, 2.0]), np.array([-0.5, 0.25])
    g1, g0 = o.sample_pair(x1, x0)
    # the huge shared noise cancels exactly in the difference
    np.testing.assert_allclose(g1 - g0, f.grad(x1) - f.grad(x0), atol=1e-12)


def test_additive_table_matches_per_step_stream():
    f = _toy_quadratic(n=3, seed=4)
    o = AdditiveNoiseOracle(f, sigma=1.3)
    table = o.draw_table(5, SeededRng(42))
    loop_rng = SeededRng(42)
    scale = 1.3 / np.sqrt(3)
    for k in range(5):
        np.testing.assert_array_equal(table["noise"][k], scale * loop_rng.standard_normal(3))
    x = np.zeros(3)
    np.testing.assert_array_equal(o.grad_from_table(table, 2, x), f.grad(x) + table["noise"][2])


def test_finite_sum_mean_is_exact_gradient():
    rng = np.random.default_rng(7)
    m, n = 5, 3
    Qs = np.zeros((m, n, n))
    cs = rng.standard_normal((m, n))
    for i in range(m):
        Qh = rng.standard_normal((n, n))
        Qs[i] = (Qh + Qh.T) / 2
    mean_obj = QuadraticObjective(Qs.mean(axis=0), cs.mean(axis=0))
    o = FiniteSumOracle(mean_obj, sigma2=100.0, Qs=Qs, cs=cs, rng=SeededRng(1))
    x = rng.standard_normal(n)
    # exact enumeration: uniform average of atom gradients equals grad f
    avg = np.mean([o.atom_grad(i, x) for i in range(m)], axis=0)
    np.testing.assert_allclose(avg, mean_obj.grad(x), atol=1e-12)
    # pair sharing: difference only ever uses one atom
    diffs = set()
    for _ in range(20):
        gn, go = o.sample_pair(x, 2 * x)
        diffs.add(tuple(np.round(gn - go, 9)))
    per_atom = {tuple(np.round(o.atom_grad(i, x) - o.atom_grad(i, 2 * x), 9)) for i in range(m)}
    assert diffs <= per_atom


def test_finite_sum_default_l0():
    Qs = np.stack([np.diag([1.0, 2.0]), np.diag([5.0, 0.5])])
    cs = np.zeros((2, 2))
    obj = QuadraticObjective(Qs.mean(axis=0), np.zeros(2))
    o = FiniteSumOracle(obj, sigma2=1.0, Qs=Qs, cs=cs)
    assert o.l0 == pytest.approx(5.0, rel=1e-6)


def test_finite_sum_requires_one_source():
    obj = zero_objective(2)
    with pytest.raises(ValueError):
        FiniteSumOracle(obj, sigma2=1.0)
    with pytest.raises(ValueError, match="l0"):
        FiniteSumOracle(obj, sigma2=1.0, atom_grads=[lambda x: x])


def test_stochastic_prox_al_grad_exact_matches_deterministic():
    f = _toy_quadratic(n=3, seed=5)
    o = ExactOracle(f)
    A = np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.0]])
    b = np.array([0.5, -0.5])
    x, z = np.array([0.1, 0.2, 0.3]), np.array([0.0, 0.0, 1.0])
    y = np.array([1.0, -1.0])
    got = stochastic_prox_al_grad(o, A, b, x, y, z, rho=0.8, mu=2.0)
    want = prox_al_grad(f, A, b, x, y, z, rho=0.8, mu=2.0)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_sample_objective_grad_delegates():
    f = _toy_quadratic(n=2, seed=6)
    assert np.array_equal(sample_objective_grad(ExactOracle(f), [0.5, 0.5]),
                          f.grad([0.5, 0.5]))


def test_two_sample_enumeration_hand_values():
    # Atoms A in {[0], [2]} with equal probability, b = 0, x = 1:
    # penalty term rho*A1'(A2 x - b2) takes values {0, 0, 0, 4} -> mean 1,
    # which equals rho*meanA'(meanA x - meanb) with meanA = [1].
    s = FiniteAtomSampler([[[0.0]], [[2.0]]], [[0.0], [0.0]])
    np.testing.assert_allclose(s.mean_A, [[1.0]])
    x = np.array([1.0])
    y = np.array([1.0])
    vals = []
    y_terms = []
    for p1, A1, _ in s.atoms():
        y_terms.append(float((A1.T @ y)[0]))
        for p2, A2, b2 in s.atoms():
            vals.append((p1 * p2, float((A1.T @ (A2 @ x - b2))[0])))
    assert sorted(v for _, v in vals) == [0.0, 0.0, 0.0, 4.0]
    assert sum(p * v for p, v in vals) == pytest.approx(1.0, abs=1e-15)
    assert sorted(y_terms) == [0.0, 2.0]
    assert sum(p for p, *_ in s.atoms()) == pytest.approx(1.0)


def test_two_sample_direction_unbiased_monte_carlo():
    f = _toy_quadratic(n=2, seed=8)
    o = AdditiveNoiseOracle(f, sigma=0.5, rng=SeededRng(11))
    A1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    A2 = np.array([[1.0, 2.0], [0.0, -1.0]])
    s = FiniteAtomSampler([A1, A2], [np.zeros(2), np.ones(2)],
                          probs=[0.25, 0.75], rng=SeededRng(12))
    x, y, z = np.array([0.5, -0.5]), np.array([1.0, 2.0]), np.zeros(2)
    rho, mu = 1.5, 2.0
    n_draws = 60000
    acc = np.zeros(2)
    for _ in range(n_draws):
        acc += stochastic_k_grad_twosample(o, s, x, y, z, rho, mu)
    got = acc / n_draws
    want = prox_al_grad(f, s.mean_A, s.mean_b, x, y, z, rho, mu)
    # generous band: 6 standard errors with a crude per-coordinate sd bound
    assert np.all(np.abs(got - want) < 6 * 8.0 / np.sqrt(n_draws))


def test_storm_two_point_exact_and_shared_ticket():
    f = _toy_quadratic(n=2, seed=9)
    x1, x0 = np.array([1.0, -1.0]), np.array([0.0, 0.5])
    d_old = np.array([3.0, -3.0])
    alpha = 0.25
    got = storm_two_point(ExactOracle(f), x1, x0, d_old, alpha)
    want = f.grad(x1) + (1 - alpha) * (d_old - f.grad(x0))
    np.testing.assert_allclose(got, want, atol=1e-14)
    # alpha = 1 forgets history entirely
    np.testing.assert_allclose(
        storm_two_point(ExactOracle(f), x1, x0, d_old, 1.0), f.grad(x1), atol=1e-14)
    with pytest.raises(ValueError):
        storm_two_point(ExactOracle(f), x1, x0, d_old, 0.0)
    with pytest.raises(ValueError):
        storm_two_point(ExactOracle(f), x1, x0, d_old, 1.5)


def test_storm_two_point_noise_enters_scaled_by_alpha():
    # With a shared ticket, d_new - (exact update) = alpha * noise, so the
    # deviation shrinks with alpha even for huge sigma.
    f = _toy_quadratic(n=2, seed=10)
    sigma, alpha = 10.0, 0.01
    o = AdditiveNoiseOracle(f, sigma, rng=SeededRng(21))
    x1, x0, d_old = np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros(2)
    exact = f.grad(x1) + (1 - alpha) * (d_old - f.grad(x0))
    devs = [np.linalg.norm(storm_two_point(o, x1, x0, d_old, alpha) - exact)
            for _ in range(200)]
    # each deviation is alpha * ||w||, E||w||^2 = sigma^2
    assert np.mean(devs) < 3 * alpha * sigma


def test_degenerate_sampler():
    A = np.array([[1.0, -1.0]])
    s = DegenerateSampler(A, [0.0])
    A1, b1 = s.sample()
    np.testing.assert_array_equal(A1, A)
    assert s.atoms()[0][0] == 1.0


def test_finite_atom_sampler_frequencies():
    s = FiniteAtomSampler([[[1.0]], [[2.0]], [[3.0]]], [[0.0]] * 3,
                          probs=[0.2, 0.3, 0.5], rng=SeededRng(31))
    counts = np.zeros(3)
    for _ in range(30000):
        A, _ = s.sample()
        counts[int(A[0, 0]) - 1] += 1
    np.testing.assert_allclose(counts / 30000, [0.2, 0.3, 0.5], atol=0.01)


def test_bernoulli_edge_sampler_mean_exact_by_enumeration():
    mean_rows = np.array([[1.0, -1.0, 0.0], [0.0, 0.5, -0.5]])
    probs = np.array([0.5, 0.25])
    s = BernoulliEdgeSampler(mean_rows, np.zeros(2), probs, rng=SeededRng(41))
    atoms = s.atoms()
    assert len(atoms) == 4
    total_p = sum(p for p, *_ in atoms)
    assert total_p == pytest.approx(1.0, abs=1e-15)
    EA = sum(p * A for p, A, _ in atoms)
    np.testing.assert_allclose(EA, mean_rows, atol=1e-14)
    # realized rows are mean rows divided by their inclusion probability
    np.testing.assert_allclose(s.base_rows[0], [2.0, -2.0, 0.0])


def test_bernoulli_edge_sampler_monte_carlo_mean():
    mean_rows = np.array([[1.0, 0.0], [0.0, -2.0], [0.5, 0.5]])
    probs = np.array([0.9, 0.3, 0.6])
    s = BernoulliEdgeSampler(mean_rows, np.zeros(3), probs, rng=SeededRng(51))
    acc = np.zeros_like(mean_rows)
    n = 40000
    for _ in range(n):
        A, _ = s.sample()
        acc += A
    np.testing.assert_allclose(acc / n, mean_rows, atol=0.05)


def test_bernoulli_enumeration_cap():
    rows = np.eye(15)
    s = BernoulliEdgeSampler(rows, np.zeros(15), np.full(15, 0.5))
    with pytest.raises(ValueError, match="cap"):
        s.atoms()


def test_bernoulli_row_groups_toggle_together():
    # two "edges", each contributing two stacked rows (think W kron I_2)
    mean_rows = np.array(
        [[0.5, 0.0, -0.5, 0.0],
         [0.0, 0.5, 0.0, -0.5],
         [0.25, 0.0, 0.25, 0.0],
         [0.0, 0.25, 0.0, 0.25]]
    )
    s = BernoulliEdgeSampler(
        mean_rows, np.zeros(4), np.array([0.5, 0.25]),
        row_groups=[0, 0, 1, 1], rng=SeededRng(61),
    )
    for _ in range(200):
        A, _ = s.sample()
        on0 = np.any(A[0] != 0.0), np.any(A[1] != 0.0)
        on1 = np.any(A[2] != 0.0), np.any(A[3] != 0.0)
        assert on0[0] == on0[1]  # rows of one edge live or die as a unit
        assert on1[0] == on1[1]
    # enumeration runs over groups (4 atoms, not 16) and still averages to mean
    atoms = s.atoms()
    assert len(atoms) == 4
    EA = sum(p * A for p, A, _ in atoms)
    np.testing.assert_allclose(EA, mean_rows, atol=1e-14)
    # realized rows rescale by the *group* probability
    np.testing.assert_allclose(s.base_rows[3], [0.0, 1.0, 0.0, 1.0])


def test_bernoulli_row_groups_validation():
    rows = np.eye(3)
    with pytest.raises(ValueError, match="per row"):
        BernoulliEdgeSampler(rows, np.zeros(3), [0.5], row_groups=[0, 0])
    with pytest.raises(ValueError, match="no gaps"):
        BernoulliEdgeSampler(rows, np.zeros(3), [0.5, 0.5], row_groups=[0, 2, 2])
    with pytest.raises(ValueError, match="per row group"):
        BernoulliEdgeSampler(rows, np.zeros(3), [0.5, 0.5, 0.5], row_groups=[0, 1, 1])


def test_finite_atom_sampler_validation():
    with pytest.raises(ValueError):
        FiniteAtomSampler([[[1.0]]], [[0.0]], probs=[0.4])  # probs don't sum to 1
    with pytest.raises(ValueError):
        FiniteAtomSampler([], [])


def test_gaussian_sampler_is_unbiased_and_unenumerable():
    mean_A = np.array([[1.0, -2.0], [0.0, 3.0]])
    mean_b = np.array([0.5, -0.5])
    scale = 0.7
    s = GaussianConstraintSampler(mean_A, mean_b, scale, rng=SeededRng(71))
    n = 20000
    acc_A, acc_b = np.zeros_like(mean_A), np.zeros_like(mean_b)
    prev = None
    for _ in range(n):
        A, b = s.sample()
        acc_A += A
        acc_b += b
        assert prev is None or not np.array_equal(A, prev)  # continuous support
        prev = A
    se = 4 * scale / np.sqrt(n)
    np.testing.assert_allclose(acc_A / n, mean_A, atol=se)
    np.testing.assert_allclose(acc_b / n, mean_b, atol=se)
    with pytest.raises(NotImplementedError):
        s.atoms()
    with pytest.raises(ValueError, match="nonnegative"):
        GaussianConstraintSampler(mean_A, mean_b, -0.1)
