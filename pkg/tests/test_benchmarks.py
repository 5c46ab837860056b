"""Benchmark generator tests.

Frozen values first (hand-derived rows, gradients, and loss evaluations),
then the structural invariants every family must satisfy: certified
feasible points, declared smoothness constants that survive a sampled
Lipschitz audit, unbiased constraint sampling, and document round-trips.
"""

import numpy as np
import pytest

from spal.benchmarks import (
    BenchmarkInstance,
    finite_sum_oracle,
    gen_consensus,
    gen_fair_classification,
    gen_network_slicing,
    gen_nonconvex_qp,
    generate,
    logistic_difference,
    logistic_difference_grad,
    make_instance,
    smoothed01,
    smoothed01_grad,
    synthetic_classification,
)
from spal.core import SeededRng
from spal.diagnostics import stationarity_residual
from spal.geometry import PolyhedralSet, violation
from spal.problem import ConstrainedProblem, QuadraticObjective, problem_from_dict, problem_to_dict

ALL_FAMILIES = [
    ("nonconvex_qp", dict(n=8, m=3, seed=11)),
    ("consensus", dict(N=4, n=2, p=0.6, seed=12)),
    ("network_slicing", dict(flows=2, seed=13)),
    ("fair_classification", dict(n_samples=50, dim=4, seed=14)),
]


# ---------------------------------------------------------------------------
# nonconvex QP
# ---------------------------------------------------------------------------


def test_qp_is_indefinite_with_exact_smoothness():
    inst = gen_nonconvex_qp(6, 2, seed=3)
    eigs = inst.metadata["eigenvalues"]
    assert eigs.min() < 0, "curvature must be negative somewhere"
    assert inst.metadata["L_f"] == pytest.approx(np.max(np.abs(eigs)), rel=1e-12)
    # declared constant agrees with an independent eigendecomposition
    Q = inst.problem.objective.as_quadratic()[0]
    w = np.linalg.eigvalsh(Q)
    assert inst.metadata["L_f"] == pytest.approx(np.max(np.abs(w)), rel=1e-9)


def test_qp_feasible_point_and_scaling():
    inst = gen_nonconvex_qp(10, 4, seed=7)
    P = inst.problem
    assert np.linalg.norm(P.residual(inst.x_feas)) <= 1e-9
    assert violation(P.domain, inst.x_feas) <= 1e-9
    assert np.linalg.matrix_rank(P.A) == 4
    assert P.norm_A == pytest.approx(1.0, abs=1e-6)
    # lower bound really is a lower bound on a sample of box points
    rng = SeededRng(0)
    for _ in range(200):
        x = P.domain.sample_point(rng)
        assert P.objective.value(x) >= P.objective.f_lower


def test_qp_hand_instance_stationary_on_constraint_line():
    # f = (x1^2 - x2^2)/2 restricted to x1 = 0 in a box: the origin is the
    # interior stationary point; the box rim absorbs the runaway direction
    obj = QuadraticObjective(np.diag([1.0, -1.0]), np.zeros(2), l_f=1.0)
    prob = ConstrainedProblem(obj, [[1.0, 0.0]], [0.0],
                              PolyhedralSet.box([-2.0, -2.0], [2.0, 2.0]))
    at = lambda x2: stationarity_residual(prob, np.array([0.0, x2]), np.zeros(1)).norm
    assert at(0.0) == pytest.approx(0.0, abs=1e-12)
    assert at(2.0) == pytest.approx(0.0, abs=1e-12)   # rim: normal cone takes it
    assert at(1.0) > 0.5                               # strictly between: not stationary


def test_qp_rejects_bad_shapes():
    with pytest.raises(ValueError):
        gen_nonconvex_qp(3, 5)
    with pytest.raises(ValueError):
        gen_nonconvex_qp(3, 0)


# ---------------------------------------------------------------------------
# consensus
# ---------------------------------------------------------------------------


def test_consensus_mean_row_scales_with_edge_probability():
    inst = gen_consensus(2, 1, p=0.5, seed=0)
    np.testing.assert_allclose(inst.problem.A, [[0.5, -0.5]])
    # a consensus point satisfies the constraint regardless of scaling
    np.testing.assert_allclose(inst.problem.A @ np.array([1.0, 1.0]), [0.0])


def test_consensus_path_graph_incidence_rows():
    inst = gen_consensus(3, 1, p=1.0, edges=[(0, 1), (1, 2)], seed=0)
    np.testing.assert_allclose(inst.problem.A,
                               [[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])


def test_consensus_blocks_expand_per_coordinate():
    inst = gen_consensus(2, 2, p=1.0, seed=1)
    np.testing.assert_allclose(
        inst.problem.A,
        [[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]],
    )


def test_consensus_disconnected_support_rejected():
    with pytest.raises(ValueError, match="disconnected"):
        gen_consensus(4, 1, p=0.8, edges=[(0, 1), (2, 3)], seed=0)


def test_consensus_sampler_edges_fire_jointly():
    inst = gen_consensus(4, 3, p=0.5, seed=21)
    s = inst.sampler
    n = 3
    rng = SeededRng(99)
    saw_on = saw_off = False
    for _ in range(100):
        A, b = s.sample(rng)
        np.testing.assert_allclose(b, 0.0)
        for k in range(s.n_groups):
            block = A[k * n:(k + 1) * n]
            on = np.any(block != 0.0, axis=1)
            assert on.all() or not on.any(), "edge rows must toggle as one"
            saw_on |= bool(on.all())
            saw_off |= bool(not on.any())
    assert saw_on and saw_off  # p=0.5 actually exercised both branches


def test_consensus_sampler_unbiased_monte_carlo():
    inst = gen_consensus(3, 2, p=0.6, seed=5)
    s = inst.sampler
    n_draws = 10_000
    rng = SeededRng(123)
    acc = np.zeros_like(inst.problem.A)
    for _ in range(n_draws):
        A, _ = s.sample(rng)
        acc += A
    mean = acc / n_draws
    # entrywise 4 std-err: entries are scaled Bernoullis with known variance
    base = s.base_rows
    p_row = s.probs[s.groups][:, None]
    se = np.sqrt(np.abs(base) ** 2 * p_row * (1 - p_row) / n_draws)
    assert np.all(np.abs(mean - inst.problem.A) <= 4 * se + 1e-12)


def test_consensus_known_optimum_is_consensus_stationary():
    inst = gen_consensus(5, 2, p=0.7, seed=8)
    x_opt = inst.metadata["x_opt"]
    P = inst.problem
    assert np.linalg.norm(P.residual(x_opt)) <= 1e-9
    # along the consensus manifold the averaged local gradients cancel
    g = P.objective.grad(x_opt).reshape(5, 2)
    np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-10)
    # and it really is the minimum over sampled consensus points
    v = inst.metadata["v_star"]
    f_opt = P.objective.value(x_opt)
    rng = SeededRng(3)
    for _ in range(50):
        other = np.tile(v + 0.5 * rng.standard_normal(2), 5)
        assert P.objective.value(other) >= f_opt - 1e-12


def test_consensus_objective_is_average_of_local_costs():
    Ps = np.stack([np.eye(2), 2.0 * np.eye(2)])
    cs = np.array([[1.0, 0.0], [0.0, 1.0]])
    inst = gen_consensus(2, 2, p=1.0, local=(Ps, cs), seed=0)
    x = np.array([1.0, 2.0, 3.0, 4.0])
    by_hand = 0.5 * (0.5 * ((x[:2] - cs[0]) @ Ps[0] @ (x[:2] - cs[0]))
                     + 0.5 * ((x[2:] - cs[1]) @ Ps[1] @ (x[2:] - cs[1])))
    assert inst.problem.objective.value(x) == pytest.approx(by_hand, rel=1e-12)
    assert inst.metadata["L_f"] == pytest.approx(1.0)  # max ||P_i|| / N = 2/2
    # explicit local costs carry no recipe but still serialize inline
    d = problem_to_dict(inst.problem)
    assert "family" not in d
    P2 = problem_from_dict(d)
    assert P2.objective.value(x) == pytest.approx(inst.problem.objective.value(x))


def test_consensus_finite_sum_atoms_average_to_gradient():
    inst = gen_consensus(4, 2, p=0.5, seed=6)
    oracle = finite_sum_oracle(inst, rng=SeededRng(1))
    rng = SeededRng(2)
    for _ in range(5):
        x = inst.problem.domain.sample_point(rng)
        atoms = [oracle.atom_grad(i, x) for i in range(oracle.n_atoms)]
        np.testing.assert_allclose(np.mean(atoms, axis=0), oracle.mean(x), atol=1e-12)
        scatter = max(float(np.sum((a - oracle.mean(x)) ** 2)) for a in atoms)
        assert scatter <= oracle.sigma2


def test_consensus_validation():
    with pytest.raises(ValueError, match="two agents"):
        gen_consensus(1, 2)
    with pytest.raises(ValueError, match="probabilities"):
        gen_consensus(3, 1, p=0.0)
    with pytest.raises(ValueError, match="distinct"):
        gen_consensus(3, 1, edges=[(0, 0), (0, 1), (1, 2)])


# ---------------------------------------------------------------------------
# network slicing
# ---------------------------------------------------------------------------


def test_slicing_penalty_gradient_frozen_values():
    # d/dx (x+eps)^p = p (x+eps)^(p-1):  p=1/2, eps=1, x=0  -> 0.5
    inst = gen_network_slicing(flows=1, p=0.5, eps_reg=1.0, seed=2)
    r_dim = inst.metadata["r_dim"]
    v = np.zeros(inst.problem.dim)
    g = inst.problem.objective.grad(v)
    np.testing.assert_allclose(g[:r_dim], 1.0)
    np.testing.assert_allclose(g[r_dim:], 0.5)
    #                           p=1/2, eps=0.1, x=0.9 -> 0.5 * 1.0^(-1/2) = 0.5
    inst2 = gen_network_slicing(flows=1, p=0.5, eps_reg=0.1, seed=2)
    v2 = np.zeros(inst2.problem.dim)
    v2[inst2.metadata["r_dim"]:] = 0.9
    np.testing.assert_allclose(
        inst2.problem.objective.grad(v2)[inst2.metadata["r_dim"]:], 0.5, rtol=1e-12
    )


def test_slicing_one_hot_placement_pays_no_penalty():
    inst = gen_network_slicing(flows=3, seed=4, sigma_pen=2.5)
    xf = inst.x_feas
    r_dim = inst.metadata["r_dim"]
    # penalty offset is built so a committed (one-hot) placement cancels it
    assert inst.problem.objective.value(xf) == pytest.approx(
        float(np.sum(xf[:r_dim])), abs=1e-12
    )
    # spreading the placement strictly increases the penalty part
    spread = xf.copy()
    k0 = slice(r_dim, r_dim + inst.metadata["n_sites"])
    spread[k0] = 1.0 / inst.metadata["n_sites"]
    assert inst.problem.objective.value(spread) > inst.problem.objective.value(xf)


def test_slicing_feasible_point_routes_unit_demand():
    inst = gen_network_slicing(flows=3, nodes=7, extra_links=4, seed=9)
    P = inst.problem
    assert np.linalg.norm(P.residual(inst.x_feas)) <= 1e-9
    assert violation(P.domain, inst.x_feas) <= 1e-9
    # breaking one path link breaks conservation
    broken = inst.x_feas.copy()
    k, path = 0, inst.metadata["paths"][0]
    broken[k * len(inst.metadata["links"]) + path[0]] = 0.0
    assert np.linalg.norm(P.residual(broken)) > 0.5


def test_slicing_curvature_peaks_at_zero_placement():
    inst = gen_network_slicing(flows=1, p=0.3, eps_reg=0.2, sigma_pen=1.5, seed=0)
    i = inst.metadata["r_dim"]  # first placement coordinate
    h = 1e-6
    e = np.zeros(inst.problem.dim)
    e[i] = 1.0
    g0 = inst.problem.objective.grad(np.zeros_like(e))[i]
    gh = inst.problem.objective.grad(h * e)[i]
    assert abs(gh - g0) / h == pytest.approx(inst.metadata["L_f"], rel=1e-4)


def test_slicing_lower_bound_attained_shape():
    inst = gen_network_slicing(flows=2, p=0.5, eps_reg=0.5, seed=1)
    f_low = inst.problem.objective.f_lower
    # zero rates, zero placements achieve exactly the bound
    assert inst.problem.objective.value(np.zeros(inst.problem.dim)) == pytest.approx(
        f_low, rel=1e-12
    )


def test_slicing_validation():
    for bad in (dict(p=0.0), dict(p=1.0), dict(eps_reg=0.0), dict(cap=0.5),
                dict(nodes=2), dict(n_sites=99)):
        with pytest.raises(ValueError):
            gen_network_slicing(**bad)


# ---------------------------------------------------------------------------
# fair classification: losses
# ---------------------------------------------------------------------------


def test_smoothed01_frozen_values():
    assert smoothed01(0.0) == pytest.approx(0.5)
    assert smoothed01(2.0) == 0.0
    assert smoothed01(-2.0) == 1.0
    assert smoothed01(1.0) == pytest.approx(0.0, abs=1e-15)
    assert smoothed01(-1.0) == pytest.approx(1.0, abs=1e-15)


def test_smoothed01_is_c1_at_the_seams():
    # values and one-sided difference quotients agree at s = +-1
    for seam in (-1.0, 1.0):
        h = 1e-7
        left = (smoothed01(seam) - smoothed01(seam - h)) / h
        right = (smoothed01(seam + h) - smoothed01(seam)) / h
        assert abs(left - right) <= 1e-6
        assert smoothed01_grad(seam) == 0.0


def test_smoothed01_gradient_matches_quotients():
    rng = SeededRng(4)
    s = rng.uniform(-3, 3, 100)
    h = 1e-6
    fd = (smoothed01(s + h) - smoothed01(s - h)) / (2 * h)
    np.testing.assert_allclose(smoothed01_grad(s), fd, atol=1e-6)


def test_logistic_difference_frozen_values():
    assert logistic_difference(0.0, 1.0) == pytest.approx(
        np.log(2.0) - np.log1p(np.exp(-1.0))
    )
    assert logistic_difference(0.0, 1.0) == pytest.approx(0.37989, abs=1e-5)
    np.testing.assert_allclose(logistic_difference([-5.0, 0.0, 8.0], 0.0), 0.0)


def test_logistic_difference_gradient_matches_quotients():
    rng = SeededRng(5)
    s = rng.uniform(-10, 10, 100)
    h = 1e-6
    fd = (logistic_difference(s + h, 2.0) - logistic_difference(s - h, 2.0)) / (2 * h)
    np.testing.assert_allclose(logistic_difference_grad(s, 2.0), fd, atol=1e-6)


def test_logistic_difference_stable_for_huge_margins():
    vals = logistic_difference(np.array([-1e3, 1e3]), 1.0)
    assert np.all(np.isfinite(vals))
    grads = logistic_difference_grad(np.array([-1e3, 1e3]), 1.0)
    assert np.all(np.isfinite(grads))


# ---------------------------------------------------------------------------
# fair classification: generator
# ---------------------------------------------------------------------------


def test_fair_covariance_vector_frozen():
    data = {"X": np.array([[1.0, 0.0], [0.0, 1.0]]),
            "y": np.array([1.0, -1.0]),
            "z": np.array([0.0, 1.0])}
    inst = gen_fair_classification(dataset=data, c_cov=0.1, seed=0)
    np.testing.assert_allclose(inst.metadata["a"], [-0.25, 0.25])
    # constraint rows are [a; -a] with slack columns appended
    A = inst.problem.A
    np.testing.assert_allclose(A[0, :2], [-0.25, 0.25])
    np.testing.assert_allclose(A[1, :2], [0.25, -0.25])
    np.testing.assert_allclose(A[:, 2:], -np.eye(2))


def test_fair_feasible_point_and_slack_geometry():
    inst = gen_fair_classification(n_samples=40, dim=3, seed=2, c_cov=0.05)
    P = inst.problem
    assert np.linalg.norm(P.residual(inst.x_feas)) <= 1e-12
    assert violation(P.domain, inst.x_feas) <= 1e-12
    # slacks do not enter the objective
    v = P.domain.sample_point(SeededRng(0))
    g = P.objective.grad(v)
    np.testing.assert_allclose(g[-2:], 0.0)
    assert P.objective.f_lower == 0.0


def test_fair_constant_sensitive_attribute_warns():
    data = synthetic_classification(30, 3, seed=1)
    data["z"] = np.ones(30)
    with pytest.warns(UserWarning, match="vacuous"):
        inst = gen_fair_classification(dataset=data, seed=1)
    np.testing.assert_allclose(inst.metadata["a"], 0.0, atol=1e-15)


def test_fair_atoms_average_to_gradient():
    inst = gen_fair_classification(n_samples=25, dim=3, seed=3,
                                   loss="logistic_difference")
    oracle = finite_sum_oracle(inst, rng=SeededRng(0))
    v = inst.problem.domain.sample_point(SeededRng(1))
    atoms = [oracle.atom_grad(i, v) for i in range(oracle.n_atoms)]
    np.testing.assert_allclose(np.mean(atoms, axis=0), oracle.mean(v), atol=1e-12)
    scatter = max(float(np.sum((a - oracle.mean(v)) ** 2)) for a in atoms)
    assert scatter <= oracle.sigma2


def test_fair_labels_validated():
    data = synthetic_classification(20, 2, seed=0)
    data["y"] = np.arange(20.0)
    with pytest.raises(ValueError, match="labels"):
        gen_fair_classification(dataset=data)
    with pytest.raises(ValueError, match="loss"):
        gen_fair_classification(n_samples=10, dim=2, loss="hinge")


def test_fair_convex_substitute_agrees_with_projected_gradient():
    # with the plain convex logistic loss the lifted solve and a direct
    # projected-gradient method on the original two-sided cap must land on
    # the same point
    from spal.oracles import ExactOracle
    from spal.solvers import SolverParams, run_alg1

    inst = gen_fair_classification(n_samples=40, dim=3, seed=5, loss="logistic",
                                   c_cov=0.02, theta_bound=5.0)
    P = inst.problem
    d = 3
    params = SolverParams(rho=20.0, tau=0.05, eta=0.5, beta=0.05, mu=2 * P.objective.l_f + 0.5,
                          lam=1.0, T=40_000)
    res = run_alg1(P, ExactOracle(P.objective), params, seed=0)
    theta_hat = res.state.x[:d]

    # independent baseline: projected gradient on theta alone, projecting
    # onto box /\ {|a.theta| <= c} by alternating projections
    a = inst.metadata["a"]
    data = inst.metadata["dataset"]
    X, y = data["X"], data["y"]

    def grad(theta):
        s = y * (X @ theta)
        sig = 0.5 * (1 + np.tanh(-0.5 * s))
        return X.T @ (-sig * y) / len(y)

    def proj(theta):
        t = theta.copy()
        for _ in range(200):
            t = np.clip(t, -5.0, 5.0)
            dot = a @ t
            if abs(dot) > 0.02:
                t -= (dot - np.sign(dot) * 0.02) * a / (a @ a)
        return t

    theta = np.zeros(d)
    for _ in range(20_000):
        theta = proj(theta - 0.5 * grad(theta))

    assert np.linalg.norm(theta_hat - theta) <= 1e-4 * (1 + np.linalg.norm(theta))
    assert abs(a @ theta_hat) <= 0.02 + 1e-6


# ---------------------------------------------------------------------------
# cross-family invariants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("family,kw", ALL_FAMILIES)
def test_feasible_point_certified(family, kw):
    inst = make_instance(family, **kw)
    assert np.linalg.norm(inst.problem.residual(inst.x_feas)) <= 1e-9
    assert violation(inst.problem.domain, inst.x_feas) <= 1e-9
    for key in ("L_f", "L_0", "x_feas", "seed"):
        assert key in inst.metadata


@pytest.mark.parametrize("family,kw", ALL_FAMILIES)
def test_declared_smoothness_survives_sampled_audit(family, kw):
    inst = make_instance(family, **kw)
    P = inst.problem
    L = inst.metadata["L_f"]
    rng = SeededRng(2024)
    worst = 0.0
    for _ in range(1000):
        u = P.domain.sample_point(rng)
        v = P.domain.sample_point(rng)
        gap = np.linalg.norm(u - v)
        if gap < 1e-12:
            continue
        ratio = np.linalg.norm(P.objective.grad(u) - P.objective.grad(v)) / gap
        worst = max(worst, ratio)
    assert worst <= L * (1 + 1e-7), f"{family}: sampled ratio {worst} exceeds {L}"


@pytest.mark.parametrize("family,kw", ALL_FAMILIES)
def test_generators_are_pure_in_their_seed(family, kw):
    a, b = make_instance(family, **kw), make_instance(family, **kw)
    np.testing.assert_array_equal(a.problem.A, b.problem.A)
    np.testing.assert_array_equal(a.problem.b, b.problem.b)
    np.testing.assert_array_equal(a.x_feas, b.x_feas)
    x = a.problem.domain.sample_point(SeededRng(0))
    assert a.problem.objective.value(x) == b.problem.objective.value(x)


@pytest.mark.parametrize("family,kw", ALL_FAMILIES)
def test_recipe_roundtrips_through_documents(family, kw):
    inst = make_instance(family, **kw)
    P = inst.problem
    P2 = problem_from_dict(problem_to_dict(P))
    np.testing.assert_allclose(P.A, P2.A, atol=1e-15)
    np.testing.assert_allclose(P.b, P2.b, atol=1e-15)
    rng = SeededRng(1)
    for _ in range(5):
        x = P.domain.sample_point(rng)
        assert P.objective.value(x) == pytest.approx(P2.objective.value(x), rel=1e-12)
        np.testing.assert_allclose(P.objective.grad(x), P2.objective.grad(x), atol=1e-12)


def test_dispatch_rejects_unknown_family():
    with pytest.raises(ValueError, match="unknown benchmark family"):
        generate("knapsack", n=3)


def test_finite_sum_oracle_requires_structure():
    inst = gen_nonconvex_qp(4, 2, seed=0)
    with pytest.raises(ValueError, match="finite-sum"):
        finite_sum_oracle(inst)


def test_instance_container_shape():
    inst = gen_consensus(3, 1, seed=0)
    assert isinstance(inst, BenchmarkInstance)
    assert inst.sampler is not None
    assert inst.problem.meta["family"] == "consensus"
