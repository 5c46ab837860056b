"""Benchmark problem generators.

Four families, each emitting a :class:`BenchmarkInstance` — a
:class:`~spal.problem.ConstrainedProblem` plus the metadata a harness needs
(smoothness constants, a certified feasible point, the generator seed, and,
where the structure provides one, a known solution or a constraint sampler):

* ``nonconvex_qp`` — indefinite quadratic over a box with random equalities;
  the canonical synthetic family.
* ``consensus`` — multi-agent agreement: block objective
  ``(1/N) sum_i f_i(x_i)`` with edge constraints ``x_i = x_j`` written
  through an incidence matrix, plus a Bernoulli edge sampler for the
  sampled-constraint solver.
* ``network_slicing`` — flow routing with a concave-power placement
  penalty ``(x+eps)^p``, ``p in (0,1)``: linear conservation equalities and
  a genuinely nonconvex smooth objective.
* ``fair_classification`` — linear classifier under a covariance fairness
  cap, rewritten to equality form with slacks; ships two nonconvex losses
  and a plain convex logistic for cross-checking.

Generators are pure functions of their arguments: the same ``seed`` yields
the same instance, bit for bit.  Instances built from the default knobs tag
``problem.meta`` with their recipe so the document serializer can rebuild
them by re-running the generator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import SeededRng, as_matrix, as_vector, kron_identity, operator_norm
from .geometry import PolyhedralSet, project
from .oracles import BernoulliEdgeSampler, FiniteSumOracle
from .problem import (
    ConstrainedProblem,
    ObjectiveModel,
    QuadraticObjective,
    reformulate_inequality,
)

__all__ = [
    "BenchmarkInstance",
    "gen_nonconvex_qp",
    "gen_consensus",
    "gen_network_slicing",
    "gen_fair_classification",
    "make_instance",
    "generate",
    "finite_sum_oracle",
    "smoothed01",
    "smoothed01_grad",
    "logistic_difference",
    "logistic_difference_grad",
    "synthetic_classification",
]


@dataclass
class BenchmarkInstance:
    """A generated problem plus everything a harness needs to drive it.

    ``metadata`` always carries ``L_f`` (objective smoothness), ``L_0``
    (per-ticket smoothness for stochastic oracles; equals ``L_f`` when the
    family has no finer structure), ``x_feas`` (a point satisfying both the
    equalities and the set to high accuracy), and ``seed``.  Families with a
    known solution add ``x_opt``; the consensus family also fills
    ``sampler``.
    """

    problem: ConstrainedProblem
    sampler: BernoulliEdgeSampler | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def x_feas(self) -> np.ndarray:
        return self.metadata["x_feas"]


def _tag(problem: ConstrainedProblem, family: str, params: dict) -> None:
    problem.meta["family"] = family
    problem.meta["params"] = params


# ---------------------------------------------------------------------------
# nonconvex QP
# ---------------------------------------------------------------------------


def gen_nonconvex_qp(n: int, m: int, seed: int = 0, half: float = 10.0) -> BenchmarkInstance:
    """Indefinite quadratic over ``Box[-half, half]^n`` with ``m`` random
    equalities.

    ``Q = U diag(e) U'`` with orthonormal ``U`` and eigenvalues ``e`` drawn
    from ``[-1, 1]`` (the first forced negative, so the problem is never
    convex); the declared smoothness ``max |e_i|`` is therefore exact, not
    an estimate.  ``A`` is Gaussian, rescaled to unit operator norm, and
    ``b = A x_feas`` for a sampled interior point, so feasibility is
    guaranteed by construction.
    """
    n, m = int(n), int(m)
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = SeededRng(seed)
    eigs = rng.uniform(-1.0, 1.0, n)
    eigs[0] = -rng.uniform(0.1, 1.0)  # at least one direction of negative curvature
    U = np.linalg.qr(rng.standard_normal((n, n)))[0]
    Q = U @ np.diag(eigs) @ U.T
    Q = 0.5 * (Q + Q.T)
    c = rng.standard_normal(n)
    l_f = float(np.max(np.abs(eigs)))

    A = rng.standard_normal((m, n))
    for _ in range(100):
        if np.linalg.matrix_rank(A) == m:
            break
        A = rng.standard_normal((m, n))
    else:
        raise RuntimeError("could not draw a full-row-rank constraint matrix")
    A /= operator_norm(A)

    x_feas = rng.uniform(-0.5 * half, 0.5 * half, n)
    b = A @ x_feas

    radius = half * np.sqrt(n)  # max ||x|| over the box
    f_lower = -(0.5 * l_f * radius**2 + float(np.linalg.norm(c)) * radius)
    obj = QuadraticObjective(Q, c, l_f=l_f, f_lower=f_lower, name="nonconvex_qp")
    domain = PolyhedralSet.box(np.full(n, -half), np.full(n, half))
    problem = ConstrainedProblem(obj, A, b, domain, name=f"nonconvex_qp[n={n},m={m}]")
    _tag(problem, "nonconvex_qp", {"n": n, "m": m, "seed": int(seed), "half": float(half)})

    meta = {
        "L_f": l_f,
        "L_0": l_f,
        "x_feas": x_feas,
        "seed": int(seed),
        "eigenvalues": eigs,
    }
    return BenchmarkInstance(problem=problem, sampler=None, metadata=meta)


# ---------------------------------------------------------------------------
# distributed consensus
# ---------------------------------------------------------------------------


def _connected(n_nodes: int, edges) -> bool:
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    return len({find(v) for v in range(n_nodes)}) == 1


def gen_consensus(N: int, n: int, p: float = 0.5, seed: int = 0, half: float = 5.0,
                  edges=None, local=None) -> BenchmarkInstance:
    """Agreement of ``N`` agents, each holding a block ``x_i`` of dimension
    ``n`` and a strongly convex local cost ``(1/2)(x_i-c_i)' P_i (x_i-c_i)``.

    Every support edge ``(i, j)`` contributes ``n`` equality rows
    ``x_i - x_j = 0``; the *mean* matrix scales those rows by the edge's
    activation probability, and the attached sampler realizes each step's
    edge set with one Bernoulli coin per edge (all ``n`` rows of an edge
    fire together).  ``edges=None`` uses the complete graph; an explicit
    edge list must span a connected support or the constraints cannot force
    agreement.

    ``local`` optionally supplies the costs as a pair of stacked arrays
    ``(Ps, cs)`` of shapes ``(N, n, n)`` / ``(N, n)``; such instances carry
    no generator recipe (the arrays themselves serialize, the knobs do not).
    """
    N, n = int(N), int(n)
    if N < 2:
        raise ValueError("consensus needs at least two agents")
    if edges is None:
        edges = [(i, j) for i in range(N) for j in range(i + 1, N)]
    edges = [(int(i), int(j)) for i, j in edges]
    if any(not 0 <= i < N or not 0 <= j < N or i == j for i, j in edges):
        raise ValueError("edges must join distinct agents in range")
    n_edges = len(edges)
    probs = np.broadcast_to(np.asarray(p, dtype=float), (n_edges,)).copy()
    if np.any(probs <= 0) or np.any(probs > 1):
        raise ValueError("edge probabilities must lie in (0, 1]")
    if not _connected(N, edges):
        raise ValueError(
            "support graph is disconnected: consensus is unattainable"
        )

    rng = SeededRng(seed)
    if local is None:
        Ps = np.empty((N, n, n))
        centers = rng.standard_normal((N, n))
        for i in range(N):
            V = np.linalg.qr(rng.standard_normal((n, n)))[0]
            Ps[i] = V @ np.diag(rng.uniform(0.5, 1.5, n)) @ V.T
            Ps[i] = 0.5 * (Ps[i] + Ps[i].T)
    else:
        Ps = np.ascontiguousarray(local[0], dtype=float)
        centers = np.ascontiguousarray(local[1], dtype=float)
        if Ps.shape != (N, n, n) or centers.shape != (N, n):
            raise ValueError("local costs must be stacked as (N,n,n) and (N,n)")

    # mean incidence: row k carries +p_k at agent i, -p_k at agent j
    W_mean = np.zeros((n_edges, N))
    for k, (i, j) in enumerate(edges):
        W_mean[k, i] = probs[k]
        W_mean[k, j] = -probs[k]
    A = kron_identity(W_mean, n)
    b = np.zeros(n_edges * n)

    dim = N * n
    Q = np.zeros((dim, dim))
    c = np.zeros(dim)
    constant = 0.0
    norms = np.empty(N)
    for i in range(N):
        sl = slice(i * n, (i + 1) * n)
        Q[sl, sl] = Ps[i] / N
        c[sl] = -(Ps[i] @ centers[i]) / N
        constant += 0.5 * float(centers[i] @ Ps[i] @ centers[i]) / N
        norms[i] = operator_norm(Ps[i])
    l_f = float(norms.max()) / N
    obj = QuadraticObjective(Q, c, constant=constant, l_f=l_f, f_lower=0.0,
                             name="consensus")

    domain = PolyhedralSet.box(np.full(dim, -half), np.full(dim, half))
    x0 = project(domain, centers.reshape(-1))  # agents start at their own targets
    problem = ConstrainedProblem(obj, A, b, domain, x0=x0,
                                 name=f"consensus[N={N},n={n}]")
    if local is None:
        params = {"N": N, "n": n,
                  "p": float(p) if np.ndim(p) == 0 else np.asarray(p).tolist(),
                  "seed": int(seed), "half": float(half)}
        if edges != [(i, j) for i in range(N) for j in range(i + 1, N)]:
            params["edges"] = [list(e) for e in edges]
        _tag(problem, "consensus", params)

    # every realized row is a plain +1/-1 incidence row; over the box each
    # edge residual is at most 2*half*sqrt(n)
    res_bound = 2.0 * half * np.sqrt(n) * np.sqrt(n_edges)
    sampler = BernoulliEdgeSampler(
        A, b, probs, second_moment_bound=res_bound,
        row_groups=np.repeat(np.arange(n_edges), n), rng=SeededRng(seed).child(2),
    )

    # per-agent atoms of the finite sum (atom i = the i-th local cost, so the
    # uniform average over atoms reproduces the global objective)
    atom_Qs = np.zeros((N, dim, dim))
    atom_cs = np.zeros((N, dim))
    for i in range(N):
        sl = slice(i * n, (i + 1) * n)
        atom_Qs[i, sl, sl] = Ps[i]
        atom_cs[i, sl] = -Ps[i] @ centers[i]
    grad_reach = float(norms.max()) * (half * np.sqrt(n) + float(np.abs(centers).max()) * np.sqrt(n))

    v_star = np.linalg.solve(Ps.sum(axis=0), np.einsum("ijk,ik->j", Ps, centers))
    meta = {
        "L_f": l_f,
        "L_0": float(norms.max()),
        "x_feas": np.zeros(dim),
        "seed": int(seed),
        "edges": edges,
        "edge_probs": probs,
        "centers": centers,
        "atom_Qs": atom_Qs,
        "atom_cs": atom_cs,
        "atom_sigma2": (2.0 * grad_reach) ** 2,
    }
    if np.max(np.abs(v_star)) < half - 1e-6:
        meta["x_opt"] = np.tile(v_star, N)
        meta["v_star"] = v_star
    return BenchmarkInstance(problem=problem, sampler=sampler, metadata=meta)


# ---------------------------------------------------------------------------
# network slicing (flow routing + placement penalty)
# ---------------------------------------------------------------------------


def gen_network_slicing(flows: int = 3, nodes: int = 6, extra_links: int = 3,
                        p: float = 0.5, eps_reg: float = 0.1,
                        sigma_pen: float = 1.0, seed: int = 0,
                        cap: float = 2.0, n_sites: int = 3) -> BenchmarkInstance:
    """Route ``flows`` unit demands over a small random digraph and place one
    function per flow on one of ``n_sites`` candidate nodes.

    Variables are ``[r; x]``: per-(flow, link) rates and per-(flow, site)
    placement fractions.  Equalities are flow conservation at every node
    except each flow's destination (one unit injected at the source) plus
    one simplex row per flow tying its placement fractions to 1 — the
    simplex stays an equality on purpose, because the penalty's offset
    ``c_eps = (1+eps)^p + (sites-1) * eps^p`` cancels exactly on one-hot
    placements only when the fractions sum to one.

    The objective is total rate plus ``sigma_pen`` times the concave-power
    penalty ``sum ((x_i+eps)^p) - c_eps`` per flow, which rewards committing
    to a single site; ``p in (0,1)`` makes it smooth but nonconvex, with
    curvature peaking at ``x = 0`` where ``|d2/dx2| = p(1-p) eps^(p-2)``.
    """
    flows, nodes, extra_links, n_sites = int(flows), int(nodes), int(extra_links), int(n_sites)
    if not 0.0 < p < 1.0:
        raise ValueError("the penalty exponent must lie strictly inside (0, 1)")
    if eps_reg <= 0.0:
        raise ValueError("eps_reg must be positive: at 0 the penalty gradient "
                         "is unbounded at the box boundary")
    if nodes < 3 or flows < 1 or n_sites < 1 or n_sites > nodes:
        raise ValueError("need nodes >= 3, flows >= 1, 1 <= n_sites <= nodes")
    if cap < 1.0:
        raise ValueError("link capacity below 1 leaves no room for a unit demand")

    rng = SeededRng(seed)
    links = [(v, (v + 1) % nodes) for v in range(nodes)]  # directed ring: connected
    have = set(links)
    tries = 0
    while len(links) < nodes + extra_links and tries < 200:
        u, v = int(rng.integers(0, nodes)), int(rng.integers(0, nodes))
        tries += 1
        if u != v and (u, v) not in have:
            links.append((u, v))
            have.add((u, v))
    L = len(links)

    out_of = [[] for _ in range(nodes)]
    into = [[] for _ in range(nodes)]
    for idx, (u, v) in enumerate(links):
        out_of[u].append(idx)
        into[v].append(idx)

    sources = np.empty(flows, dtype=int)
    dests = np.empty(flows, dtype=int)
    sites = []
    for k in range(flows):
        s = int(rng.integers(0, nodes))
        d = int(rng.integers(0, nodes))
        while d == s:
            d = int(rng.integers(0, nodes))
        sources[k], dests[k] = s, d
        sites.append(sorted(int(v) for v in
                            rng.gen.choice(nodes, size=n_sites, replace=False)))

    r_dim = flows * L
    x_dim = flows * n_sites
    dim = r_dim + x_dim

    def r_idx(k, link):
        return k * L + link

    rows = []
    rhs = []
    for k in range(flows):
        for v in range(nodes):
            if v == dests[k]:
                continue  # dropped: implied by the others
            row = np.zeros(dim)
            for idx in out_of[v]:
                row[r_idx(k, idx)] = 1.0
            for idx in into[v]:
                row[r_idx(k, idx)] = -1.0
            rows.append(row)
            rhs.append(1.0 if v == sources[k] else 0.0)
    for k in range(flows):
        row = np.zeros(dim)
        row[r_dim + k * n_sites: r_dim + (k + 1) * n_sites] = 1.0
        rows.append(row)
        rhs.append(1.0)
    A = np.array(rows)
    b = np.array(rhs)

    sp = float(sigma_pen)
    eps = float(eps_reg)
    c_eps = (1.0 + eps) ** p + (n_sites - 1) * eps**p

    def value(v):
        v = np.asarray(v, dtype=float)
        pen = np.sum((v[r_dim:] + eps) ** p) - flows * c_eps
        return float(np.sum(v[:r_dim]) + sp * pen)

    def grad(v):
        v = np.asarray(v, dtype=float)
        g = np.empty(dim)
        g[:r_dim] = 1.0
        g[r_dim:] = sp * p * (v[r_dim:] + eps) ** (p - 1.0)
        return g

    l_f = sp * p * (1.0 - p) * eps ** (p - 2.0)
    f_lower = sp * flows * (eps**p - (1.0 + eps) ** p)  # rates >= 0 add nothing below
    obj = ObjectiveModel(value, grad, dim, l_f=l_f, f_lower=f_lower,
                         name="slicing_penalty")

    hi = np.concatenate([np.full(r_dim, float(cap)), np.ones(x_dim)])
    domain = PolyhedralSet.box(np.zeros(dim), hi)
    problem = ConstrainedProblem(obj, A, b, domain,
                                 name=f"network_slicing[K={flows}]")
    _tag(problem, "network_slicing", {
        "flows": flows, "nodes": nodes, "extra_links": extra_links, "p": float(p),
        "eps_reg": eps, "sigma_pen": sp, "seed": int(seed), "cap": float(cap),
        "n_sites": n_sites,
    })

    # feasible point: push each unit demand along a breadth-first path
    # (the ring guarantees one exists) and place each function at its
    # first candidate site
    x_feas = np.zeros(dim)
    paths = []
    for k in range(flows):
        prev = {sources[k]: None}
        frontier = [sources[k]]
        while dests[k] not in prev:
            nxt = []
            for u in frontier:
                for idx in out_of[u]:
                    w = links[idx][1]
                    if w not in prev:
                        prev[w] = idx
                        nxt.append(w)
            frontier = nxt
        path = []
        v = dests[k]
        while prev[v] is not None:
            idx = prev[v]
            path.append(idx)
            v = links[idx][0]
        path.reverse()
        paths.append(path)
        for idx in path:
            x_feas[r_idx(k, idx)] = 1.0
        x_feas[r_dim + k * n_sites] = 1.0

    meta = {
        "L_f": l_f,
        "L_0": l_f,
        "x_feas": x_feas,
        "seed": int(seed),
        "links": links,
        "sources": sources,
        "dests": dests,
        "sites": sites,
        "paths": paths,
        "r_dim": r_dim,
        "n_sites": n_sites,
    }
    return BenchmarkInstance(problem=problem, sampler=None, metadata=meta)


# ---------------------------------------------------------------------------
# fair classification
# ---------------------------------------------------------------------------


def smoothed01(s):
    """Smoothed 0-1 loss of the margin: 1 for margins below -1, 0 above 1,
    and the cubic ``s^3/4 - 3s/4 + 1/2`` in between (values and slopes meet
    at the seams, so the whole thing is C^1)."""
    s = np.asarray(s, dtype=float)
    mid = 0.25 * s**3 - 0.75 * s + 0.5
    return np.where(s < -1.0, 1.0, np.where(s > 1.0, 0.0, mid))


def smoothed01_grad(s):
    """Derivative of :func:`smoothed01`: ``(3/4)(s^2 - 1)`` on [-1, 1],
    zero outside (and exactly zero at the seams)."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 1.0, 0.75 * (s * s - 1.0), 0.0)


def _expit(u):
    # overflow-safe logistic sigmoid
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def logistic_difference(s, mu: float):
    """Difference of shifted logistic losses,
    ``log(1+e^-s) - log(1+e^-(s+mu))`` — bounded, nonconvex, and
    identically zero when the shift ``mu`` is zero."""
    s = np.asarray(s, dtype=float)
    return np.logaddexp(0.0, -s) - np.logaddexp(0.0, -(s + mu))


def logistic_difference_grad(s, mu: float):
    """Derivative of :func:`logistic_difference` in the margin."""
    s = np.asarray(s, dtype=float)
    return _expit(-(s + mu)) - _expit(-s)


def synthetic_classification(n_samples: int = 200, dim: int = 5, seed: int = 0,
                             flip: float = 0.2):
    """Two Gaussian clusters with a sensitive attribute correlated to the
    label: ``z`` agrees with the class indicator except with probability
    ``flip``.  Returns ``{"X", "y", "z"}`` with labels in {-1, +1}."""
    rng = SeededRng(seed)
    m = rng.standard_normal(dim)
    m *= 1.5 / np.linalg.norm(m)
    y = np.where(rng.random(n_samples) < 0.5, 1.0, -1.0)
    X = rng.standard_normal((n_samples, dim)) + np.outer(y, m)
    agree = rng.random(n_samples) >= flip
    z = np.where(agree, (y > 0).astype(float), (y < 0).astype(float))
    return {"X": X, "y": y, "z": z}


_LOSSES = {
    # value(s), grad(s), curvature bound on |V''|, bound on |V'|
    "smoothed01": (lambda s, mu: smoothed01(s),
                   lambda s, mu: smoothed01_grad(s), 1.5, 0.75),
    "logistic_difference": (logistic_difference, logistic_difference_grad,
                            0.25, 1.0),
    # plain convex logistic: the cross-check loss for KKT baselines
    "logistic": (lambda s, mu: np.logaddexp(0.0, -s),
                 lambda s, mu: -_expit(-s), 0.25, 1.0),
}


def gen_fair_classification(n_samples: int = 200, dim: int = 5,
                            loss: str = "smoothed01", mu_ld: float = 1.0,
                            c_cov: float = 0.05, seed: int = 0,
                            theta_bound: float = 10.0,
                            dataset=None) -> BenchmarkInstance:
    """Linear classification with a covariance fairness cap.

    The decision variable is the weight vector ``theta`` in a box; the
    empirical mean loss of the margins ``y_i <x_i, theta>`` is minimized
    subject to ``|<a, theta>| <= c_cov`` where
    ``a = (1/N) sum_i (z_i - mean z) x_i`` couples the classifier to the
    sensitive attribute ``z``.  The two-sided cap becomes two inequality
    rows and is rewritten to equality form with slack coordinates, so the
    emitted problem matches the solver template directly.

    ``dataset`` may supply ``{"X": (N,d), "y": (N,), "z": (N,)}`` with
    labels in {-1, +1}; by default a synthetic two-Gaussian set is drawn
    from ``seed``.  Losses: ``smoothed01`` (cubic-smoothed 0-1),
    ``logistic_difference`` (shift ``mu_ld``), or plain convex
    ``logistic`` for baselining.
    """
    if loss not in _LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {sorted(_LOSSES)}")
    if c_cov <= 0:
        raise ValueError("the covariance cap must be positive")
    synthetic = dataset is None
    if synthetic:
        dataset = synthetic_classification(n_samples, dim, seed)
    X = as_matrix(dataset["X"], "X")
    y = as_vector(dataset["y"], "y")
    z = as_vector(dataset["z"], "z")
    N, d = X.shape
    if y.shape != (N,) or z.shape != (N,):
        raise ValueError("X, y, z disagree on sample count")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")

    val_fn, grd_fn, curv, slope = _LOSSES[loss]
    mu = float(mu_ld)
    gram = operator_norm(X.T @ X) / N
    l_f = curv * gram

    def value(theta):
        s = y * (X @ np.asarray(theta, dtype=float))
        return float(np.mean(val_fn(s, mu)))

    def grad(theta):
        s = y * (X @ np.asarray(theta, dtype=float))
        return X.T @ (grd_fn(s, mu) * y) / N

    obj = ObjectiveModel(value, grad, d, l_f=l_f, f_lower=0.0, name=f"fair_{loss}")

    a = (z - z.mean()) @ X / N
    if np.linalg.norm(a) < 1e-12:
        warnings.warn(
            "sensitive attribute is constant: the fairness constraints are vacuous",
            stacklevel=2,
        )
    box = PolyhedralSet.box(np.full(d, -float(theta_bound)), np.full(d, float(theta_bound)))
    problem = reformulate_inequality(
        obj, np.vstack([a, -a]), np.array([c_cov, c_cov]), box,
        name=f"fair_classification[{loss}]",
    )
    if synthetic:
        _tag(problem, "fair_classification", {
            "n_samples": int(N), "dim": int(d), "loss": loss, "mu_ld": mu,
            "c_cov": float(c_cov), "seed": int(seed),
            "theta_bound": float(theta_bound),
        })

    # theta = 0 sits strictly inside the cap; its slacks are -c_cov
    x_feas = np.concatenate([np.zeros(d), [-c_cov, -c_cov]])

    def _atom(i):
        xi, yi = X[i], y[i]

        def g(v, xi=xi, yi=yi):
            s = yi * float(xi @ np.asarray(v, dtype=float)[:d])
            lead = float(grd_fn(s, mu)) * yi
            return np.concatenate([lead * xi, np.zeros(2)])

        return g

    row_norms = np.linalg.norm(X, axis=1)
    meta = {
        "L_f": l_f,
        "L_0": curv * float(np.max(row_norms) ** 2),
        "x_feas": x_feas,
        "seed": int(seed),
        "a": a,
        "loss": loss,
        "dataset": dataset,
        "atom_grads": [_atom(i) for i in range(N)],
        "atom_sigma2": (2.0 * slope * float(np.max(row_norms))) ** 2,
    }
    return BenchmarkInstance(problem=problem, sampler=None, metadata=meta)


# ---------------------------------------------------------------------------
# dispatch + oracle helpers
# ---------------------------------------------------------------------------


_FAMILIES = {
    "nonconvex_qp": gen_nonconvex_qp,
    "consensus": gen_consensus,
    "network_slicing": gen_network_slicing,
    "fair_classification": gen_fair_classification,
}


def make_instance(family: str, **params) -> BenchmarkInstance:
    """Build a benchmark instance by family name."""
    try:
        gen = _FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown benchmark family {family!r}; choose from {sorted(_FAMILIES)}"
        ) from None
    return gen(**params)


def generate(family: str, **params) -> ConstrainedProblem:
    """Rebuild just the problem from a recorded recipe (see
    :func:`~spal.problem.problem_from_dict`)."""
    return make_instance(family, **params).problem


def finite_sum_oracle(instance: BenchmarkInstance, rng=None) -> FiniteSumOracle:
    """Natural finite-sum gradient oracle of an instance, when it has one.

    Consensus instances decompose over agents (quadratic atoms, compiled
    fast path available); fair classification decomposes over samples
    (callable atoms).  Other families raise.
    """
    md = instance.metadata
    if "atom_Qs" in md:
        return FiniteSumOracle(instance.problem.objective, md["atom_sigma2"],
                               Qs=md["atom_Qs"], cs=md["atom_cs"], rng=rng)
    if "atom_grads" in md:
        return FiniteSumOracle(instance.problem.objective, md["atom_sigma2"],
                               atom_grads=md["atom_grads"], l0=md["L_0"], rng=rng)
    raise ValueError(
        f"{instance.problem.name} records no finite-sum structure; "
        "use an exact or additive-noise oracle"
    )
