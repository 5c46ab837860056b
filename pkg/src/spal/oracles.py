"""Stochastic first-order oracles and constraint samplers.

Two sources of randomness reach the solvers:

* **gradient oracles** return unbiased estimates of ``grad f``; variants are
  exact (no noise), additive Gaussian noise, and uniform finite-sum
  sampling.  All variants support *two-point* evaluation — the same ticket
  (noise vector / atom index) applied at two different points — which the
  recursive-momentum solver needs;
* **constraint samplers** return random pairs ``(A_z, b_z)`` with known
  means, used by the sampled-constraint solver variant.  Finite samplers
  can enumerate their atoms exactly, which the unbiasedness audits exploit.

Randomness is always drawn from an explicitly passed generator (or the
instance's own default), never from global state.  For the compiled solver
loops, oracles pre-draw their randomness into tables
(:meth:`GradientOracle.draw_table`) that both execution paths consume
identically.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .core import SeededRng, as_matrix, as_vector, operator_norm
from .problem import ObjectiveModel

__all__ = [
    "GradientOracle",
    "ExactOracle",
    "AdditiveNoiseOracle",
    "FiniteSumOracle",
    "ConstraintSampler",
    "DegenerateSampler",
    "FiniteAtomSampler",
    "BernoulliEdgeSampler",
    "sample_objective_grad",
    "stochastic_prox_al_grad",
    "stochastic_k_grad_twosample",
    "storm_two_point",
]


class GradientOracle:
    """Base class; concrete oracles implement the two sampling primitives.

    Attributes
    ----------
    objective : ObjectiveModel
        The underlying smooth objective (also provides the exact mean).
    sigma2 : float
        Declared variance bound ``E||sample - grad f||^2 <= sigma2``.
    l0 : float
        Per-ticket smoothness: Lipschitz constant of ``x -> sample(x)``
        under a fixed ticket (drives the momentum schedules).
    """

    kind = "abstract"

    def __init__(self, objective: ObjectiveModel, sigma2: float, l0: float, rng=None):
        self.objective = objective
        self.sigma2 = float(sigma2)
        self.l0 = float(l0)
        self.rng = rng if rng is not None else SeededRng(0)
        if self.sigma2 < 0 or self.l0 < 0:
            raise ValueError("sigma2 and l0 must be nonnegative")

    @property
    def dim(self) -> int:
        return self.objective.dim

    def mean(self, x) -> np.ndarray:
        """The exact gradient (the estimator's mean)."""
        return self.objective.grad(x)

    def sample(self, x, rng=None) -> np.ndarray:
        raise NotImplementedError

    def sample_pair(self, x_new, x_old, rng=None):
        """One fresh ticket evaluated at both points: ``(g_new, g_old)``."""
        raise NotImplementedError

    # -- pre-drawn tables for the chunked solver loops ---------------------

    def draw_table(self, steps: int, rng) -> dict:
        """Pre-draw ``steps`` tickets into arrays.

        Both the compiled and the plain execution paths consume the same
        table, which is what makes a run a pure function of its seed.
        """
        raise NotImplementedError

    def grad_from_table(self, table: dict, k: int, x) -> np.ndarray:
        """Evaluate ticket ``k`` of a table at ``x`` (plain path)."""
        raise NotImplementedError

    def kernel_args(self, table: dict):
        """``(code, noise, atom_Q, atom_c, atom_idx)`` for the compiled loop,
        or None when this oracle has no compiled form."""
        return None

    def _rng(self, rng):
        return rng if rng is not None else self.rng


_NO_ATOMS = (np.zeros((1, 1, 1)), np.zeros((1, 1)))


class ExactOracle(GradientOracle):
    """Noise-free oracle: every sample is the exact gradient."""

    kind = "exact"

    def __init__(self, objective: ObjectiveModel):
        super().__init__(objective, sigma2=0.0, l0=objective.l_f)

    def sample(self, x, rng=None):
        return self.objective.grad(x)

    def sample_pair(self, x_new, x_old, rng=None):
        return self.objective.grad(x_new), self.objective.grad(x_old)

    def draw_table(self, steps, rng):
        # no randomness; the index array only sets the step count
        return {"idx": np.zeros(steps, dtype=np.int64)}

    def grad_from_table(self, table, k, x):
        return self.objective.grad(x)

    def kernel_args(self, table):
        quad = self.objective.as_quadratic()
        if quad is None:
            return None
        empty_noise = np.zeros((0, self.dim))
        aq, ac = _NO_ATOMS
        return _kernels.ORACLE_EXACT, empty_noise, aq, ac, table["idx"]


class AdditiveNoiseOracle(GradientOracle):
    """Exact gradient plus isotropic Gaussian noise.

    The noise is ``(sigma/sqrt(n)) * N(0, I_n)`` so that
    ``E||noise||^2 = sigma^2`` independent of dimension.  Two-point calls
    share one noise vector, so per-ticket smoothness equals ``l_f``.
    """

    kind = "additive"

    def __init__(self, objective: ObjectiveModel, sigma: float, rng=None):
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.sigma = float(sigma)
        super().__init__(objective, sigma2=sigma * sigma, l0=objective.l_f, rng=rng)
        self._scale = self.sigma / np.sqrt(self.dim)

    def _noise(self, rng):
        return self._scale * self._rng(rng).standard_normal(self.dim)

    def sample(self, x, rng=None):
        return self.objective.grad(x) + self._noise(rng)

    def sample_pair(self, x_new, x_old, rng=None):
        w = self._noise(rng)
        return self.objective.grad(x_new) + w, self.objective.grad(x_old) + w

    def draw_table(self, steps, rng):
        return {"noise": self._scale * rng.standard_normal((steps, self.dim))}

    def grad_from_table(self, table, k, x):
        return self.objective.grad(x) + table["noise"][k]

    def kernel_args(self, table):
        if self.objective.as_quadratic() is None:
            return None
        aq, ac = _NO_ATOMS
        return _kernels.ORACLE_ADDITIVE, table["noise"], aq, ac, np.zeros(0, dtype=np.int64)


class FiniteSumOracle(GradientOracle):
    """Uniform sampling over ``m`` atoms with ``f = (1/m) sum_i f_i``.

    Construct either from quadratic atom data ``(Qs, cs)`` — stacked
    ``(m, n, n)`` and ``(m, n)`` arrays, which keeps the compiled loop
    available — or from a list of gradient callables via ``atom_grads``.

    ``sigma2`` must be supplied: it is the caller's bound on
    ``E||grad f_i(x) - grad f(x)||^2`` over the region the iterates visit
    (for quadratic atoms on a bounded set this is computable; see the
    benchmark generators).  ``l0`` defaults to the largest atom Lipschitz
    constant for quadratic atoms and must be given otherwise.
    """

    kind = "finite_sum"

    def __init__(self, objective: ObjectiveModel, sigma2: float, Qs=None, cs=None,
                 atom_grads=None, l0=None, rng=None):
        if (Qs is None) == (atom_grads is None):
            raise ValueError("provide exactly one of (Qs, cs) or atom_grads")
        if Qs is not None:
            Qs = np.ascontiguousarray(Qs, dtype=np.float64)
            cs = np.ascontiguousarray(cs, dtype=np.float64)
            if Qs.ndim != 3 or cs.ndim != 2 or Qs.shape[0] != cs.shape[0]:
                raise ValueError("Qs must be (m, n, n) and cs (m, n)")
            self.Qs, self.cs = Qs, cs
            self.n_atoms = Qs.shape[0]
            if l0 is None:
                l0 = max(operator_norm(Qs[i]) for i in range(self.n_atoms))
            self._atom_grads = None
        else:
            self.Qs = self.cs = None
            self._atom_grads = list(atom_grads)
            self.n_atoms = len(self._atom_grads)
            if l0 is None:
                raise ValueError("l0 is required for callable atoms")
        if self.n_atoms < 1:
            raise ValueError("need at least one atom")
        super().__init__(objective, sigma2=sigma2, l0=l0, rng=rng)

    def atom_grad(self, i: int, x) -> np.ndarray:
        if self._atom_grads is not None:
            return as_vector(self._atom_grads[i](x), "atom gradient")
        return self.Qs[i] @ x + self.cs[i]

    def _draw_idx(self, rng):
        return int(self._rng(rng).integers(0, self.n_atoms))

    def sample(self, x, rng=None):
        return self.atom_grad(self._draw_idx(rng), as_vector(x, "x"))

    def sample_pair(self, x_new, x_old, rng=None):
        i = self._draw_idx(rng)
        return (self.atom_grad(i, as_vector(x_new, "x_new")),
                self.atom_grad(i, as_vector(x_old, "x_old")))

    def draw_table(self, steps, rng):
        return {"idx": rng.integers(0, self.n_atoms, size=steps).astype(np.int64)}

    def grad_from_table(self, table, k, x):
        return self.atom_grad(int(table["idx"][k]), x)

    def kernel_args(self, table):
        if self.Qs is None:
            return None
        empty_noise = np.zeros((0, self.dim))
        return (_kernels.ORACLE_FINITE_SUM, empty_noise, self.Qs, self.cs, table["idx"])


# ---------------------------------------------------------------------------
# constraint samplers
# ---------------------------------------------------------------------------


class ConstraintSampler:
    """Random pairs ``(A_z, b_z)`` with known means ``(mean_A, mean_b)``.

    ``second_moment_bound`` is the caller's constant ``L`` with
    ``E||A_z x - b_z||^2 <= L^2`` over the feasible set; the dual-safeguard
    radius rule consumes it.
    """

    kind = "abstract"

    def __init__(self, mean_A, mean_b, second_moment_bound: float, rng=None):
        self.mean_A = as_matrix(mean_A, "mean_A")
        self.mean_b = as_vector(mean_b, "mean_b")
        if self.mean_A.shape[0] != self.mean_b.shape[0]:
            raise ValueError("mean_A and mean_b disagree on row count")
        self.second_moment_bound = float(second_moment_bound)
        self.rng = rng if rng is not None else SeededRng(0)

    def sample(self, rng=None):
        """One draw ``(A_z, b_z)``."""
        raise NotImplementedError

    def atoms(self):
        """Exact support as ``[(prob, A, b), ...]``; raises when infinite or
        too large to enumerate."""
        raise NotImplementedError

    def _rng(self, rng):
        return rng if rng is not None else self.rng


class DegenerateSampler(ConstraintSampler):
    """Point mass: always returns the fixed ``(A, b)``."""

    kind = "degenerate"

    def __init__(self, A, b):
        super().__init__(A, b, second_moment_bound=0.0)
        # bound refined by callers who know the feasible set; 0 means unset

    def sample(self, rng=None):
        return self.mean_A, self.mean_b

    def atoms(self):
        return [(1.0, self.mean_A, self.mean_b)]


class FiniteAtomSampler(ConstraintSampler):
    """Categorical distribution over explicit atoms ``(A_i, b_i)``."""

    kind = "finite_atom"

    def __init__(self, As, bs, probs=None, second_moment_bound=None, rng=None):
        As = [as_matrix(A, f"As[{i}]") for i, A in enumerate(As)]
        bs = [as_vector(b, f"bs[{i}]") for i, b in enumerate(bs)]
        if len(As) != len(bs) or not As:
            raise ValueError("As and bs must be equal-length nonempty lists")
        shape = As[0].shape
        if any(A.shape != shape for A in As):
            raise ValueError("all atoms must share a shape")
        k = len(As)
        probs = np.full(k, 1.0 / k) if probs is None else as_vector(probs, "probs")
        if probs.shape[0] != k or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector over the atoms")
        mean_A = sum(p * A for p, A in zip(probs, As))
        mean_b = sum(p * b for p, b in zip(probs, bs))
        if second_moment_bound is None:
            second_moment_bound = 0.0
        super().__init__(mean_A, mean_b, second_moment_bound, rng=rng)
        self.As, self.bs, self.probs = As, bs, probs
        self._cum = np.cumsum(probs)

    def sample(self, rng=None):
        # inverse-CDF draw; works with SeededRng and raw numpy generators
        u = float(self._rng(rng).random())
        i = min(int(np.searchsorted(self._cum, u, side="right")), len(self.As) - 1)
        return self.As[i], self.bs[i]

    def atoms(self):
        return [(float(p), A, b) for p, A, b in zip(self.probs, self.As, self.bs)]


class BernoulliEdgeSampler(ConstraintSampler):
    """Row-sparsified matrix: row ``r`` of the base matrix appears (scaled
    by nothing — the mean already carries the probability) with probability
    ``p_r``, else the row is zero.

    The base rows are ``rows[r] / p_r`` so that ``E A_z = rows``; ``b`` is
    fixed.  This models measuring a random subset of network edges per step.

    ``row_groups`` ties rows together: rows sharing a group index are kept
    or dropped by a single coin flip.  A multi-dimensional consensus edge,
    for example, contributes one row per coordinate, and the edge either
    fires (all its rows present) or does not.  ``probs`` then holds one
    inclusion probability per group.  The default is one group per row.
    """

    kind = "bernoulli_edge"

    def __init__(self, mean_rows, b, probs, second_moment_bound=None, rng=None,
                 max_enumeration=4096, row_groups=None):
        mean_rows = as_matrix(mean_rows, "mean_rows")
        m = mean_rows.shape[0]
        if row_groups is None:
            groups = np.arange(m)
        else:
            groups = np.asarray(row_groups, dtype=np.int64).reshape(-1)
            if groups.shape[0] != m:
                raise ValueError("row_groups needs one group index per row")
        n_groups = int(groups.max()) + 1 if m else 0
        if m and (groups.min() < 0 or len(np.unique(groups)) != n_groups):
            raise ValueError("row_groups must cover 0..G-1 with no gaps")
        probs = as_vector(probs, "probs")
        if probs.shape[0] != n_groups:
            raise ValueError("one inclusion probability per row group is required")
        if np.any(probs <= 0) or np.any(probs > 1):
            raise ValueError("inclusion probabilities must lie in (0, 1]")
        self.probs = probs
        self.groups = groups
        self.n_groups = n_groups
        self.base_rows = mean_rows / probs[groups][:, None]  # row r realized value
        if second_moment_bound is None:
            second_moment_bound = 0.0
        super().__init__(mean_rows, b, second_moment_bound, rng=rng)
        self.max_enumeration = int(max_enumeration)

    def sample(self, rng=None):
        keep = self._rng(rng).random(self.n_groups) < self.probs
        A = np.where(keep[self.groups][:, None], self.base_rows, 0.0)
        return A, self.mean_b

    def atoms(self):
        g = self.n_groups
        if 2**g > self.max_enumeration:
            raise ValueError(
                f"2^{g} atom combinations exceed the enumeration cap "
                f"({self.max_enumeration})"
            )
        out = []
        for mask_bits in range(2**g):
            keep = np.array([(mask_bits >> k) & 1 for k in range(g)], dtype=bool)
            p = float(np.prod(np.where(keep, self.probs, 1.0 - self.probs)))
            A = np.where(keep[self.groups][:, None], self.base_rows, 0.0)
            out.append((p, A, self.mean_b))
        return out


class GaussianConstraintSampler(ConstraintSampler):
    """Continuous perturbations: dense Gaussian noise on every entry.

    Draws ``A_z = mean_A + scale * E`` and ``b_z = mean_b + scale * e`` with
    ``E``/``e`` standard normal, so the support is all of matrix space and
    the mean pair is recovered exactly in expectation.  Useful for checking
    estimators against a distribution that cannot be enumerated.
    """

    kind = "gaussian"

    def __init__(self, mean_A, mean_b, scale: float,
                 second_moment_bound=None, rng=None):
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        if second_moment_bound is None:
            second_moment_bound = 0.0
        super().__init__(mean_A, mean_b, second_moment_bound, rng=rng)
        self.scale = float(scale)

    def sample(self, rng=None):
        g = self._rng(rng)
        A = self.mean_A + self.scale * g.standard_normal(self.mean_A.shape)
        b = self.mean_b + self.scale * g.standard_normal(self.mean_b.shape)
        return A, b


# ---------------------------------------------------------------------------
# sampling primitives used by the solver steps
# ---------------------------------------------------------------------------


def sample_objective_grad(oracle: GradientOracle, x, rng=None) -> np.ndarray:
    """One unbiased stochastic gradient of the objective at ``x``."""
    return oracle.sample(as_vector(x, "x"), rng=rng)


def stochastic_prox_al_grad(oracle: GradientOracle, A, b, x, y, z,
                            rho: float, mu: float, rng=None) -> np.ndarray:
    """Stochastic proximal-AL search direction with deterministic constraints.

    ``F(x) + A'y + rho A'(Ax-b) + mu (x-z)`` where ``F(x)`` is one oracle
    draw; everything else is exact.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    r = A @ x - b
    return oracle.sample(x, rng=rng) + A.T @ y + rho * (A.T @ r) + mu * (x - z)


def stochastic_k_grad_twosample(oracle: GradientOracle, sampler: ConstraintSampler,
                                x, y, z, rho: float, mu: float, rng=None,
                                constraint_rng=None) -> np.ndarray:
    """Search direction with *sampled* constraints, unbiased via two draws.

    ``F(x) + A_1'y + rho A_1'(A_2 x - b_2) + mu (x-z)`` with independent
    constraint draws ``(A_1, b_1)`` and ``(A_2, b_2)``; the product of two
    independent copies makes the quadratic-penalty term unbiased for
    ``rho * mean_A'(mean_A x - mean_b)``, which one shared draw would not be.
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    A1, _b1 = sampler.sample(rng=constraint_rng)
    A2, b2 = sampler.sample(rng=constraint_rng)
    return (oracle.sample(x, rng=rng) + A1.T @ y
            + rho * (A1.T @ (A2 @ x - b2)) + mu * (x - z))


def storm_two_point(oracle: GradientOracle, x_new, x_old, d_old, alpha: float,
                    rng=None) -> np.ndarray:
    """Recursive-momentum gradient update.

    ``d_new = g(x_new) + (1 - alpha) (d_old - g(x_old))`` with both
    evaluations sharing one fresh ticket.  ``alpha = 1`` reduces to plain
    stochastic gradient; small ``alpha`` carries history.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    d_old = as_vector(d_old, "d_old")
    g_new, g_old = oracle.sample_pair(x_new, x_old, rng=rng)
    return g_new + (1.0 - alpha) * (d_old - g_old)
