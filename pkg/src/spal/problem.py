"""Problem containers and augmented-Lagrangian building blocks.

A problem is ``min f(x) s.t. Ax = b, x in X`` with smooth (possibly
nonconvex) ``f``, a dense constraint matrix, and a polyhedral ``X`` from
:mod:`spal.geometry`.  This module holds the objective wrappers, the
smoothed augmented-Lagrangian value/gradient used everywhere downstream,
and the slack reformulation that turns ``Ax <= b`` into equality form.
"""

from __future__ import annotations

import numpy as np

from .core import as_matrix, as_vector, check_finite, operator_norm
from .geometry import PolyhedralSet, product


class ObjectiveModel:
    """Smooth objective: value/gradient callables plus smoothness metadata.

    Parameters
    ----------
    value_fn, grad_fn : callable
        Map a 1-D float64 array to a float / to a gradient array.
    dim : int
        Ambient dimension.
    l_f : float
        Lipschitz constant of the gradient.
    f_lower : float
        A lower bound of ``f`` on the feasible set (may be ``-inf``; several
        diagnostics need it finite).
    name : str
        Label used in reports.
    """

    def __init__(self, value_fn, grad_fn, dim, l_f, f_lower=-np.inf, name="objective"):
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self.dim = int(dim)
        self.l_f = float(l_f)
        self.f_lower = float(f_lower)
        self.name = str(name)
        if self.dim < 1:
            raise ValueError("objective dimension must be positive")
        if self.l_f < 0:
            raise ValueError("gradient Lipschitz constant must be nonnegative")

    def value(self, x) -> float:
        return float(self._value_fn(as_vector(x, "x")))

    def grad(self, x) -> np.ndarray:
        g = as_vector(self._grad_fn(as_vector(x, "x")), "grad")
        if g.shape[0] != self.dim:
            raise ValueError(f"gradient has dimension {g.shape[0]}, expected {self.dim}")
        return g

    def as_quadratic(self):
        """``(Q, c)`` when the objective is exactly quadratic, else None.

        Solvers use this to route dense quadratic problems through the
        compiled iteration kernels.
        """
        return None

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim}, l_f={self.l_f:g})"


class QuadraticObjective(ObjectiveModel):
    """``f(x) = 0.5 x'Qx + c'x + constant`` with symmetric (possibly
    indefinite) ``Q``.

    ``l_f`` defaults to the operator norm of ``Q``.
    """

    def __init__(self, Q, c, constant=0.0, l_f=None, f_lower=-np.inf, name="quadratic"):
        Q = as_matrix(Q, "Q")
        c = as_vector(c, "c")
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got {Q.shape}")
        if Q.shape[0] != c.shape[0]:
            raise ValueError("Q and c disagree on dimension")
        check_finite(Q, "Q")
        check_finite(c, "c")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        self.Q = Q
        self.c = c
        self.constant = float(constant)
        if l_f is None:
            l_f = operator_norm(Q)
        super().__init__(self._val, self._grd, Q.shape[0], l_f, f_lower, name)

    def _val(self, x):
        return 0.5 * x @ self.Q @ x + self.c @ x + self.constant

    def _grd(self, x):
        return self.Q @ x + self.c

    def as_quadratic(self):
        return self.Q, self.c


def zero_objective(dim: int) -> QuadraticObjective:
    """The zero function; handy for feasibility-only checks and tests."""
    return QuadraticObjective(np.zeros((dim, dim)), np.zeros(dim), f_lower=0.0, name="zero")


class ConstrainedProblem:
    """``min f(x) s.t. Ax = b, x in X`` plus derived metadata.

    ``norm_A`` (the operator norm of ``A``) is computed on construction
    unless supplied; parameter schedules depend on it.  ``x0`` is the
    solver's start point and defaults to the projection of the origin onto
    ``X``.
    """

    def __init__(self, objective: ObjectiveModel, A, b, domain: PolyhedralSet,
                 name="problem", x0=None, norm_A=None, meta=None):
        from .geometry import project  # local import keeps module load light

        self.objective = objective
        self.A = as_matrix(A, "A")
        self.b = as_vector(b, "b")
        check_finite(self.A, "A")
        check_finite(self.b, "b")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError(
                f"A has {self.A.shape[0]} rows but b has {self.b.shape[0]} entries"
            )
        if self.A.shape[1] != objective.dim:
            raise ValueError(
                f"A has {self.A.shape[1]} columns but the objective lives in "
                f"dimension {objective.dim}"
            )
        if domain.dim != objective.dim:
            raise ValueError(
                f"feasible set has dimension {domain.dim}, objective has {objective.dim}"
            )
        self.domain = domain
        self.name = str(name)
        self.norm_A = float(norm_A) if norm_A is not None else operator_norm(self.A)
        self.x0 = project(domain, x0) if x0 is not None else project(domain, np.zeros(objective.dim))
        self.meta = dict(meta) if meta else {}

    @property
    def dim(self) -> int:
        return self.objective.dim

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def residual(self, x) -> np.ndarray:
        """Equality residual ``Ax - b``."""
        return self.A @ as_vector(x, "x") - self.b

    def __repr__(self):
        return (
            f"ConstrainedProblem(name={self.name!r}, dim={self.dim}, "
            f"m={self.n_constraints}, domain={self.domain.kind})"
        )


def al_value(objective: ObjectiveModel, A, b, x, y, rho: float) -> float:
    """Augmented Lagrangian ``f(x) + <Ax-b, y> + (rho/2)||Ax-b||^2``."""
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    r = A @ x - b
    return objective.value(x) + float(r @ y) + 0.5 * rho * float(r @ r)


def prox_al_grad(objective: ObjectiveModel, A, b, x, y, z, rho: float, mu: float) -> np.ndarray:
    """Gradient in ``x`` of the proximal augmented Lagrangian.

    ``grad f(x) + A'y + rho A'(Ax-b) + mu (x-z)`` — the deterministic
    counterpart of the stochastic search direction used by all solver
    variants.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    r = A @ x - b
    return objective.grad(x) + A.T @ y + rho * (A.T @ r) + mu * (x - z)


def smoothness_constant_K(l_f: float, norm_A: float, rho: float, mu: float,
                          norm_squared: bool = True) -> float:
    """Gradient Lipschitz constant of the proximal augmented Lagrangian.

    ``l_f + rho * ||A||^2 + mu`` by default. ``norm_squared=False`` swaps
    the quadratic-penalty curvature term for ``rho * ||A||`` — a looser
    reading some step-size schedules are stated with; the default is the
    correct curvature bound and is what the solvers use.
    """
    pen = norm_A * norm_A if norm_squared else norm_A
    return float(l_f) + float(rho) * float(pen) + float(mu)


def reformulate_inequality(objective: ObjectiveModel, A_ineq, b_ineq,
                           domain: PolyhedralSet, name="slack") -> ConstrainedProblem:
    """Rewrite ``A x <= b, x in X`` as an equality-constrained problem.

    Introduces one slack coordinate per row: ``A x - t = b`` with
    ``t <= 0``, feasible set ``X x (-inf, 0]^m``. The objective ignores the
    slacks, so its smoothness constant and lower bound carry over; quadratic
    objectives stay quadratic (zero-padded), keeping the compiled fast path.
    """
    A_ineq = as_matrix(A_ineq, "A_ineq")
    b_ineq = as_vector(b_ineq, "b_ineq")
    m, n = A_ineq.shape
    if b_ineq.shape[0] != m:
        raise ValueError("A_ineq and b_ineq disagree on row count")
    if domain.dim != n or objective.dim != n:
        raise ValueError("inequality system, objective, and set disagree on dimension")

    A_eq = np.hstack([A_ineq, -np.eye(m)])
    slack_box = PolyhedralSet.box(np.full(m, -np.inf), np.zeros(m))
    ext_domain = product(domain, slack_box)

    quad = objective.as_quadratic()
    if quad is not None:
        Q, c = quad
        Q_ext = np.zeros((n + m, n + m))
        Q_ext[:n, :n] = Q
        c_ext = np.concatenate([c, np.zeros(m)])
        const = objective.value(np.zeros(n))
        ext_obj: ObjectiveModel = QuadraticObjective(
            Q_ext, c_ext, constant=const, l_f=objective.l_f,
            f_lower=objective.f_lower, name=objective.name,
        )
    else:
        base = objective
        ext_obj = ObjectiveModel(
            lambda v: base.value(v[:n]),
            lambda v: np.concatenate([base.grad(v[:n]), np.zeros(m)]),
            n + m, base.l_f, base.f_lower, base.name,
        )

    return ConstrainedProblem(ext_obj, A_eq, b_ineq, ext_domain, name=name,
                              meta={"slack_rows": m, "orig_dim": n})


def problem_to_dict(problem: ConstrainedProblem) -> dict:
    """JSON-friendly description of a problem.

    Quadratic objectives serialize inline.  Problems built by a benchmark
    generator instead record the recipe (family + parameters, stored in
    ``problem.meta``) and are rebuilt by re-running the generator, which is
    exact because generators are deterministic in their seed.
    """
    d: dict = {
        "name": problem.name,
        "A": problem.A.tolist(),
        "b": problem.b.tolist(),
        "domain": problem.domain.to_dict(),
        "norm_A": problem.norm_A,
        "x0": problem.x0.tolist(),
        "meta": problem.meta,
    }
    if "family" in problem.meta:
        d["family"] = problem.meta["family"]
        d["params"] = problem.meta["params"]
        return d
    quad = problem.objective.as_quadratic()
    if quad is None:
        raise ValueError(
            "only quadratic objectives and generator-tagged problems serialize; "
            f"got {problem.objective!r} with no recipe in meta"
        )
    Q, c = quad
    d["objective"] = {
        "type": "quadratic",
        "Q": Q.tolist(),
        "c": c.tolist(),
        "constant": problem.objective.constant,
        "l_f": problem.objective.l_f,
        "f_lower": problem.objective.f_lower,
        "name": problem.objective.name,
    }
    return d


def problem_from_dict(d: dict) -> ConstrainedProblem:
    """Inverse of :func:`problem_to_dict`."""
    if "family" in d:
        from . import benchmarks  # deferred: benchmarks imports this module

        return benchmarks.generate(d["family"], **d["params"])
    spec = d["objective"]
    if spec["type"] != "quadratic":
        raise ValueError(f"unknown objective type {spec['type']!r}")
    obj = QuadraticObjective(
        np.array(spec["Q"]), np.array(spec["c"]), constant=spec.get("constant", 0.0),
        l_f=spec.get("l_f"), f_lower=spec.get("f_lower", -np.inf),
        name=spec.get("name", "quadratic"),
    )
    return ConstrainedProblem(
        obj, np.array(d["A"]), np.array(d["b"]), PolyhedralSet.from_dict(d["domain"]),
        name=d.get("name", "problem"), x0=np.array(d["x0"]) if "x0" in d else None,
        norm_A=d.get("norm_A"), meta=d.get("meta"),
    )
