"""Analysis-side oracles and numerical audits.

Everything in this module is diagnostic machinery: proximal inner solves for
the comparison points the convergence analysis reasons about (the envelope
point u*, the smoothed-AL minimizer x*(y, z), and the feasible proximal point
xbar*(z)), the Moreau-envelope gradient built from them, the potential
function that certifies descent, and randomized audits of the error-bound
inequalities, the global error bound, the potential lower bound, and the
momentum-estimator variance recursion.

These routines may evaluate exact gradients freely; they are never called on
the hot path of a solver run.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import SeededRng, as_vector
from .geometry import project, violation
from .problem import ConstrainedProblem, al_value, smoothness_constant_K
from .oracles import FiniteSumOracle

DEFAULT_TOL = 1e-10
DEFAULT_CAP = 10 ** 6


class InnerSolveError(RuntimeError):
    """An inner solve hit its iteration cap or detected infeasibility."""

    def __init__(self, message, residual=np.inf, iterations=0):
        super().__init__(message)
        self.residual = float(residual)
        self.iterations = int(iterations)


@dataclass
class InnerSolveResult:
    """Solution bundle from a proximal inner solve.

    ``residual`` is the projected-gradient-map norm at the reported
    minimizer (for the feasible proximal point it is the max of that and
    the constraint residual, so success always means residual <= tol).
    """

    x: np.ndarray
    value: float
    residual: float
    iterations: int
    multiplier: np.ndarray | None = None


@dataclass
class AuditReport:
    """Outcome of a randomized inequality audit.

    ``worst_slack`` is the largest signed violation ``lhs - rhs`` seen
    (<= 0 means every sampled inequality held); ``violations`` counts
    trials that failed beyond the relative tolerance.
    """

    name: str
    trials: int
    worst_slack: float
    violations: int
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        return {
            "name": self.name, "trials": self.trials,
            "worst_slack": self.worst_slack, "violations": self.violations,
            "tolerance": self.tolerance, "passed": self.passed,
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# proximal inner solves
# ---------------------------------------------------------------------------


def _prox_model_solve(problem, y, z, mu, rho, lam, x_anchor, tol, max_iter,
                      x_init):
    """Minimize f(u) + <Au-b, y> + (rho/2)||Au-b||^2 + (mu/2)||u-z||^2
    + (lam/2)||u-x_anchor||^2 over the domain.

    Projected gradient with step 1/L; the quadratic/encodable fast path
    runs inside the jitted kernel.  Returns (u, residual, iterations).
    """
    A, b = problem.A, problem.b
    L = problem.objective.l_f + rho * problem.norm_A ** 2 + mu + lam
    step = 1.0 / L
    u0 = project(problem.domain, problem.x0 if x_init is None else
                 as_vector(x_init, "x_init"))
    quad = problem.objective.as_quadratic()
    if quad is not None and problem.domain.kind != "halfspaces":
        Q, c = quad
        kind, lo, hi, radius = problem.domain.encode()
        c0 = c + A.T @ y
        anchor = u0 if x_anchor is None else x_anchor
        u, resid, its = _kernels.pgd_quadratic(
            Q, c0, A, b, rho, mu, z, lam, anchor,
            kind, lo, hi, radius, step, tol, max_iter, u0)
        return np.asarray(u), float(resid), int(its)
    grad_f = problem.objective.grad
    u = u0
    resid = np.inf
    its = 0
    while its < max_iter:
        g = grad_f(u) + A.T @ y + rho * (A.T @ (A @ u - b)) + mu * (u - z)
        if lam != 0.0:
            g = g + lam * (u - x_anchor)
        u_next = project(problem.domain, u - step * g)
        resid = float(np.linalg.norm(u_next - u)) / step
        u = u_next
        its += 1
        if resid <= tol:
            break
    return u, resid, its


def _k_value(problem, x, y, z, mu, rho) -> float:
    """Smoothed AL: f + <Ax-b, y> + (rho/2)||Ax-b||^2 + (mu/2)||x-z||^2."""
    return al_value(problem.objective, problem.A, problem.b, x, y, rho) \
        + 0.5 * mu * float(np.sum((x - z) ** 2))


def _require_strongly_convex(problem, mu):
    if mu <= problem.objective.l_f:
        raise ValueError(
            f"inner solves need mu > L_f (got mu={mu}, "
            f"L_f={problem.objective.l_f}); the proximal model is not "
            "strongly convex otherwise")


def inner_solve_x_star(problem: ConstrainedProblem, y, z, mu: float,
                       rho: float, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_CAP,
                       x_init=None) -> InnerSolveResult:
    """Minimize the smoothed AL over the domain: the point x*(y, z).

    Strongly convex with modulus mu - L_f, so projected gradient at step
    1/L converges linearly; ``value`` is the optimal smoothed-AL value
    d(y, z).
    """
    _require_strongly_convex(problem, mu)
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    u, resid, its = _prox_model_solve(problem, y, z, mu, rho, 0.0, None,
                                      tol, max_iter, x_init)
    if resid > tol:
        raise InnerSolveError(
            f"x*(y,z) solve stopped at residual {resid:.3e} after {its} "
            f"iterations (tol {tol:.1e})", resid, its)
    return InnerSolveResult(u, _k_value(problem, u, y, z, mu, rho), resid, its)


def inner_solve_u_star(problem: ConstrainedProblem, x, y, z, mu: float,
                       rho: float, lam: float, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_CAP,
                       x_init=None) -> InnerSolveResult:
    """Proximal point of the smoothed AL anchored at x: the point u*(x,y,z).

    ``value`` is the Moreau-envelope value
    phi = K(u*) + (lam/2)||u* - x||^2.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    _require_strongly_convex(problem, mu)
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    u, resid, its = _prox_model_solve(problem, y, z, mu, rho, lam, x,
                                      tol, max_iter,
                                      x if x_init is None else x_init)
    if resid > tol:
        raise InnerSolveError(
            f"u*(x,y,z) solve stopped at residual {resid:.3e} after {its} "
            f"iterations (tol {tol:.1e})", resid, its)
    value = _k_value(problem, u, y, z, mu, rho) \
        + 0.5 * lam * float(np.sum((u - x) ** 2))
    return InnerSolveResult(u, value, resid, its)


def inner_solve_xbar(problem: ConstrainedProblem, z, mu: float,
                     tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_CAP,
                     x_init=None, y_init=None,
                     rho0: float | None = None) -> InnerSolveResult:
    """Feasible proximal point xbar*(z): minimize f + (mu/2)||x-z||^2 over
    the domain intersected with {Ax = b}.

    Solved by the unconstrained-in-A inner solver under an augmented
    penalty, with multiplier updates between rounds and a tenfold penalty
    escalation whenever the constraint residual stalls.  ``value`` is
    Psi(z) = f(xbar) + (mu/2)||xbar - z||^2 (no penalty terms);
    ``residual`` is max(gradient-map norm, ||A xbar - b||).
    """
    _require_strongly_convex(problem, mu)
    z = as_vector(z, "z")
    m = problem.n_constraints
    y = np.zeros(m) if y_init is None else as_vector(y_init, "y_init").copy()
    rho = max(1.0, mu) if rho0 is None else float(rho0)
    rho_cap = rho * 1e16
    x = problem.x0 if x_init is None else as_vector(x_init, "x_init")
    total_its = 0
    feas_prev = np.inf
    grad_resid = np.inf
    for _ in range(200):
        x, grad_resid, its = _prox_model_solve(
            problem, y, z, mu, rho, 0.0, None, tol, max_iter, x)
        total_its += its
        if grad_resid > tol:
            raise InnerSolveError(
                f"penalty subproblem stopped at residual {grad_resid:.3e} "
                f"(tol {tol:.1e})", grad_resid, total_its)
        r = problem.residual(x)
        feas = float(np.linalg.norm(r))
        if feas <= tol:
            psi = problem.objective.value(x) \
                + 0.5 * mu * float(np.sum((x - z) ** 2))
            return InnerSolveResult(x, psi, max(grad_resid, feas),
                                    total_its, multiplier=y)
        y = y + rho * r
        if feas > 0.25 * feas_prev:
            rho *= 10.0
            if rho > rho_cap:
                raise InnerSolveError(
                    "constraint residual stalled at "
                    f"{feas:.3e} under penalty escalation; the feasible "
                    "set {x in X : Ax = b} looks empty", feas, total_its)
        feas_prev = feas
    raise InnerSolveError(
        f"feasible proximal solve did not reach ||Ax-b|| <= {tol:.1e} "
        f"(last {feas_prev:.3e})", feas_prev, total_its)


def moreau_grad(problem: ConstrainedProblem, z, mu: float,
                tol: float = DEFAULT_TOL, xbar: InnerSolveResult | None = None
                ) -> np.ndarray:
    """Gradient of the proximal value function: mu * (z - xbar*(z)).

    Danskin's theorem applied to Psi(z) = min over the feasible set of
    f + (mu/2)||. - z||^2.  Pass a precomputed ``xbar`` to reuse a solve.
    """
    z = as_vector(z, "z")
    if xbar is None:
        xbar = inner_solve_xbar(problem, z, mu, tol)
    return mu * (z - xbar.x)


# ---------------------------------------------------------------------------
# stationarity measures
# ---------------------------------------------------------------------------


@dataclass
class StationarityReport:
    """Gradient-mapping stationarity measure at (x, y).

    ``norm`` is the gradient-map norm ||x - x'|| / s, the quantity the
    complexity theory bounds (it equals ||grad f + A'y|| on the
    unconstrained interior).  ``v`` is an exact member of
    grad f(x') + A'y + N_X(x') at the displaced point x', with
    ||v|| <= 2 * norm whenever s <= 1/L_f.
    """

    x_prime: np.ndarray
    v: np.ndarray
    norm: float
    v_norm: float
    feasibility: float


def stationarity_residual(problem: ConstrainedProblem, x, y,
                          s: float | None = None) -> StationarityReport:
    """Exact-gradient stationarity measure for the original problem.

    Takes one projected step x' = proj_X(x - s (grad f(x) + A'y)) and
    reports the gradient-map norm together with the certified
    subdifferential member at x'.  Diagnostic-time only: uses the exact
    gradient twice.
    """
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    if s is None:
        l_f = problem.objective.l_f
        s = 1.0 / l_f if l_f > 0 else 1.0
    g = problem.objective.grad(x) + problem.A.T @ y
    x_prime = project(problem.domain, x - s * g)
    w = (x - x_prime) / s
    v = problem.objective.grad(x_prime) - problem.objective.grad(x) + w
    return StationarityReport(
        x_prime=x_prime, v=v, norm=float(np.linalg.norm(w)),
        v_norm=float(np.linalg.norm(v)),
        feasibility=float(np.linalg.norm(problem.residual(x_prime))),
    )


# ---------------------------------------------------------------------------
# potential function
# ---------------------------------------------------------------------------


@dataclass
class PotentialTerms:
    """Breakdown of the descent potential at one (x, y, z) tuple."""

    phi: float
    d: float
    psi: float
    value: float
    u_star: InnerSolveResult
    x_star: InnerSolveResult
    xbar_star: InnerSolveResult


def potential_terms(problem: ConstrainedProblem, x, y, z, params,
                    tol: float = DEFAULT_TOL, core: str = "envelope",
                    warm: PotentialTerms | None = None) -> PotentialTerms:
    """Evaluate phi, d, Psi, and the potential via three inner solves.

    ``core`` selects the first term: "envelope" uses the Moreau envelope
    phi (the descent potential of the plain analysis), "al" the raw
    smoothed AL value at x (the momentum analysis's variant).  ``warm``
    reuses a previous evaluation's minimizers and multiplier as starts.
    """
    if core not in ("envelope", "al"):
        raise ValueError("core must be 'envelope' or 'al'")
    x = as_vector(x, "x")
    y = as_vector(y, "y")
    z = as_vector(z, "z")
    mu, rho, lam = params.mu, params.rho, params.lam
    u = inner_solve_u_star(problem, x, y, z, mu, rho, lam, tol,
                           x_init=None if warm is None else warm.u_star.x)
    xs = inner_solve_x_star(problem, y, z, mu, rho, tol,
                            x_init=u.x if warm is None else warm.x_star.x)
    xb = inner_solve_xbar(problem, z, mu, tol,
                          x_init=None if warm is None else warm.xbar_star.x,
                          y_init=None if warm is None else
                          warm.xbar_star.multiplier)
    phi = u.value if core == "envelope" else _k_value(problem, x, y, z, mu, rho)
    value = phi - 2.0 * xs.value + 2.0 * xb.value
    return PotentialTerms(phi=phi, d=xs.value, psi=xb.value, value=value,
                          u_star=u, x_star=xs, xbar_star=xb)


def potential_value(problem: ConstrainedProblem, x, y, z, params,
                    tol: float = DEFAULT_TOL, grad_est=None,
                    l0: float | None = None, core: str = "envelope",
                    warm: PotentialTerms | None = None) -> float:
    """Descent potential V = phi - 2 d + 2 Psi (envelope core by default).

    When ``grad_est`` is supplied, adds the variance-control term
    ||grad_est - grad f(x)||^2 / (48 (L_0^2 + L_f^2) tau), which vanishes
    for an exact estimate.
    """
    terms = potential_terms(problem, x, y, z, params, tol, core, warm)
    value = terms.value
    if grad_est is not None:
        err2 = float(np.sum((as_vector(grad_est, "grad_est")
                             - problem.objective.grad(as_vector(x, "x"))) ** 2))
        if err2 > 0.0:
            l0 = problem.objective.l_f if l0 is None else float(l0)
            denom = 48.0 * (l0 ** 2 + problem.objective.l_f ** 2) * params.tau
            if denom <= 0:
                raise ValueError(
                    "the variance term needs L_0^2 + L_f^2 > 0 and tau > 0")
            value += err2 / denom
    return value


def attach_potential(problem: ConstrainedProblem, params, trace,
                     tol: float = 1e-9) -> np.ndarray:
    """Fill a recorded trace's potential column from its stored iterates.

    Requires the run to have been made with ``record_iterates=True``;
    inner solves are warm-started across rows, so the sweep costs a few
    projected-gradient iterations per step after the first.
    """
    if trace.iterates is None:
        raise ValueError("trace has no recorded iterates; rerun the solver "
                         "with record_iterates=True")
    out = np.empty(len(trace.iterates))
    warm = None
    for k, (x, y, z) in enumerate(trace.iterates):
        warm = potential_terms(problem, x, y, z, params, tol, warm=warm)
        out[k] = warm.value
    trace.potential = out
    return out


# ---------------------------------------------------------------------------
# randomized audits
# ---------------------------------------------------------------------------


def _as_rng(rng):
    if rng is None:
        return SeededRng(0)
    return rng


def _sample_tuple(problem, rng, scale=1.0):
    x = problem.domain.sample_point(rng, scale=scale)
    y = scale * rng.standard_normal(problem.n_constraints)
    z = problem.domain.sample_point(rng, scale=scale)
    return x, y, z


def audit_error_bounds(problem: ConstrainedProblem, params, trials: int,
                       rng=None, tol: float = 1e-6,
                       inner_tol: float = DEFAULT_TOL) -> AuditReport:
    """Check the seven Lipschitz/error-bound inequalities on random tuples.

    Each trial samples (x in X, y, z in X) plus perturbed (y', z' in X)
    and evaluates both sides of every inequality through the inner
    solvers.  A violation is lhs > rhs beyond ``tol`` relative slack.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = _as_rng(rng)
    mu, rho, lam = params.mu, params.rho, params.lam
    l_f = problem.objective.l_f
    _require_strongly_convex(problem, mu)
    norm_A = problem.norm_A
    gamma = (mu - l_f) * lam / (mu - l_f + lam)
    gamma_s = mu - l_f + lam
    gamma_k = mu - l_f
    names = ["envelope-vs-alm-gap", "prox-step-shrinks", "u-dual-lipschitz",
             "u-center-lipschitz", "xstar-center-lipschitz",
             "xstar-dual-lipschitz", "xbar-center-lipschitz"]
    worst = {n: -np.inf for n in names}
    bad = {n: 0 for n in names}

    def record(name, lhs, rhs):
        slack = lhs - rhs
        worst[name] = max(worst[name], slack)
        if slack > tol * max(1.0, abs(rhs)):
            bad[name] += 1

    for k in range(trials):
        child = rng.child(k)
        x, y, z = _sample_tuple(problem, child)
        y2 = y + child.standard_normal(problem.n_constraints)
        z2 = problem.domain.sample_point(child)
        u = inner_solve_u_star(problem, x, y, z, mu, rho, lam, inner_tol)
        u_y2 = inner_solve_u_star(problem, x, y2, z, mu, rho, lam, inner_tol)
        u_z2 = inner_solve_u_star(problem, x, y, z2, mu, rho, lam, inner_tol)
        xs = inner_solve_x_star(problem, y, z, mu, rho, inner_tol)
        xs_y2 = inner_solve_x_star(problem, y2, z, mu, rho, inner_tol)
        xs_z2 = inner_solve_x_star(problem, y, z2, mu, rho, inner_tol)
        xb = inner_solve_xbar(problem, z, mu, inner_tol)
        xb_z2 = inner_solve_xbar(problem, z2, mu, inner_tol)

        record("envelope-vs-alm-gap",
               np.linalg.norm(x - xs.x),
               (lam / gamma) * np.linalg.norm(x - u.x))
        record("prox-step-shrinks",
               np.linalg.norm(u.x - x), np.linalg.norm(x - xs.x))
        record("u-dual-lipschitz",
               np.linalg.norm(u.x - u_y2.x),
               (norm_A / gamma_s) * np.linalg.norm(y - y2))
        record("u-center-lipschitz",
               np.linalg.norm(u.x - u_z2.x),
               (mu / gamma_s) * np.linalg.norm(z - z2))
        record("xstar-center-lipschitz",
               gamma_k / mu * np.linalg.norm(xs.x - xs_z2.x),
               np.linalg.norm(z - z2))
        record("xstar-dual-lipschitz",
               (gamma_k / norm_A) * np.linalg.norm(xs.x - xs_y2.x)
               if norm_A > 0 else 0.0,
               np.linalg.norm(y - y2))
        record("xbar-center-lipschitz",
               np.linalg.norm(xb.x - xb_z2.x),
               (mu / gamma_k) * np.linalg.norm(z - z2))

    return AuditReport(
        name="error-bounds", trials=trials,
        worst_slack=float(max(worst.values())),
        violations=int(sum(bad.values())), tolerance=tol,
        details={n: {"worst_slack": float(worst[n]), "violations": bad[n]}
                 for n in names},
    )


def hoffman_estimate(problem: ConstrainedProblem, params, trials: int,
                     rng=None, inner_tol: float = DEFAULT_TOL,
                     floor: float = 1e-12) -> float:
    """Empirical lower estimate of the regularity constant relating
    ||x*(y,z) - xbar*(z)|| to the constraint residual of x*(y,z).

    Max over sampled (y, z) of the ratio with a floored denominator;
    monotone in ``trials`` under the child-stream contract (trial k always
    draws from child k).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = _as_rng(rng)
    mu, rho = params.mu, params.rho
    best = 0.0
    for k in range(trials):
        child = rng.child(k)
        _, y, z = _sample_tuple(problem, child)
        xs = inner_solve_x_star(problem, y, z, mu, rho, inner_tol)
        xb = inner_solve_xbar(problem, z, mu, inner_tol)
        num = float(np.linalg.norm(xs.x - xb.x))
        den = max(float(np.linalg.norm(problem.residual(xs.x))), floor)
        # a feasible x* coincides with xbar*; tiny numerators stay harmless
        best = max(best, num / den if num > floor else 0.0)
    return best


def audit_potential_lower_bound(problem: ConstrainedProblem, params,
                                trials: int, rng=None, tol: float = 1e-6,
                                inner_tol: float = DEFAULT_TOL) -> AuditReport:
    """Check V(x, y, z) >= f_lower on random tuples with x, z in the set."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    f_low = problem.objective.f_lower
    if not np.isfinite(f_low):
        raise ValueError("the objective carries no finite lower bound")
    rng = _as_rng(rng)
    worst = -np.inf
    bad = 0
    for k in range(trials):
        child = rng.child(k)
        x, y, z = _sample_tuple(problem, child)
        v = potential_value(problem, x, y, z, params, inner_tol)
        slack = f_low - v
        worst = max(worst, slack)
        if slack > tol * max(1.0, abs(f_low)):
            bad += 1
    return AuditReport(name="potential-lower-bound", trials=trials,
                       worst_slack=float(worst), violations=bad,
                       tolerance=tol)


def audit_storm_recursion(oracle, pairs, alpha: float, tol: float = 1e-6
                          ) -> AuditReport:
    """Verify the momentum-estimator variance recursion by enumeration.

    For each supplied (x_old, x_new, d_old) triple, the conditional
    second moment of the updated estimator's error (exact expectation
    over the oracle's atoms) must not exceed
    (1-alpha)^2 ||d_old - grad f(x_old)||^2
    + 3 (L_0^2 + L_f^2) ||x_new - x_old||^2 + 3 alpha^2 sigma^2.
    """
    if not isinstance(oracle, FiniteSumOracle):
        raise TypeError("enumeration needs a finite-sum oracle")
    n_atoms = oracle.n_atoms
    if n_atoms > 16:
        raise ValueError("too many atoms to enumerate (max 16)")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    l0 = oracle.l0
    l_f = oracle.objective.l_f
    sigma2 = oracle.sigma2
    worst = -np.inf
    bad = 0
    count = 0
    for x_old, x_new, d_old in pairs:
        x_old = as_vector(x_old, "x_old")
        x_new = as_vector(x_new, "x_new")
        d_old = as_vector(d_old, "d_old")
        g_new = oracle.mean(x_new)
        g_old_mean = oracle.mean(x_old)
        lhs = 0.0
        for i in range(n_atoms):
            d_next = oracle.atom_grad(i, x_new) \
                + (1.0 - alpha) * (d_old - oracle.atom_grad(i, x_old))
            lhs += float(np.sum((d_next - g_new) ** 2)) / n_atoms
        rhs = (1.0 - alpha) ** 2 * float(np.sum((d_old - g_old_mean) ** 2)) \
            + 3.0 * (l0 ** 2 + l_f ** 2) * float(np.sum((x_new - x_old) ** 2)) \
            + 3.0 * alpha ** 2 * sigma2
        slack = lhs - rhs
        worst = max(worst, slack)
        if slack > tol * max(1.0, abs(rhs)):
            bad += 1
        count += 1
    if count == 0:
        raise ValueError("no iterate pairs supplied")
    return AuditReport(name="variance-recursion", trials=count,
                       worst_slack=float(worst), violations=bad,
                       tolerance=tol)


def estimate_My_bounds(problem: ConstrainedProblem, params, trials: int = 256,
                       rng=None, inner_tol: float = 1e-8) -> dict:
    """Monte-Carlo estimates of the constants behind the dual safeguard.

    Maximizes the potential-at-zero-dual and the AL magnitude over sampled
    (x, z) pairs from the (bounded) set, lower-bounds Psi by the
    objective's known floor when available, and estimates the interior
    radius r of {Ax - b : x in X} by sampled directions.  Feed the result
    to ``choose_My``.
    """
    if problem.domain.is_bounded() is not True:
        raise ValueError("safeguard constants need a bounded set")
    rng = _as_rng(rng)
    mu, rho = params.mu, params.rho
    m = problem.n_constraints
    y0 = np.zeros(m)
    M_V = -np.inf
    M = -np.inf
    psi_min = np.inf
    images = np.empty((trials, m))
    for k in range(trials):
        child = rng.child(k)
        x = problem.domain.sample_point(child)
        z = problem.domain.sample_point(child)
        k_val = _k_value(problem, x, y0, z, mu, rho)
        d_val = inner_solve_x_star(problem, y0, z, mu, rho, inner_tol).value
        psi_val = inner_solve_xbar(problem, z, mu, inner_tol).value
        M_V = max(M_V, k_val - 2.0 * d_val + 2.0 * psi_val)
        M = max(M, abs(problem.objective.value(x))
                + 0.5 * mu * float(np.sum((x - z) ** 2))
                + 0.5 * rho * float(np.sum(problem.residual(x) ** 2)))
        psi_min = min(psi_min, psi_val)
        images[k] = problem.residual(x)
    f_low = problem.objective.f_lower
    M_psi = f_low if np.isfinite(f_low) else psi_min
    # interior radius of the constraint image around the origin
    dir_rng = rng.child(trials)
    r = np.inf
    for _ in range(64):
        d = problem.A @ dir_rng.standard_normal(problem.dim)
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        r = min(r, float(np.max(images @ (d / nd))))
    if not np.isfinite(r) or r <= 0:
        r = 0.0
    return {"M_V": float(M_V), "M_Psi": float(M_psi), "M": float(M),
            "r": float(r)}
