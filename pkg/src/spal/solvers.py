"""Single-loop stochastic smoothed augmented-Lagrangian solvers.

Three variants share the same iteration skeleton — dual ascent step, one
stochastic proximal-AL gradient, projected primal step, proximal-center
drift ``z += beta (x - z)`` using the *old* x:

* :func:`run_alg1` — deterministic constraints, one gradient sample/step;
* :func:`run_alg2` — sampled constraints ``(A_z, b_z)`` with a dual
  safeguard that resets ``y`` to zero whenever ``||y|| >= M_y``;
* :func:`run_alg3` — deterministic constraints with a recursive-momentum
  (two-point) gradient estimator.

Runs are pure functions of ``(problem, oracle kind and its parameters,
params, seed)``: all randomness is pre-drawn from child streams of the run
seed into per-chunk tables that both the compiled and the plain execution
paths consume identically.  The uniformly random certificate index ``t*``
is drawn up front and the tuple ``(x_{t*}, y_{t*+1}, z_{t*})`` is captured
in-pass; :func:`postprocess` turns it into a stationarity certificate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .core import SeededRng, as_vector
from .geometry import project, violation
from .oracles import ConstraintSampler, GradientOracle
from .problem import ConstrainedProblem, smoothness_constant_K

# Steps per pre-drawn randomness chunk; bounds table memory at chunk*n floats.
CHUNK = 16384


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass
class SolverParams:
    """Step sizes and constants shared by all solver variants.

    ``lam`` is the smoothing weight of the proximal term in the
    stationarity surrogate (equal to the AL smoothness constant when
    derived).  ``alpha`` only matters for the momentum variant, ``M_y``
    only for the safeguarded one.  ``sigma_bar`` is the feasibility-to-
    distance scale entering the ``beta`` schedule.
    """

    rho: float
    tau: float
    eta: float
    beta: float
    mu: float
    lam: float
    alpha: float = 1.0
    M_y: float = np.inf
    sigma_bar: float = 1.0
    T: int = 1000

    def validate(self, l_f: float | None = None, strict: bool = False) -> None:
        """Range checks; ``strict`` also enforces the derived-schedule
        invariants (overridden parameters are allowed to break those)."""
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        for name in ("tau", "eta", "beta", "mu", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.beta > 1.0:
            raise ValueError("beta must not exceed 1 (z drift is a convex combination)")
        if self.M_y <= 0:
            raise ValueError("M_y must be positive")
        if self.sigma_bar <= 0:
            raise ValueError("sigma_bar must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if strict:
            if self.tau * self.lam > 1.0 / 6.0 + 1e-12:
                raise ValueError(
                    f"derived schedule requires tau*lam <= 1/6, got {self.tau * self.lam:g}"
                )
            if l_f is not None and self.mu < max(2.0, 4.0 * l_f) - 1e-12:
                raise ValueError("derived schedule requires mu >= max(2, 4*L_f)")

    def as_dict(self) -> dict:
        return {
            "rho": self.rho, "tau": self.tau, "eta": self.eta, "beta": self.beta,
            "mu": self.mu, "lam": self.lam, "alpha": self.alpha,
            "M_y": self.M_y, "sigma_bar": self.sigma_bar, "T": self.T,
        }

    def override(self, **kw) -> "SolverParams":
        """Copy with the given fields replaced (None values are ignored)."""
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _eta_schedule(tau: float, mu: float, rho: float, norm_A: float) -> float:
    if norm_A == 0.0:
        return tau
    a2 = norm_A * norm_A
    return min(
        (2.0 * mu + rho * norm_A) / (4.0 * a2 * a2),
        tau / (200.0 * a2),
        tau * (2.0 * mu + rho * a2) / (20.0 * a2),
    )


def derive_params_alg1(l_f: float, norm_A: float, rho: float, sigma_bar: float,
                       T: int, lk_norm_squared: bool = True) -> SolverParams:
    """Conservative schedule for the plain variant.

    ``mu = max(2, 4 L_f)``; ``lam`` is the AL smoothness constant;
    ``tau = min(1/(6 lam^2 sqrt(T)), 1/(6 lam))`` so that ``tau*lam <= 1/6``
    holds for every ``T``; ``eta`` and ``beta`` are the minima of their
    respective guard terms.  With ``norm_A = 0`` the constraint-dependent
    guards are vacuous and ``eta = tau``.
    """
    if l_f < 0 or norm_A < 0 or rho < 0:
        raise ValueError("l_f, norm_A, rho must be nonnegative")
    if sigma_bar <= 0:
        raise ValueError("sigma_bar must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    mu = max(2.0, 4.0 * l_f)
    lam = smoothness_constant_K(l_f, norm_A, rho, mu, norm_squared=lk_norm_squared)
    tau = min(1.0 / (6.0 * lam * lam * np.sqrt(T)), 1.0 / (6.0 * lam))
    eta = _eta_schedule(tau, mu, rho, norm_A)
    beta = min(tau / 100.0, 1.0 / (50.0 * lam), eta / (36.0 * mu * sigma_bar**2))
    return SolverParams(rho=rho, tau=tau, eta=eta, beta=beta, mu=mu, lam=lam,
                        sigma_bar=sigma_bar, T=int(T))


def derive_params_storm(l_f: float, l0: float, norm_A: float, rho: float,
                        sigma_bar: float = 1.0, T: int | None = None,
                        lk_norm_squared: bool = True) -> SolverParams:
    """Schedule for the recursive-momentum variant.

    ``tau`` is set to its upper bound
    ``min(1/(4 L_K + 8 mu), 1/sqrt(48 (l0^2 + l_f^2)))`` and
    ``alpha = 48 (l0^2 + l_f^2) tau^2``, which the tau bound keeps in
    ``(0, 1]``.  ``T`` only populates the iteration-count field; the step
    sizes do not depend on it.  ``l0 = l_f = 0`` degenerates to
    ``alpha = 0``, which is clamped to the plain-gradient value 1 (the
    momentum update with zero smoothness carries no history to exploit).
    """
    if l_f < 0 or l0 < 0 or norm_A < 0 or rho < 0:
        raise ValueError("l_f, l0, norm_A, rho must be nonnegative")
    if sigma_bar <= 0:
        raise ValueError("sigma_bar must be positive")
    mu = max(2.0, 4.0 * l_f)
    lam = smoothness_constant_K(l_f, norm_A, rho, mu, norm_squared=lk_norm_squared)
    curv = 48.0 * (l0 * l0 + l_f * l_f)
    tau = 1.0 / (4.0 * lam + 8.0 * mu)
    if curv > 0:
        tau = min(tau, 1.0 / np.sqrt(curv))
    if norm_A == 0.0:
        eta = tau
    else:
        a2 = norm_A * norm_A
        eta = min((mu - l_f) ** 2 * tau / (4.0 * a2), _eta_schedule(tau, mu, rho, norm_A))
    beta = min(tau / 100.0, 1.0 / 50.0, eta / (36.0 * mu * sigma_bar**2))
    alpha = curv * tau * tau
    if alpha == 0.0 or alpha > 1.0:
        alpha = 1.0
    return SolverParams(rho=rho, tau=tau, eta=eta, beta=beta, mu=mu, lam=lam,
                        alpha=alpha, sigma_bar=sigma_bar,
                        T=int(T) if T is not None else 1000)


def choose_My(M_V: float, M_Psi: float, M: float, r: float, margin: float = 0.1) -> float:
    """Dual safeguard radius ``(M_V - M_Psi + 2M)/r`` with a safety margin.

    Returns the threshold scaled by ``1 + margin``; degenerate (nonpositive)
    bounds fall back to the floor 1.0.  ``r`` is the dual growth rate the
    bound is stated against and must be positive.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    base = (M_V - M_Psi + 2.0 * M) / r
    out = base * (1.0 + margin)
    return float(out) if out > 0 else 1.0


def storm_minibatch_size(T: int) -> int:
    """Initialization batch size for the momentum estimator: max(1, round(T^(1/6)))."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return max(1, int(round(T ** (1.0 / 6.0))))


def storm_init(problem: ConstrainedProblem, oracle: GradientOracle, T: int,
               rng=None, x0=None) -> np.ndarray:
    """Minibatch initialization of the momentum gradient estimate.

    Averages ``N = max(1, round(T^{1/6}))`` independent samples at the
    start point; only the initialization uses a minibatch.
    """
    x0 = problem.x0 if x0 is None else as_vector(x0, "x0")
    n_draws = storm_minibatch_size(T)
    acc = np.zeros(problem.dim)
    for _ in range(n_draws):
        acc += oracle.sample(x0, rng=rng)
    return acc / n_draws


# ---------------------------------------------------------------------------
# state, trace, results
# ---------------------------------------------------------------------------


@dataclass
class SolverState:
    """Iterate bundle: primal ``x``, dual ``y``, proximal center ``z``,
    momentum gradient estimate (variant 3 only), safeguard reset count."""

    t: int
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    grad_est: np.ndarray | None = None
    resets: int = 0

    def copy(self) -> "SolverState":
        return SolverState(self.t, self.x.copy(), self.y.copy(), self.z.copy(),
                           None if self.grad_est is None else self.grad_est.copy(),
                           self.resets)


def init_state(problem: ConstrainedProblem, x0=None, y0=None, z0=None) -> SolverState:
    """Start state: ``x0`` projected onto the set, ``z0 = x0``, ``y0 = 0``."""
    x = project(problem.domain, problem.x0 if x0 is None else as_vector(x0, "x0"))
    y = np.zeros(problem.n_constraints) if y0 is None else as_vector(y0, "y0").copy()
    z = x.copy() if z0 is None else as_vector(z0, "z0").copy()
    return SolverState(t=0, x=x, y=y, z=z)


@dataclass
class Trace:
    """Per-iteration scalar records at a fixed stride.

    Row ``r`` describes step ``t[r]``: constraint residual and set violation
    of ``x_t``, the stationarity estimate (projected-gradient map using the
    exact mean objective gradient and the freshly updated dual — an
    *estimate* because (x, y) is the running pair, not the certified
    post-processed output; the solver step itself still consumes the noisy
    sample), the post-update (post-safeguard) dual norm ``||y_{t+1}||``,
    the proximal gap ``||x_t - z_t||``, and the cumulative safeguard reset
    count.  ``potential`` and ``iterates`` are filled only on request.
    """

    t: np.ndarray
    feas: np.ndarray
    set_violation: np.ndarray
    stat_est: np.ndarray
    dual_norm: np.ndarray
    x_minus_z: np.ndarray
    resets: np.ndarray
    potential: np.ndarray | None = None
    iterates: list | None = None  # [(x_t, y_t, z_t)] at the recorded rows
    stride: int = 1

    def __len__(self):
        return self.t.shape[0]

    def columns(self) -> dict:
        """Column name -> array, in the canonical CSV order."""
        cols = {
            "t": self.t, "feas": self.feas, "set_violation": self.set_violation,
            "stat_est": self.stat_est, "dual_norm": self.dual_norm,
            "x_minus_z": self.x_minus_z, "resets": self.resets,
        }
        if self.potential is not None:
            cols["potential"] = self.potential
        return cols

    def truncate(self, n_rows: int) -> "Trace":
        kw = {}
        if self.potential is not None:
            kw["potential"] = self.potential[:n_rows]
        if self.iterates is not None:
            kw["iterates"] = self.iterates[:n_rows]
        return Trace(self.t[:n_rows], self.feas[:n_rows], self.set_violation[:n_rows],
                     self.stat_est[:n_rows], self.dual_norm[:n_rows],
                     self.x_minus_z[:n_rows], self.resets[:n_rows],
                     stride=self.stride, **kw)


@dataclass
class RunSnapshot:
    """The certificate tuple ``(x_{t*}, y_{t*+1}, z_{t*})``."""

    t_star: int
    x: np.ndarray
    y_next: np.ndarray
    z: np.ndarray


@dataclass
class RunResult:
    algorithm: str
    trace: Trace
    state: SolverState
    snapshot: RunSnapshot | None
    params: SolverParams
    n_oracle_samples: int
    n_constraint_draws: int
    wallclock: float
    diverged: bool = False
    early_stopped: bool = False
    used_kernels: bool = False


@dataclass
class StationarityCertificate:
    """Near-stationarity certificate from the post-processing step.

    ``v`` is an exact member of ``grad f(x_hat) + A'y + N_X(x_hat)`` by
    construction of the projected step, so ``residual_norm = ||v||`` and
    ``feasibility = ||A x_hat - b||`` bound the distance to stationarity.
    """

    x_hat: np.ndarray
    y: np.ndarray
    v: np.ndarray
    residual_norm: float
    feasibility: float
    batch: int
    tau: float


# ---------------------------------------------------------------------------
# single steps (reference semantics; the run loops mirror these exactly)
# ---------------------------------------------------------------------------


def step_alg1(problem: ConstrainedProblem, oracle: GradientOracle,
              params: SolverParams, state: SolverState, rng=None) -> SolverState:
    """One plain iteration: dual ascent, sample, projected step, z drift.

    Consumes exactly one oracle draw.  The drift uses the pre-update ``x``.
    """
    A, b = problem.A, problem.b
    x, y, z = state.x, state.y, state.z
    r = A @ x - b
    y_next = y + params.eta * r
    gf = oracle.sample(x, rng=rng)
    G = gf + A.T @ y_next + params.rho * (A.T @ r) + params.mu * (x - z)
    x_next = project(problem.domain, x - params.tau * G)
    z_next = z + params.beta * (x - z)
    return SolverState(state.t + 1, x_next, y_next, z_next, None, state.resets)


def step_alg2(problem: ConstrainedProblem, oracle: GradientOracle,
              sampler: ConstraintSampler, params: SolverParams, state: SolverState,
              rng=None, constraint_rng=None) -> SolverState:
    """One safeguarded iteration with sampled constraints.

    Per-step draw order: constraint draw for the dual ascent, two
    independent constraint draws for the search direction, one objective
    sample.  The dual reset fires on ``||y|| >= M_y`` (inclusive) and
    increments the state's reset counter.
    """
    x, y, z = state.x, state.y, state.z
    A_d, b_d = sampler.sample(rng=constraint_rng)
    y_next = y + params.eta * (A_d @ x - b_d)
    resets = state.resets
    if np.linalg.norm(y_next) >= params.M_y:
        y_next = np.zeros_like(y_next)
        resets += 1
    A1, _ = sampler.sample(rng=constraint_rng)
    A2, b2 = sampler.sample(rng=constraint_rng)
    gf = oracle.sample(x, rng=rng)
    G = (gf + A1.T @ y_next + params.rho * (A1.T @ (A2 @ x - b2))
         + params.mu * (x - z))
    x_next = project(problem.domain, x - params.tau * G)
    z_next = z + params.beta * (x - z)
    return SolverState(state.t + 1, x_next, y_next, z_next, None, resets)


def step_alg3(problem: ConstrainedProblem, oracle: GradientOracle,
              params: SolverParams, state: SolverState, rng=None,
              literal_lambda: bool = False) -> SolverState:
    """One momentum iteration.

    Uses the carried gradient estimate in the search direction, then
    refreshes it with one fresh ticket evaluated at both the new and the
    old point.  ``literal_lambda`` swaps the proximal-center weight from
    ``mu`` to ``lam`` (a compatibility mode; the default matches the
    smoothed AL whose gradient the direction approximates).
    """
    if state.grad_est is None:
        raise ValueError("state.grad_est is unset; initialize with storm_init")
    A, b = problem.A, problem.b
    x, y, z, d = state.x, state.y, state.z, state.grad_est
    center_w = params.lam if literal_lambda else params.mu
    r = A @ x - b
    y_next = y + params.eta * r
    G = d + A.T @ y_next + params.rho * (A.T @ r) + center_w * (x - z)
    x_next = project(problem.domain, x - params.tau * G)
    z_next = z + params.beta * (x - z)
    g_new, g_old = oracle.sample_pair(x_next, x, rng=rng)
    d_next = g_new + (1.0 - params.alpha) * (d - g_old)
    return SolverState(state.t + 1, x_next, y_next, z_next, d_next, state.resets)


# ---------------------------------------------------------------------------
# run drivers
# ---------------------------------------------------------------------------


def _alloc_trace(T: int, stride: int, record_iterates: bool) -> tuple[Trace, np.ndarray]:
    ts = np.arange(0, T, stride, dtype=np.int64)
    rows = ts.shape[0]
    tr = Trace(
        t=ts, feas=np.zeros(rows), set_violation=np.zeros(rows),
        stat_est=np.zeros(rows), dual_norm=np.zeros(rows),
        x_minus_z=np.zeros(rows), resets=np.zeros(rows, dtype=np.int64),
        iterates=[] if record_iterates else None, stride=stride,
    )
    return tr, np.zeros((rows, 5))


def _kernel_eligible(problem, oracle, record_iterates) -> bool:
    return (not record_iterates
            and problem.domain.kind != "halfspaces"
            and problem.objective.as_quadratic() is not None)


def _stat_map(domain, x, direction, s):
    w = x - project(domain, x - s * direction)
    return float(np.linalg.norm(w)) / s


def snapshot_metrics(problem: ConstrainedProblem, result: RunResult):
    """Stationarity and feasibility at the certified tuple ``(x_{t*}, y_{t*+1})``.

    Same measurement as the trace columns — projected-gradient residual with
    the exact mean objective gradient, ``||A x - b||`` for feasibility — but
    taken at the randomly drawn certificate step instead of the last iterate.
    The last iterate of a long run tends to sit glued to a corner of the set
    where its residual says nothing about the run as a whole; the uniformly
    drawn step is the quantity the convergence guarantees actually speak
    about.  Returns ``(nan, nan)`` when the run produced no snapshot.
    """
    snap = result.snapshot
    if snap is None:
        return float("nan"), float("nan")
    s_map = 1.0 / smoothness_constant_K(problem.objective.l_f, problem.norm_A,
                                        result.params.rho, result.params.mu)
    g = problem.objective.grad(snap.x) + problem.A.T @ snap.y_next
    stat = _stat_map(problem.domain, snap.x, g, s_map)
    feas = float(np.linalg.norm(problem.A @ snap.x - problem.b))
    return stat, feas


def _first_bad_row(arr2d: np.ndarray) -> int:
    bad = ~np.all(np.isfinite(arr2d), axis=1)
    idx = np.nonzero(bad)[0]
    return int(idx[0]) if idx.size else -1


def _finalize(algorithm, params, trace, scalars, state, snap, n_samples,
              n_constraint_draws, t_completed, started, diverged,
              early_stopped, used_kernels, extra_dual):
    """Assemble the result; synthesize the snapshot when t* was never hit."""
    rows_done = int(np.searchsorted(trace.t, t_completed))
    # copy the scalar block into the named columns
    trace.feas[:rows_done] = scalars[:rows_done, 0]
    trace.set_violation[:rows_done] = scalars[:rows_done, 1]
    trace.stat_est[:rows_done] = scalars[:rows_done, 2]
    trace.dual_norm[:rows_done] = scalars[:rows_done, 3]
    trace.x_minus_z[:rows_done] = scalars[:rows_done, 4]
    out_trace = trace.truncate(rows_done)
    if rows_done:
        bad = _first_bad_row(np.column_stack([out_trace.feas, out_trace.stat_est,
                                              out_trace.dual_norm, out_trace.x_minus_z]))
        if bad >= 0:
            out_trace = out_trace.truncate(bad)
            diverged = True
    if snap is None and t_completed > 0 and not diverged:
        # stopped before reaching t*: certify the last completed state instead
        snap = RunSnapshot(state.t, state.x.copy(), extra_dual(state), state.z.copy())
    return RunResult(
        algorithm=algorithm, trace=out_trace, state=state, snapshot=snap,
        params=params, n_oracle_samples=n_samples,
        n_constraint_draws=n_constraint_draws,
        wallclock=time.perf_counter() - started, diverged=diverged,
        early_stopped=early_stopped, used_kernels=used_kernels,
    )


def _early_row(trace, scalars, t0, t_end, eps) -> int:
    """First recorded step index in [t0, t_end) with feas and stat <= eps."""
    if eps is None:
        return -1
    lo = int(np.searchsorted(trace.t, t0))
    hi = int(np.searchsorted(trace.t, t_end))
    for r in range(lo, hi):
        if scalars[r, 0] <= eps and scalars[r, 2] <= eps:
            return int(trace.t[r])
    return -1


def run_alg1(problem: ConstrainedProblem, oracle: GradientOracle,
             params: SolverParams, seed: int = 0, x0=None, y0=None, z0=None,
             trace_stride: int = 1, record_iterates: bool = False,
             early_stop: float | None = None) -> RunResult:
    """Run the plain variant for ``params.T`` steps.

    Consumes exactly ``T`` oracle draws.  Child-stream layout of ``seed``:
    stream 0 draws ``t*``, stream 1 feeds the oracle tables.
    """
    return _run_momentumless(problem, oracle, params, seed, x0, y0, z0,
                             trace_stride, record_iterates, early_stop,
                             algorithm="alg1")


def run_alg3(problem: ConstrainedProblem, oracle: GradientOracle,
             params: SolverParams, seed: int = 0, x0=None, y0=None, z0=None,
             trace_stride: int = 1, record_iterates: bool = False,
             early_stop: float | None = None,
             literal_lambda: bool = False) -> RunResult:
    """Run the momentum variant: minibatch init plus two evaluations/step.

    Oracle budget is ``N + 2T`` gradient evaluations (``N`` init samples,
    then one fresh ticket per step evaluated at two points).
    """
    return _run_momentumless(problem, oracle, params, seed, x0, y0, z0,
                             trace_stride, record_iterates, early_stop,
                             algorithm="alg3", literal_lambda=literal_lambda)


def _run_momentumless(problem, oracle, params, seed, x0, y0, z0, trace_stride,
                      record_iterates, early_stop, algorithm,
                      literal_lambda=False):
    started = time.perf_counter()
    params.validate()
    if trace_stride < 1:
        raise ValueError("trace_stride must be >= 1")
    T = int(params.T)
    state = init_state(problem, x0, y0, z0)
    root = SeededRng(seed)
    oracle_rng = root.child(1)
    trace, scalars = _alloc_trace(T, trace_stride, record_iterates)
    if T == 0:
        return RunResult(algorithm, trace, state, None, params, 0, 0, 0.0)
    t_star = 1 + int(root.child(0).integers(0, T))

    A, b = problem.A, problem.b
    domain = problem.domain
    s_map = 1.0 / smoothness_constant_K(problem.objective.l_f, problem.norm_A,
                                        params.rho, params.mu)
    center_w = params.lam if (algorithm == "alg3" and literal_lambda) else params.mu

    n_samples = 0
    d = None
    if algorithm == "alg3":
        d = storm_init(problem, oracle, T, rng=oracle_rng, x0=state.x)
        n_samples += storm_minibatch_size(T)
        state.grad_est = d

    eligible = _kernel_eligible(problem, oracle, record_iterates)
    if eligible:
        Q, c = problem.objective.as_quadratic()
        kind, lo, hi, radius = domain.encode()

    x, y, z = state.x, state.y, state.z
    snap = None
    diverged = False
    early_stopped = False
    used_kernel = False
    t0 = 0
    t_done = 0
    while t0 < T:
        steps = min(CHUNK, T - t0)
        try:
            table = oracle.draw_table(steps, oracle_rng)
        except NotImplementedError:
            table = None
        kargs = oracle.kernel_args(table) if (eligible and table is not None) else None
        if kargs is not None:
            used_kernel = True
            code, noise, aq, ac, idx = kargs
            if algorithm == "alg1":
                x, y, z, sx, sy, sz, snapped = _kernels.alg1_chunk(
                    Q, c, A, b, kind, lo, hi, radius,
                    params.tau, params.eta, params.beta, params.mu, params.rho,
                    s_map, code, noise, aq, ac, idx,
                    x, y, z, t0, t_star, scalars, trace_stride)
            else:
                x, y, z, d, sx, sy, sz, snapped = _kernels.alg3_chunk(
                    Q, c, A, b, kind, lo, hi, radius,
                    params.tau, params.eta, params.beta, center_w, params.rho,
                    params.alpha, s_map, code, noise, aq, ac, idx,
                    x, y, z, d, t0, t_star, scalars, trace_stride)
            if snapped:
                snap = RunSnapshot(t_star, np.asarray(sx), np.asarray(sy), np.asarray(sz))
        else:
            x, y, z, d, snap_local = _generic_chunk(
                algorithm, problem, oracle, params, center_w, s_map,
                table, oracle_rng, x, y, z, d, t0, steps, t_star,
                trace, scalars, trace_stride, record_iterates)
            if snap_local is not None:
                snap = snap_local
        n_samples += steps if algorithm == "alg1" else 2 * steps
        t0 += steps
        t_done = t0
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            diverged = True
            break
        stop_t = _early_row(trace, scalars, t0 - steps, t0, early_stop)
        if stop_t >= 0:
            # compute ran to the chunk boundary; report the run as ending at
            # the first qualifying row (the state keeps the later iterate)
            early_stopped = True
            t_done = stop_t + 1
            break

    state = SolverState(t0, np.asarray(x), np.asarray(y), np.asarray(z),
                        None if d is None else np.asarray(d), 0)
    if snap is None and t_star == T and t0 == T and not diverged:
        y_plus = state.y + params.eta * (A @ state.x - b)
        snap = RunSnapshot(T, state.x.copy(), y_plus, state.z.copy())

    def extra_dual(st):
        return st.y + params.eta * (A @ st.x - b)

    return _finalize(algorithm, params, trace, scalars, state, snap,
                     n_samples, 0, t_done, started, diverged,
                     early_stopped, used_kernel, extra_dual)


def _generic_chunk(algorithm, problem, oracle, params, center_w, s_map, table,
                   oracle_rng, x, y, z, d, t0, steps, snap_t, trace, scalars,
                   stride, record_iterates):
    """Plain-python chunk executor.

    Handles every problem/oracle combination the compiled kernels cannot:
    non-quadratic objectives, halfspace sets, custom oracles (per-step
    sampling when no table), and iterate recording.  Semantics mirror the
    kernels line for line.
    """
    A, b = problem.A, problem.b
    domain = problem.domain
    tau, eta, beta, rho, alpha = (params.tau, params.eta, params.beta,
                                  params.rho, params.alpha)
    snap = None
    x, y, z = x.copy(), y.copy(), z.copy()
    for k in range(steps):
        t = t0 + k
        record = t % stride == 0
        if record and record_iterates:
            trace.iterates.append((x.copy(), y.copy(), z.copy()))
        r = A @ x - b
        y = y + eta * r
        if t == snap_t:
            snap = RunSnapshot(snap_t, x.copy(), y.copy(), z.copy())
        if algorithm == "alg1":
            if table is not None:
                direction = oracle.grad_from_table(table, k, x)
            else:
                direction = oracle.sample(x, rng=oracle_rng)
        else:
            direction = d
        # center_w equals mu except in the momentum variant's literal mode
        G = direction + A.T @ y + rho * (A.T @ r) + center_w * (x - z)
        if record:
            row = t // stride
            scalars[row, 0] = np.linalg.norm(r)
            scalars[row, 1] = violation(domain, x)
            # measurement uses the exact mean gradient; the step stays noisy
            scalars[row, 2] = _stat_map(domain, x,
                                        problem.objective.grad(x) + A.T @ y,
                                        s_map)
            scalars[row, 3] = np.linalg.norm(y)
            scalars[row, 4] = np.linalg.norm(x - z)
        x_next = project(domain, x - tau * G)
        z = z + beta * (x - z)
        if algorithm == "alg3":
            if table is not None:
                g_new = oracle.grad_from_table(table, k, x_next)
                g_old = oracle.grad_from_table(table, k, x)
            else:
                g_new, g_old = oracle.sample_pair(x_next, x, rng=oracle_rng)
            d = g_new + (1.0 - alpha) * (d - g_old)
        x = x_next
    return x, y, z, d, snap


def run_alg2(problem: ConstrainedProblem, oracle: GradientOracle,
             sampler: ConstraintSampler, params: SolverParams, seed: int = 0,
             x0=None, y0=None, z0=None, trace_stride: int = 1,
             early_stop: float | None = None,
             assert_bounded: bool = False) -> RunResult:
    """Run the safeguarded variant with sampled constraints.

    Requires a bounded feasible set: box/simplex variants prove it
    themselves, halfspace systems need either their ``bounded=True``
    construction flag or ``assert_bounded=True`` here.  The trace's
    feasibility column uses the *mean* constraints; ``resets`` counts
    safeguard firings cumulatively.  Child streams: 0 draws ``t*``,
    1 the objective samples, 2 the constraint draws.
    """
    started = time.perf_counter()
    params.validate()
    if trace_stride < 1:
        raise ValueError("trace_stride must be >= 1")
    bounded = problem.domain.is_bounded()
    if bounded is not True and not assert_bounded:
        raise ValueError(
            "the safeguarded variant needs a bounded feasible set; use a box/"
            "simplex domain, a halfspace set constructed with bounded=True, "
            "or pass assert_bounded=True"
        )
    if not np.allclose(sampler.mean_A, problem.A, atol=1e-9) or \
       not np.allclose(sampler.mean_b, problem.b, atol=1e-9):
        raise ValueError("sampler mean does not match the problem constraints")

    T = int(params.T)
    state = init_state(problem, x0, y0, z0)
    root = SeededRng(seed)
    oracle_rng = root.child(1)
    samp_rng = root.child(2)
    trace, scalars = _alloc_trace(T, trace_stride, False)
    if T == 0:
        return RunResult("alg2", trace, state, None, params, 0, 0, 0.0)
    t_star = 1 + int(root.child(0).integers(0, T))

    A_bar, b_bar = problem.A, problem.b
    domain = problem.domain
    s_map = 1.0 / smoothness_constant_K(problem.objective.l_f, problem.norm_A,
                                        params.rho, params.mu)
    x, y, z = state.x, state.y, state.z
    resets = 0
    snap = None
    diverged = False
    early_stopped = False
    n_samples = 0
    n_draws = 0
    t_done = 0
    for t in range(T):
        A_d, b_d = sampler.sample(rng=samp_rng)
        y = y + params.eta * (A_d @ x - b_d)
        if np.linalg.norm(y) >= params.M_y:
            y = np.zeros_like(y)
            resets += 1
        if t == t_star:
            snap = RunSnapshot(t_star, x.copy(), y.copy(), z.copy())
        A1, _ = sampler.sample(rng=samp_rng)
        A2, b2 = sampler.sample(rng=samp_rng)
        gf = oracle.sample(x, rng=oracle_rng)
        n_samples += 1
        n_draws += 3
        G = (gf + A1.T @ y + params.rho * (A1.T @ (A2 @ x - b2))
             + params.mu * (x - z))
        if t % trace_stride == 0:
            row = t // trace_stride
            r_bar = A_bar @ x - b_bar
            scalars[row, 0] = np.linalg.norm(r_bar)
            scalars[row, 1] = violation(domain, x)
            scalars[row, 2] = _stat_map(domain, x,
                                        problem.objective.grad(x) + A_bar.T @ y,
                                        s_map)
            scalars[row, 3] = np.linalg.norm(y)
            scalars[row, 4] = np.linalg.norm(x - z)
            trace.resets[row] = resets
        x_next = project(domain, x - params.tau * G)
        z = z + params.beta * (x - z)
        x = x_next
        t_done = t + 1
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            diverged = True
            break
        if early_stop is not None and t % trace_stride == 0:
            row = t // trace_stride
            if scalars[row, 0] <= early_stop and scalars[row, 2] <= early_stop:
                early_stopped = True
                break

    state = SolverState(t_done, x, y, z, None, resets)
    if snap is None and t_star == T and t_done == T and not diverged:
        A_d, b_d = sampler.sample(rng=samp_rng)
        n_draws += 1
        y_plus = y + params.eta * (A_d @ x - b_d)
        if np.linalg.norm(y_plus) >= params.M_y:
            y_plus = np.zeros_like(y_plus)
        snap = RunSnapshot(T, x.copy(), y_plus, z.copy())

    def extra_dual(st):
        A_d, b_d = sampler.sample(rng=samp_rng)
        y_plus = st.y + params.eta * (A_d @ st.x - b_d)
        if np.linalg.norm(y_plus) >= params.M_y:
            y_plus = np.zeros_like(y_plus)
        return y_plus

    return _finalize("alg2", params, trace, scalars, state, snap,
                     n_samples, n_draws, t_done, started, diverged,
                     early_stopped, False, extra_dual)


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def postprocess(problem: ConstrainedProblem, oracle: GradientOracle,
                params: SolverParams, x_star, y_star_next, z_star, B: int,
                rng=None, tau: float | None = None) -> StationarityCertificate:
    """Certify near-stationarity at the snapshot tuple.

    Averages ``B`` fresh stochastic AL gradients at
    ``(x*, y*_next, z*)``, takes one projected step, and returns the exact
    subdifferential member
    ``v = grad f(x_hat) + A'y - G_hat - (x_hat - x*)/tau``
    (the projection's optimality condition puts
    ``-G_hat - (x_hat - x*)/tau`` in the normal cone at ``x_hat``).

    The step defaults to the run step ``params.tau`` and is clamped to
    ``1/L_K``, the largest value the certificate construction tolerates.
    """
    if B < 1:
        raise ValueError("batch size B must be at least 1")
    x_star = as_vector(x_star, "x_star")
    y = as_vector(y_star_next, "y_star_next")
    z_star = as_vector(z_star, "z_star")
    L_K = smoothness_constant_K(problem.objective.l_f, problem.norm_A,
                                params.rho, params.mu)
    step = params.tau if tau is None else float(tau)
    step = min(step, 1.0 / L_K)
    A, b = problem.A, problem.b
    acc = np.zeros(problem.dim)
    for _ in range(B):
        acc += oracle.sample(x_star, rng=rng)
    g_hat = (acc / B) + A.T @ y + params.rho * (A.T @ (A @ x_star - b)) \
        + params.mu * (x_star - z_star)
    x_hat = project(problem.domain, x_star - step * g_hat)
    v = problem.objective.grad(x_hat) + A.T @ y - g_hat - (x_hat - x_star) / step
    return StationarityCertificate(
        x_hat=x_hat, y=y, v=v,
        residual_norm=float(np.linalg.norm(v)),
        feasibility=float(np.linalg.norm(A @ x_hat - b)),
        batch=int(B), tau=float(step),
    )
