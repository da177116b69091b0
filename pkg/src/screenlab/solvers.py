"""First-order solvers with optional screen-once or per-iteration screening.

Each update function advances one iteration of its algorithm on the current
(possibly column-reduced) dictionary and records the dual point it produced,
together with the dictionary-transpose product it already had to compute.
Those two byproducts are exactly what the screening tests consume, which is
why per-iteration screening costs only a few vector operations on top of the
plain update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import screening
from .dictionary import Dictionary, operator_norm
from .instrument import (
    DYNAMIC,
    NONE,
    STATIC,
    STRATEGIES,
    SolveTrace,
    flops_iteration,
    flops_static_init,
    problem_digest,
)
from .problems import GROUP, LASSO, expand, lambda_max, prox_l1

ISTA = "ista"
FISTA = "fista"
TWIST = "twist"
SPARSA = "sparsa"
CP = "cp"
ALGORITHMS = (ISTA, FISTA, TWIST, SPARSA, CP)

_MAJORIZATION_SLACK = 1e-12
_L_CEILING = 1e300


@dataclass
class SolverConfig:
    """Knobs for one solver run; defaults follow the standard settings."""

    algorithm: str = ISTA
    strategy: str = NONE
    test: str | None = None
    max_iters: int = 200
    rel_tol: float = 1e-7
    L0: float = 1.0
    backtrack_factor: float = 2.0
    twist_alpha: float = 1.78
    twist_beta: float = 1.78
    twist_step: float | None = None  # None -> 1 / ||D||^2
    # gamma > 0 engages the accelerated step schedule, which pays off only
    # when the primal term is strongly convex; plain l1/group penalties are
    # not, so constant steps are the reliable default.
    cp_gamma: float = 0.0
    cp_step_safety: float = 0.99
    bb_L_min: float = 1e-10
    bb_L_max: float = 1e10

    def validate(self, kind):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if not self.backtrack_factor > 1:
            raise ValueError("backtrack_factor must exceed 1")
        if not self.L0 > 0:
            raise ValueError("L0 must be positive")
        if not 0 < self.cp_step_safety < 1:
            raise ValueError("cp_step_safety must lie in (0, 1)")
        if self.strategy != NONE:
            allowed = screening.LASSO_TESTS if kind == LASSO else screening.GROUP_TESTS
            if self.test is None:
                raise ValueError("screening strategies require a test kind")
            if self.test not in allowed:
                raise ValueError(f"test {self.test!r} does not apply to {kind} problems")


@dataclass
class SolverState:
    """Mutable per-run state: primal block, dual point, and step scalars."""

    x: np.ndarray
    x_prev: np.ndarray | None = None
    u: np.ndarray | None = None
    theta: np.ndarray | None = None
    corr: np.ndarray | None = None
    resid: np.ndarray | None = None
    L: float = 1.0
    l_acc: float = 1.0
    tau: float = 0.0
    sigma: float = 0.0
    fixed_step: float | None = None


@dataclass
class IterationInfo:
    """Snapshot handed to an iteration hook, before any reduction is applied."""

    t: int
    theta: np.ndarray
    corr: np.ndarray
    kept: np.ndarray
    kept_groups: np.ndarray | None
    mask: np.ndarray | None
    x: np.ndarray
    context: object | None
    problem: object


@dataclass
class SolveResult:
    """Outcome of a run; `x_star` is expanded back to the original indexing."""

    x_star: np.ndarray
    iterations: int
    trace: SolveTrace
    final_objective: float
    screen_state: screening.ScreenState

    @property
    def screened_fraction(self):
        return self.screen_state.eliminated.size / self.screen_state.size


def _resolve_layout(problem, dic, layout):
    if problem.kind == LASSO:
        return None
    if layout is not None:
        return layout
    if dic.n_cols != problem.n_cols:
        raise ValueError("reduced group problems need an explicit layout")
    return problem.partition.layout()


def _prox(v, t, layout):
    if layout is None:
        return prox_l1(v, t)
    return layout.prox(v, t)


def _penalty(x, layout):
    if layout is None:
        return float(np.sum(np.abs(x)))
    return layout.penalty(x)


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("solver produced a non-finite iterate")


def _residual(state, dic, y):
    if state.resid is not None:
        return state.resid
    return dic.apply(state.x) - y


def _backtrack(point, theta, corr, dic, y, lam, L, cfg, layout):
    """Backtracking prox step from `point`; returns (x_new, resid_new, L).

    `theta` and `corr` are the residual and gradient at `point`. L grows by
    the backtrack factor until the quadratic majorization
    ``f(x_new) <= f(point) + <grad, dx> + L/2 ||dx||^2`` holds; the accepted
    trial's residual is returned so callers can reuse it.
    """
    f0 = 0.5 * float(theta @ theta)
    while True:
        cand = _prox(point - corr / L, lam / L, layout)
        resid_cand = dic.apply(cand) - y
        f_cand = 0.5 * float(resid_cand @ resid_cand)
        step = cand - point
        bound = f0 + float(corr @ step) + 0.5 * L * float(step @ step)
        if f_cand <= bound + _MAJORIZATION_SLACK * max(1.0, f0):
            return cand, resid_cand, L
        L *= cfg.backtrack_factor
        if L > _L_CEILING:
            raise FloatingPointError("backtracking failed to find a valid step")


def update_ista(state, dic, problem, cfg, layout=None):
    """One proximal gradient step with backtracked step size."""
    layout = _resolve_layout(problem, dic, layout)
    y, lam = problem.y, problem.lam
    theta = _residual(state, dic, y)
    corr = dic.correlate(theta)
    cand, resid_cand, L = _backtrack(state.x, theta, corr, dic, y, lam, state.L, cfg, layout)
    _check_finite(cand)
    state.x_prev = state.x
    state.x = cand
    state.resid = resid_cand
    state.theta = theta
    state.corr = corr
    state.L = L
    return state


def update_fista(state, dic, problem, cfg, layout=None):
    """One accelerated proximal gradient step (momentum on an auxiliary point)."""
    layout = _resolve_layout(problem, dic, layout)
    y, lam = problem.y, problem.lam
    u = state.u if state.u is not None else state.x
    theta = dic.apply(u) - y
    corr = dic.correlate(theta)
    cand, resid_cand, L = _backtrack(u, theta, corr, dic, y, lam, state.L, cfg, layout)
    _check_finite(cand)
    l_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * state.l_acc**2))
    state.u = cand + ((state.l_acc - 1.0) / l_new) * (cand - state.x)
    state.l_acc = float(l_new)
    state.x_prev = state.x
    state.x = cand
    state.resid = resid_cand
    state.theta = theta
    state.corr = corr
    state.L = L
    return state


def update_twist(state, dic, problem, cfg, layout=None):
    """One two-step iterative shrinkage update with fixed mixing weights.

    The prox step uses the fixed step size ``state.fixed_step`` (set to
    ``1 / ||D||^2`` by the driver), which is the canonical operator scaling
    this scheme assumes; unit-norm columns alone do not bound the operator.
    """
    layout = _resolve_layout(problem, dic, layout)
    y, lam = problem.y, problem.lam
    if state.fixed_step is None:
        raise ValueError("update_twist requires state.fixed_step")
    s = state.fixed_step
    theta = _residual(state, dic, y)
    corr = dic.correlate(theta)
    z = _prox(state.x - s * corr, lam * s, layout)
    if state.x_prev is None:
        cand = z
    else:
        a, b = cfg.twist_alpha, cfg.twist_beta
        cand = (1.0 - a) * state.x_prev + (a - b) * state.x + b * z
    _check_finite(cand)
    state.x_prev = state.x
    state.x = cand
    state.resid = None
    state.theta = theta
    state.corr = corr
    return state


def update_sparsa(state, dic, problem, cfg, layout=None):
    """One proximal gradient step with the spectral (Barzilai-Borwein) step size.

    The curvature estimate ``||D s||^2 / ||s||^2`` from the latest displacement
    replaces backtracking; it is clamped to ``[bb_L_min, bb_L_max]`` and the
    first iteration falls back to ``L0``. A zero displacement keeps the
    previous estimate.
    """
    layout = _resolve_layout(problem, dic, layout)
    y, lam = problem.y, problem.lam
    theta = _residual(state, dic, y)
    corr = dic.correlate(theta)
    L = state.L
    if state.x_prev is not None:
        s = state.x - state.x_prev
        ss = float(s @ s)
        if ss > 0.0:
            ds = dic.apply(s)
            L = float(np.clip(float(ds @ ds) / ss, cfg.bb_L_min, cfg.bb_L_max))
    cand = _prox(state.x - corr / L, lam / L, layout)
    _check_finite(cand)
    state.x_prev = state.x
    state.x = cand
    state.resid = None
    state.theta = theta
    state.corr = corr
    state.L = L
    return state


def update_cp(state, dic, problem, cfg, layout=None):
    """One primal-dual step with the accelerated step-size schedule.

    The dual variable is averaged toward the current residual, the primal
    takes a prox step against it, and both step sizes are rebalanced by the
    acceleration factor ``1 / sqrt(1 + 2 * gamma * tau)``.
    """
    layout = _resolve_layout(problem, dic, layout)
    y, lam = problem.y, problem.lam
    u = state.u if state.u is not None else state.x
    theta_prev = state.theta if state.theta is not None else np.zeros_like(y)
    sigma = state.sigma
    theta = (theta_prev + sigma * (dic.apply(u) - y)) / (1.0 + sigma)
    corr = dic.correlate(theta)
    tau = state.tau
    cand = _prox(state.x - tau * corr, lam * tau, layout)
    _check_finite(cand)
    phi = 1.0 / np.sqrt(1.0 + 2.0 * cfg.cp_gamma * tau)
    state.u = cand + phi * (cand - state.x)
    state.tau = float(phi * tau)
    state.sigma = float(sigma / phi)
    state.x_prev = state.x
    state.x = cand
    state.resid = None
    state.theta = theta
    state.corr = corr
    return state


_UPDATES = {
    ISTA: update_ista,
    FISTA: update_fista,
    TWIST: update_twist,
    SPARSA: update_sparsa,
    CP: update_cp,
}


def init_state(problem, cfg, kept_count=None):
    """Fresh zero-initialized solver state sized for `kept_count` columns."""
    k = problem.n_cols if kept_count is None else int(kept_count)
    state = SolverState(x=np.zeros(k), L=cfg.L0)
    if cfg.algorithm in (FISTA, CP):
        state.u = state.x
    if cfg.algorithm == CP:
        nrm = operator_norm(problem.dictionary)
        if nrm <= 0:
            raise ValueError("dictionary has zero operator norm")
        state.tau = state.sigma = cfg.cp_step_safety / nrm
        if state.tau * state.sigma * nrm**2 >= 1.0:
            raise ValueError("primal-dual step sizes violate tau*sigma*||D||^2 < 1")
        state.theta = np.zeros(problem.n_rows)
    if cfg.algorithm == TWIST:
        if cfg.twist_step is not None:
            state.fixed_step = float(cfg.twist_step)
        else:
            state.fixed_step = 1.0 / operator_norm(problem.dictionary) ** 2
    return state


def _reduce_state(state, keep_pos, dropped_zero):
    state.x = state.x[keep_pos]
    if state.x_prev is not None:
        state.x_prev = state.x_prev[keep_pos]
    if state.u is not None:
        state.u = state.u[keep_pos]
    state.corr = None
    if not dropped_zero:
        state.resid = None


def run(problem, cfg, iteration_hook=None):
    """Solve `problem` with the configured algorithm and screening strategy.

    Iterates until the relative objective variation drops below
    ``cfg.rel_tol`` or ``cfg.max_iters`` is reached. With the static strategy
    the dictionary is screened once, from the observation itself, before the
    first iteration; with the dynamic strategy the test is re-evaluated every
    iteration at the dual point the update just produced, and the eliminated
    set grows monotonically. Above the trivial-solution threshold the zero
    solution is returned immediately with every atom screened.
    """
    cfg.validate(problem.kind)
    t_start = time.perf_counter()
    k, n = problem.n_cols, problem.n_rows
    group_count = problem.partition.n_groups if problem.kind == GROUP else 0
    lmax = lambda_max(problem)
    trace = SolveTrace(
        kind=problem.kind,
        strategy=cfg.strategy,
        n_rows=n,
        n_cols=k,
        group_count=group_count,
        lam=problem.lam,
        digest=problem_digest(problem),
    )

    if problem.lam > lmax.value:
        state_screen = screening.ScreenState(
            eliminated=np.arange(k, dtype=np.int64),
            kept=np.empty(0, dtype=np.int64),
            test_kind=cfg.test,
        )
        yy = 0.5 * float(problem.y @ problem.y)
        return SolveResult(
            x_star=np.zeros(k),
            iterations=0,
            trace=trace,
            final_objective=yy,
            screen_state=state_screen,
        )

    state_screen = screening.ScreenState.initial(k, cfg.test)
    ctx = screening.ScreeningContext(problem, lmax) if cfg.strategy != NONE else None
    dic = problem.dictionary
    layout = problem.partition.layout() if problem.kind == GROUP else None
    kept_groups = np.arange(group_count, dtype=np.int64) if problem.kind == GROUP else None

    cum_flops = 0
    if cfg.strategy == STATIC:
        region = ctx.static_region(cfg.test)
        if cfg.test in screening.LASSO_TESTS:
            if cfg.test == screening.DOME:
                mask = screening.test_dome(region, state_screen.kept)
            else:
                mask = screening.test_sphere_lasso(region, state_screen.kept)
        else:
            gmask = screening.test_sphere_group(
                region, problem.partition, kept_groups, ctx.center_group_norms(cfg.test)
            )
            mask = screening.group_mask_to_index_mask(
                problem.partition, state_screen.kept, kept_groups, gmask
            )
            kept_groups = kept_groups[~gmask]
        state_screen = screening.screen_update(state_screen, mask)
        dic = problem.dictionary.reduce(np.arange(k, dtype=np.int64), state_screen.kept)
        if problem.kind == GROUP:
            layout = problem.partition.layout(state_screen.kept)
        trace.init_flops = flops_static_init(k, n)
        cum_flops += trace.init_flops

    state = init_state(problem, cfg, kept_count=state_screen.kept.size)
    update = _UPDATES[cfg.algorithm]

    f_prev = None
    iterations = 0
    moved = False
    for t in range(1, cfg.max_iters + 1):
        if state_screen.kept.size == 0:
            break
        update(state, dic, problem, cfg, layout)
        iterations = t

        mask = None
        if cfg.strategy == DYNAMIC:
            if cfg.test in screening.LASSO_TESTS:
                corr_inf = float(np.max(np.abs(state.corr), initial=0.0))
                region = ctx.region(cfg.test, state.theta, corr_inf=corr_inf)
                if cfg.test == screening.DOME:
                    mask = screening.test_dome(region, state_screen.kept)
                else:
                    mask = screening.test_sphere_lasso(region, state_screen.kept)
            else:
                norms = layout.norms(state.corr)
                region = ctx.region(
                    cfg.test, state.theta, group_corr_norms=norms, group_weights=layout.weights
                )
                gmask = screening.test_sphere_group(
                    region, problem.partition, kept_groups, ctx.center_group_norms(cfg.test)
                )
                mask = screening.group_mask_to_index_mask(
                    problem.partition, state_screen.kept, kept_groups, gmask
                )

        if iteration_hook is not None:
            iteration_hook(
                IterationInfo(
                    t=t,
                    theta=state.theta,
                    corr=state.corr,
                    kept=state_screen.kept,
                    kept_groups=kept_groups,
                    mask=mask,
                    x=state.x,
                    context=ctx,
                    problem=problem,
                )
            )

        if mask is not None and mask.any():
            keep_pos = np.flatnonzero(~mask)
            dropped_zero = bool(np.all(state.x[mask] == 0.0))
            state_screen = screening.screen_update(state_screen, mask)
            dic = _reduce_dic(dic, keep_pos)
            if problem.kind == GROUP:
                layout = problem.partition.layout(state_screen.kept)
                kept_groups = layout.group_ids
            _reduce_state(state, keep_pos, dropped_zero)

        if state.resid is None:
            state.resid = dic.apply(state.x) - problem.y
        f_t = 0.5 * float(state.resid @ state.resid) + problem.lam * _penalty(state.x, layout)
        nnz = int(np.count_nonzero(state.x))
        cum_flops += flops_iteration(
            problem.kind, cfg.strategy, k, n, state_screen.kept.size, nnz, group_count
        )
        trace.append(t, state_screen.kept.size, nnz, f_t, cum_flops, time.perf_counter() - t_start)

        # The variation test only means something once the iterate has left the
        # all-zero start; a dual-driven method can sit at zero for a few warmup
        # iterations with an exactly constant objective.
        moved = moved or nnz > 0
        if moved and f_prev is not None and abs(f_prev - f_t) / max(f_t, 1e-300) < cfg.rel_tol:
            break
        f_prev = f_t

    x_star = expand(state.x, state_screen.kept, k)
    final_objective = trace.objective[-1] if trace.objective else 0.5 * float(problem.y @ problem.y)
    return SolveResult(
        x_star=x_star,
        iterations=iterations,
        trace=trace,
        final_objective=final_objective,
        screen_state=state_screen,
    )


def _reduce_dic(dic, keep_pos):
    if keep_pos.size == dic.n_cols:
        return dic
    return Dictionary._wrap(dic.data[:, keep_pos], dic.col_norm_checked)
