"""Outer solver: alternating proximal block updates with Armijo backtracking.

The estimator minimizes

    F(alpha, L) = quasi_loglik_neg(apply(alpha) + L)
                  + lam1 * ||L||_*  +  lam2 * ||alpha||_1.

Each outer iteration builds a strictly convex local quadratic model of the
data-fitting term (curvature weights w and working responses Z at the current
parameter matrix, plus a ridge ``nu``), solves the model's alpha block as a
weighted Lasso and its L block as a weighted nuclear-norm problem, and then
backtracks each block's step length until the true objective beats the
``slope`` fraction of the model-predicted decrease.  The predicted decrease
is strictly negative whenever the block direction is nonzero, which makes the
objective trace nonincreasing.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import expfam
from .dictionary import Dictionary
from .exceptions import (
    FitAbortedError,
    InternalConsistencyError,
    InvalidInputError,
    LineSearchStallError,
    SplrError,
)
from .frame import ColumnType, MixedDataFrame
from .subsolvers import (
    SvtConfig,
    WeightedLassoProblem,
    WeightedNuclearProblem,
    nuclear_norm,
    solve_weighted_lasso,
    solve_weighted_nuclear,
)

# directions with no numerically meaningful movement are treated as zero
_ZERO_DIRECTION_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    """Penalties, line-search constants, stopping rule, subsolver settings.

    ``l_decrease_form`` selects the bookkeeping of the nuclear-norm term in
    the L-step's predicted decrease: "symmetric" subtracts the current
    iterate's nuclear norm (mirrors the alpha step and keeps the descent
    guarantee); "direction" subtracts the direction's nuclear norm instead,
    kept selectable for A/B probing of line-search behavior.
    """

    lam1: float
    lam2: float
    nu: float = 1e-2
    tau_init: float = 1.0
    backtrack: float = 0.5
    slope: float = 0.1
    theta: float = 0.0
    eps_f: float = 1e-6
    max_outer: int = 200
    lasso_tol: float = 1e-8
    lasso_max_iter: int = 1000
    nuclear_tol: float = 1e-6
    nuclear_max_iter: int = 100
    nuclear_strict: bool = False
    l_decrease_form: str = "symmetric"
    update_alpha: bool = True
    update_l: bool = True
    clip_box: float | None = None
    stall_floor: float = 1e-12
    curvature_floor: float = 1e-10
    svt: SvtConfig = field(default_factory=SvtConfig)

    def __post_init__(self):
        if self.lam1 < 0 or self.lam2 < 0:
            raise InvalidInputError("penalties must be >= 0")
        if not self.nu > 0:
            raise InvalidInputError("nu must be > 0")
        if not self.tau_init > 0:
            raise InvalidInputError("tau_init must be > 0")
        if not 0 < self.backtrack < 1:
            raise InvalidInputError("backtrack factor must be in (0, 1)")
        if not 0 < self.slope < 1:
            raise InvalidInputError("slope fraction must be in (0, 1)")
        if not 0 <= self.theta < 1:
            raise InvalidInputError("theta must be in [0, 1)")
        if not self.eps_f > 0 or self.max_outer < 1:
            raise InvalidInputError("eps_f must be > 0 and max_outer >= 1")
        if self.l_decrease_form not in ("symmetric", "direction"):
            raise InvalidInputError("l_decrease_form must be symmetric|direction")
        if self.clip_box is not None and not self.clip_box > 0:
            raise InvalidInputError("clip_box must be > 0 when set")


@dataclass
class FitState:
    """Current iterate with its cached parameter matrix and data-fit value."""

    alpha: np.ndarray
    low_rank: np.ndarray
    x: np.ndarray
    data_fit: float


@dataclass
class StepResult:
    state: FitState
    tau: float
    model_decrease: float
    direction: np.ndarray
    subproblem_solution: np.ndarray
    nuclear_after: float | None = None


@dataclass
class ModelFit:
    """Fitted coefficients, reconstruction, and convergence diagnostics."""

    alpha_hat: np.ndarray
    l_hat: np.ndarray
    x_hat: np.ndarray
    objective_trace: np.ndarray
    step_trace: list
    converged: bool
    n_iter: int
    config: SolverConfig
    wall_time: float

    def rank(self, rel_tol: float = 1e-7) -> int:
        svals = np.linalg.svd(self.l_hat, compute_uv=False)
        if svals.size == 0 or svals[0] == 0.0:
            return 0
        return int(np.sum(svals > rel_tol * svals[0]))

    def alpha_nonzeros(self, tol: float = 1e-8) -> int:
        return int(np.sum(np.abs(self.alpha_hat) > tol))

    def report(self) -> dict:
        cfg = asdict(self.config)
        return {
            "config": cfg,
            "objective_trace": [float(v) for v in self.objective_trace],
            "step_trace": [[float(a), float(b)] for a, b in self.step_trace],
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
            "rank": self.rank(),
            "alpha_nonzeros": self.alpha_nonzeros(),
            "wall_time_s": float(self.wall_time),
        }


def objective(
    alpha, low_rank, frame: MixedDataFrame, links, dictionary: Dictionary,
    lam1: float, lam2: float,
) -> float:
    """Penalized negative quasi-log-likelihood at (alpha, L)."""
    alpha = np.asarray(alpha, dtype=float)
    low_rank = np.asarray(low_rank, dtype=float)
    x = dictionary.apply(alpha) + low_rank
    return (
        expfam.quasi_loglik_neg(x, frame, links)
        + lam1 * nuclear_norm(low_rank)
        + lam2 * float(np.abs(alpha).sum())
    )


def make_state(frame, links, dictionary, alpha, low_rank) -> FitState:
    alpha = np.asarray(alpha, dtype=float)
    low_rank = np.asarray(low_rank, dtype=float)
    x = dictionary.apply(alpha) + low_rank
    return FitState(alpha, low_rank, x, expfam.quasi_loglik_neg(x, frame, links))


def _trial_data_fit(x, frame, links) -> float:
    # an overflowing trial point is simply a rejected step, not a user error
    try:
        return expfam.quasi_loglik_neg(x, frame, links)
    except InvalidInputError:
        return np.inf


def _backtrack(frame, links, state, direction_field, penalty_trial, base,
               model_decrease, config):
    """Shrink tau until data_fit + penalty beats the sloped model decrease.

    ``penalty_trial(tau)`` returns the active block's penalty term at the
    trial point.  Returns (tau, trial_fit, trial_penalty).
    """
    tau = config.tau_init
    while True:
        x_trial = state.x + tau * direction_field
        f_trial = _trial_data_fit(x_trial, frame, links)
        pen_trial = penalty_trial(tau)
        if f_trial + pen_trial <= base + tau * config.slope * model_decrease:
            return tau, f_trial, pen_trial
        tau *= config.backtrack
        if tau < config.stall_floor:
            raise LineSearchStallError(
                f"line search stalled below {config.stall_floor:g} "
                f"(predicted decrease {model_decrease:.3e})"
            )


def alpha_step(
    frame: MixedDataFrame, links, dictionary: Dictionary,
    state: FitState, config: SolverConfig,
) -> StepResult:
    """One main-effects update: weighted-Lasso direction plus Armijo step."""
    weights = expfam.curvature_weights(state.x, frame, links)
    working = expfam.working_responses(
        state.x, frame, links, config.curvature_floor
    )
    targets = working + dictionary.apply(state.alpha)
    prob = WeightedLassoProblem(
        dictionary, weights, targets, config.nu, state.alpha, config.lam2
    )
    solution = solve_weighted_lasso(prob, config.lasso_tol, config.lasso_max_iter)
    direction = solution - state.alpha
    dir_norm = float(np.linalg.norm(direction))
    if dir_norm <= _ZERO_DIRECTION_RTOL * max(1.0, np.linalg.norm(state.alpha)):
        return StepResult(state, 0.0, 0.0, np.zeros_like(direction), solution)

    field_d = dictionary.apply(direction)
    l1_now = float(np.abs(state.alpha).sum())
    l1_full = float(np.abs(state.alpha + direction).sum())
    model_decrease = (
        -2.0 * float(np.sum(weights * working * field_d))
        + config.theta * float(np.sum(weights * field_d * field_d))
        + config.nu * dir_norm**2
        + config.lam2 * (l1_full - l1_now)
    )
    if model_decrease >= 0.0:
        raise InternalConsistencyError(
            f"alpha-step predicted decrease {model_decrease:.3e} is not negative "
            "for a nonzero direction"
        )

    base = state.data_fit + config.lam2 * l1_now
    tau, f_new, _ = _backtrack(
        frame, links, state, field_d,
        lambda t: config.lam2 * float(np.abs(state.alpha + t * direction).sum()),
        base, model_decrease, config,
    )
    new_state = FitState(
        state.alpha + tau * direction, state.low_rank,
        state.x + tau * field_d, f_new,
    )
    return StepResult(new_state, tau, model_decrease, direction, solution)


def l_step(
    frame: MixedDataFrame, links, dictionary: Dictionary,
    state: FitState, config: SolverConfig,
    nuclear_current: float | None = None,
) -> StepResult:
    """One interactions update: weighted nuclear direction plus Armijo step."""
    weights = expfam.curvature_weights(state.x, frame, links)
    working = expfam.working_responses(
        state.x, frame, links, config.curvature_floor
    )
    total_weights = config.nu + weights
    blended = (
        weights * (working + state.low_rank) + config.nu * state.low_rank
    ) / total_weights
    prob = WeightedNuclearProblem(total_weights, blended, config.lam1, svt=config.svt)
    solution = solve_weighted_nuclear(
        prob,
        config.nuclear_tol,
        config.nuclear_max_iter,
        init=state.low_rank,
        on_max_iter="raise" if config.nuclear_strict else "return",
    )
    direction = solution - state.low_rank
    dir_norm = float(np.linalg.norm(direction))
    if nuclear_current is None:
        nuclear_current = nuclear_norm(state.low_rank)
    if dir_norm <= _ZERO_DIRECTION_RTOL * max(1.0, np.linalg.norm(state.low_rank)):
        return StepResult(
            state, 0.0, 0.0, np.zeros_like(direction), solution,
            nuclear_after=nuclear_current,
        )

    if config.l_decrease_form == "symmetric":
        pen_shift = config.lam1 * (nuclear_norm(solution) - nuclear_current)
    else:
        pen_shift = config.lam1 * (nuclear_norm(solution) - nuclear_norm(direction))
    model_decrease = (
        -2.0 * float(np.sum(weights * working * direction))
        + config.theta * float(np.sum(weights * direction * direction))
        + config.nu * dir_norm**2
        + pen_shift
    )
    if config.l_decrease_form == "symmetric" and model_decrease >= 0.0:
        raise InternalConsistencyError(
            f"L-step predicted decrease {model_decrease:.3e} is not negative "
            "for a nonzero direction"
        )

    base = state.data_fit + config.lam1 * nuclear_current
    trial_penalties = {}

    def penalty_trial(t):
        val = config.lam1 * nuclear_norm(state.low_rank + t * direction)
        trial_penalties[t] = val
        return val

    tau, f_new, pen_new = _backtrack(
        frame, links, state, direction, penalty_trial, base, model_decrease, config
    )
    new_state = FitState(
        state.alpha, state.low_rank + tau * direction,
        state.x + tau * direction, f_new,
    )
    nuclear_after = (
        pen_new / config.lam1 if config.lam1 > 0
        else nuclear_norm(new_state.low_rank)
    )
    return StepResult(
        new_state, tau, model_decrease, direction, solution,
        nuclear_after=nuclear_after,
    )


def fit(
    frame: MixedDataFrame, links, dictionary: Dictionary, config: SolverConfig,
    init: tuple | None = None,
) -> ModelFit:
    """Alternate alpha and L updates from (0, 0) until the objective settles.

    Stops when the relative objective change over one outer iteration drops
    to ``config.eps_f``, or after ``config.max_outer`` iterations (reported
    as ``converged=False``).  Any step failure aborts with the partial
    objective trace attached.
    """
    start = time.perf_counter()
    if init is None:
        alpha0 = np.zeros(dictionary.n_atoms)
        l0 = np.zeros(dictionary.shape)
    else:
        alpha0, l0 = (np.array(v, dtype=float) for v in init)
    state = make_state(frame, links, dictionary, alpha0, l0)
    nuc = nuclear_norm(state.low_rank)
    current = (
        state.data_fit + config.lam1 * nuc
        + config.lam2 * float(np.abs(state.alpha).sum())
    )
    trace = [current]
    steps = []
    converged = False
    n_iter = 0
    try:
        for _ in range(config.max_outer):
            # rebuild the cached parameter matrix to stop incremental drift
            state = make_state(
                frame, links, dictionary, state.alpha, state.low_rank
            )
            tau_a = tau_l = 0.0
            if config.update_alpha:
                res = alpha_step(frame, links, dictionary, state, config)
                state, tau_a = res.state, res.tau
            if config.update_l:
                res = l_step(
                    frame, links, dictionary, state, config, nuclear_current=nuc
                )
                state, tau_l = res.state, res.tau
                nuc = res.nuclear_after
            n_iter += 1
            new_val = (
                state.data_fit + config.lam1 * nuc
                + config.lam2 * float(np.abs(state.alpha).sum())
            )
            trace.append(new_val)
            steps.append((tau_a, tau_l))
            if abs(current - new_val) <= config.eps_f * max(1.0, abs(current)):
                converged = True
                current = new_val
                break
            current = new_val
    except SplrError as exc:
        raise FitAbortedError(
            f"fit aborted at outer iteration {n_iter + 1}: {exc}", trace=trace
        ) from exc

    alpha_hat, l_hat = state.alpha, state.low_rank
    if config.clip_box is not None:
        alpha_hat = np.clip(alpha_hat, -config.clip_box, config.clip_box)
        l_hat = np.clip(l_hat, -config.clip_box, config.clip_box)
    x_hat = dictionary.apply(alpha_hat) + l_hat
    return ModelFit(
        alpha_hat=alpha_hat,
        l_hat=l_hat,
        x_hat=x_hat,
        objective_trace=np.asarray(trace),
        step_trace=steps,
        converged=converged,
        n_iter=n_iter,
        config=config,
        wall_time=time.perf_counter() - start,
    )


def imputed_values(x_hat, frame: MixedDataFrame, links) -> np.ndarray:
    """Completed matrix: observed values kept, means g'(x_hat) elsewhere."""
    means = expfam.predicted_means(x_hat, links)
    return np.where(frame.mask, frame.y_filled, means)


def impute(
    model: ModelFit, frame: MixedDataFrame, links, round_binary: bool = False
) -> MixedDataFrame:
    """Fill every unobserved cell with the fitted per-entry mean.

    Imputed binary cells hold success probabilities (the column is retyped
    numeric) unless ``round_binary`` rounds them at 0.5; imputed count cells
    hold continuous means and are likewise retyped numeric.
    """
    completed = imputed_values(model.x_hat, frame, links)
    types = []
    for j, ctype in enumerate(frame.column_types):
        if ctype is ColumnType.BINARY:
            if round_binary:
                completed[:, j] = np.where(
                    frame.mask[:, j], completed[:, j],
                    (completed[:, j] >= 0.5).astype(float),
                )
                types.append(ColumnType.BINARY)
            else:
                types.append(ColumnType.NUMERIC)
        elif ctype is ColumnType.COUNT:
            types.append(ColumnType.NUMERIC)
        else:
            types.append(ctype)
    full_mask = np.ones(frame.shape, dtype=bool)
    return MixedDataFrame(frame.column_names, tuple(types), completed, full_mask)


def config_with(config: SolverConfig, **changes) -> SolverConfig:
    """Copy a config with some fields replaced."""
    return replace(config, **changes)
