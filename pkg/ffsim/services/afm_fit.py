"""
Maximum-likelihood fitting of the Additive Factors Model.

Parameters are packed as one vector [theta (per student), beta (per skill),
gamma (per skill)]. The objective is the Bernoulli negative log-likelihood
plus l2 * (|theta|^2 + |beta|^2). It is minimized by diagonally scaled,
projected gradient descent with Armijo backtracking; gamma is projected onto
gamma >= 0 after every step. Adding c to every theta and subtracting c from
every beta leaves the likelihood unchanged, so after each accepted step the
split is re-centred to the c that minimizes the penalty.

The objective history is non-increasing up to rounding. Once the predicted
decrease is below ROUNDING_ULPS ulp of the objective, the line search also
accepts a step that raises the objective by at most that allowance.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ffsim.config import settings
from ffsim.exceptions import FitError, UsageError
from ffsim.schemas import FitSettings
from ffsim.services.afm_student import AfmParams
from ffsim.services.step_log import StepLog, separable_skills

logger = logging.getLogger(__name__)

# Objective changes within this many ulp of its magnitude are rounding in the row sum.
ROUNDING_ULPS = 64.0


@dataclass
class AfmFitResult:
    params: AfmParams
    theta_hat: Dict[str, float]
    neg_log_likelihood: float
    iterations: int
    converged: bool
    gradient_max_norm: float
    separable_skills: List[str] = field(default_factory=list)
    history: List[float] = field(default_factory=list)


def default_fit_settings() -> FitSettings:
    return FitSettings(l2=settings.fit_l2, tol=settings.fit_tol, max_iterations=settings.fit_max_iterations)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class _Problem:
    """Precomputed index arrays for one log."""

    def __init__(self, log: StepLog, l2: float):
        self.n_students = log.n_students
        self.n_skills = log.n_skills
        self.student = log.student
        self.skill = log.skill
        self.opportunity = log.opportunity.astype(float)
        self.y = log.correct.astype(float)
        self.l2 = l2

    @property
    def size(self) -> int:
        return self.n_students + 2 * self.n_skills

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        s, k = self.n_students, self.n_skills
        return x[:s], x[s:s + k], x[s + k:]

    def logits(self, x: np.ndarray) -> np.ndarray:
        theta, beta, gamma = self.unpack(x)
        return theta[self.student] + beta[self.skill] + gamma[self.skill] * self.opportunity

    def objective(self, x: np.ndarray) -> float:
        theta, beta, _ = self.unpack(x)
        z = self.logits(x)
        data = float(np.sum(np.logaddexp(0.0, z) - self.y * z))
        return data + self.l2 * (float(theta @ theta) + float(beta @ beta))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        theta, beta, _ = self.unpack(x)
        r = _sigmoid(self.logits(x)) - self.y
        g_theta = np.bincount(self.student, weights=r, minlength=self.n_students) + 2.0 * self.l2 * theta
        g_beta = np.bincount(self.skill, weights=r, minlength=self.n_skills) + 2.0 * self.l2 * beta
        g_gamma = np.bincount(self.skill, weights=r * self.opportunity, minlength=self.n_skills)
        return np.concatenate([g_theta, g_beta, g_gamma])

    def curvature(self, x: np.ndarray) -> np.ndarray:
        """Diagonal of the Hessian, floored away from zero."""
        p = _sigmoid(self.logits(x))
        w = p * (1.0 - p)
        h_theta = np.bincount(self.student, weights=w, minlength=self.n_students) + 2.0 * self.l2
        h_beta = np.bincount(self.skill, weights=w, minlength=self.n_skills) + 2.0 * self.l2
        h_gamma = np.bincount(self.skill, weights=w * self.opportunity ** 2, minlength=self.n_skills)
        return np.maximum(np.concatenate([h_theta, h_beta, h_gamma]), 1e-8)

    def project(self, x: np.ndarray) -> np.ndarray:
        s, k = self.n_students, self.n_skills
        x = x.copy()
        np.maximum(x[s + k:], 0.0, out=x[s + k:])
        return x

    def recenter(self, x: np.ndarray) -> np.ndarray:
        if self.l2 <= 0.0:
            return x
        s, k = self.n_students, self.n_skills
        shift = (x[s:s + k].sum() - x[:s].sum()) / (s + k)
        x = x.copy()
        x[:s] += shift
        x[s:s + k] -= shift
        return x

    def projected_gradient(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        s, k = self.n_students, self.n_skills
        pg = g.copy()
        at_bound = (x[s + k:] <= 0.0) & (g[s + k:] > 0.0)
        pg[s + k:][at_bound] = 0.0
        return pg


def _pack(log: StepLog, params: AfmParams, theta: np.ndarray) -> np.ndarray:
    if len(params.beta) != log.n_skills or len(theta) != log.n_students:
        raise UsageError(
            "Parameter shapes do not match the log",
            argument="params",
            context={"skills": log.n_skills, "students": log.n_students},
        )
    return np.concatenate([np.asarray(theta, dtype=float), np.asarray(params.beta, dtype=float), np.asarray(params.gamma, dtype=float)])


def negative_log_likelihood(
    log: StepLog,
    params: AfmParams,
    theta: np.ndarray,
    l2: Optional[float] = None,
) -> float:
    problem = _Problem(log, settings.fit_l2 if l2 is None else l2)
    return problem.objective(_pack(log, params, theta))


def objective_gradient(
    log: StepLog,
    params: AfmParams,
    theta: np.ndarray,
    l2: Optional[float] = None,
) -> np.ndarray:
    """Analytic gradient in packed order [theta, beta, gamma]."""
    problem = _Problem(log, settings.fit_l2 if l2 is None else l2)
    return problem.gradient(_pack(log, params, theta))


def unpack_params(log: StepLog, x: np.ndarray, theta_mean: float = 0.0, theta_sd: float = 1.0) -> Tuple[AfmParams, np.ndarray]:
    s, k = log.n_students, log.n_skills
    params = AfmParams(
        skill_names=log.skill_names,
        beta=tuple(float(v) for v in x[s:s + k]),
        gamma=tuple(float(v) for v in x[s + k:]),
        theta_mean=theta_mean,
        theta_sd=theta_sd,
    )
    return params, x[:s].copy()


def fit(log: StepLog, config: Optional[FitSettings] = None) -> AfmFitResult:
    config = config or default_fit_settings()
    if len(log) == 0:
        raise UsageError("Cannot fit an empty step log", argument="log")

    flagged = separable_skills(log)
    for name in flagged:
        logger.warning(f"Skill '{name}' is separable (all responses identical); its beta is pinned by the L2 penalty")

    problem = _Problem(log, config.l2)
    x = np.zeros(problem.size)
    f = problem.objective(x)
    history = [f]
    converged = False
    grad_norm = math.inf
    iterations = 0
    step = 1.0

    for iterations in range(1, config.max_iterations + 1):
        g = problem.gradient(x)
        grad_norm = float(np.max(np.abs(problem.projected_gradient(x, g))))
        if grad_norm < config.tol:
            converged = True
            iterations -= 1
            break

        direction = -g / problem.curvature(x)
        step = min(1.0, step * 2.0)
        # Armijo, or a rounding-level step: tiny predicted decrease and a rise of at most `noise`.
        noise = ROUNDING_ULPS * np.finfo(float).eps * max(1.0, abs(f))
        while True:
            candidate = problem.recenter(problem.project(x + step * direction))
            f_candidate = problem.objective(candidate)
            predicted = float(g @ (candidate - x))
            if math.isfinite(f_candidate) and (
                f_candidate <= f + config.armijo * predicted
                or (-predicted <= noise and f_candidate <= f + noise)
            ):
                break
            step *= config.backtrack
            if step < 1e-14:
                break

        if not math.isfinite(f_candidate):
            raise FitError(
                "Objective became non-finite during AFM fitting",
                iteration=iterations,
                objective=f,
                context={"gradient_max_norm": grad_norm, "step": step},
            )
        if step < 1e-14:
            logger.debug(f"Line search stalled at iteration {iterations} (objective {f:.6f})")
            break

        x, f = candidate, f_candidate
        history.append(f)
        if iterations % 500 == 0:
            logger.debug(f"AFM fit iteration {iterations}: objective {f:.6f}, |grad|max {grad_norm:.3e}")

    if not converged:
        logger.warning(
            f"AFM fit did not converge within {config.max_iterations} iterations "
            f"(|grad|max {grad_norm:.3e}, tol {config.tol:.1e})"
        )

    theta = x[:log.n_students]
    theta_mean = float(theta.mean())
    theta_sd = float(theta.std(ddof=1)) if log.n_students >= 2 else 1.0
    params, theta_hat = unpack_params(log, x, theta_mean=theta_mean, theta_sd=max(theta_sd, 1e-9))

    logger.info(
        f"AFM fit finished after {iterations} iterations: objective {f:.4f}, converged={converged}"
    )
    return AfmFitResult(
        params=params,
        theta_hat={sid: float(v) for sid, v in zip(log.student_ids, theta_hat)},
        neg_log_likelihood=f,
        iterations=iterations,
        converged=converged,
        gradient_max_norm=grad_norm,
        separable_skills=flagged,
        history=history,
    )
