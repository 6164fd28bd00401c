"""
Linear epsilon-insensitive support vector regression.

The dual problem

    max  sum_i y_i b_i - eps * sum_i |b_i| - 1/2 * sum_ij b_i b_j <x_i, x_j>
    s.t. sum_i b_i = 0,  -C <= b_i <= C

is solved by pairwise coordinate ascent: every update moves one coefficient up and a partner
down by the same amount, so the equality constraint holds after every step. After each pair
update the free coefficients (strictly between 0 and +-C) take one exact step toward the
optimum of their face, which removes the slow zigzag of pair updates on unscaled features.
With the linear kernel the weight vector w = sum_i b_i x_i is kept instead of a kernel matrix.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

GAIN_EPSILON = 1e-15
# relative ridge on the free-set Gram matrix; keeps the face system solvable when rows are collinear
FACE_RIDGE = 1e-10
FACE_STEPS = 50


class DimensionError(ValueError):
    """Feature dimension does not match the model or the targets."""


class SvrFitError(ValueError):
    pass


@dataclass(frozen=True)
class SvrConfig:
    epsilon: float = 0.1
    c_penalty: float = 1.0
    kkt_tolerance: float = 1e-3
    max_passes: int = 1000

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not self.c_penalty > 0:
            raise ValueError(f"c_penalty must be positive, got {self.c_penalty}")
        if not self.kkt_tolerance > 0:
            raise ValueError(f"kkt_tolerance must be positive, got {self.kkt_tolerance}")
        if self.max_passes < 1:
            raise ValueError(f"max_passes must be at least 1, got {self.max_passes}")


@dataclass(frozen=True)
class SvrModel:
    """Fitted linear SVR; weight is the cached sum of dual coefficients times training rows."""

    dual_coeffs: tuple[float, ...]
    bias: float
    weight: tuple[float, ...]
    training_dim: int
    config: SvrConfig = SvrConfig()
    kkt_violation: float = 0.0
    passes: int = 0
    converged: bool = True
    dual_history: tuple[float, ...] = field(default=(), repr=False)

    def predict(self, x) -> float:
        return predict_svr(self, x)

    def predict_many(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.training_dim:
            raise DimensionError(f"Expected (n, {self.training_dim}) features, got {features.shape}")
        return decision_values(np.asarray(self.weight), self.bias, features)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "weight": list(self.weight),
            "bias": self.bias,
            "dual_coeffs": list(self.dual_coeffs),
            "training_dim": self.training_dim,
            "kkt_violation": self.kkt_violation,
            "passes": self.passes,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SvrModel':
        weight = tuple(float(w) for w in data["weight"])
        training_dim = int(data["training_dim"])
        if len(weight) != training_dim:
            raise DimensionError(f"Stored weight has {len(weight)} entries, training_dim is {training_dim}")
        return cls(
            dual_coeffs=tuple(float(b) for b in data.get("dual_coeffs", ())),
            bias=float(data["bias"]),
            weight=weight,
            training_dim=training_dim,
            config=SvrConfig(**data.get("config", {})),
            kkt_violation=float(data.get("kkt_violation", 0.0)),
            passes=int(data.get("passes", 0)),
            converged=bool(data.get("converged", True)),
        )


def decision_values(weight: np.ndarray, bias: float, features: np.ndarray) -> np.ndarray:
    """<w, x> + b per row; row results do not depend on how many rows are passed."""
    return (features * weight).sum(axis=1) + bias


def predict_svr(model: SvrModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.training_dim,):
        raise DimensionError(f"Expected a feature vector of length {model.training_dim}, got shape {x.shape}")
    return float(decision_values(np.asarray(model.weight), model.bias, x[None, :])[0])


def dual_objective(beta: np.ndarray, features: np.ndarray, targets: np.ndarray, epsilon: float) -> float:
    w = features.T @ beta
    return float(targets @ beta - epsilon * np.abs(beta).sum() - 0.5 * w @ w)


def primal_objective(weight, bias: float, features, targets, config: SvrConfig) -> float:
    """1/2 |w|^2 + C * sum of slacks outside the epsilon tube."""
    weight = np.asarray(weight, dtype=np.float64)
    residuals = np.asarray(targets, dtype=np.float64) - decision_values(weight, bias, np.asarray(features, dtype=np.float64))
    slacks = np.maximum(np.abs(residuals) - config.epsilon, 0.0)
    return float(0.5 * weight @ weight + config.c_penalty * slacks.sum())


def _directional_rates(beta: np.ndarray, residuals: np.ndarray, c: float, epsilon: float):
    """
    Rate of dual gain for raising each coefficient (up) and for lowering it (low), relative
    to the bias. Infeasible directions are masked with -inf / +inf.
    """
    up = np.where(beta >= 0, residuals - epsilon, residuals + epsilon)
    low = np.where(beta <= 0, residuals + epsilon, residuals - epsilon)
    up = np.where(beta < c, up, -np.inf)
    low = np.where(beta > -c, low, np.inf)
    return up, low


def _best_step(g: float, eta: float, beta_a: float, beta_b: float, c: float, epsilon: float) -> float:
    """
    Step t maximizing  t*g - eta*t^2/2 - eps*(|beta_a + t| + |beta_b - t|)  over the box
    that keeps both coefficients in [-C, C]. The function is concave and piecewise quadratic,
    so the maximum is at a piece's stationary point, a kink or an end of the interval.
    """
    lo = max(-c - beta_a, beta_b - c)
    hi = min(c - beta_a, beta_b + c)

    def gain(t):
        return (t * g - 0.5 * eta * t * t
                - epsilon * (abs(beta_a + t) + abs(beta_b - t) - abs(beta_a) - abs(beta_b)))

    candidates = [0.0, lo, hi, -beta_a, beta_b]
    if eta > 0:
        for sign_a in (-1.0, 1.0):
            for sign_b in (-1.0, 1.0):
                candidates.append((g - epsilon * (sign_a - sign_b)) / eta)
    best_t, best_gain = 0.0, 0.0
    for t in candidates:
        t = min(max(t, lo), hi)
        value = gain(t)
        if value > best_gain + GAIN_EPSILON or (abs(value - best_gain) <= GAIN_EPSILON and abs(t) < abs(best_t)):
            best_t, best_gain = t, value
    return best_t


def _kkt_state(beta, residuals, c, epsilon):
    up, low = _directional_rates(beta, residuals, c, epsilon)
    max_up = float(up.max())
    min_low = float(low.min())
    return up, low, max_up, min_low


def _bias(max_up: float, min_low: float, residuals: np.ndarray) -> float:
    if math.isfinite(max_up) and math.isfinite(min_low):
        return (max_up + min_low) / 2
    if math.isfinite(max_up):
        return max_up
    if math.isfinite(min_low):
        return min_low
    return float(np.median(residuals))


def kkt_violation(model: SvrModel, features, targets) -> float:
    """Largest gain rate of any feasible pair move at the model's coefficients (0 at the optimum)."""
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    beta = np.asarray(model.dual_coeffs, dtype=np.float64)
    residuals = targets - decision_values(np.asarray(model.weight), 0.0, features)
    _, _, max_up, min_low = _kkt_state(beta, residuals, model.config.c_penalty, model.config.epsilon)
    return max(0.0, max_up - min_low)


def _pair_update(features, targets, beta, w, projections, a: int, b: int, c: float, epsilon: float) -> bool:
    """Exact step raising beta[a] and lowering beta[b] by the same amount; False if nothing moved."""
    direction = features[a] - features[b]
    eta = float(direction @ direction)
    g = float((targets[a] - projections[a]) - (targets[b] - projections[b]))
    t = _best_step(g, eta, beta[a], beta[b], c, epsilon)
    if t == 0.0:
        return False
    beta[a] = min(max(beta[a] + t, -c), c)
    beta[b] = min(max(beta[b] - t, -c), c)
    w += t * direction
    projections += features @ (t * direction)
    return True


def _refine_free_set(features, targets, beta, w, projections, c: float, epsilon: float) -> None:
    """
    Move the free coefficients toward the dual maximum on their face: their sum and signs stay
    fixed and all other coefficients are held. A step that reaches 0 or +-C stops there, that
    coefficient leaves the free set and the search repeats on the smaller set.
    """
    for _ in range(FACE_STEPS):
        free = np.nonzero((beta != 0.0) & (np.abs(beta) < c))[0]
        m = len(free)
        if m < 2:
            return
        signs = np.sign(beta[free])
        rows = features[free]
        gradient = targets[free] - projections[free] - epsilon * signs
        gram = rows @ rows.T
        system = np.zeros((m + 1, m + 1))
        system[:m, :m] = gram + FACE_RIDGE * max(float(np.trace(gram)) / m, 1.0) * np.eye(m)
        system[:m, m] = 1.0
        system[m, :m] = 1.0
        try:
            delta = np.linalg.solve(system, np.append(gradient, 0.0))[:m]
        except np.linalg.LinAlgError:
            return
        delta = delta - delta.mean()
        slope = float(gradient @ delta)
        if not slope > 0.0:
            return
        change = rows.T @ delta
        curvature = float(change @ change)

        # largest step keeping every free coefficient on its side of 0 and within +-C
        upper = np.where(signs > 0, c, 0.0) - beta[free]
        lower = np.where(signs > 0, 0.0, -c) - beta[free]
        limits = np.full(m, np.inf)
        rising, falling = delta > 0, delta < 0
        limits[rising] = upper[rising] / delta[rising]
        limits[falling] = lower[falling] / delta[falling]
        limits = np.maximum(limits, 0.0)
        k = int(np.argmin(limits))
        theta = slope / curvature if curvature > 0.0 else math.inf
        hit = theta >= limits[k]
        theta = min(theta, float(limits[k]))
        if not (theta > 0.0 and math.isfinite(theta)):
            return

        moved = beta[free] + theta * delta
        beta[free] = np.where(signs > 0, np.clip(moved, 0.0, c), np.clip(moved, -c, 0.0))
        if hit:
            if delta[k] > 0:
                beta[free[k]] = c if signs[k] > 0 else 0.0
            else:
                beta[free[k]] = 0.0 if signs[k] > 0 else -c
        shift = theta * change
        w += shift
        projections += features @ shift
        if not hit:
            return


def _sweep(features, targets, beta, w, projections, config: SvrConfig) -> int:
    """One pass over the coefficients in ascending index order; returns the number of pair updates."""
    c, epsilon, tol = config.c_penalty, config.epsilon, config.kkt_tolerance
    updates = 0
    for i in range(len(beta)):
        up, low = _directional_rates(beta, targets - projections, c, epsilon)
        j_up, j_low = int(np.argmax(up)), int(np.argmin(low))
        if up[j_up] - low[j_low] <= tol / 2:
            break
        raise_i = up[i] - low[j_low]
        lower_i = up[j_up] - low[i]
        if max(raise_i, lower_i) <= tol:
            continue
        a, b = (i, j_low) if raise_i >= lower_i else (j_up, i)
        if a == b or not _pair_update(features, targets, beta, w, projections, a, b, c, epsilon):
            continue
        _refine_free_set(features, targets, beta, w, projections, c, epsilon)
        updates += 1
    return updates


def fit_svr(features, targets, config: Optional[SvrConfig] = None) -> SvrModel:
    """
    Fit a linear SVR by pairwise coordinate ascent on the dual.

    Each pass visits the coefficients in ascending index order and pairs every violating one
    with the partner of maximal violation; every pair update is followed by a step on the free
    coefficients. The weight vector is recomputed from the coefficients before each pass, and
    the fit stops once that recomputed violation is within kkt_tolerance, after max_passes
    passes, or when a pass makes no update.
    """
    config = config or SvrConfig()
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError(f"Expected a 2-D feature matrix, got shape {features.shape}")
    n, d = features.shape
    if targets.shape != (n,):
        raise DimensionError(f"{n} feature rows but targets have shape {targets.shape}")
    if n < 2:
        raise SvrFitError(f"At least 2 samples are needed, got {n}")
    if not (np.isfinite(features).all() and np.isfinite(targets).all()):
        raise SvrFitError("Features and targets must be finite")

    c, epsilon, tol = config.c_penalty, config.epsilon, config.kkt_tolerance
    beta = np.zeros(n)
    history = [dual_objective(beta, features, targets, epsilon)]
    passes = 0
    while True:
        w = features.T @ beta
        projections = decision_values(w, 0.0, features)
        residuals = targets - projections
        _, _, max_up, min_low = _kkt_state(beta, residuals, c, epsilon)
        violation = max(0.0, max_up - min_low)
        if violation <= tol or passes >= config.max_passes:
            break
        updates = _sweep(features, targets, beta, w, projections, config)
        passes += 1
        history.append(dual_objective(beta, features, targets, epsilon))
        logger.debug("SVR pass %d: %d pair updates, dual objective %.6g", passes, updates, history[-1])
        if updates == 0:
            w = features.T @ beta
            residuals = targets - decision_values(w, 0.0, features)
            _, _, max_up, min_low = _kkt_state(beta, residuals, c, epsilon)
            violation = max(0.0, max_up - min_low)
            break

    converged = violation <= tol
    if not converged:
        logger.warning("SVR stopped after %d passes with KKT violation %.3g (tolerance %.3g)",
                       passes, violation, tol)
    model = SvrModel(
        dual_coeffs=tuple(float(b) for b in beta),
        bias=_bias(max_up, min_low, residuals),
        weight=tuple(float(v) for v in w),
        training_dim=d,
        config=config,
        kkt_violation=violation,
        passes=passes,
        converged=converged,
        dual_history=tuple(history),
    )
    logger.info("Fitted SVR on %d samples: %d passes, KKT violation %.3g, %d support vectors",
                n, passes, violation, int(np.count_nonzero(beta)))
    return model
