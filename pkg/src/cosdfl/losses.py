"""Composable cost-sensitive losses over multi-output regression.

A loss is assembled from a base error (squared or absolute) and optional
components:

  C   multiply by a cached per-instance cost weight,
  O   zero out coordinates whose prediction errs in the direction the
      downstream optimizer is indifferent to (given the optimal decision),
  O_S like O but widened by objective-coefficient sensitivity ranges,
  S   evaluate on L2-normalized vectors so only the predicted direction
      matters.

Every evaluation returns the loss value together with its gradient in the
prediction. Masks and pinball indicators are treated as locally constant, so
the gradient is the almost-everywhere derivative (zero subgradient on the
measure-zero boundaries). With S the gradient is chained through the full
normalization Jacobian (I - u u') / ||c_hat||, u = c_hat / ||c_hat||.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import DataInstance, Problem, Sense, as_vector
from .errors import (MissingBaselineRegret, MissingInstanceCost,
                     MissingOptimalDecision, MissingRanges, NonFiniteGradient,
                     ZeroVector)

NORM_EPS = 1e-12
# value assigned when a scale-invariant loss sees a (near-)zero prediction:
# twice the maximum of the normalized squared error, scaled by 2/d at use site
ZERO_PREDICTION_PENALTY = 2.0 * 2.0


class BaseError(Enum):
    SQUARED = "squared"
    ABSOLUTE = "absolute"


class OneSidedMode(Enum):
    OFF = "off"
    OPTIMAL = "optimal"
    SENSITIVITY = "sensitivity"


@dataclass(frozen=True)
class LossValueGrad:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class LossSpec:
    """Declarative description of a composed loss.

    ``tau`` activates the generic asymmetric (pinball-weighted) form and is
    mutually exclusive with the one-sided components, which are the special
    case tau in {0, 1} chosen per coordinate from the optimal decision.
    """

    base: BaseError = BaseError.SQUARED
    instance_costs: bool = False
    one_sided: OneSidedMode = OneSidedMode.OFF
    scale_invariant: bool = False
    tau: float | tuple[float, ...] | None = None
    lawless_w: float | None = None
    spo_plus: bool = False

    def __post_init__(self):
        if self.spo_plus:
            if (self.instance_costs or self.one_sided is not OneSidedMode.OFF
                    or self.scale_invariant or self.tau is not None
                    or self.lawless_w is not None):
                raise ValueError("spo+ does not compose with other components")
            return
        if self.lawless_w is not None:
            w = float(self.lawless_w)
            if not 0.0 <= w <= 1.0:
                raise ValueError("lawless weight must lie in [0, 1]")
            if (self.instance_costs or self.one_sided is not OneSidedMode.OFF
                    or self.scale_invariant or self.tau is not None):
                raise ValueError("the regret-weighted loss only composes with a base error")
            object.__setattr__(self, "lawless_w", w)
        if self.tau is not None:
            if self.one_sided is not OneSidedMode.OFF:
                raise ValueError("tau and one-sided masking both set the asymmetry; pick one")
            taus = (self.tau,) if np.isscalar(self.tau) else tuple(self.tau)
            if any(not 0.0 <= float(t) <= 1.0 for t in taus):
                raise ValueError("tau values must lie in [0, 1]")
            object.__setattr__(self, "tau", float(taus[0]) if np.isscalar(self.tau)
                               else tuple(float(t) for t in taus))

    # -- requirements used by trainers and the harness ----------------------

    @property
    def requires_decisions(self) -> bool:
        return self.spo_plus or self.one_sided is not OneSidedMode.OFF

    @property
    def requires_ranges(self) -> bool:
        return self.one_sided is OneSidedMode.SENSITIVITY

    @property
    def requires_instance_cost(self) -> bool:
        return self.instance_costs

    @property
    def requires_baseline_regret(self) -> bool:
        return self.lawless_w is not None and self.lawless_w > 0.0

    @property
    def solver_free(self) -> bool:
        return not self.spo_plus

    def validation_variant(self) -> "LossSpec":
        """The loss used on validation instances, which carry no cost weights."""
        if self.spo_plus:
            return self
        return replace(self, instance_costs=False, lawless_w=None)

    # -- naming --------------------------------------------------------------

    @property
    def name(self) -> str:
        if self.spo_plus:
            return "spo+"
        base = "mse" if self.base is BaseError.SQUARED else "mae"
        if self.lawless_w is not None:
            tag = f"lawless:{self.lawless_w:g}"
            return tag if self.base is BaseError.SQUARED else f"{base}+{tag}"
        parts = [base]
        if self.instance_costs:
            parts.append("c")
        if self.one_sided is OneSidedMode.OPTIMAL:
            parts.append("o")
        elif self.one_sided is OneSidedMode.SENSITIVITY:
            parts.append("o_s")
        if self.scale_invariant:
            parts.append("s")
        if self.tau is not None:
            if np.isscalar(self.tau):
                parts.append(f"tau:{self.tau:g}")
            else:
                parts.append("tau:" + ",".join(f"{v:g}" for v in self.tau))
        return "+".join(parts)

    @staticmethod
    def parse(text: str) -> "LossSpec":
        """Parse loss strings: mse, mae+cos, mse+o_s+s, spo+, lawless:0.4."""
        text = text.strip().lower()
        if text == "spo+":
            return LossSpec(spo_plus=True)
        tokens = text.split("+")
        base = BaseError.SQUARED
        start = 0
        if tokens[0] in ("mse", "mae"):
            base = BaseError.SQUARED if tokens[0] == "mse" else BaseError.ABSOLUTE
            start = 1
        elif not tokens[0].startswith("lawless:"):
            raise ValueError(f"loss string must start with mse, mae, lawless:<w>, "
                             f"or be spo+; got {text!r}")
        kwargs: dict = {"base": base}
        for token in tokens[start:]:
            if token == "c":
                kwargs["instance_costs"] = True
            elif token == "o":
                _set_one_sided(kwargs, OneSidedMode.OPTIMAL)
            elif token == "o_s":
                _set_one_sided(kwargs, OneSidedMode.SENSITIVITY)
            elif token == "s":
                kwargs["scale_invariant"] = True
            elif token == "cos":
                kwargs["instance_costs"] = True
                _set_one_sided(kwargs, OneSidedMode.OPTIMAL)
                kwargs["scale_invariant"] = True
            elif token.startswith("lawless:"):
                kwargs["lawless_w"] = float(token.split(":", 1)[1])
            elif token.startswith("tau:"):
                spec = token.split(":", 1)[1]
                vals = tuple(float(v) for v in spec.split(","))
                kwargs["tau"] = vals[0] if len(vals) == 1 else vals
            else:
                raise ValueError(f"unknown loss component {token!r} in {text!r}")
        return LossSpec(**kwargs)


def _set_one_sided(kwargs: dict, mode: OneSidedMode) -> None:
    if kwargs.get("one_sided", OneSidedMode.OFF) is not OneSidedMode.OFF:
        raise ValueError("components o and o_s are mutually exclusive")
    kwargs["one_sided"] = mode


def parse_loss(text: str) -> LossSpec:
    return LossSpec.parse(text)


# --- primitives --------------------------------------------------------------

def base_error(predicted: np.ndarray, true: np.ndarray, base: BaseError
               ) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise error and its derivative in the prediction."""
    diff = predicted - true
    if base is BaseError.SQUARED:
        return diff * diff, 2.0 * diff
    return np.abs(diff), np.sign(diff)


def pinball_loss(predicted: float, true: float, tau: float,
                 base: BaseError = BaseError.ABSOLUTE) -> float:
    """Asymmetric scalar error: tau * e if predicted <= true else (1-tau) * e."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    e, _ = base_error(np.asarray([float(predicted)]), np.asarray([float(true)]), base)
    weight = tau if predicted <= true else 1.0 - tau
    return float(weight * e[0])


def normalize(vector: np.ndarray) -> np.ndarray:
    """Project onto the unit sphere; rejects (near-)zero input."""
    vector = as_vector(vector, name="vector")
    norm = float(np.linalg.norm(vector))
    if norm <= NORM_EPS:
        raise ZeroVector(f"cannot normalize a vector with norm {norm:.3e}")
    return vector / norm


def one_sided_weights(predicted: np.ndarray, true: np.ndarray,
                      decision_values: np.ndarray, sense: Sense,
                      mode: OneSidedMode,
                      range_lower: np.ndarray | None = None,
                      range_upper: np.ndarray | None = None,
                      var_lower: float | np.ndarray = 0.0,
                      var_upper: float | np.ndarray = 1.0) -> np.ndarray:
    """0/1 weights zeroing error directions the optimizer is indifferent to.

    A coordinate at its upper bound (selected) keeps its decision when the
    prediction errs toward making it more attractive: overprediction for
    Maximize, underprediction for Minimize. Coordinates at the lower bound
    mirror this; coordinates strictly between their bounds are never masked.
    In SENSITIVITY mode the safe region is widened to the coefficient's
    stability range, so e.g. a selected Maximize coordinate is masked
    whenever the prediction stays above the range's lower endpoint.
    """
    if mode is OneSidedMode.OFF:
        return np.ones_like(true)
    at_upper = np.isclose(decision_values, var_upper, atol=1e-9)
    at_lower = np.isclose(decision_values, var_lower, atol=1e-9)
    if mode is OneSidedMode.OPTIMAL:
        hi, lo = true, true
    else:
        if range_lower is None or range_upper is None:
            raise MissingRanges("sensitivity masking requires cached cost ranges")
        lo, hi = range_lower, range_upper
    if sense is Sense.MAXIMIZE:
        masked = (at_upper & (predicted > lo)) | (at_lower & (predicted < hi))
    else:
        masked = (at_upper & (predicted < hi)) | (at_lower & (predicted > lo))
    return np.where(masked, 0.0, 1.0)


def one_sided_mask(predicted: np.ndarray, instance: DataInstance, sense: Sense,
                   mode: OneSidedMode) -> np.ndarray:
    """Mask for a raw-space prediction against an instance's cached caches."""
    predicted = as_vector(predicted, name="predicted costs", length=instance.d)
    if instance.optimal_decision is None:
        raise MissingOptimalDecision("one-sided masking requires the cached optimal decision")
    lo = hi = None
    if mode is OneSidedMode.SENSITIVITY:
        if instance.sensitivity_ranges is None:
            raise MissingRanges("sensitivity masking requires cached cost ranges")
        lo, hi = instance.sensitivity_ranges.lower, instance.sensitivity_ranges.upper
    return one_sided_weights(predicted, instance.true_costs,
                             instance.optimal_decision.values, sense, mode,
                             range_lower=lo, range_upper=hi)


# --- composed evaluation ------------------------------------------------------

def _instance_factor(spec: LossSpec, instance: DataInstance) -> float:
    if spec.instance_costs:
        if instance.instance_cost is None:
            raise MissingInstanceCost("loss has component C but the instance "
                                      "carries no cost weight")
        return instance.instance_cost
    if spec.lawless_w is not None:
        w = spec.lawless_w
        if w == 0.0:
            return 1.0
        if instance.instance_cost is None:
            raise MissingBaselineRegret("regret-weighted loss requires the cached "
                                        "baseline regret")
        return w * instance.instance_cost + (1.0 - w)
    return 1.0


def evaluate_loss(spec: LossSpec, predicted: np.ndarray, instance: DataInstance,
                  sense: Sense) -> LossValueGrad:
    """Value and prediction-gradient of a composed loss on one instance.

    With S, the instance's cached sensitivity ranges are interpreted as
    already living in normalized space (they must be computed from the
    normalized true costs). Masks are evaluated wherever the base error is,
    i.e. in normalized space when S is on.
    """
    if spec.spo_plus:
        raise ValueError("spo+ is evaluated via spo_plus_loss (it needs the problem oracle)")
    predicted = as_vector(predicted, name="predicted costs", length=instance.d)
    true = instance.true_costs
    d = true.shape[0]
    factor = _instance_factor(spec, instance)

    if spec.scale_invariant:
        true_eval = normalize(true)  # raises ZeroVector for degenerate data
        pred_norm = float(np.linalg.norm(predicted))
        if pred_norm <= NORM_EPS:
            # finite escape penalty pointing back toward the true direction
            value = factor * ZERO_PREDICTION_PENALTY / d
            return LossValueGrad(value, -factor * true_eval)
        pred_eval = predicted / pred_norm
    else:
        true_eval, pred_eval = true, predicted

    if spec.one_sided is not OneSidedMode.OFF:
        if instance.optimal_decision is None:
            raise MissingOptimalDecision("one-sided loss requires the cached optimal decision")
        lo = hi = None
        if spec.one_sided is OneSidedMode.SENSITIVITY:
            if instance.sensitivity_ranges is None:
                raise MissingRanges("sensitivity loss requires cached cost ranges")
            lo = instance.sensitivity_ranges.lower
            hi = instance.sensitivity_ranges.upper
        weights = one_sided_weights(pred_eval, true_eval,
                                    instance.optimal_decision.values, sense,
                                    spec.one_sided, range_lower=lo, range_upper=hi)
    elif spec.tau is not None:
        tau = np.full(d, spec.tau) if np.isscalar(spec.tau) else np.asarray(spec.tau, dtype=float)
        if tau.shape[0] != d:
            raise ValueError(f"tau must be scalar or length {d}")
        weights = np.where(pred_eval <= true_eval, tau, 1.0 - tau)
    else:
        weights = np.ones(d)

    errors, derror = base_error(pred_eval, true_eval, spec.base)
    value = factor * float(weights @ errors) / d
    grad_eval = (factor / d) * weights * derror
    if spec.scale_invariant:
        # chain through the normalization Jacobian (I - u u') / ||c_hat||
        grad = (grad_eval - pred_eval * float(pred_eval @ grad_eval)) / pred_norm
    else:
        grad = grad_eval
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("loss or gradient evaluated to a non-finite value")
    return LossValueGrad(value, grad)


def spo_plus_loss(predicted: np.ndarray, instance: DataInstance,
                  problem: Problem) -> LossValueGrad:
    """Convex surrogate that upper-bounds regret; costs one solver call.

    Solves the problem at 2*predicted - true and compares against the cached
    optimal decision. The gradient is the standard subgradient
    +/- 2 (x(2c_hat - c) - x(c)).
    """
    predicted = as_vector(predicted, name="predicted costs", length=problem.d)
    if instance.optimal_decision is None:
        raise MissingOptimalDecision("spo+ requires the cached optimal decision")
    true = instance.true_costs
    x_star = instance.optimal_decision.values
    shifted = 2.0 * predicted - true
    x_shift = problem.solve(shifted).values
    if problem.sense is Sense.MAXIMIZE:
        value = float(shifted @ x_shift) - 2.0 * float(predicted @ x_star) \
            + float(true @ x_star)
        grad = 2.0 * (x_shift - x_star)
    else:
        value = -float(shifted @ x_shift) + 2.0 * float(predicted @ x_star) \
            - float(true @ x_star)
        grad = 2.0 * (x_star - x_shift)
    return LossValueGrad(value, grad)


def lawless_loss(w: float, predicted: np.ndarray, instance: DataInstance,
                 base: BaseError = BaseError.SQUARED) -> LossValueGrad:
    """Baseline-regret-weighted base loss: (w * C + (1 - w)) * base_loss.

    C is the instance's cached raw baseline regret (not a regret/loss ratio).
    """
    spec = LossSpec(base=base, lawless_w=float(w))
    # sense is irrelevant: no mask component can be active here
    return evaluate_loss(spec, predicted, instance, Sense.MINIMIZE)
