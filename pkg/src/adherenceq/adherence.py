"""Online point estimation of the adherence level from implemented actions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class AdherenceObservation(Enum):
    """Outcome of one round, as far as adherence is identifiable."""

    ADHERED = "adhered"
    DEVIATED = "deviated"
    UNINFORMATIVE = "uninformative"


class ProtocolViolationError(ValueError):
    """The implemented action matches neither the recommendation nor the baseline."""


def classify_action(u_taken: int, u_r: int, u_b: int) -> AdherenceObservation:
    """Classify an implemented action against the recommended and baseline ones.

    When recommendation and baseline propose the same action the round carries
    no adherence signal and is reported as uninformative.
    """
    if u_r == u_b:
        if u_taken == u_r:
            return AdherenceObservation.UNINFORMATIVE
        raise ProtocolViolationError(
            f"action {u_taken} differs from the agreeing laws' action {u_r}"
        )
    if u_taken == u_r:
        return AdherenceObservation.ADHERED
    if u_taken == u_b:
        return AdherenceObservation.DEVIATED
    raise ProtocolViolationError(
        f"action {u_taken} matches neither recommendation {u_r} nor baseline {u_b}"
    )


@dataclass(frozen=True)
class AdherenceEstimate:
    """Running point estimate of the adherence level.

    Counts are stored as integers so the estimate is always the exact ratio
    adhered / n. Until the first informative observation arrives (n == 0) the
    configured prior is reported instead.
    """

    adhered: int = 0
    n: int = 0
    prior: float = 0.5

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.adhered <= max(self.n, 0):
            raise ValueError(f"inconsistent counts adhered={self.adhered}, n={self.n}")
        if not 0.0 <= self.prior <= 1.0:
            raise ValueError(f"prior must lie in [0, 1], got {self.prior}")

    @property
    def theta_hat(self) -> float:
        return self.prior if self.n == 0 else self.adhered / self.n

    @classmethod
    def from_theta(cls, theta_hat: float, n: int, prior: float = 0.5) -> "AdherenceEstimate":
        """Rebuild an estimate from (theta_hat, n); theta_hat * n must be integral."""
        if n == 0:
            return cls(0, 0, prior)
        count = theta_hat * n
        nearest = round(count)
        if abs(count - nearest) > 1e-9:
            raise ValueError(
                f"theta_hat={theta_hat} with n={n} is not an exact observation ratio"
            )
        return cls(int(nearest), int(n), prior)


def observe(est: AdherenceEstimate, obs: AdherenceObservation) -> AdherenceEstimate:
    """Fold one observation into the estimate.

    Informative observations move the ratio; uninformative ones return the
    estimate unchanged (same object).
    """
    if obs is AdherenceObservation.ADHERED:
        return AdherenceEstimate(est.adhered + 1, est.n + 1, est.prior)
    if obs is AdherenceObservation.DEVIATED:
        return AdherenceEstimate(est.adhered, est.n + 1, est.prior)
    return est
