"""Problem context and the full decision state shared by the optimizers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .power import rate_to_sinr
from .rates import DecodingOrder, RateReport, equivalent_gains, rate_report
from .scenario import ChannelSet, ScenarioConfig
from .star import RisVariant, StarCoefficients, combined_channels


@dataclass
class SystemModel:
    """Channels plus the physical constants every subproblem needs (linear units)."""

    channels: ChannelSet
    noise: float
    p_max: float
    r_min: float = 0.0
    variant: RisVariant = None

    def __post_init__(self):
        if self.noise <= 0:
            raise ValueError("noise power must be positive")
        if self.p_max <= 0:
            raise ValueError("power budget must be positive")
        if self.variant is None:
            self.variant = RisVariant.star(self.channels.num_elements)

    @classmethod
    def from_config(cls, config: ScenarioConfig, channels: ChannelSet, variant: RisVariant = None):
        return cls(channels, config.noise_power, config.p_max, config.r_min, variant)

    @property
    def num_clusters(self) -> int:
        return self.channels.num_clusters

    @property
    def cluster(self) -> np.ndarray:
        return self.channels.cluster

    @property
    def r_floor(self) -> float:
        """Linear SINR floor matching ``r_min``."""
        return float(rate_to_sinr(self.r_min))

    def combined(self, coeffs: StarCoefficients) -> np.ndarray:
        return combined_channels(self.channels, coeffs)

    def gains(self, beams, coeffs) -> np.ndarray:
        return equivalent_gains(self.combined(coeffs), beams, self.cluster, self.noise)

    def report(self, state: "BeamformingSet") -> RateReport:
        return rate_report(self.combined(state.coeffs), state.beams, state.rho, state.order, self.noise)

    def sum_rate(self, state: "BeamformingSet") -> float:
        return self.report(state).total


@dataclass
class BeamformingSet:
    """Beams ``w_c`` (rows, watts), STAR coefficients, power coefficients and decoding order."""

    beams: np.ndarray
    coeffs: StarCoefficients
    rho: np.ndarray
    order: DecodingOrder
    flags: list = field(default_factory=list)

    def copy(self) -> "BeamformingSet":
        return BeamformingSet(
            np.array(self.beams, dtype=complex),
            self.coeffs.copy(),
            np.array(self.rho, dtype=float),
            DecodingOrder([s.copy() for s in self.order.slots]),
            list(self.flags),
        )

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.beams) ** 2))


def qos_satisfied(rates, r_min: float, tol: float = 1e-6) -> bool:
    return bool(np.all(np.asarray(rates) >= r_min - tol))


def improves(new_rate: float, new_ok: bool, old_rate: float, old_ok: bool, tol: float = 1e-12) -> bool:
    """Acceptance rule for block updates: QoS-feasible beats infeasible, then higher sum rate."""
    if new_ok != old_ok:
        return new_ok
    return new_rate >= old_rate - tol
