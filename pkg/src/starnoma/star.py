"""Energy-splitting STAR-RIS coefficients and combined channels.

Amplitudes are stored as power splits ``beta`` (not ``sqrt(beta)``). The
diagonal of ``Theta_p`` is ``sqrt(beta_p) * exp(1j * theta_p)``; the vector
``u_p`` used by the relaxation holds the conjugate of that diagonal, so
``|g^H Theta_p F w|^2 == |u_p^H diag(g^H) F w|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import T_SIDE, R_SIDE, ChannelSet

BETA_TOL = 1e-9

STAR_ES = "star_es"
CONVENTIONAL_SPLIT = "conventional_split"
CONVENTIONAL_DOUBLE = "conventional_double"


class CoefficientError(ValueError):
    """Raised when amplitudes leave the feasible set."""


@dataclass
class StarCoefficients:
    beta_t: np.ndarray
    beta_r: np.ndarray
    theta_t: np.ndarray
    theta_r: np.ndarray
    # False only for the two-surface baseline, where each side has its own
    # full-amplitude surface and beta_t + beta_r = 1 does not apply.
    coupled: bool = True

    def __post_init__(self):
        self.beta_t = np.asarray(self.beta_t, dtype=float).copy()
        self.beta_r = np.asarray(self.beta_r, dtype=float).copy()
        self.theta_t = np.mod(np.asarray(self.theta_t, dtype=float), 2 * np.pi)
        self.theta_r = np.mod(np.asarray(self.theta_r, dtype=float), 2 * np.pi)
        n = len(self.beta_t)
        if not (len(self.beta_r) == len(self.theta_t) == len(self.theta_r) == n):
            raise ValueError("coefficient vectors must share one length")
        self.validate()

    def validate(self, tol: float = BETA_TOL):
        for b in (self.beta_t, self.beta_r):
            if np.any(b < -tol) or np.any(b > 1 + tol):
                raise CoefficientError("amplitude split outside [0, 1]")
        if self.coupled and np.any(np.abs(self.beta_t + self.beta_r - 1.0) > tol):
            raise CoefficientError("beta_t + beta_r must equal 1 on every element")
        np.clip(self.beta_t, 0.0, 1.0, out=self.beta_t)
        np.clip(self.beta_r, 0.0, 1.0, out=self.beta_r)

    @property
    def num_elements(self) -> int:
        return len(self.beta_t)

    def phasor(self, side: str) -> np.ndarray:
        """Diagonal of ``Theta_side``."""
        if side == T_SIDE:
            return np.sqrt(self.beta_t) * np.exp(1j * self.theta_t)
        if side == R_SIDE:
            return np.sqrt(self.beta_r) * np.exp(1j * self.theta_r)
        raise ValueError(f"unknown side {side!r}")

    def u_vector(self, side: str) -> np.ndarray:
        return self.phasor(side).conj()

    def copy(self) -> "StarCoefficients":
        return StarCoefficients(self.beta_t, self.beta_r, self.theta_t, self.theta_r, self.coupled)

    def to_dict(self) -> dict:
        return {
            "beta_t": self.beta_t.tolist(),
            "beta_r": self.beta_r.tolist(),
            "theta_t": self.theta_t.tolist(),
            "theta_r": self.theta_r.tolist(),
            "coupled": self.coupled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StarCoefficients":
        return cls(d["beta_t"], d["beta_r"], d["theta_t"], d["theta_r"], d.get("coupled", True))

    @classmethod
    def uniform(cls, m: int, rng=None) -> "StarCoefficients":
        """Even split with random (or zero) phases."""
        if rng is None:
            tt = tr = np.zeros(m)
        else:
            tt = rng.uniform(0, 2 * np.pi, m)
            tr = rng.uniform(0, 2 * np.pi, m)
        return cls(np.full(m, 0.5), np.full(m, 0.5), tt, tr)

    @classmethod
    def from_u(cls, u_t, u_r, coupled: bool = True) -> "StarCoefficients":
        """Coefficients from relaxation vectors ``u_p`` (conjugated phasors)."""
        u_t = np.asarray(u_t, dtype=complex)
        u_r = np.asarray(u_r, dtype=complex)
        bt = np.abs(u_t) ** 2
        br = np.abs(u_r) ** 2
        if coupled:
            total = bt + br
            total = np.where(total > 0, total, 1.0)
            bt, br = bt / total, br / total
        return cls(np.clip(bt, 0, 1), np.clip(br, 0, 1), -np.angle(u_t), -np.angle(u_r), coupled)


@dataclass
class RisVariant:
    """Which surface is deployed: STAR-ES, or conventional T-only/R-only surfaces.

    ``t_mask``/``r_mask`` mark elements allowed to transmit/reflect. For
    ``conventional_split`` the first ceil(M/2) elements transmit and the rest
    reflect; ``conventional_double`` models two full-size surfaces.
    """

    kind: str
    t_mask: np.ndarray = field(default=None)
    r_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in (STAR_ES, CONVENTIONAL_SPLIT, CONVENTIONAL_DOUBLE):
            raise ValueError(f"unknown RIS variant {self.kind!r}")
        self.t_mask = np.asarray(self.t_mask, dtype=bool)
        self.r_mask = np.asarray(self.r_mask, dtype=bool)
        if self.t_mask.shape != self.r_mask.shape:
            raise ValueError("masks must have equal length")
        if self.kind == CONVENTIONAL_SPLIT and np.any(self.t_mask == self.r_mask):
            raise ValueError("split masks must partition the elements")
        if self.kind != CONVENTIONAL_SPLIT and not (self.t_mask.all() and self.r_mask.all()):
            raise ValueError(f"{self.kind} uses every element on both sides")

    @classmethod
    def star(cls, m: int) -> "RisVariant":
        return cls(STAR_ES, np.ones(m, bool), np.ones(m, bool))

    @classmethod
    def split(cls, m: int) -> "RisVariant":
        t = np.arange(m) < (m + 1) // 2
        return cls(CONVENTIONAL_SPLIT, t, ~t)

    @classmethod
    def double(cls, m: int) -> "RisVariant":
        return cls(CONVENTIONAL_DOUBLE, np.ones(m, bool), np.ones(m, bool))

    @property
    def coupled(self) -> bool:
        return self.kind != CONVENTIONAL_DOUBLE

    @property
    def pinned(self) -> bool:
        """True when the amplitudes are fixed and only phases are free."""
        return self.kind != STAR_ES


def split_signal(s, beta_t, theta_t, beta_r, theta_r):
    """Transmitted and reflected parts of an incident signal ``s``."""
    for b in (beta_t, beta_r):
        if np.any(np.asarray(b) < 0) or np.any(np.asarray(b) > 1):
            raise CoefficientError("amplitude split outside [0, 1]")
    t = np.sqrt(beta_t) * np.exp(1j * np.asarray(theta_t)) * s
    r = np.sqrt(beta_r) * np.exp(1j * np.asarray(theta_r)) * s
    return t, r


def theta_matrix(coeffs: StarCoefficients, side: str) -> np.ndarray:
    return np.diag(coeffs.phasor(side))


def combined_channels(channels: ChannelSet, coeffs: StarCoefficients) -> np.ndarray:
    """All combined channels ``h_u = g_u^H Theta_side(u) F`` as rows (K x N_T)."""
    phi = np.where(
        (channels.side == T_SIDE)[:, None],
        coeffs.phasor(T_SIDE)[None, :],
        coeffs.phasor(R_SIDE)[None, :],
    )
    return (channels.g.conj() * phi) @ channels.F


def combined_channel(channels: ChannelSet, coeffs: StarCoefficients, user: int) -> np.ndarray:
    g = channels.g[user]
    return g.conj() @ theta_matrix(coeffs, channels.side[user]) @ channels.F


def cascaded_channels(channels: ChannelSet, beams: np.ndarray) -> np.ndarray:
    """``hbar[u, c] = diag(g_u^H) F w_c`` as an array of shape (K, C, M)."""
    fw = np.asarray(beams) @ channels.F.T  # (C, M)
    return channels.g.conj()[:, None, :] * fw[None, :, :]


def apply_variant_constraints(coeffs: StarCoefficients, variant: RisVariant) -> StarCoefficients:
    """Pin amplitudes to what ``variant`` allows, keeping phases."""
    if variant.kind == STAR_ES:
        return coeffs
    if variant.kind == CONVENTIONAL_SPLIT:
        bt = variant.t_mask.astype(float)
        return StarCoefficients(bt, 1.0 - bt, coeffs.theta_t, coeffs.theta_r)
    m = coeffs.num_elements
    return StarCoefficients(np.ones(m), np.ones(m), coeffs.theta_t, coeffs.theta_r, coupled=False)
