"""Simulation geometry, path loss and Rician-faded channels.

All internal quantities are linear SI (watts, meters). Configuration files
carry the usual engineering units (dB, dBm) and are converted on load.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

T_SIDE = "T"
R_SIDE = "R"

# sub-stream tags for np.random.default_rng([seed, tag, ...])
STREAM_POSITIONS = 1
STREAM_BS_RIS = 2
STREAM_RIS_USER = 3
STREAM_INIT = 4
STREAM_BASELINE = 5


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def dbm_to_watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and physical parameters of one STAR-RIS NOMA scenario.

    Defaults reproduce the desk-scale version of the reference setup: BS at
    (0, 0, 20), RIS at (0, 30, 20), three clusters of three users each.
    ``cluster_sides`` overrides the geometric T/R labelling when given.
    """

    bs_position: tuple = (0.0, 0.0, 20.0)
    ris_position: tuple = (0.0, 30.0, 20.0)
    cluster_centers: tuple = ((0.0, 25.0, 0.0), (0.0, 35.0, 0.0), (5.0, 30.0, 0.0))
    cluster_radius: float = 5.0
    num_antennas: int = 4
    num_elements: int = 10
    users_per_cluster: tuple = (3, 3, 3)
    path_loss_exponent_br: float = 2.2
    path_loss_exponent_ru: float = 2.2
    path_loss_ref_db: float = -30.0
    rician_k_br_db: float = 3.0
    rician_k_ru_db: float = 3.0
    noise_power_dbm: float = -90.0
    p_max_dbm: float = 35.0
    r_min: float = 0.1
    rng_seed: int = 0
    cluster_sides: tuple | None = None

    def __post_init__(self):
        def fix(name, value):
            object.__setattr__(self, name, value)

        fix("bs_position", tuple(float(v) for v in self.bs_position))
        fix("ris_position", tuple(float(v) for v in self.ris_position))
        fix("cluster_centers", tuple(tuple(float(v) for v in c) for c in self.cluster_centers))
        fix("users_per_cluster", tuple(int(k) for k in self.users_per_cluster))
        if self.cluster_sides is not None:
            fix("cluster_sides", tuple(str(s).upper() for s in self.cluster_sides))
        self.validate()

    def validate(self):
        if len(self.bs_position) != 3 or len(self.ris_position) != 3:
            raise ValueError("positions must be 3-vectors")
        if any(len(c) != 3 for c in self.cluster_centers):
            raise ValueError("cluster centers must be 3-vectors")
        if self.num_clusters < 1:
            raise ValueError("need at least one cluster")
        if len(self.users_per_cluster) != self.num_clusters:
            raise ValueError(
                f"users_per_cluster has {len(self.users_per_cluster)} entries "
                f"for {self.num_clusters} clusters"
            )
        if min(self.users_per_cluster) < 1:
            raise ValueError("every cluster needs at least one user")
        if self.num_antennas < 1 or self.num_elements < 1:
            raise ValueError("num_antennas and num_elements must be >= 1")
        if self.cluster_radius <= 0:
            raise ValueError("cluster_radius must be positive")
        if self.path_loss_exponent_br <= 0 or self.path_loss_exponent_ru <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.r_min < 0:
            raise ValueError("r_min must be non-negative")
        if self.cluster_sides is not None:
            if len(self.cluster_sides) != self.num_clusters:
                raise ValueError("cluster_sides must have one label per cluster")
            if any(s not in (T_SIDE, R_SIDE) for s in self.cluster_sides):
                raise ValueError("cluster_sides entries must be 'T' or 'R'")

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_centers)

    @property
    def num_users(self) -> int:
        return sum(self.users_per_cluster)

    @property
    def noise_power(self) -> float:
        """Noise power in watts."""
        return float(dbm_to_watt(self.noise_power_dbm))

    @property
    def p_max(self) -> float:
        """Transmit power budget in watts."""
        return float(dbm_to_watt(self.p_max_dbm))

    @property
    def rician_k_br(self) -> float:
        return float(db_to_linear(self.rician_k_br_db))

    @property
    def rician_k_ru(self) -> float:
        return float(db_to_linear(self.rician_k_ru_db))

    @property
    def sides(self) -> tuple:
        """T/R label of every cluster.

        Geometric rule: the BS illuminates the surface from y < ris_y, so a
        center with y < ris_y lies in the reflection half-space. Centers on
        the plane itself count as transmission side.
        """
        if self.cluster_sides is not None:
            return self.cluster_sides
        ris_y = self.ris_position[1]
        return tuple(R_SIDE if c[1] < ris_y else T_SIDE for c in self.cluster_centers)

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return ScenarioConfig(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bs_position"] = list(self.bs_position)
        d["ris_position"] = list(self.ris_position)
        d["cluster_centers"] = [list(c) for c in self.cluster_centers]
        d["users_per_cluster"] = list(self.users_per_cluster)
        if self.cluster_sides is not None:
            d["cluster_sides"] = list(self.cluster_sides)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path) -> ScenarioConfig:
    """Read a ScenarioConfig from a JSON (or YAML) file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    return ScenarioConfig.from_dict(data)


@dataclass
class ChannelSet:
    """BS->RIS matrix ``F`` (M x N_T) and RIS->user vectors ``g`` (K x M).

    ``cluster[u]`` and ``side[u]`` label global user ``u``. The combined
    channel of user ``u`` is ``g[u]^H Theta_side F``.
    """

    F: np.ndarray
    g: np.ndarray
    side: np.ndarray
    cluster: np.ndarray
    positions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=complex)
        self.g = np.atleast_2d(np.asarray(self.g, dtype=complex))
        self.side = np.asarray(self.side)
        self.cluster = np.asarray(self.cluster, dtype=int)
        if self.g.shape[1] != self.F.shape[0]:
            raise ValueError("g and F disagree on the number of elements")
        if not (len(self.side) == len(self.cluster) == self.g.shape[0]):
            raise ValueError("per-user labels do not match the number of users")
        if not (np.all(np.isfinite(self.F)) and np.all(np.isfinite(self.g))):
            raise ValueError("channel entries must be finite")

    @property
    def num_elements(self) -> int:
        return self.F.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.F.shape[1]

    @property
    def num_users(self) -> int:
        return self.g.shape[0]

    @property
    def num_clusters(self) -> int:
        return int(self.cluster.max()) + 1

    def members(self, c: int) -> np.ndarray:
        """Global indices of the users in cluster ``c``."""
        return np.flatnonzero(self.cluster == c)

    def subset(self, users) -> "ChannelSet":
        """Channels restricted to ``users``, re-indexed as a single cluster each."""
        users = np.asarray(users)
        _, cl = np.unique(self.cluster[users], return_inverse=True)
        pos = None if self.positions is None else self.positions[users]
        return ChannelSet(self.F, self.g[users], self.side[users], cl, pos)


def path_loss(d, exponent: float, eps0_db: float):
    """Linear power gain ``eps0 * d**-exponent`` with the reference at 1 m."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path_loss needs a positive distance")
    return db_to_linear(eps0_db) * d ** (-exponent)


def rician_channel(los_component, rician_k_db: float, rng, path_loss: float = 1.0):
    """Rician fading around a unit-modulus LoS component.

    Returns ``sqrt(pl) * (sqrt(k/(1+k)) LoS + sqrt(1/(1+k)) NLoS)`` with
    CN(0, 1) NLoS entries drawn from ``rng``.
    """
    los = np.asarray(los_component, dtype=complex)
    k = float(db_to_linear(rician_k_db))
    if k < 0:
        raise ValueError("Rician factor must be non-negative")
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2.0)
    return np.sqrt(path_loss) * (np.sqrt(k / (1.0 + k)) * los + np.sqrt(1.0 / (1.0 + k)) * nlos)


def steering_vector(n: int, direction) -> np.ndarray:
    """Half-wavelength ULA response along the x axis for a unit ``direction``."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return np.exp(1j * np.pi * np.arange(n) * direction[0])


def place_users(config: ScenarioConfig, seed: int, attempt: int = 0) -> np.ndarray:
    """Uniform positions in a disc of ``cluster_radius`` around every center (z=0)."""
    out = []
    for c, (center, count) in enumerate(zip(config.cluster_centers, config.users_per_cluster)):
        for k in range(count):
            rng = np.random.default_rng([seed, STREAM_POSITIONS, c, k, attempt])
            r = config.cluster_radius * np.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2 * np.pi)
            out.append((center[0] + r * np.cos(phi), center[1] + r * np.sin(phi), 0.0))
    return np.array(out)


def build_channel_set(config: ScenarioConfig, seed: int | None = None) -> ChannelSet:
    """Draw user positions and all channels for one Monte-Carlo trial.

    Every link uses its own RNG sub-stream keyed by (seed, link, user), so
    adding users never perturbs the draws of existing links.
    """
    seed = config.rng_seed if seed is None else int(seed)
    bs = np.array(config.bs_position)
    ris = np.array(config.ris_position)
    M, N = config.num_elements, config.num_antennas

    for attempt in range(100):
        positions = place_users(config, seed, attempt)
        if np.all(np.linalg.norm(positions - ris, axis=1) > 0):
            break
        log.warning("user co-located with the RIS; redrawing positions (attempt %d)", attempt + 1)
    else:
        raise RuntimeError("could not place users away from the RIS")

    d_br = np.linalg.norm(ris - bs)
    los_f = np.outer(steering_vector(M, bs - ris), steering_vector(N, ris - bs).conj())
    F = rician_channel(
        los_f,
        config.rician_k_br_db,
        np.random.default_rng([seed, STREAM_BS_RIS]),
        path_loss(d_br, config.path_loss_exponent_br, config.path_loss_ref_db),
    )

    cluster = np.repeat(np.arange(config.num_clusters), config.users_per_cluster)
    sides = np.array(config.sides)[cluster]
    g = np.empty((len(positions), M), dtype=complex)
    for u, p in enumerate(positions):
        d = np.linalg.norm(p - ris)
        c = cluster[u]
        k = u - int(np.sum(np.asarray(config.users_per_cluster)[:c]))
        g[u] = rician_channel(
            steering_vector(M, p - ris),
            config.rician_k_ru_db,
            np.random.default_rng([seed, STREAM_RIS_USER, c, k]),
            path_loss(d, config.path_loss_exponent_ru, config.path_loss_ref_db),
        )
    return ChannelSet(F=F, g=g, side=sides, cluster=cluster, positions=positions)
