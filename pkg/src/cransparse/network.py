"""Multi-cell geometry and Rayleigh/path-loss channel generation.

Cells form a square grid of side ``cell_side``. Antenna ``n`` belongs to
cell ``n // n_antennas_per_cell`` and user ``k`` to cell
``k // n_users_per_cell``; both index sets are contiguous per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

PLACEMENTS = ("co-located", "uniform-random")
BORDER_REFERENCES = ("edge", "corner")


class ConfigurationError(ValueError):
    """Invalid network or experiment configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    n_cells: int = 16
    n_antennas_per_cell: int = 8
    n_users_per_cell: int = 4
    tx_power: float = 1.0
    path_loss_exponent: float = 2.0
    cell_side: float = 2.0
    border_snr_db: float = 0.0
    antenna_placement: str = "co-located"
    # None resolves to 1% of the cell side
    min_distance: float | None = None
    border_reference: str = "edge"
    rng_seed: int = 0

    def __post_init__(self):
        if self.min_distance is None:
            object.__setattr__(self, "min_distance", 0.01 * self.cell_side)
        self.validate()

    def validate(self) -> None:
        for name in ("n_cells", "n_antennas_per_cell", "n_users_per_cell"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if math.isqrt(self.n_cells) ** 2 != self.n_cells:
            raise ConfigurationError(f"n_cells must be a perfect square, got {self.n_cells}")
        if self.tx_power <= 0:
            raise ConfigurationError("tx_power must be positive")
        if self.cell_side <= 0:
            raise ConfigurationError("cell_side must be positive")
        if not self.min_distance > 0:
            raise ConfigurationError("min_distance must be positive")
        if self.antenna_placement not in PLACEMENTS:
            raise ConfigurationError(
                f"antenna_placement must be one of {PLACEMENTS}, got {self.antenna_placement!r}")
        if self.border_reference not in BORDER_REFERENCES:
            raise ConfigurationError(
                f"border_reference must be one of {BORDER_REFERENCES}, got {self.border_reference!r}")
        if not math.isfinite(self.border_snr_db):
            raise ConfigurationError("border_snr_db must be finite")

    @property
    def n_antennas(self) -> int:
        return self.n_cells * self.n_antennas_per_cell

    @property
    def n_users(self) -> int:
        return self.n_cells * self.n_users_per_cell

    @property
    def grid_size(self) -> int:
        return math.isqrt(self.n_cells)

    @property
    def reference_distance(self) -> float:
        """Distance at which the border-cell SNR is defined."""
        half = self.cell_side / 2
        return half * math.sqrt(2) if self.border_reference == "corner" else half

    @classmethod
    def from_mapping(cls, mapping: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigurationError(f"unknown network keys: {sorted(unknown)}")
        return cls(**mapping)


def noise_power_for_snr(config: NetworkConfig, snr_db: float) -> float:
    """N_0 such that a user at the reference distance sees ``snr_db`` per antenna."""
    d_ref = config.reference_distance
    return config.tx_power * d_ref ** (-config.path_loss_exponent) * 10 ** (-snr_db / 10)


def load_network_config(path: str | Path) -> NetworkConfig:
    """Read a flat key-value YAML file into a :class:`NetworkConfig`.

    A top-level ``network`` section is also accepted, so an experiment
    config file can be passed directly.
    """
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a key-value mapping")
    if "network" in data:
        data = data["network"]
    return NetworkConfig.from_mapping(data)


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    config: NetworkConfig
    antenna_positions: np.ndarray  # (N, 2)
    antenna_cell: np.ndarray  # (N,)
    user_positions: np.ndarray  # (K, 2)
    user_cell: np.ndarray  # (K,)
    noise_power: float
    _antennas: tuple = field(init=False, repr=False)
    _users: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n_cells = self.config.n_cells
        object.__setattr__(self, "_antennas", tuple(
            np.flatnonzero(self.antenna_cell == c) for c in range(n_cells)))
        object.__setattr__(self, "_users", tuple(
            np.flatnonzero(self.user_cell == c) for c in range(n_cells)))

    @property
    def n_antennas(self) -> int:
        return len(self.antenna_cell)

    @property
    def n_users(self) -> int:
        return len(self.user_cell)

    @property
    def n_cells(self) -> int:
        return self.config.n_cells

    def antennas_of(self, cell: int) -> np.ndarray:
        """Antenna index set of ``cell`` (ascending)."""
        return self._antennas[cell]

    def users_of(self, cell: int) -> np.ndarray:
        """Indices of the users homed in ``cell`` (ascending)."""
        return self._users[cell]

    @property
    def cell_membership(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        return {c: (self._antennas[c], self._users[c]) for c in range(self.n_cells)}

    def cell_center(self, cell: int) -> np.ndarray:
        return cell_centers(self.config)[cell]

    def distances(self) -> np.ndarray:
        """Clamped antenna-to-user distances, shape (N, K)."""
        diff = self.antenna_positions[:, None, :] - self.user_positions[None, :, :]
        return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), self.config.min_distance)

    def variance_map(self) -> np.ndarray:
        return self.distances() ** (-self.config.path_loss_exponent)

    def with_snr(self, snr_db: float) -> "NetworkLayout":
        """Same geometry, noise recalibrated to a different border SNR."""
        config = replace(self.config, border_snr_db=snr_db)
        return NetworkLayout(config, self.antenna_positions, self.antenna_cell,
                             self.user_positions, self.user_cell,
                             noise_power_for_snr(config, snr_db))


def cell_centers(config: NetworkConfig) -> np.ndarray:
    g = config.grid_size
    idx = np.arange(config.n_cells)
    return np.column_stack([(idx % g + 0.5), (idx // g + 0.5)]) * config.cell_side


def build_layout(config: NetworkConfig) -> NetworkLayout:
    config.validate()
    rng = np.random.default_rng([0, config.rng_seed])
    centers = cell_centers(config)
    half = config.cell_side / 2

    user_cell = np.repeat(np.arange(config.n_cells), config.n_users_per_cell)
    users = centers[user_cell] + rng.uniform(-half, half, size=(config.n_users, 2))

    antenna_cell = np.repeat(np.arange(config.n_cells), config.n_antennas_per_cell)
    antennas = centers[antenna_cell]
    if config.antenna_placement == "uniform-random":
        antennas = antennas + rng.uniform(-half, half, size=(config.n_antennas, 2))

    return NetworkLayout(
        config=config,
        antenna_positions=antennas,
        antenna_cell=antenna_cell,
        user_positions=users,
        user_cell=user_cell,
        noise_power=noise_power_for_snr(config, config.border_snr_db),
    )


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    entries: np.ndarray  # (N, K) complex
    variance_map: np.ndarray  # (N, K) real

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


def draw_channel(layout: NetworkLayout, rng_seed: int) -> ChannelMatrix:
    """Independent CN(0, d^-alpha) entries, reproducible from ``rng_seed``."""
    variance = layout.variance_map()
    rng = np.random.default_rng([1, rng_seed])
    gauss = rng.standard_normal(variance.shape + (2,))
    entries = np.sqrt(variance / 2) * (gauss[..., 0] + 1j * gauss[..., 1])
    return ChannelMatrix(entries=entries, variance_map=variance)
