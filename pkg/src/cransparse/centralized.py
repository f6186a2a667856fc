"""BBU-side channel sparsification: CRPS, MCOS, CBS and MIBS.

All methods are pure functions of their inputs; entries of the returned
channel are either copied from H or set to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .network import NetworkLayout

# floor on |log2 ||g||^2| in the normalized mutual information
MI_NORMALIZER_FLOOR = 1e-9


@dataclass(frozen=True, eq=False)
class SparsifiedModel:
    channel: np.ndarray  # (N, K), zeros where pruned
    effective_noise: float
    nonzero_count: int
    method: str
    params: dict = field(default_factory=dict)

    @property
    def support(self) -> np.ndarray:
        return self.channel != 0

    @property
    def noise_vector(self) -> np.ndarray:
        return np.full(self.channel.shape[0], float(self.effective_noise))


def _entries(H) -> np.ndarray:
    return np.asarray(getattr(H, "entries", H), dtype=complex)


def _inflated(H: np.ndarray, H_hat: np.ndarray, noise_power: float) -> float:
    """N_0 plus the per-row average energy of the pruned entries."""
    err = H - H_hat
    return float(noise_power + np.sum(np.abs(err) ** 2) / H.shape[0])


def _model(H_hat, noise, method, **params) -> SparsifiedModel:
    return SparsifiedModel(H_hat, noise, int(np.count_nonzero(H_hat)), method, params)


def dense_model(H, noise_power: float) -> SparsifiedModel:
    """The unsparsified channel, for pure RGMP."""
    return _model(_entries(H).copy(), float(noise_power), "pure")


def crps(H, noise_power: float, p_min: float) -> SparsifiedModel:
    """Zero every entry with |h|^2 < p_min and fold the lost energy into the noise."""
    if p_min < 0:
        raise ValueError("p_min must be non-negative")
    H = _entries(H)
    H_hat = np.where(np.abs(H) ** 2 >= p_min, H, 0)
    return _model(H_hat, _inflated(H, H_hat, noise_power), "crps", p_min=p_min)


def mcos(H, layout: NetworkLayout, t_prod: float,
         noise_power: float | None = None) -> SparsifiedModel:
    """Drop external users that are semi-orthogonal to every in-cell user.

    For cell ``i`` the channel of external user ``k1`` is cut from the
    cell's antennas when ``|h_k1 h_k2^H|^2 < t_prod`` for all users ``k2``
    homed in ``i``, with vectors restricted to the cell's antennas.
    """
    if t_prod < 0:
        raise ValueError("t_prod must be non-negative")
    H = _entries(H)
    if noise_power is None:
        noise_power = layout.noise_power
    H_hat = H.copy()
    for cell in range(layout.n_cells):
        rows = layout.antennas_of(cell)
        own = layout.users_of(cell)
        sub = H[rows]
        coupling = np.abs(sub.T @ sub[:, own].conj()) ** 2  # (K, |own|)
        prune = np.all(coupling < t_prod, axis=1)
        prune[own] = False
        H_hat[np.ix_(rows, np.flatnonzero(prune))] = 0
    return _model(H_hat, _inflated(H, H_hat, noise_power), "mcos", t_prod=t_prod)


def correlation_score(g1: np.ndarray, g2: np.ndarray) -> float:
    return float(np.abs(np.vdot(g2, g1)) ** 2)


def mutual_information(g1: np.ndarray, g2: np.ndarray) -> float:
    a = float(np.vdot(g1, g1).real)
    b = float(np.vdot(g2, g2).real)
    cross = np.abs(np.vdot(g2, g1)) ** 2
    if a * b == 0:
        return 0.0
    return float(np.log2(a * b / (a * b + cross)))


def normalized_mutual_information(g1: np.ndarray, g2: np.ndarray) -> float:
    a = float(np.vdot(g1, g1).real)
    b = float(np.vdot(g2, g2).real)
    if a == 0 or b == 0:
        return 0.0
    norm = min(abs(np.log2(a)), abs(np.log2(b)))
    return mutual_information(g1, g2) / max(norm, MI_NORMALIZER_FLOOR)


def mi_score(g1: np.ndarray, g2: np.ndarray) -> float:
    # the printed MI is <= 0; magnitude is the coupling strength
    return abs(normalized_mutual_information(g1, g2))


def _prune_rows(H, layout: NetworkLayout, n_keep: int, score) -> np.ndarray:
    n_a = layout.config.n_antennas_per_cell
    if not 1 <= n_keep <= n_a:
        raise ValueError(f"n_keep must lie in [1, {n_a}], got {n_keep}")
    H_hat = H.copy()
    row_power = np.sum(np.abs(H) ** 2, axis=1)
    for cell in range(layout.n_cells):
        alive = list(layout.antennas_of(cell))
        for _ in range(n_a - n_keep):
            best, best_pair = -np.inf, None
            # pairs come in ascending (n1, n2) order; strict '>' keeps the first on ties
            for n1, n2 in combinations(alive, 2):
                s = score(H[n1], H[n2])
                if s > best:
                    best, best_pair = s, (n1, n2)
            n1, n2 = best_pair
            drop = n1 if row_power[n1] < row_power[n2] else n2
            H_hat[drop] = 0
            alive.remove(drop)
    return H_hat


def cbs(H, layout: NetworkLayout, n_keep: int,
        noise_power: float | None = None) -> SparsifiedModel:
    """Correlation-based antenna selection, keeping ``n_keep`` antennas per cell."""
    H = _entries(H)
    H_hat = _prune_rows(H, layout, n_keep, correlation_score)
    if noise_power is None:
        noise_power = layout.noise_power
    return _model(H_hat, float(noise_power), "cbs", n_keep=n_keep)


def mibs(H, layout: NetworkLayout, n_keep: int,
        noise_power: float | None = None) -> SparsifiedModel:
    """Mutual-information-based antenna selection; same loop as :func:`cbs`."""
    H = _entries(H)
    H_hat = _prune_rows(H, layout, n_keep, mi_score)
    if noise_power is None:
        noise_power = layout.noise_power
    return _model(H_hat, float(noise_power), "mibs", n_keep=n_keep)
