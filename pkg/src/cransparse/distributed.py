"""BS-side precoding: user selection (PSS, DRPS, MSS) and the reduced model.

Each cell ``c`` multiplies its own received vector ``y_c`` by a precoder
``B_c`` built from ``G``, the channel of the selected users ``M`` to the
cell's antennas (``N_a x |M|``). The BBU sees the stacked rows
``B_c H_c`` for all cells in ascending cell order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .network import NetworkLayout

PRECODER_KINDS = ("matched", "zero-forcing")
STRATEGIES = ("pss", "drps", "mss")


class PrecoderError(np.linalg.LinAlgError):
    """Zero-forcing precoder cannot be built for a cell."""

    def __init__(self, cell: int, reason: str):
        super().__init__(f"cell {cell}: {reason}")
        self.cell = cell


@dataclass(frozen=True)
class SelectionSet:
    cell: int
    users: tuple[int, ...]
    strategy: str
    n_p: int | None = None

    def __post_init__(self):
        if not self.users:
            raise ValueError("selection must contain at least one user")
        if len(set(self.users)) != len(self.users):
            raise ValueError("selected users must be distinct")


@dataclass(frozen=True, eq=False)
class CellPrecoder:
    cell: int
    matrix: np.ndarray  # (|M|, N_a)
    kind: str
    source_submatrix: np.ndarray  # G, (N_a, |M|)


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    effective_channel: np.ndarray  # (R, K)
    effective_observation: np.ndarray | None  # (R,)
    branch_noise: np.ndarray  # (R,)
    true_noise_covariance: np.ndarray  # (R, R), block diagonal
    row_cell: np.ndarray  # owning cell per row
    nonzero_count: int

    # detector-facing view, shared with SparsifiedModel
    @property
    def channel(self) -> np.ndarray:
        return self.effective_channel

    @property
    def noise_vector(self) -> np.ndarray:
        return self.branch_noise

    @property
    def support(self) -> np.ndarray:
        # the stacked product is structurally dense
        return np.ones(self.effective_channel.shape, dtype=bool)

    @property
    def n_rows(self) -> int:
        return self.effective_channel.shape[0]


def _entries(H) -> np.ndarray:
    return np.asarray(getattr(H, "entries", H), dtype=complex)


def received_power(H, layout: NetworkLayout, cell: int) -> np.ndarray:
    """p(k): total channel power from each user to the antennas of ``cell``."""
    H = _entries(H)
    return np.sum(np.abs(H[layout.antennas_of(cell)]) ** 2, axis=0)


def _strongest(power: np.ndarray, candidates: np.ndarray, count: int) -> np.ndarray:
    # stable sort on -power: ties go to the lower index
    order = np.argsort(-power[candidates], kind="stable")
    return candidates[order[:count]]


def select_pss(layout: NetworkLayout, cell: int) -> SelectionSet:
    if not 0 <= cell < layout.n_cells:
        raise IndexError(f"cell {cell} out of range")
    return SelectionSet(cell, tuple(int(k) for k in layout.users_of(cell)), "pss")


def select_drps(H, layout: NetworkLayout, cell: int, n_p: int) -> SelectionSet:
    K = layout.n_users
    if not 1 <= n_p <= K:
        raise ValueError(f"n_p must lie in [1, {K}], got {n_p}")
    power = received_power(H, layout, cell)
    chosen = _strongest(power, np.arange(K), n_p)
    return SelectionSet(cell, tuple(int(k) for k in np.sort(chosen)), "drps", n_p)


def select_mss(H, layout: NetworkLayout, cell: int, n_p_external: int) -> SelectionSet:
    if n_p_external < 0:
        raise ValueError("n_p_external must be non-negative")
    own = layout.users_of(cell)
    external = np.setdiff1d(np.arange(layout.n_users), own)
    power = received_power(H, layout, cell)
    chosen = np.concatenate([own, _strongest(power, external, n_p_external)])
    return SelectionSet(cell, tuple(int(k) for k in np.sort(chosen)), "mss", n_p_external)


def build_precoder(H, layout: NetworkLayout, selection: SelectionSet,
                   kind: str = "matched") -> CellPrecoder:
    """Matched (B = G^H) or zero-forcing (B = (G^H G)^-1 G^H) precoder."""
    if kind not in PRECODER_KINDS:
        raise ValueError(f"kind must be one of {PRECODER_KINDS}, got {kind!r}")
    H = _entries(H)
    cell = selection.cell
    G = H[np.ix_(layout.antennas_of(cell), np.asarray(selection.users))]
    if kind == "matched":
        return CellPrecoder(cell, G.conj().T, kind, G)

    n_a, n_sel = G.shape
    if n_sel > n_a:
        raise PrecoderError(cell, f"zero-forcing needs |M| <= N_a, got {n_sel} > {n_a}")
    if np.linalg.matrix_rank(G) < n_sel:
        raise PrecoderError(cell, "selected channel matrix is rank deficient")
    # least squares on G gives the left pseudo-inverse without forming G^H G
    B = np.linalg.lstsq(G, np.eye(n_a), rcond=None)[0]
    return CellPrecoder(cell, B, kind, G)


def build_effective_model(H, observation, noise_power: float, precoders,
                          layout: NetworkLayout) -> EffectiveModel:
    """Stack ``B_c H_c`` and ``B_c y_c`` over cells.

    Branch noise is the diagonal ``N_0 * sum_k |B[n, k]|^2`` handed to the
    detector; the full correlated covariance ``N_0 B_c B_c^H`` is kept for
    rate evaluation.
    """
    H = _entries(H)
    precoders = sorted(precoders, key=lambda p: p.cell)
    if [p.cell for p in precoders] != list(range(layout.n_cells)):
        raise ValueError("expected exactly one precoder per cell")
    y = None if observation is None else np.asarray(observation, dtype=complex)
    if y is not None and y.shape != (H.shape[0],):
        raise ValueError(f"observation length {y.shape} != {H.shape[0]} antennas")

    blocks, obs, noise, row_cell = [], [], [], []
    for p in precoders:
        rows = layout.antennas_of(p.cell)
        B = p.matrix
        if B.shape[1] != len(rows):
            raise ValueError(f"cell {p.cell}: precoder has {B.shape[1]} columns, "
                             f"cell has {len(rows)} antennas")
        blocks.append(B @ H[rows])
        if y is not None:
            obs.append(B @ y[rows])
        noise.append(noise_power * np.sum(np.abs(B) ** 2, axis=1))
        row_cell.append(np.full(B.shape[0], p.cell))

    channel = np.vstack(blocks)
    covariance = noise_power * block_diag(*[p.matrix @ p.matrix.conj().T for p in precoders])
    return EffectiveModel(
        effective_channel=channel,
        effective_observation=None if y is None else np.concatenate(obs),
        branch_noise=np.concatenate(noise),
        true_noise_covariance=covariance,
        row_cell=np.concatenate(row_cell),
        nonzero_count=int(channel.size),
    )


def select(strategy: str, H, layout: NetworkLayout, cell: int, n_p: int | None = None):
    if strategy == "pss":
        return select_pss(layout, cell)
    if strategy == "drps":
        return select_drps(H, layout, cell, n_p)
    if strategy == "mss":
        return select_mss(H, layout, cell, n_p or 0)
    raise ValueError(f"unknown selection strategy {strategy!r}")


def distributed_model(H, observation, layout: NetworkLayout, noise_power: float,
                      strategy: str, n_p: int | None = None,
                      kind: str = "matched") -> EffectiveModel:
    """Select, precode and stack for every cell in one call."""
    precoders = [build_precoder(H, layout, select(strategy, H, layout, c, n_p), kind)
                 for c in range(layout.n_cells)]
    return build_effective_model(H, observation, noise_power, precoders, layout)
