"""Exact linear MMSE receiver and achievable-sum-rate evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass(frozen=True, eq=False)
class LinearReceiver:
    filter: np.ndarray  # (K, N)
    model_channel: np.ndarray  # (N, K)
    model_noise: float | np.ndarray


@dataclass(frozen=True, eq=False)
class RatePerformance:
    per_user_sinr: np.ndarray
    sum_rate: float


def _noise_diagonal(noise, n_rows: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=float)
    if noise.ndim == 0:
        noise = np.full(n_rows, float(noise))
    if noise.shape != (n_rows,):
        raise ValueError(f"noise must be scalar or length {n_rows}, got shape {noise.shape}")
    if not np.all(noise > 0):
        raise ValueError("noise power must be strictly positive")
    return noise


def mmse_filter(channel, tx_power: float, noise) -> LinearReceiver:
    """W = sqrt(P) H^H (P H H^H + diag(noise))^-1.

    ``noise`` is either a scalar N_0 or a per-row vector. Solved by a
    Cholesky factorization of the regularized Gram matrix.
    """
    H = np.asarray(channel, dtype=complex)
    if H.ndim != 2 or H.size == 0:
        raise ValueError("channel must be a non-empty 2-D matrix")
    diag = _noise_diagonal(noise, H.shape[0])
    gram = tx_power * (H @ H.conj().T)
    gram[np.diag_indices_from(gram)] += diag
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:  # pragma: no cover - noise > 0 keeps gram PD
        raise RuntimeError("regularized Gram matrix is not positive definite") from exc
    # gram is Hermitian, so W^H = gram^-1 sqrt(P) H
    W = linalg.cho_solve(factor, np.sqrt(tx_power) * H, check_finite=False).conj().T
    return LinearReceiver(filter=W, model_channel=H, model_noise=noise)


def estimate(receiver: LinearReceiver, observation) -> np.ndarray:
    y = np.asarray(observation)
    if y.shape != (receiver.filter.shape[1],):
        raise ValueError(
            f"observation length {y.shape} does not match receiver input {receiver.filter.shape[1]}")
    return receiver.filter @ y


def evaluate_asr(receiver: LinearReceiver, true_channel, tx_power: float,
                 true_noise_covariance) -> RatePerformance:
    """Sum of log2(1 + SINR_k) of the receiver's linear filter against the true model.

    ``true_noise_covariance`` may be a scalar (white noise), a vector
    (diagonal covariance) or a full matrix. The filter may be mismatched,
    e.g. built from a sparsified channel.
    """
    W = receiver.filter
    H = np.asarray(getattr(true_channel, "entries", true_channel))
    if W.shape[1] != H.shape[0]:
        raise ValueError(f"filter input size {W.shape[1]} != channel rows {H.shape[0]}")
    if W.shape[0] != H.shape[1]:
        raise ValueError(f"filter output size {W.shape[0]} != channel columns {H.shape[1]}")

    gains = W @ H
    power = np.abs(gains) ** 2
    signal = tx_power * np.diag(power).copy()
    interference = tx_power * power.sum(axis=1) - signal

    C = np.asarray(true_noise_covariance)
    if C.ndim == 0:
        noise = float(C) * np.sum(np.abs(W) ** 2, axis=1)
    elif C.ndim == 1:
        noise = (np.abs(W) ** 2) @ C.real
    else:
        noise = np.einsum("kn,nm,km->k", W, C, W.conj()).real

    denom = interference + noise
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(denom > 0, signal / denom, 0.0)
    sinr = np.maximum(sinr, 0.0)
    return RatePerformance(per_user_sinr=sinr, sum_rate=float(np.sum(np.log2(1 + sinr))))
