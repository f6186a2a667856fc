"""Randomized Gaussian message passing (RGMP) detector.

Belief propagation on the factor graph of ``y = sqrt(P) H x + w`` with a
CN(0, 1) prior on every ``x_k``: one factor node per observation row, one
variable node per user, one edge per nonzero channel entry. Variable nodes
are swept in a freshly shuffled order on every iteration; each variable
update recomputes its incoming factor messages from per-factor running
sums, so a sweep costs O(s).

At a fixed point the posterior means equal the linear MMSE estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverDivergenceError(ArithmeticError):
    """A message became non-finite."""

    def __init__(self, iteration: int, detail: str = "non-finite message"):
        super().__init__(f"{detail} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class SolverSettings:
    stop_threshold: float = 0.01
    max_iterations: int = 1000
    damping: float = 0.0
    schedule_seed: int = 0

    def __post_init__(self):
        if not self.stop_threshold > 0:
            raise ValueError("stop_threshold must be positive")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class FactorGraph:
    n_antennas: int
    n_users: int
    edge_antenna: np.ndarray  # edges sorted by (user, antenna)
    edge_user: np.ndarray
    coefficient: np.ndarray
    noise: np.ndarray  # per-antenna, length n_antennas
    tx_power: float
    user_ptr: np.ndarray  # CSR offsets into the edge arrays, length K + 1

    @property
    def n_edges(self) -> int:
        return len(self.edge_user)


@dataclass(frozen=True, eq=False)
class MessageState:
    """Variable-to-factor messages, one (mean, variance) per edge."""
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def prior(cls, graph: FactorGraph) -> "MessageState":
        return cls(np.zeros(graph.n_edges, dtype=complex), np.ones(graph.n_edges))


@dataclass(frozen=True, eq=False)
class DetectionReport:
    posterior_means: np.ndarray
    posterior_variances: np.ndarray
    iterations: int
    op_count: int
    converged: bool
    n_edges: int
    state: MessageState | None = None

    def __post_init__(self):
        expected = count_ops(len(self.posterior_means), self.n_edges, self.iterations)
        if self.op_count != expected:
            raise AssertionError(f"op_count {self.op_count} != 2*K*s*I = {expected}")


def count_ops(n_users: int, n_edges: int, iterations: int) -> int:
    """Decoding operations: two sums over K users per edge, per iteration."""
    if min(n_users, n_edges, iterations) < 0:
        raise ValueError("counts must be non-negative")
    return 2 * int(n_users) * int(n_edges) * int(iterations)


def build_graph(model, tx_power: float) -> FactorGraph:
    """Factor graph of a sparsified or effective model.

    ``model`` needs ``channel`` (rows x K), ``noise_vector`` (per row) and
    ``support`` (boolean mask of entries that become edges). A plain
    ``(channel, noise)`` tuple is also accepted; its support is the
    nonzero pattern of the channel.
    """
    if isinstance(model, tuple):
        channel, noise = model
        channel = np.asarray(channel, dtype=complex)
        support = channel != 0
        noise = np.broadcast_to(np.asarray(noise, dtype=float), channel.shape[:1]).copy()
    else:
        channel = np.asarray(model.channel, dtype=complex)
        support = np.asarray(model.support, dtype=bool)
        noise = np.asarray(model.noise_vector, dtype=float)
    n_rows, n_users = channel.shape
    if noise.shape != (n_rows,):
        raise ValueError("noise vector length must match channel rows")
    if not np.all(noise > 0):
        raise ValueError("per-antenna noise must be strictly positive")

    # column-major nonzero scan gives edges grouped by user, antennas ascending
    user, antenna = np.nonzero(support.T)
    ptr = np.zeros(n_users + 1, dtype=np.int64)
    np.cumsum(np.bincount(user, minlength=n_users), out=ptr[1:])
    return FactorGraph(
        n_antennas=n_rows,
        n_users=n_users,
        edge_antenna=antenna,
        edge_user=user,
        coefficient=channel[antenna, user],
        noise=noise,
        tx_power=float(tx_power),
        user_ptr=ptr,
    )


def _factor_sums(graph: FactorGraph, means: np.ndarray, variances: np.ndarray):
    sqrt_p = np.sqrt(graph.tx_power)
    h = graph.coefficient
    mean_sum = np.zeros(graph.n_antennas, dtype=complex)
    np.add.at(mean_sum, graph.edge_antenna, sqrt_p * h * means)
    var_sum = graph.noise.copy()
    np.add.at(var_sum, graph.edge_antenna, graph.tx_power * np.abs(h) ** 2 * variances)
    return mean_sum, var_sum


def detect(graph: FactorGraph, observation, settings: SolverSettings = SolverSettings(),
           initial_state: MessageState | None = None) -> DetectionReport:
    """Run RGMP until the posterior means settle.

    Stops after iteration ``t`` when every user's mean moved by at most
    ``stop_threshold`` relative to iteration ``t - 1`` (absolute floor
    1e-12). Iteration 0 is the posterior implied by the initial messages.
    """
    y = np.asarray(observation, dtype=complex)
    if y.shape != (graph.n_antennas,):
        raise ValueError(f"observation length {y.shape} != {graph.n_antennas} factor nodes")

    K = graph.n_users
    P = graph.tx_power
    sqrt_p = np.sqrt(P)
    state = initial_state or MessageState.prior(graph)
    m = state.means.astype(complex, copy=True)
    v = state.variances.astype(float, copy=True)
    if m.shape != (graph.n_edges,) or v.shape != (graph.n_edges,):
        raise ValueError("initial state does not match the graph's edge count")

    h = graph.coefficient
    h_conj = h.conj()
    gain = P * np.abs(h) ** 2
    ptr = graph.user_ptr
    edge_antenna = graph.edge_antenna
    damping = settings.damping

    post_mean = np.zeros(K, dtype=complex)
    post_var = np.ones(K)

    def incoming(k, mean_sum, var_sum):
        sl = slice(ptr[k], ptr[k + 1])
        rows = edge_antenna[sl]
        ex_mean = mean_sum[rows] - sqrt_p * h[sl] * m[sl]
        ex_var = var_sum[rows] - gain[sl] * v[sl]
        alpha = gain[sl] / ex_var
        beta = sqrt_p * h_conj[sl] * (y[rows] - ex_mean) / ex_var
        return sl, rows, alpha, beta

    rng = np.random.default_rng(settings.schedule_seed)
    converged = False
    iteration = 0
    with np.errstate(over="ignore", invalid="ignore"):
        mean_sum, var_sum = _factor_sums(graph, m, v)
        for k in range(K):
            if ptr[k] == ptr[k + 1]:
                continue
            _, _, alpha, beta = incoming(k, mean_sum, var_sum)
            precision = 1.0 + alpha.sum()
            post_mean[k] = beta.sum() / precision
            post_var[k] = 1.0 / precision

        while iteration < settings.max_iterations:
            iteration += 1
            previous = post_mean.copy()
            # fresh sums each sweep keep incremental round-off from accumulating
            mean_sum, var_sum = _factor_sums(graph, m, v)
            for k in rng.permutation(K):
                if ptr[k] == ptr[k + 1]:
                    continue
                sl, rows, alpha, beta = incoming(k, mean_sum, var_sum)
                precision = 1.0 + alpha.sum()
                eta = beta.sum()
                post_mean[k] = eta / precision
                post_var[k] = 1.0 / precision

                new_v = 1.0 / (precision - alpha)
                new_m = (eta - beta) * new_v
                if damping:
                    new_m = (1 - damping) * new_m + damping * m[sl]
                    new_v = (1 - damping) * new_v + damping * v[sl]
                mean_sum[rows] += sqrt_p * h[sl] * (new_m - m[sl])
                var_sum[rows] += gain[sl] * (new_v - v[sl])
                m[sl] = new_m
                v[sl] = new_v

            if not (np.all(np.isfinite(post_mean)) and np.all(np.isfinite(m))):
                raise SolverDivergenceError(iteration)
            change = np.abs(post_mean - previous) / np.maximum(np.abs(previous), 1e-12)
            if K == 0 or change.max() <= settings.stop_threshold:
                converged = True
                break

    return DetectionReport(
        posterior_means=post_mean,
        posterior_variances=post_var,
        iterations=iteration,
        op_count=count_ops(K, graph.n_edges, iteration),
        converged=converged,
        n_edges=graph.n_edges,
        state=MessageState(m, v),
    )
