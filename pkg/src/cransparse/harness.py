"""Monte-Carlo experiment harness: generate, sparsify, detect, evaluate.

Every method in a trial sees the same layout, channel and observation
noise draw, so method comparisons are paired. Records are emitted in
(method ordinal, SNR point, trial) order regardless of how trials were
scheduled, which keeps output files byte-reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import centralized, distributed
from .mmse import evaluate_asr, mmse_filter
from .network import (ConfigurationError, NetworkConfig, build_layout, draw_channel,
                      noise_power_for_snr)
from .rgmp import SolverDivergenceError, SolverSettings, build_graph, count_ops, detect

log = logging.getLogger(__name__)

METHODS = ("pure", "crps", "mcos", "cbs", "mibs", "pss", "drps", "mss")
DISTRIBUTED = ("pss", "drps", "mss")
# methods whose sparsification level is fixed by the configuration alone
LEVEL_DETERMINISTIC = ("pure", "cbs", "mibs", "pss", "drps", "mss")

RECORD_COLUMNS = ["method", "params", "snr_db", "trial", "asr", "level", "iters", "ops",
                  "converged", "status"]
SUMMARY_COLUMNS = ["method", "params", "snr_db", "mean_asr", "std_asr", "mean_iters",
                   "mean_ops", "level", "trials"]

_PARAM_TYPES = {"p_min": float, "t_prod": float, "n_keep": int, "l_r": int, "n_p": int,
                "precoder": str}
_REQUIRED = {"crps": ("p_min",), "mcos": ("t_prod",), "drps": ("n_p",)}
_PRECODER_ALIASES = {"matched": "matched", "mf": "matched", "zero-forcing": "zero-forcing",
                     "zf": "zero-forcing"}


class IntegrityError(RuntimeError):
    """Record stream violates a harness invariant."""


@dataclass(frozen=True)
class MethodSpec:
    id: str
    params: tuple = ()  # sorted (key, value) pairs

    @classmethod
    def create(cls, method_id: str, **params) -> "MethodSpec":
        method_id = method_id.strip().lower()
        if method_id not in METHODS:
            raise ConfigurationError(f"unknown method {method_id!r}; expected one of {METHODS}")
        clean = {}
        for key, value in params.items():
            if key not in _PARAM_TYPES:
                raise ConfigurationError(f"{method_id}: unknown parameter {key!r}")
            clean[key] = _PARAM_TYPES[key](value)
        for key in _REQUIRED.get(method_id, ()):
            if key not in clean:
                raise ConfigurationError(f"{method_id} requires parameter {key!r}")
        if method_id in ("cbs", "mibs") and ("n_keep" in clean) == ("l_r" in clean):
            raise ConfigurationError(f"{method_id} requires exactly one of n_keep, l_r")
        if method_id in DISTRIBUTED:
            kind = clean.get("precoder", "matched")
            if kind not in _PRECODER_ALIASES:
                raise ConfigurationError(f"unknown precoder {kind!r}")
            clean["precoder"] = _PRECODER_ALIASES[kind]
        elif "precoder" in clean:
            raise ConfigurationError(f"{method_id} takes no precoder")
        return cls(method_id, tuple(sorted(clean.items())))

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """Parse ``id[:key=value...]``, e.g. ``drps:n_p=4:precoder=zf``."""
        head, *rest = text.strip().split(":")
        params = {}
        for item in rest:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigurationError(f"malformed method parameter {item!r} in {text!r}")
            params[key.strip()] = value.strip()
        return cls.create(head, **params)

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    @property
    def label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.params) or "-"


def parse_methods(text: str) -> list[MethodSpec]:
    return [MethodSpec.parse(item) for item in text.split(",") if item.strip()]


@dataclass(frozen=True)
class ExperimentSpec:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    methods: tuple = (MethodSpec("pure"),)
    snr_points_db: tuple = (0.0,)
    trials: int = 1
    base_seed: int = 0
    output_path: str = "results.csv"
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        if not all(math.isfinite(s) for s in self.snr_points_db):
            raise ConfigurationError("SNR points must be finite")
        n_a = self.network.n_antennas_per_cell
        for m in self.methods:
            p = m.param_dict
            if m.id in ("cbs", "mibs"):
                n_keep = p.get("n_keep", n_a - p.get("l_r", 0))
                if not 1 <= n_keep <= n_a:
                    raise ConfigurationError(f"{m.id}: kept antennas {n_keep} outside [1, {n_a}]")
            if m.id == "drps" and not 1 <= p["n_p"] <= self.network.n_users:
                raise ConfigurationError(f"drps: n_p outside [1, {self.network.n_users}]")
            if m.id == "mss" and p.get("n_p", 0) < 0:
                raise ConfigurationError("mss: n_p must be non-negative")
            if p.get("p_min", 0) < 0 or p.get("t_prod", 0) < 0:
                raise ConfigurationError(f"{m.id}: thresholds must be non-negative")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment keys: {sorted(unknown)}")
        if "network" in data:
            data["network"] = NetworkConfig.from_mapping(data["network"] or {})
        if "methods" in data:
            data["methods"] = tuple(_method_from_config(m) for m in data["methods"])
        if "snr_points_db" in data:
            data["snr_points_db"] = tuple(float(s) for s in data["snr_points_db"])
        if "solver" in data:
            data["solver"] = SolverSettings(**(data["solver"] or {}))
        return cls(**data)


def _method_from_config(entry) -> MethodSpec:
    if isinstance(entry, str):
        return MethodSpec.parse(entry)
    entry = dict(entry)
    return MethodSpec.create(entry.pop("id"), **entry)


def load_experiment_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a key-value mapping")
    return ExperimentSpec.from_mapping(data)


@dataclass(frozen=True)
class MetricsRecord:
    method: str
    params: str
    snr_db: float
    trial: int
    asr: float
    level: int
    iterations: int
    op_count: int
    converged: bool
    status: str = "ok"
    ordinal: int = 0
    n_users: int = 0
    channel_hash: str = ""

    def __post_init__(self):
        if self.n_users and self.op_count != count_ops(self.n_users, self.level, self.iterations):
            raise IntegrityError(f"{self.method}: op_count != 2*K*s*I")
        if not math.isnan(self.asr) and self.asr < 0:
            raise IntegrityError(f"{self.method}: negative ASR")

    def row(self) -> list[str]:
        return [self.method, self.params, repr(float(self.snr_db)), str(self.trial),
                repr(float(self.asr)), str(self.level), str(self.iterations),
                str(self.op_count), str(int(self.converged)), self.status]


def trial_seed(base_seed: int, trial: int) -> int:
    return base_seed ^ trial


def channel_digest(H: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(H).tobytes()).hexdigest()[:16]


def _n_keep(method: MethodSpec, n_a: int) -> int:
    p = method.param_dict
    return p["n_keep"] if "n_keep" in p else n_a - p["l_r"]


def apply_method(method: MethodSpec, H: np.ndarray, y: np.ndarray, layout,
                 noise_power: float):
    """Sparsify for one method.

    Returns ``(model, observation, true_channel, true_noise_covariance)``:
    the detector-facing model and its observation, plus the true model the
    closed-form receiver is evaluated against.
    """
    p = method.param_dict
    n_a = layout.config.n_antennas_per_cell
    if method.id in DISTRIBUTED:
        model = distributed.distributed_model(H, y, layout, noise_power, method.id,
                                              p.get("n_p"), p["precoder"])
        return (model, model.effective_observation, model.effective_channel,
                model.true_noise_covariance)
    if method.id == "pure":
        model = centralized.dense_model(H, noise_power)
    elif method.id == "crps":
        model = centralized.crps(H, noise_power, p["p_min"])
    elif method.id == "mcos":
        model = centralized.mcos(H, layout, p["t_prod"], noise_power)
    elif method.id == "cbs":
        model = centralized.cbs(H, layout, _n_keep(method, n_a), noise_power)
    elif method.id == "mibs":
        model = centralized.mibs(H, layout, _n_keep(method, n_a), noise_power)
    else:  # pragma: no cover - MethodSpec validates ids
        raise ConfigurationError(method.id)
    return model, y, H, noise_power


def run_trial(spec: ExperimentSpec, trial: int) -> list[MetricsRecord]:
    seed = trial_seed(spec.base_seed, trial)
    config = replace(spec.network, rng_seed=seed)
    layout = build_layout(config)
    H = draw_channel(layout, seed).entries
    digest = channel_digest(H)
    log.debug("trial %d seed %d channel %s", trial, seed, digest)

    K, N = layout.n_users, layout.n_antennas
    P = config.tx_power
    rng = np.random.default_rng([2, seed])
    x = (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / np.sqrt(2)
    z = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
    settings = replace(spec.solver, schedule_seed=seed)

    records = []
    for snr in spec.snr_points_db:
        n0 = noise_power_for_snr(config, snr)
        snr_layout = layout.with_snr(snr)
        y = np.sqrt(P) * H @ x + np.sqrt(n0) * z
        for ordinal, method in enumerate(spec.methods):
            asr, level, iters, converged, status = math.nan, 0, 0, False, "ok"
            try:
                model, obs, true_channel, true_cov = apply_method(method, H, y, snr_layout, n0)
                level = model.nonzero_count
                receiver = mmse_filter(model.channel, P, model.noise_vector)
                asr = evaluate_asr(receiver, true_channel, P, true_cov).sum_rate
                report = detect(build_graph(model, P), obs, settings)
                iters, converged = report.iterations, report.converged
            except SolverDivergenceError as exc:
                iters, status = exc.iteration, "error:solver-diverged"
            except (ValueError, np.linalg.LinAlgError) as exc:
                status = f"error:{type(exc).__name__}"
                log.warning("trial %d %s: %s", trial, method.id, exc)
            if channel_digest(H) != digest:
                raise IntegrityError(f"{method.id} modified the channel in trial {trial}")
            records.append(MetricsRecord(
                method=method.id, params=method.label, snr_db=float(snr), trial=trial,
                asr=float(asr), level=level, iterations=iters,
                op_count=count_ops(K, level, iters), converged=converged, status=status,
                ordinal=ordinal, n_users=K, channel_hash=digest))
    return records


def _sort_key(spec: ExperimentSpec):
    snr_index = {s: i for i, s in enumerate(spec.snr_points_db)}
    return lambda r: (r.ordinal, snr_index[r.snr_db], r.trial)


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[MetricsRecord]:
    """All records for ``spec``, ordered by method, SNR point and trial."""
    trials = range(spec.trials)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_trial, [spec] * spec.trials, trials))
    else:
        chunks = [run_trial(spec, t) for t in trials]
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=_sort_key(spec))


def write_records(records, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow(r.row())


def read_records(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RECORD_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise IntegrityError(f"{path}: missing columns {sorted(missing)}")
        return [MetricsRecord(
            method=row["method"], params=row["params"], snr_db=float(row["snr_db"]),
            trial=int(row["trial"]), asr=float(row["asr"]), level=int(row["level"]),
            iterations=int(row["iters"]), op_count=int(row["ops"]),
            converged=bool(int(row["converged"])), status=row["status"])
            for row in reader]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    params: str
    snr_db: float
    mean_asr: float
    std_asr: float
    mean_iters: float
    mean_ops: float
    level: float
    trials: int

    def row(self) -> list[str]:
        level = str(int(self.level)) if float(self.level).is_integer() else repr(self.level)
        return [self.method, self.params, repr(self.snr_db), repr(self.mean_asr),
                repr(self.std_asr), repr(self.mean_iters), repr(self.mean_ops), level,
                str(self.trials)]


def summarize(records) -> list[SummaryRow]:
    """Per method and SNR: mean/std ASR, mean iterations and operations, level.

    Only records with status ``ok`` contribute. Raises
    :class:`IntegrityError` on an empty stream or when a level-deterministic
    method reports different levels across trials.
    """
    records = list(records)
    if not records:
        raise IntegrityError("no records to summarize")
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.params, r.snr_db), []).append(r)

    rows = []
    for (method, params, snr), group in groups.items():
        ok = [r for r in group if r.status == "ok"]
        levels = {r.level for r in ok}
        if method in LEVEL_DETERMINISTIC and len(levels) > 1:
            raise IntegrityError(
                f"{method} ({params}) at {snr} dB: inconsistent levels {sorted(levels)}")
        if ok:
            asr = np.array([r.asr for r in ok])
            std = float(np.std(asr, ddof=1)) if len(ok) > 1 else math.nan
            rows.append(SummaryRow(
                method, params, snr, float(asr.mean()), std,
                float(np.mean([r.iterations for r in ok])),
                float(np.mean([r.op_count for r in ok])),
                float(np.mean([r.level for r in ok])), len(ok)))
        else:
            rows.append(SummaryRow(method, params, snr, math.nan, math.nan, math.nan,
                                   math.nan, math.nan, 0))
    return rows


def write_summary(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for r in rows:
            writer.writerow(r.row())


def summary_path(output_path: str | Path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.stem + "_summary.csv")
