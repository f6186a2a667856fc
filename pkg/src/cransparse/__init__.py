"""Low-complexity MMSE uplink detection for C-RAN.

Gaussian message passing over a sparsified channel matrix, with
centralized (BBU-side) and distributed (BS-side precoding) sparsifiers
and a Monte-Carlo harness for rate/complexity trade-off studies.
"""

from .network import (
    ChannelMatrix,
    ConfigurationError,
    NetworkConfig,
    NetworkLayout,
    build_layout,
    draw_channel,
    load_network_config,
    noise_power_for_snr,
)
from .mmse import LinearReceiver, RatePerformance, estimate, evaluate_asr, mmse_filter
from .rgmp import (
    DetectionReport,
    FactorGraph,
    SolverDivergenceError,
    SolverSettings,
    build_graph,
    count_ops,
    detect,
)
from .centralized import SparsifiedModel, cbs, crps, dense_model, mcos, mibs
from .distributed import (
    CellPrecoder,
    EffectiveModel,
    PrecoderError,
    SelectionSet,
    build_effective_model,
    build_precoder,
    select_drps,
    select_mss,
    select_pss,
)

__version__ = "0.1.0"
