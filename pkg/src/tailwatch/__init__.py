"""Streaming anomaly detection toolkit.

Nonparametric nominal baselines (bipartite kNN sums, PCA residual norms),
a CUSUM-like detector driven by empirical tail probabilities, closed-form
false-alarm theory, five benchmark detectors, and a Monte Carlo evaluation
harness.
"""

from .benchmarks import (
    Itmcd,
    NnOnline,
    NpCusum,
    Odit,
    QuantTree,
    QuantTreePartition,
    ScoreFeed,
    chi_squared_statistic,
    itmcd_kl_estimate,
    knn_graph,
    nn_online_statistic,
    odit_threshold,
    quanttree_build,
)
from .detector import (
    DetectorConfig,
    DetectorState,
    PValueCusum,
    evidence,
    iter_steps,
    run,
    tail_probability,
    update,
)
from .gem import (
    GemBaseline,
    build_gem_baseline,
    gem_score,
    knn_sum_distance,
    partition_nominal,
)
from .harness import (
    AfpSummary,
    DelaySummary,
    RocPoint,
    TradeoffPoint,
    avg_detection_delay,
    avg_false_alarm_period,
    roc_curve,
    run_stream,
    tradeoff_curve,
)
from .modelfile import ModelFile, load_model, save_model
from .pca import (
    PcaBaseline,
    ProjectedGemBaseline,
    fit_pca_baseline,
    pca_score,
    project,
    residual,
)
from .simulation import (
    GridModel,
    StreamSpec,
    grid_sample,
    grid_source,
    make_grid_model,
    pool_stream,
)
from .theory import (
    afp_approximation,
    afp_lower_bound,
    afp_slope,
    lambert_w0,
    sample_nominal_evidence,
    simulate_afp_asymptotic,
    theta_of_alpha,
    threshold_for_bound,
    wald_approximation,
)

__version__ = "0.1.0"
