"""Outage analysis and intermittent federated learning for a
cellular-connected UAV network.

The package pairs two independent engines for every quantity of interest:

- :mod:`uavfl.geometry` samples the network (Poisson access points,
  line-of-sight channels, nearest-in-bias association) and estimates outage
  by Monte Carlo;
- :mod:`uavfl.analysis` evaluates the same quantities in closed form by
  adaptive quadrature (association-power distribution, interference Laplace
  transform, outage probability).

On top of those, :mod:`uavfl.nn` implements a small multinomial-logistic MLP
trained by plain SGD, :mod:`uavfl.fl_core` runs federated averaging in which
each round's uploads survive independently with probability ``1 - p_out``,
and :mod:`uavfl.data_io` loads or synthesizes the digit corpus and splits it
across clients. :mod:`uavfl.cli` drives the reproduction experiments and
writes deterministic CSV reports.
"""

__version__ = "0.1.0"

from .analysis import (
    DEFAULT_QUAD,
    OutageResult,
    QuadratureError,
    QuadratureSpec,
    assoc_power_cdf,
    assoc_power_pdf,
    fading_laplace,
    interference_kernel,
    interference_laplace,
    outage_probability,
    upsilon,
)
from .data_io import (
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    LabeledDataset,
    Partition,
    load_idx,
    partition,
    split_train_test,
    synthesize_digits,
)
from .fl_core import (
    FROM_GEOMETRY,
    FlConfig,
    RoundLog,
    TrainingTrace,
    aggregate,
    resolve_p_out,
    run_training,
    sample_outage_mask,
)
from .geometry import (
    Deployment,
    McEstimate,
    NetworkConfig,
    SirSample,
    associate,
    estimate_interference_laplace_mc,
    estimate_outage_mc,
    los_probability,
    sample_association_powers,
    sample_deployment,
    sample_hppp,
    sample_uplink_sir,
)
from .nn import (
    ModelVector,
    NetSpec,
    evaluate,
    forward,
    forward_batch,
    init_model,
    loss,
    sgd_pass,
    sgd_step,
)

__all__ = [
    "__version__",
    # geometry
    "NetworkConfig", "Deployment", "SirSample", "McEstimate",
    "sample_hppp", "los_probability", "sample_deployment", "associate",
    "sample_uplink_sir", "estimate_outage_mc", "sample_association_powers",
    "estimate_interference_laplace_mc",
    # analysis
    "QuadratureSpec", "DEFAULT_QUAD", "QuadratureError", "OutageResult",
    "upsilon", "assoc_power_cdf", "assoc_power_pdf", "fading_laplace",
    "interference_kernel", "interference_laplace", "outage_probability",
    # nn
    "NetSpec", "ModelVector", "init_model", "forward", "forward_batch",
    "loss", "sgd_step", "sgd_pass", "evaluate",
    # fl_core
    "FROM_GEOMETRY", "FlConfig", "RoundLog", "TrainingTrace",
    "sample_outage_mask", "aggregate", "run_training", "resolve_p_out",
    # data_io
    "LabeledDataset", "Partition", "IdxMagicError", "IdxTruncatedError",
    "IdxCountMismatchError", "load_idx", "synthesize_digits",
    "split_train_test", "partition",
]
