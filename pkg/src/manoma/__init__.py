"""Sum-rate maximization for downlink NOMA with a movable-antenna array.

The package is organised bottom-up:

* :mod:`manoma.channel`     field-response multipath channels and sampling
* :mod:`manoma.noma`        SINRs, rates, SIC checks and slack variables
* :mod:`manoma.surrogate`   tangent and curvature bounds used by SCA
* :mod:`manoma.conic`       canonical conic problems and the solver backend
* :mod:`manoma.subproblems` beamforming SDP and single-antenna position step
* :mod:`manoma.optimizer`   the alternating optimization loop
* :mod:`manoma.baselines`   fixed-array NOMA and TDMA references
* :mod:`manoma.experiments` seeded Monte-Carlo experiments (CLI in :mod:`manoma.cli`)
"""

from .config import ScenarioConfig, load_config
from .channel import ChannelGeometry, channel_matrix, channel_vector, sample_geometry
from .noma import rates, sic_feasible, slack_from_primal
from .optimizer import SolveRecord, initialize, run, run_best_order
from .baselines import fpa_noma, oma_fpa

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig",
    "load_config",
    "ChannelGeometry",
    "channel_matrix",
    "channel_vector",
    "sample_geometry",
    "rates",
    "sic_feasible",
    "slack_from_primal",
    "SolveRecord",
    "initialize",
    "run",
    "run_best_order",
    "fpa_noma",
    "oma_fpa",
]
