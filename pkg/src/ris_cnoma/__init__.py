"""Transmit power minimization for RIS-assisted cooperative NOMA downlinks.

Library layout:

* :mod:`ris_cnoma.channel`       -- scenario geometry and fading channel generation
* :mod:`ris_cnoma.signal_model`  -- SINR/rate expressions and feasibility checks
* :mod:`ris_cnoma.sdp`           -- dense interior-point semidefinite solver
* :mod:`ris_cnoma.phase_program` -- one-hot binary phase programs (exact search)
* :mod:`ris_cnoma.dt_stage`      -- direct-transmission stage subproblems
* :mod:`ris_cnoma.ct_stage`      -- cooperative-transmission stage subproblems
* :mod:`ris_cnoma.orchestrator`  -- outer alternating loops and baselines
* :mod:`ris_cnoma.harness`       -- Monte-Carlo sweeps and CSV output
* :mod:`ris_cnoma.figures`       -- matplotlib rendering of sweep results
* :mod:`ris_cnoma.cli`           -- command line interface
"""

from ris_cnoma.channel import Scenario, ChannelSet, generate_channels, load_scenario
from ris_cnoma.signal_model import PhaseConfig, JointSolution, RateReport

__all__ = [
    "Scenario",
    "ChannelSet",
    "generate_channels",
    "load_scenario",
    "PhaseConfig",
    "JointSolution",
    "RateReport",
]

__version__ = "0.1.0"
