"""Link-level simulator and detector library for HARQ-CC assisted SCMA.

Subpackage map:

* :mod:`harq_scma.codebook` -- SCMA codebooks, bit mapping, sparsity structure
* :mod:`harq_scma.channel`  -- Rayleigh fading, AWGN, codeword superposition
* :mod:`harq_scma.detector` -- factor graphs and (max-log) message passing
* :mod:`harq_scma.fec`      -- CRC-16, convolutional codec, puncturing
* :mod:`harq_scma.harq`     -- sync/async HARQ state machines, four schemes
* :mod:`harq_scma.simkit`   -- deterministic Monte Carlo campaigns, CSV results
* :mod:`harq_scma.cli`      -- `harq-scma` command-line front end
"""

from harq_scma.codebook import ScmaCodebook, default_codebook, load_codebook
from harq_scma.simkit import CampaignConfig, MetricsRecord, run_campaign

__all__ = [
    "ScmaCodebook",
    "default_codebook",
    "load_codebook",
    "CampaignConfig",
    "MetricsRecord",
    "run_campaign",
]

__version__ = "0.1.0"
