"""
hsfuse - Hyperspectral and Multispectral Image Fusion

An unrolled nonnegative-factorization autoencoder trained per scene, with
blind blur/SRF estimation, Wald-protocol simulation and quality metrics.
"""

import os

# one BLAS thread; must be set before numpy is imported
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "1.0.0"

from hsfuse.blind import estimate_degradation  # noqa: E402
from hsfuse.config import Config  # noqa: E402
from hsfuse.degradation import simulate_wald  # noqa: E402
from hsfuse.metrics import evaluate  # noqa: E402
from hsfuse.trainer import train  # noqa: E402

__all__ = ["Config", "estimate_degradation", "evaluate", "simulate_wald", "train", "__version__"]
