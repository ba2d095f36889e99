"""Link-level simulation of wideband MIMO with two-stage digital combining.

The library layers are importable on their own:

``channel``
    geometric wideband channel model (ULA arrays, street-canyon path
    loss, single-bounce clusters on delay taps).
``estimation``
    frequency-domain and time-domain (tone comb) pilot estimators,
    pilot books, subband sounding of combined channels.
``beamforming``
    SVD and MMSE precoders, the two combining stages, water-filling.
``spectral_efficiency``
    perfect-CSI rates, hardening (use-and-forget) bounds, pilot
    overhead accounting.
``harness``
    scenario configs, the beam-coherence trajectory engine, runners,
    deterministic results and the CLI.
"""

from . import beamforming, channel, estimation, numerics, spectral_efficiency
from .numerics import PowerAllocation, SingularMatrixError, SvdFactorization

__version__ = "0.1.0"

__all__ = [
    "beamforming",
    "channel",
    "estimation",
    "numerics",
    "spectral_efficiency",
    "PowerAllocation",
    "SingularMatrixError",
    "SvdFactorization",
    "__version__",
]
