"""Large-alphabet PPM time-energy QKD: simulator, postprocessing, and rate engine."""

from .params import (ChannelParams, DetectorParams, ProtocolParams, load_scenario,
                     scenario_meta, scenario_names, validate)
from .codec import Basis, FrameRecord, Intensity, SyncSchedule, bits_per_symbol
from .sim import (SessionTags, TimeTag, basis_mismatch_spread, saturated_rate,
                  simulate_session, transmittance)

__version__ = "0.1.0"

__all__ = [
    "ProtocolParams", "ChannelParams", "DetectorParams",
    "load_scenario", "scenario_meta", "scenario_names", "validate",
    "Basis", "Intensity", "FrameRecord", "SyncSchedule", "bits_per_symbol",
    "TimeTag", "SessionTags", "transmittance", "basis_mismatch_spread",
    "saturated_rate", "simulate_session",
    "__version__",
]
