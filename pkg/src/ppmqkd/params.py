"""Protocol, channel, and detector parameter sets.

All times are picoseconds unless a field name says otherwise
(``dead_time_ns``, rates in counts/s).  Parameter objects are frozen
dataclasses: validate once, then share freely across workers.

Calibrated reference scenarios ship as key-value text files under
``ppmqkd/scenarios/`` (one file per scenario, schema below).  Quantities
that were reconstructed rather than directly reported are listed in the
file's ``meta.assumed`` entry and surface in ``scenario_meta()``.

Scenario file schema: ``key = value`` lines, ``#`` comments.  Keys are
dotted (``protocol.*``, ``channel.*``, ``detector.*``, ``meta.*``).
Values: int, float (repr round-trip), bool (true/false), or
comma-separated float tuples.  ``serialize_params`` emits the canonical
form; parse -> serialize is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

__all__ = [
    "ProtocolParams",
    "ChannelParams",
    "DetectorParams",
    "ParamError",
    "ScenarioError",
    "validate",
    "validate_or_raise",
    "serialize_params",
    "parse_params",
    "load_scenario",
    "scenario_meta",
    "scenario_names",
    "SCENARIOS",
]

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ProtocolParams:
    """Everything Alice and Bob agree on before a session starts."""

    alphabet_size: int                      # M, power of 2
    slot_duration_ps: float
    pulse_width_ps: float
    signal_intensity: float                 # mean photons/pulse (signal)
    decoy_intensity: float                  # mean photons/pulse (decoy)
    vacuum_intensity: float = 0.0
    alice_basis_probs: tuple[float, float] = (0.5, 0.5)   # (time, energy)
    bob_basis_probs: tuple[float, float] = (0.5, 0.5)
    intensity_probs: tuple[float, float, float] = (0.7, 0.3, 0.0)  # (sig, decoy, vac)
    gvd_ps_per_nm: float = 10000.0
    optical_bandwidth_ghz: float = 25.0
    center_wavelength_nm: float = 1559.0
    sync_period_frames: int = 256
    reconciliation_efficiency: float = 0.9  # beta used by the analytic engine
    sample_size: int = 10**9                # finite-key sample size (counts)
    security_param: float = 1e-10
    # Eavesdropper-bound calibration (reconstructed per scenario).
    holevo_baseline_ps: float = 30.0        # baseline timing std
    holevo_coupling_ps: float = 150.0       # excess-noise coupling scale

    @property
    def frame_duration_ps(self) -> float:
        return self.alphabet_size * self.slot_duration_ps

    @property
    def bits_per_symbol(self) -> int:
        return self.alphabet_size.bit_length() - 1


@dataclass(frozen=True)
class ChannelParams:
    """Link budget.  ``loss_db`` is the total channel attenuation."""

    loss_db: float
    loss_per_km: float = 0.2
    length_km: float | None = None


@dataclass(frozen=True)
class DetectorParams:
    """Receiver detection chain: efficiency, timing, dead time, background."""

    efficiency: float = 0.68
    dead_time_ns: float = 80.0              # per readout channel
    n_channels: int = 4
    jitter_sigma_ps: float = 50.0
    dark_rate_cps: float = 1000.0

    @property
    def dead_time_ps(self) -> float:
        return self.dead_time_ns * 1e3

    @property
    def saturation_ceiling_cps(self) -> float:
        """Max sustained detection rate, all channels busy back to back."""
        if self.dead_time_ns == 0.0:
            return math.inf
        return self.n_channels / (self.dead_time_ns * 1e-9)


@dataclass(frozen=True)
class ParamError:
    """One violated invariant: which field, and what went wrong."""

    field: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.field}: {self.message}"


class ScenarioError(ValueError):
    """Unknown scenario name or malformed scenario file."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _prob_vector_ok(vec: Iterable[float]) -> bool:
    vec = list(vec)
    return all(0.0 <= p <= 1.0 for p in vec) and abs(sum(vec) - 1.0) <= PROB_TOL


def validate(params: ProtocolParams) -> list[ParamError]:
    """Check every invariant and return all violations, not just the first."""
    errors: list[ParamError] = []
    p = params
    if not (isinstance(p.alphabet_size, int) and p.alphabet_size >= 2
            and _is_power_of_two(p.alphabet_size)):
        errors.append(ParamError("alphabet_size",
                                 f"must be a power of 2 and >= 2, got {p.alphabet_size}"))
    if not p.slot_duration_ps > 0:
        errors.append(ParamError("slot_duration_ps", "must be positive"))
    if not 0 < p.pulse_width_ps < p.slot_duration_ps:
        errors.append(ParamError("pulse_width_ps",
                                 "must be positive and smaller than the slot duration"))
    if not 0.0 <= p.vacuum_intensity <= p.decoy_intensity:
        errors.append(ParamError("vacuum_intensity",
                                 "must satisfy 0 <= vacuum <= decoy"))
    if not 0.0 <= p.decoy_intensity < p.signal_intensity <= 1.0:
        errors.append(ParamError("decoy_intensity",
                                 f"need 0 <= decoy < signal <= 1, got decoy={p.decoy_intensity} "
                                 f"signal={p.signal_intensity}"))
    for name, vec in (("alice_basis_probs", p.alice_basis_probs),
                      ("bob_basis_probs", p.bob_basis_probs),
                      ("intensity_probs", p.intensity_probs)):
        if not _prob_vector_ok(vec):
            errors.append(ParamError(name, f"entries in [0,1] summing to 1, got {vec}"))
    if not 0.0 < p.reconciliation_efficiency <= 1.0:
        errors.append(ParamError("reconciliation_efficiency", "must lie in (0, 1]"))
    if not (isinstance(p.sync_period_frames, int) and p.sync_period_frames >= 2):
        errors.append(ParamError("sync_period_frames", "must be an integer >= 2"))
    if not (isinstance(p.sample_size, int) and p.sample_size >= 1):
        errors.append(ParamError("sample_size", "must be a positive integer"))
    if not 0.0 < p.security_param < 1.0:
        errors.append(ParamError("security_param", "must lie in (0, 1)"))
    if p.gvd_ps_per_nm < 0 or p.optical_bandwidth_ghz <= 0 or p.center_wavelength_nm <= 0:
        errors.append(ParamError("dispersion",
                                 "gvd must be >= 0; bandwidth and wavelength positive"))
    if p.holevo_baseline_ps <= 0 or p.holevo_coupling_ps <= 0:
        errors.append(ParamError("holevo_calibration", "calibration scales must be positive"))
    return errors


def validate_channel(channel: ChannelParams) -> list[ParamError]:
    errors: list[ParamError] = []
    if channel.loss_db < 0:
        errors.append(ParamError("loss_db", "must be >= 0"))
    if channel.loss_per_km < 0:
        errors.append(ParamError("loss_per_km", "must be >= 0"))
    if channel.length_km is not None:
        expected = channel.loss_per_km * channel.length_km
        if channel.length_km < 0:
            errors.append(ParamError("length_km", "must be >= 0"))
        elif not math.isclose(expected, channel.loss_db, rel_tol=1e-9, abs_tol=1e-9):
            errors.append(ParamError("loss_db",
                                     f"inconsistent with loss_per_km * length_km = {expected}"))
    return errors


def validate_detector(det: DetectorParams) -> list[ParamError]:
    errors: list[ParamError] = []
    if not 0.0 <= det.efficiency <= 1.0:
        errors.append(ParamError("efficiency", "must lie in [0, 1]"))
    if det.dead_time_ns < 0:
        errors.append(ParamError("dead_time_ns", "must be >= 0"))
    if not (isinstance(det.n_channels, int) and det.n_channels >= 1):
        errors.append(ParamError("n_channels", "must be an integer >= 1"))
    if det.dark_rate_cps < 0:
        errors.append(ParamError("dark_rate_cps", "must be >= 0"))
    if det.jitter_sigma_ps < 0:
        errors.append(ParamError("jitter_sigma_ps", "must be >= 0"))
    return errors


def validate_or_raise(params: ProtocolParams,
                      channel: ChannelParams | None = None,
                      detector: DetectorParams | None = None) -> None:
    errors = validate(params)
    if channel is not None:
        errors += validate_channel(channel)
    if detector is not None:
        errors += validate_detector(detector)
    if errors:
        raise ValueError("invalid parameters: " + "; ".join(map(str, errors)))


# --------------------------------------------------------------------------
# Serialization: canonical key-value text
# --------------------------------------------------------------------------

_SECTIONS = (("protocol", ProtocolParams), ("channel", ChannelParams),
             ("detector", DetectorParams))


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def serialize_params(params: ProtocolParams, channel: ChannelParams,
                     detector: DetectorParams,
                     meta: dict[str, str] | None = None) -> str:
    """Canonical text form; stable under parse -> serialize round trips."""
    lines: list[str] = []
    for section, obj in (("protocol", params), ("channel", channel),
                         ("detector", detector)):
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    for key in sorted(meta or {}):
        lines.append(f"meta.{key} = {meta[key]}")
    return "\n".join(lines) + "\n"


def _parse_value(raw: str, target_type) -> object:
    # Field annotations are strings here (module uses __future__ annotations).
    raw, name = raw.strip(), str(target_type)
    if raw == "none":
        return None
    if name.startswith("tuple"):
        return tuple(float(v) for v in raw.split(","))
    if name.startswith("int"):
        return int(raw)
    if name.startswith("bool"):
        return raw == "true"
    return float(raw)


def parse_params(text: str) -> tuple[ProtocolParams, ChannelParams, DetectorParams,
                                     dict[str, str]]:
    """Parse the key-value scenario format back into parameter objects."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        raw[key.strip()] = value.strip()

    meta = {k[len("meta."):]: v for k, v in raw.items() if k.startswith("meta.")}
    objs = []
    for section, cls in _SECTIONS:
        kwargs = {}
        for f in fields(cls):
            key = f"{section}.{f.name}"
            if key in raw:
                kwargs[f.name] = _parse_value(raw[key], f.type)
        objs.append(cls(**kwargs))
    return objs[0], objs[1], objs[2], meta


# --------------------------------------------------------------------------
# Shipped scenarios
# --------------------------------------------------------------------------

SCENARIOS = ("back_to_back", "spool_41km", "deployed_43km", "fig1b_binary")


def _scenario_text(name: str) -> str:
    if name not in SCENARIOS:
        raise ScenarioError(
            f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}")
    ref = resources.files("ppmqkd").joinpath(f"scenarios/{name}.cfg")
    return ref.read_text(encoding="utf-8")


def load_scenario(name: str) -> tuple[ProtocolParams, ChannelParams, DetectorParams]:
    """Load one of the shipped calibrated scenarios by name."""
    params, channel, detector, _ = parse_params(_scenario_text(name))
    validate_or_raise(params, channel, detector)
    return params, channel, detector


def scenario_meta(name: str) -> dict[str, str]:
    """Calibration metadata: which quantities are assumptions, not measurements."""
    return parse_params(_scenario_text(name))[3]


def scenario_names() -> tuple[str, ...]:
    return SCENARIOS


def with_alphabet(params: ProtocolParams, m: int) -> ProtocolParams:
    """Copy of ``params`` with a different alphabet size."""
    return replace(params, alphabet_size=m)
