"""Monte Carlo photon-detection model and analytic saturation formulas.

The simulation draws photon numbers per pulse, thins them through the
channel and detector efficiency, perturbs arrival times with detector
jitter (plus a flat dispersion-mismatch spread when Alice and Bob chose
different bases), adds background counts as a homogeneous Poisson
process, and pushes every candidate event through a shared multi-channel
dead-time gate.

The random stream has a fixed call order whose shapes depend only on the
session plan and seed, never on the channel loss: per-photon survival is
decided by comparing one uniform draw per emitted photon against the
total transmittance.  Raising the loss with the same seed can therefore
only remove detections (monotone coupling), and a fixed seed reproduces
the tag stream bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import SessionPlan, encode_arrays
from .params import DetectorParams, ProtocolParams

try:  # pragma: no cover - exercised implicitly everywhere
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

__all__ = [
    "TimeTag",
    "DetectorState",
    "SessionTags",
    "transmittance",
    "basis_mismatch_spread",
    "saturated_rate",
    "dead_time_gate",
    "simulate_session",
    "write_tag_file",
    "read_tag_file",
]

SPEED_OF_LIGHT_M_S = 299792458.0

ORIGIN_PHOTON = 0
ORIGIN_DARK = 1

TAG_FILE_MAGIC = b"PPMQTAG1"


@dataclass(frozen=True)
class TimeTag:
    """A single detection event on Bob's side."""

    detection_time_ps: float
    channel_id: int
    origin: int  # ORIGIN_PHOTON or ORIGIN_DARK (simulation truth label)


@dataclass
class DetectorState:
    """Mutable dead-time bookkeeping for one detector system."""

    next_free_ps: np.ndarray  # float64, one entry per channel
    pointer: int = 0

    @classmethod
    def fresh(cls, detector: DetectorParams) -> "DetectorState":
        return cls(np.zeros(detector.n_channels, dtype=np.float64), 0)


@dataclass
class SessionTags:
    """Accepted detections plus per-frame simulation truth."""

    times_ps: np.ndarray       # float64, sorted ascending
    channels: np.ndarray       # uint8
    origins: np.ndarray        # uint8
    source_frame: np.ndarray   # int64, -1 for dark counts
    bob_basis: np.ndarray      # uint8, per frame
    n_emitted: np.ndarray      # int32, photons leaving Alice per frame
    duration_ps: float

    def __len__(self) -> int:
        return len(self.times_ps)

    def as_records(self) -> list[TimeTag]:
        return [TimeTag(float(t), int(c), int(o))
                for t, c, o in zip(self.times_ps, self.channels, self.origins)]


def transmittance(loss_db: float) -> float:
    """Power transmission of a ``loss_db`` attenuator."""
    if loss_db < 0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def basis_mismatch_spread(gvd_ps_per_nm: float, bandwidth_ghz: float,
                          wavelength_nm: float) -> float:
    """Timing spread (full width, ps) from uncompensated dispersion.

    When only one party applies dispersion, a pulse of optical bandwidth
    ``bandwidth_ghz`` is stretched by ``gvd * delta_lambda`` with
    ``delta_lambda = wavelength**2 * bandwidth / c``.
    """
    if gvd_ps_per_nm < 0 or bandwidth_ghz <= 0 or wavelength_nm <= 0:
        raise ValueError("dispersion magnitude >= 0; bandwidth, wavelength > 0")
    delta_lambda_m = (wavelength_nm * 1e-9) ** 2 * (bandwidth_ghz * 1e9) / SPEED_OF_LIGHT_M_S
    delta_lambda_nm = delta_lambda_m * 1e9
    return gvd_ps_per_nm * delta_lambda_nm


def mismatch_spread_ps(params: ProtocolParams) -> float:
    return basis_mismatch_spread(params.gvd_ps_per_nm, params.optical_bandwidth_ghz,
                                 params.center_wavelength_nm)


def saturated_rate(arrival_rate_cps: float, detector: DetectorParams) -> float:
    """Sustained detection rate for Poisson arrivals into the dead-time gate.

    The gate parks each event on any free channel and blocks only when
    every channel is dead, i.e. an n-server loss system with fixed
    service time.  Its throughput is ``lambda * (1 - B)`` with ``B`` the
    Erlang blocking probability at offered load ``lambda * dead_time``
    (insensitive to the service-time distribution, so exact here).
    """
    lam = arrival_rate_cps
    if lam < 0:
        raise ValueError("arrival rate must be >= 0")
    tau_s = detector.dead_time_ns * 1e-9
    if lam == 0.0 or tau_s == 0.0:
        return lam
    offered = lam * tau_s
    blocking = 1.0
    for k in range(1, detector.n_channels + 1):
        blocking = offered * blocking / (k + offered * blocking)
    return lam * (1.0 - blocking)


# --------------------------------------------------------------------------
# Dead-time gate
# --------------------------------------------------------------------------

def _gate_py(times, next_free, pointer, tau_ps, accepted, channel):
    n = next_free.shape[0]
    for i in range(times.shape[0]):
        t = times[i]
        for k in range(n):
            ch = (pointer + k) % n
            if next_free[ch] <= t:
                next_free[ch] = t + tau_ps
                accepted[i] = True
                channel[i] = ch
                pointer = (ch + 1) % n
                break
    return pointer


if _HAVE_NUMBA:
    _gate_jit = njit(cache=True)(_gate_py)
else:  # pragma: no cover
    _gate_jit = _gate_py


def dead_time_gate(times_ps: np.ndarray, detector: DetectorParams,
                   state: DetectorState | None = None
                   ) -> tuple[np.ndarray, np.ndarray, DetectorState]:
    """Run time-sorted candidate events through the multi-channel gate.

    Events are assigned round-robin to the next free channel (scanning
    from the rotating pointer) and dropped only when every channel is
    dead at their arrival time.  Returns (accepted mask, channel ids,
    state); the state is updated in place and returned for chaining.
    """
    times_ps = np.ascontiguousarray(times_ps, dtype=np.float64)
    if np.any(np.diff(times_ps) < 0):
        raise ValueError("candidate events must be time-sorted")
    if state is None:
        state = DetectorState.fresh(detector)
    accepted = np.zeros(len(times_ps), dtype=np.bool_)
    channel = np.zeros(len(times_ps), dtype=np.uint8)
    if detector.dead_time_ns == 0.0:
        # Free-running detector: everything lands, channels still rotate.
        accepted[:] = True
        channel[:] = (state.pointer + np.arange(len(times_ps))) % detector.n_channels
        state.pointer = int((state.pointer + len(times_ps)) % detector.n_channels)
        return accepted, channel, state
    state.pointer = int(_gate_jit(times_ps, state.next_free_ps, state.pointer,
                                  detector.dead_time_ps, accepted, channel))
    return accepted, channel, state


# --------------------------------------------------------------------------
# Session simulation
# --------------------------------------------------------------------------

def simulate_session(plan: SessionPlan, params: ProtocolParams,
                     loss_db: float, detector: DetectorParams,
                     rng_seed: int) -> SessionTags:
    """Simulate Bob's raw time-tag stream for one transmission session."""
    rng = np.random.default_rng(rng_seed)
    n_frames = len(plan)
    duration_ps = n_frames * params.frame_duration_ps

    # Fixed draw order; shapes independent of loss (see module docstring).
    if plan.bob_basis is not None:
        bob_basis = plan.bob_basis
    else:
        bob_basis = (rng.random(n_frames) >= params.bob_basis_probs[0]).astype(np.uint8)

    mu = np.array([params.signal_intensity, params.decoy_intensity,
                   params.vacuum_intensity])
    frame_mu = mu[plan.intensity_class]
    frame_mu[plan.is_sync] = 0.0      # sync pulses travel on a separate fiber
    n_emitted = rng.poisson(frame_mu).astype(np.int32)

    src_frame = np.repeat(np.arange(n_frames, dtype=np.int64), n_emitted)
    n_photons = len(src_frame)
    survival_u = rng.random(n_photons)
    jitter = rng.normal(0.0, detector.jitter_sigma_ps, size=n_photons)
    mismatch_u = rng.random(n_photons)

    eta_total = transmittance(loss_db) * detector.efficiency
    alive = survival_u < eta_total
    src_frame = src_frame[alive]
    jitter = jitter[alive]
    mismatch_u = mismatch_u[alive]

    t_photon = encode_arrays(src_frame, plan.symbols[src_frame].astype(np.int64), params)
    t_photon += jitter
    mismatched = plan.alice_basis[src_frame] != bob_basis[src_frame]
    if np.any(mismatched):
        spread = mismatch_spread_ps(params)
        t_photon[mismatched] += (mismatch_u[mismatched] - 0.5) * spread

    n_dark = rng.poisson(detector.dark_rate_cps * duration_ps * 1e-12)
    t_dark = rng.random(n_dark) * duration_ps

    times = np.concatenate([t_photon, t_dark])
    origins = np.concatenate([np.full(len(t_photon), ORIGIN_PHOTON, dtype=np.uint8),
                              np.full(n_dark, ORIGIN_DARK, dtype=np.uint8)])
    sources = np.concatenate([src_frame, np.full(n_dark, -1, dtype=np.int64)])

    order = np.argsort(times, kind="stable")
    times, origins, sources = times[order], origins[order], sources[order]

    accepted, channel, _ = dead_time_gate(times, detector)
    return SessionTags(
        times_ps=times[accepted],
        channels=channel[accepted],
        origins=origins[accepted],
        source_frame=sources[accepted],
        bob_basis=bob_basis,
        n_emitted=n_emitted,
        duration_ps=duration_ps,
    )


# --------------------------------------------------------------------------
# Binary tag-dump format
# --------------------------------------------------------------------------
# Header: 8-byte magic, u64 record count.  Records: little-endian
# (u64 timestamp in ps, u8 channel, u8 origin), 10 bytes each.

_RECORD_DTYPE = np.dtype([("t", "<u8"), ("ch", "u1"), ("origin", "u1")])


def write_tag_file(path, tags: SessionTags) -> None:
    rec = np.empty(len(tags), dtype=_RECORD_DTYPE)
    rec["t"] = np.round(np.maximum(tags.times_ps, 0.0)).astype(np.uint64)
    rec["ch"] = tags.channels
    rec["origin"] = tags.origins
    with open(path, "wb") as fh:
        fh.write(TAG_FILE_MAGIC)
        fh.write(struct.pack("<Q", len(tags)))
        fh.write(rec.tobytes())


def read_tag_file(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a tag dump; returns (times_ps float64, channels, origins)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != TAG_FILE_MAGIC:
            raise ValueError(f"not a tag file (bad magic {magic!r})")
        (count,) = struct.unpack("<Q", fh.read(8))
        rec = np.frombuffer(fh.read(count * _RECORD_DTYPE.itemsize),
                            dtype=_RECORD_DTYPE)
    if len(rec) != count:
        raise ValueError("truncated tag file")
    return rec["t"].astype(np.float64), rec["ch"].copy(), rec["origin"].copy()
