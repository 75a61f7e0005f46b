"""PPM frame/slot arithmetic, symbol-bit mapping, and session planning.

A session is a sequence of frames; frame ``k`` occupies
``[k * M * slot, (k+1) * M * slot)`` picoseconds and carries one pulse
centered in the slot selected by the key symbol.  Slot boundaries are
half-open.  Frames whose index is a multiple of the sync period are
timing-reference frames: they occupy their time span but carry no
quantum pulse and never contribute key.

Symbols map to bit strings through a binary-reflected Gray code, so the
dominant timing errors (one slot off) flip a single bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .params import ProtocolParams

__all__ = [
    "Basis",
    "Intensity",
    "FrameRecord",
    "SyncSchedule",
    "SessionPlan",
    "bits_per_symbol",
    "gray_encode",
    "gray_decode",
    "symbol_to_bits",
    "bits_to_symbol",
    "encode",
    "encode_arrays",
    "decode",
    "decode_arrays",
    "transmitted_frame_rate",
    "key_frame_fraction",
    "plan_session",
]


class Basis(IntEnum):
    TIME = 0
    ENERGY = 1


class Intensity(IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


@dataclass(frozen=True)
class FrameRecord:
    """One transmitted symbol frame on Alice's side."""

    frame_index: int
    symbol: int
    basis: Basis
    intensity_class: Intensity

    def check(self, m: int) -> None:
        if not 0 <= self.symbol < m:
            raise ValueError(f"symbol {self.symbol} outside [0, {m})")
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")


@dataclass(frozen=True)
class SyncSchedule:
    """Which frame indices are timing-reference frames."""

    sync_period_frames: int
    frame_duration_ps: float

    def is_sync(self, frame_index: int) -> bool:
        return frame_index % self.sync_period_frames == 0


def bits_per_symbol(m: int) -> int:
    """log2(M) for a power-of-two alphabet; anything else is an error."""
    if m < 2 or (m & (m - 1)) != 0:
        raise ValueError(f"alphabet size must be a power of 2 >= 2, got {m}")
    return m.bit_length() - 1


def gray_encode(symbol):
    """Binary-reflected Gray code; adjacent symbols differ in one bit."""
    return symbol ^ (symbol >> 1)


def gray_decode(code):
    """Inverse of :func:`gray_encode` (works on ints or integer arrays)."""
    out = code
    shift = 1
    # prefix-xor; 32 bits is plenty for any supported alphabet
    while shift < 32:
        out = out ^ (out >> shift)
        shift *= 2
    return out


def symbol_to_bits(symbol: int, m: int) -> np.ndarray:
    """Gray-coded bits, most significant first."""
    n = bits_per_symbol(m)
    g = gray_encode(symbol)
    return np.array([(g >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.uint8)


def bits_to_symbol(bits: np.ndarray) -> int:
    g = 0
    for b in bits:
        g = (g << 1) | int(b)
    return int(gray_decode(g))


def encode(frame: FrameRecord, params: ProtocolParams) -> float:
    """Absolute emission time (ps) of the pulse carried by ``frame``."""
    frame.check(params.alphabet_size)
    return encode_time(frame.frame_index, frame.symbol, params)


def encode_time(frame_index: int, symbol: int, params: ProtocolParams) -> float:
    slot = params.slot_duration_ps
    return frame_index * params.frame_duration_ps + (symbol + 0.5) * slot


def encode_arrays(frame_index: np.ndarray, symbol: np.ndarray,
                  params: ProtocolParams) -> np.ndarray:
    slot = params.slot_duration_ps
    return (frame_index.astype(np.float64) * params.frame_duration_ps
            + (symbol.astype(np.float64) + 0.5) * slot)


def decode(arrival_time_ps: float, params: ProtocolParams) -> tuple[int, int]:
    """Map an absolute arrival time to (frame_index, slot_index)."""
    if arrival_time_ps < 0:
        raise ValueError("arrival time must be >= 0")
    m = params.alphabet_size
    global_slot = math.floor(arrival_time_ps / params.slot_duration_ps)
    return global_slot // m, global_slot % m


def decode_arrays(times_ps: np.ndarray,
                  params: ProtocolParams) -> tuple[np.ndarray, np.ndarray]:
    m = params.alphabet_size
    global_slot = np.floor(times_ps / params.slot_duration_ps).astype(np.int64)
    return global_slot // m, global_slot % m


def transmitted_frame_rate(params: ProtocolParams) -> float:
    """Raw frame rate in frames/s; doubling M halves this exactly."""
    return 1.0 / (params.frame_duration_ps * 1e-12)


def key_frame_fraction(params: ProtocolParams) -> float:
    """Fraction of frames eligible to carry key (sync frames excluded)."""
    p = params.sync_period_frames
    return (p - 1) / p


@dataclass
class SessionPlan:
    """Alice's transmission schedule as flat arrays (one entry per frame).

    ``bob_basis`` is optional: when set, it captures a receiver switching
    schedule agreed in advance (fixed-basis acquisition blocks); when
    ``None`` the simulator draws Bob's basis per frame.
    """

    symbols: np.ndarray          # int16, key symbol (0 for sync frames)
    alice_basis: np.ndarray      # uint8, Basis values
    intensity_class: np.ndarray  # uint8, Intensity values
    is_sync: np.ndarray          # bool
    bob_basis: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def n_key_frames(self) -> int:
        return int((~self.is_sync).sum())

    def frame_records(self) -> list[FrameRecord]:
        """Materialize non-sync frames as records (small sessions only)."""
        return [
            FrameRecord(i, int(self.symbols[i]), Basis(int(self.alice_basis[i])),
                        Intensity(int(self.intensity_class[i])))
            for i in range(len(self.symbols)) if not self.is_sync[i]
        ]


def plan_session(n_frames: int, params: ProtocolParams,
                 rng: np.random.Generator) -> SessionPlan:
    """Draw Alice's symbols, bases and intensity classes for a session."""
    m = params.alphabet_size
    symbols = rng.integers(0, m, size=n_frames).astype(np.int16)
    alice_basis = (rng.random(n_frames) >= params.alice_basis_probs[0]).astype(np.uint8)
    u = rng.random(n_frames)
    p_sig, p_dec, _ = params.intensity_probs
    intensity = np.full(n_frames, Intensity.VACUUM, dtype=np.uint8)
    intensity[u < p_sig + p_dec] = Intensity.DECOY
    intensity[u < p_sig] = Intensity.SIGNAL
    is_sync = (np.arange(n_frames) % params.sync_period_frames) == 0
    symbols[is_sync] = 0
    return SessionPlan(symbols, alice_basis, intensity, is_sync)


def plan_fixed_basis_session(n_frames: int, params: ProtocolParams,
                             rng: np.random.Generator) -> SessionPlan:
    """Plan a session as contiguous fixed-basis acquisition blocks.

    Both parties hold their basis for the span of a block; block lengths
    follow the configured basis probabilities.  Dispersed mismatched
    pulses then never leak into matched key frames, mirroring a
    single-receiver acquisition procedure where datasets taken at fixed
    settings are recombined afterwards.
    """
    plan = plan_session(n_frames, params, rng)
    pa, qa = params.alice_basis_probs[0], params.bob_basis_probs[0]
    shares = np.array([pa * qa,                  # time / time
                       (1 - pa) * (1 - qa),      # energy / energy
                       pa * (1 - qa),            # time / energy
                       (1 - pa) * qa])           # energy / time
    edges = np.round(np.cumsum(shares) * n_frames).astype(np.int64)
    alice = np.empty(n_frames, dtype=np.uint8)
    bob = np.empty(n_frames, dtype=np.uint8)
    starts = np.concatenate([[0], edges[:-1]])
    pairs = ((Basis.TIME, Basis.TIME), (Basis.ENERGY, Basis.ENERGY),
             (Basis.TIME, Basis.ENERGY), (Basis.ENERGY, Basis.TIME))
    for (a, b), lo, hi in zip(pairs, starts, edges):
        alice[lo:hi] = a
        bob[lo:hi] = b
    plan.alice_basis = alice
    plan.bob_basis = bob
    return plan
