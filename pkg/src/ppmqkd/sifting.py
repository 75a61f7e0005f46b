"""Alignment of Bob's time tags to Alice's frames and sifted statistics.

Sifting is deterministic given its inputs.  Every tag decodes to a
(frame, slot) pair; frames with exactly one tag yield a symbol, frames
with two or more are discarded and counted.  Matched-basis signal frames
feed the sifted symbol string; everything else (mismatched bases, decoy
and vacuum classes) only feeds statistics.

Statistics accumulate in streaming one-pass form (Welford) and merge
associatively, so shards processed in parallel can be combined in any
order up to floating-point reassociation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .codec import Basis, Intensity, SessionPlan, decode_arrays, encode_arrays
from .params import ProtocolParams
from .sim import ORIGIN_PHOTON, SessionTags

__all__ = [
    "ResidualStats",
    "SiftedStats",
    "SiftedString",
    "sift",
    "symbol_error_rate",
    "multiplicity_keeps_frame",
    "single_photon_truth",
    "merge_weighted",
]

N_BASES = 2
N_CLASSES = 3


@dataclass
class ResidualStats:
    """Streaming mean/variance of timing residuals (Welford + Chan merge)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add_array(self, values: np.ndarray) -> None:
        k = len(values)
        if k == 0:
            return
        batch_mean = float(values.mean())
        batch_m2 = float(((values - batch_mean) ** 2).sum())
        self._combine(k, batch_mean, batch_m2)

    def merge(self, other: "ResidualStats") -> None:
        self._combine(other.n, other.mean, other.m2)

    def _combine(self, n_b: int, mean_b: float, m2_b: float) -> None:
        if n_b == 0:
            return
        n_a = self.n
        delta = mean_b - self.mean
        n = n_a + n_b
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * n_a * n_b / n
        self.n = n

    @property
    def variance(self) -> float:
        return self.m2 / self.n if self.n > 0 else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def _zeros() -> np.ndarray:
    return np.zeros((N_BASES, N_CLASSES), dtype=np.int64)


@dataclass
class SiftedStats:
    """Everything the security engine needs, per (Alice basis, intensity)."""

    sent: np.ndarray = field(default_factory=_zeros)
    detected: np.ndarray = field(default_factory=_zeros)           # frames with >=1 tag
    matched_single: np.ndarray = field(default_factory=_zeros)    # basis match, 1 tag
    symbol_errors: np.ndarray = field(default_factory=_zeros)
    adjacent_errors: np.ndarray = field(default_factory=_zeros)
    multi_detection_count: int = 0
    overflow_count: int = 0
    sync_hit_count: int = 0
    duration_ps: float = 0.0
    residual_matched: tuple[ResidualStats, ResidualStats] = field(
        default_factory=lambda: (ResidualStats(), ResidualStats()))
    residual_mismatched: ResidualStats = field(default_factory=ResidualStats)

    def merge(self, other: "SiftedStats") -> "SiftedStats":
        self.sent += other.sent
        self.detected += other.detected
        self.matched_single += other.matched_single
        self.symbol_errors += other.symbol_errors
        self.adjacent_errors += other.adjacent_errors
        self.multi_detection_count += other.multi_detection_count
        self.overflow_count += other.overflow_count
        self.sync_hit_count += other.sync_hit_count
        self.duration_ps += other.duration_ps
        for mine, theirs in zip(self.residual_matched, other.residual_matched):
            mine.merge(theirs)
        self.residual_mismatched.merge(other.residual_mismatched)
        return self

    # -- convenience reductions -------------------------------------------
    def gain(self, intensity: Intensity) -> float:
        """Detected fraction of sent frames for one intensity class."""
        sent = int(self.sent[:, intensity].sum())
        if sent == 0:
            raise ValueError(f"no frames sent in class {Intensity(intensity).name}")
        return int(self.detected[:, intensity].sum()) / sent

    def matched_variance(self, basis: Basis) -> float:
        acc = self.residual_matched[int(basis)]
        if acc.n == 0:
            raise ValueError(f"no matched-basis residuals for {Basis(basis).name}")
        return acc.variance

    def to_json(self) -> str:
        doc = {
            "sent": self.sent.tolist(),
            "detected": self.detected.tolist(),
            "matched_single": self.matched_single.tolist(),
            "symbol_errors": self.symbol_errors.tolist(),
            "adjacent_errors": self.adjacent_errors.tolist(),
            "multi_detection_count": self.multi_detection_count,
            "overflow_count": self.overflow_count,
            "sync_hit_count": self.sync_hit_count,
            "duration_ps": self.duration_ps,
            "residual_matched": [vars(acc) for acc in self.residual_matched],
            "residual_mismatched": vars(self.residual_mismatched),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SiftedStats":
        doc = json.loads(text)
        stats = cls()
        for name in ("sent", "detected", "matched_single", "symbol_errors",
                     "adjacent_errors"):
            setattr(stats, name, np.array(doc[name], dtype=np.int64))
        stats.multi_detection_count = doc["multi_detection_count"]
        stats.overflow_count = doc["overflow_count"]
        stats.sync_hit_count = doc["sync_hit_count"]
        stats.duration_ps = doc["duration_ps"]
        stats.residual_matched = tuple(
            ResidualStats(**acc) for acc in doc["residual_matched"])
        stats.residual_mismatched = ResidualStats(**doc["residual_mismatched"])
        return stats


@dataclass
class SiftedString:
    """Aligned symbol pairs from matched-basis signal frames."""

    alice_symbols: np.ndarray
    bob_symbols: np.ndarray
    frame_index: np.ndarray

    def __len__(self) -> int:
        return len(self.alice_symbols)


def multiplicity_keeps_frame(n_tags: int) -> bool:
    """Frame-level postselection: exactly one tag keeps the frame."""
    return n_tags == 1


def _key_hist(basis: np.ndarray, cls: np.ndarray) -> np.ndarray:
    flat = np.bincount(basis.astype(np.int64) * N_CLASSES + cls,
                       minlength=N_BASES * N_CLASSES)
    return flat.reshape(N_BASES, N_CLASSES)


def sift(plan: SessionPlan, tags: SessionTags,
         params: ProtocolParams) -> tuple[SiftedString, SiftedStats]:
    """Postselect matched-basis frames and accumulate per-class statistics."""
    stats = SiftedStats()
    n_frames = len(plan)
    stats.duration_ps = n_frames * params.frame_duration_ps
    key_frames = ~plan.is_sync
    stats.sent = _key_hist(plan.alice_basis[key_frames],
                           plan.intensity_class[key_frames])

    frame_idx, slot = decode_arrays(tags.times_ps, params)
    in_range = (frame_idx >= 0) & (frame_idx < n_frames)
    stats.overflow_count = int((~in_range).sum())
    fi, sl = frame_idx[in_range], slot[in_range]
    tag_pos = np.flatnonzero(in_range)

    # tags are time sorted, so frame indices are nondecreasing
    uframes, first_idx, counts = np.unique(fi, return_index=True, return_counts=True)
    usync = plan.is_sync[uframes]
    stats.sync_hit_count = int(counts[usync].sum())

    uframes, first_idx, counts = uframes[~usync], first_idx[~usync], counts[~usync]
    stats.detected = _key_hist(plan.alice_basis[uframes],
                               plan.intensity_class[uframes])
    multi = counts >= 2
    stats.multi_detection_count = int(multi.sum())

    single = counts == 1
    sframes = uframes[single]
    stag = tag_pos[first_idx[single]]            # tag index of the lone tag
    bob_sym = sl[first_idx[single]].astype(np.int16)
    matched = plan.alice_basis[sframes] == tags.bob_basis[sframes]

    mf, mtag, msym = sframes[matched], stag[matched], bob_sym[matched]
    stats.matched_single = _key_hist(plan.alice_basis[mf],
                                     plan.intensity_class[mf])
    alice_sym = plan.symbols[mf]
    err = msym != alice_sym
    stats.symbol_errors = _key_hist(plan.alice_basis[mf][err],
                                    plan.intensity_class[mf][err])
    adjacent = np.abs(msym.astype(np.int32) - alice_sym.astype(np.int32)) == 1
    stats.adjacent_errors = _key_hist(plan.alice_basis[mf][err & adjacent],
                                      plan.intensity_class[mf][err & adjacent])

    expected = encode_arrays(mf, alice_sym.astype(np.int64), params)
    residual = tags.times_ps[mtag] - expected
    for b in (Basis.TIME, Basis.ENERGY):
        stats.residual_matched[b].add_array(residual[plan.alice_basis[mf] == b])

    # Mismatched-basis residuals need the true source frame (simulation
    # truth); offline tag files lack it and simply leave this empty.
    if tags.source_frame.size:
        photon = (tags.origins == ORIGIN_PHOTON) & (tags.source_frame >= 0)
        src = tags.source_frame[photon]
        mm = plan.alice_basis[src] != tags.bob_basis[src]
        t_true = encode_arrays(src[mm], plan.symbols[src[mm]].astype(np.int64), params)
        stats.residual_mismatched.add_array(tags.times_ps[photon][mm] - t_true)

    keep = plan.intensity_class[mf] == Intensity.SIGNAL
    sifted = SiftedString(alice_symbols=alice_sym[keep].astype(np.int16),
                          bob_symbols=msym[keep],
                          frame_index=mf[keep])
    return sifted, stats


def symbol_error_rate(stats: SiftedStats, intensity: Intensity) -> float:
    """Observed symbol error rate among matched single-tag frames."""
    kept = int(stats.matched_single[:, intensity].sum())
    if kept == 0:
        raise ValueError(
            f"error rate undefined: no detections in class {Intensity(intensity).name}")
    return int(stats.symbol_errors[:, intensity].sum()) / kept


def adjacent_error_fraction(stats: SiftedStats, intensity: Intensity) -> float:
    """Among symbol errors, the fraction landing one slot off."""
    errors = int(stats.symbol_errors[:, intensity].sum())
    if errors == 0:
        return 1.0
    return int(stats.adjacent_errors[:, intensity].sum()) / errors


def single_photon_truth(plan: SessionPlan, tags: SessionTags,
                        params: ProtocolParams,
                        intensity: Intensity = Intensity.SIGNAL) -> float:
    """Simulation-truth fraction of detected frames fed by one-photon pulses.

    Frame-level, matching the decoy gain convention: among non-sync
    frames of the given class with at least one accepted tag, the
    fraction whose pulse left Alice with exactly one photon.
    """
    frame_idx, _ = decode_arrays(tags.times_ps, params)
    valid = (frame_idx >= 0) & (frame_idx < len(plan))
    frames = np.unique(frame_idx[valid])
    frames = frames[~plan.is_sync[frames]]
    frames = frames[plan.intensity_class[frames] == intensity]
    if len(frames) == 0:
        raise ValueError("no detected frames in the requested class")
    return float((tags.n_emitted[frames] == 1).mean())


def merge_weighted(stats_list: list[SiftedStats],
                   weights: list[float]) -> SiftedStats:
    """Combine fixed-configuration sub-session stats with usage weights.

    Mirrors an acquisition procedure where basis and intensity choices
    are held fixed per run and datasets are recombined afterwards with
    the probabilities a free-running transmitter would have used.
    Counters are scaled and rounded; residual accumulators merge with
    their sample counts scaled the same way.
    """
    if len(stats_list) != len(weights):
        raise ValueError("need one weight per stats shard")
    total = SiftedStats()
    wsum = sum(weights)
    for stats, w in zip(stats_list, weights):
        w = w / wsum
        scaled = SiftedStats()
        for name in ("sent", "detected", "matched_single", "symbol_errors",
                     "adjacent_errors"):
            setattr(scaled, name,
                    np.round(getattr(stats, name) * w).astype(np.int64))
        scaled.multi_detection_count = round(stats.multi_detection_count * w)
        scaled.overflow_count = round(stats.overflow_count * w)
        scaled.sync_hit_count = round(stats.sync_hit_count * w)
        scaled.duration_ps = stats.duration_ps * w
        for b in (0, 1):
            acc = stats.residual_matched[b]
            scaled.residual_matched[b].merge(
                ResidualStats(round(acc.n * w), acc.mean, acc.m2 * w))
        acc = stats.residual_mismatched
        scaled.residual_mismatched.merge(
            ResidualStats(round(acc.n * w), acc.mean, acc.m2 * w))
        total.merge(scaled)
    return total
