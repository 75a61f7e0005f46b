"""Security bounds: decoy-state analysis, eavesdropper information, secure PIE.

The secure photon information efficiency (PIE, bits per detected photon)
for an M-ary alphabet is

    pie = beta * I(A;B) - (1 - F) * log2(M) - F * chi

where F lower-bounds the single-photon fraction of the receiver's
detections (decoy-state estimate), chi upper-bounds the eavesdropper's
Holevo information per symbol, and beta is the reconciliation
efficiency.  Multi-photon detections are written off entirely (the
log2 M term); single-photon detections leak at most chi.

Finite-sample operation shifts every estimated quantity adversarially by
a concentration bound at confidence split evenly from the security
parameter, so the finite-key PIE can never exceed the asymptotic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats as sstats

from .codec import Basis
from .params import DetectorParams, ProtocolParams
from .sifting import SiftedStats, symbol_error_rate

__all__ = [
    "SecurityBounds",
    "FiniteKeyParams",
    "DecoyBounds",
    "IntensityObservation",
    "ChannelEstimate",
    "binary_entropy",
    "mutual_information",
    "decoy_bounds",
    "excess_noise_holevo",
    "holevo_bound",
    "secure_pie",
    "finite_key_pie",
    "secret_key_rate",
    "estimate_from_stats",
]

GAUSSIAN_WIDTH = math.sqrt(2.0 * math.pi * math.e)  # entropy width of a unit normal
_MIN_FINITE_KEY_SAMPLE = 10**4
_N_EPSILON_SHARES = 4       # error rate, signal gain, decoy gain, timing variance
_POISSON_CUTOFF = 16        # photon-number truncation in the decoy program


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def mutual_information(error_rate: float, m: int) -> float:
    """I(A;B) in bits for the M-ary symmetric channel at the given error rate."""
    e_max = (m - 1) / m
    if not 0.0 <= error_rate <= e_max + 1e-15:
        raise ValueError(f"error rate must lie in [0, {e_max}], got {error_rate}")
    error_rate = min(error_rate, e_max)
    log2m = math.log2(m)
    if m == 2:
        return log2m - binary_entropy(error_rate)
    return log2m - binary_entropy(error_rate) - error_rate * math.log2(m - 1)


# --------------------------------------------------------------------------
# Decoy-state bounds
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntensityObservation:
    """Measured per-frame detection statistics for one pulse intensity."""

    intensity: float
    sent: int
    detected: int

    @property
    def gain(self) -> float:
        if self.sent <= 0:
            raise ValueError("observation needs at least one sent frame")
        return self.detected / self.sent


@dataclass(frozen=True)
class DecoyBounds:
    y1_lb: float            # single-photon yield, lower bound
    q1_lb: float            # single-photon gain, lower bound
    f_lb: float             # single-photon fraction of detections, lower bound
    y0_upper: float
    flagged: bool = False   # statistically inconsistent counts


def _gain_window(obs: IntensityObservation,
                 epsilon: float | None) -> tuple[float, float]:
    """One-sided Clopper-Pearson interval, or the point estimate twice."""
    if epsilon is None:
        return obs.gain, obs.gain
    k, n = obs.detected, obs.sent
    lo = 0.0 if k == 0 else float(sstats.beta.ppf(epsilon, k, n - k + 1))
    hi = 1.0 if k == n else float(sstats.beta.ppf(1.0 - epsilon, k + 1, n - k))
    return lo, hi


def decoy_bounds(signal: IntensityObservation, decoy: IntensityObservation,
                 y0_upper: float = 1.0,
                 epsilon: float | None = None) -> DecoyBounds:
    """Lower-bound the single-photon yield from two-intensity statistics.

    Solves a small linear program over photon-number yields
    ``Y_0..Y_k`` in [0, 1]: minimize ``Y_1`` subject to each intensity's
    Poisson mixture reproducing the measured gain.  With
    ``epsilon`` set, gains are replaced by one-sided Clopper-Pearson
    windows at that confidence, making the result a proper lower
    confidence bound.  The vacuum yield is capped by the background-rate
    calibration ``y0_upper``.
    """
    mu, nu = signal.intensity, decoy.intensity
    if nu >= mu:
        raise ValueError(f"decoy intensity must be below signal ({nu} >= {mu})")
    n_ph = np.arange(_POISSON_CUTOFF + 1)
    rows_ub, b_ub = [], []
    for obs in (signal, decoy):
        pmf = sstats.poisson.pmf(n_ph, obs.intensity)
        tail = float(max(0.0, 1.0 - pmf.sum()))
        lo, hi = _gain_window(obs, epsilon)
        rows_ub.append(pmf)
        b_ub.append(hi)
        rows_ub.append(-pmf)
        b_ub.append(-(max(lo - tail, 0.0)))
    cost = np.zeros(_POISSON_CUTOFF + 1)
    cost[1] = 1.0
    bounds = [(0.0, min(1.0, y0_upper))] + [(0.0, 1.0)] * _POISSON_CUTOFF
    res = optimize.linprog(cost, A_ub=np.array(rows_ub), b_ub=np.array(b_ub),
                           bounds=bounds, method="highs")
    if not res.success:
        # Counts outside the physically reachable set; report vacuously
        # sound bounds and flag the condition.
        return DecoyBounds(0.0, 0.0, 0.0, y0_upper, flagged=True)
    y1 = float(min(1.0, max(0.0, res.fun)))
    q1 = mu * math.exp(-mu) * y1
    _, q_mu_hi = _gain_window(signal, epsilon)
    f_lb = min(1.0, q1 / q_mu_hi) if q_mu_hi > 0 else 0.0
    return DecoyBounds(y1, q1, f_lb, y0_upper, flagged=False)


def y0_calibration_bound(detector: DetectorParams, frame_duration_ps: float,
                         slack: float = 2.0) -> float:
    """Vacuum-yield cap from the background-rate calibration.

    ``slack`` covers calibration drift; the floor keeps the program
    feasible when the configured background rate is exactly zero.
    """
    y0 = 1.0 - math.exp(-detector.dark_rate_cps * frame_duration_ps * 1e-12)
    return min(1.0, slack * y0 + 1e-12)


# --------------------------------------------------------------------------
# Eavesdropper bound
# --------------------------------------------------------------------------

def excess_noise_holevo(m: int, slot_ps: float, measured_var_ps2: float,
                        baseline_ps: float, coupling_ps: float) -> float:
    """Default Holevo bound from excess timing noise (Gaussian approximation).

    Timing variance beyond the calibrated baseline is attributed to an
    eavesdropper's probe.  The bound has two monotone contributions: a
    variance-ratio term ``0.5*log2(1 + dvar/baseline^2)``, and a
    frame-resolution term counting how many slots an estimate of
    Gaussian width ``sigma_eve = coupling^2/sqrt(dvar)`` can distinguish
    within the M-slot frame.  Calibration constants ship per scenario
    and are reconstructed, not measured.  Zero excess means zero bound;
    the result never exceeds log2(M).
    """
    log2m = math.log2(m)
    excess = measured_var_ps2 - baseline_ps ** 2
    if excess <= 0.0:
        return 0.0
    ratio_term = 0.5 * math.log2(1.0 + excess / baseline_ps ** 2)
    sigma_eve = coupling_ps ** 2 / math.sqrt(excess)
    resolution_term = max(0.0, math.log2(m * slot_ps / (GAUSSIAN_WIDTH * sigma_eve)))
    return float(min(log2m, ratio_term + resolution_term))


def holevo_bound(stats: SiftedStats, params: ProtocolParams) -> float:
    """Holevo bound from measured matched-basis timing statistics."""
    for b in (Basis.TIME, Basis.ENERGY):
        if stats.residual_matched[b].n == 0:
            raise ValueError(
                f"holevo bound needs matched residuals in both bases; "
                f"{Basis(b).name} is missing")
    pooled = stats.residual_matched[0].n + stats.residual_matched[1].n
    var = (stats.residual_matched[0].m2 + stats.residual_matched[1].m2) / pooled
    return excess_noise_holevo(params.alphabet_size, params.slot_duration_ps, var,
                               params.holevo_baseline_ps, params.holevo_coupling_ps)


# --------------------------------------------------------------------------
# PIE composition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SecurityBounds:
    """Everything entering the PIE, plus the result."""

    f_lb: float
    chi_ub: float
    i_ab: float
    beta: float
    pie: float              # clamped at zero
    pie_raw: float          # signed value of the composition
    insecure: bool
    finite_key_penalty: float = 0.0


def secure_pie(beta: float, i_ab: float, f_lb: float, chi_ub: float,
               m: int) -> SecurityBounds:
    """Asymptotic secure PIE; negative compositions clamp to 0 and flag."""
    if not 0.0 <= f_lb <= 1.0:
        raise ValueError(f"f_lb must lie in [0, 1], got {f_lb}")
    if chi_ub < 0.0 or i_ab < 0.0 or not 0.0 < beta <= 1.0:
        raise ValueError("chi_ub, i_ab must be >= 0 and beta in (0, 1]")
    raw = beta * i_ab - (1.0 - f_lb) * math.log2(m) - f_lb * chi_ub
    return SecurityBounds(f_lb=f_lb, chi_ub=chi_ub, i_ab=i_ab, beta=beta,
                          pie=max(0.0, raw), pie_raw=raw, insecure=raw <= 0.0)


@dataclass(frozen=True)
class FiniteKeyParams:
    """Finite-sample settings: total counts and the security parameter."""

    sample_size: int = 10**9
    security_param: float = 1e-10

    def epsilon_share(self) -> float:
        if not 0.0 < self.security_param < 1.0:
            raise ValueError("security parameter must lie in (0, 1)")
        share = self.security_param / _N_EPSILON_SHARES
        if share <= 0.0:
            raise ValueError("epsilon allocation infeasible")
        return share


@dataclass(frozen=True)
class ChannelEstimate:
    """Measured (or model-predicted) quantities the PIE is computed from."""

    m: int
    beta: float
    error_rate: float
    signal_obs: IntensityObservation
    decoy_obs: IntensityObservation
    y0_upper: float
    measured_var_ps2: float
    slot_ps: float
    baseline_ps: float
    coupling_ps: float
    share_signal: float = 0.7   # fraction of detections in each class
    share_decoy: float = 0.3

    def chi(self, var_ps2: float | None = None) -> float:
        return excess_noise_holevo(self.m, self.slot_ps,
                                   self.measured_var_ps2 if var_ps2 is None else var_ps2,
                                   self.baseline_ps, self.coupling_ps)


def _scaled_observation(obs: IntensityObservation, counts: float) -> IntensityObservation:
    """Rescale an observation to a target detection count at fixed gain."""
    detected = max(1, round(counts))
    sent = max(detected, round(detected / obs.gain)) if obs.gain > 0 else detected
    return IntensityObservation(obs.intensity, sent, detected)


def pie_from_estimate(est: ChannelEstimate,
                      fk: FiniteKeyParams | None = None) -> SecurityBounds:
    """Compose the PIE from a channel estimate, asymptotically or finite-key."""
    if fk is None:
        bounds = decoy_bounds(est.signal_obs, est.decoy_obs, est.y0_upper)
        i_ab = mutual_information(est.error_rate, est.m)
        return secure_pie(est.beta, i_ab, bounds.f_lb, est.chi(), est.m)

    if fk.sample_size < _MIN_FINITE_KEY_SAMPLE:
        raise ValueError(
            f"finite-key analysis needs at least {_MIN_FINITE_KEY_SAMPLE} counts")
    eps = fk.epsilon_share()
    n = fk.sample_size
    n_sig = max(1.0, est.share_signal * n)
    n_dec = max(1.0, est.share_decoy * n)

    e_max = (est.m - 1) / est.m
    delta_e = math.sqrt(math.log(1.0 / eps) / (2.0 * n_sig))
    e_up = min(e_max, est.error_rate + delta_e)

    sig = _scaled_observation(est.signal_obs, n_sig)
    dec = _scaled_observation(est.decoy_obs, n_dec)
    bounds = decoy_bounds(sig, dec, est.y0_upper, epsilon=eps)

    var_up = est.measured_var_ps2 * (1.0 + math.sqrt(2.0 * math.log(1.0 / eps) / n_sig))
    chi_up = est.chi(var_up)

    pa_term = 2.0 * math.log2(2.0 / eps) / n
    i_ab = mutual_information(e_up, est.m)
    asym = secure_pie(est.beta, i_ab, bounds.f_lb, chi_up, est.m)
    raw = asym.pie_raw - pa_term
    penalty = pie_from_estimate(est).pie_raw - raw
    return SecurityBounds(f_lb=bounds.f_lb, chi_ub=chi_up, i_ab=i_ab, beta=est.beta,
                          pie=max(0.0, raw), pie_raw=raw, insecure=raw <= 0.0,
                          finite_key_penalty=penalty)


def finite_key_pie(est: ChannelEstimate, fk: FiniteKeyParams) -> SecurityBounds:
    """Finite-sample PIE; always at or below the asymptotic value."""
    return pie_from_estimate(est, fk)


def secret_key_rate(pie_bits: float, sifted_rate_cps: float) -> float:
    """Secret bits per second: PIE times the sifted detection rate."""
    if pie_bits < 0 or sifted_rate_cps < 0:
        raise ValueError("pie and sifted rate must be >= 0")
    return pie_bits * sifted_rate_cps


# --------------------------------------------------------------------------
# Building estimates from sifted statistics
# --------------------------------------------------------------------------

def estimate_from_stats(stats: SiftedStats, params: ProtocolParams,
                        detector: DetectorParams,
                        beta: float | None = None) -> ChannelEstimate:
    """Assemble a channel estimate from one session's sifted statistics."""
    from .codec import Intensity  # local import avoids a cycle at module load

    sig_sent = int(stats.sent[:, Intensity.SIGNAL].sum())
    sig_det = int(stats.detected[:, Intensity.SIGNAL].sum())
    dec_sent = int(stats.sent[:, Intensity.DECOY].sum())
    dec_det = int(stats.detected[:, Intensity.DECOY].sum())
    signal_obs = IntensityObservation(params.signal_intensity, sig_sent, sig_det)
    decoy_obs = IntensityObservation(params.decoy_intensity, dec_sent, dec_det)

    pooled_n = stats.residual_matched[0].n + stats.residual_matched[1].n
    pooled_var = ((stats.residual_matched[0].m2 + stats.residual_matched[1].m2)
                  / pooled_n) if pooled_n else 0.0
    total_det = sig_det + dec_det
    share_signal = sig_det / total_det if total_det else 0.5
    return ChannelEstimate(
        m=params.alphabet_size,
        beta=params.reconciliation_efficiency if beta is None else beta,
        error_rate=symbol_error_rate(stats, Intensity.SIGNAL),
        signal_obs=signal_obs,
        decoy_obs=decoy_obs,
        y0_upper=y0_calibration_bound(detector, params.frame_duration_ps),
        measured_var_ps2=pooled_var,
        slot_ps=params.slot_duration_ps,
        baseline_ps=params.holevo_baseline_ps,
        coupling_ps=params.holevo_coupling_ps,
        share_signal=share_signal,
        share_decoy=1.0 - share_signal,
    )
