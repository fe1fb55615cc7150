#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
import logging
import time
from typing import Optional
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ssb_common import BufferTooShortError

STAGES = ('baseline', 'coarse', 'refine')
# metrics within this relative distance of the maximum are ties
TIE_RTOL = 1e-9
TIE_BREAK = 'smallest tau, then smallest sequence index'
CHUNK = 4096


@dataclasses.dataclass(frozen=True)
class SearchParams(object):
    '''Refinement settings

    :param int delta_n: half width of the refinement window (full-rate samples)
    :param float lock_ratio: minimum refined/coarse peak ratio, 0 disables the lock check
    :param str tie_break: the tie policy of every search; TIE_BREAK is the only one implemented
    '''
    delta_n: int = 72
    lock_ratio: float = 0.35
    tie_break: str = TIE_BREAK

    @classmethod
    def for_config(cls, cfg, **kwargs):
        kwargs.setdefault('delta_n', 2 * cfg.cp_len)
        params = cls(**kwargs)
        params.validate(cfg)
        return params

    def validate(self, cfg):
        if not 1 <= self.delta_n or not 8 * self.delta_n < 3 * cfg.n_ssb:
            raise ValueError('delta_n must satisfy 1 <= delta_n < 3/8 * n_ssb = %.1f (got %r)'
                             % (3 * cfg.n_ssb / 8, self.delta_n))
        if not self.lock_ratio >= 0:
            raise ValueError('lock_ratio must be >= 0 (got %r)' % self.lock_ratio)
        if self.tie_break != TIE_BREAK:
            raise ValueError('tie_break must be "%s" (got %r)' % (TIE_BREAK, self.tie_break))


@dataclasses.dataclass
class OpCount(object):
    stage: str
    complex_macs: int = 0
    correlations_evaluated: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError('stage must be one of %s (got %r)' % (STAGES, self.stage))

    def add(self, n_correlations, length):
        self.correlations_evaluated += int(n_correlations)
        self.complex_macs += int(n_correlations) * int(length)


@dataclasses.dataclass
class PssDetection(object):
    tau_ssb: int
    n_id2: int
    peak_metric: float
    coarse_tau_h: Optional[int] = None
    window: Optional[Tuple[int, int]] = None
    at_window_edge: bool = False
    locked: bool = True


def expected_macs(stage, cfg, params=None):
    '''Closed-form MAC count of a stage (refine before window clipping)'''
    if stage == 'baseline':
        return 3 * cfg.n_ssb * cfg.n_fft
    elif stage == 'coarse':
        return 3 * (cfg.n_ssb // 2) * (cfg.n_fft // 2)
    elif stage == 'refine':
        delta_n = params.delta_n if params is not None else 2 * cfg.cp_len
        return (2 * delta_n + 1) * cfg.n_fft
    raise ValueError('stage must be one of %s (got %r)' % (STAGES, stage))


# * -------------------- correlation engine -------------------- *
def correlate(r, s, tau, count=None):
    '''|sum_k r[tau + k] conj(s[k])|

    :param IqBuffer r: received samples
    :param np.ndarray s: reference sequence at the rate of r
    :param int tau: first sample of the correlation window
    :param OpCount count: accumulator charged with len(s) MACs
    '''
    x = r.samples
    if tau < 0 or tau + len(s) > len(x):
        raise ValueError('tau=%r out of range for a %d-sample buffer and a %d-sample reference'
                         % (tau, len(x), len(s)))
    if count is not None:
        count.add(1, len(s))
    return float(np.abs(np.vdot(s, x[tau:tau + len(s)])))


def _metrics(x, refs, first_lag, n_lags):
    '''Metrics of shape (n_lags, n_refs) for consecutive lags'''
    length = refs.shape[1]
    windows = sliding_window_view(x, length)
    kernel = refs.conj().T
    out = np.empty((n_lags, refs.shape[0]), dtype=np.float64)
    for a in range(0, n_lags, CHUNK):
        b = min(n_lags, a + CHUNK)
        out[a:b] = np.abs(windows[first_lag + a:first_lag + b] @ kernel)
    return out


def _pick_peak(metrics, taus):
    '''Row/column of the maximum with ties broken by smallest tau, then smallest index'''
    peak = metrics.max()
    rows, cols = np.nonzero(metrics >= peak * (1.0 - TIE_RTOL))
    order = np.lexsort((cols, taus[rows]))
    row, col = rows[order[0]], cols[order[0]]
    return int(row), int(col), float(metrics[row, col])


def _scan_period(buf, refs, cp, period, start):
    '''Correlate every lag of one period against all references

    :return: (tau, sequence index, peak metric, number of correlations)
    '''
    length = refs.shape[1]
    need = period + length - 1
    if len(buf) < need:
        raise BufferTooShortError('search needs %d samples (one period plus the reference tail), got %d'
                                  % (need, len(buf)))
    metrics = _metrics(buf.samples, refs, 0, period)
    taus = (np.arange(period) - cp + start) % period
    row, col, peak = _pick_peak(metrics, taus)
    return int(taus[row]), col, peak, metrics.size


def full_search(r_full, refs, cfg):
    '''Exhaustive full-rate search over one period and the three PSS

    :param IqBuffer r_full: one period plus an n_fft tail at the full rate
    :param refs: the three ReferencePss
    :param FrameConfig cfg: numerology
    :rtype: (PssDetection, OpCount)
    '''
    r_full.check_rate(cfg)
    count = OpCount('baseline')
    bank = np.stack([ref.full_rate for ref in refs])
    tau, i, peak, n = _scan_period(r_full, bank, cfg.cp_len, cfg.n_ssb, r_full.start_index_full_rate)
    count.add(n, cfg.n_fft)
    logging.debug('full search: tau=%d n_id2=%d metric=%.4f', tau, i, peak)
    return PssDetection(tau, refs[i].seq_index, peak), count


def _coarse_scan(r_half, refs, cfg):
    r_half.check_rate(cfg, half=True)
    if r_half.start_index_full_rate % 2 != 0:
        raise ValueError('half-rate buffers must start on an even full-rate index (got %d)'
                         % r_half.start_index_full_rate)
    count = OpCount('coarse')
    bank = np.stack([ref.half_rate for ref in refs])
    tau_h, i, peak, n = _scan_period(r_half, bank, cfg.cp_len // 2, cfg.n_ssb // 2,
                                     r_half.start_index_full_rate // 2)
    count.add(n, cfg.n_fft // 2)
    return tau_h, refs[i].seq_index, peak, count


def half_search(r_half, refs, cfg):
    '''Coarse search over one period at half rate

    :param IqBuffer r_half: n_ssb/2 samples plus an n_fft/2 tail at half rate
    :return: (coarse_tau_h, n_id2, OpCount)
    '''
    tau_h, n_id2, peak, count = _coarse_scan(r_half, refs, cfg)
    logging.debug('half search: tau_h=%d n_id2=%d metric=%.4f', tau_h, n_id2, peak)
    return tau_h, n_id2, count


def refine(r_full, ref_full, coarse_tau_h, params, cfg):
    '''Full-rate search in a window around the rate-converted coarse estimate

    Candidates whose correlation window leaves the buffer are skipped.

    :param IqBuffer r_full: full-rate samples
    :param ReferencePss ref_full: reference of the detected sector
    :param int coarse_tau_h: coarse estimate in half-rate samples
    :param SearchParams params: window settings
    :param FrameConfig cfg: numerology
    :rtype: (PssDetection, OpCount)
    '''
    r_full.check_rate(cfg)
    n_ssb = cfg.n_ssb
    center = 2 * coarse_tau_h
    # clipped to the period, not wrapped: a coarse peak on the far side of the
    # period boundary from the true offset leaves it outside the window
    lo = max(0, center - params.delta_n)
    hi = min(n_ssb - 1, center + params.delta_n)
    taus = np.arange(lo, hi + 1)
    local = (taus - r_full.start_index_full_rate) % n_ssb + cfg.cp_len
    fits = local + cfg.n_fft <= len(r_full)
    if not fits.any():
        raise BufferTooShortError('no refinement candidate in [%d, %d] fits the %d-sample buffer'
                                  % (lo, hi, len(r_full)))
    taus, local = taus[fits], local[fits]
    windows = sliding_window_view(r_full.samples, cfg.n_fft)[local]
    metrics = np.abs(windows @ ref_full.full_rate.conj())[:, None]
    count = OpCount('refine')
    count.add(len(taus), cfg.n_fft)
    row, _, peak = _pick_peak(metrics, taus)
    tau = int(taus[row])
    detection = PssDetection(tau, ref_full.seq_index, peak, coarse_tau_h=coarse_tau_h, window=(lo, hi),
                             at_window_edge=tau in (int(taus[0]), int(taus[-1])))
    logging.debug('refine: window=[%d, %d] tau=%d metric=%.4f', lo, hi, tau, peak)
    return detection, count


def two_step_estimate(capture, refs, params, cfg):
    '''Half-rate coarse search on the first period, then full-rate refinement on the second

    A refinement window with no candidate inside the full-rate buffer gives an
    unlocked detection, as does a refined peak below the lock ratio.

    :param DualRateCapture capture: dual-rate capture
    :param refs: the three ReferencePss
    :param SearchParams params: refinement settings
    :param FrameConfig cfg: numerology
    :return: (PssDetection, {stage: OpCount}, {stage: milliseconds})
    '''
    t0 = time.perf_counter()
    tau_h, n_id2, coarse_peak, coarse = _coarse_scan(capture.half, refs, cfg)
    t1 = time.perf_counter()
    ref = next(ref for ref in refs if ref.seq_index == n_id2)
    if len(capture.full) < cfg.symbol_len:
        raise BufferTooShortError('refinement needs at least %d full-rate samples, got %d'
                                  % (cfg.symbol_len, len(capture.full)))
    try:
        detection, fine = refine(capture.full, ref, tau_h, params, cfg)
    except BufferTooShortError as e:
        # coarse peak too close to the period end for any candidate to fit
        logging.info('PSS lost: %s', e)
        t2 = time.perf_counter()
        detection = PssDetection(min(2 * tau_h, cfg.n_ssb - 1), n_id2, 0.0, coarse_tau_h=tau_h, locked=False)
        return (detection,
                {'coarse': coarse, 'refine': OpCount('refine')},
                {'pss_init': 1000.0 * (t1 - t0), 'pss_refine': 1000.0 * (t2 - t1)})
    t2 = time.perf_counter()
    detection.locked = detection.peak_metric >= params.lock_ratio * coarse_peak
    if not detection.locked:
        logging.info('PSS lost: refined peak %.4f below %.2f x coarse peak %.4f (window [%d, %d])',
                     detection.peak_metric, params.lock_ratio, coarse_peak, *detection.window)
    return (detection,
            {'coarse': coarse, 'refine': fine},
            {'pss_init': 1000.0 * (t1 - t0), 'pss_refine': 1000.0 * (t2 - t1)})
