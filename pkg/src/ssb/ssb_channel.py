#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
import functools
import json
import logging
import math
import os
from typing import Tuple

import numpy as np
from scipy import signal

from ssb_common import BufferTooShortError
from ssb_common import IqBuffer
from ssb_common import SSB_SUBCARRIERS

SPEED_OF_LIGHT = 299792458.0
N_OSCILLATORS = 16
HALFBAND_TAPS = 63
# stream ids of the per-trial generators
STREAM_DRAW = 0
STREAM_FADING = 1
STREAM_NOISE = 2

# TDL-B: normalized delay, power (dB)
TDL_B_PROFILE = (
    (0.0000, 0.0), (0.1072, -2.2), (0.2155, -4.0), (0.2095, -3.2), (0.2870, -9.8),
    (0.2986, -1.2), (0.3752, -3.4), (0.5055, -5.2), (0.3681, -7.6), (0.3697, -3.0),
    (0.5700, -8.9), (0.5283, -9.0), (1.1021, -4.8), (1.2756, -5.7), (1.5474, -7.5),
    (1.7842, -1.9), (2.0169, -7.6), (2.8294, -12.2), (3.0219, -9.8), (3.6187, -11.4),
    (4.1067, -14.9), (4.2790, -9.2), (4.7834, -11.3),
)


class IqFormatError(IOError):
    '''Raised when an IQ file or its sidecar is malformed or truncated'''
    pass


def make_rng(seed, stream):
    '''Counter-based generator keyed by (seed, stream)'''
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclasses.dataclass(frozen=True)
class ChannelSpec(object):
    '''Seeded impairment description

    :param float snr_db: SNR per resource element over the SSB band, ``inf`` disables noise
    :param float cfo_hz: carrier frequency offset
    :param int timing_offset: integer delay in full-rate samples (the true SSB offset)
    :param tuple taps: (delay_s, avg_power_db) pairs
    :param float doppler_hz: maximum Doppler shift, 0 gives static taps
    :param float drift_samples_per_period: extra delay of the second SSB period
    :param int seed: seed of the fading and noise streams
    '''
    snr_db: float = float('inf')
    cfo_hz: float = 0.0
    timing_offset: int = 0
    taps: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    doppler_hz: float = 0.0
    drift_samples_per_period: float = 0.0
    seed: int = 0

    def __post_init__(self):
        taps = tuple((float(d), float(p)) for d, p in self.taps)
        object.__setattr__(self, 'taps', taps)
        if len(taps) == 0:
            raise ValueError('taps must not be empty')
        for delay, power in taps:
            if delay < 0:
                raise ValueError('tap delays must be >= 0 (got %r)' % delay)
            if not math.isfinite(power):
                raise ValueError('tap powers must be finite (got %r)' % power)
        if math.isnan(self.snr_db):
            raise ValueError('snr_db must not be NaN')
        if self.doppler_hz < 0 or not math.isfinite(self.doppler_hz):
            raise ValueError('doppler_hz must be finite and >= 0 (got %r)' % self.doppler_hz)
        if not math.isfinite(self.cfo_hz):
            raise ValueError('cfo_hz must be finite (got %r)' % self.cfo_hz)
        if not math.isfinite(self.drift_samples_per_period):
            raise ValueError('drift_samples_per_period must be finite (got %r)' % self.drift_samples_per_period)
        if self.timing_offset < 0:
            raise ValueError('timing_offset must be >= 0 (got %r)' % self.timing_offset)

    def validate(self, cfg):
        if not 0 <= self.timing_offset < cfg.n_ssb:
            raise ValueError('timing_offset must be in [0, %d) (got %r)' % (cfg.n_ssb, self.timing_offset))

    def noise_variance(self, cfg):
        '''Complex noise variance per full-rate sample'''
        if self.snr_db == float('inf'):
            return 0.0
        return cfg.n_fft / SSB_SUBCARRIERS * 10.0 ** (-self.snr_db / 10.0)


def tdl_b_taps(delay_spread_s):
    '''TDL-B taps scaled to a delay spread, normalized to unit total power'''
    delays = np.array([d for d, _ in TDL_B_PROFILE]) * delay_spread_s
    powers = 10.0 ** (np.array([p for _, p in TDL_B_PROFILE]) / 10.0)
    powers_db = 10.0 * np.log10(powers / powers.sum())
    return tuple(zip(delays.tolist(), powers_db.tolist()))


def doppler_from_speed(speed_kmh, carrier_hz):
    return speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


# * -------------------- impairments -------------------- *
def _shift(x, s):
    '''Delay x by s samples (advance when negative) keeping its length, zeros shifted in'''
    y = np.zeros_like(x)
    n = len(x)
    if s >= n or -s >= n:
        return y
    if s >= 0:
        y[s:] = x[:n - s]
    else:
        y[:n + s] = x[-s:]
    return y


def fractional_delay(x, delay):
    '''Delay by a real number of samples with 4-tap Lagrange interpolation'''
    whole = int(math.floor(delay))
    mu = delay - whole
    if mu == 0.0:
        return _shift(x, whole)
    nodes = (-1, 0, 1, 2)
    y = np.zeros_like(x)
    for k in nodes:
        weight = np.prod([(mu - j) / (k - j) for j in nodes if j != k])
        y += weight * _shift(x, whole + k)
    return y


def _gain_stride(doppler_hz, sample_rate_hz):
    # keep the phase step between grid points below ~0.06 rad
    return int(max(1, min(64, 0.01 * sample_rate_hz / doppler_hz)))


def fading_gains(n_samples, powers_db, doppler_hz, sample_rate_hz, rng):
    '''Complex tap gains of shape (n_taps, n_samples)

    Each tap is a sum of 16 complex sinusoids with quarter-circle arrival
    angles, alternating Doppler sign and random phases. Gains are evaluated
    on a coarse grid and linearly interpolated.
    '''
    powers = 10.0 ** (np.asarray(powers_db, dtype=np.float64) / 10.0)
    if doppler_hz == 0.0:
        return np.repeat(np.sqrt(powers)[:, None], n_samples, axis=1).astype(np.complex128)
    stride = _gain_stride(doppler_hz, sample_rate_hz)
    grid = np.arange(0, n_samples + stride, stride)
    t = grid / sample_rate_hz
    m = np.arange(1, N_OSCILLATORS + 1)
    sign = np.where(m % 2 == 0, 1.0, -1.0)
    gains = np.empty((len(powers), n_samples), dtype=np.complex128)
    for l, power in enumerate(powers):
        theta = rng.uniform(-np.pi, np.pi)
        phases = rng.uniform(-np.pi, np.pi, N_OSCILLATORS)
        alpha = (2 * np.pi * m - np.pi + theta) / (4 * N_OSCILLATORS)
        freqs = sign * doppler_hz * np.cos(alpha)
        coarse = np.exp(1j * (2 * np.pi * np.outer(t, freqs) + phases)).sum(axis=1)
        coarse *= np.sqrt(power / N_OSCILLATORS)
        n = np.arange(n_samples)
        gains[l] = np.interp(n, grid, coarse.real) + 1j * np.interp(n, grid, coarse.imag)
    return gains


def apply_channel(tx, spec, cfg):
    '''Impair a full-rate waveform

    Order: integer timing offset, drift of the second period, TDL fading,
    CFO on the absolute sample index, then AWGN.

    :param IqBuffer tx: full-rate waveform
    :param ChannelSpec spec: impairments
    :param FrameConfig cfg: numerology
    :rtype: IqBuffer
    '''
    tx.check_rate(cfg)
    spec.validate(cfg)
    fs = cfg.sample_rate_hz
    y = _shift(tx.samples, spec.timing_offset)
    if spec.drift_samples_per_period != 0.0 and len(y) > cfg.n_ssb:
        y[cfg.n_ssb:] = fractional_delay(y[cfg.n_ssb:], spec.drift_samples_per_period)

    delays = [int(round(d * fs)) for d, _ in spec.taps]
    powers_db = [p for _, p in spec.taps]
    if not (len(delays) == 1 and delays[0] == 0 and powers_db[0] == 0.0 and spec.doppler_hz == 0.0):
        gains = fading_gains(len(y), powers_db, spec.doppler_hz, fs, make_rng(spec.seed, STREAM_FADING))
        faded = np.zeros_like(y)
        for l, d in enumerate(delays):
            faded += gains[l] * _shift(y, d)
        y = faded

    if spec.cfo_hz != 0.0:
        n = tx.start_index_full_rate + np.arange(len(y))
        y = y * np.exp(2j * np.pi * spec.cfo_hz * n / fs)

    sigma2 = spec.noise_variance(cfg)
    if sigma2 > 0.0:
        rng = make_rng(spec.seed, STREAM_NOISE)
        y = y + np.sqrt(sigma2 / 2.0) * (rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y)))
    logging.debug('channel: offset=%d snr=%s cfo=%.1f taps=%d doppler=%.1f drift=%.2f',
                  spec.timing_offset, spec.snr_db, spec.cfo_hz, len(spec.taps), spec.doppler_hz,
                  spec.drift_samples_per_period)
    return IqBuffer(y, fs, tx.start_index_full_rate)


# * -------------------- dual-rate front end -------------------- *
@dataclasses.dataclass
class DualRateCapture(object):
    half: IqBuffer
    full: IqBuffer
    discard_gap: int


@functools.lru_cache(maxsize=None)
def halfband_taps():
    '''63-tap linear-phase half-band low-pass, Kaiser window (beta 8)'''
    return signal.firwin(HALFBAND_TAPS, 0.5, window=('kaiser', 8.0))


def decimate_by_two(x):
    '''Half-band filter with the group delay removed, then keep even samples'''
    h = halfband_taps()
    delay = (len(h) - 1) // 2
    y = signal.convolve(x, h, mode='full')[delay:delay + len(x)]
    return y[::2]


def dual_rate_frontend(rx_full, cfg, discard_gap=0):
    '''Deliver the first period at half rate and the second at full rate

    The half-rate window also carries an n_fft/2 tail so that every lag of
    the first period can be correlated.

    :param IqBuffer rx_full: at least two SSB periods at the full rate
    :param FrameConfig cfg: numerology
    :param int discard_gap: full-rate samples dropped at the rate switch
    :rtype: DualRateCapture
    '''
    rx_full.check_rate(cfg)
    n_ssb = cfg.n_ssb
    if discard_gap < 0 or discard_gap >= n_ssb - cfg.ssb_len:
        raise ValueError('discard_gap must be in [0, %d) (got %r)' % (n_ssb - cfg.ssb_len, discard_gap))
    if len(rx_full) < 2 * n_ssb:
        raise BufferTooShortError('dual-rate capture needs %d samples (got %d)' % (2 * n_ssb, len(rx_full)))
    if rx_full.start_index_full_rate % 2 != 0:
        raise ValueError('start_index_full_rate must be even (got %d)' % rx_full.start_index_full_rate)
    x = rx_full.samples
    half_len = n_ssb + cfg.n_fft
    # extra samples so the filter sees real data at the window end
    seg = x[:half_len + HALFBAND_TAPS]
    half = decimate_by_two(seg)[:half_len // 2]
    full = x[n_ssb + discard_gap:2 * n_ssb]
    start = rx_full.start_index_full_rate
    return DualRateCapture(
        IqBuffer(half, cfg.sample_rate_hz / 2, start),
        IqBuffer(full, cfg.sample_rate_hz, start + n_ssb + discard_gap),
        discard_gap)


# * -------------------- IQ file I/O -------------------- *
def write_iq(path, buf, description='', **meta):
    '''Write interleaved little-endian float32 I/Q with a JSON sidecar ``<path>.json``'''
    data = np.empty(2 * len(buf), dtype='<f4')
    data[0::2] = buf.samples.real
    data[1::2] = buf.samples.imag
    info = dict(meta)
    info.update(rate_hz=buf.rate_hz, start_index_full_rate=buf.start_index_full_rate,
                description=description, n_samples=len(buf))
    try:
        data.tofile(path)
        with open(path + '.json', 'w') as f:
            json.dump(info, f, indent=4, sort_keys=True)
    except (IOError, OSError) as e:
        raise IOError('cannot write IQ file %s: %s' % (path, e))
    logging.info('wrote %d samples to %s' % (len(buf), path))


def read_iq(path):
    '''Read an IQ file written by write_iq

    :return: (IqBuffer, sidecar dict)
    '''
    try:
        with open(path + '.json') as f:
            meta = json.load(f)
    except (IOError, OSError) as e:
        raise IOError('cannot read sidecar of %s: %s' % (path, e))
    except ValueError as e:
        raise IqFormatError('malformed sidecar %s.json: %s' % (path, e))
    for key in ('rate_hz', 'start_index_full_rate'):
        if key not in meta:
            raise IqFormatError('sidecar %s.json lacks "%s"' % (path, key))
    size = os.path.getsize(path)
    expected = meta.get('n_samples')
    if size % 8 != 0 or (expected is not None and size != 8 * expected):
        raise IqFormatError('IQ file %s holds %d bytes, expected %s (%s samples)'
                            % (path, size, 8 * expected if expected is not None else 'a multiple of 8', expected))
    if size == 0:
        raise IqFormatError('IQ file %s is empty' % path)
    data = np.fromfile(path, dtype='<f4')
    samples = data[0::2].astype(np.float64) + 1j * data[1::2].astype(np.float64)
    return IqBuffer(samples, float(meta['rate_hz']), int(meta['start_index_full_rate'])), meta
