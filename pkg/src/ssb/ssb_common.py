#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
from typing import Optional

import numpy as np

# SSB grid geometry (subcarriers x OFDM symbols)
SSB_SUBCARRIERS = 240
SSB_SYMBOLS = 4
# PSS/SSS occupy SSB subcarriers [SS_FIRST, SS_FIRST + SS_LEN)
SS_FIRST = 56
SS_LEN = 127
N_ID1_COUNT = 336
N_ID2_COUNT = 3


class BufferTooShortError(ValueError):
    '''Raised when a buffer cannot hold the samples a search or an extraction needs'''
    pass


def _is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclasses.dataclass(frozen=True)
class FrameConfig(object):
    '''Numerology of the simulated carrier

    The sampling rate and the period length are derived from the FFT size,
    the subcarrier spacing and the SSB periodicity.
    '''
    scs_hz: float = 15000.0
    n_fft: int = 512
    cp_len: int = 36
    ssb_period_s: float = 0.020
    ssb_first_subcarrier: Optional[int] = None

    def __post_init__(self):
        if not _is_power_of_two(self.n_fft) or self.n_fft < 256:
            raise ValueError('n_fft must be a power of two >= 256 (got %r)' % (self.n_fft,))
        if not 0 < self.cp_len < self.n_fft:
            raise ValueError('cp_len must be in (0, n_fft) (got %r)' % (self.cp_len,))
        if self.cp_len % 2 != 0:
            raise ValueError('cp_len must be even (got %r)' % (self.cp_len,))
        if not self.scs_hz > 0:
            raise ValueError('scs_hz must be positive (got %r)' % (self.scs_hz,))
        if not self.ssb_period_s > 0:
            raise ValueError('ssb_period_s must be positive (got %r)' % (self.ssb_period_s,))
        if self.ssb_first_subcarrier is None:
            # SSB subcarrier 120 sits on DC
            object.__setattr__(self, 'ssb_first_subcarrier', self.n_fft // 2 - SSB_SUBCARRIERS // 2)
        first = self.ssb_first_subcarrier
        if first < 0 or first + SSB_SUBCARRIERS > self.n_fft:
            raise ValueError('ssb_first_subcarrier=%r puts the SSB outside the FFT grid' % (first,))
        pss_bins = self.pss_relative_bins
        if pss_bins.min() < -self.n_fft // 4 or pss_bins.max() >= self.n_fft // 4:
            raise ValueError('ssb_first_subcarrier=%r puts the PSS outside the half-rate band' % (first,))
        if self.n_ssb % 2 != 0:
            raise ValueError('ssb_period_s * sample_rate_hz must be an even number of samples (got %d)'
                             % self.n_ssb)
        if self.n_ssb < self.ssb_len + self.n_fft:
            raise ValueError('ssb_period_s=%r is too short to hold one SSB (%d samples)'
                             % (self.ssb_period_s, self.ssb_len))

    @property
    def sample_rate_hz(self):
        return self.n_fft * self.scs_hz

    @property
    def n_ssb(self):
        return int(round(self.ssb_period_s * self.sample_rate_hz))

    @property
    def symbol_len(self):
        return self.cp_len + self.n_fft

    @property
    def ssb_len(self):
        return SSB_SYMBOLS * self.symbol_len

    @property
    def ssb_bins(self):
        '''FFT bins (natural order) of the 240 SSB subcarriers'''
        return (np.arange(SSB_SUBCARRIERS) + self.ssb_first_subcarrier - self.n_fft // 2) % self.n_fft

    @property
    def pss_relative_bins(self):
        '''Signed frequency index of the 127 PSS subcarriers relative to DC'''
        return np.arange(SS_LEN) + self.ssb_first_subcarrier + SS_FIRST - self.n_fft // 2


@dataclasses.dataclass(frozen=True)
class CellId(object):
    n_id1: int
    n_id2: int

    def __post_init__(self):
        if not 0 <= self.n_id1 < N_ID1_COUNT:
            raise ValueError('n_id1 must be in [0, %d] (got %r)' % (N_ID1_COUNT - 1, self.n_id1))
        if not 0 <= self.n_id2 < N_ID2_COUNT:
            raise ValueError('n_id2 must be in [0, %d] (got %r)' % (N_ID2_COUNT - 1, self.n_id2))

    @property
    def n_id(self):
        return N_ID2_COUNT * self.n_id1 + self.n_id2

    @classmethod
    def from_n_id(cls, n_id):
        n_id = int(n_id)
        if not 0 <= n_id < N_ID1_COUNT * N_ID2_COUNT:
            raise ValueError('cell id must be in [0, %d] (got %r)' % (N_ID1_COUNT * N_ID2_COUNT - 1, n_id))
        return cls(n_id // N_ID2_COUNT, n_id % N_ID2_COUNT)


@dataclasses.dataclass
class IqBuffer(object):
    '''Complex baseband samples with their rate and time origin

    :param np.ndarray samples: 1-D complex samples
    :param float rate_hz: sampling rate of ``samples``
    :param int start_index_full_rate: index of ``samples[0]`` in full-rate sample units
    '''
    samples: np.ndarray
    rate_hz: float
    start_index_full_rate: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or len(self.samples) == 0:
            raise ValueError('samples must be a non-empty 1-D array (got shape %r)' % (self.samples.shape,))
        if self.start_index_full_rate < 0:
            raise ValueError('start_index_full_rate must be >= 0 (got %r)' % (self.start_index_full_rate,))
        if not self.rate_hz > 0:
            raise ValueError('rate_hz must be positive (got %r)' % (self.rate_hz,))

    def __len__(self):
        return len(self.samples)

    def check_rate(self, cfg, half=False):
        expected = cfg.sample_rate_hz / 2 if half else cfg.sample_rate_hz
        if not np.isclose(self.rate_hz, expected):
            raise ValueError('buffer rate %.1f Hz does not match the expected %.1f Hz' % (self.rate_hz, expected))
