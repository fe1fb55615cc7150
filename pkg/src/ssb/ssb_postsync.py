#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
import functools
import logging

import numpy as np

from ssb_common import BufferTooShortError
from ssb_common import N_ID1_COUNT
from ssb_common import SS_FIRST
from ssb_common import SS_LEN
from ssb_common import SSB_SUBCARRIERS
from ssb_common import SSB_SYMBOLS
from ssb_waveform import crc24c
from ssb_waveform import dmrs_sequence
from ssb_waveform import gen_pss_sequence
from ssb_waveform import gen_sss_sequence
from ssb_waveform import gold_sequence
from ssb_waveform import PBCH_CODEWORD_BITS
from ssb_waveform import pbch_layout
from ssb_waveform import PBCH_PAYLOAD_BITS

TIE_RTOL = 1e-9


@dataclasses.dataclass
class SsbObservation(object):
    symbols: np.ndarray
    cfo_estimate_hz: float
    snr_estimate_db: float


@dataclasses.dataclass
class OfdmGeometry(object):
    '''OFDM dimensions of the SSB at the rate of a buffer

    :param int decim: 1 at the full rate, 2 at the half rate
    :param np.ndarray bins: FFT bins (natural order) of the 240 SSB subcarriers
    '''
    decim: int
    n_fft: int
    cp_len: int
    sample_rate_hz: float
    bins: np.ndarray

    @property
    def symbol_len(self):
        return self.cp_len + self.n_fft

    @property
    def ssb_len(self):
        return SSB_SYMBOLS * self.symbol_len


def ofdm_geometry(r, cfg):
    '''Geometry at the rate of r, which must be the full or the half rate of cfg

    At the half rate the whole 240-subcarrier SSB must fit the n_fft/2 grid.

    :rtype: OfdmGeometry
    '''
    if np.isclose(r.rate_hz, cfg.sample_rate_hz / 2):
        decim = 2
    else:
        r.check_rate(cfg)
        decim = 1
    n_fft = cfg.n_fft // decim
    relative = np.arange(SSB_SUBCARRIERS) + cfg.ssb_first_subcarrier - cfg.n_fft // 2
    if relative.min() < -(n_fft // 2) or relative.max() >= n_fft // 2:
        raise ValueError('the SSB does not fit a %d-point grid (n_fft=%d, rate %.1f Hz)'
                         % (n_fft, cfg.n_fft, r.rate_hz))
    return OfdmGeometry(decim, n_fft, cfg.cp_len // decim, cfg.sample_rate_hz / decim, relative % n_fft)


def _ssb_start(r, tau_ssb, cfg, geo):
    '''Buffer-local index of the SSB starting at period position tau_ssb'''
    local = ((tau_ssb - r.start_index_full_rate) % cfg.n_ssb) // geo.decim
    if local + geo.ssb_len > len(r):
        raise BufferTooShortError('SSB at tau=%d needs samples up to %d, buffer holds %d'
                                  % (tau_ssb, local + geo.ssb_len, len(r)))
    return local


def fft_backoff(cfg, decim=1):
    '''Samples (at the rate cfg.sample_rate_hz / decim) the DFT window is moved into the cyclic prefix'''
    return (cfg.cp_len // decim) // 4


def estimate_cfo(r, tau_ssb, cfg):
    '''Fractional CFO from the CP/tail phase averaged over the 4 SSB symbols

    Unambiguous for |cfo| < scs/2.

    :param IqBuffer r: full-rate or half-rate samples holding the SSB
    :param int tau_ssb: SSB offset within the period (full-rate samples)
    :param FrameConfig cfg: numerology
    :return: CFO estimate in Hz
    '''
    geo = ofdm_geometry(r, cfg)
    local = _ssb_start(r, tau_ssb, cfg, geo)
    x = r.samples
    acc = 0j
    for s in range(SSB_SYMBOLS):
        base = local + s * geo.symbol_len
        cp = x[base:base + geo.cp_len]
        tail = x[base + geo.n_fft:base + geo.n_fft + geo.cp_len]
        acc += np.vdot(cp, tail)
    return float(np.angle(acc) * cfg.scs_hz / (2 * np.pi))


def _snr_estimate_db(symbol0):
    occupied = np.zeros(SSB_SUBCARRIERS, dtype=bool)
    occupied[SS_FIRST:SS_FIRST + SS_LEN] = True
    noise = np.mean(np.abs(symbol0[~occupied]) ** 2)
    total = np.mean(np.abs(symbol0[occupied]) ** 2)
    if noise <= 0.0:
        return float('inf') if total > 0.0 else float('-inf')
    return float(10.0 * np.log10(max(total - noise, 1e-30) / noise))


def extract_ssb_symbols(r, tau_ssb, cfo_hz, cfg):
    '''Derotate, strip the CPs and DFT the 4 SSB symbols

    Works on full-rate buffers and on half-rate buffers (n_fft/2-point DFT).
    The DFT window starts fft_backoff samples inside the CP and the
    resulting phase ramp is removed, so small timing errors in either
    direction only rotate subcarriers.

    :rtype: SsbObservation
    '''
    geo = ofdm_geometry(r, cfg)
    local = _ssb_start(r, tau_ssb, cfg, geo)
    backoff = fft_backoff(cfg, geo.decim)
    idx = (local + geo.cp_len - backoff
           + np.arange(SSB_SYMBOLS)[:, None] * geo.symbol_len + np.arange(geo.n_fft)[None, :])
    seg = r.samples[idx]
    if cfo_hz != 0.0:
        n = r.start_index_full_rate + geo.decim * idx
        seg = seg * np.exp(-2j * np.pi * cfo_hz * n / cfg.sample_rate_hz)
    spectrum = np.fft.fft(seg, axis=1) * (np.sqrt(SSB_SUBCARRIERS) / geo.n_fft)
    ramp = np.exp(2j * np.pi * geo.bins * backoff / geo.n_fft)
    symbols = spectrum[:, geo.bins] * ramp[None, :]
    return SsbObservation(symbols, float(cfo_hz), _snr_estimate_db(symbols[0]))


@functools.lru_cache(maxsize=None)
def _sss_candidates(n_id2):
    return np.stack([gen_sss_sequence(n_id1, n_id2) for n_id1 in range(N_ID1_COUNT)])


def detect_sss(obs, n_id2):
    '''Coherent SSS detection equalized with the PSS-symbol channel estimate

    :param SsbObservation obs: extracted SSB
    :param int n_id2: detected sector
    :return: (n_id1, metric)
    '''
    ss = slice(SS_FIRST, SS_FIRST + SS_LEN)
    # BPSK reference, so the LS estimate is a multiplication
    h = obs.symbols[0, ss] * gen_pss_sequence(n_id2)
    z = obs.symbols[2, ss] * h.conj()
    metrics = np.abs(_sss_candidates(n_id2) @ z)
    peak = metrics.max()
    n_id1 = int(np.nonzero(metrics >= peak * (1.0 - TIE_RTOL))[0][0])
    return n_id1, float(metrics[n_id1])


def _interp_complex(x, xp, fp):
    return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)


def decode_pbch(obs, cell_id):
    '''Decode the PBCH proxy: DMRS channel estimate, ZF, descrambling, repetition combining, CRC

    :param SsbObservation obs: extracted SSB
    :param CellId cell_id: cell identity used for DMRS and scrambling
    :return: (32 payload bits, crc_ok)
    '''
    data_mask, dmrs_mask = pbch_layout(cell_id.n_id)
    pilots = dmrs_sequence(cell_id.n_id, int(dmrs_mask.sum()))
    channel = np.zeros(obs.symbols.shape, dtype=np.complex128)
    used = 0
    for s in range(1, SSB_SYMBOLS):
        k_dmrs = np.nonzero(dmrs_mask[s])[0]
        ls = obs.symbols[s, k_dmrs] * pilots[used:used + len(k_dmrs)].conj()
        used += len(k_dmrs)
        k_data = np.nonzero(data_mask[s])[0]
        channel[s, k_data] = _interp_complex(k_data, k_dmrs, ls)

    h = channel[data_mask]
    y = obs.symbols[data_mask]
    power = np.abs(h) ** 2
    eq = np.where(power > 1e-12, y * h.conj() / np.maximum(power, 1e-12), 0.0)

    soft = np.empty(2 * len(eq))
    soft[0::2] = eq.real
    soft[1::2] = eq.imag
    soft *= 1.0 - 2.0 * gold_sequence(len(soft), cell_id.n_id)
    combined = np.bincount(np.arange(len(soft)) % PBCH_CODEWORD_BITS, weights=soft,
                           minlength=PBCH_CODEWORD_BITS)
    bits = (combined < 0).astype(np.int8)
    payload = bits[:PBCH_PAYLOAD_BITS]
    crc_ok = bool(np.array_equal(crc24c(payload), bits[PBCH_PAYLOAD_BITS:]))
    logging.debug('PBCH decode for cell %d: crc_ok=%s', cell_id.n_id, crc_ok)
    return payload, crc_ok
