#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
import functools
import logging

import numpy as np

from ssb_common import CellId
from ssb_common import IqBuffer
from ssb_common import N_ID1_COUNT
from ssb_common import N_ID2_COUNT
from ssb_common import SS_FIRST
from ssb_common import SS_LEN
from ssb_common import SSB_SUBCARRIERS
from ssb_common import SSB_SYMBOLS

PBCH_PAYLOAD_BITS = 32
PBCH_CRC_BITS = 24
PBCH_CODEWORD_BITS = PBCH_PAYLOAD_BITS + PBCH_CRC_BITS
# CRC-24C generator without the leading x^24 term
CRC24C_POLY = 0xB2B117
GOLD_NC = 1600


# * -------------------- sequence generators -------------------- *
def _m_sequence(feedback, seed, length):
    '''Binary m-sequence x(m+7) = sum(x(m+k) for k in feedback) mod 2'''
    x = np.zeros(length, dtype=np.int8)
    x[:len(seed)] = seed
    for m in range(length - 7):
        x[m + 7] = x[[m + k for k in feedback]].sum() % 2
    return x


@functools.lru_cache(maxsize=None)
def _pss_m_sequence():
    return _m_sequence((4, 0), [0, 1, 1, 0, 1, 1, 1], SS_LEN)


@functools.lru_cache(maxsize=None)
def _sss_m_sequences():
    x0 = _m_sequence((4, 0), [1, 0, 0, 0, 0, 0, 0], SS_LEN)
    x1 = _m_sequence((1, 0), [1, 0, 0, 0, 0, 0, 0], SS_LEN)
    return x0, x1


def gen_pss_sequence(n_id2):
    '''Generate the BPSK primary synchronization sequence of a sector

    :param int n_id2: sector identity in [0, 2]
    :return: 127 values in {+1, -1}
    :rtype: np.ndarray
    '''
    if n_id2 not in range(N_ID2_COUNT):
        raise ValueError('n_id2 must be in [0, %d] (got %r)' % (N_ID2_COUNT - 1, n_id2))
    x = _pss_m_sequence()
    n = np.arange(SS_LEN)
    return 1.0 - 2.0 * x[(n + 43 * n_id2) % SS_LEN]


def gen_sss_sequence(n_id1, n_id2):
    '''Generate the BPSK secondary synchronization sequence of a cell

    :param int n_id1: cell group identity in [0, 335]
    :param int n_id2: sector identity in [0, 2]
    :return: 127 values in {+1, -1}
    :rtype: np.ndarray
    '''
    if n_id1 not in range(N_ID1_COUNT):
        raise ValueError('n_id1 must be in [0, %d] (got %r)' % (N_ID1_COUNT - 1, n_id1))
    if n_id2 not in range(N_ID2_COUNT):
        raise ValueError('n_id2 must be in [0, %d] (got %r)' % (N_ID2_COUNT - 1, n_id2))
    x0, x1 = _sss_m_sequences()
    m0 = 15 * (n_id1 // 112) + 5 * n_id2
    m1 = n_id1 % 112
    n = np.arange(SS_LEN)
    return (1.0 - 2.0 * x0[(n + m0) % SS_LEN]) * (1.0 - 2.0 * x1[(n + m1) % SS_LEN])


@functools.lru_cache(maxsize=4096)
def gold_sequence(length, c_init):
    '''Length-31 Gold pseudo-random bits with the usual 1600-sample warm-up

    The returned array is read-only since it is shared through the cache.
    '''
    total = length + GOLD_NC
    x1 = np.zeros(total + 31, dtype=np.int8)
    x2 = np.zeros(total + 31, dtype=np.int8)
    x1[0] = 1
    x2[:31] = [(c_init >> k) & 1 for k in range(31)]
    for n in range(total):
        x1[n + 31] = (x1[n + 3] + x1[n]) % 2
        x2[n + 31] = (x2[n + 3] + x2[n + 2] + x2[n + 1] + x2[n]) % 2
    c = (x1[GOLD_NC:total] + x2[GOLD_NC:total]) % 2
    c.flags.writeable = False
    return c


def crc24c(bits):
    '''CRC-24C parity bits of a bit vector, register preset to all ones

    :param bits: iterable of 0/1
    :return: 24 parity bits, most significant first
    :rtype: np.ndarray
    '''
    reg = 0xFFFFFF
    for b in np.asarray(bits, dtype=np.int64):
        fb = ((reg >> 23) & 1) ^ int(b)
        reg = (reg << 1) & 0xFFFFFF
        if fb:
            reg ^= CRC24C_POLY
    return np.array([(reg >> (23 - k)) & 1 for k in range(PBCH_CRC_BITS)], dtype=np.int8)


def qpsk_modulate(bits):
    bits = np.asarray(bits, dtype=np.float64)
    return ((1.0 - 2.0 * bits[0::2]) + 1j * (1.0 - 2.0 * bits[1::2])) / np.sqrt(2.0)


# * -------------------- PBCH proxy -------------------- *
@functools.lru_cache(maxsize=None)
def pbch_layout(n_id):
    '''Boolean masks of the PBCH data cells and DMRS cells on the 4 x 240 grid

    Symbols 1 and 3 are fully occupied, symbol 2 outside the SSS band.
    DMRS sits on every 4th subcarrier with shift n_id mod 4.
    '''
    pbch = np.zeros((SSB_SYMBOLS, SSB_SUBCARRIERS), dtype=bool)
    pbch[1, :] = True
    pbch[3, :] = True
    pbch[2, :SS_FIRST] = True
    pbch[2, SS_FIRST + SS_LEN:] = True
    dmrs = pbch & ((np.arange(SSB_SUBCARRIERS) % 4) == (n_id % 4))[None, :]
    data = pbch & ~dmrs
    data.flags.writeable = False
    dmrs.flags.writeable = False
    return data, dmrs


def dmrs_sequence(n_id, length):
    c_init = 2 ** 11 * (n_id // 4 + 1) + 2 ** 6 + n_id % 4
    return qpsk_modulate(gold_sequence(2 * length, c_init))


def encode_pbch_codeword(payload_bits):
    '''Append CRC-24C to a 32-bit payload

    :param payload_bits: 32 bits
    :return: 56-bit codeword
    '''
    payload_bits = np.asarray(payload_bits, dtype=np.int8)
    if payload_bits.shape != (PBCH_PAYLOAD_BITS,):
        raise ValueError('PBCH payload must have %d bits (got shape %r)'
                         % (PBCH_PAYLOAD_BITS, payload_bits.shape))
    if np.any((payload_bits != 0) & (payload_bits != 1)):
        raise ValueError('PBCH payload must contain only 0/1 values')
    return np.concatenate([payload_bits, crc24c(payload_bits)])


def modulate_pbch_codeword(codeword, cell_id):
    '''Repeat, scramble and QPSK-map a codeword over the PBCH data cells of a cell'''
    data_mask, dmrs_mask = pbch_layout(cell_id.n_id)
    n_bits = 2 * int(data_mask.sum())
    repeated = np.asarray(codeword, dtype=np.int8)[np.arange(n_bits) % len(codeword)]
    scrambled = repeated ^ gold_sequence(n_bits, cell_id.n_id)
    return qpsk_modulate(scrambled), dmrs_sequence(cell_id.n_id, int(dmrs_mask.sum()))


def gen_pbch_symbols(cell_id, payload_bits=None, seed=0):
    '''Generate the PBCH data and DMRS symbols of a cell

    :param CellId cell_id: cell identity
    :param payload_bits: 32 payload bits; drawn from ``seed`` when None
    :param int seed: seed of the payload draw
    :return: (data symbols, DMRS symbols), both unit-power QPSK
    '''
    if payload_bits is None:
        payload_bits = np.random.default_rng(seed).integers(0, 2, PBCH_PAYLOAD_BITS)
    return modulate_pbch_codeword(encode_pbch_codeword(payload_bits), cell_id)


# * -------------------- grid and OFDM -------------------- *
@dataclasses.dataclass
class SsbGrid(object):
    symbols: np.ndarray
    occupied_mask: np.ndarray


def map_ssb_grid(cell_id, pbch):
    '''Map PSS, SSS and PBCH onto the 4 x 240 SSB resource grid

    :param CellId cell_id: cell identity
    :param tuple pbch: (data symbols, DMRS symbols) from gen_pbch_symbols
    :rtype: SsbGrid
    '''
    data, dmrs = pbch
    data_mask, dmrs_mask = pbch_layout(cell_id.n_id)
    if len(data) != data_mask.sum() or len(dmrs) != dmrs_mask.sum():
        raise ValueError('PBCH vectors of length (%d, %d) do not fit the grid of cell %d (%d, %d)'
                         % (len(data), len(dmrs), cell_id.n_id, data_mask.sum(), dmrs_mask.sum()))
    symbols = np.zeros((SSB_SYMBOLS, SSB_SUBCARRIERS), dtype=np.complex128)
    ss = slice(SS_FIRST, SS_FIRST + SS_LEN)
    symbols[0, ss] = gen_pss_sequence(cell_id.n_id2)
    symbols[2, ss] = gen_sss_sequence(cell_id.n_id1, cell_id.n_id2)
    # boolean indexing walks the grid in row-major order
    symbols[data_mask] = data
    symbols[dmrs_mask] = dmrs
    occupied = data_mask | dmrs_mask
    occupied[0, ss] = True
    occupied[2, ss] = True
    return SsbGrid(symbols, occupied)


def ofdm_modulate(grid, cfg):
    '''OFDM-modulate an SSB grid into 4 CP-prefixed symbols at the full rate

    A grid of unit-power cells yields unit mean power over the occupied band.

    :param SsbGrid grid: SSB resource grid
    :param FrameConfig cfg: numerology
    :rtype: IqBuffer
    '''
    spectrum = np.zeros((SSB_SYMBOLS, cfg.n_fft), dtype=np.complex128)
    spectrum[:, cfg.ssb_bins] = grid.symbols
    body = np.fft.ifft(spectrum, axis=1) * (cfg.n_fft / np.sqrt(SSB_SUBCARRIERS))
    with_cp = np.concatenate([body[:, -cfg.cp_len:], body], axis=1)
    return IqBuffer(with_cp.reshape(-1), cfg.sample_rate_hz, 0)


@dataclasses.dataclass
class ReferencePss(object):
    full_rate: np.ndarray
    half_rate: np.ndarray
    seq_index: int


def _unit_energy(x):
    return x / np.linalg.norm(x)


def gen_reference_pss(i, cfg):
    '''CP-stripped PSS symbol at the full rate and on the half-rate grid

    :param int i: PSS sequence index (N_ID2)
    :param FrameConfig cfg: numerology
    :rtype: ReferencePss
    '''
    d = gen_pss_sequence(i)
    rel = cfg.pss_relative_bins
    full = np.zeros(cfg.n_fft, dtype=np.complex128)
    full[rel % cfg.n_fft] = d
    half = np.zeros(cfg.n_fft // 2, dtype=np.complex128)
    half[rel % (cfg.n_fft // 2)] = d
    return ReferencePss(_unit_energy(np.fft.ifft(full)), _unit_energy(np.fft.ifft(half)), i)


@functools.lru_cache(maxsize=16)
def reference_set(cfg):
    '''The three reference PSS of a numerology (cached)'''
    logging.debug('building PSS references for n_fft=%d', cfg.n_fft)
    return tuple(gen_reference_pss(i, cfg) for i in range(N_ID2_COUNT))


def place_ssb_in_frame(grid_waveform, cfg, true_offset):
    '''Lay one SSB per period over two periods

    :param IqBuffer grid_waveform: one modulated SSB
    :param FrameConfig cfg: numerology
    :param int true_offset: index of the first CP sample within a period
    :return: 2 * n_ssb samples at the full rate
    :rtype: IqBuffer
    '''
    n_ssb = cfg.n_ssb
    length = len(grid_waveform)
    if not 0 <= true_offset < n_ssb:
        raise ValueError('true_offset must be in [0, %d) (got %r)' % (n_ssb, true_offset))
    if true_offset + length > n_ssb:
        raise ValueError('true_offset=%d would push the SSB (%d samples) across the period boundary at %d'
                         % (true_offset, length, n_ssb))
    frame = np.zeros(2 * n_ssb, dtype=np.complex128)
    for period in range(2):
        start = period * n_ssb + true_offset
        frame[start:start + length] = grid_waveform.samples
    return IqBuffer(frame, cfg.sample_rate_hz, 0)


def make_cell_waveform(cell_id, payload_bits, cfg):
    '''Modulated SSB of a cell carrying the given PBCH payload'''
    grid = map_ssb_grid(cell_id, gen_pbch_symbols(cell_id, payload_bits))
    return ofdm_modulate(grid, cfg)
