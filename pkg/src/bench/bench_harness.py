#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import dataclasses
import json
import logging
import time
from typing import Dict
from typing import Optional
from typing import Tuple

from joblib import delayed
from joblib import Parallel
import numpy as np

from ssb_channel import apply_channel
from ssb_channel import ChannelSpec
from ssb_channel import doppler_from_speed
from ssb_channel import dual_rate_frontend
from ssb_channel import make_rng
from ssb_channel import STREAM_DRAW
from ssb_channel import tdl_b_taps
from ssb_common import BufferTooShortError
from ssb_common import CellId
from ssb_common import FrameConfig
from ssb_common import N_ID1_COUNT
from ssb_common import N_ID2_COUNT
from ssb_common import SSB_SUBCARRIERS
from ssb_detector import full_search
from ssb_detector import half_search
from ssb_detector import SearchParams
from ssb_detector import two_step_estimate
from ssb_postsync import decode_pbch
from ssb_postsync import detect_sss
from ssb_postsync import estimate_cfo
from ssb_postsync import extract_ssb_symbols
from ssb_waveform import make_cell_waveform
from ssb_waveform import PBCH_PAYLOAD_BITS
from ssb_waveform import place_ssb_in_frame
from ssb_waveform import reference_set

import bench_utils

PIPELINES = ('baseline', 'proposed', 'halfrate')
STAGES = ('pss_init', 'pss_refine', 'sss', 'pbch')
FRAME_KEYS = ('scs_hz', 'n_fft', 'cp_len', 'ssb_period_s')
CHANNEL_KEYS = ('profile', 'delay_spread_s', 'speed_kmh', 'carrier_hz', 'doppler_hz', 'cfo_hz',
                'drift_samples_per_period', 'taps')
SCENARIO_KEYS = ('name', 'frame', 'channel', 'snr_grid_db', 'n_trials', 'pipelines', 'search',
                 'discard_gap', 'seed')


@dataclasses.dataclass(frozen=True)
class Scenario(object):
    '''A seeded Monte Carlo experiment

    The channel template carries everything but the per-trial SNR, offset and seed.
    '''
    name: str
    cfg: FrameConfig
    channel: ChannelSpec
    snr_grid_db: Tuple[float, ...]
    n_trials: int
    pipelines: Tuple[str, ...] = PIPELINES
    params: Optional[SearchParams] = None
    seed: int = 0
    discard_gap: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'snr_grid_db', tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, 'pipelines', tuple(self.pipelines))
        if self.params is None:
            object.__setattr__(self, 'params', SearchParams.for_config(self.cfg))
        if self.n_trials < 1:
            raise ValueError('n_trials must be >= 1 (got %r)' % self.n_trials)
        if len(self.snr_grid_db) == 0:
            raise ValueError('snr_grid_db must not be empty')
        if len(self.pipelines) == 0:
            raise ValueError('pipelines must not be empty')
        for p in self.pipelines:
            if p not in PIPELINES:
                raise ValueError('unknown pipeline %r (expected a subset of %s)' % (p, PIPELINES))
        if 'halfrate' in self.pipelines and self.cfg.n_fft // 2 < SSB_SUBCARRIERS:
            raise ValueError('the halfrate pipeline decodes at half rate and needs n_fft >= %d (got %d)'
                             % (2 * SSB_SUBCARRIERS, self.cfg.n_fft))
        self.params.validate(self.cfg)
        if not 0 <= self.discard_gap < self.cfg.n_ssb - self.cfg.ssb_len:
            raise ValueError('discard_gap must be in [0, %d) (got %r)'
                             % (self.cfg.n_ssb - self.cfg.ssb_len, self.discard_gap))

    @classmethod
    def from_dict(cls, d):
        '''Build a scenario from its JSON form, rejecting unknown keys'''
        _check_keys(d, SCENARIO_KEYS, 'scenario')
        frame = d.get('frame', {})
        _check_keys(frame, FRAME_KEYS, 'frame')
        cfg = FrameConfig(**frame)
        search = d.get('search', {})
        _check_keys(search, ('delta_n', 'lock_ratio'), 'search')
        return cls(name=d.get('name', 'scenario'),
                   cfg=cfg,
                   channel=channel_from_dict(d.get('channel', {})),
                   snr_grid_db=d.get('snr_grid_db', ()),
                   n_trials=int(d.get('n_trials', 1)),
                   pipelines=d.get('pipelines', PIPELINES),
                   params=SearchParams.for_config(cfg, **search),
                   seed=int(d.get('seed', 0)),
                   discard_gap=int(d.get('discard_gap', 0)))

    def to_dict(self):
        return {
            'name': self.name,
            'frame': {k: getattr(self.cfg, k) for k in FRAME_KEYS},
            'channel': {'taps': [list(t) for t in self.channel.taps],
                        'doppler_hz': self.channel.doppler_hz,
                        'cfo_hz': self.channel.cfo_hz,
                        'drift_samples_per_period': self.channel.drift_samples_per_period},
            'snr_grid_db': list(self.snr_grid_db),
            'n_trials': self.n_trials,
            'pipelines': list(self.pipelines),
            'search': {'delta_n': self.params.delta_n, 'lock_ratio': self.params.lock_ratio},
            'discard_gap': self.discard_gap,
            'seed': self.seed,
            'snr_convention': 'per resource element over the 240-subcarrier SSB band',
            'tie_break': self.params.tie_break,
        }


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ValueError('%s must be a JSON object (got %r)' % (where, type(d).__name__))
    for key in d:
        if key not in allowed:
            raise ValueError('unknown %s field "%s" (allowed: %s)' % (where, key, ', '.join(allowed)))


def channel_from_dict(d):
    '''Channel template from the scenario "channel" object'''
    _check_keys(d, CHANNEL_KEYS, 'channel')
    profile = d.get('profile', 'awgn')
    if profile == 'awgn':
        taps = d.get('taps', [[0.0, 0.0]])
        doppler = float(d.get('doppler_hz', 0.0))
    elif profile == 'tdl-b':
        taps = d.get('taps') or tdl_b_taps(float(d.get('delay_spread_s', 300e-9)))
        if 'doppler_hz' in d:
            doppler = float(d['doppler_hz'])
        else:
            doppler = doppler_from_speed(float(d.get('speed_kmh', 30.0)), float(d.get('carrier_hz', 3.5e9)))
    else:
        raise ValueError('unknown channel profile "%s" (expected "awgn" or "tdl-b")' % profile)
    return ChannelSpec(taps=tuple(tuple(t) for t in taps),
                       doppler_hz=doppler,
                       cfo_hz=float(d.get('cfo_hz', 0.0)),
                       drift_samples_per_period=float(d.get('drift_samples_per_period', 0.0)))


def load_scenario(path):
    try:
        with open(path) as f:
            d = json.load(f)
    except (IOError, OSError) as e:
        raise IOError('cannot read scenario %s: %s' % (path, e))
    except ValueError as e:
        raise ValueError('scenario %s is not valid JSON: %s' % (path, e))
    return Scenario.from_dict(d)


@dataclasses.dataclass
class SearchOutcome(object):
    pipeline: str
    snr_db: float
    trial_index: int
    tau_true: int
    tau_est: Optional[int]
    cell_id_true: CellId
    cell_id_est: Optional[CellId]
    cellid_ok: bool
    pbch_ok: bool
    stage_times_ms: Dict[str, float]
    stage_macs: Dict[str, int]

    def to_dict(self):
        return {
            'pipeline': self.pipeline,
            'snr_db': self.snr_db,
            'trial_index': self.trial_index,
            'tau_true': self.tau_true,
            'tau_est': self.tau_est,
            'cell_id_true': self.cell_id_true.n_id,
            'cell_id_est': None if self.cell_id_est is None else self.cell_id_est.n_id,
            'cellid_ok': self.cellid_ok,
            'pbch_ok': self.pbch_ok,
            'stage_times_ms': self.stage_times_ms,
            'stage_macs': self.stage_macs,
        }


# * -------------------- pipelines -------------------- *
def postsync(r, tau_ssb, n_id2, cfg):
    '''CFO, extraction, SSS and PBCH on one full-rate or half-rate buffer

    :return: (CellId or None, (payload, crc_ok) or None, {stage: ms})
    '''
    times = {'sss': 0.0, 'pbch': 0.0}
    t0 = time.perf_counter()
    try:
        cfo = estimate_cfo(r, tau_ssb, cfg)
        obs = extract_ssb_symbols(r, tau_ssb, cfo, cfg)
    except BufferTooShortError as e:
        logging.debug('postsync skipped: %s', e)
        times['sss'] = 1000.0 * (time.perf_counter() - t0)
        return None, None, times
    n_id1, _ = detect_sss(obs, n_id2)
    cell_id = CellId(n_id1, n_id2)
    t1 = time.perf_counter()
    decoded = decode_pbch(obs, cell_id)
    t2 = time.perf_counter()
    times['sss'] = 1000.0 * (t1 - t0)
    times['pbch'] = 1000.0 * (t2 - t1)
    return cell_id, decoded, times


def run_pipeline(pipeline, rx, capture, cfg, params):
    '''Run one pipeline on a realization

    :param str pipeline: one of PIPELINES
    :param IqBuffer rx: full-rate samples starting at a period boundary
    :param DualRateCapture capture: dual-rate view of rx, unused by the baseline
    :param FrameConfig cfg: numerology
    :param SearchParams params: refinement settings
    :return: (tau_est, CellId or None, (payload, crc_ok) or None, {stage: ms}, {stage: MACs})
    '''
    refs = reference_set(cfg)
    times = dict.fromkeys(STAGES, 0.0)
    macs = dict.fromkeys(STAGES, 0)
    t0 = time.perf_counter()
    if pipeline == 'baseline':
        detection, count = full_search(rx, refs, cfg)
        times['pss_init'] = 1000.0 * (time.perf_counter() - t0)
        macs['pss_init'] = count.complex_macs
        tau, n_id2, buf = detection.tau_ssb, detection.n_id2, rx
    elif pipeline == 'proposed':
        detection, counts, stage_ms = two_step_estimate(capture, refs, params, cfg)
        times.update(stage_ms)
        macs['pss_init'] = counts['coarse'].complex_macs
        macs['pss_refine'] = counts['refine'].complex_macs
        if not detection.locked:
            return detection.tau_ssb, None, None, times, macs
        tau, n_id2, buf = detection.tau_ssb, detection.n_id2, capture.full
    elif pipeline == 'halfrate':
        tau_h, n_id2, count = half_search(capture.half, refs, cfg)
        times['pss_init'] = 1000.0 * (time.perf_counter() - t0)
        macs['pss_init'] = count.complex_macs
        # the half-rate scheme never switches rate: post-sync runs on the first period at half rate
        tau, buf = 2 * tau_h, capture.half
    else:
        raise ValueError('unknown pipeline %r' % (pipeline,))
    cell_id, decoded, post_ms = postsync(buf, tau, n_id2, cfg)
    times.update(post_ms)
    return tau, cell_id, decoded, times, macs


def trial_seed(scenario, snr_db, trial_index):
    # noise-free trials share key 0
    key = int(round(1000.0 * snr_db)) + 10 ** 6 if np.isfinite(snr_db) else 0
    return int(np.random.SeedSequence([scenario.seed, key, trial_index]).generate_state(1)[0])


def run_trial(scenario, snr_db, trial_index):
    '''Draw, synthesize and impair one realization and run every enabled pipeline on it

    :return: list of SearchOutcome in scenario.pipelines order
    '''
    cfg = scenario.cfg
    seed = trial_seed(scenario, snr_db, trial_index)
    rng = make_rng(seed, STREAM_DRAW)
    cell_id = CellId.from_n_id(rng.integers(N_ID1_COUNT * N_ID2_COUNT))
    payload = rng.integers(0, 2, PBCH_PAYLOAD_BITS)
    offset = int(rng.integers(0, cfg.n_ssb - cfg.ssb_len + 1))

    frame = place_ssb_in_frame(make_cell_waveform(cell_id, payload, cfg), cfg, 0)
    spec = dataclasses.replace(scenario.channel, snr_db=snr_db, timing_offset=offset, seed=seed)
    rx = apply_channel(frame, spec, cfg)
    capture = dual_rate_frontend(rx, cfg, scenario.discard_gap)

    outcomes = []
    for pipeline in scenario.pipelines:
        tau, cell_est, decoded, times, macs = run_pipeline(pipeline, rx, capture, cfg, scenario.params)
        cellid_ok = cell_est == cell_id
        pbch_ok = bool(decoded is not None and decoded[1] and np.array_equal(decoded[0], payload))
        times['overall'] = sum(times[s] for s in STAGES)
        macs['overall'] = sum(macs[s] for s in STAGES)
        outcomes.append(SearchOutcome(pipeline, snr_db, trial_index, offset, tau, cell_id, cell_est,
                                      cellid_ok, pbch_ok, times, macs))
    logging.debug('trial %d @ %.1f dB: offset=%d cell=%d %s', trial_index, snr_db, offset, cell_id.n_id,
                  ' '.join('%s=%d/%d' % (o.pipeline, o.cellid_ok, o.pbch_ok) for o in outcomes))
    return outcomes


def run_scenario(scenario, out_dir=None, workers=1):
    '''Sweep the SNR grid and aggregate paired trials into a Report

    On KeyboardInterrupt the trials finished so far are reported (and
    written when out_dir is set) before the interrupt propagates.

    :param Scenario scenario: experiment
    :param str out_dir: directory for curves.csv, timing.csv and report.json
    :param int workers: joblib workers (-1 uses every core)
    :rtype: bench_utils.Report
    '''
    logging.info('scenario %s: %d SNR points x %d trials, pipelines %s, delta_n=%d'
                 % (scenario.name, len(scenario.snr_grid_db), scenario.n_trials,
                    ','.join(scenario.pipelines), scenario.params.delta_n))
    outcomes = []
    batch = max(16, 4 * abs(workers))
    try:
        with Parallel(n_jobs=workers, prefer='threads') as parallel:
            for snr_db in scenario.snr_grid_db:
                for first in range(0, scenario.n_trials, batch):
                    last = min(scenario.n_trials, first + batch)
                    results = parallel(delayed(run_trial)(scenario, snr_db, k) for k in range(first, last))
                    for trial in results:
                        outcomes.extend(trial)
                logging.info('SNR %.1f dB done (%d outcomes so far)' % (snr_db, len(outcomes)))
    except KeyboardInterrupt:
        logging.warning('interrupted, reporting %d finished outcomes' % len(outcomes))
        report = bench_utils.build_report(scenario.to_dict(), outcomes, partial=True)
        if out_dir is not None:
            bench_utils.emit_report(report, out_dir)
        raise
    report = bench_utils.build_report(scenario.to_dict(), outcomes)
    if out_dir is not None:
        bench_utils.emit_report(report, out_dir)
    return report
