#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import argparse
import dataclasses
import json
import logging
import sys
from typing import Optional

import numpy as np

from ssb_channel import apply_channel
from ssb_channel import ChannelSpec
from ssb_channel import dual_rate_frontend
from ssb_channel import make_rng
from ssb_channel import read_iq
from ssb_channel import STREAM_DRAW
from ssb_channel import write_iq
from ssb_common import BufferTooShortError
from ssb_common import CellId
from ssb_common import FrameConfig
from ssb_common import N_ID1_COUNT
from ssb_common import N_ID2_COUNT
from ssb_detector import expected_macs
from ssb_detector import SearchParams
from ssb_waveform import make_cell_waveform
from ssb_waveform import PBCH_PAYLOAD_BITS
from ssb_waveform import place_ssb_in_frame

import bench_harness
import bench_utils

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TOO_SHORT = 4
EXIT_INTERRUPTED = 130

# keys accepted in --config files, named after the argparse destinations
CONFIG_KEYS = ('seed', 'pipeline', 'offset', 'cellid', 'snr', 'cfo', 'drift', 'delta_n', 'lock_ratio',
               'discard_gap', 'workers', 'out', 'scs_hz', 'n_fft', 'cp_len', 'ssb_period_s', 'verbose')


# * -------------------- argument handling -------------------- *
def add_common_arguments(parser):
    parser.add_argument('--config', type=str, default=None,
                        help='JSON config file, flags given on the command line override its values')
    parser.add_argument('--seed', type=int, default=None,
                        help='Random seed')
    parser.add_argument('--verbose', '-V', default=1, type=int,
                        help='Verbose option')


def add_frame_arguments(parser):
    parser.add_argument('--scs-hz', type=float, default=15000.0,
                        help='Subcarrier spacing (Hz)')
    parser.add_argument('--n-fft', type=int, default=512,
                        help='FFT size')
    parser.add_argument('--cp-len', type=int, default=36,
                        help='Cyclic prefix length (full-rate samples)')
    parser.add_argument('--ssb-period-s', type=float, default=0.020,
                        help='SSB periodicity (seconds)')


def add_channel_arguments(parser):
    parser.add_argument('--offset', type=int, default=None,
                        help='True SSB offset in full-rate samples (drawn from the seed when omitted)')
    parser.add_argument('--cellid', type=int, default=None,
                        help='Physical cell ID in [0, 1007] (drawn from the seed when omitted)')
    parser.add_argument('--snr', type=float, default=None,
                        help='SNR per resource element (dB), omit for a noise-free capture')
    parser.add_argument('--cfo', type=float, default=0.0,
                        help='Carrier frequency offset (Hz)')
    parser.add_argument('--drift', type=float, default=None,
                        help='Extra delay of the second SSB period (full-rate samples)')


def add_search_arguments(parser):
    parser.add_argument('--pipeline', type=str, default='proposed',
                        choices=bench_harness.PIPELINES,
                        help='Timing estimation pipeline')
    parser.add_argument('--delta-n', type=int, default=None,
                        help='Refinement half window (full-rate samples), 2 * cp_len when omitted')
    parser.add_argument('--lock-ratio', type=float, default=None,
                        help='Minimum refined/coarse peak ratio, 0 disables the lock check')
    parser.add_argument('--discard-gap', type=int, default=0,
                        help='Full-rate samples dropped at the rate switch')


def load_config_file(path):
    '''Flat JSON object whose keys mirror the command-line flags'''
    try:
        with open(path) as f:
            config = json.load(f)
    except (IOError, OSError) as e:
        raise IOError('cannot read config %s: %s' % (path, e))
    except ValueError as e:
        raise ValueError('config %s is not valid JSON: %s' % (path, e))
    if not isinstance(config, dict):
        raise ValueError('config %s must hold a JSON object' % path)
    for key in config:
        if key not in CONFIG_KEYS:
            raise ValueError('unknown config field "%s" in %s' % (key, path))
    return config


def parse_with_config(parser, argv=None):
    '''Find --config first, use its values as parser defaults, then parse the command line'''
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', type=str, default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        parser.set_defaults(**load_config_file(known.config))
    return parser.parse_args(argv)


def setup_logging(verbose):
    if verbose == 1:
        logging.basicConfig(
            level=logging.INFO, format="%(asctime)s (%(module)s:%(lineno)d) %(levelname)s: %(message)s")
    elif verbose == 2:
        logging.basicConfig(level=logging.DEBUG,
                            format="%(asctime)s (%(module)s:%(lineno)d) %(levelname)s: %(message)s")
    else:
        logging.basicConfig(
            level=logging.WARN, format="%(asctime)s (%(module)s:%(lineno)d) %(levelname)s: %(message)s")
        logging.warning("Skip DEBUG/INFO messages")


@dataclasses.dataclass
class CliConfig(object):
    '''Validated merge of config file values and flags'''
    cfg: FrameConfig
    params: SearchParams
    seed: int = 0
    seed_given: bool = False
    offset: Optional[int] = None
    cellid: Optional[int] = None
    snr_db: float = float('inf')
    cfo_hz: float = 0.0
    drift: Optional[float] = None
    delta_n: Optional[int] = None
    lock_ratio: Optional[float] = None
    pipeline: str = 'proposed'
    discard_gap: int = 0
    workers: int = -1

    @classmethod
    def from_args(cls, args):
        def field(name, build):
            try:
                return build()
            except (TypeError, ValueError) as e:
                raise ValueError('invalid %s: %s' % (name, e))

        frame = {k: getattr(args, k) for k in ('scs_hz', 'n_fft', 'cp_len', 'ssb_period_s') if hasattr(args, k)}
        cfg = field('frame configuration', lambda: FrameConfig(**frame))
        delta_n = getattr(args, 'delta_n', None)
        lock_ratio = getattr(args, 'lock_ratio', None)
        search = {}
        if delta_n is not None:
            search['delta_n'] = delta_n
        if lock_ratio is not None:
            search['lock_ratio'] = lock_ratio
        params = field('delta_n/lock_ratio', lambda: SearchParams.for_config(cfg, **search))
        config = cls(cfg, params,
                     seed=args.seed if args.seed is not None else 0,
                     seed_given=args.seed is not None,
                     offset=getattr(args, 'offset', None),
                     cellid=getattr(args, 'cellid', None),
                     snr_db=args.snr if getattr(args, 'snr', None) is not None else float('inf'),
                     cfo_hz=getattr(args, 'cfo', 0.0),
                     drift=getattr(args, 'drift', None),
                     delta_n=delta_n,
                     lock_ratio=lock_ratio,
                     pipeline=getattr(args, 'pipeline', 'proposed'),
                     discard_gap=getattr(args, 'discard_gap', 0),
                     workers=getattr(args, 'workers', -1))
        if config.offset is not None and not 0 <= config.offset <= cfg.n_ssb - cfg.ssb_len:
            raise ValueError('invalid offset: must be in [0, %d] (got %d)' % (cfg.n_ssb - cfg.ssb_len, config.offset))
        if config.cellid is not None:
            field('cellid', lambda: CellId.from_n_id(config.cellid))
        if not 0 <= config.discard_gap < cfg.n_ssb - cfg.ssb_len:
            raise ValueError('invalid discard_gap: must be in [0, %d) (got %d)'
                             % (cfg.n_ssb - cfg.ssb_len, config.discard_gap))
        if config.workers == 0:
            raise ValueError('invalid workers: must be non-zero (got 0)')
        if config.pipeline not in bench_harness.PIPELINES:
            raise ValueError('invalid pipeline: %r (expected one of %s)' % (config.pipeline, bench_harness.PIPELINES))
        return config


# * -------------------- commands -------------------- *
def cmd_generate(config, out_path):
    '''Write a two-period SSB capture and its sidecar

    :param CliConfig config: validated configuration
    :param str out_path: IQ file to write
    :return: sidecar metadata
    '''
    cfg = config.cfg
    rng = make_rng(config.seed, STREAM_DRAW)
    n_id = config.cellid if config.cellid is not None else int(rng.integers(N_ID1_COUNT * N_ID2_COUNT))
    offset = config.offset if config.offset is not None else int(rng.integers(0, cfg.n_ssb - cfg.ssb_len + 1))
    payload = rng.integers(0, 2, PBCH_PAYLOAD_BITS)
    cell_id = CellId.from_n_id(n_id)

    frame = place_ssb_in_frame(make_cell_waveform(cell_id, payload, cfg), cfg, 0)
    spec = ChannelSpec(snr_db=config.snr_db, cfo_hz=config.cfo_hz, timing_offset=offset,
                       drift_samples_per_period=config.drift or 0.0, seed=config.seed)
    rx = apply_channel(frame, spec, cfg)
    meta = dict(seed=config.seed, offset=offset, cellid=n_id,
                snr_db=None if np.isinf(config.snr_db) else config.snr_db,
                cfo_hz=config.cfo_hz, drift=config.drift or 0.0,
                payload=''.join(str(int(b)) for b in payload))
    write_iq(out_path, rx, description='two-period SSB capture', **meta)
    return meta


def cmd_search(in_path, config):
    '''Run one pipeline end to end on an IQ file

    :return: dict with the estimate, the PBCH verdict and the stage costs
    '''
    cfg = config.cfg
    rx, meta = read_iq(in_path)
    rx.check_rate(cfg)
    capture = None
    if config.pipeline != 'baseline':
        capture = dual_rate_frontend(rx, cfg, config.discard_gap)
    tau, cell_id, decoded, times, macs = bench_harness.run_pipeline(config.pipeline, rx, capture, cfg,
                                                                    config.params)
    times['overall'] = sum(times[s] for s in bench_harness.STAGES)
    macs['overall'] = sum(macs[s] for s in bench_harness.STAGES)
    result = {
        'pipeline': config.pipeline,
        'seed': config.seed,
        'tau_ssb': tau,
        'cell_id': None if cell_id is None else cell_id.n_id,
        'crc_ok': None if decoded is None else decoded[1],
        'payload': None if decoded is None else ''.join(str(int(b)) for b in decoded[0]),
        'stage_times_ms': times,
        'stage_macs': macs,
    }
    if 'payload' in meta and decoded is not None:
        result['payload_match'] = result['payload'] == meta['payload']
    return result


def cmd_bench(scenario_path, out_dir, config):
    '''Run a scenario file and write its reports

    Flags given explicitly (seed, delta_n, lock_ratio, drift) override the scenario.

    :rtype: bench_utils.Report
    '''
    scenario = bench_harness.load_scenario(scenario_path)
    overrides = {}
    if config.delta_n is not None or config.lock_ratio is not None:
        search = {'delta_n': scenario.params.delta_n, 'lock_ratio': scenario.params.lock_ratio}
        if config.delta_n is not None:
            search['delta_n'] = config.delta_n
        if config.lock_ratio is not None:
            search['lock_ratio'] = config.lock_ratio
        overrides['params'] = SearchParams.for_config(scenario.cfg, **search)
    if config.drift is not None:
        overrides['channel'] = dataclasses.replace(scenario.channel, drift_samples_per_period=config.drift)
    if config.seed_given:
        overrides['seed'] = config.seed
    if overrides:
        scenario = dataclasses.replace(scenario, **overrides)
    report = bench_harness.run_scenario(scenario, out_dir, workers=config.workers)
    print(bench_utils.format_timing_table(report))
    ratio = bench_utils.mac_ratio(report)
    if ratio is not None:
        model = ((expected_macs('coarse', scenario.cfg) + expected_macs('refine', scenario.cfg, scenario.params))
                 / expected_macs('baseline', scenario.cfg))
        print('MAC ratio (proposed / baseline): %.6f (closed form %.6f)' % (ratio, model))
    return report


def run_guarded(fn, *args):
    '''Call a command and map its failure to an exit code'''
    try:
        fn(*args)
    except BufferTooShortError as e:
        logging.error('detection impossible: %s' % e)
        return EXIT_TOO_SHORT
    except ValueError as e:
        logging.error('configuration error: %s' % e)
        return EXIT_CONFIG
    except (IOError, OSError) as e:
        logging.error('I/O error: %s' % e)
        return EXIT_IO
    except KeyboardInterrupt:
        logging.error('interrupted')
        return EXIT_INTERRUPTED
    return EXIT_OK


def prepare(parser, argv=None):
    '''Parse arguments, configure logging and validate

    Exits with EXIT_CONFIG or EXIT_IO when the arguments cannot be used.

    :return: (args, CliConfig)
    '''
    try:
        args = parse_with_config(parser, argv)
    except (IOError, OSError) as e:
        setup_logging(1)
        logging.error('I/O error: %s' % e)
        sys.exit(EXIT_IO)
    except ValueError as e:
        setup_logging(1)
        logging.error('configuration error: %s' % e)
        sys.exit(EXIT_CONFIG)
    setup_logging(args.verbose)
    for arg in sorted(vars(args)):
        logging.info('ARGS: %s: %s' % (arg, getattr(args, arg)))
    try:
        config = CliConfig.from_args(args)
    except ValueError as e:
        logging.error('configuration error: %s' % e)
        sys.exit(EXIT_CONFIG)
    return args, config
