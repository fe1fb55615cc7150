#!/usr/bin/env python
# encoding: utf-8

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)


import argparse
import json
import sys

import bench_cli


def main(argv=None):
    parser = argparse.ArgumentParser(description='Run a cell search pipeline on an IQ file')
    bench_cli.add_common_arguments(parser)
    bench_cli.add_frame_arguments(parser)
    bench_cli.add_search_arguments(parser)
    parser.add_argument('--out', type=str, default=None,
                        help='JSON file receiving the search outcome')
    parser.add_argument('iq_file', metavar='IN', type=str,
                        help='IQ file written by ssb_generate.py')
    args, config = bench_cli.prepare(parser, argv)

    def search():
        result = bench_cli.cmd_search(args.iq_file, config)
        print('pipeline: %s' % result['pipeline'])
        print('tau_ssb: %d' % result['tau_ssb'])
        print('cell_id: %s' % result['cell_id'])
        print('crc_ok: %s' % result['crc_ok'])
        for stage in ('overall', 'pss_init', 'pss_refine', 'sss', 'pbch'):
            print('%-10s %10.3f ms %12d MACs'
                  % (stage, result['stage_times_ms'][stage], result['stage_macs'][stage]))
        if args.out is not None:
            try:
                with open(args.out, 'w') as f:
                    json.dump(result, f, indent=4, sort_keys=True)
            except (IOError, OSError) as e:
                raise IOError('cannot write %s: %s' % (args.out, e))

    return bench_cli.run_guarded(search)


if __name__ == '__main__':
    sys.exit(main())
