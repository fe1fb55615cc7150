#!/usr/bin/env python
# encoding: utf-8

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)


import argparse
import logging
import sys

import bench_cli


def main(argv=None):
    parser = argparse.ArgumentParser(description='Generate a two-period SSB capture')
    bench_cli.add_common_arguments(parser)
    bench_cli.add_frame_arguments(parser)
    bench_cli.add_channel_arguments(parser)
    parser.add_argument('--out', type=str, default=None,
                        help='IQ file to write (sidecar goes to <out>.json)')
    args, config = bench_cli.prepare(parser, argv)
    if args.out is None:
        parser.error('--out is required (flag or config file)')

    def generate():
        meta = bench_cli.cmd_generate(config, args.out)
        logging.info('generated cell %d at offset %d (seed %d)' % (meta['cellid'], meta['offset'], meta['seed']))
        print('%s: cellid=%d offset=%d seed=%d' % (args.out, meta['cellid'], meta['offset'], meta['seed']))

    return bench_cli.run_guarded(generate)


if __name__ == '__main__':
    sys.exit(main())
