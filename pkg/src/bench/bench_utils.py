#!/usr/bin/env python

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)

import collections
import csv
import dataclasses
import json
import logging
import os
from typing import List

from scipy import stats

# row order of the timing table
TIMING_STAGES = ('overall', 'pss_init', 'pss_refine', 'sss', 'pbch')
STAGE_TITLES = {'overall': 'Overall', 'pss_init': 'PSS (init)', 'pss_refine': 'PSS (refine)',
                'sss': 'SSS', 'pbch': 'PBCH'}
CURVE_COLUMNS = ('snr_db', 'pipeline', 'cellid_fail', 'pbch_fail', 'cellid_ci', 'pbch_ci', 'n_trials')
TIMING_COLUMNS = ('pipeline', 'stage', 'mean_ms', 'mean_macs')


def wilson_interval(failures, n, confidence=0.95):
    '''Wilson score interval of a binomial proportion

    :return: (low, high)
    '''
    if n == 0:
        return 0.0, 1.0
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = failures / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)) ** 0.5 / denom
    return max(0.0, center - half), min(1.0, center + half)


def wilson_half_width(failures, n, confidence=0.95):
    low, high = wilson_interval(failures, n, confidence)
    return (high - low) / 2.0


@dataclasses.dataclass
class CurvePoint(object):
    snr_db: float
    pipeline: str
    n_trials: int
    cellid_failures: int
    pbch_failures: int

    @property
    def cellid_fail(self):
        return self.cellid_failures / self.n_trials

    @property
    def pbch_fail(self):
        return self.pbch_failures / self.n_trials

    @property
    def cellid_ci(self):
        return wilson_half_width(self.cellid_failures, self.n_trials)

    @property
    def pbch_ci(self):
        return wilson_half_width(self.pbch_failures, self.n_trials)

    def row(self):
        return [getattr(self, c) for c in CURVE_COLUMNS]


@dataclasses.dataclass
class TimingRow(object):
    pipeline: str
    stage: str
    mean_ms: float
    mean_macs: float

    def row(self):
        return [getattr(self, c) for c in TIMING_COLUMNS]


@dataclasses.dataclass
class Report(object):
    scenario: dict
    curves: List[CurvePoint]
    timing: List[TimingRow]
    partial: bool = False

    def to_dict(self):
        curves = []
        for point in self.curves:
            d = dataclasses.asdict(point)
            d.update(cellid_fail=point.cellid_fail, pbch_fail=point.pbch_fail,
                     cellid_ci=point.cellid_ci, pbch_ci=point.pbch_ci)
            curves.append(d)
        return {'scenario': self.scenario,
                'curves': curves,
                'timing': [dataclasses.asdict(t) for t in self.timing],
                'partial': self.partial}

    @classmethod
    def from_dict(cls, d):
        fields = [f.name for f in dataclasses.fields(CurvePoint)]
        curves = [CurvePoint(**{k: c[k] for k in fields}) for c in d['curves']]
        timing = [TimingRow(**t) for t in d['timing']]
        return cls(d['scenario'], curves, timing, bool(d.get('partial', False)))


def build_report(scenario_echo, outcomes, partial=False):
    '''Aggregate SearchOutcome objects into failure counts and mean stage costs

    Rows follow the order of the scenario SNR grid and pipeline list; points
    without any finished trial are left out.
    '''
    grouped = collections.defaultdict(list)
    by_pipeline = collections.defaultdict(list)
    for o in outcomes:
        grouped[(o.snr_db, o.pipeline)].append(o)
        by_pipeline[o.pipeline].append(o)

    curves = []
    for snr_db in scenario_echo['snr_grid_db']:
        for pipeline in scenario_echo['pipelines']:
            group = grouped.get((float(snr_db), pipeline), [])
            if not group:
                continue
            curves.append(CurvePoint(float(snr_db), pipeline, len(group),
                                     sum(not o.cellid_ok for o in group),
                                     sum(not o.pbch_ok for o in group)))

    timing = []
    for pipeline in scenario_echo['pipelines']:
        group = by_pipeline.get(pipeline, [])
        if not group:
            continue
        for stage in TIMING_STAGES:
            timing.append(TimingRow(pipeline, stage,
                                    sum(o.stage_times_ms[stage] for o in group) / len(group),
                                    sum(o.stage_macs[stage] for o in group) / len(group)))
    return Report(scenario_echo, curves, timing, partial)


def _write_csv(path, columns, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)


def emit_report(report, path):
    '''Write curves.csv, timing.csv and report.json into a directory'''
    try:
        if not os.path.isdir(path):
            os.makedirs(path)
        _write_csv(os.path.join(path, 'curves.csv'), CURVE_COLUMNS, [p.row() for p in report.curves])
        _write_csv(os.path.join(path, 'timing.csv'), TIMING_COLUMNS, [t.row() for t in report.timing])
        with open(os.path.join(path, 'report.json'), 'w') as f:
            json.dump(report.to_dict(), f, indent=4, sort_keys=True)
    except (IOError, OSError) as e:
        raise IOError('cannot write report to %s: %s' % (path, e))
    logging.info('wrote report%s to %s' % (' (partial)' if report.partial else '', path))


def load_report(path):
    '''Read report.json written by emit_report'''
    json_path = os.path.join(path, 'report.json')
    try:
        with open(json_path) as f:
            return Report.from_dict(json.load(f))
    except (IOError, OSError) as e:
        raise IOError('cannot read report %s: %s' % (json_path, e))


def format_timing_table(report):
    '''Average time per stage and pipeline, with "--" for stages a pipeline does not run'''
    rows = collections.OrderedDict()
    for t in report.timing:
        rows.setdefault(t.pipeline, {})[t.stage] = t
    header = '%-10s' % 'pipeline' + ''.join('%14s' % STAGE_TITLES[s] for s in TIMING_STAGES)
    lines = [header]
    for pipeline, stages in rows.items():
        cells = []
        for s in TIMING_STAGES:
            t = stages.get(s)
            cells.append('%14s' % ('--' if t is None or t.mean_ms == 0.0 else '%.2f ms' % t.mean_ms))
        lines.append('%-10s' % pipeline + ''.join(cells))
    return '\n'.join(lines)


def mac_ratio(report, pipeline='proposed', reference='baseline'):
    '''Mean overall MACs of a pipeline over those of the reference, None when either is missing'''
    overall = {t.pipeline: t.mean_macs for t in report.timing if t.stage == 'overall'}
    if pipeline not in overall or not overall.get(reference):
        return None
    return overall[pipeline] / overall[reference]
