# coding: utf-8

# Copyright 2026 ssbsync developers
#  Apache 2.0  (http://www.apache.org/licenses/LICENSE-2.0)


import json
import os

import mock
import numpy
import pytest

import bench_harness as H
import bench_utils as U
from ssb_channel import ChannelSpec
from ssb_channel import DualRateCapture
from ssb_common import IqBuffer
from ssb_detector import SearchParams
from ssb_waveform import reference_set

EGS = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'egs')
INF = float('inf')


def tiny_scenario(cfg, n_trials=4, snr_grid_db=(INF,), **channel):
    return H.Scenario(name='tiny', cfg=cfg, channel=ChannelSpec(**channel), snr_grid_db=snr_grid_db,
                      n_trials=n_trials)


def test_noise_free_trial_succeeds_everywhere(small_cfg):
    scenario = tiny_scenario(small_cfg)
    for k in range(3):
        outcomes = H.run_trial(scenario, INF, k)
        assert [o.pipeline for o in outcomes] == list(H.PIPELINES)
        for o in outcomes:
            assert o.cellid_ok and o.pbch_ok, o.to_dict()
            assert o.cell_id_est == o.cell_id_true
        assert outcomes[0].tau_est == outcomes[1].tau_est == outcomes[0].tau_true
        assert abs(outcomes[2].tau_est - outcomes[0].tau_true) <= 1


def test_trial_is_deterministic(small_cfg):
    scenario = tiny_scenario(small_cfg, snr_grid_db=(-3.0,))
    a = [o.to_dict() for o in H.run_trial(scenario, -3.0, 7)]
    b = [o.to_dict() for o in H.run_trial(scenario, -3.0, 7)]
    for x, y in zip(a, b):
        for d in (x, y):
            d.pop('stage_times_ms')
        assert x == y


def test_trials_differ(small_cfg):
    scenario = tiny_scenario(small_cfg)
    truths = {(o.tau_true, o.cell_id_true) for k in range(4) for o in H.run_trial(scenario, INF, k)[:1]}
    assert len(truths) == 4


def test_proposed_costs_about_a_quarter(small_cfg):
    outcomes = H.run_trial(tiny_scenario(small_cfg), INF, 0)
    macs = {o.pipeline: o.stage_macs for o in outcomes}
    assert macs['proposed']['overall'] / macs['baseline']['overall'] < 0.26
    assert macs['baseline']['pss_refine'] == 0
    assert macs['halfrate']['pss_refine'] == 0
    assert macs['proposed']['overall'] == macs['proposed']['pss_init'] + macs['proposed']['pss_refine']


def test_outcome_is_json_serializable(small_cfg):
    outcomes = H.run_trial(tiny_scenario(small_cfg), INF, 0)
    d = json.loads(json.dumps([o.to_dict() for o in outcomes]))
    assert d[0]['cell_id_true'] == outcomes[0].cell_id_true.n_id
    assert set(d[0]['stage_times_ms']) == set(H.STAGES) | {'overall'}


def test_run_scenario_report(small_cfg):
    scenario = tiny_scenario(small_cfg, n_trials=3, snr_grid_db=(INF, 10.0))
    report = H.run_scenario(scenario)
    assert not report.partial
    assert [(p.snr_db, p.pipeline) for p in report.curves] == [
        (s, p) for s in (INF, 10.0) for p in H.PIPELINES]
    for p in report.curves:
        assert p.n_trials == 3
        assert p.cellid_failures == 0
    assert len(report.timing) == len(H.PIPELINES) * len(U.TIMING_STAGES)
    assert report.scenario['snr_convention'].startswith('per resource element')
    assert U.mac_ratio(report) < 0.26


def test_report_does_not_depend_on_workers(small_cfg):
    scenario = tiny_scenario(small_cfg, n_trials=5, snr_grid_db=(0.0,))
    a = H.run_scenario(scenario, workers=1)
    b = H.run_scenario(scenario, workers=2)
    assert a.curves == b.curves
    assert [t.mean_macs for t in a.timing] == [t.mean_macs for t in b.timing]


def test_emit_and_load_report(small_cfg, tmpdir):
    out = str(tmpdir.join('report'))
    report = H.run_scenario(tiny_scenario(small_cfg, n_trials=2), out_dir=out)
    for name in ('curves.csv', 'timing.csv', 'report.json'):
        assert os.path.exists(os.path.join(out, name))
    with open(os.path.join(out, 'curves.csv')) as f:
        assert f.readline().strip() == ','.join(U.CURVE_COLUMNS)
    loaded = U.load_report(out)
    assert loaded.curves == report.curves
    assert loaded.timing == report.timing
    assert loaded.scenario == json.loads(json.dumps(report.scenario))


def test_interrupt_flushes_partial_report(small_cfg, tmpdir):
    out = str(tmpdir.join('partial'))
    scenario = tiny_scenario(small_cfg, n_trials=20)
    real = H.run_trial
    calls = []

    def interrupt_late(*args):
        calls.append(args)
        if len(calls) > 16:
            raise KeyboardInterrupt
        return real(*args)

    with mock.patch('bench_harness.run_trial', side_effect=interrupt_late):
        with pytest.raises(KeyboardInterrupt):
            H.run_scenario(scenario, out_dir=out, workers=1)
    report = U.load_report(out)
    assert report.partial
    assert {p.n_trials for p in report.curves} == {16}


@pytest.mark.parametrize("d", [
    dict(snr_grid_db=[0.0], bogus=1),
    dict(snr_grid_db=[0.0], frame=dict(fft_size=512)),
    dict(snr_grid_db=[0.0], channel=dict(profile='rayleigh')),
    dict(snr_grid_db=[0.0], channel=dict(speed=3)),
    dict(snr_grid_db=[0.0], search=dict(window=3)),
    dict(snr_grid_db=[0.0], pipelines=['oracle']),
    dict(snr_grid_db=[0.0], n_trials=0),
    dict(snr_grid_db=[]),
    dict(snr_grid_db=[0.0], search=dict(delta_n=0)),
])
def test_scenario_rejects(d):
    with pytest.raises(ValueError):
        H.Scenario.from_dict(d)


def test_scenario_from_dict():
    scenario = H.Scenario.from_dict({
        'name': 'tdl', 'frame': {'ssb_period_s': 0.005}, 'snr_grid_db': [-4, 0], 'n_trials': 10,
        'channel': {'profile': 'tdl-b', 'delay_spread_s': 300e-9, 'speed_kmh': 30, 'carrier_hz': 3.5e9},
        'pipelines': ['baseline', 'proposed'], 'search': {'delta_n': 40}, 'seed': 3})
    assert scenario.cfg.n_ssb == 38400
    assert len(scenario.channel.taps) == 23
    assert scenario.channel.doppler_hz == pytest.approx(97.3, abs=0.1)
    assert scenario.params.delta_n == 40
    assert scenario.params.lock_ratio == pytest.approx(0.35)
    assert scenario.snr_grid_db == (-4.0, 0.0)
    echo = scenario.to_dict()
    assert echo['pipelines'] == ['baseline', 'proposed']
    assert echo['frame']['ssb_period_s'] == 0.005
    assert echo['tie_break'] == scenario.params.tie_break == 'smallest tau, then smallest sequence index'


@pytest.mark.parametrize("name", ["awgn", "tdlb30", "drift_stress"])
def test_recipe_scenarios_load(name):
    scenario = H.load_scenario(os.path.join(EGS, name, 'sync1', 'conf', 'scenario.json'))
    assert scenario.n_trials >= 1
    assert set(scenario.pipelines) <= set(H.PIPELINES)


def test_recipe_grids_cover_detection_and_decoding():
    grids = [H.load_scenario(os.path.join(EGS, name, 'sync1', 'conf', 'scenario.json')).snr_grid_db
             for name in ('awgn', 'tdlb30')]
    assert grids[0] == grids[1] == tuple(float(s) for s in range(-12, 10, 2))


def test_load_scenario_errors(tmpdir):
    path = str(tmpdir.join('bad.json'))
    with open(path, 'w') as f:
        f.write('{not json')
    with pytest.raises(ValueError):
        H.load_scenario(path)
    with pytest.raises(IOError):
        H.load_scenario(str(tmpdir.join('missing.json')))


def test_drift_beyond_window_breaks_proposed_only(small_cfg):
    scenario = tiny_scenario(small_cfg, snr_grid_db=(20.0,), drift_samples_per_period=80)
    for k in range(3):
        outcomes = {o.pipeline: o for o in H.run_trial(scenario, 20.0, k)}
        assert outcomes['baseline'].cellid_ok and outcomes['baseline'].pbch_ok
        assert not outcomes['proposed'].cellid_ok
        assert not outcomes['proposed'].pbch_ok
        assert outcomes['proposed'].stage_macs['pss_refine'] > 0
        assert outcomes['proposed'].stage_times_ms['sss'] == 0.0


def test_drift_inside_window_is_absorbed(small_cfg):
    scenario = tiny_scenario(small_cfg, snr_grid_db=(20.0,), drift_samples_per_period=40)
    for k in range(3):
        outcomes = {o.pipeline: o for o in H.run_trial(scenario, 20.0, k)}
        assert outcomes['proposed'].cellid_ok and outcomes['proposed'].pbch_ok


def test_wilson_interval():
    assert U.wilson_interval(0, 10) == pytest.approx((0.0, 0.2775), abs=1e-4)
    assert U.wilson_interval(5, 10) == pytest.approx((0.2366, 0.7634), abs=1e-4)
    assert U.wilson_interval(0, 0) == (0.0, 1.0)
    assert U.wilson_half_width(5, 10) == pytest.approx(0.2634, abs=1e-4)


def test_curve_point_rates():
    p = U.CurvePoint(-6.0, 'proposed', 200, 50, 80)
    assert p.cellid_fail == pytest.approx(0.25)
    assert p.pbch_fail == pytest.approx(0.4)
    assert 0.0 < p.cellid_ci < 0.1
    assert p.row()[:2] == [-6.0, 'proposed']


def fake_report():
    timing = []
    for pipeline, macs in (('baseline', 100.0), ('proposed', 25.0), ('halfrate', 25.0)):
        for stage in U.TIMING_STAGES:
            ms = 0.0 if (stage == 'pss_refine' and pipeline != 'proposed') else 1.5
            timing.append(U.TimingRow(pipeline, stage, ms, macs if stage == 'overall' else 0.0))
    return U.Report({'name': 'fake'}, [], timing)


def test_timing_table():
    lines = U.format_timing_table(fake_report()).splitlines()
    assert lines[0].split()[0] == 'pipeline'
    assert 'PSS (refine)' in lines[0]
    rows = {line.split()[0]: line for line in lines[1:]}
    assert '--' in rows['baseline']
    assert '--' in rows['halfrate']
    assert '--' not in rows['proposed']
    assert '1.50 ms' in rows['proposed']


def test_mac_ratio():
    assert U.mac_ratio(fake_report()) == pytest.approx(0.25)
    assert U.mac_ratio(fake_report(), 'halfrate', 'proposed') == pytest.approx(1.0)
    assert U.mac_ratio(U.Report({}, [], [])) is None


def test_build_report_counts_failures(small_cfg):
    scenario = tiny_scenario(small_cfg)
    outcomes = H.run_trial(scenario, INF, 0)
    outcomes[1].cellid_ok = False
    report = U.build_report(scenario.to_dict(), outcomes)
    by_pipeline = {p.pipeline: p for p in report.curves}
    assert by_pipeline['proposed'].cellid_failures == 1
    assert by_pipeline['baseline'].cellid_failures == 0
    assert by_pipeline['proposed'].n_trials == 1


def test_noise_free_cell_search_hundred_draws(small_cfg):
    scenario = H.Scenario(name='draws', cfg=small_cfg, channel=ChannelSpec(), snr_grid_db=(INF,),
                          n_trials=100, pipelines=('baseline', 'proposed'))
    for k in range(scenario.n_trials):
        for o in H.run_trial(scenario, INF, k):
            assert o.tau_est == o.tau_true, o.to_dict()
            assert o.cell_id_est == o.cell_id_true
            assert o.pbch_ok


def test_failure_rates_fall_with_snr(small_cfg):
    grid = (-14.0, -10.0, -6.0, -2.0)
    report = H.run_scenario(tiny_scenario(small_cfg, n_trials=40, snr_grid_db=grid))
    for pipeline in H.PIPELINES:
        points = [p for p in report.curves if p.pipeline == pipeline]
        assert [p.snr_db for p in points] == list(grid)
        for low, high in zip(points, points[1:]):
            for field in ('cellid_failures', 'pbch_failures'):
                # a higher SNR may not fail significantly more often
                assert (U.wilson_interval(getattr(high, field), high.n_trials)[0]
                        <= U.wilson_interval(getattr(low, field), low.n_trials)[1]), (pipeline, field, low, high)


def test_halfrate_decoding_is_not_better_than_baseline(small_cfg):
    # both pipelines decode the same first-period noise; half rate adds aliasing at the SSB edges
    scenario = tiny_scenario(small_cfg, n_trials=30, snr_grid_db=(-6.0, -4.0, -2.0, 0.0))
    failures = {'baseline': 0, 'halfrate': 0}
    n = 0
    for snr_db in scenario.snr_grid_db:
        for k in range(scenario.n_trials):
            for o in H.run_trial(scenario, snr_db, k):
                if o.pipeline in failures:
                    failures[o.pipeline] += not o.pbch_ok
            n += 1
    assert failures['baseline'] <= failures['halfrate'] + 2 + n // 20, failures


def test_proposed_late_coarse_peak_reports_lost_lock(small_cfg):
    ref = reference_set(small_cfg)[0]
    half = numpy.zeros((small_cfg.n_ssb + small_cfg.n_fft) // 2, dtype=complex)
    lag = 3800 + small_cfg.cp_len // 2
    half[lag:lag + len(ref.half_rate)] = ref.half_rate
    capture = DualRateCapture(IqBuffer(half, small_cfg.sample_rate_hz / 2),
                              IqBuffer(numpy.zeros(small_cfg.n_ssb), small_cfg.sample_rate_hz, small_cfg.n_ssb),
                              0)
    params = SearchParams.for_config(small_cfg)
    tau, cell_id, decoded, times, macs = H.run_pipeline('proposed', None, capture, small_cfg, params)
    assert tau == 7600
    assert cell_id is None
    assert decoded is None
    assert macs['pss_refine'] == 0
    assert macs['pss_init'] > 0
    assert times['sss'] == 0.0


def test_low_snr_trials_never_raise(small_cfg):
    # noise-only coarse peaks land anywhere in the period, including its last few hundred samples
    scenario = tiny_scenario(small_cfg, n_trials=60, snr_grid_db=(-20.0,))
    lost = 0
    for k in range(scenario.n_trials):
        outcomes = {o.pipeline: o for o in H.run_trial(scenario, -20.0, k)}
        assert set(outcomes) == set(H.PIPELINES)
        proposed = outcomes['proposed']
        if proposed.stage_macs['pss_refine'] == 0:
            lost += 1
            assert not proposed.cellid_ok
            assert not proposed.pbch_ok
    assert lost < scenario.n_trials


def test_scenario_halfrate_needs_room_for_the_ssb():
    frame = dict(n_fft=256, cp_len=18, ssb_period_s=0.001)
    with pytest.raises(ValueError):
        H.Scenario.from_dict(dict(snr_grid_db=[0.0], frame=frame))
    scenario = H.Scenario.from_dict(dict(snr_grid_db=[0.0], frame=frame, pipelines=['baseline', 'proposed']))
    assert scenario.cfg.n_ssb == 3840
