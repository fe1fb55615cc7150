import numpy
import pytest

from ssb_channel import apply_channel
from ssb_channel import ChannelSpec
from ssb_common import FrameConfig
from ssb_waveform import make_cell_waveform
from ssb_waveform import place_ssb_in_frame


@pytest.fixture()
def numpy_seed_fixture():
    numpy.random.seed(1)


@pytest.fixture()
def small_cfg():
    # 1 ms period: n_ssb = 7680, searches take milliseconds
    return FrameConfig(ssb_period_s=0.001)


@pytest.fixture()
def make_rx():
    '''Factory of impaired two-period captures: make_rx(cfg, cell_id, offset, **channel)'''
    def _make_rx(cfg, cell_id, offset, payload=None, **channel):
        if payload is None:
            payload = numpy.zeros(32, dtype=int)
        frame = place_ssb_in_frame(make_cell_waveform(cell_id, payload, cfg), cfg, 0)
        return apply_channel(frame, ChannelSpec(timing_offset=offset, **channel), cfg)
    return _make_rx
