import pytest

from stresstwin.dsp import bandpass_filter
from stresstwin.hrv import BaselineProfile
from stresstwin.synth import synth_ecg


@pytest.fixture(scope="session")
def clean_synth_60():
    """60 bpm, 60 s, noiseless synthetic record plus its filtered channel."""
    rec = synth_ecg(60, 60.0, qt_ms=380.0)
    filt = bandpass_filter(rec.channel(0), rec.fs)
    return rec, filt


@pytest.fixture(scope="session")
def flat_baseline():
    return BaselineProfile(sdnn=50.0, bpm=70.0, qtc=400.0, lfhf=1.0, source_record="test")
