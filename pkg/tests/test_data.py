import numpy as np
import pytest

from bineeg import data
from bineeg.errors import (CorruptInput, InvalidAnnotations, InvalidConfig,
                           InvalidDataset)
from bineeg.tensor import DenseTensor


def make_meta(duration, e=4, fs=100):
    return data.RecordingMeta("rec", e, fs, duration)


def label_at(labeling, t):
    """Class of instant t from the interval lists: 1/0/-1 (excluded)."""
    for lo, hi in labeling.preictal:
        if lo <= t < hi:
            return 1
    for lo, hi in labeling.interictal:
        if lo <= t < hi:
            return 0
    return -1


def brute_force_labels(duration, seizures, cfg):
    """Independent 1 s-resolution labeling oracle."""
    out = []
    for t in range(int(duration)):
        excluded = any(sz.onset_s - cfg.sph_s <= t < sz.end_s + cfg.postictal_exclusion_s
                       for sz in seizures)
        pre = any(sz.onset_s - cfg.sph_s - cfg.pil_s <= t < sz.onset_s - cfg.sph_s
                  for sz in seizures)
        if excluded:
            out.append(-1)
        elif pre:
            out.append(1)
        else:
            out.append(0)
    return out


def tiny_window(label, start=0.0, rec="rec"):
    return data.LabeledWindow(rec, start, label, DenseTensor(np.zeros((1, 1, 1))))


# ---------------------------------------------------------------------------
# labeling
# ---------------------------------------------------------------------------

def test_preictal_interval_from_definitions():
    cfg = data.LabelingConfig(sph_s=300, pil_s=3600)
    seizures = [data.Seizure(10000, 10060)]
    lab = data.label_intervals(make_meta(20000), seizures, cfg)
    assert lab.preictal == [(6100.0, 9700.0)]


def test_no_seizures_everything_interictal():
    lab = data.label_intervals(make_meta(5000), [], data.LabelingConfig())
    assert lab.preictal == []
    assert lab.interictal == [(0.0, 5000.0)]


def test_close_seizures_truncate_second_preictal():
    cfg = data.LabelingConfig(sph_s=300, pil_s=3600, postictal_exclusion_s=600)
    seizures = [data.Seizure(5000, 5060), data.Seizure(6800, 6860)]
    lab = data.label_intervals(make_meta(20000), seizures, cfg)
    # second preictal [2900, 6500) loses everything before first postictal end 5660
    assert (5660.0, 6500.0) in lab.preictal
    oracle = brute_force_labels(20000, seizures, cfg)
    for t in range(20000):
        assert label_at(lab, t) == oracle[t], t


def test_overlapping_annotations_rejected():
    with pytest.raises(InvalidAnnotations):
        data.label_intervals(make_meta(10000),
                             [data.Seizure(100, 300), data.Seizure(200, 400)],
                             data.LabelingConfig())
    with pytest.raises(InvalidAnnotations):
        data.label_intervals(make_meta(100), [data.Seizure(50, 200)],
                             data.LabelingConfig())


def test_labeler_matches_brute_force_oracle_randomized():
    rng = np.random.default_rng(42)
    for scenario in range(40):
        duration = int(rng.integers(2000, 15000))
        cfg = data.LabelingConfig(
            sph_s=float(rng.integers(0, 400)),
            pil_s=float(rng.integers(100, 4000)),
            postictal_exclusion_s=float(rng.integers(0, 4000)),
        )
        n = int(rng.integers(0, 5))
        onsets = np.sort(rng.choice(np.arange(10, duration - 100), size=n, replace=False))
        seizures = []
        for onset in onsets:
            if seizures and onset <= seizures[-1].end_s:
                continue
            dur = int(rng.integers(5, 90))
            seizures.append(data.Seizure(float(onset), float(min(onset + dur, duration))))
        lab = data.label_intervals(make_meta(duration), seizures, cfg)
        oracle = brute_force_labels(duration, seizures, cfg)
        for t in range(0, duration, 7):  # stride keeps runtime low; offsets vary by duration
            assert label_at(lab, t) == oracle[t], (scenario, t)


# ---------------------------------------------------------------------------
# window extraction
# ---------------------------------------------------------------------------

def test_window_counts_from_interval_lengths():
    assert len(data.window_starts(0, 3600, 20, 5)) == 717
    assert len(data.window_starts(0, 3600, 20, 20)) == 180
    assert len(data.window_starts(0, 15, 20, 5)) == 0


def test_extract_windows_classes_and_shapes():
    fs = 10
    cfg = data.LabelingConfig(sph_s=10, pil_s=100, postictal_exclusion_s=20)
    seizures = [data.Seizure(200, 210)]
    duration = 400
    rec = np.arange(2 * duration * fs, dtype=np.float32).reshape(2, -1)
    lab = data.label_intervals(make_meta(duration, e=2, fs=fs), seizures, cfg)
    wcfg = data.WindowingConfig(window_s=20, preictal_step_s=5, interictal_step_s=20)
    windows = data.extract_windows(rec, fs, lab, wcfg, recording_id="r0")
    pre = [w for w in windows if w.label == data.PREICTAL]
    inter = [w for w in windows if w.label == data.INTERICTAL]
    # preictal [90, 190): floor((100-20)/5)+1 = 17 windows
    assert len(pre) == 17
    assert all(w.data.shape == (2, 200, 1) for w in windows)
    # window data really is the recording slice
    w0 = pre[0]
    i0 = round(w0.start_s * fs)
    np.testing.assert_array_equal(w0.data.data[:, :, 0], rec[:, i0 : i0 + 200])
    assert len(inter) > 0


def test_no_window_crosses_interval_boundary():
    rng = np.random.default_rng(7)
    fs = 5
    for _ in range(10):
        duration = int(rng.integers(1000, 4000))
        cfg = data.LabelingConfig(sph_s=30, pil_s=float(rng.integers(100, 600)),
                                  postictal_exclusion_s=float(rng.integers(50, 500)))
        onset = float(rng.integers(700, duration - 100))
        seizures = [data.Seizure(onset, onset + 20)]
        rec = np.zeros((1, duration * fs), dtype=np.float32)
        lab = data.label_intervals(make_meta(duration, e=1, fs=fs), seizures, cfg)
        windows = data.extract_windows(rec, fs, lab, data.WindowingConfig(), "r")
        for w in windows:
            intervals = lab.preictal if w.label == data.PREICTAL else lab.interictal
            assert any(lo - 1e-9 <= w.start_s and w.start_s + 20 <= hi + 1e-9
                       for lo, hi in intervals)


# ---------------------------------------------------------------------------
# balanced batching
# ---------------------------------------------------------------------------

def test_balanced_batches_on_imbalanced_corpus():
    windows = [tiny_window(data.PREICTAL) for _ in range(100)]
    windows += [tiny_window(data.INTERICTAL) for _ in range(500)]
    batches = list(data.balanced_batches(windows, batch_size=32, seed=1))
    assert len(batches) == int(np.ceil(500 / 16))
    for batch in batches:
        labels = [w.label for w in batch]
        assert labels.count(data.PREICTAL) == 16
        assert labels.count(data.INTERICTAL) == 16


def test_balanced_batches_equal_classes_single_batch():
    windows = [tiny_window(data.PREICTAL, start=i) for i in range(16)]
    windows += [tiny_window(data.INTERICTAL, start=i) for i in range(16)]
    batches = list(data.balanced_batches(windows, batch_size=32, seed=0))
    assert len(batches) == 1
    assert sorted(id(w) for w in batches[0]) == sorted(id(w) for w in windows)


def test_balanced_batches_deterministic_for_seed():
    rng = np.random.default_rng(3)
    windows = [tiny_window(int(rng.random() < 0.3), start=i) for i in range(200)]
    if not any(w.label for w in windows):
        windows[0].label = data.PREICTAL
    seq1 = [[w.start_s for w in b] for b in data.balanced_batches(windows, seed=9, epoch=2)]
    seq2 = [[w.start_s for w in b] for b in data.balanced_batches(windows, seed=9, epoch=2)]
    assert seq1 == seq2
    seq3 = [[w.start_s for w in b] for b in data.balanced_batches(windows, seed=9, epoch=3)]
    assert seq1 != seq3


def test_balanced_batches_requires_both_classes():
    windows = [tiny_window(data.PREICTAL) for _ in range(40)]
    with pytest.raises(InvalidDataset):
        list(data.balanced_batches(windows))


# ---------------------------------------------------------------------------
# synthetic recordings
# ---------------------------------------------------------------------------

def test_synth_deterministic_per_seed():
    a, sa, meta = data.synth_generate(seed=1, electrodes=4, sample_rate_hz=100,
                                      duration_s=7200, n_seizures=1)
    b, sb, _ = data.synth_generate(seed=1, electrodes=4, sample_rate_hz=100,
                                   duration_s=7200, n_seizures=1)
    np.testing.assert_array_equal(a, b)
    assert sa == sb
    assert len(sa) == 1
    assert meta.electrode_count == 4 and meta.sample_rate_hz == 100


def test_synth_different_seeds_same_meta():
    a, _, ma = data.synth_generate(seed=1, electrodes=3, sample_rate_hz=50,
                                   duration_s=3600, n_seizures=1)
    b, _, mb = data.synth_generate(seed=2, electrodes=3, sample_rate_hz=50,
                                   duration_s=3600, n_seizures=1)
    assert not np.array_equal(a, b)
    assert ma.duration_s == mb.duration_s and ma.electrode_count == mb.electrode_count


def test_synth_infeasible_spacing_rejected():
    with pytest.raises(InvalidConfig):
        data.synth_generate(seed=0, electrodes=2, sample_rate_hz=50,
                            duration_s=3600, n_seizures=50)


def test_synth_signature_raises_preictal_energy():
    arr, seizures, meta = data.synth_generate(seed=5, electrodes=4, sample_rate_hz=100,
                                              duration_s=7200, n_seizures=2, snr=4.0)
    cfg = data.PROFILES["synth"].labeling
    lab = data.label_intervals(meta, seizures, cfg)
    pre_lo, pre_hi = lab.preictal[0]
    int_lo, int_hi = lab.interictal[0]
    fs = meta.sample_rate_hz
    pre_seg = arr[0, round(pre_lo * fs) : round(pre_hi * fs)]
    int_seg = arr[0, round(int_lo * fs) : round(int_hi * fs)]
    assert pre_seg.var() > 2.0 * int_seg.var()


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_recording_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    arr = rng.normal(size=(3, 500)).astype(np.float32)
    path = tmp_path / "r.eegr"
    data.save_recording(path, arr, 125)
    meta, back = data.load_recording(path)
    np.testing.assert_array_equal(arr, back)
    assert meta.electrode_count == 3
    assert meta.sample_rate_hz == 125
    assert meta.duration_s == pytest.approx(4.0)


def test_recording_row_count_mismatch_rejected(tmp_path):
    arr = np.zeros((15, 100), dtype=np.float32)
    path = tmp_path / "r.eegr"
    data.save_recording(path, arr, 100)
    raw = bytearray(path.read_bytes())
    raw[6:8] = (16).to_bytes(2, "little")  # claim 16 electrodes, payload has 15
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptInput):
        data.load_recording(path)


def test_recording_bad_magic_rejected(tmp_path):
    path = tmp_path / "r.eegr"
    path.write_bytes(b"JUNKJUNKJUNK")
    with pytest.raises(CorruptInput):
        data.load_recording(path)


def test_annotations_round_trip_and_validation(tmp_path):
    path = tmp_path / "a.tsv"
    seizures = [data.Seizure(100.0, 130.0), data.Seizure(900.5, 960.25)]
    data.save_annotations(path, seizures)
    assert data.load_annotations(path) == seizures
    path.write_text("100.0\t90.0\n")
    with pytest.raises(InvalidAnnotations):
        data.load_annotations(path)
    path.write_text("100.0\t130.0\n50.0\t60.0\n")
    with pytest.raises(InvalidAnnotations):
        data.load_annotations(path)
