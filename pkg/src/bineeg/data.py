"""Data pipeline: interval labeling, window extraction, batching, synthesis, IO.

Labeling semantics: each seizure at onset o with guard gap sph and preictal
length pil yields a preictal interval [o - sph - pil, o - sph). The guard gap,
the seizure itself, and a postictal exclusion after it are excluded from both
classes; preictal time swallowed by an exclusion zone (e.g. a nearby earlier
seizure) is dropped. Everything else is interictal.

Windows are fixed-length and class-stepped: preictal windows overlap (small
step) to oversample the rare class, interictal windows tile without overlap.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from ._binio import ByteReader, ByteWriter
from .errors import (CorruptInput, InvalidAnnotations, InvalidConfig,
                     InvalidDataset)
from .tensor import DenseTensor

INTERICTAL = 0
PREICTAL = 1

RECORDING_MAGIC = b"EEGR"
RECORDING_VERSION = 1


@dataclass(frozen=True)
class RecordingMeta:
    id: str
    electrode_count: int
    sample_rate_hz: int
    duration_s: float


@dataclass(frozen=True)
class Seizure:
    onset_s: float
    end_s: float


@dataclass(frozen=True)
class LabelingConfig:
    sph_s: float = 300.0
    pil_s: float = 3600.0
    postictal_exclusion_s: float = 3600.0


@dataclass(frozen=True)
class WindowingConfig:
    window_s: float = 20.0
    preictal_step_s: float = 5.0
    interictal_step_s: float = 20.0


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    labeling: LabelingConfig
    windowing: WindowingConfig
    electrodes: int
    sample_rate_hz: int


PROFILES = {
    "aes": DatasetProfile("aes", LabelingConfig(300.0, 3600.0, 3600.0),
                          WindowingConfig(), 16, 400),
    "chbmit": DatasetProfile("chbmit", LabelingConfig(300.0, 1800.0, 3600.0),
                             WindowingConfig(), 23, 256),
    # desk-scale profile used by the synthetic corpus
    "synth": DatasetProfile("synth", LabelingConfig(60.0, 600.0, 600.0),
                            WindowingConfig(), 4, 100),
}


@dataclass
class LabeledWindow:
    recording_id: str
    start_s: float
    label: int
    data: DenseTensor


@dataclass
class IntervalLabeling:
    preictal: list  # disjoint sorted [lo, hi) pairs
    interictal: list
    excluded: list


# ---------------------------------------------------------------------------
# interval algebra
# ---------------------------------------------------------------------------

def _merge(intervals):
    out = []
    for lo, hi in sorted(intervals):
        if hi <= lo:
            continue
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _subtract(base, remove):
    out = []
    for lo, hi in base:
        cur = lo
        for rlo, rhi in remove:
            if rhi <= cur or rlo >= hi:
                continue
            if rlo > cur:
                out.append((cur, rlo))
            cur = max(cur, rhi)
            if cur >= hi:
                break
        if cur < hi:
            out.append((cur, hi))
    return out


def _clip(intervals, lo, hi):
    return [(max(a, lo), min(b, hi)) for a, b in intervals if min(b, hi) > max(a, lo)]


def validate_annotations(seizures, duration_s):
    prev_end = None
    for sz in seizures:
        if not (0.0 <= sz.onset_s < sz.end_s <= duration_s):
            raise InvalidAnnotations(
                f"seizure [{sz.onset_s}, {sz.end_s}) outside recording or inverted"
            )
        if prev_end is not None and sz.onset_s < prev_end:
            raise InvalidAnnotations("seizure annotations overlap or are unsorted")
        prev_end = sz.end_s


def seizure_preictal_range(seizure, cfg):
    """The raw preictal range [onset - sph - pil, onset - sph) of one seizure."""
    return (seizure.onset_s - cfg.sph_s - cfg.pil_s, seizure.onset_s - cfg.sph_s)


def label_intervals(meta, seizures, cfg):
    """Split [0, duration) into preictal / interictal / excluded intervals."""
    duration = meta.duration_s
    validate_annotations(seizures, duration)
    excluded = _merge([(sz.onset_s - cfg.sph_s, sz.end_s + cfg.postictal_exclusion_s)
                       for sz in seizures])
    excluded = _clip(excluded, 0.0, duration)
    raw_pre = _merge([seizure_preictal_range(sz, cfg) for sz in seizures])
    preictal = _subtract(_clip(raw_pre, 0.0, duration), excluded)
    interictal = _subtract([(0.0, duration)], _merge(excluded + raw_pre))
    return IntervalLabeling(preictal=preictal, interictal=interictal, excluded=excluded)


# ---------------------------------------------------------------------------
# window extraction
# ---------------------------------------------------------------------------

def window_starts(lo, hi, window_s, step_s):
    """Window start times fully inside [lo, hi): lo, lo+step, ..."""
    length = hi - lo
    if length < window_s:
        return []
    count = int(math.floor((length - window_s) / step_s + 1e-9)) + 1
    return [lo + k * step_s for k in range(count)]


def extract_windows(recording, sample_rate_hz, labeling, wcfg, recording_id="rec"):
    """Cut labeled windows out of an (E, S) recording array."""
    samples_per_window = round(wcfg.window_s * sample_rate_hz)
    if abs(samples_per_window - wcfg.window_s * sample_rate_hz) > 1e-6:
        raise InvalidConfig("window_s * sample_rate_hz must be integral")
    windows = []
    plan = ((labeling.preictal, PREICTAL, wcfg.preictal_step_s),
            (labeling.interictal, INTERICTAL, wcfg.interictal_step_s))
    for intervals, label, step in plan:
        for lo, hi in intervals:
            for start in window_starts(lo, hi, wcfg.window_s, step):
                i0 = round(start * sample_rate_hz)
                seg = recording[:, i0 : i0 + samples_per_window]
                windows.append(LabeledWindow(recording_id, start, label,
                                             DenseTensor(seg[:, :, None])))
    windows.sort(key=lambda w: w.start_s)
    return windows


# ---------------------------------------------------------------------------
# balanced batching
# ---------------------------------------------------------------------------

def _class_split(windows):
    pre = [w for w in windows if w.label == PREICTAL]
    inter = [w for w in windows if w.label == INTERICTAL]
    if not pre or not inter:
        raise InvalidDataset("both classes must be present for balanced batching")
    return pre, inter


def batches_per_epoch(windows, batch_size=32):
    pre, inter = _class_split(windows)
    half = batch_size // 2
    return math.ceil(max(len(pre), len(inter)) / half)


def _sample_stream(rng, items, count):
    """count picks: permutations back to back, so each cycle is replacement-free."""
    picks = []
    while len(picks) < count:
        order = rng.permutation(len(items))
        picks.extend(order[: count - len(picks)])
    return [items[i] for i in picks]


def balanced_batches(windows, batch_size=32, seed=0, epoch=0):
    """One epoch of class-balanced batches, deterministic for (seed, epoch).

    Every batch holds exactly batch_size/2 windows of each class; the rarer
    class is recycled (fresh shuffle per cycle) until the commoner class is
    covered.
    """
    if batch_size % 2 != 0 or batch_size < 2:
        raise InvalidDataset(f"batch size must be even and positive, got {batch_size}")
    pre, inter = _class_split(windows)
    half = batch_size // 2
    n_batches = batches_per_epoch(windows, batch_size)
    rng = np.random.default_rng([seed, epoch])
    pre_stream = _sample_stream(rng, pre, n_batches * half)
    inter_stream = _sample_stream(rng, inter, n_batches * half)
    for b in range(n_batches):
        yield pre_stream[b * half : (b + 1) * half] + inter_stream[b * half : (b + 1) * half]


# ---------------------------------------------------------------------------
# synthetic EEG
# ---------------------------------------------------------------------------

SIGNATURE_HZ = 5.0
SIGNATURE_AM_PERIOD_S = 6.0


def synth_generate(seed, electrodes, sample_rate_hz, duration_s, n_seizures,
                   snr=4.0, labeling=None, seizure_duration_s=30.0):
    """Deterministic synthetic recording with seizures and a preictal signature.

    Background: per-electrode lowpass-filtered white noise at unit scale.
    Within each preictal interval an amplitude-modulated sinusoid of peak
    amplitude `snr` is added to the first half of the electrodes; snr=0 makes
    the classes statistically identical.

    Returns (data (E, S) float32, seizures, meta).
    """
    if labeling is None:
        labeling = PROFILES["synth"].labeling
    e = int(electrodes)
    fs = int(sample_rate_hz)
    n_samples = round(duration_s * fs)
    slot = labeling.pil_s + labeling.sph_s + seizure_duration_s + labeling.postictal_exclusion_s
    if n_seizures > 0 and n_seizures * slot > duration_s:
        raise InvalidConfig(
            f"{n_seizures} seizures need {n_seizures * slot:.0f}s "
            f"(pil+sph+ictal+postictal each), recording is {duration_s:.0f}s"
        )
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((e, n_samples), dtype=np.float32)
    if fs > 60:
        b, a = _signal.butter(4, 30.0 / (fs / 2.0))
        data = _signal.lfilter(b, a, data, axis=1).astype(np.float32)
        data /= data.std(axis=1, keepdims=True)

    gap = (duration_s - n_seizures * slot) / (n_seizures + 1)
    seizures = []
    sig_electrodes = max(1, e // 2)
    t_axis = np.arange(n_samples, dtype=np.float64) / fs
    for k in range(n_seizures):
        onset = gap * (k + 1) + slot * k + labeling.pil_s + labeling.sph_s
        seizures.append(Seizure(onset_s=onset, end_s=onset + seizure_duration_s))
        lo = onset - labeling.sph_s - labeling.pil_s
        hi = onset - labeling.sph_s
        i0, i1 = round(lo * fs), round(hi * fs)
        t = t_axis[i0:i1]
        envelope = 0.5 * (1.0 + np.sin(2 * np.pi * t / SIGNATURE_AM_PERIOD_S))
        wave = (snr * envelope * np.sin(2 * np.pi * SIGNATURE_HZ * t)).astype(np.float32)
        data[:sig_electrodes, i0:i1] += wave

    meta = RecordingMeta(id=f"synth-{seed}", electrode_count=e, sample_rate_hz=fs,
                         duration_s=n_samples / fs)
    return data, seizures, meta


# ---------------------------------------------------------------------------
# recording / annotation files
# ---------------------------------------------------------------------------

def save_recording(path, data, sample_rate_hz):
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != 2:
        raise InvalidConfig(f"recording must be (electrodes, samples), got {arr.shape}")
    w = ByteWriter()
    w.raw(RECORDING_MAGIC)
    w.u16(RECORDING_VERSION)
    w.u16(arr.shape[0])
    w.u32(int(sample_rate_hz))
    w.u64(arr.shape[1])
    w.raw(arr.astype("<f4", copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_recording(path):
    """Read a recording file; returns (RecordingMeta, (E, S) float32 array)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    r = ByteReader(raw, CorruptInput)
    if r.take(4) != RECORDING_MAGIC:
        raise CorruptInput("bad magic: not a recording file")
    version = r.u16()
    if version != RECORDING_VERSION:
        raise CorruptInput(f"unsupported recording version {version}")
    e = r.u16()
    fs = r.u32()
    count = r.u64()
    if e < 1 or fs < 1:
        raise CorruptInput(f"invalid header: E={e}, fs={fs}")
    payload = r.take(e * count * 4)
    r.expect_end()
    data = np.frombuffer(payload, dtype="<f4").reshape(e, count).astype(np.float32)
    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    meta = RecordingMeta(id=name, electrode_count=e, sample_rate_hz=fs,
                         duration_s=count / fs)
    return meta, data


def save_annotations(path, seizures):
    with open(path, "w", encoding="utf-8") as fh:
        for sz in seizures:
            fh.write(f"{sz.onset_s:.6f}\t{sz.end_s:.6f}\n")


def load_annotations(path):
    """Read tab-separated onset/end seconds, one seizure per line, sorted."""
    seizures = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InvalidAnnotations(f"line {lineno}: expected onset<TAB>end")
            try:
                onset, end = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise InvalidAnnotations(f"line {lineno}: {exc}") from exc
            if end <= onset:
                raise InvalidAnnotations(f"line {lineno}: end {end} <= onset {onset}")
            if seizures and onset < seizures[-1].end_s:
                raise InvalidAnnotations(f"line {lineno}: annotations unsorted or overlapping")
            seizures.append(Seizure(onset_s=onset, end_s=end))
    return seizures
