"""Corpus handling: session recordings, windowing, splits, and profiles.

A corpus is a list of SessionRecording, each one continuous multichannel
recording of one user in one session.  Windows are cut per session (never
across session boundaries); training windows may overlap, evaluation
windows never do.  Splits are session-level: validation and test come
from sessions the classifier never trained on.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentationSpec, Window
from .errors import ConfigError, DataError

_MAGIC = b"STSD"
_VERSION = 1


@dataclass(frozen=True, eq=False)
class SessionRecording:
    """One user's continuous recording in one session: samples [length, channels]."""

    user_id: int
    session_id: int
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float32))
        if self.samples.ndim != 2:
            raise DataError(
                f"session {self.user_id}/{self.session_id}: samples must be "
                f"[length, channels], got {self.samples.shape}")

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]


# ---------------------------------------------------------------------------
# corpus files


def save_corpus(recordings: list[SessionRecording], path: str | Path) -> None:
    """Binary corpus: magic, version, session count, then per session a
    (user_id, session_id, length, channels) header and float32 payload."""
    path = Path(path)
    blob = bytearray(struct.pack("<4sII", _MAGIC, _VERSION, len(recordings)))
    for rec in recordings:
        blob += struct.pack("<IIII", rec.user_id, rec.session_id,
                            rec.length, rec.channels)
        blob += np.ascontiguousarray(rec.samples, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def load_corpus(path: str | Path) -> list[SessionRecording]:
    """Load a corpus; .csv files go through the text reader, all else binary."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    if path.suffix.lower() == ".csv":
        return load_csv_corpus(path)
    return load_binary_corpus(path)


def load_binary_corpus(path: str | Path) -> list[SessionRecording]:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise DataError(f"{path}: not a corpus file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported corpus version {version}")
    recordings = []
    offset = 12
    for i in range(count):
        if offset + 16 > len(blob):
            raise DataError(f"{path}: truncated at session {i}")
        uid, sid, length, channels = struct.unpack_from("<IIII", blob, offset)
        offset += 16
        nbytes = length * channels * 4
        if offset + nbytes > len(blob):
            raise DataError(f"{path}: truncated payload in session {i}")
        samples = np.frombuffer(blob, dtype="<f4", count=length * channels,
                                offset=offset).reshape(length, channels)
        offset += nbytes
        recordings.append(SessionRecording(uid, sid, samples.copy()))
    return recordings


def load_csv_corpus(path: str | Path) -> list[SessionRecording]:
    """CSV corpus: header user_id,session_id,<channel...>; rows in time order,
    sessions contiguous."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        for col in ("user_id", "session_id"):
            if col not in header:
                raise DataError(f"{path}: header is missing column {col!r}")
        if header[:2] != ["user_id", "session_id"] or len(header) < 3:
            raise DataError(
                f"{path}: header must be user_id,session_id,<channels...>, got {header}")
        channels = len(header) - 2
        recordings: list[SessionRecording] = []
        seen: set[tuple[int, int]] = set()
        current: tuple[int, int] | None = None
        rows: list[list[float]] = []

        def close():
            if current is not None:
                recordings.append(SessionRecording(current[0], current[1], np.array(rows)))

        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                uid, sid = int(row[0]), int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}")
            key = (uid, sid)
            if key != current:
                if key in seen:
                    raise DataError(
                        f"{path}:{lineno}: session {key} rows are not contiguous")
                close()
                seen.add(key)
                current = key
                rows = []
            rows.append(values)
        close()
    if not recordings:
        raise DataError(f"{path}: no data rows")
    return recordings


# ---------------------------------------------------------------------------
# synthetic corpus

# Each user owns a disjoint frequency band; sessions differ in amplitude and
# noise but keep the user's frequencies, so identity is recoverable across
# sessions while raw amplitude is a nuisance.


def synth_corpus(n_users: int, sessions_per_user: int, session_len: int,
                 channels: int, seed: int = 0, harmonics: int = 2,
                 noise_sigma: float = 0.1, amp_sigma: float = 0.15,
                 offset: float = 0.0) -> list[SessionRecording]:
    if n_users < 1 or sessions_per_user < 1 or session_len < 2 or channels < 1:
        raise ConfigError("synth_corpus: all sizes must be positive (session_len >= 2)")
    rng = np.random.default_rng(seed)
    lo, hi = 0.06, 0.44  # cycles per sample, away from DC and Nyquist
    edges = np.linspace(lo, hi, n_users + 1)
    recordings = []
    for u in range(n_users):
        freqs = rng.uniform(edges[u], edges[u + 1], (channels, harmonics))
        phases = rng.uniform(0.0, 2.0 * np.pi, (channels, harmonics))
        amps = rng.uniform(0.6, 1.4, (channels, harmonics))
        t = np.arange(session_len)[:, None, None]
        base = (amps * np.sin(2.0 * np.pi * freqs * t + phases)).sum(axis=2)
        for s in range(sessions_per_user):
            gain = rng.normal(1.0, amp_sigma)
            noise = rng.normal(0.0, noise_sigma, (session_len, channels))
            samples = offset + gain * base + noise
            recordings.append(SessionRecording(u, u * sessions_per_user + s, samples))
    return recordings


# ---------------------------------------------------------------------------
# windowing


def window_starts(length: int, window_len: int, overlap: float) -> list[int]:
    """Start offsets of consecutive windows; stride is the non-overlapped part."""
    if window_len < 1:
        raise ConfigError(f"window length must be >= 1, got {window_len}")
    if not 0.0 <= overlap < 1.0:
        raise ConfigError(f"overlap must lie in [0, 1), got {overlap}")
    stride = max(1, int(round(window_len * (1.0 - overlap))))
    return list(range(0, length - window_len + 1, stride))


def window_sessions(recordings: list[SessionRecording], window_len: int,
                    overlap: float, label: int | None | str = "user") -> list[Window]:
    """Cut every session into windows.  label="user" keeps the user id,
    label=None strips it (unlabelled pool), an int relabels."""
    windows = []
    for rec in recordings:
        uid = rec.user_id if label == "user" else label
        for start in window_starts(rec.length, window_len, overlap):
            windows.append(Window(rec.samples[start:start + window_len],
                                  user_id=uid, session_id=rec.session_id))
    return windows


def stack_windows(windows: list[Window]) -> np.ndarray:
    return np.stack([w.values for w in windows])


def window_labels(windows: list[Window]) -> np.ndarray:
    labels = [w.user_id for w in windows]
    if any(l is None for l in labels):
        raise DataError("window set contains unlabelled windows")
    return np.asarray(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitConfig:
    """How a corpus is carved into pools.

    d1_fraction: share of users put in the auxiliary (pretraining) group.
    unlabelled_fraction: share of each user's training sessions whose labels
    are withheld.  Validation and test each take dedicated sessions.
    """

    d1_fraction: float = 1.0 / 3.0
    val_sessions: int = 1
    test_sessions: int = 1
    unlabelled_fraction: float = 0.5
    train_overlap: float = 0.5
    eval_overlap: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.d1_fraction < 1.0:
            raise ConfigError(f"d1_fraction must lie in (0, 1), got {self.d1_fraction}")
        if self.val_sessions < 1 or self.test_sessions < 1:
            raise ConfigError("val_sessions and test_sessions must be >= 1")
        if not 0.0 < self.unlabelled_fraction < 1.0:
            raise ConfigError(
                f"unlabelled_fraction must lie in (0, 1), got {self.unlabelled_fraction}")


def split_users(recordings: list[SessionRecording], d1_fraction: float,
                rng: np.random.Generator) -> tuple[list[SessionRecording], list[SessionRecording]]:
    """Split user ids into two disjoint groups (auxiliary D1, target D2)."""
    users = sorted({rec.user_id for rec in recordings})
    if len(users) < 2:
        raise DataError(f"user split needs at least 2 users, got {len(users)}")
    order = rng.permutation(len(users))
    n1 = int(round(d1_fraction * len(users)))
    n1 = min(max(n1, 1), len(users) - 1)
    d1_users = {users[i] for i in order[:n1]}
    d1 = [rec for rec in recordings if rec.user_id in d1_users]
    d2 = [rec for rec in recordings if rec.user_id not in d1_users]
    return d1, d2


@dataclass
class SessionPools:
    unlabelled: list[SessionRecording]
    labelled: list[SessionRecording]
    val: list[SessionRecording]
    test: list[SessionRecording]


def partition_sessions(recordings: list[SessionRecording],
                       cfg: SplitConfig) -> SessionPools:
    """Deterministic session-level split per user, by ascending session id."""
    by_user: dict[int, list[SessionRecording]] = {}
    for rec in recordings:
        by_user.setdefault(rec.user_id, []).append(rec)
    pools = SessionPools([], [], [], [])
    for uid in sorted(by_user):
        sessions = sorted(by_user[uid], key=lambda r: r.session_id)
        reserved = cfg.val_sessions + cfg.test_sessions
        n_train = len(sessions) - reserved
        if n_train < 2:
            raise DataError(
                f"user {uid}: {len(sessions)} sessions cannot cover unlabelled + "
                f"labelled + {cfg.val_sessions} val + {cfg.test_sessions} test")
        n_unlab = min(math.ceil(n_train * cfg.unlabelled_fraction), n_train - 1)
        pools.unlabelled += sessions[:n_unlab]
        pools.labelled += sessions[n_unlab:n_train]
        pools.val += sessions[n_train:n_train + cfg.val_sessions]
        pools.test += sessions[n_train + cfg.val_sessions:]
    return pools


@dataclass
class ScenarioSplit:
    """Windows for one evaluation scenario.

    labelled_full holds every labelled training window per class in a fixed
    shuffled order; labelled_at(f) takes per-class prefixes, so smaller
    fractions are strict subsets of larger ones.
    """

    scenario: int
    n_classes: int
    class_of_user: dict[int, int]
    unlabelled: list[Window]
    labelled_full: dict[int, list[Window]]
    val: list[Window]
    test: list[Window]
    # only scenario 1 carries these, for the transfer baseline
    source_labelled: list[Window] | None = None
    source_val: list[Window] | None = None
    n_source_classes: int = 0

    def labelled_at(self, fraction: float) -> list[Window]:
        if not 0.0 < fraction <= 1.0:
            raise ConfigError(f"label fraction must lie in (0, 1], got {fraction}")
        out: list[Window] = []
        for cls in sorted(self.labelled_full):
            pool = self.labelled_full[cls]
            take = int(round(fraction * len(pool)))
            if take < 1:
                raise DataError(
                    f"label fraction {fraction} leaves class {cls} with no "
                    f"training windows ({len(pool)} available)")
            out.extend(pool[:take])
        return out


def _class_windows(pools_by_user: dict[int, list[SessionRecording]],
                   class_of_user: dict[int, int], window_len: int,
                   overlap: float) -> dict[int, list[Window]]:
    out: dict[int, list[Window]] = {cls: [] for cls in set(class_of_user.values())}
    for uid, recs in pools_by_user.items():
        cls = class_of_user[uid]
        out[cls].extend(window_sessions(recs, window_len, overlap, label=cls))
    return out


def _group(recordings: list[SessionRecording]) -> dict[int, list[SessionRecording]]:
    by_user: dict[int, list[SessionRecording]] = {}
    for rec in recordings:
        by_user.setdefault(rec.user_id, []).append(rec)
    return by_user


def make_scenario(scenario: int, d1: list[SessionRecording],
                  d2: list[SessionRecording], window_len: int,
                  cfg: SplitConfig, rng: np.random.Generator) -> ScenarioSplit:
    """Assemble the pools for one scenario.

    1: pretrain on auxiliary users (D1), classify target users (D2).
    2: pretrain on the target users' own unlabelled sessions (D2 only).
    3: pretrain on D1, classify the union of D1 and D2 users.
    """
    if scenario not in (1, 2, 3):
        raise ConfigError(f"scenario must be 1, 2 or 3, got {scenario}")
    if scenario in (1, 3) and not d1:
        raise DataError(f"scenario {scenario} needs a non-empty auxiliary group")
    if not d2:
        raise DataError("target group is empty")

    p1 = partition_sessions(d1, cfg) if d1 else None
    p2 = partition_sessions(d2, cfg)

    d1_users = sorted({rec.user_id for rec in d1})
    d2_users = sorted({rec.user_id for rec in d2})

    if scenario == 3:
        class_of_user = {u: i for i, u in enumerate(d1_users + d2_users)}
    else:
        class_of_user = {u: i for i, u in enumerate(d2_users)}

    unlab_recs = p2.unlabelled if scenario == 2 else p1.unlabelled
    unlabelled = window_sessions(unlab_recs, window_len, cfg.train_overlap, label=None)

    if scenario == 3:
        labelled_full = _class_windows(_group(p1.labelled + p2.labelled), class_of_user,
                                       window_len, cfg.train_overlap)
        val = (window_sessions(p1.val, window_len, cfg.eval_overlap)
               + window_sessions(p2.val, window_len, cfg.eval_overlap))
        test = (window_sessions(p1.test, window_len, cfg.eval_overlap)
                + window_sessions(p2.test, window_len, cfg.eval_overlap))
    else:
        labelled_full = _class_windows(_group(p2.labelled), class_of_user,
                                       window_len, cfg.train_overlap)
        val = window_sessions(p2.val, window_len, cfg.eval_overlap)
        test = window_sessions(p2.test, window_len, cfg.eval_overlap)

    def relabel(windows):
        return [Window(w.values, class_of_user[w.user_id], w.session_id) for w in windows]

    val, test = relabel(val), relabel(test)

    empty = [cls for cls, pool in labelled_full.items() if not pool]
    if empty:
        raise DataError(f"classes with no labelled training windows: {sorted(empty)}")

    # fixed per-class shuffle so fraction subsets nest
    base = int(rng.integers(2 ** 32))
    for cls, pool in labelled_full.items():
        order = np.random.default_rng((base, cls)).permutation(len(pool))
        labelled_full[cls] = [pool[i] for i in order]

    split = ScenarioSplit(scenario, len(class_of_user), class_of_user,
                          unlabelled, labelled_full, val, test)

    if scenario == 1:
        src_map = {u: i for i, u in enumerate(d1_users)}
        src_windows: list[Window] = []
        for uid, recs in _group(p1.labelled).items():
            src_windows += window_sessions(recs, window_len, cfg.train_overlap,
                                           label=src_map[uid])
        split.source_labelled = src_windows
        split.source_val = [Window(w.values, src_map[w.user_id], w.session_id)
                            for w in window_sessions(p1.val, window_len, cfg.eval_overlap)]
        split.n_source_classes = len(d1_users)
    return split


# ---------------------------------------------------------------------------
# dataset profiles


@dataclass(frozen=True)
class DatasetProfile:
    """Architecture and schedule defaults for one data source."""

    name: str
    window_len: int
    channels: int
    fe_filters: tuple[int, ...]
    projector: tuple[int, ...]
    predictor: tuple[int, ...]
    recipe: tuple[AugmentationSpec, ...]
    mtssl_specs: tuple[AugmentationSpec, ...]
    pretrain_lr: float
    classifier_lr: float
    weight_decay: float
    pretrain_epochs: int
    classifier_epochs: int
    batch_size: int
    probe_samples_per_user: int
    classifier_hidden: tuple[int, ...] = (256, 64)
    kernel_size: int = 3


def _spec(kind: str, **params) -> AugmentationSpec:
    return AugmentationSpec(kind, params)


_SIGMA_JITTER = math.sqrt(0.8)     # noise variance 0.8
_SIGMA_SCALING = math.sqrt(0.65)   # scaling-factor variance 0.65

_FULL_MTSSL = (
    _spec("jitter", sigma=_SIGMA_JITTER),
    _spec("random_scaling", sigma=_SIGMA_SCALING),
    _spec("magnitude_warp", sigma=0.2),
    _spec("time_warp", sigma=0.2),
    _spec("flip"),
    _spec("drop"),
    _spec("random_sampling"),
    _spec("permutation"),
    _spec("negation"),
    _spec("channel_shuffle"),
)

PROFILES: dict[str, DatasetProfile] = {
    # wearable-sensor music-listening corpus: 30-step windows of 24 channels
    "musicid": DatasetProfile(
        name="musicid", window_len=30, channels=24,
        fe_filters=(128, 256), projector=(2048, 2048), predictor=(512, 2048),
        recipe=(_spec("random_scaling", sigma=_SIGMA_SCALING),
                _spec("jitter", sigma=_SIGMA_JITTER)),
        mtssl_specs=_FULL_MTSSL,
        pretrain_lr=3e-5, classifier_lr=1e-2, weight_decay=1e-2,
        pretrain_epochs=30, classifier_epochs=30, batch_size=32,
        probe_samples_per_user=60),
    # motor-movement EEG corpus: 128-step windows of 40 channels
    "mmi": DatasetProfile(
        name="mmi", window_len=128, channels=40,
        fe_filters=(48, 96), projector=(1024, 1024), predictor=(256, 1024),
        recipe=(_spec("random_scaling", sigma=_SIGMA_SCALING), _spec("flip")),
        mtssl_specs=(_spec("random_scaling", sigma=_SIGMA_SCALING),
                     _spec("magnitude_warp", sigma=0.2),
                     _spec("time_warp", sigma=0.2),
                     _spec("negation")),
        pretrain_lr=3e-5, classifier_lr=1e-2, weight_decay=1e-2,
        pretrain_epochs=10, classifier_epochs=30, batch_size=32,
        probe_samples_per_user=300),
    # synthetic frequency-band corpus used by the test suite and demos
    "synth": DatasetProfile(
        name="synth", window_len=30, channels=8,
        fe_filters=(32, 64), projector=(64, 64), predictor=(32, 64),
        recipe=(_spec("random_scaling", sigma=0.4), _spec("jitter", sigma=0.4)),
        mtssl_specs=(_spec("random_scaling", sigma=0.4),
                     _spec("jitter", sigma=0.4),
                     _spec("time_warp", sigma=0.2),
                     _spec("negation")),
        pretrain_lr=1e-3, classifier_lr=1e-2, weight_decay=1e-4,
        pretrain_epochs=12, classifier_epochs=30, batch_size=32,
        probe_samples_per_user=30),
}


def get_profile(name: str) -> DatasetProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; expected one of {tuple(PROFILES)}")
