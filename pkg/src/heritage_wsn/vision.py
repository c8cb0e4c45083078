"""Behaviour classification: synthetic camera frames, classifiers and evaluation.

Camera frames are opaque byte strings. Frames produced by
:func:`render_synthetic_image` carry an 8-byte header whose sixth byte is the
ground-truth class, so tests always have an exact oracle::

    magic(4) | scheme(1) | class_id(1) | width(1) | height(1) | pixels(w*h)
"""

from __future__ import annotations

import csv
import enum
import io
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"\x89SIM"
HEADER_LEN = 8
FRAME_SIDE = 16
N_BINS = 16
# Fraction of pixels drawn from the class intensity band; the rest are uniform noise.
BAND_FRACTION = 0.7


class Scheme(enum.IntEnum):
    BINARY = 1
    MULTIMODAL = 2


BINARY_CLASSES = ("acceptable", "risky")
MULTIMODAL_CLASSES = ("empty", "observing", "approaching", "touching")


def default_classes(scheme: Scheme) -> tuple[str, ...]:
    return BINARY_CLASSES if scheme is Scheme.BINARY else MULTIMODAL_CLASSES


class VisionError(ValueError):
    pass


class NotSyntheticImage(VisionError):
    pass


class StratificationError(VisionError):
    pass


@dataclass(frozen=True)
class BehaviorLabel:
    scheme: Scheme
    class_id: int  # -1 marks UNKNOWN (classifier failure)

    def __post_init__(self):
        if self.scheme is Scheme.BINARY and self.class_id >= len(BINARY_CLASSES):
            raise VisionError(f"class_id {self.class_id} outside binary scheme")
        if self.class_id < -1:
            raise VisionError(f"invalid class_id {self.class_id}")

    @property
    def name(self) -> str:
        if self.class_id < 0:
            return "UNKNOWN"
        classes = default_classes(self.scheme)
        if self.class_id < len(classes):
            return classes[self.class_id]
        return f"class_{self.class_id}"

    @classmethod
    def unknown(cls, scheme: Scheme = Scheme.BINARY) -> BehaviorLabel:
        return cls(scheme, -1)


# Ground-truth behaviour from the scripted environment.
RISKY_DISTANCE_CM = 100
APPROACH_DISTANCE_CM = 200


def behaviour_class(visitor_present: bool, visitor_distance_cm: float, scheme: Scheme) -> int:
    """Ground-truth class for a frame taken under the given conditions."""
    if scheme is Scheme.BINARY:
        return int(visitor_present and visitor_distance_cm < RISKY_DISTANCE_CM)
    if not visitor_present:
        return 0
    if visitor_distance_cm >= APPROACH_DISTANCE_CM:
        return 1
    if visitor_distance_cm >= RISKY_DISTANCE_CM:
        return 2
    return 3


def render_synthetic_image(scheme: Scheme, class_id: int, seed: int, n_classes: int | None = None) -> bytearray:
    """Deterministic frame whose pixel intensities concentrate in a class band.

    The band for class ``k`` of ``K`` is ``[256k/K, 256(k+1)/K)``; byte
    histograms of different classes are therefore linearly separable with
    overwhelming probability.
    """
    k = n_classes or len(default_classes(scheme))
    if not 0 <= class_id < k:
        raise VisionError(f"class_id {class_id} outside {k} classes")
    rng = random.Random(seed)
    lo = 256 * class_id // k
    hi = 256 * (class_id + 1) // k
    pixels = bytearray(FRAME_SIDE * FRAME_SIDE)
    for i in range(len(pixels)):
        if rng.random() < BAND_FRACTION:
            pixels[i] = rng.randrange(lo, hi)
        else:
            pixels[i] = rng.randrange(256)
    header = MAGIC + bytes([int(scheme), class_id, FRAME_SIDE, FRAME_SIDE])
    return bytearray(header) + pixels


def oracle_classify(image: bytes | bytearray) -> BehaviorLabel:
    """Read the embedded ground-truth label from a synthetic frame."""
    if len(image) < HEADER_LEN or bytes(image[:4]) != MAGIC:
        raise NotSyntheticImage("not a synthetic image")
    try:
        scheme = Scheme(image[4])
    except ValueError:
        raise NotSyntheticImage(f"not a synthetic image: bad scheme byte {image[4]}") from None
    w, h = image[6], image[7]
    if len(image) != HEADER_LEN + w * h:
        raise NotSyntheticImage("not a synthetic image: size mismatch")
    return BehaviorLabel(scheme, image[5])


# --------------------------------------------------------------------------
# datasets


@dataclass
class LabeledDataset:
    items: list[tuple[bytes, BehaviorLabel]]
    scheme: Scheme
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.items:
            raise VisionError("dataset is empty")
        if not self.classes:
            self.classes = default_classes(self.scheme)
        for _, label in self.items:
            if label.scheme is not self.scheme:
                raise VisionError("dataset mixes label schemes")
            if not 0 <= label.class_id < len(self.classes):
                raise VisionError(f"label {label.class_id} outside dataset classes")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def subset(self, indices: Sequence[int]) -> LabeledDataset:
        return LabeledDataset([self.items[i] for i in indices], self.scheme, self.classes)


def make_synthetic_dataset(n: int, scheme: Scheme, seed: int, n_classes: int | None = None) -> LabeledDataset:
    """Balanced synthetic dataset: item ``i`` has class ``i mod K``."""
    k = n_classes or len(default_classes(scheme))
    rng = random.Random(seed)
    items = []
    for i in range(n):
        cls = i % k
        img = render_synthetic_image(scheme, cls, rng.getrandbits(64), k)
        items.append((bytes(img), BehaviorLabel(scheme, cls)))
    classes = default_classes(scheme) if k == len(default_classes(scheme)) else tuple(f"class_{j}" for j in range(k))
    return LabeledDataset(items, scheme, classes)


def write_dataset(ds: LabeledDataset, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scheme_name = ds.scheme.name.lower()
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "scheme", "class_id"])
        for i, (payload, label) in enumerate(ds.items):
            name = f"img_{i:04d}.bin"
            (directory / name).write_bytes(payload)
            w.writerow([name, scheme_name, label.class_id])
    return directory


def load_dataset(directory: str | Path, scheme: Scheme | str) -> LabeledDataset:
    directory = Path(directory)
    if isinstance(scheme, str):
        scheme = Scheme[scheme.upper()]
    labels_path = directory / "labels.csv"
    if not labels_path.is_file():
        raise VisionError(f"{directory} has no labels.csv")
    items = []
    with open(labels_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["scheme"].upper() != scheme.name:
                raise VisionError(
                    f"dataset/scheme mismatch: {row['file']} is {row['scheme']}, requested {scheme.name.lower()}"
                )
            payload = (directory / row["file"]).read_bytes()
            items.append((payload, BehaviorLabel(scheme, int(row["class_id"]))))
    n_classes = max(len(default_classes(scheme)), 1 + max(label.class_id for _, label in items))
    classes = default_classes(scheme)
    if n_classes > len(classes):
        classes = tuple(f"class_{j}" for j in range(n_classes))
    return LabeledDataset(items, scheme, classes)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_dataset(ds: LabeledDataset, train_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified split with ``|train| = round(train_fraction * |ds|)``.

    Each class keeps at least one item on each side; per-class quotas are
    floor(fraction * n_c), topped up by largest remainder.
    """
    if not 0 < train_fraction < 1:
        raise VisionError("train_fraction must lie strictly between 0 and 1")
    by_class: dict[int, list[int]] = {}
    for idx, (_, label) in enumerate(ds.items):
        by_class.setdefault(label.class_id, []).append(idx)
    for cls, members in sorted(by_class.items()):
        if len(members) < 2:
            raise StratificationError(f"class {cls} has fewer than 2 items")
    target = _round_half_up(train_fraction * len(ds))
    quota = {}
    for cls, members in by_class.items():
        quota[cls] = min(max(math.floor(train_fraction * len(members)), 1), len(members) - 1)
    classes = sorted(by_class)
    # largest fractional remainder first, class id breaks ties
    order = sorted(classes, key=lambda c: (-(train_fraction * len(by_class[c]) % 1), c))
    while sum(quota.values()) < target:
        grown = False
        for c in order:
            if sum(quota.values()) >= target:
                break
            if quota[c] < len(by_class[c]) - 1:
                quota[c] += 1
                grown = True
        if not grown:
            break
    while sum(quota.values()) > target:
        shrunk = False
        for c in reversed(order):
            if sum(quota.values()) <= target:
                break
            if quota[c] > 1:
                quota[c] -= 1
                shrunk = True
        if not shrunk:
            break
    rng = random.Random(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for cls in classes:
        members = list(by_class[cls])
        rng.shuffle(members)
        train_idx.extend(members[: quota[cls]])
        test_idx.extend(members[quota[cls]:])
    return ds.subset(sorted(train_idx)), ds.subset(sorted(test_idx))


# --------------------------------------------------------------------------
# classifiers


class Classifier:
    """Interface for behaviour classifiers.

    ``train`` returns the wall-clock training time in seconds; ``predict``
    returns ``(label, confidence)`` with confidence in ``[0, 1]``.
    """

    name = "classifier"

    def train(self, dataset: LabeledDataset) -> float:
        return 0.0

    def predict(self, image: bytes | bytearray) -> tuple[BehaviorLabel, float]:
        raise NotImplementedError


class OracleClassifier(Classifier):
    name = "oracle"

    def predict(self, image):
        return oracle_classify(image), 1.0


def byte_histogram(image: bytes | bytearray) -> np.ndarray:
    """Normalised 16-bin histogram of the frame's pixel bytes."""
    body = image[HEADER_LEN:] if bytes(image[:4]) == MAGIC else image
    arr = np.frombuffer(bytes(body), dtype=np.uint8)
    if arr.size == 0:
        return np.zeros(N_BINS)
    hist = np.bincount(arr >> 4, minlength=N_BINS).astype(np.float64)
    return hist / arr.size


@dataclass(frozen=True)
class BaselineState:
    scheme: Scheme
    class_ids: tuple[int, ...]
    weights: np.ndarray = field(repr=False)  # (N_BINS + 1, n_classes)
    train_time_s: float = field(default=0.0, compare=False)


RIDGE = 1e-3


def _features(images: Sequence[bytes]) -> np.ndarray:
    x = np.array([byte_histogram(img) for img in images])
    return np.hstack([x, np.ones((len(images), 1))])


def baseline_train(ds: LabeledDataset, seed: int = 0) -> BaselineState:
    """One-vs-rest ridge regression on byte histograms (closed form).

    ``seed`` is accepted for interface symmetry; the solve itself is
    deterministic.
    """
    start = time.perf_counter()
    class_ids = tuple(sorted({label.class_id for _, label in ds.items}))
    x = _features([img for img, _ in ds.items])
    y = np.array([label.class_id for _, label in ds.items])
    if len(class_ids) == 1:
        weights = np.zeros((x.shape[1], 1))
    else:
        targets = np.where(y[:, None] == np.array(class_ids)[None, :], 1.0, -1.0)
        gram = x.T @ x + RIDGE * np.eye(x.shape[1])
        weights = np.linalg.solve(gram, x.T @ targets)
    elapsed = time.perf_counter() - start
    return BaselineState(ds.scheme, class_ids, weights, elapsed)


def baseline_predict(state: BaselineState, image: bytes | bytearray) -> tuple[BehaviorLabel, float]:
    if len(state.class_ids) == 1:
        return BehaviorLabel(state.scheme, state.class_ids[0]), 1.0
    x = np.append(byte_histogram(image), 1.0)
    scores = x @ state.weights
    order = np.argsort(-scores, kind="stable")
    best, second = scores[order[0]], scores[order[1]]
    confidence = float(np.clip((best - second) / 2.0, 0.0, 1.0))
    return BehaviorLabel(state.scheme, state.class_ids[int(order[0])]), confidence


class BaselineClassifier(Classifier):
    name = "baseline-histogram-ridge"

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.state: BaselineState | None = None

    def train(self, dataset):
        self.state = baseline_train(dataset, self.seed)
        return self.state.train_time_s

    def predict(self, image):
        if self.state is None:
            raise VisionError("baseline classifier is untrained")
        return baseline_predict(self.state, image)


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted class

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise VisionError("empty confusion matrix")
        return float(np.trace(self.counts)) / self.total

    def recall(self) -> list[float]:
        rows = self.counts.sum(axis=1)
        return [float(self.counts[i, i] / r) if r else 0.0 for i, r in enumerate(rows)]

    def to_csv(self, class_names: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *class_names])
        for name, row in zip(class_names, self.counts):
            w.writerow([name, *(int(c) for c in row)])
        return buf.getvalue()

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    __hash__ = None


def evaluate(clf: Classifier, test: LabeledDataset) -> tuple[ConfusionMatrix, float]:
    if len(test) == 0:
        raise VisionError("empty test set")
    k = test.n_classes
    counts = np.zeros((k, k), dtype=np.int64)
    for image, truth in test.items:
        predicted, _ = clf.predict(image)
        if not 0 <= predicted.class_id < k:
            raise VisionError(f"{clf.name} produced out-of-scheme label {predicted.class_id}")
        counts[truth.class_id, predicted.class_id] += 1
    cm = ConfusionMatrix(counts)
    return cm, cm.accuracy


def summary_line(accuracy: float, train_time_s: float) -> str:
    return f"accuracy={accuracy:.6f},train_time_s={train_time_s:.6f}"


TRAIN_FRACTION = 0.8


@dataclass
class EvaluationReport:
    classifier: str
    scheme: Scheme
    seed: int
    train_size: int
    test_size: int
    confusion: ConfusionMatrix
    classes: tuple[str, ...]
    train_time_s: float  # wall clock; the only field that varies between identical runs

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "scheme": self.scheme.name,
            "seed": self.seed,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "classes": list(self.classes),
            "confusion": self.confusion.counts.tolist(),
            "recall": self.confusion.recall(),
            "accuracy": self.accuracy,
            "train_time_s": self.train_time_s,
        }

    def summary(self) -> str:
        return summary_line(self.accuracy, self.train_time_s)


def run_evaluation(
    dataset_dir: str | Path, scheme: Scheme | str, seed: int, use_oracle: bool = False
) -> EvaluationReport:
    """80/20 stratified split, train, evaluate on the held-out part."""
    ds = load_dataset(dataset_dir, scheme)
    train, test = split_dataset(ds, TRAIN_FRACTION, seed)
    clf: Classifier = OracleClassifier() if use_oracle else BaselineClassifier(seed)
    train_time = clf.train(train)
    cm, _ = evaluate(clf, test)
    return EvaluationReport(clf.name, ds.scheme, seed, len(train), len(test), cm, tuple(ds.classes), train_time)
