"""Synthetic domain pairs, IDX ingestion and mini-batch samplers."""

import csv
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class LabelsHiddenError(RuntimeError):
    """Raised when training code asks for target-domain labels."""


class ClassUndersupplyError(ValueError):
    pass


class IdxFormatError(ValueError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountMismatchError(IdxFormatError):
    pass


class DomainDataset:
    """Inputs plus labels; target-domain labels are only reachable via ``evaluation_labels``."""

    def __init__(self, inputs, labels, domain, num_classes):
        if domain not in ("source", "target"):
            raise ValueError(f"domain must be 'source' or 'target', got {domain!r}")
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.inputs.flags.writeable = False
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            labels.flags.writeable = False
            if labels.shape != (self.inputs.shape[0],):
                raise ValueError("one label per sample required")
            if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
                raise ValueError(f"labels must lie in [0, {num_classes})")
        self._labels = labels
        self.domain = domain
        self.num_classes = int(num_classes)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def labels(self):
        if self.domain == "target":
            raise LabelsHiddenError("target-domain labels are not available for training")
        if self._labels is None:
            raise LabelsHiddenError("dataset carries no labels")
        return self._labels

    def evaluation_labels(self):
        return self._labels

    def class_indices(self):
        labels = self.labels
        return [np.flatnonzero(labels == c) for c in range(self.num_classes)]


@dataclass(frozen=True)
class DomainPairSpec:
    generator: str = "two_moons"
    rotation: float = np.pi / 6
    translation: tuple = (0.0, 0.0)
    noise_std: float = 0.1
    invert_prob: float = 0.5
    num_classes: int = 4
    grid_spacing: float = 3.0
    n_train: int = 1000
    n_test: int = 1000
    seed: int = 0
    # None: the target training draw uses its own stream.
    target_seed: int | None = None
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if not 0 <= self.invert_prob <= 1:
            raise ValueError("invert_prob must lie in [0, 1]")


@dataclass
class DomainPair:
    source: DomainDataset
    target: DomainDataset
    target_test: DomainDataset
    source_test: DomainDataset

    @property
    def num_classes(self):
        return self.source.num_classes


def rotation_matrix(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def shift_2d(x, spec):
    """Rotate about the origin, then translate."""
    return x @ rotation_matrix(spec.rotation).T + np.asarray(spec.translation)


def balanced_labels(n, num_classes):
    return np.arange(n) % num_classes


def draw_two_moons(n, noise_std, rng):
    """Two interleaved half circles centred on the origin, classes alternating."""
    labels = balanced_labels(n, 2)
    t = rng.uniform(0.0, np.pi, size=n)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.where(labels[:, None] == 0, upper, lower) - np.array([0.5, 0.25])
    x = x + rng.normal(0.0, noise_std, size=x.shape)
    return x, labels


def grid_means(num_classes, spacing):
    cols = int(np.ceil(np.sqrt(num_classes)))
    idx = np.arange(num_classes)
    means = np.column_stack([idx % cols, idx // cols]).astype(np.float64) * spacing
    return means - means.mean(axis=0)


def draw_gaussian_grid(n, num_classes, spacing, noise_std, rng):
    if num_classes < 2:
        raise ValueError("gaussian grid needs at least two classes")
    labels = balanced_labels(n, num_classes)
    x = grid_means(num_classes, spacing)[labels] + rng.normal(0.0, noise_std, size=(n, 2))
    return x, labels


def _streams(spec):
    seq = np.random.SeedSequence(spec.seed)
    s_train, t_train, s_test, t_test = seq.spawn(4)
    if spec.target_seed is not None:
        t_train = np.random.SeedSequence(spec.target_seed)
        # target draw with the source's own seed reproduces the source draw
        if spec.target_seed == spec.seed:
            t_train = s_train
    return [np.random.default_rng(s) for s in (s_train, t_train, s_test, t_test)]


def _make_2d_pair(spec, draw, num_classes):
    rs, rt, rs_test, rt_test = _streams(spec)
    xs, ys = draw(spec.n_train, rs)
    xt, yt = draw(spec.n_train, rt)
    xs_test, ys_test = draw(spec.n_test, rs_test)
    xt_test, yt_test = draw(spec.n_test, rt_test)
    return DomainPair(
        source=DomainDataset(xs, ys, "source", num_classes),
        target=DomainDataset(shift_2d(xt, spec), yt, "target", num_classes),
        target_test=DomainDataset(shift_2d(xt_test, spec), yt_test, "target", num_classes),
        source_test=DomainDataset(xs_test, ys_test, "source", num_classes),
    )


def gen_two_moons_pair(spec):
    if not 0 <= spec.rotation <= np.pi / 2:
        raise ValueError("rotation must lie in [0, pi/2]")
    return _make_2d_pair(spec, lambda n, rng: draw_two_moons(n, spec.noise_std, rng), 2)


def gen_gaussian_grid_pair(spec):
    return _make_2d_pair(
        spec,
        lambda n, rng: draw_gaussian_grid(n, spec.num_classes, spec.grid_spacing, spec.noise_std, rng),
        spec.num_classes,
    )


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise IdxTruncatedError(f"{path}: expected {n} bytes, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path, num_classes=10, domain="source"):
    """Read an IDX image/label file pair (big-endian, uncompressed)."""
    with open(images_path, "rb") as fh:
        magic, n_img, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path))
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"{images_path}: bad magic 0x{magic:08x}")
        pixels = np.frombuffer(_read_exact(fh, n_img * rows * cols, images_path), dtype=np.uint8)
    with open(labels_path, "rb") as fh:
        magic, n_lab = struct.unpack(">II", _read_exact(fh, 8, labels_path))
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad magic 0x{magic:08x}")
        labels = np.frombuffer(_read_exact(fh, n_lab, labels_path), dtype=np.uint8)
    if n_img != n_lab:
        raise IdxCountMismatchError(f"{n_img} images but {n_lab} labels")
    inputs = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return DomainDataset(inputs, labels.astype(np.int64), domain, num_classes)


def corrupt_to_target(source, noise_std, invert_prob, seed):
    """Randomly invert each sample, add clipped pixel noise, and tag it as target."""
    rng = np.random.default_rng(seed)
    x = np.array(source.inputs)
    flip = rng.random(x.shape[0]) < invert_prob
    x[flip] = 1.0 - x[flip]
    if noise_std > 0:
        x = np.clip(x + rng.normal(0.0, noise_std, size=x.shape), 0.0, 1.0)
    return DomainDataset(x, source.evaluation_labels(), "target", source.num_classes)


def _subset(ds, idx, domain):
    labels = ds.evaluation_labels()
    return DomainDataset(ds.inputs[idx], None if labels is None else labels[idx], domain, ds.num_classes)


def gen_mnist_corrupt_pair(spec):
    """Source = MNIST subset, target = inverted/noised disjoint MNIST subset."""
    train = load_idx(spec.idx_train_images, spec.idx_train_labels)
    test = load_idx(spec.idx_test_images, spec.idx_test_labels)
    n, m = spec.n_train, spec.n_test
    if 2 * n > len(train) or 2 * m > len(test):
        raise ValueError("IDX files too small for the requested subset sizes")
    rng = np.random.default_rng(spec.seed)
    tr = rng.permutation(len(train))
    te = rng.permutation(len(test))
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    return DomainPair(
        source=_subset(train, tr[:n], "source"),
        target=corrupt_to_target(_subset(train, tr[n : 2 * n], "source"), spec.noise_std, spec.invert_prob, seeds[0]),
        target_test=corrupt_to_target(_subset(test, te[:m], "source"), spec.noise_std, spec.invert_prob, seeds[1]),
        source_test=_subset(test, te[m : 2 * m], "source"),
    )


GENERATORS = {
    "two_moons": gen_two_moons_pair,
    "gaussian_grid": gen_gaussian_grid_pair,
    "mnist_corrupt": gen_mnist_corrupt_pair,
}


def make_pair(spec):
    return GENERATORS[spec.generator](spec)


def stratified_labeled_batch(ds, per_class, rng):
    """Exactly ``per_class`` samples of every class, drawn without replacement, shuffled."""
    picks = []
    for c, idx in enumerate(ds.class_indices()):
        if idx.size < per_class:
            raise ClassUndersupplyError(f"class {c} has {idx.size} samples, need {per_class}")
        picks.append(rng.choice(idx, size=per_class, replace=False))
    order = rng.permutation(np.concatenate(picks))
    return ds.inputs[order], ds.labels[order]


def unlabeled_batch(ds, size, rng):
    if size > len(ds):
        raise ValueError(f"batch size {size} exceeds dataset size {len(ds)}")
    return ds.inputs[rng.choice(len(ds), size=size, replace=False)]


def export_csv(datasets, path):
    """Write ``x0..x{d-1},label,domain`` rows (label from the evaluation interface)."""
    d = datasets[0].input_dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(d)] + ["label", "domain"])
        for ds in datasets:
            labels = ds.evaluation_labels()
            for i, row in enumerate(ds.inputs):
                label = "" if labels is None else int(labels[i])
                w.writerow([repr(float(v)) for v in row] + [label, ds.domain])


def read_csv(path, num_classes=None):
    """Inverse of :func:`export_csv`; returns one dataset per domain present."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    feat = [i for i, h in enumerate(header) if h.startswith("x")]
    li, di = header.index("label"), header.index("domain")
    out = {}
    for domain in ("source", "target"):
        sel = [r for r in body if r[di] == domain]
        if not sel:
            continue
        x = np.array([[float(r[i]) for i in feat] for r in sel])
        raw = [r[li] for r in sel]
        labels = None if any(v == "" for v in raw) else np.array([int(v) for v in raw])
        k = num_classes or (int(labels.max()) + 1 if labels is not None else 1)
        out[domain] = DomainDataset(x, labels, domain, k)
    return out
