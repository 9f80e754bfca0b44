"""Deterministic mammogram-like images with planted lesions and class masks.

Every sample is a pure function of ``(seed, index)``. Malignant lesions are
sharp-edged, high-contrast masses or tight clusters of bright dots; benign
distractors have the same shapes but soft edges and low contrast.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, GenerationError, UsageError
from .imageops import Image, read_pgm, read_pgm_array, resize_array, write_pgm, write_pgm_array
from .labels import Mask, image_label

MANIFEST = "manifest.tsv"
MAX_PLACEMENT_TRIES = 100
# lesion sizes are given for a 256 px canvas and scaled with image_size
BASE_SIZE = 256.0


@dataclass(frozen=True)
class DatasetSpec:
    image_size: int = 256
    n_samples: int = 500
    malignant_fraction: float = 0.5
    benign_fraction: float = 0.5
    split: float = 0.8
    seed: int = 42
    bg_low: float = 0.1
    bg_high: float = 0.5
    bg_coarse: int = 5
    bg_fine: int = 24
    bg_fine_weight: float = 0.3

    @classmethod
    def from_config(cls, data_cfg, **extra):
        return cls(
            image_size=data_cfg.image_size,
            n_samples=data_cfg.n_samples,
            malignant_fraction=data_cfg.malignant_fraction,
            benign_fraction=data_cfg.benign_fraction,
            split=data_cfg.split,
            seed=data_cfg.seed,
            **extra,
        )


@dataclass(frozen=True)
class LesionSpec:
    kind: str  # "mass" or "calc"
    malignant: bool
    center: tuple  # (row, col)
    intensity: float
    radius: float = 0.0  # mass radius or cluster spread radius
    edge: float = 1.0  # edge softness in px
    lobes: int = 0
    lobe_amp: float = 0.0
    phase: float = 0.0
    dots: tuple = field(default=())  # ((row, col, radius), ...) for calc clusters

    @property
    def mask_class(self):
        if self.kind == "calc":
            return 3 if self.malignant else 1
        return 4 if self.malignant else 2

    def extent(self):
        """Radius of the disc that contains every pixel this lesion touches."""
        if self.kind == "mass":
            return self.radius * (1.0 + self.lobe_amp) + 3.0 * self.edge + 1.0
        cy, cx = self.center
        return max(np.hypot(y - cy, x - cx) + r + 2.0 for y, x, r in self.dots)


def _half_up(x):
    return int(np.floor(x + 0.5))


def _rank_flags(seed, salt, n, fraction):
    """Exactly round(fraction*n) True flags, placed by a seeded permutation."""
    order = np.random.default_rng([seed, salt]).permutation(n)
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    return ranks < _half_up(fraction * n)


def sample_flags(spec, index):
    if not 0 <= index < spec.n_samples:
        raise UsageError(f"sample index {index} outside 0..{spec.n_samples - 1}")
    mal = _rank_flags(spec.seed, 101, spec.n_samples, spec.malignant_fraction)[index]
    ben = _rank_flags(spec.seed, 202, spec.n_samples, spec.benign_fraction)[index]
    return bool(mal), bool(ben)


def background(spec, rng):
    size = spec.image_size
    coarse = rng.normal(size=(spec.bg_coarse, spec.bg_coarse))
    fine = rng.normal(size=(spec.bg_fine, spec.bg_fine))
    tex = resize_array(coarse, size, size) + spec.bg_fine_weight * resize_array(fine, size, size)
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    return spec.bg_low + (spec.bg_high - spec.bg_low) * tex


def _make_lesion(kind, malignant, center, scale, rng):
    if kind == "mass":
        if malignant:
            return LesionSpec(
                "mass", True, center,
                intensity=rng.uniform(0.32, 0.45),
                radius=rng.uniform(6.0, 10.0) * scale,
                edge=0.6,
                lobes=int(rng.integers(5, 9)),
                lobe_amp=rng.uniform(0.2, 0.35),
                phase=rng.uniform(0, 2 * np.pi),
            )
        return LesionSpec(
            "mass", False, center,
            intensity=rng.uniform(0.10, 0.16),
            radius=rng.uniform(6.0, 10.0) * scale,
            edge=2.5,
            lobes=2,
            lobe_amp=rng.uniform(0.0, 0.08),
            phase=rng.uniform(0, 2 * np.pi),
        )
    if malignant:
        n, spread, rmin, rmax, intensity = int(rng.integers(8, 15)), rng.uniform(4.0, 6.0), 1.0, 2.0, rng.uniform(0.35, 0.5)
    else:
        n, spread, rmin, rmax, intensity = int(rng.integers(3, 7)), rng.uniform(8.0, 12.0), 1.5, 2.0, rng.uniform(0.12, 0.2)
    spread *= scale
    cy, cx = center
    dots = []
    for _ in range(n):
        off = np.clip(rng.normal(scale=spread, size=2), -2.5 * spread, 2.5 * spread)
        dots.append((cy + off[0], cx + off[1], min(rng.uniform(rmin, rmax), 2.0)))
    return LesionSpec(
        "calc", malignant, center, intensity=intensity, radius=spread,
        edge=0.5 if malignant else 1.5, dots=tuple(dots),
    )


def plan_lesions(spec, index, rng):
    malignant, benign = sample_flags(spec, index)
    scale = spec.image_size / BASE_SIZE
    wanted = []
    if malignant:
        wanted.append(("mass" if rng.random() < 0.5 else "calc", True))
    if benign:
        wanted.append(("mass" if rng.random() < 0.5 else "calc", False))
    placed = []
    size = spec.image_size
    for kind, mal in wanted:
        for _ in range(MAX_PLACEMENT_TRIES):
            center = (rng.uniform(0, size), rng.uniform(0, size))
            lesion = _make_lesion(kind, mal, center, scale, rng)
            ext = lesion.extent()
            cy, cx = center
            if cy - ext < 0 or cx - ext < 0 or cy + ext > size or cx + ext > size:
                continue
            if any(np.hypot(cy - o.center[0], cx - o.center[1]) < ext + o.extent() + 2 for o in placed):
                continue
            placed.append(lesion)
            break
        else:
            raise GenerationError(
                f"sample {index}: could not place {kind} lesion in {MAX_PLACEMENT_TRIES} tries"
            )
    return placed


def render_lesion(lesion, size):
    """Additive intensity and support mask of one lesion on a ``size`` canvas."""
    ext = lesion.extent()
    cy, cx = lesion.center
    y0, y1 = max(int(np.floor(cy - ext)), 0), min(int(np.ceil(cy + ext)) + 1, size)
    x0, x1 = max(int(np.floor(cx - ext)), 0), min(int(np.ceil(cx + ext)) + 1, size)
    yy, xx = np.mgrid[y0:y1, x0:x1] + 0.5
    add = np.zeros((size, size))
    support = np.zeros((size, size), dtype=bool)
    if lesion.kind == "mass":
        dy, dx = yy - cy, xx - cx
        dist = np.hypot(dy, dx)
        theta = np.arctan2(dy, dx)
        boundary = lesion.radius * (1.0 + lesion.lobe_amp * np.sin(lesion.lobes * theta + lesion.phase))
        z = np.clip((boundary - dist) / lesion.edge, -30, 30)
        prof = lesion.intensity / (1.0 + np.exp(-z))
        prof[dist > boundary + 3.0 * lesion.edge] = 0.0
        add[y0:y1, x0:x1] = prof
        support[y0:y1, x0:x1] = dist <= boundary
    else:
        local = np.zeros(yy.shape)
        sup = np.zeros(yy.shape, dtype=bool)
        for dyc, dxc, r in lesion.dots:
            d = np.hypot(yy - dyc, xx - dxc)
            if lesion.malignant:
                prof = np.clip(1.0 - (d / (r + 1.0)) ** 2, 0.0, None)
            else:
                prof = np.exp(-0.5 * (d / (r + lesion.edge * 0.5)) ** 2) * (d <= r + 2.0)
            local = np.maximum(local, lesion.intensity * prof)
            sup |= d <= r
        add[y0:y1, x0:x1] = local
        support[y0:y1, x0:x1] = sup
    return add, support


def gen_sample(spec, index):
    """Image, mask and binary label for sample ``index``; pure in (seed, index)."""
    sample_flags(spec, index)
    rng = np.random.default_rng([spec.seed, index, 7])
    base = background(spec, rng)
    lesions = plan_lesions(spec, index, rng)
    pixels = base.copy()
    classes = np.zeros(base.shape, dtype=np.uint8)
    for lesion in lesions:
        add, support = render_lesion(lesion, spec.image_size)
        pixels += add
        classes[support] = lesion.mask_class
    mask = Mask(classes)
    return Image(np.clip(pixels, 0.0, 1.0)), mask, image_label(mask)


def _assign_splits(labels, split, seed):
    n = len(labels)
    labels = np.asarray(labels)
    n_train = _half_up(split * n)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    rng = np.random.default_rng([seed, 303])
    pos, neg = rng.permutation(pos), rng.permutation(neg)
    train_pos = min(_half_up(split * len(pos)), n_train, len(pos))
    train_neg = min(n_train - train_pos, len(neg))
    out = np.array(["test"] * n, dtype=object)
    out[pos[:train_pos]] = "train"
    out[neg[:train_neg]] = "train"
    return list(out)


def gen_dataset(spec, out_dir, force=False):
    """Write images, masks and the manifest; returns the manifest rows."""
    out = Path(out_dir)
    manifest = out / MANIFEST
    if manifest.exists() and not force:
        raise FileExistsError(f"{manifest} exists; pass force to overwrite")
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    labels = []
    for i in range(spec.n_samples):
        img, mask, y = gen_sample(spec, i)
        write_pgm(img, out / "images" / f"{i:05d}.pgm", 255)
        write_pgm_array(mask.classes, out / "masks" / f"{i:05d}.pgm", 4)
        labels.append(y)
    splits = _assign_splits(labels, spec.split, spec.seed)
    rows = [
        (i, splits[i], f"images/{i:05d}.pgm", f"masks/{i:05d}.pgm", labels[i])
        for i in range(spec.n_samples)
    ]
    text = "".join(f"{i}\t{s}\t{ip}\t{mp}\t{y}\n" for i, s, ip, mp, y in rows)
    tmp = manifest.with_suffix(".tmp")
    tmp.write_text(text)
    os.replace(tmp, manifest)
    return rows


@dataclass
class Sample:
    id: int
    split: str
    image: np.ndarray
    mask: np.ndarray
    y: int


def read_manifest(data_dir):
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        parts = line.split("\t")
        if len(parts) != 5 or parts[1] not in ("train", "test") or parts[4] not in ("0", "1"):
            raise FormatError(f"{path}:{lineno}: malformed manifest record")
        rows.append((int(parts[0]), parts[1], parts[2], parts[3], int(parts[4])))
    return rows


def load_dataset(data_dir, split=None):
    """Load the samples of ``split`` (or all) into memory."""
    data_dir = Path(data_dir)
    out = []
    for sid, s, ip, mp, y in read_manifest(data_dir):
        if split is not None and s != split:
            continue
        img = read_pgm(data_dir / ip)
        classes, _ = read_pgm_array(data_dir / mp)
        out.append(Sample(sid, s, img.pixels, classes.astype(np.uint8), y))
    return out


def level_scales(image_size, grid, levels, d):
    """Crop-to-patch scale of each level >= 2: node side over ``d``."""
    return tuple(image_size / grid ** (r - 1) / d for r in range(2, levels + 1)) or (1.0,)


def sample_patches(images, masks, d, n_per_image, rng, scales=(1.0,)):
    """``d x d`` pretraining patches: half centred on lesion pixels, half background.

    Each patch is a square crop of side ``round(d * scale)`` (scale drawn from
    ``scales``) resized to ``d x d``; with the default scale it is a plain
    crop. Returns ``(patches, labels, malignant)``: ``labels`` is 1 iff the
    crop holds any lesion pixel, ``malignant`` iff it holds class 3 or 4.
    """
    patches, labels, malignant = [], [], []
    for img, mask in zip(images, masks):
        img = np.asarray(img.pixels if isinstance(img, Image) else img)
        cls = np.asarray(mask.classes if isinstance(mask, Mask) else mask)
        h, w = img.shape
        if h < d or w < d:
            raise ConfigurationError(f"image {w}x{h} smaller than patch size {d}")
        lesion_px = np.argwhere(cls >= 1)
        n_lesion = n_per_image // 2 if len(lesion_px) else 0
        for k in range(n_per_image):
            side = min(max(int(round(d * scales[int(rng.integers(len(scales)))])), 1), h, w)
            if k < n_lesion:
                cy, cx = lesion_px[rng.integers(len(lesion_px))]
                y0 = int(np.clip(cy - side // 2, 0, h - side))
                x0 = int(np.clip(cx - side // 2, 0, w - side))
            else:
                for _ in range(MAX_PLACEMENT_TRIES):
                    y0 = int(rng.integers(0, h - side + 1))
                    x0 = int(rng.integers(0, w - side + 1))
                    if not cls[y0 : y0 + side, x0 : x0 + side].any():
                        break
            crop = cls[y0 : y0 + side, x0 : x0 + side]
            pix = img[y0 : y0 + side, x0 : x0 + side]
            patches.append(pix if side == d else resize_array(pix, d, d))
            labels.append(int(crop.max() >= 1))
            malignant.append(int(crop.max() >= 3))
    if not patches:
        return np.zeros((0, d, d)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.stack(patches), np.array(labels), np.array(malignant)
