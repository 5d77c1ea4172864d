"""Samples, corpora, text rasterization and procedural dataset generators."""
from __future__ import annotations

import functools
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import IngestionError, PreconditionError, RenderError

IMAGE_SHAPE = (3, 64, 64)
TEXT_SHAPE = (1, 16, 128)
TOY_IMAGE_SHAPE = (1, 32, 32)
TOY_CLASSES = ("B", "13")


def _check_signal(arr, shape, what):
    if arr is None:
        return None
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise PreconditionError(f"{what} has shape {arr.shape}, expected {tuple(shape)}")
    if arr.ndim != 3:
        raise PreconditionError(f"{what} must be [C, H, W], got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise PreconditionError(f"{what} values must lie in [0, 1]")
    return arr


@dataclass(frozen=True)
class Sample:
    """One image/text pair. Either modality may be ``None`` (absent)."""

    image: np.ndarray | None
    text: np.ndarray | None
    label: str

    def __post_init__(self):
        object.__setattr__(self, "image", _check_signal(self.image, None, "image"))
        object.__setattr__(self, "text", _check_signal(self.text, TEXT_SHAPE, "text"))

    def without(self, modality) -> "Sample":
        if modality == "vision":
            return Sample(None, self.text, self.label)
        if modality == "text":
            return Sample(self.image, None, self.label)
        raise PreconditionError(f"unknown modality {modality!r}")


@dataclass
class Corpus:
    """Samples plus a disjoint train/test split.

    ``probes`` holds named extra inputs (for the toy corpus, the ambiguous
    test glyph) that are not part of either split.
    """

    samples: list
    train_index: list = field(default_factory=list)
    test_index: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)

    def __post_init__(self):
        both = set(self.train_index) & set(self.test_index)
        if both:
            raise PreconditionError(f"train and test overlap at {sorted(both)[:5]}")
        if set(self.train_index) | set(self.test_index) != set(range(len(self.samples))):
            raise PreconditionError("split does not cover every sample")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def class_counts(self) -> dict:
        return dict(Counter(s.label for s in self.samples))

    @property
    def labels(self) -> list:
        return [s.label for s in self.samples]

    @property
    def train(self) -> list:
        return [self.samples[i] for i in self.train_index]

    @property
    def test(self) -> list:
        return [self.samples[i] for i in self.test_index]


def stratified_split(labels, test_fraction, seed):
    """Per-label shuffled split; every label keeps at least one training item."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    by_label = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab, []).append(i)
    for lab in sorted(by_label):
        idx = np.array(by_label[lab])
        idx = idx[rng.permutation(len(idx))]
        n_test = min(int(round(test_fraction * len(idx))), len(idx) - 1)
        test.extend(int(i) for i in idx[:n_test])
        train.extend(int(i) for i in idx[n_test:])
    return sorted(train), sorted(test)


# text ----------------------------------------------------------------------

PRINTABLE = set(string.printable) - set("\t\n\r\x0b\x0c")


@functools.lru_cache(maxsize=1)
def _font():
    font = ImageFont.load_default_imagefont()
    left, top, right, bottom = font.getbbox("".join(sorted(PRINTABLE)))
    advance = font.getbbox("M")[2]
    # vertical offset that centres the ink span of the whole character set
    probe = Image.new("L", (advance * 95, 32), 0)
    ImageDraw.Draw(probe).text((0, 0), "".join(sorted(PRINTABLE)), fill=255, font=font)
    rows = np.nonzero(np.asarray(probe).any(axis=1))[0]
    y0 = (TEXT_SHAPE[1] - (rows[-1] + 1 + rows[0])) // 2
    return font, advance, y0


def max_text_length() -> int:
    return TEXT_SHAPE[2] // _font()[1]


def render_text(name: str) -> np.ndarray:
    """Rasterize ``name`` into a ``[1, 16, 128]`` tensor (ink 1, background 0).

    Uses Pillow's embedded fixed-advance bitmap font, left-aligned and
    vertically centred.
    """
    bad = sorted(set(name) - PRINTABLE)
    if bad:
        raise RenderError(f"unprintable characters {bad!r} in {name!r}")
    font, advance, y0 = _font()
    if len(name) * advance > TEXT_SHAPE[2]:
        raise RenderError(f"{name!r} needs {len(name) * advance} px; only {TEXT_SHAPE[2]} available")
    img = Image.new("L", (TEXT_SHAPE[2], TEXT_SHAPE[1]), 0)
    if name:
        ImageDraw.Draw(img).text((0, y0), name, fill=255, font=font)
    return (np.asarray(img, dtype=np.float64) / 255.0).reshape(TEXT_SHAPE)


# handwritten toy glyphs ----------------------------------------------------

def _arc(p0, bulge, p1, n=14):
    """Quadratic-ish bowl from ``p0`` through rightmost point ``bulge`` to ``p1``."""
    t = np.linspace(0.0, 1.0, n)
    # cubic Bezier whose midpoint is the bulge
    c = (np.asarray(bulge) * 8 - np.asarray(p0) - np.asarray(p1)) / 6
    pts = ((1 - t) ** 3)[:, None] * p0 + (3 * (1 - t) ** 2 * t)[:, None] * c \
        + (3 * (1 - t) * t ** 2)[:, None] * c + (t ** 3)[:, None] * p1
    return pts


def _glyph_strokes(morph, jitter):
    """Polylines of a stem plus two right-hand bowls.

    ``morph = 0`` is a closed "B" (bowls attached to the stem); ``morph = 1`` a
    "13" (stem moved left, bowls detached and opened). Coordinates are (x, y)
    in the unit square.
    """
    m = float(np.clip(morph, 0.0, 1.0))
    stem_x = 0.36 - 0.14 * m
    anchor_x = stem_x + 0.24 * m + 0.02 * m
    mid_x = stem_x + 0.30 * m
    top, mid, bot = 0.16, 0.50, 0.84
    j = jitter
    stem = np.array([[stem_x + j[0], top + j[1]], [stem_x + j[2], bot + j[3]]])
    upper = _arc(np.array([anchor_x + j[4], top + j[5]]), np.array([0.66 + j[6], 0.33 + j[7]]),
                 np.array([mid_x + j[8], mid + j[9]]))
    lower = _arc(np.array([mid_x + j[8], mid + j[9]]), np.array([0.70 + j[10], 0.67 + j[11]]),
                 np.array([anchor_x + j[12], bot + j[13]]))
    return [stem, upper, lower]


def _rasterize(strokes, size, width, shift=(0.0, 0.0)):
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    px = (xs.ravel() + 0.5) / w - shift[0]
    py = (ys.ravel() + 0.5) / h - shift[1]
    dmin = np.full(px.shape, np.inf)
    for line in strokes:
        a = line[:-1]
        b = line[1:]
        ab = b - a
        denom = np.maximum(np.sum(ab * ab, axis=1), 1e-12)
        t = ((px[:, None] - a[None, :, 0]) * ab[None, :, 0]
             + (py[:, None] - a[None, :, 1]) * ab[None, :, 1]) / denom[None, :]
        t = np.clip(t, 0.0, 1.0)
        dx = px[:, None] - (a[None, :, 0] + t * ab[None, :, 0])
        dy = py[:, None] - (a[None, :, 1] + t * ab[None, :, 1])
        dmin = np.minimum(dmin, np.sqrt(dx * dx + dy * dy).min(axis=1))
    pix = 1.0 / w
    ink = np.clip((width - dmin) / pix + 0.5, 0.0, 1.0)
    return ink.reshape(1, h, w)


def render_glyph(morph, rng=None, size=TOY_IMAGE_SHAPE[1:], jitter_scale=1.0):
    """A "handwritten" glyph on a ``[1, H, W]`` canvas; ``rng=None`` gives the clean form."""
    if rng is None:
        jit = np.zeros(14)
        width, shift = 0.05, (0.0, 0.0)
    else:
        jit = rng.normal(0.0, 0.022 * jitter_scale, 14)
        width = 0.05 + rng.uniform(-0.01, 0.012) * jitter_scale
        shift = tuple(rng.uniform(-0.04, 0.04, 2) * jitter_scale)
    return _rasterize(_glyph_strokes(morph, jit), size, width, shift)


def _centroid_ratio(image, means):
    d_b = np.linalg.norm(image - means["B"])
    d_13 = np.linalg.norm(image - means["13"])
    return d_b / d_13


def generate_toy_corpus(seed=0, n_per_class=50, test_fraction=0.2, ambiguity_target=0.935):
    """Handwritten-style "B" and "13" glyphs paired with printed renders.

    The probe ``"ambiguous"`` is a clean glyph whose morph is bisected so that
    its pixel distance to the B centroid over its distance to the 13 centroid
    equals ``ambiguity_target``.
    """
    rng = np.random.default_rng(seed)
    printed = {lab: render_text(lab) for lab in TOY_CLASSES}
    samples = []
    for lab in TOY_CLASSES:
        lo, hi = (0.0, 0.2) if lab == "B" else (0.8, 1.0)
        for _ in range(n_per_class):
            img = render_glyph(rng.uniform(lo, hi), rng)
            samples.append(Sample(img, printed[lab], lab))
    means = {lab: np.mean([s.image for s in samples if s.label == lab], axis=0) for lab in TOY_CLASSES}
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _centroid_ratio(render_glyph(mid), means) < ambiguity_target:
            lo = mid
        else:
            hi = mid
    morph = 0.5 * (lo + hi)
    ambiguous = Sample(render_glyph(morph), None, "ambiguous")
    train, test = stratified_split([s.label for s in samples], test_fraction, seed)
    corpus = Corpus(samples, train, test, {"ambiguous": ambiguous})
    corpus.ambiguous_morph = morph
    return corpus


# synthetic faces -----------------------------------------------------------

FIRST = ("Halle", "George", "Colin", "Gerhard", "Tony", "Donald", "Ariel", "Hugo",
         "Serena", "Jean", "Laura", "Vladimir", "Junichiro", "Gloria", "Jacques", "Lleyton")
LAST = ("Berry", "Bush", "Powell", "Schroeder", "Blair", "Rumsfeld", "Sharon", "Chavez",
        "Williams", "Chretien", "Bush", "Putin", "Koizumi", "Arroyo", "Chirac", "Hewitt")


def face_names(n):
    names = []
    for i in range(n):
        base = f"{FIRST[i % len(FIRST)]} {LAST[i % len(LAST)]}"
        names.append(base if i < len(FIRST) else f"{base} {i // len(FIRST) + 1}")
    return names


def _ellipse(yy, xx, cy, cx, ry, rx):
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _face_identity(rng):
    return {
        "bg": rng.uniform(0.0, 1.0, 3),
        "skin": rng.uniform(0.25, 1.0, 3),
        "hair": rng.uniform(0.0, 0.9, 3),
        "shirt": rng.uniform(0.0, 1.0, 3),
        "face_ry": rng.uniform(0.26, 0.36),
        "face_rx": rng.uniform(0.20, 0.30),
        "hair_h": rng.uniform(0.02, 0.16),
        "eye_dx": rng.uniform(0.07, 0.13),
        "eye_r": rng.uniform(0.025, 0.05),
        "eye": rng.uniform(0.0, 0.6, 3),
        "mouth_w": rng.uniform(0.05, 0.13),
        "mouth_y": rng.uniform(0.62, 0.70),
        "glasses": bool(rng.random() < 0.3),
        "pattern": rng.random((4, 2)) < 0.5,
    }


def render_face(ident, rng=None, shape=IMAGE_SHAPE):
    """Procedural frontal "face" for one identity with optional per-sample jitter."""
    _, h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    yy = (yy + 0.5) / h
    xx = (xx + 0.5) / w
    if rng is not None:
        dy, dx = rng.uniform(-0.03, 0.03, 2)
        gain = rng.uniform(0.9, 1.1)
        feat = rng.normal(0.0, 0.008, 4)
    else:
        dy = dx = 0.0
        gain = 1.0
        feat = np.zeros(4)
    yy = yy - dy
    xx = xx - dx
    img = np.empty((3, h, w))
    img[:] = ident["bg"][:, None, None]
    shirt = yy > 0.86
    # shirt carries a symmetric 4x4 identicon block
    cell_y = np.clip(((yy - 0.86) / 0.14 * 4).astype(int), 0, 3)
    cell_x = np.clip((np.abs(xx - 0.5) / 0.5 * 2).astype(int), 0, 1)
    bright = ident["pattern"][cell_y, cell_x]
    for c in range(3):
        img[c][shirt] = np.where(bright[shirt], ident["shirt"][c], 0.5 * ident["shirt"][c])
    cy, cx = 0.50, 0.50
    face = _ellipse(yy, xx, cy, cx, ident["face_ry"], ident["face_rx"])
    hair = _ellipse(yy, xx, cy - ident["face_ry"] * 0.55, cx, ident["face_ry"] * 0.55 + ident["hair_h"],
                    ident["face_rx"] + 0.03) & (yy < cy - ident["face_ry"] * 0.35)
    for c in range(3):
        img[c][face] = ident["skin"][c]
        img[c][hair] = ident["hair"][c]
    ey = 0.45 + feat[0]
    for sx in (-1.0, 1.0):
        eye = _ellipse(yy, xx, ey, cx + sx * (ident["eye_dx"] + feat[1]), ident["eye_r"], ident["eye_r"] * 1.3)
        for c in range(3):
            img[c][eye] = ident["eye"][c]
        if ident["glasses"]:
            ring = _ellipse(yy, xx, ey, cx + sx * ident["eye_dx"], ident["eye_r"] * 2.0, ident["eye_r"] * 2.4)
            inner = _ellipse(yy, xx, ey, cx + sx * ident["eye_dx"], ident["eye_r"] * 1.6, ident["eye_r"] * 2.0)
            img[:, ring & ~inner] = 0.05
    mouth = (np.abs(yy - ident["mouth_y"] - feat[2]) < 0.018) & (np.abs(xx - cx) < ident["mouth_w"] + feat[3])
    img[:, mouth] = np.array([0.55, 0.1, 0.15])[:, None]
    nose = (np.abs(xx - cx) < 0.012) & (yy > 0.50) & (yy < 0.58)
    img[:, nose] *= 0.7
    img = img * gain
    if rng is not None:
        img = img + rng.normal(0.0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_synthetic_faces(n_classes=10, n_per_class=20, overrepresented=None, seed=0,
                             test_fraction=0.2, shape=IMAGE_SHAPE):
    """Procedural identities with rendered names; ``overrepresented`` maps class index -> multiplier."""
    if n_classes < 2:
        raise PreconditionError(f"need at least 2 classes, got {n_classes}")
    overrepresented = dict(overrepresented or {})
    rng = np.random.default_rng(seed)
    names = face_names(n_classes)
    idents = [_face_identity(rng) for _ in range(n_classes)]
    samples = []
    for c in range(n_classes):
        text = render_text(names[c])
        for _ in range(n_per_class * int(overrepresented.get(c, 1))):
            samples.append(Sample(render_face(idents[c], rng, shape), text, names[c]))
    train, test = stratified_split([s.label for s in samples], test_fraction, seed)
    return Corpus(samples, train, test)


# files ---------------------------------------------------------------------

def read_manifest(path):
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise IngestionError(f"{path}:{lineno}: expected 'path<TAB>label'")
            rel, label = line.split("\t", 1)
            entries.append((rel, label))
    return entries


def load_image(path, shape=IMAGE_SHAPE) -> np.ndarray:
    c, h, w = shape
    try:
        with Image.open(path) as im:
            im = im.convert("RGB" if c == 3 else "L")
            if im.size != (w, h):
                # centre-crop to the target aspect, then resample
                sw, sh = im.size
                scale = min(sw / w, sh / h)
                cw, ch = int(round(w * scale)), int(round(h * scale))
                left, top = (sw - cw) // 2, (sh - ch) // 2
                im = im.crop((left, top, left + cw, top + ch)).resize((w, h), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as err:
        raise IngestionError(f"cannot read image {path}: {err}") from err
    return arr.reshape(h, w, c).transpose(2, 0, 1).copy()


def load_image_corpus(directory, manifest, shape=IMAGE_SHAPE, test_fraction=0.2, seed=0):
    """Read a ``path<TAB>label`` manifest; names are rendered from the labels."""
    directory = Path(directory)
    manifest = Path(manifest)
    if not manifest.is_absolute() and not manifest.exists():
        manifest = directory / manifest
    if not manifest.exists():
        raise IngestionError(f"manifest not found: {manifest}")
    samples = []
    texts = {}
    for rel, label in read_manifest(manifest):
        if label not in texts:
            texts[label] = render_text(label)
        path = directory / rel
        if not path.exists():
            raise IngestionError(f"image not found: {path}")
        samples.append(Sample(load_image(path, shape), texts[label], label))
    train, test = stratified_split([s.label for s in samples], test_fraction, seed)
    return Corpus(samples, train, test)


def to_uint8_image(arr) -> Image.Image:
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    pix = np.round(arr * 255.0).astype(np.uint8)
    if arr.shape[0] == 1:
        return Image.fromarray(pix[0], mode="L")
    return Image.fromarray(pix.transpose(1, 2, 0), mode="RGB")


def save_png(arr, path):
    to_uint8_image(arr).save(path, format="PNG", optimize=False)


def write_corpus_images(corpus: Corpus, directory, manifest_name="manifest.tsv"):
    """Write every image as PNG plus a manifest; returns the manifest path."""
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(corpus.samples):
        rel = f"images/{i:05d}.png"
        save_png(s.image, directory / rel)
        lines.append(f"{rel}\t{s.label}\n")
    for name, probe in corpus.probes.items():
        if probe.image is not None:
            save_png(probe.image, directory / f"{name}.png")
    path = directory / manifest_name
    path.write_text("".join(lines), encoding="utf-8")
    return path
