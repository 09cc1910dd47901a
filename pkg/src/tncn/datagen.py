"""Deterministic synthetic sequence sources.

Three generators cover the experiment protocols: bouncing-sprite video
(digits, block glyphs, or clothing-proxy silhouettes, optionally loaded
from IDX files), a noisy cosine scalar stream, and character corpora
encoded as one-hot symbol streams.  Every generator is a pure function of
(config, rng); datasets fan out over per-sequence child generators derived
with :func:`tncn.numerics.derive_rng` so sequence i is reproducible in
isolation.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import derive_rng


class DatagenError(ValueError):
    """Raised on invalid generator configuration."""


class IdxFormatError(DatagenError):
    """Raised when an IDX file is malformed (bad magic, truncation)."""


IDX_IMAGE_MAGIC = 0x00000803  # unsigned byte, 3 dimensions


@dataclass
class SpriteSet:
    sprites: list              # h x w arrays with values in [0, 1]
    source: str = "builtin_glyphs"

    def __post_init__(self):
        if not self.sprites:
            raise DatagenError("sprite set must be non-empty")
        for s in self.sprites:
            if s.min() < 0.0 or s.max() > 1.0:
                raise DatagenError("sprite values must lie in [0, 1]")

    @property
    def shape(self):
        return self.sprites[0].shape


def load_idx_sprites(path):
    """Read an IDX image file (big-endian header, unsigned-byte pixels)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise IdxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, count, h, w = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    expected = 16 + count * h * w
    if len(raw) < expected:
        raise IdxFormatError(
            f"{path}: payload truncated ({len(raw)} bytes, expected {expected})"
        )
    pixels = np.frombuffer(raw[16:expected], dtype=np.uint8)
    images = pixels.reshape(count, h, w).astype(np.float64) / 255.0
    return SpriteSet(sprites=list(images), source="idx_file")


# 8x8 bitmap sprites: digits, block letters A-J (the glyph stand-in), and
# clothing-proxy silhouettes for the third continual task.
_DIGIT_ROWS = {
    "0": "..####...#....#..#...##..#..#.#..#.#..#..##...#..#....#...####..",
    "1": "...##.....###......##......##......##......##......##....######.",
    "2": "..####...#....#.......#......#......#......#......#......######.",
    "3": "..####...#....#.......#....###........#.......#..#....#...####..",
    "4": "....##.....#.#....#..#...#...#...######......#.......#.......#..",
    "5": ".######..#.......#.......#####........#.......#..#....#...####..",
    "6": "..####...#.......#.......#####...#....#..#....#..#....#...####..",
    "7": ".######." "......#." ".....#.." "....#..." "...#...."
         "...#...." "...#...." "...#....",
    "8": "..####...#....#..#....#...####...#....#..#....#..#....#...####..",
    "9": "..####...#....#..#....#...#####.......#.......#.......#...####..",
}
_GLYPH_ROWS = {
    "A": "...##.....#..#...#....#..#....#..######..#....#..#....#..#....#.",
    "B": ".#####...#....#..#....#..#####...#....#..#....#..#....#..#####..",
    "C": "..####...#....#..#.......#.......#.......#.......#....#...####..",
    "D": ".#####...#....#..#....#..#....#..#....#..#....#..#....#..#####..",
    "E": ".######..#.......#.......#####...#.......#.......#.......######.",
    "F": ".######..#.......#.......#####...#.......#.......#.......#......",
    "G": "..####...#....#..#.......#..###..#....#..#....#..#....#...####..",
    "H": ".#....#..#....#..#....#..######..#....#..#....#..#....#..#....#.",
    "I": ".######....##......##......##......##......##......##....######.",
    "J": "..#####......#.......#.......#.......#...#...#...#...#....###...",
}
_CLOTHING_ROWS = {
    "tshirt":   "........###..############.####.#..####....####....####....####..",
    "trouser":  "..####....####....#..#....#..#....#..#...##..##..##..##.........",
    "pullover": "##....############.######..######..######..######..######.......",
    "dress":    "...##......##.....####....####...######..######..########.......",
    "coat":     ".######.########.#.##.#.##.##.####.##.####.##.##########........",
    "sandal":   "..................####...####....##.#.#...#####...######.######.",
    "shirt":    "..####...######.##.##.###..##..#..####....####....####..........",
    "sneaker":  "..................###....#####..######..########.########.......",
    "bag":      "..####...#....#..######..######..######..######..######.........",
    "boot":     "..###.....###.....###.....###.....#####...######..#######.......",
}


def _rows_to_sprite(packed):
    rows = [packed[i * 8:(i + 1) * 8] for i in range(8)]
    return np.array(
        [[1.0 if ch == "#" else 0.0 for ch in row] for row in rows]
    )


def builtin_sprites(kind):
    """Procedural 8x8 sprite sets: "digits", "glyphs", or "clothing"."""
    table = {
        "digits": _DIGIT_ROWS,
        "glyphs": _GLYPH_ROWS,
        "clothing": _CLOTHING_ROWS,
    }.get(kind)
    if table is None:
        raise DatagenError(f"unknown builtin sprite kind: {kind!r}")
    return SpriteSet(
        sprites=[_rows_to_sprite(v) for v in table.values()],
        source="builtin_glyphs",
    )


@dataclass
class BounceConfig:
    frame_size: int = 64
    seq_len: int = 20
    num_objects: int = 2
    speed_range: tuple = (2.0, 5.0)
    overlap_mode: str = "clamp_sum"   # or "max"

    def validate(self, sprite_shape):
        if self.seq_len < 1 or self.num_objects < 1:
            raise DatagenError("seq_len and num_objects must be >= 1")
        if self.overlap_mode not in ("clamp_sum", "max"):
            raise DatagenError(f"unknown overlap_mode: {self.overlap_mode}")
        if max(sprite_shape) >= self.frame_size:
            raise DatagenError(
                f"sprite {sprite_shape} does not fit in frame {self.frame_size}"
            )
        if not 0 < self.speed_range[0] <= self.speed_range[1]:
            raise DatagenError(f"bad speed_range: {self.speed_range}")


def reflect_step(pos, vel, upper):
    """Advance one axis one step; bounce off [0, upper] preserving speed."""
    pos = pos + vel
    if pos < 0.0:
        return 0.0, abs(vel)
    if pos > upper:
        return upper, -abs(vel)
    return pos, vel


def gen_bouncing_sequence(sprites, cfg, rng):
    """One video: (seq_len, frame_size**2) float array with values in [0,1].

    Each object picks a random sprite, a random position, and a velocity
    whose direction is uniform on the unit circle and whose magnitude is
    uniform over ``speed_range``; objects bounce off the frame edges.
    """
    cfg.validate(sprites.shape)
    h, w = sprites.shape
    size = cfg.frame_size
    max_y, max_x = float(size - h), float(size - w)

    chosen, pos, vel = [], [], []
    for _ in range(cfg.num_objects):
        chosen.append(sprites.sprites[rng.integers(len(sprites.sprites))])
        pos.append([rng.uniform(0, max_y), rng.uniform(0, max_x)])
        angle = rng.uniform(0.0, 2.0 * np.pi)
        speed = rng.uniform(*cfg.speed_range)
        vel.append([speed * np.sin(angle), speed * np.cos(angle)])

    frames = np.zeros((cfg.seq_len, size * size))
    for t in range(cfg.seq_len):
        canvas = np.zeros((size, size))
        for sprite, (py, px) in zip(chosen, pos):
            iy, ix = int(np.floor(py)), int(np.floor(px))
            region = canvas[iy:iy + h, ix:ix + w]
            if cfg.overlap_mode == "max":
                np.maximum(region, sprite, out=region)
            else:
                region += sprite
        if cfg.overlap_mode == "clamp_sum":
            np.minimum(canvas, 1.0, out=canvas)
        frames[t] = canvas.ravel()
        for obj in range(cfg.num_objects):
            pos[obj][0], vel[obj][0] = reflect_step(pos[obj][0], vel[obj][0], max_y)
            pos[obj][1], vel[obj][1] = reflect_step(pos[obj][1], vel[obj][1], max_x)
    return frames


def gen_bouncing_dataset(sprites, cfg, count, seed):
    """(count, seq_len, frame**2) stack; sequence i uses child stream i."""
    return np.stack([
        gen_bouncing_sequence(sprites, cfg, derive_rng(seed, i))
        for i in range(count)
    ])


@dataclass
class CosineConfig:
    sigma: float = 0.02
    dt: float = 0.05
    steps: int = 100000

    def validate(self):
        if self.sigma < 0:
            raise DatagenError("sigma must be >= 0")
        if self.dt <= 0 or self.steps < 1:
            raise DatagenError("dt must be > 0 and steps >= 1")
        return self


def gen_noisy_cosine(cfg, rng):
    """x_k = cos(k * dt) + eps_k with eps ~ normal(0, sigma^2), k from 0."""
    cfg.validate()
    t = np.arange(cfg.steps) * cfg.dt
    noise = rng.normal(0.0, cfg.sigma, cfg.steps) if cfg.sigma > 0 else 0.0
    return np.cos(t) + noise


@dataclass
class SymbolStream:
    vocab: list
    ids: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {ch: i for i, ch in enumerate(self.vocab)}
        if len(self._index) != len(self.vocab):
            raise DatagenError("vocab contains duplicate symbols")
        if len(self.ids) and int(self.ids.max()) >= len(self.vocab):
            raise DatagenError("symbol id outside vocab")

    @property
    def vocab_size(self):
        return len(self.vocab)

    def one_hot(self):
        """(T, V) one-hot view of the stream."""
        out = np.zeros((len(self.ids), self.vocab_size))
        if len(self.ids):
            out[np.arange(len(self.ids)), self.ids] = 1.0
        return out

    def decode(self):
        return "".join(self.vocab[i] for i in self.ids)


def encode_char_corpus(text, vocab=None):
    """Symbol stream over UTF-8 text; vocab in first-appearance order.

    A supplied vocab is closed: unseen characters raise DatagenError.
    """
    if vocab is None:
        vocab = list(dict.fromkeys(text))
        index = {ch: i for i, ch in enumerate(vocab)}
    else:
        vocab = list(vocab)
        index = {ch: i for i, ch in enumerate(vocab)}
        bad = sorted({ch for ch in text if ch not in index})
        if bad:
            raise DatagenError(f"characters outside fixed vocab: {bad!r}")
    ids = np.array([index[ch] for ch in text], dtype=np.int64)
    return SymbolStream(vocab=vocab, ids=ids)
