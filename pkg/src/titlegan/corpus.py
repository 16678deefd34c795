"""Data model, vocabulary and the deterministic synthetic corpus.

Records carry a long title, a gold short title, attribute tags and an image
feature vector. The synthetic generator builds products whose short title is
a canonical (brand, modifiers, category) core; the long title buries that
core in noise words and, with configurable probability, a contradicting
modifier whose true counterpart is recoverable only from the attribute tags.
Files are JSON-lines with exact float round-tripping.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .params import make_rng

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_STREAM_SYNTH = 101


class CorpusFormatError(ValueError):
    """Malformed corpus or vocab file; message names the offending line."""


class Vocab:
    """Token <-> id bijection with ids 0..3 reserved for the specials."""

    def __init__(self, tokens):
        self.id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, tokens) -> list:
        """Map tokens to ids; unknown tokens become UNK."""
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids, strip_specials: bool = True) -> list:
        """Map ids back to tokens. PAD is never emitted; strip_specials also
        drops BOS and EOS."""
        skip = {PAD, BOS, EOS} if strip_specials else {PAD}
        return [self.id_to_token[i] for i in ids if i not in skip]

    def save(self, path):
        payload = {"version": 1, "tokens": self.id_to_token[len(SPECIAL_TOKENS):]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if not isinstance(payload, dict) or "tokens" not in payload:
            raise CorpusFormatError(f"{path}: not a vocab file")
        return cls(payload["tokens"])


def build_vocab(records, min_freq: int = 1) -> Vocab:
    """Vocabulary of every token with corpus frequency >= min_freq.

    Ids are assigned by frequency (descending), ties broken lexicographically,
    after the four reserved specials.
    """
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    records = list(records)
    if not records:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    freq: dict[str, int] = {}
    for rec in records:
        for token in rec.long_title + rec.short_title + rec.attr_tags:
            freq[token] = freq.get(token, 0) + 1
    kept = sorted(
        (t for t, n in freq.items() if n >= min_freq),
        key=lambda t: (-freq[t], t),
    )
    return Vocab(kept)


@dataclass
class ProductRecord:
    """One product: long title, gold short title, attribute tags, image features."""

    long_title: list
    short_title: list
    attr_tags: list
    image_features: list

    def validate(self):
        if not (1 <= len(self.short_title) <= len(self.long_title)):
            raise ValueError(
                f"need 1 <= |short| <= |long|, got {len(self.short_title)} "
                f"and {len(self.long_title)}"
            )
        for v in self.image_features:
            if not math.isfinite(v):
                raise ValueError(f"non-finite image feature {v!r}")
        return self


DEFAULT_BRANDS = (
    "acme", "zenbo", "nordica", "kelvin", "orbit",
    "lumos", "vertex", "halcyon", "pyxis", "quill",
)
DEFAULT_CATEGORIES = (
    "jacket", "skirt", "sneaker", "backpack", "lamp", "kettle", "headphone", "sofa",
)
DEFAULT_MODIFIER_PAIRS = (
    ("wild", "delicate"), ("retro", "modern"), ("matte", "glossy"),
    ("slim", "roomy"), ("floral", "plain"), ("sporty", "formal"),
)
DEFAULT_MODIFIERS = (
    "lace", "hooded", "wireless", "foldable", "padded", "striped", "velvet", "ceramic",
)
DEFAULT_NOISE_WORDS = (
    "new", "hot", "sale", "2026", "limited", "edition", "premium", "quality",
    "free", "shipping", "official", "store", "flagship", "genuine", "special",
    "offer", "classic", "series", "super", "value", "trend", "pick",
)


@dataclass
class SynthConfig:
    """Knobs for the synthetic corpus generator. Fully determined by seed."""

    n_records: int = 500
    brands: tuple = DEFAULT_BRANDS
    categories: tuple = DEFAULT_CATEGORIES
    modifiers: tuple = DEFAULT_MODIFIERS
    modifier_pairs: tuple = DEFAULT_MODIFIER_PAIRS
    noise_words: tuple = DEFAULT_NOISE_WORDS
    k_range: tuple = (8, 16)
    n_range: tuple = (3, 5)
    m_range: tuple = (3, 7)
    image_dim: int = 16
    noise_prob: float = 0.3
    feature_noise: float = 0.05
    seed: int = 0

    def all_modifiers(self) -> list:
        paired = [m for pair in self.modifier_pairs for m in pair]
        return paired + list(self.modifiers)

    def validate(self):
        pools = [
            list(self.brands), list(self.categories), self.all_modifiers(),
            list(self.noise_words),
        ]
        seen: set = set(SPECIAL_TOKENS)
        for pool in pools:
            for token in pool:
                if token in seen:
                    raise ValueError(f"token {token!r} appears in two pools or is reserved")
                seen.add(token)
        if self.n_records < 0:
            raise ValueError("n_records must be >= 0")
        for name, rng_ in (("k_range", self.k_range), ("n_range", self.n_range),
                           ("m_range", self.m_range)):
            if rng_[0] > rng_[1] or rng_[0] < 1:
                raise ValueError(f"{name} {rng_} is not a valid range")
        if self.n_range[0] < 3:
            raise ValueError("n_range lower bound must be >= 3 (brand + modifier + category)")
        max_mods = self.n_range[1] - 2
        if max_mods > len(self.all_modifiers()):
            raise ValueError("not enough modifiers for the requested n_range")
        # room for core + contradicting partner + at least zero noise words
        if self.k_range[0] < self.n_range[1] + 1:
            raise ValueError("k_range lower bound too small for core plus a contradiction")
        if self.k_range[1] - 3 > len(self.noise_words):
            raise ValueError("noise pool too small for k_range upper bound")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValueError("noise_prob must be in [0, 1]")
        if self.image_dim < 1:
            raise ValueError("image_dim must be >= 1")
        return self


def _category_basis(category: str, dim: int) -> np.ndarray:
    """Fixed unit vector per category name (stable across runs and platforms)."""
    digest = hashlib.sha256(category.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    vec = make_rng(key).standard_normal(dim)
    return vec / np.linalg.norm(vec)


def synth_generate(config: SynthConfig) -> list:
    """Generate the deterministic synthetic corpus described by config."""
    config.validate()
    records = []
    paired = [m for pair in config.modifier_pairs for m in pair]
    partner_of = {}
    for a, b in config.modifier_pairs:
        partner_of[a] = b
        partner_of[b] = a
    all_mods = config.all_modifiers()
    canon_rank = {m: i for i, m in enumerate(all_mods)}
    for r in range(config.n_records):
        rng = make_rng(config.seed, _STREAM_SYNTH, r)
        brand = str(rng.choice(config.brands))
        category = str(rng.choice(config.categories))
        n_mods = int(rng.integers(config.n_range[0] - 2, config.n_range[1] - 2 + 1))
        mods = []
        if paired:
            mods.append(str(rng.choice(paired)))
        while len(mods) < n_mods:
            blocked = set(mods) | {partner_of.get(m) for m in mods}
            avail = [m for m in all_mods if m not in blocked]
            mods.append(str(rng.choice(avail)))
        mods.sort(key=canon_rank.__getitem__)
        short = [brand] + mods + [category]

        k = int(rng.integers(config.k_range[0], config.k_range[1] + 1))
        inject = rng.random() < config.noise_prob
        partner = None
        if inject:
            paired_core = [m for m in mods if m in partner_of]
            if paired_core:
                partner = partner_of[str(rng.choice(paired_core))]
        core = short + ([partner] if partner else [])
        n_noise = k - len(core)
        noise = [str(w) for w in rng.choice(config.noise_words, size=n_noise,
                                            replace=False)]
        long_title = core + noise
        order = rng.permutation(len(long_title))
        long_title = [long_title[i] for i in order]

        m_total = int(rng.integers(config.m_range[0], config.m_range[1] + 1))
        n_extra = max(0, m_total - n_mods - 1)
        extras = [str(w) for w in rng.choice(config.noise_words, size=n_extra,
                                             replace=False)]
        attrs = mods + [category] + extras

        feats = _category_basis(category, config.image_dim)
        feats = feats + config.feature_noise * rng.standard_normal(config.image_dim)
        records.append(
            ProductRecord(
                long_title=long_title,
                short_title=short,
                attr_tags=attrs,
                image_features=[float(v) for v in feats],
            ).validate()
        )
    return records


_RECORD_FIELDS = ("long_title", "short_title", "attr_tags", "image_features")


def save_corpus(records, path):
    """Write records as JSON lines; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "long_title": rec.long_title,
                "short_title": rec.short_title,
                "attr_tags": rec.attr_tags,
                "image_features": rec.image_features,
            }, ensure_ascii=False))
            fh.write("\n")


def load_corpus(path) -> list:
    """Read a JSON-lines corpus; malformed lines raise with their line number."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if not isinstance(row, dict):
                    raise ValueError("record is not an object")
                missing = [f for f in _RECORD_FIELDS if f not in row]
                if missing:
                    raise ValueError(f"missing fields {missing}")
                for f in ("long_title", "short_title", "attr_tags"):
                    if not all(isinstance(t, str) for t in row[f]):
                        raise ValueError(f"{f} must be a list of strings")
                rec = ProductRecord(
                    long_title=list(row["long_title"]),
                    short_title=list(row["short_title"]),
                    attr_tags=list(row["attr_tags"]),
                    image_features=[float(v) for v in row["image_features"]],
                ).validate()
            except (ValueError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    return records


def split_records(records, fractions=(0.8, 0.1, 0.1)):
    """Deterministic train/valid/test split by record index, cycle of ten.

    Fractions must be non-negative multiples of 0.1 summing to 1; with the
    default split, indices 0-7 of every block of ten go to train, 8 to valid
    and 9 to test, so 100 records split exactly 80/10/10.
    """
    tenths = [round(f * 10) for f in fractions]
    if len(tenths) != 3 or sum(tenths) != 10 or any(t < 0 for t in tenths):
        raise ValueError(f"fractions must be tenths summing to 1, got {fractions}")
    bounds = (tenths[0], tenths[0] + tenths[1])
    splits = ([], [], [])
    for idx, rec in enumerate(records):
        slot = idx % 10
        if slot < bounds[0]:
            splits[0].append(rec)
        elif slot < bounds[1]:
            splits[1].append(rec)
        else:
            splits[2].append(rec)
    return splits
