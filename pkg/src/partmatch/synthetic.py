"""Seeded synthetic product offers with controllable block skew and missing keys.

Offers come in clusters: a base product plus noisy copies (typos in the
title, dropped or reordered description words), so every run has real
matches to find.
"""

from __future__ import annotations

import random
from collections.abc import Mapping, Sequence

from .model import DEFAULT_SOURCE, Entity

COLUMNS = ("title", "description", "manufacturer", "type")

DRIVE_BLOCK_SIZES = {"3½": 1300, "2½": 650, "DVD-RW": 450, "Blu-ray": 200, "HD-DVD": 200, "CD-RW": 200}
DRIVE_MISC = 600

_MANUFACTURERS = [
    "Samsung", "Western Digital", "Seagate", "Toshiba", "Hitachi", "LG", "Sony", "Pioneer",
    "Lite-On", "Verbatim", "Maxtor", "Fujitsu", "Plextor", "Asus", "Lacie", "Intenso",
]
_WORDS = [
    "drive", "internal", "external", "black", "silver", "retail", "bulk", "sata", "usb", "ide",
    "cache", "rpm", "speed", "writer", "reader", "dual", "layer", "slim", "portable", "desktop",
    "capacity", "storage", "backup", "fast", "quiet", "edition", "kit", "bundle", "firmware",
    "interface", "burner", "combo", "tray", "slot", "load", "optical", "magnetic", "disk",
    "warranty", "oem", "model", "series", "pro", "plus", "ultra", "mini", "max", "lite",
]
_UNITS = ["GB", "TB", "MB"]


def _type_names(k: int) -> list[str]:
    return [f"T{i:03d}" for i in range(k)]


def zipf_sizes(n: int, num_keys: int, exponent: float, rng: random.Random) -> list[str]:
    keys = _type_names(num_keys)
    weights = [1.0 / (r + 1) ** exponent for r in range(num_keys)]
    return rng.choices(keys, weights=weights, k=n)


def _typo(text: str, rng: random.Random) -> str:
    if len(text) < 3:
        return text
    i = rng.randrange(len(text) - 1)
    op = rng.randrange(3)
    if op == 0:
        return text[:i] + text[i + 1] + text[i] + text[i + 2 :]
    if op == 1:
        return text[:i] + text[i + 1 :]
    return text[:i] + rng.choice("abcdefghijklmnopqrstuvwxyz") + text[i:]


def _base_product(rng: random.Random, kind: str | None) -> dict[str, str]:
    maker = rng.choice(_MANUFACTURERS)
    model = "".join(rng.choice("ABCDEFGHJKLMNPRSTVWXZ") for _ in range(2)) + str(rng.randrange(100, 9999))
    size = f"{rng.choice([1, 2, 4, 8, 16, 32, 64, 128, 250, 320, 500, 750])}{rng.choice(_UNITS)}"
    title_words = rng.sample(_WORDS, 3)
    title = " ".join([maker, model, size, *title_words])
    desc = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(8, 16)))
    return {"title": title, "description": f"{kind or 'storage'} {desc} {model}", "manufacturer": maker}


def _variant(base: Mapping[str, str], rng: random.Random) -> dict[str, str]:
    title = base["title"]
    for _ in range(rng.randint(0, 2)):
        title = _typo(title, rng)
    words = base["description"].split()
    if len(words) > 4 and rng.random() < 0.5:
        del words[rng.randrange(len(words))]
    if rng.random() < 0.3:
        i = rng.randrange(len(words) - 1)
        words[i], words[i + 1] = words[i + 1], words[i]
    return {"title": title, "description": " ".join(words), "manufacturer": base["manufacturer"]}


def generate_synthetic(
    n: int,
    *,
    seed: int = 0,
    miss_rate: float = 0.0,
    num_keys: int = 20,
    zipf_exponent: float = 1.1,
    block_sizes: Mapping[str, int] | None = None,
    duplicate_rate: float = 0.35,
    source_id: str = DEFAULT_SOURCE,
    id_prefix: str = "p",
) -> list[Entity]:
    """Generate ``n`` offers.

    With ``block_sizes`` the ``type`` attribute takes exactly those counts and
    the remaining ``n - sum(block_sizes)`` offers have no type. Otherwise
    ``round(n * miss_rate)`` offers lack a type and the rest follow a Zipf law
    over ``num_keys`` types.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= miss_rate < 1.0:
        raise ValueError("miss_rate must lie in [0, 1)")
    rng = random.Random(seed)

    types: list[str | None]
    if block_sizes is not None:
        typed = sum(block_sizes.values())
        if typed > n:
            raise ValueError(f"block sizes sum to {typed} > n = {n}")
        types = [k for k, c in block_sizes.items() for _ in range(c)] + [None] * (n - typed)
    else:
        misc = round(n * miss_rate)
        types = zipf_sizes(n - misc, num_keys, zipf_exponent, rng) + [None] * misc
    rng.shuffle(types)

    bases_by_type: dict[str | None, list[dict[str, str]]] = {}
    all_bases: list[dict[str, str]] = []
    rows = []
    for kind in types:
        pool = bases_by_type.setdefault(kind, [])
        candidates = pool if kind is not None else all_bases
        if candidates and rng.random() < duplicate_rate:
            attrs = _variant(rng.choice(candidates), rng)
        else:
            attrs = _base_product(rng, kind)
            pool.append(attrs)
            all_bases.append(attrs)
        rows.append({**attrs, "type": kind})

    width = max(6, len(str(n)))
    return [Entity(f"{id_prefix}{i:0{width}d}", source_id, row) for i, row in enumerate(rows)]


def drive_entities(seed: int = 0) -> list[Entity]:
    """3,600 drive offers in six skewed type blocks plus untyped offers."""
    return generate_synthetic(
        sum(DRIVE_BLOCK_SIZES.values()) + DRIVE_MISC, seed=seed, block_sizes=DRIVE_BLOCK_SIZES
    )


def entity_columns(entities: Sequence[Entity]) -> list[str]:
    cols: list[str] = []
    for e in entities:
        for k in e.attributes:
            if k not in cols:
                cols.append(k)
    return cols
