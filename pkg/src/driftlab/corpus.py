"""Synthetic three-language corpus for the pivot translation game.

Each example is a (source, pivot, target) triple rendered deterministically
from a structured Meaning (count, entity, color, action, location, optional
second entity).  The three languages have disjoint content lexicons and
distinct word orders.  The pivot language additionally has synonym pairs:
parallel references always use the canonical form, while the broad text
corpus mixes the two forms freely, so the synonyms are fluent under a
language model without ever matching a reference n-gram.

Source and pivot renderings always have the same token count, so a pivot
message capped at the source length can express the full meaning.

Grounding vectors stand in for image features: a fixed random projection of
the meaning's one-hot slot encoding plus Gaussian observation noise.
"""
from __future__ import annotations

import base64
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, EncodingError

# ---------------------------------------------------------------------------
# lexicons
# ---------------------------------------------------------------------------

ENTITIES = ("cat", "dog", "bird", "fish", "horse", "cow",
            "sheep", "fox", "frog", "bear", "duck", "mouse")
COLORS = ("red", "blue", "green", "black", "white", "brown")
ACTIONS = ("sleep", "run", "jump", "swim", "sing", "eat", "hide", "wait")
LOCATIONS = ("park", "barn", "lake", "hill", "road", "yard")
COUNTS = (1, 2, 3, 4)

PIVOT_COUNT_WORD = {1: "one", 2: "two", 3: "three", 4: "four"}

# Pivot synonym alternates: same meaning, different surface form.
PIVOT_SYNONYM = {
    "cat": "kitty", "dog": "hound", "bird": "fowl", "fish": "trout",
    "horse": "pony", "cow": "calf", "sheep": "lamb", "fox": "vixen",
    "red": "crimson", "blue": "azure", "green": "jade", "brown": "tan",
    "sleep": "doze", "run": "dash", "jump": "leap", "hide": "lurk",
    "park": "garden", "lake": "pond", "road": "path", "hill": "ridge",
}

SRC_WORD = {
    "entity": dict(zip(ENTITIES, (
        "gato", "perro", "ave", "pez", "cabal", "vaca",
        "oveja", "zorro", "rana", "oso", "pato", "raton"))),
    "color": dict(zip(COLORS, (
        "rojo", "azulo", "verde", "negro", "blanco", "pardo"))),
    "action": dict(zip(ACTIONS, (
        "dormir", "correr", "saltar", "nadar",
        "cantar", "comer", "ocultar", "esperar"))),
    "location": dict(zip(LOCATIONS, (
        "parque", "granja", "lago", "cerro", "camino", "patio"))),
    "count": {1: "uno", 2: "dos", 3: "tres", 4: "cuatro"},
}

TGT_WORD = {
    "entity": dict(zip(ENTITIES, (
        "katze", "hund", "vogel", "fisch", "pferd", "kuh",
        "schaf", "fuchs", "frosch", "baer", "ente", "maus"))),
    "color": dict(zip(COLORS, (
        "rot", "blau", "gruen", "schwarz", "weiss", "braun"))),
    "action": dict(zip(ACTIONS, (
        "schlafen", "rennen", "springen", "schwimmen",
        "singen", "essen", "verstecken", "warten"))),
    "location": dict(zip(LOCATIONS, (
        "anlage", "scheune", "see", "huegel", "strasse", "hof"))),
    "count": {1: "eins", 2: "zwei", 3: "drei", 4: "vier"},
}

PERIOD = "."
PIVOT_FUNCTION = ("and", "at", PERIOD)
SRC_FUNCTION = ("y", "en", PERIOD)
TGT_FUNCTION = ("und", "im", PERIOD)

CONTENT_SLOTS = ("count", "entity", "color", "action", "location")

GROUNDING_DIM = 32
GROUNDING_NOISE = 0.05
_ONEHOT_DIM = len(COUNTS) + len(ENTITIES) + len(COLORS) + len(ACTIONS) \
    + len(LOCATIONS) + len(COUNTS) + len(ENTITIES)
_PROJECTION_SEED = 90210
_SYNONYM_SALT = "pivot-form"


@dataclass(frozen=True)
class Meaning:
    """Structured content of one scene; second entity group is optional."""

    count: int
    entity: str
    color: str
    action: str
    location: str
    count2: int | None = None
    entity2: str | None = None

    def __post_init__(self):
        if self.count not in COUNTS or self.entity not in ENTITIES \
                or self.color not in COLORS or self.action not in ACTIONS \
                or self.location not in LOCATIONS:
            raise ConfigError(f"invalid meaning slots: {self}")
        if (self.count2 is None) != (self.entity2 is None):
            raise ConfigError("count2 and entity2 must be set together")
        if self.count2 is not None and (self.count2 not in COUNTS
                                        or self.entity2 not in ENTITIES):
            raise ConfigError(f"invalid second entity group: {self}")

    def key(self) -> tuple:
        return (self.count, self.entity, self.color, self.action,
                self.location, self.count2, self.entity2)


@dataclass
class Triple:
    src: tuple[str, ...]
    pivot: tuple[str, ...]
    tgt: tuple[str, ...]
    meaning: Meaning
    grounding: np.ndarray


def _stable_coin(*parts) -> int:
    text = "\x1f".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8")) & 1


def _pivot_surface(slot: str, value, meaning: Meaning, synonyms: bool) -> str:
    if slot == "count":
        return PIVOT_COUNT_WORD[value]
    alt = PIVOT_SYNONYM.get(value)
    if synonyms and alt is not None \
            and _stable_coin(_SYNONYM_SALT, slot, value, meaning.key()):
        return alt
    return value


def render_pivot(m: Meaning, synonyms: bool = False) -> tuple[str, ...]:
    """Pivot rendering; with synonyms=True half the content words (chosen by
    a stable hash of the meaning) use their alternate surface form."""
    count = PIVOT_COUNT_WORD[m.count]
    color = _pivot_surface("color", m.color, m, synonyms)
    entity = _pivot_surface("entity", m.entity, m, synonyms)
    action = _pivot_surface("action", m.action, m, synonyms)
    location = _pivot_surface("location", m.location, m, synonyms)
    if m.entity2 is None:
        return (count, color, entity, action, "at", location, PERIOD)
    count2 = PIVOT_COUNT_WORD[m.count2]
    entity2 = _pivot_surface("entity2", m.entity2, m, synonyms)
    return (count, color, entity, "and", count2, entity2,
            action, "at", location, PERIOD)


def render_src(m: Meaning) -> tuple[str, ...]:
    w = SRC_WORD
    if m.entity2 is None:
        return (w["count"][m.count], w["entity"][m.entity], w["color"][m.color],
                "en", w["location"][m.location], w["action"][m.action], PERIOD)
    return (w["count"][m.count], w["entity"][m.entity], w["color"][m.color],
            "y", w["count"][m.count2], w["entity"][m.entity2],
            "en", w["location"][m.location], w["action"][m.action], PERIOD)


def render_tgt(m: Meaning) -> tuple[str, ...]:
    w = TGT_WORD
    if m.entity2 is None:
        return (w["action"][m.action], w["count"][m.count], w["entity"][m.entity],
                w["color"][m.color], "im", w["location"][m.location], PERIOD)
    return (w["action"][m.action], w["count"][m.count], w["entity"][m.entity],
            w["color"][m.color], "und", w["count"][m.count2],
            w["entity"][m.entity2], "im", w["location"][m.location], PERIOD)


def _token_meaning_map(lang: str) -> dict:
    """Map each content token of a language to its (slot, value)."""
    out: dict[str, tuple[str, object]] = {}
    if lang == "pivot":
        for c, word in PIVOT_COUNT_WORD.items():
            out[word] = ("count", c)
        for slot, values in (("entity", ENTITIES), ("color", COLORS),
                             ("action", ACTIONS), ("location", LOCATIONS)):
            for v in values:
                out[v] = (slot, v)
                alt = PIVOT_SYNONYM.get(v)
                if alt is not None:
                    out[alt] = (slot, v)
        return out
    table = SRC_WORD if lang == "src" else TGT_WORD
    for slot in ("count", "entity", "color", "action", "location"):
        for v, word in table[slot].items():
            out[word] = (slot, v)
    return out


PIVOT_TOKEN_MEANING = _token_meaning_map("pivot")
SRC_TOKEN_MEANING = _token_meaning_map("src")
TGT_TOKEN_MEANING = _token_meaning_map("tgt")

TOKEN_MEANING = {"src": SRC_TOKEN_MEANING, "pivot": PIVOT_TOKEN_MEANING,
                 "tgt": TGT_TOKEN_MEANING}


def language_inventory(lang: str) -> tuple[str, ...]:
    """Every surface token of a language, content plus function words."""
    if lang == "pivot":
        return tuple(PIVOT_TOKEN_MEANING) + PIVOT_FUNCTION[:2] + (PERIOD,)
    meanings = TOKEN_MEANING[lang]
    function = SRC_FUNCTION if lang == "src" else TGT_FUNCTION
    return tuple(meanings) + function[:2] + (PERIOD,)


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


class Vocab:
    """Token <-> id table with fixed special ids PAD=0, BOS=1, EOS=2, UNK=3."""

    PAD, BOS, EOS, UNK = 0, 1, 2, 3
    SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

    def __init__(self, tokens):
        self.itos = list(self.SPECIALS) + sorted(set(tokens))
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ConfigError("vocabulary tokens collide with special markers")

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, words, add_eos: bool = False) -> list[int]:
        ids = [self.stoi.get(w, self.UNK) for w in words]
        if add_eos:
            ids.append(self.EOS)
        return ids

    def decode(self, ids, stop_at_eos: bool = True) -> list[str]:
        words = []
        for i in ids:
            if i == self.EOS and stop_at_eos:
                break
            if i in (self.PAD, self.BOS):
                continue
            words.append(self.itos[i] if 0 <= i < len(self.itos) else "<unk>")
        return words


def build_vocab(lang: str) -> Vocab:
    return Vocab(language_inventory(lang))


# ---------------------------------------------------------------------------
# domains and sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Slot-frequency profile; the knob that separates the two data regimes."""

    name: str
    count_w: tuple[float, ...]
    entity_w: tuple[float, ...]
    color_w: tuple[float, ...]
    action_w: tuple[float, ...]
    location_w: tuple[float, ...]
    p_second: float
    use_synonyms: bool = False

    def __post_init__(self):
        for field, n in (("count_w", len(COUNTS)), ("entity_w", len(ENTITIES)),
                         ("color_w", len(COLORS)), ("action_w", len(ACTIONS)),
                         ("location_w", len(LOCATIONS))):
            w = getattr(self, field)
            if len(w) != n or any(x < 0 for x in w) or sum(w) <= 0:
                raise ConfigError(f"domain {self.name}: bad weights for {field}")
        if not 0.0 <= self.p_second <= 1.0:
            raise ConfigError(f"domain {self.name}: p_second out of range")


# Agents pretrain on this domain.  Several slot values have zero weight, so
# the parallel pretraining data never teaches their word mappings; the
# fine-tuning domain leans on exactly those values.
PRETRAIN_DOMAIN = DomainSpec(
    name="pretrain",
    count_w=(4.0, 3.0, 2.0, 1.0),
    entity_w=(5.0, 5.0, 4.0, 4.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0, 0.0, 0.0),
    color_w=(4.0, 4.0, 3.0, 2.0, 1.0, 0.0),
    action_w=(4.0, 4.0, 3.0, 3.0, 2.0, 2.0, 1.0, 0.0),
    location_w=(4.0, 3.0, 3.0, 2.0, 1.0, 1.0),
    p_second=0.15,
)

FINETUNE_DOMAIN = DomainSpec(
    name="finetune",
    count_w=(1.0, 2.0, 3.0, 4.0),
    entity_w=(1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0),
    color_w=(1.0, 1.0, 2.0, 3.0, 4.0, 4.0),
    action_w=(1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0),
    location_w=(1.0, 1.0, 2.0, 3.0, 3.0, 4.0),
    p_second=0.4,
)

# Broad-coverage pivot text for the constraint models (language model and
# grounding ranker), covering the full inventories like a general text or
# caption corpus would.
TEXT_DOMAIN = DomainSpec(
    name="text",
    count_w=(1.0, 1.0, 1.0, 1.0),
    entity_w=(1.0,) * 12,
    color_w=(1.0,) * 6,
    action_w=(1.0,) * 8,
    location_w=(1.0,) * 6,
    p_second=0.3,
    use_synonyms=True,
)

DOMAINS = {d.name: d for d in (PRETRAIN_DOMAIN, FINETUNE_DOMAIN, TEXT_DOMAIN)}


def _norm(w) -> np.ndarray:
    a = np.asarray(w, dtype=np.float64)
    return a / a.sum()


def sample_meaning(domain: DomainSpec, rng: np.random.Generator) -> Meaning:
    count = int(rng.choice(COUNTS, p=_norm(domain.count_w)))
    entity = str(rng.choice(ENTITIES, p=_norm(domain.entity_w)))
    color = str(rng.choice(COLORS, p=_norm(domain.color_w)))
    action = str(rng.choice(ACTIONS, p=_norm(domain.action_w)))
    location = str(rng.choice(LOCATIONS, p=_norm(domain.location_w)))
    count2 = entity2 = None
    if rng.random() < domain.p_second:
        count2 = int(rng.choice(COUNTS, p=_norm(domain.count_w)))
        others = [e for e in ENTITIES if e != entity]
        w = _norm([domain.entity_w[ENTITIES.index(e)] for e in others])
        entity2 = str(rng.choice(others, p=w))
    return Meaning(count, entity, color, action, location, count2, entity2)


def _projection() -> np.ndarray:
    rng = np.random.default_rng(_PROJECTION_SEED)
    return rng.normal(0.0, 1.0 / np.sqrt(_ONEHOT_DIM),
                      size=(GROUNDING_DIM, _ONEHOT_DIM))


_PROJ_CACHE: np.ndarray | None = None


def meaning_onehot(m: Meaning) -> np.ndarray:
    v = np.zeros(_ONEHOT_DIM)
    off = 0
    v[off + COUNTS.index(m.count)] = 1.0
    off += len(COUNTS)
    v[off + ENTITIES.index(m.entity)] = 1.0
    off += len(ENTITIES)
    v[off + COLORS.index(m.color)] = 1.0
    off += len(COLORS)
    v[off + ACTIONS.index(m.action)] = 1.0
    off += len(ACTIONS)
    v[off + LOCATIONS.index(m.location)] = 1.0
    off += len(LOCATIONS)
    if m.count2 is not None:
        v[off + COUNTS.index(m.count2)] = 1.0
        v[off + len(COUNTS) + ENTITIES.index(m.entity2)] = 1.0
    return v


def grounding_vector(m: Meaning, rng: np.random.Generator,
                     sigma: float = GROUNDING_NOISE) -> np.ndarray:
    global _PROJ_CACHE
    if _PROJ_CACHE is None:
        _PROJ_CACHE = _projection()
    clean = _PROJ_CACHE @ meaning_onehot(m)
    return clean + rng.normal(0.0, sigma, size=GROUNDING_DIM)


def make_triple(m: Meaning, rng: np.random.Generator,
                sigma: float = GROUNDING_NOISE,
                synonyms: bool = False) -> Triple:
    src, pivot = render_src(m), render_pivot(m, synonyms)
    assert len(src) == len(pivot), "source/pivot token counts must agree"
    return Triple(src, pivot, render_tgt(m), m, grounding_vector(m, rng, sigma))


def generate_corpus(domain: DomainSpec, n: int, seed: int,
                    sigma: float = GROUNDING_NOISE,
                    exclude: set | None = None) -> list[Triple]:
    """Sample n triples with distinct meanings (also distinct from exclude)."""
    rng = np.random.default_rng(seed)
    seen = set() if exclude is None else set(exclude)
    meanings: list[Meaning] = []
    attempts = 0
    while len(meanings) < n:
        m = sample_meaning(domain, rng)
        attempts += 1
        if attempts > 200 * n + 1000:
            raise ConfigError(
                f"domain {domain.name}: cannot draw {n} distinct meanings")
        if m.key() in seen:
            continue
        seen.add(m.key())
        meanings.append(m)
    return [make_triple(m, rng, sigma, domain.use_synonyms) for m in meanings]


def meaning_keys(triples) -> set:
    return {t.meaning.key() for t in triples}


def split(triples, fractions: tuple[float, ...]) -> list[list[Triple]]:
    """Partition a corpus into consecutive blocks by fractions summing to 1.

    The corpus is already in sampling order (a random permutation of meanings),
    so consecutive slicing yields exchangeable, deterministic partitions.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigError(f"fractions must be nonnegative and sum to 1: {fractions}")
    n = len(triples)
    sizes = [int(round(f * n)) for f in fractions]
    sizes[0] += n - sum(sizes)
    if sizes[0] < 0:
        raise ConfigError(f"fractions {fractions} over-allocate {n} examples")
    parts, off = [], 0
    for s in sizes:
        parts.append(list(triples[off:off + s]))
        off += s
    return parts


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_TSV_HEADER = "# corpus v1: src<TAB>pivot<TAB>tgt<TAB>grounding<TAB>meaning"


def meaning_to_str(m: Meaning) -> str:
    parts = [f"count={m.count}", f"entity={m.entity}", f"color={m.color}",
             f"action={m.action}", f"location={m.location}"]
    if m.count2 is not None:
        parts += [f"count2={m.count2}", f"entity2={m.entity2}"]
    return ";".join(parts)


def meaning_from_str(s: str) -> Meaning:
    kv = {}
    for part in s.split(";"):
        if "=" not in part:
            raise EncodingError(f"bad meaning field: {s!r}")
        k, v = part.split("=", 1)
        kv[k] = v
    try:
        return Meaning(
            count=int(kv["count"]), entity=kv["entity"], color=kv["color"],
            action=kv["action"], location=kv["location"],
            count2=int(kv["count2"]) if "count2" in kv else None,
            entity2=kv.get("entity2"),
        )
    except (KeyError, ValueError, ConfigError) as e:
        raise EncodingError(f"bad meaning field: {s!r} ({e})") from e


def write_tsv(path: str | Path, triples) -> None:
    lines = [_TSV_HEADER]
    for t in triples:
        vec = base64.b64encode(
            np.asarray(t.grounding, dtype="<f8").tobytes()).decode("ascii")
        lines.append("\t".join((
            " ".join(t.src), " ".join(t.pivot), " ".join(t.tgt),
            vec, meaning_to_str(t.meaning))))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tsv(path: str | Path) -> list[Triple]:
    triples = []
    for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise EncodingError(f"{path}:{lineno}: expected 5 columns, got {len(cols)}")
        src, pivot, tgt, vec_s, meaning_s = cols
        try:
            raw = base64.b64decode(vec_s.encode("ascii"), validate=True)
        except (ValueError, UnicodeEncodeError) as e:
            raise EncodingError(f"{path}:{lineno}: bad grounding encoding") from e
        vec = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if vec.shape[0] != GROUNDING_DIM:
            raise EncodingError(
                f"{path}:{lineno}: grounding has {vec.shape[0]} dims, "
                f"expected {GROUNDING_DIM}")
        triples.append(Triple(
            tuple(src.split(" ")), tuple(pivot.split(" ")), tuple(tgt.split(" ")),
            meaning_from_str(meaning_s), vec))
    return triples
