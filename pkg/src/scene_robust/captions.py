"""Caption records and the valid-word preprocessing pipeline.

Tokens are lowercased, stop words and person nouns are removed, and the
survivors are lemmatized by a shipped rule table (plural stripping plus
common irregulars) so the pipeline stays hermetic.  Person nouns are
filtered again after lemmatization: a plural such as "women" must not
reintroduce a removed noun through its lemma.
"""

from __future__ import annotations

import gzip
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

PERSON_NOUNS = frozenset({"man", "woman", "girl", "boy"})

_TOKEN_RE = re.compile(r"[a-z]+")

_LEMMA_IRREGULAR = {
    "men": "man",
    "women": "woman",
    "children": "child",
    "people": "person",
    "feet": "foot",
    "teeth": "tooth",
    "geese": "goose",
    "mice": "mouse",
    "knives": "knife",
    "leaves": "leaf",
    "wolves": "wolf",
    "shelves": "shelf",
    "loaves": "loaf",
    "lives": "life",
    "wives": "wife",
    "potatoes": "potato",
    "tomatoes": "tomato",
    "heroes": "hero",
}

# words ending in -s that are not plurals
_LEMMA_KEEP = frozenset(
    {
        "bus",
        "gas",
        "lens",
        "series",
        "species",
        "news",
        "iris",
        "campus",
        "canvas",
        "tennis",
        "circus",
        "chess",
        "pliers",
        "scissors",
        "stairs",
    }
)


@lru_cache(maxsize=1)
def shipped_stop_words() -> frozenset[str]:
    text = resources.files("scene_robust").joinpath("data/stopwords.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


def lemmatize(word: str) -> str:
    """Rule-based noun lemmatizer: irregular lookup, then plural stripping."""
    if word in _LEMMA_IRREGULAR:
        return _LEMMA_IRREGULAR[word]
    if word in _LEMMA_KEEP or len(word) <= 3:
        return word
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("sses", "shes", "ches", "xes", "zes")):
        return word[:-2]
    if word.endswith("ss") or word.endswith("us") or word.endswith("is"):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def preprocess_caption(
    caption: str,
    stop_words: frozenset[str] | None = None,
    person_nouns: Iterable[str] = (),
) -> list[str]:
    """Reduce a raw caption to its ordered list of valid words.

    ``person_nouns`` extends the built-in removal set.  Order is preserved
    and duplicate valid words are retained; an empty result is legal.
    """
    stops = shipped_stop_words() if stop_words is None else stop_words
    removed = PERSON_NOUNS | {w.lower() for w in person_nouns}
    out: list[str] = []
    for token in _TOKEN_RE.findall(caption.lower()):
        if token in stops or token in removed:
            continue
        lemma = lemmatize(token)
        if lemma in stops or lemma in removed:
            continue
        out.append(lemma)
    return out


@dataclass(frozen=True)
class CaptionRecord:
    """One caption, optionally labeled with a scene class id."""

    image_id: str
    caption: str
    label_id: int | None = None


def _open_maybe_gzip(path: Path, mode: str):
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def read_caption_records(path: str | Path) -> list[CaptionRecord]:
    """Read JSON-lines caption records: {image_id, caption, label_id?}."""
    path = Path(path)
    records: list[CaptionRecord] = []
    try:
        with _open_maybe_gzip(path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if not isinstance(obj, dict) or "image_id" not in obj or "caption" not in obj:
                    raise DataError(f"{path}:{lineno}: record needs image_id and caption fields")
                label = obj.get("label_id")
                if label is not None and not isinstance(label, int):
                    raise DataError(f"{path}:{lineno}: label_id must be an integer")
                records.append(
                    CaptionRecord(str(obj["image_id"]), str(obj["caption"]), label)
                )
    except OSError as exc:
        raise DataError(f"cannot read captions {path}: {exc}") from exc
    return records


def write_caption_records(records: Iterable[CaptionRecord], path: str | Path) -> None:
    path = Path(path)
    with _open_maybe_gzip(path, "w") as fh:
        for rec in records:
            obj: dict = {"image_id": rec.image_id, "caption": rec.caption}
            if rec.label_id is not None:
                obj["label_id"] = rec.label_id
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def iter_labeled(records: Iterable[CaptionRecord]) -> Iterator[CaptionRecord]:
    for rec in records:
        if rec.label_id is None:
            raise DataError(f"record {rec.image_id!r} is unlabeled")
        yield rec
