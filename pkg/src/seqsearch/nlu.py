"""Rule-based parsing of example places, distances and search areas from chat text.

This is the deterministic grammar behind the offline chat backend. It turns a
user utterance into a list of draft edits (append an example, assign anchor
distances) or an area mention; the dialogue layer decides how to merge them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .geo import Circle, GeoPoint

# enumeration tail: "places like <items...>"
_PLACES_LIKE_RE = re.compile(r"\bplaces?\s+like\b[:\s]*(.+)$", re.IGNORECASE | re.DOTALL)
# numbered item markers: "1. Suntec City"
_NUMBERED_SPLIT_RE = re.compile(r"\b\d+\.\s*")
# article-form categories: "a gym and a station"
_ARTICLE_ITEM_RE = re.compile(r"\ban?\s+([a-zA-Z][a-zA-Z-]*)")
# "add a hotel" / "add Marina Bay Sands"
_ADD_RE = re.compile(r"\badd\b\s*(?:(?:a|an|the)\s+)?(.+?)\s*[.?!]*\s*$", re.IGNORECASE)
# "any hotel within 200 meters"
_ANY_WITHIN_RE = re.compile(
    r"\bany\s+([a-zA-Z][a-zA-Z -]*?)\s+within\s+(\d+(?:\.\d+)?)\s*(?:m|meters?|metres?)\b",
    re.IGNORECASE,
)
# "the distance(s) ... is/are 416 [, 200 and 300] meters"
_DISTANCES_RE = re.compile(
    r"\bdistances?\b[^.?!]*?\b(?:is|are)\s+([0-9][0-9,.\s]*(?:and\s+[0-9][0-9.\s]*)*)\s*(?:m|meters?|metres?)\b",
    re.IGNORECASE,
)
_QUOTED_RE = re.compile(r"[\"'“‘](.+?)[\"'”’]")

_LATLON_RE = re.compile(
    r"lat(?:itude)?\s*[:=]?\s*(-?\d+(?:\.\d+)?)\D+?lon(?:gitude)?\s*[:=]?\s*(-?\d+(?:\.\d+)?)"
    r".*?radius(?:_m)?\s*[:=]?\s*(\d+(?:\.\d+)?)",
    re.IGNORECASE | re.DOTALL,
)
_IN_AREA_RE = re.compile(r"\b(?:in|at|near|around)\s+(?:the\s+)?(.+?)\s*[.?!]*\s*$", re.IGNORECASE)

# words that signal the "in ..." capture was not a place
_AREA_STOPWORDS = {"meters", "meter", "metres", "m", "km", "minutes", "order"}

_ACK_RE = re.compile(
    r"\b(yes|yep|yeah|sure|ok|okay|confirm(ed)?|acknowledge[d]?|continue|proceed|correct|"
    r"go ahead|looks good|sounds good|that'?s right)\b",
    re.IGNORECASE,
)
_STOP_RE = re.compile(r"\b(bye|goodbye|stop|quit|exit|done|no more|that'?s all)\b", re.IGNORECASE)


@dataclass(frozen=True)
class AppendExample:
    """Append one example slot to the draft."""

    kind: str  # "named" | "category_only"
    label: str  # place name for named, category for category_only
    anchor_distance_m: Optional[float] = None


@dataclass(frozen=True)
class SetDistances:
    """Assign anchor distances to slots 2..n in list order."""

    distances_m: tuple[float, ...]


Edit = Union[AppendExample, SetDistances]


def _clean_item(chunk: str) -> str:
    # cut at the first sentence end, then drop a trailing "and"/punctuation
    item = re.split(r"[.?!](?:\s|$)", chunk, maxsplit=1)[0]
    item = re.sub(r"[,;]\s*$", "", item.strip())
    item = re.sub(r"\s+and\s*$", "", item, flags=re.IGNORECASE)
    return item.strip(" ,;")


def _looks_named(item: str) -> bool:
    return any(tok[:1].isupper() for tok in item.split())


def _item_to_edit(item: str, quoted: bool = False) -> Optional[AppendExample]:
    item = item.strip()
    if not item:
        return None
    if quoted or _looks_named(item):
        return AppendExample(kind="named", label=item)
    return AppendExample(kind="category_only", label=item.lower())


def _parse_number_list(raw: str) -> list[float]:
    out = []
    for tok in re.split(r"(?:\s*,\s*|\s+and\s+|\s+)", raw.strip()):
        tok = tok.strip(" .,")
        if not tok:
            continue
        try:
            out.append(float(tok))
        except ValueError:
            continue
    return out


def extract_examples(text: str) -> list[Edit]:
    """Pull example-slot edits out of one utterance.

    Recognized forms: enumerations after "places like" (numbered items or
    "a gym and a station"), "add a <category>" / "add <Name>", "any
    <category> within <N> meters", and a trailing distance-list sentence.
    Unrecognized text yields an empty list.
    """
    edits: list[Edit] = []
    seen_any_within = False

    like = _PLACES_LIKE_RE.search(text)
    if like:
        tail = like.group(1)
        chunks = _NUMBERED_SPLIT_RE.split(tail)
        if len(chunks) > 1:
            for chunk in chunks[1:]:
                quoted = _QUOTED_RE.match(chunk.strip()) is not None
                item = _clean_item(chunk)
                m = _QUOTED_RE.match(item)
                if m:
                    item = m.group(1)
                edit = _item_to_edit(item, quoted=quoted)
                if edit:
                    edits.append(edit)
        else:
            quoted_items = _QUOTED_RE.findall(tail)
            if quoted_items:
                for item in quoted_items:
                    edit = _item_to_edit(item, quoted=True)
                    if edit:
                        edits.append(edit)
            else:
                first_sentence = re.split(r"[.?!](?:\s|$)", tail, maxsplit=1)[0]
                for cat in _ARTICLE_ITEM_RE.findall(first_sentence):
                    edits.append(AppendExample(kind="category_only", label=cat.lower()))

    for m in _ANY_WITHIN_RE.finditer(text):
        edits.append(
            AppendExample(
                kind="category_only",
                label=m.group(1).strip().lower(),
                anchor_distance_m=float(m.group(2)),
            )
        )
        seen_any_within = True

    if not like and not seen_any_within:
        m = _ADD_RE.search(text)
        if m:
            item = _clean_item(m.group(1))
            q = _QUOTED_RE.match(item)
            if q:
                edits.append(AppendExample(kind="named", label=q.group(1)))
            elif item:
                if _looks_named(item):
                    edits.append(AppendExample(kind="named", label=item))
                else:
                    # "add a hotel and a cafe" style lists
                    cats = re.split(r"\s*(?:,|and)\s+(?:(?:a|an|the)\s+)?", item)
                    for cat in cats:
                        cat = cat.strip()
                        if cat:
                            edits.append(AppendExample(kind="category_only", label=cat.lower()))

    m = _DISTANCES_RE.search(text)
    if m:
        numbers = _parse_number_list(m.group(1))
        if numbers:
            edits.append(SetDistances(tuple(numbers)))

    return edits


def extract_area(text: str) -> Optional[Union[Circle, str]]:
    """Pull a search area out of one utterance.

    Returns a :class:`Circle` for the explicit "lat .. lon .. radius .." form,
    the region name for "in/at/near <place>", or None when nothing matches.
    """
    m = _LATLON_RE.search(text)
    if m:
        try:
            return Circle(GeoPoint(float(m.group(1)), float(m.group(2))), float(m.group(3)))
        except ValueError:
            return None
    m = _IN_AREA_RE.search(text)
    if m:
        name = m.group(1).strip()
        first = name.split()[0].lower() if name.split() else ""
        if not name or name[0].isdigit() or first in _AREA_STOPWORDS:
            return None
        return name
    return None


def is_acknowledgement(text: str) -> bool:
    return _ACK_RE.search(text) is not None


def is_stop_request(text: str) -> bool:
    return _STOP_RE.search(text) is not None
