"""Nine-slot semantic schema: slot vocabularies, condition taxonomy, frames.

All label strings are uppercase ASCII with underscores; they are the canonical
wire form used in datasets, label files, and gloss output. The slot order
below is canonical and fixed: every multi-head tensor, label file, and report
follows it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

SLOT_NAMES: tuple[str, ...] = (
    "event",
    "condition",
    "agent",
    "location",
    "time",
    "object",
    "intent",
    "purpose",
    "modifier",
)

# Condition taxonomy: 34 conditional classes in 8 categories, plus NONE.
CONDITION_CATEGORIES: dict[str, tuple[str, ...]] = {
    "weather": ("IF_RAIN", "IF_SUNNY", "IF_COLD", "IF_HOT", "IF_WINDY"),
    "time": ("IF_LATE", "IF_EARLY", "IF_WEEKEND", "IF_NIGHT", "IF_MORNING"),
    "health": ("IF_SICK", "IF_TIRED", "IF_HUNGRY", "IF_THIRSTY", "IF_FULL"),
    "schedule": ("IF_BUSY", "IF_FREE", "IF_HOLIDAY", "IF_WORKING"),
    "mood": ("IF_BORED", "IF_HAPPY", "IF_SAD", "IF_STRESSED", "IF_ANGRY"),
    "social": ("IF_ALONE", "IF_WITH_FRIENDS", "IF_WITH_FAMILY"),
    "activity": (
        "IF_FINISH_WORK",
        "IF_FINISH_SCHOOL",
        "IF_FINISH_EATING",
        "IF_WATCH_MOVIE",
        "IF_LISTEN_MUSIC",
    ),
    "financial": ("IF_HAVE_MONEY", "IF_NO_MONEY"),
}

_CONDITION_VALUES = ("NONE",) + tuple(
    label for members in CONDITION_CATEGORIES.values() for label in members
)

SLOT_VALUES: dict[str, tuple[str, ...]] = {
    "event": ("GO", "STAY", "BUY", "WORK", "MEET", "EAT", "LEARN"),
    "condition": _CONDITION_VALUES,
    "agent": ("ME", "YOU", "HE", "SHE", "THEY"),
    "location": ("NONE", "HOME", "SCHOOL", "HOSPITAL", "OFFICE", "STORE"),
    "time": ("NONE", "TODAY", "TOMORROW", "YESTERDAY", "NOW"),
    "object": ("NONE", "FOOD", "BOOK", "MEDICINE", "THING"),
    "intent": ("NONE", "PLAN", "WANT", "DECIDE"),
    "purpose": ("NONE", "REST"),
    "modifier": ("NONE", "FAST", "SLOW", "ALONE"),
}

# Per-slot class counts in canonical order: (7, 35, 5, 6, 5, 5, 4, 2, 4).
HEAD_CLASS_COUNTS: tuple[int, ...] = tuple(len(SLOT_VALUES[s]) for s in SLOT_NAMES)
TOTAL_CLASSES: int = sum(HEAD_CLASS_COUNTS)

# Default label per slot = index 0 (NONE for optional slots, ME for agent).
# event has no semantic default; index 0 is GO by vocabulary order.
DEFAULT_LABELS: dict[str, str] = {s: SLOT_VALUES[s][0] for s in SLOT_NAMES}

_INDEX: dict[str, dict[str, int]] = {
    slot: {label: i for i, label in enumerate(values)}
    for slot, values in SLOT_VALUES.items()
}

_CONDITION_OWNER: dict[str, str] = {
    label: category
    for category, members in CONDITION_CATEGORIES.items()
    for label in members
}


class SchemaError(ValueError):
    """Base class for schema violations."""


class UnknownSlotError(SchemaError):
    def __init__(self, slot: str):
        super().__init__(f"unknown slot {slot!r}; expected one of {SLOT_NAMES}")
        self.slot = slot


class UnknownLabelError(SchemaError):
    def __init__(self, slot: str, label: str):
        super().__init__(f"unknown label {label!r} for slot {slot!r}")
        self.slot = slot
        self.label = label


@dataclass(frozen=True)
class SlotVocabulary:
    """Ordered label vocabulary of one slot; index 0 is the slot default."""

    slot: str
    values: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.values)


def vocabulary(slot: str) -> SlotVocabulary:
    if slot not in SLOT_VALUES:
        raise UnknownSlotError(slot)
    return SlotVocabulary(slot=slot, values=SLOT_VALUES[slot])


def label_to_index(slot: str, label: str) -> int:
    if slot not in SLOT_VALUES:
        raise UnknownSlotError(slot)
    idx = _INDEX[slot].get(label)
    if idx is None:
        raise UnknownLabelError(slot, label)
    return idx


def index_to_label(slot: str, index: int) -> str:
    if slot not in SLOT_VALUES:
        raise UnknownSlotError(slot)
    values = SLOT_VALUES[slot]
    if not 0 <= index < len(values):
        raise SchemaError(f"index {index} out of range for slot {slot!r} ({len(values)} values)")
    return values[index]


def condition_category(label: str) -> str:
    """Owning category of a condition label; "none" for the NONE label."""
    if label == "NONE":
        return "none"
    category = _CONDITION_OWNER.get(label)
    if category is None:
        raise UnknownLabelError("condition", label)
    return category


@dataclass(frozen=True)
class CsfFrame:
    """One label per semantic slot; the unit of prediction and transduction.

    event is mandatory (the schema has no NONE event); every other slot
    defaults to its slot's index-0 value.
    """

    event: str
    condition: str = "NONE"
    agent: str = "ME"
    location: str = "NONE"
    time: str = "NONE"
    object: str = "NONE"
    intent: str = "NONE"
    purpose: str = "NONE"
    modifier: str = "NONE"

    def __post_init__(self):
        for slot in SLOT_NAMES:
            label = getattr(self, slot)
            if label not in _INDEX[slot]:
                raise UnknownLabelError(slot, label)

    def to_dict(self) -> dict[str, str]:
        return {slot: getattr(self, slot) for slot in SLOT_NAMES}

    @classmethod
    def from_dict(cls, mapping: dict[str, str]) -> "CsfFrame":
        extra = set(mapping) - set(SLOT_NAMES)
        if extra:
            raise UnknownSlotError(sorted(extra)[0])
        if "event" not in mapping:
            raise SchemaError("frame is missing the mandatory 'event' slot")
        return cls(**mapping)

    def to_indices(self) -> tuple[int, ...]:
        return tuple(label_to_index(s, getattr(self, s)) for s in SLOT_NAMES)

    @classmethod
    def from_indices(cls, indices) -> "CsfFrame":
        if len(indices) != len(SLOT_NAMES):
            raise SchemaError(f"expected {len(SLOT_NAMES)} indices, got {len(indices)}")
        return cls(**{s: index_to_label(s, int(i)) for s, i in zip(SLOT_NAMES, indices)})


def labels_mapping() -> dict[str, list[str]]:
    """Slot name -> ordered value list, in canonical slot order."""
    return {slot: list(SLOT_VALUES[slot]) for slot in SLOT_NAMES}


def write_labels_json(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(labels_mapping(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def read_labels_json(path) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        mapping = json.load(fh)
    if mapping != labels_mapping():
        raise SchemaError(f"label file {path} does not match the built-in schema")
    return mapping


# Frame field names must track SLOT_NAMES; guard against drift at import time.
assert tuple(f.name for f in fields(CsfFrame)) == SLOT_NAMES
