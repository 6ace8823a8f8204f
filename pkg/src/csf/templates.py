"""Template bank: per-language patterns plus placeholder lexicons.

A pattern is a surface string with named placeholders and a frame skeleton
fixing the slot labels realized literally in the text. Placeholders are named
after the slot they fill, optionally with a qualifier after an underscore
(location_to, time_fut, object_wo, ...), so one slot can carry several
surface paradigms per language. Expanding a pattern assigns each placeholder
a (label, surface) pair from the lexicon; unassigned slots take their schema
defaults.

Surface variants flagged holdout-only (and whole patterns flagged holdout)
are reserved for the validation split, so validation measures paraphrase
generalization rather than memorization.
"""

from __future__ import annotations

import importlib.resources
import itertools
import re
from dataclasses import dataclass, field

import yaml

from .schema import (
    DEFAULT_LABELS,
    SLOT_NAMES,
    SLOT_VALUES,
    CsfFrame,
    SchemaError,
    UnknownLabelError,
)

LANGUAGES: tuple[str, ...] = ("en", "vi", "ja", "fr")

_PLACEHOLDER_RE = re.compile(r"\{([a-z0-9_]+)\}")

DEFAULT_BANK_RESOURCE = "template_bank.yaml"


class BankError(ValueError):
    pass


class CoverageError(BankError):
    pass


@dataclass(frozen=True)
class Variant:
    label: str
    surface: str
    holdout: bool = False


@dataclass(frozen=True)
class Pattern:
    lang: str
    text: str
    frame: dict[str, str]
    holdout: bool = False
    placeholders: tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Combo:
    """One fully rendered (pattern x lexicon) combination."""

    lang: str
    text: str
    frame: CsfFrame
    holdout: bool


def placeholder_slot(name: str) -> str:
    slot = name.split("_", 1)[0]
    if slot not in SLOT_NAMES:
        raise BankError(f"placeholder {{{name}}} does not name a slot")
    return slot


class LanguageBank:
    def __init__(self, lang: str, patterns: list[Pattern], lexicon: dict[str, dict[str, list[Variant]]]):
        self.lang = lang
        self.patterns = patterns
        self.lexicon = lexicon

    def condition_variants(self, label: str, include_holdout: bool) -> list[Variant]:
        variants = self.lexicon.get("condition", {}).get(label, [])
        if include_holdout:
            return variants
        return [v for v in variants if not v.holdout]


class TemplateBank:
    def __init__(self, languages: dict[str, LanguageBank]):
        self.languages = languages
        self.validate()

    # -- loading ----------------------------------------------------------

    @classmethod
    def from_sections(cls, sections: list[dict]) -> "TemplateBank":
        languages: dict[str, LanguageBank] = {}
        for section in sections:
            lang = section.get("lang")
            if not lang:
                raise BankError("bank section is missing the 'lang' field")
            if lang in languages:
                raise BankError(f"duplicate bank section for language {lang!r}")
            lexicon: dict[str, dict[str, list[Variant]]] = {}
            for placeholder, by_label in (section.get("lexicon") or {}).items():
                slot = placeholder_slot(placeholder)
                table: dict[str, list[Variant]] = {}
                for label, surfaces in by_label.items():
                    if label not in SLOT_VALUES[slot]:
                        raise UnknownLabelError(slot, label)
                    table[label] = [Variant(label, s, holdout=False) for s in surfaces]
                lexicon[placeholder] = table
            for placeholder, by_label in (section.get("holdout") or {}).items():
                if placeholder == "pattern":
                    continue
                slot = placeholder_slot(placeholder)
                table = lexicon.setdefault(placeholder, {})
                for label, surfaces in by_label.items():
                    if label not in SLOT_VALUES[slot]:
                        raise UnknownLabelError(slot, label)
                    table.setdefault(label, []).extend(
                        Variant(label, s, holdout=True) for s in surfaces
                    )
            patterns: list[Pattern] = []
            entries = list(section.get("pattern") or [])
            holdout_entries = (section.get("holdout") or {}).get("pattern") or []
            for entry, forced_holdout in itertools.chain(
                ((e, False) for e in entries), ((e, True) for e in holdout_entries)
            ):
                text = entry.get("pattern")
                if not text:
                    raise BankError(f"[{lang}] pattern entry without a 'pattern' field: {entry!r}")
                frame = dict(entry.get("frame") or {})
                holdout = bool(entry.get("holdout", False)) or forced_holdout
                names = tuple(_PLACEHOLDER_RE.findall(text))
                patterns.append(Pattern(lang, text, frame, holdout, names))
            languages[lang] = LanguageBank(lang, patterns, lexicon)
        return cls(languages)

    @classmethod
    def load(cls, path) -> "TemplateBank":
        with open(path, encoding="utf-8") as fh:
            sections = yaml.safe_load(fh)
        if not isinstance(sections, list):
            raise BankError(f"bank file {path} must contain a list of language sections")
        return cls.from_sections(sections)

    @classmethod
    def default(cls) -> "TemplateBank":
        ref = importlib.resources.files("csf").joinpath("data", DEFAULT_BANK_RESOURCE)
        with ref.open("r", encoding="utf-8") as fh:
            sections = yaml.safe_load(fh)
        return cls.from_sections(sections)

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        for lang, bank in self.languages.items():
            for pattern in bank.patterns:
                seen_slots: set[str] = set(pattern.frame)
                for slot, label in pattern.frame.items():
                    if slot not in SLOT_NAMES:
                        raise BankError(f"[{lang}] frame names unknown slot {slot!r}")
                    if label not in SLOT_VALUES[slot]:
                        raise UnknownLabelError(slot, label)
                for name in pattern.placeholders:
                    slot = placeholder_slot(name)
                    if slot in pattern.frame:
                        raise BankError(
                            f"[{lang}] pattern fixes slot {slot!r} and also binds "
                            f"placeholder {{{name}}}: {pattern.text!r}"
                        )
                    if slot in seen_slots:
                        raise BankError(
                            f"[{lang}] two placeholders fill slot {slot!r}: {pattern.text!r}"
                        )
                    seen_slots.add(slot)
                    table = bank.lexicon.get(name)
                    if not table or not any(table.values()):
                        raise BankError(
                            f"[{lang}] placeholder {{{name}}} is not bound by the lexicon"
                        )
                if "event" not in seen_slots:
                    raise BankError(
                        f"[{lang}] pattern assigns no event: {pattern.text!r}"
                    )

    def check_coverage(self, require_holdout: bool = True) -> None:
        """Coverage gate for expansion: all languages, all condition classes."""
        missing_langs = [l for l in LANGUAGES if l not in self.languages]
        if missing_langs:
            raise CoverageError(f"bank is missing languages: {missing_langs}")
        for lang in LANGUAGES:
            bank = self.languages[lang]
            if not any("condition" in (placeholder_slot(n) for n in p.placeholders) for p in bank.patterns):
                raise CoverageError(f"[{lang}] no pattern binds a condition placeholder")
            for label in SLOT_VALUES["condition"][1:]:
                train_variants = bank.condition_variants(label, include_holdout=False)
                if not train_variants:
                    raise CoverageError(f"[{lang}] condition {label} has no usable surface variant")
                if len(bank.condition_variants(label, include_holdout=True)) < 3:
                    raise CoverageError(f"[{lang}] condition {label} has fewer than 3 surface variants")
                if require_holdout and not any(
                    v.holdout for v in bank.condition_variants(label, include_holdout=True)
                ):
                    raise CoverageError(f"[{lang}] condition {label} has no holdout-only variant")

    # -- enumeration ------------------------------------------------------

    def enumerate_combos(self, lang: str) -> list[Combo]:
        """All legal (pattern x lexicon) combinations for one language.

        Deterministic: patterns in file order, lexicon variants in file order.
        Duplicate surface texts keep the first combination only.
        """
        bank = self.languages[lang]
        combos: dict[str, Combo] = {}
        for pattern in bank.patterns:
            choice_lists = []
            for name in pattern.placeholders:
                table = bank.lexicon[name]
                choices = [v for label in table for v in table[label]]
                choice_lists.append(choices)
            for assignment in itertools.product(*choice_lists):
                frame_labels = dict(DEFAULT_LABELS)
                frame_labels.update(pattern.frame)
                surface = pattern.text
                holdout = pattern.holdout
                for name, variant in zip(pattern.placeholders, assignment):
                    frame_labels[placeholder_slot(name)] = variant.label
                    surface = surface.replace("{" + name + "}", variant.surface, 1)
                    holdout = holdout or variant.holdout
                text = render_text(surface)
                try:
                    frame = CsfFrame(**frame_labels)
                except SchemaError as e:  # pragma: no cover - guarded by validate()
                    raise BankError(f"[{lang}] bad frame for {pattern.text!r}: {e}") from e
                if text not in combos:
                    combos[text] = Combo(lang=lang, text=text, frame=frame, holdout=holdout)
        return list(combos.values())


def render_text(surface: str) -> str:
    """Collapse whitespace and capitalize the first character."""
    text = " ".join(surface.split())
    if not text:
        raise BankError("pattern rendered to an empty string")
    return text[0].upper() + text[1:]
