"""Corpus generation: balanced multilingual dataset expansion and file IO.

Expansion enumerates every legal (pattern x lexicon) combination per
language, shuffles them with a seeded PRNG, and fills per-stratum quotas,
where a stratum is (split, condition class, language). The validation split
is filled first and prefers holdout-only combinations, so surface variants
reserved for validation never reach training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import SLOT_VALUES, CsfFrame
from .templates import LANGUAGES, Combo, CoverageError, TemplateBank

DEFAULT_TRAIN_SIZE = 16996
DEFAULT_VAL_SIZE = 1889
DEFAULT_NONE_FRACTION = 0.226
DEFAULT_SEED = 42

_CONDITION_CLASSES = SLOT_VALUES["condition"][1:]


class DatasetError(ValueError):
    pass


class InfeasibleTargetError(DatasetError):
    pass


class MalformedRecordError(DatasetError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class Sample:
    text: str
    lang: str
    labels: CsfFrame

    def __post_init__(self):
        if not self.text:
            raise DatasetError("sample text must be non-empty")


@dataclass
class DatasetSplit:
    train: list[Sample]
    val: list[Sample]


def _spread(total: int, bins: int, offset: int = 0) -> list[int]:
    """Split total into bins differing by at most 1; remainder rotated by offset."""
    base, rem = divmod(total, bins)
    return [base + (1 if (i - offset) % bins < rem else 0) for i in range(bins)]


def _quota_table(target: int, none_fraction: float) -> dict[tuple[str, str], int]:
    """Quota per (condition label, language) covering NONE and the 34 classes."""
    none_total = round(target * none_fraction)
    cond_total = target - none_total
    quotas: dict[tuple[str, str], int] = {}
    for li, n in enumerate(_spread(none_total, len(LANGUAGES))):
        quotas[("NONE", LANGUAGES[li])] = n
    per_class = _spread(cond_total, len(_CONDITION_CLASSES))
    for ci, label in enumerate(_CONDITION_CLASSES):
        for li, n in enumerate(_spread(per_class[ci], len(LANGUAGES), offset=ci)):
            quotas[(label, LANGUAGES[li])] = n
    return quotas


def expand(
    bank: TemplateBank,
    target_train: int = DEFAULT_TRAIN_SIZE,
    target_val: int = DEFAULT_VAL_SIZE,
    none_fraction: float = DEFAULT_NONE_FRACTION,
    seed: int = DEFAULT_SEED,
) -> DatasetSplit:
    """Deterministic balanced expansion of the bank into train/val splits."""
    if target_train <= 0 or target_val <= 0:
        raise DatasetError("split targets must be positive")
    if not 0.0 < none_fraction < 1.0:
        raise DatasetError(f"none_fraction must be in (0, 1), got {none_fraction}")
    bank.check_coverage()

    rng = np.random.default_rng(seed)
    pools: dict[tuple[str, str], dict[str, list[Combo]]] = {}
    for lang in LANGUAGES:
        combos = bank.enumerate_combos(lang)
        order = rng.permutation(len(combos))
        for idx in order:
            combo = combos[int(idx)]
            key = (combo.frame.condition, lang)
            bucket = pools.setdefault(key, {"holdout": [], "train": []})
            bucket["holdout" if combo.holdout else "train"].append(combo)

    train_quotas = _quota_table(target_train, none_fraction)
    val_quotas = _quota_table(target_val, none_fraction)

    val_combos: list[Combo] = []
    train_combos: list[Combo] = []
    for label in SLOT_VALUES["condition"]:
        for lang in LANGUAGES:
            key = (label, lang)
            bucket = pools.get(key, {"holdout": [], "train": []})
            need_val = val_quotas.get(key, 0)
            need_train = train_quotas.get(key, 0)
            took_val = bucket["holdout"][:need_val]
            shortfall = need_val - len(took_val)
            if shortfall > 0:
                # Not enough holdout-only combos: top up from the back of the
                # trainable pool so validation text never overlaps training.
                if shortfall > max(0, len(bucket["train"]) - need_train):
                    raise InfeasibleTargetError(
                        f"stratum {key}: need {need_val} val + {need_train} train, have "
                        f"{len(bucket['holdout'])} holdout + {len(bucket['train'])} trainable combos"
                    )
                took_val = took_val + bucket["train"][-shortfall:]
                bucket["train"] = bucket["train"][:-shortfall]
            if need_train > len(bucket["train"]):
                raise InfeasibleTargetError(
                    f"stratum {key}: need {need_train} train combos, only "
                    f"{len(bucket['train'])} available"
                )
            val_combos.extend(took_val)
            train_combos.extend(bucket["train"][:need_train])

    train = [Sample(c.text, c.lang, c.frame) for c in train_combos]
    val = [Sample(c.text, c.lang, c.frame) for c in val_combos]
    train = [train[i] for i in rng.permutation(len(train))]
    val = [val[i] for i in rng.permutation(len(val))]
    split = DatasetSplit(train=train, val=val)
    _check_event_coverage(split)
    return split


def _check_event_coverage(split: DatasetSplit) -> None:
    for name, samples in (("train", split.train), ("val", split.val)):
        events = {s.labels.event for s in samples}
        missing = set(SLOT_VALUES["event"]) - events
        if missing:
            raise CoverageError(f"{name} split is missing event classes: {sorted(missing)}")


# -- file format ------------------------------------------------------------

TRAIN_FILE = "train.jsonl"
VAL_FILE = "val.jsonl"


def _write_records(samples: list[Sample], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            record = {"text": s.text, "lang": s.lang, "labels": s.labels.to_dict()}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _read_records(path: Path) -> list[Sample]:
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                raise MalformedRecordError(path, line_no, "blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(path, line_no, f"invalid record: {e.msg}") from e
            try:
                text, lang, labels = record["text"], record["lang"], record["labels"]
            except (KeyError, TypeError) as e:
                raise MalformedRecordError(path, line_no, f"missing field: {e}") from e
            samples.append(Sample(text=text, lang=lang, labels=CsfFrame.from_dict(labels)))
    return samples


def write_dataset(split: DatasetSplit, path) -> None:
    """Write train/val as newline-delimited records under a directory."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    _write_records(split.train, out / TRAIN_FILE)
    _write_records(split.val, out / VAL_FILE)


def read_dataset(path) -> DatasetSplit:
    root = Path(path)
    train_path, val_path = root / TRAIN_FILE, root / VAL_FILE
    for p in (train_path, val_path):
        if not p.exists():
            raise DatasetError(f"dataset file not found: {p}")
    return DatasetSplit(train=_read_records(train_path), val=_read_records(val_path))
