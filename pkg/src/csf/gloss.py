"""Deterministic frame-to-gloss transduction.

Sign-language glosses follow a topic-comment order: modifiers and
time/condition markers come before the predicate. Slots with default values
(NONE, or ME for agent) are omitted so the output stays concise.
"""

from __future__ import annotations

from .schema import CsfFrame

# Emission order. intent is extracted by the model but has no position here;
# it can be opted in (emitted just before the event) via include_intent.
GLOSS_ORDER: tuple[str, ...] = (
    "modifier",
    "time",
    "condition",
    "agent",
    "location",
    "object",
    "event",
    "purpose",
)


def frame_to_gloss(frame: CsfFrame, include_intent: bool = False) -> list[str]:
    """Ordered gloss tokens for a frame.

    NONE labels are skipped, agent is skipped when it is ME, and the event is
    always emitted. The result has between 1 and 8 tokens (9 with intent).
    """
    if not isinstance(frame, CsfFrame):
        raise TypeError(f"expected CsfFrame, got {type(frame).__name__}")
    tokens: list[str] = []
    for slot in GLOSS_ORDER:
        label = getattr(frame, slot)
        if slot == "agent":
            if label != "ME":
                tokens.append(label)
            continue
        if slot == "event":
            if include_intent and frame.intent != "NONE":
                tokens.append(frame.intent)
            tokens.append(label)
            continue
        if label != "NONE":
            tokens.append(label)
    return tokens


def render_gloss(frame: CsfFrame, include_intent: bool = False) -> str:
    return " ".join(frame_to_gloss(frame, include_intent=include_intent))


def gloss_record(frame: CsfFrame) -> dict:
    """Structured form: the nine labels plus the rendered gloss string."""
    return {"frame": frame.to_dict(), "gloss": render_gloss(frame)}
