from __future__ import annotations

from enum import Enum


class Label(str, Enum):
    INCLUSIVE = "INCLUSIVE"
    NONINCLUSIVE = "NONINCLUSIVE"
    UNDETERMINED = "UNDETERMINED"


# Answer strings used in prompts, chat rows and mock responses.
ANSWER_TEXT = {
    Label.INCLUSIVE: "INCLUSIVO",
    Label.NONINCLUSIVE: "NON INCLUSIVO",
}


def other(label: Label) -> Label:
    if label is Label.INCLUSIVE:
        return Label.NONINCLUSIVE
    if label is Label.NONINCLUSIVE:
        return Label.INCLUSIVE
    raise ValueError(f"{label} has no opposite")
