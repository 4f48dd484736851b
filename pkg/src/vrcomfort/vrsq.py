"""VRSQ questionnaire scoring.

Nine symptoms rated 0-3. The oculomotor component is the first four items
scaled by its 12-point maximum, disorientation the last five scaled by 15;
each component and the total (their mean) land on a 0-100 scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

OCULOMOTOR_ITEMS = (
    "general_discomfort",
    "fatigue",
    "eyestrain",
    "difficulty_focusing",
)
DISORIENTATION_ITEMS = (
    "headache",
    "fullness_of_head",
    "blurred_vision",
    "dizziness_eyes_closed",
    "vertigo",
)
ITEMS = OCULOMOTOR_ITEMS + DISORIENTATION_ITEMS

RESPONSE_CSV_FIELDS = ("participant_id",) + ITEMS
SCORED_CSV_FIELDS = RESPONSE_CSV_FIELDS + ("oculomotor", "disorientation", "total")


@dataclass(frozen=True)
class VrsqScore:
    oculomotor: float
    disorientation: float
    total: float


def score(items: Sequence[int]) -> VrsqScore:
    """Score a 9-item response. Raises ValueError naming any bad item."""
    if len(items) != len(ITEMS):
        raise ValueError(f"expected {len(ITEMS)} items, got {len(items)}")
    for name, value in zip(ITEMS, items):
        if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 3:
            raise ValueError(f"item '{name}' must be an integer in 0..3, got {value!r}")
    n_ocu = len(OCULOMOTOR_ITEMS)
    oculomotor = 100.0 * sum(items[:n_ocu]) / (3 * n_ocu)
    disorientation = 100.0 * sum(items[n_ocu:]) / (3 * len(DISORIENTATION_ITEMS))
    return VrsqScore(oculomotor, disorientation, (oculomotor + disorientation) / 2.0)


def read_responses_csv(path) -> dict[str, tuple[int, ...]]:
    """Read `participant_id,<9 item columns>` rows keyed by participant."""
    responses: dict[str, tuple[int, ...]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        missing = set(RESPONSE_CSV_FIELDS) - set(r.fieldnames or ())
        if missing:
            raise ValueError(f"VRSQ CSV missing columns: {sorted(missing)}")
        for row in r:
            responses[row["participant_id"]] = tuple(int(row[item]) for item in ITEMS)
    return responses


def write_scored_csv(path, responses: Mapping[str, Sequence[int]]) -> None:
    """Write responses with appended component scores, rounded to 2 decimals."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SCORED_CSV_FIELDS)
        for pid, items in responses.items():
            s = score(items)
            w.writerow(
                [pid, *items, f"{s.oculomotor:.2f}", f"{s.disorientation:.2f}", f"{s.total:.2f}"]
            )
