"""Small worked graph pairs shipped with the package.

``three_way_split``
    8 nodes, two modalities. One healthy module breaks into three patient
    modules; two of the three module pairs have a direct disconnector and
    the third is only indirectly separated.
``four_way_split``
    11 nodes, three modalities. The large healthy module loses three edges
    and breaks into four patient modules; the patient graph also gains one
    edge, (8, 9), which joins a lone healthy node to one of the pieces.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import InputError
from .graph import LabeledGraph, read_graph_json

EXAMPLES = ("three_way_split", "four_way_split")

# planted change that turns the four_way_split healthy graph into the patient one (1-based)
FOUR_WAY_REMOVED = ((2, 5), (6, 7), (10, 11))
FOUR_WAY_ADDED = ((8, 9),)


def example_path(name: str, group: str = "healthy") -> Path:
    if name not in EXAMPLES or group not in ("healthy", "patient"):
        raise InputError(f"unknown example {name!r}/{group!r}; available: {', '.join(EXAMPLES)}")
    return Path(str(resources.files("modsplit") / "data" / f"{name}_{group}.json"))


def load_example(name: str) -> tuple[LabeledGraph, LabeledGraph]:
    """``(healthy, patient)`` for a named example."""
    return read_graph_json(example_path(name, "healthy")), read_graph_json(example_path(name, "patient"))


def resolve_graph_path(ref: str) -> Path:
    """A file path, or ``example:<name>`` for a packaged healthy graph."""
    if ref.startswith("example:"):
        return example_path(ref.split(":", 1)[1], "healthy")
    return Path(ref)
