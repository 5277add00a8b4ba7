"""Prompt rendering into (input, target) text pairs.

Four fixed template kinds exist; candidate labels are joined with " or ",
retrieved titles with "; ", and sections are separated by a literal newline.
When the assembled input exceeds the truncation limit, trailing retrieved
titles are dropped whole (never cut mid-title); only if the input is still
too long with zero titles is it hard-cut at the character limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import ValidationError

__all__ = [
    "TemplateKind",
    "RenderInput",
    "RenderedExample",
    "render",
    "assemble_retrieved",
    "RETRIEVAL_MODES",
]

RETRIEVAL_MODES = ("ppr", "proto", "both")

CANDIDATE_JOINER = " or "
TITLE_JOINER = "; "
DEFAULT_TRUNCATION_LIMIT = 4096


class TemplateKind(Enum):
    CITATION = "citation"
    CITATION_TITLE_LAST = "citation-title-last"
    AMAZON = "amazon"
    AMAZON_TITLE_LAST = "amazon-title-last"

    @classmethod
    def from_string(cls, name: str) -> "TemplateKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValidationError(
            f"unknown template {name!r}; expected one of {[k.value for k in cls]}"
        )

    @property
    def body_field(self) -> str:
        """Which node text field fills the body section."""
        citation = (TemplateKind.CITATION, TemplateKind.CITATION_TITLE_LAST)
        return "abstract" if self in citation else "description"


# (subject noun, section order); each section is (literal prefix, slot name).
_FORMS: dict[TemplateKind, tuple[str, tuple[tuple[str, str], ...]]] = {
    TemplateKind.CITATION: (
        "paper",
        (("Title: ", "title"), ("Content: ", "body"), ("Related papers: ", "titles")),
    ),
    TemplateKind.CITATION_TITLE_LAST: (
        "paper",
        (("Content: ", "body"), ("Related papers: ", "titles"), ("Title: ", "title")),
    ),
    TemplateKind.AMAZON: (
        "Amazon product",
        (
            ("Product name: ", "title"),
            ("Description: ", "body"),
            ("Related products: ", "titles"),
        ),
    ),
    TemplateKind.AMAZON_TITLE_LAST: (
        "Amazon product",
        (
            ("Description: ", "body"),
            ("Related products: ", "titles"),
            ("Product name: ", "title"),
        ),
    ),
}


@dataclass
class RenderInput:
    target_title: str
    target_body: str
    retrieved_titles: list[str] = field(default_factory=list)
    candidate_labels: list[str] = field(default_factory=list)
    truncation_limit: int = DEFAULT_TRUNCATION_LIMIT

    def __post_init__(self):
        if not self.candidate_labels:
            raise ValidationError("candidate_labels must be nonempty")
        if self.truncation_limit < 1:
            raise ValidationError("truncation_limit must be positive")


@dataclass(frozen=True)
class RenderedExample:
    input: str
    target: str


def _compose(kind: TemplateKind, r: RenderInput, titles: list[str]) -> str:
    noun, sections = _FORMS[kind]
    slots = {
        "title": r.target_title,
        "body": r.target_body,
        "titles": TITLE_JOINER.join(titles),
    }
    head = (
        f"Please classify the following {noun} into "
        f"{CANDIDATE_JOINER.join(r.candidate_labels)} based on the provided information"
    )
    return "\n".join([head] + [prefix + slots[slot] for prefix, slot in sections])


def render(kind: TemplateKind, r: RenderInput, target: str = "") -> RenderedExample:
    """Pure rendering; empty fields appear as empty strings."""
    titles = list(r.retrieved_titles)
    text = _compose(kind, r, titles)
    while len(text) > r.truncation_limit and titles:
        titles.pop()
        text = _compose(kind, r, titles)
    if len(text) > r.truncation_limit:
        text = text[: r.truncation_limit]
    return RenderedExample(input=text, target=target)


def assemble_retrieved(
    t_ppr_titles: list[str], t_proto_titles: list[str], mode: str
) -> list[str]:
    """Combine topological and semantic title lists.

    "ppr" and "proto" pass through their list; "both" concatenates with the
    topological titles first, dropping proto titles already present in the
    topological list (first occurrence wins).
    """
    if mode not in RETRIEVAL_MODES:
        raise ValidationError(f"mode must be one of {RETRIEVAL_MODES}, got {mode!r}")
    if mode == "ppr":
        return list(t_ppr_titles)
    if mode == "proto":
        return list(t_proto_titles)
    seen = set(t_ppr_titles)
    return list(t_ppr_titles) + [t for t in t_proto_titles if t not in seen]
