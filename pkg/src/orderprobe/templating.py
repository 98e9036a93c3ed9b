"""Prompt templates: rendering samples to text and parsing samples back out.

A template turns a (text, label) pair into a prompt line, truncates at the
label slot for queries, joins lines into a context, and inverts generated
text back into (sentence, label) pairs. Extraction is greedy left-to-right
on literal prefixes, so rendering followed by extraction round-trips
exactly for any sample whose text does not contain the template's own
markers (such texts are rejected upstream with a warning).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .core import LabeledExample
from .errors import TemplateError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """Slot pattern, verbalizer map, and separators for one task.

    ``verbalizer`` maps dense label ids (tuple position) to surface strings.
    ``input_prefix`` may be empty (sentence-leading templates); the label
    prefix never is, since extraction keys on it.
    """

    name: str
    input_prefix: str
    label_prefix: str
    verbalizer: tuple[str, ...]
    sample_separator: str = "\n"
    end_of_sample_marker: str = "\n"
    pair_prefixes: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.label_prefix:
            raise TemplateError(f"template {self.name!r}: empty label_prefix")
        if not self.sample_separator or not self.end_of_sample_marker:
            raise TemplateError(f"template {self.name!r}: empty separator or end marker")
        if not self.verbalizer:
            raise TemplateError(f"template {self.name!r}: empty verbalizer")
        if len(set(self.verbalizer)) != len(self.verbalizer):
            raise TemplateError(f"template {self.name!r}: verbalizer strings not distinct")
        for surface in self.verbalizer:
            if not surface:
                raise TemplateError(f"template {self.name!r}: empty verbalizer string")
            if (
                self.end_of_sample_marker in surface
                or "\n" in surface
                or self.label_prefix in surface
            ):
                raise TemplateError(
                    f"template {self.name!r}: verbalizer {surface!r} contains a marker"
                )
        if self.pair_prefixes is not None:
            if len(self.pair_prefixes) != 2 or not all(self.pair_prefixes):
                raise TemplateError(
                    f"template {self.name!r}: pair_prefixes must be two non-empty strings"
                )

    @property
    def is_pair(self) -> bool:
        return self.pair_prefixes is not None

    @property
    def num_labels(self) -> int:
        return len(self.verbalizer)

    def collides(self, text: str) -> bool:
        """True when embedding ``text`` would break round-trip extraction."""
        needles = [self.label_prefix]
        if self.pair_prefixes is not None:
            needles.append(self.pair_prefixes[1])
        return any(nd in text for nd in needles)


@dataclass(frozen=True, slots=True)
class ExtractedSample:
    """One (sentence, label) pair recovered from generated text."""

    text_a: str
    text_b: str | None
    label_text: str


def render_input(text_a: str, text_b: str | None, tpl: PromptTemplate) -> str:
    """Label-free rendering; ends exactly at the label prefix."""
    if tpl.is_pair:
        if text_b is None:
            raise TemplateError(f"template {tpl.name!r} needs text_b (sentence pair)")
        first, second = tpl.pair_prefixes  # type: ignore[misc]
        body = f"{first}{text_a}{second}{text_b}"
    else:
        if text_b is not None:
            raise TemplateError(f"template {tpl.name!r} cannot render a sentence pair")
        body = f"{tpl.input_prefix}{text_a}"
    return body + tpl.label_prefix


def linearize(x: LabeledExample, y_included: bool, tpl: PromptTemplate) -> str:
    """Render one sample; with ``y_included`` the verbalized label is appended."""
    base = render_input(x.text_a, x.text_b, tpl)
    if not y_included:
        return base
    if x.label >= tpl.num_labels:
        raise TemplateError(
            f"label {x.label} out of range for {tpl.num_labels}-way template {tpl.name!r}"
        )
    return base + tpl.verbalizer[x.label]


def concat(parts: Sequence[str], tpl: PromptTemplate) -> str:
    """Join rendered samples into a context with the template separator."""
    if not parts:
        raise TemplateError("cannot concatenate zero parts")
    return tpl.sample_separator.join(parts)


def _trim_one_space(s: str) -> str:
    if s.startswith(" "):
        s = s[1:]
    if s.endswith(" "):
        s = s[:-1]
    return s


def _label_end(text: str, start: int, marker: str) -> tuple[int, int]:
    """Earliest label terminator at/after ``start``: the end marker, a
    newline, or end of text. Returns (end index, chars to skip)."""
    candidates = []
    i = text.find(marker, start)
    if i >= 0:
        candidates.append((i, len(marker)))
    j = text.find("\n", start)
    if j >= 0:
        candidates.append((j, 1))
    if not candidates:
        return len(text), 0
    return min(candidates)


def _skip_joiners(text: str, pos: int, tpl: PromptTemplate) -> int:
    """Advance past literal separator/marker runs at a segment boundary."""
    moved = True
    while moved:
        moved = False
        for token in (tpl.sample_separator, tpl.end_of_sample_marker):
            if text.startswith(token, pos):
                pos += len(token)
                moved = True
    return pos


def scan(generated: str, tpl: PromptTemplate) -> tuple[list[ExtractedSample], str]:
    """Greedy single-pass extraction; returns pairs plus unparsed residue.

    A pair is complete once its label slot is reached; the label runs to the
    end-of-sample marker, a newline, or the end of the text. Segments cut
    before their label slot are discarded (reported via the residue).
    """
    out: list[ExtractedSample] = []
    pos = 0
    consumed = 0
    n = len(generated)
    first = tpl.pair_prefixes[0] if tpl.is_pair else tpl.input_prefix
    while pos < n:
        if first:
            i = generated.find(first, pos)
            if i < 0:
                break
            start = i + len(first)
        else:
            start = _skip_joiners(generated, pos, tpl)
            if start >= n:
                consumed = n
                break
        text_b: str | None = None
        if tpl.is_pair:
            second = tpl.pair_prefixes[1]  # type: ignore[index]
            mid = generated.find(second, start)
            if mid < 0:
                break
            j = generated.find(tpl.label_prefix, mid + len(second))
            if j < 0:
                break
            text_a = _trim_one_space(generated[start:mid])
            text_b = _trim_one_space(generated[mid + len(second) : j])
        else:
            j = generated.find(tpl.label_prefix, start)
            if j < 0:
                break
            text_a = _trim_one_space(generated[start:j])
        lab_start = j + len(tpl.label_prefix)
        end, skip = _label_end(generated, lab_start, tpl.end_of_sample_marker)
        label = _trim_one_space(generated[lab_start:end])
        out.append(ExtractedSample(text_a=text_a, text_b=text_b, label_text=label))
        pos = end + skip
        consumed = pos
    return out, generated[consumed:]


def extract(generated: str, tpl: PromptTemplate) -> list[ExtractedSample]:
    """All complete (sentence, label) pairs in ``generated``, in order."""
    pairs, _ = scan(generated, tpl)
    return pairs


def reject_colliding(
    examples: Iterable[LabeledExample], tpl: PromptTemplate
) -> tuple[list[LabeledExample], int]:
    """Drop examples whose text embeds template markers, warning once."""
    kept: list[LabeledExample] = []
    rejected = 0
    for ex in examples:
        texts = [ex.text_a] + ([ex.text_b] if ex.text_b is not None else [])
        if any(tpl.collides(t) for t in texts):
            rejected += 1
        else:
            kept.append(ex)
    if rejected:
        logger.warning(
            "dropped %d example(s) containing template markers of %r "
            "(would break round-trip extraction)",
            rejected,
            tpl.name,
        )
    return kept, rejected


def _template_from_mapping(name: str, data: dict) -> PromptTemplate:
    known = {
        "input_prefix",
        "label_prefix",
        "verbalizer",
        "sample_separator",
        "end_of_sample_marker",
        "pair_prefixes",
    }
    unknown = set(data) - known - {"name"}
    if unknown:
        raise TemplateError(f"template {name!r}: unknown keys {sorted(unknown)}")
    verbalizer = data.get("verbalizer")
    if not isinstance(verbalizer, list):
        raise TemplateError(f"template {name!r}: 'verbalizer' must be a list of strings")
    pair = data.get("pair_prefixes")
    return PromptTemplate(
        name=name,
        input_prefix=data.get("input_prefix", ""),
        label_prefix=data.get("label_prefix", ""),
        verbalizer=tuple(str(v) for v in verbalizer),
        sample_separator=data.get("sample_separator", "\n"),
        end_of_sample_marker=data.get("end_of_sample_marker", "\n"),
        pair_prefixes=tuple(pair) if pair is not None else None,
    )


def load_template(path: str | Path) -> PromptTemplate:
    """Load a template from its YAML declaration file."""
    path = Path(path)
    if not path.exists():
        raise TemplateError(f"template file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise TemplateError(f"{path}: template file must hold a mapping")
    name = str(data.get("name", path.stem))
    return _template_from_mapping(name, data)


def _review_sentiment(name: str, verbalizer: tuple[str, ...]) -> PromptTemplate:
    return PromptTemplate(
        name=name,
        input_prefix="Review: ",
        label_prefix="\nSentiment: ",
        verbalizer=verbalizer,
    )


# The stock task templates plus the four sentiment-template variants; the
# capitalisation differences ("Type:" vs "type:") are intentional and exact.
PRESETS: dict[str, PromptTemplate] = {
    "sst2": _review_sentiment("sst2", ("positive", "negative")),
    "sst5": _review_sentiment("sst5", ("terrible", "bad", "okay", "good", "great")),
    "mr": _review_sentiment("mr", ("negative", "positive")),
    "cr": _review_sentiment("cr", ("negative", "positive")),
    "mpqa": _review_sentiment("mpqa", ("negative", "positive")),
    "subj": PromptTemplate(
        name="subj",
        input_prefix="Input: ",
        label_prefix="\nType: ",
        verbalizer=("subjective", "objective"),
    ),
    "trec": PromptTemplate(
        name="trec",
        input_prefix="Question: ",
        label_prefix="\nType: ",
        verbalizer=("description", "entity", "expression", "human", "location", "number"),
    ),
    "agnews": PromptTemplate(
        name="agnews",
        input_prefix="input: ",
        label_prefix="\ntype: ",
        verbalizer=("world", "sports", "business", "technology"),
    ),
    "dbpedia": PromptTemplate(
        name="dbpedia",
        input_prefix="input: ",
        label_prefix="\ntype: ",
        verbalizer=(
            "company",
            "school",
            "artist",
            "athlete",
            "politics",
            "transportation",
            "building",
            "nature",
            "village",
            "animal",
            "plant",
            "album",
            "film",
            "book",
        ),
    ),
    "cb": PromptTemplate(
        name="cb",
        input_prefix="",
        label_prefix="\nprediction: ",
        verbalizer=("true", "false", "neither"),
        pair_prefixes=("premise: ", "\nhypothesis: "),
    ),
    "rte": PromptTemplate(
        name="rte",
        input_prefix="",
        label_prefix="\nprediction: ",
        verbalizer=("True", "False"),
        pair_prefixes=("premise: ", "\nhypothesis: "),
    ),
    "sst2_t2": PromptTemplate(
        name="sst2_t2",
        input_prefix="Input: ",
        label_prefix="\nPrediction: ",
        verbalizer=("positive", "negative"),
    ),
    "sst2_t3": _review_sentiment("sst2_t3", ("good", "bad")),
    "sst2_t4": PromptTemplate(
        name="sst2_t4",
        input_prefix="",
        label_prefix=" It was ",
        verbalizer=("good", "bad"),
    ),
    # Single-line sentiment variant joined by ". " instead of newlines.
    "sst2_inline": PromptTemplate(
        name="sst2_inline",
        input_prefix="Review: ",
        label_prefix=". Sentiment: ",
        verbalizer=("positive", "negative"),
        sample_separator=". ",
        end_of_sample_marker=".",
    ),
}
# sst2 and sst2_t1 are the same template.
PRESETS["sst2_t1"] = PRESETS["sst2"]


def get_preset(name: str) -> PromptTemplate:
    try:
        return PRESETS[name]
    except KeyError:
        raise TemplateError(
            f"unknown template preset {name!r} (available: {sorted(PRESETS)})"
        ) from None
