from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from orderprobe import Dataset, LabeledExample, MockBackend, MockModelConfig, PromptTemplate

WORDS = (
    "movie film plot acting script scenery pace ending cast dialogue "
    "soundtrack lighting camera texture rhythm tone style energy craft charm"
).split()


def random_sentence(rng: random.Random, n_words: int = 4) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(n_words))


@pytest.fixture
def basic_template() -> PromptTemplate:
    return PromptTemplate(
        name="basic",
        input_prefix="input: ",
        label_prefix=" type: ",
        verbalizer=("negative", "positive"),
    )


@pytest.fixture
def binary_dataset() -> Dataset:
    rng = random.Random(7)
    examples = []
    for i in range(40):
        label = i % 2
        examples.append(
            LabeledExample(id=str(i), text_a=random_sentence(rng), label=label)
        )
    return Dataset(
        name="toy",
        examples=tuple(examples),
        label_names=("negative", "positive"),
    )


@pytest.fixture
def keyword_mock() -> MockBackend:
    config = MockModelConfig(
        keywords={"negative": ("awful", "bad"), "positive": ("good", "great")},
        corpus=(
            "input: a good day type: positive",
            "input: a bad day type: negative",
            "input: great fun all around type: positive",
            "input: awful mess of a film type: negative",
        ),
        noise_scale=0.0,
    )
    return MockBackend(config)


def write_rows(path: Path, rows: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


class CannedGenerator:
    """Backend stub returning a fixed generation per context."""

    parallelism = 1

    def __init__(self, by_context: dict[str, str], default: str = ""):
        self.by_context = by_context
        self.default = default

    def info(self):
        from orderprobe import BackendInfo

        return BackendInfo(model_id="canned", context_window=10_000)

    def label_distribution(self, context, continuations):  # pragma: no cover
        raise NotImplementedError("generation-only stub")

    def generate(self, context, params):
        return self.by_context.get(context, self.default)


class FixedDistributionBackend:
    """Backend stub mapping a probe-text marker to a fixed label distribution."""

    parallelism = 1

    def __init__(self, table: dict[str, tuple[float, ...]], default: tuple[float, ...]):
        self.table = table
        self.default = default

    def info(self):
        from orderprobe import BackendInfo

        return BackendInfo(model_id="fixed", context_window=10_000)

    def _lookup(self, context: str) -> tuple[float, ...]:
        # the queried probe sits at the end of the context, so the marker
        # occurring latest wins over markers inside the few-shot examples
        best_pos = -1
        best = self.default
        for marker, dist in self.table.items():
            pos = context.rfind(marker)
            if pos > best_pos:
                best_pos = pos
                best = dist
        return best

    def label_distribution(self, context, continuations):
        from orderprobe import LabelQueryResult

        dist = self._lookup(context)
        assert len(dist) == len(continuations)
        return LabelQueryResult(scores=dist, normalized=dist)

    def generate(self, context, params):  # pragma: no cover
        raise NotImplementedError("scoring-only stub")
