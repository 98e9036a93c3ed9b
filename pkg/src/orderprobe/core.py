"""Domain types, dataset ingestion, and experiment sampling.

Datasets are immutable after construction: examples keep file order, label
ids are dense integers indexing ``label_names``, and every sampling
operation is a pure function of its inputs and a seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError
from .seeding import rng_for, sample_without_replacement, shuffled

# Context-window-driven shot counts; everything else defaults to 4.
DEFAULT_SHOTS = {"dbpedia": 1, "agnews": 2}


def default_shots_for(dataset_name: str) -> int:
    return DEFAULT_SHOTS.get(dataset_name.lower(), 4)


@dataclass(frozen=True, slots=True)
class LabeledExample:
    """One classification instance: single text or a sentence pair."""

    id: str
    text_a: str
    label: int
    text_b: str | None = None

    def __post_init__(self) -> None:
        if not self.text_a:
            raise DatasetError(f"example {self.id!r}: empty text")
        if self.label < 0:
            raise DatasetError(f"example {self.id!r}: negative label id")


@dataclass(frozen=True, slots=True)
class Dataset:
    """An ordered collection of examples over a fixed label set."""

    name: str
    examples: tuple[LabeledExample, ...]
    label_names: tuple[str, ...]
    pair_task: bool = False

    def __post_init__(self) -> None:
        if len(set(self.label_names)) != len(self.label_names):
            raise DatasetError(f"dataset {self.name!r}: duplicate label names")
        for ex in self.examples:
            if ex.label >= len(self.label_names):
                raise DatasetError(
                    f"dataset {self.name!r}: example {ex.id!r} label {ex.label} "
                    f"out of range for {len(self.label_names)} labels"
                )
            if self.pair_task != (ex.text_b is not None):
                raise DatasetError(
                    f"dataset {self.name!r}: example {ex.id!r} "
                    f"{'missing' if self.pair_task else 'carries'} text_b"
                )

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def num_labels(self) -> int:
        return len(self.label_names)


@dataclass(frozen=True, slots=True)
class TrainSet:
    """The n-shot training samples drawn from one dataset."""

    samples: tuple[LabeledExample, ...]
    seed: int

    def __post_init__(self) -> None:
        if not self.samples:
            raise DatasetError("train set must hold at least one sample")

    @property
    def shots(self) -> int:
        return len(self.samples)


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Experiment-level knobs; defaults mirror the standard protocol."""

    shots: int = 4
    num_train_sets: int = 5
    max_permutations: int = 24
    top_k: int = 4
    eval_subsample: int = 256
    seed: int = 0
    balanced: bool = True

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise DatasetError("shots must be >= 1")
        if not (self.max_permutations >= self.top_k >= 1):
            raise DatasetError(
                f"need max_permutations >= top_k >= 1, got "
                f"{self.max_permutations} and {self.top_k}"
            )
        if self.num_train_sets < 1 or self.eval_subsample < 1:
            raise DatasetError("num_train_sets and eval_subsample must be >= 1")

    def train_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.num_train_sets)]


def _rows_from_jsonl(path: Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed row: {exc}") from exc
            if not isinstance(row, dict):
                raise DatasetError(f"{path}:{lineno}: row is not an object")
            rows.append((lineno, row))
    return rows


def _rows_from_csv(path: Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise DatasetError(f"{path}:{lineno}: malformed row (column count)")
            rows.append((lineno, row))
    return rows


def _row_texts(path: Path, lineno: int, row: dict) -> tuple[str, str | None]:
    if "text" in row:
        return str(row["text"]), None
    if "premise" in row and "hypothesis" in row:
        return str(row["premise"]), str(row["hypothesis"])
    raise DatasetError(
        f"{path}:{lineno}: row needs a 'text' field or 'premise'+'hypothesis' fields"
    )


def load_dataset(
    path: str | Path,
    fmt: str | None = None,
    label_names: list[str] | None = None,
    name: str | None = None,
) -> Dataset:
    """Ingest a JSONL or CSV classification file.

    When ``label_names`` is omitted, labels are inferred as the sorted
    distinct label values found in the file (numeric labels sort
    numerically). Example order always equals file order.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower() or "jsonl"
    if fmt == "jsonl":
        raw = _rows_from_jsonl(path)
    elif fmt == "csv":
        raw = _rows_from_csv(path)
    else:
        raise DatasetError(f"unsupported dataset format {fmt!r} (use jsonl or csv)")
    if not raw:
        raise DatasetError(f"{path}: empty dataset")

    parsed = []  # (lineno, id, text_a, text_b, raw_label)
    for lineno, row in raw:
        if "label" not in row:
            raise DatasetError(f"{path}:{lineno}: missing 'label' field")
        text_a, text_b = _row_texts(path, lineno, row)
        if not text_a:
            raise DatasetError(f"{path}:{lineno}: empty text")
        rid = str(row.get("id", lineno))
        parsed.append((lineno, rid, text_a, text_b, row["label"]))

    pair_flags = {text_b is not None for _, _, _, text_b, _ in parsed}
    if len(pair_flags) != 1:
        raise DatasetError(f"{path}: mixes single-text and sentence-pair rows")
    pair_task = pair_flags.pop()

    if label_names is None:
        values = [lab for _, _, _, _, lab in parsed]
        if all(isinstance(v, int) and not isinstance(v, bool) for v in values):
            label_names = [str(v) for v in sorted(set(values))]
        else:
            label_names = sorted({str(v) for v in values})
    label_index = {nm: i for i, nm in enumerate(label_names)}

    examples = []
    for lineno, rid, text_a, text_b, raw_label in parsed:
        key = str(raw_label)
        if key not in label_index:
            raise DatasetError(
                f"{path}:{lineno}: unknown label {key!r} (expected one of {label_names})"
            )
        examples.append(
            LabeledExample(id=rid, text_a=text_a, text_b=text_b, label=label_index[key])
        )

    return Dataset(
        name=name or path.stem,
        examples=tuple(examples),
        label_names=tuple(label_names),
        pair_task=pair_task,
    )


def write_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Export a dataset using the canonical JSONL row schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset.examples:
            row: dict = {"id": ex.id}
            if dataset.pair_task:
                row["premise"] = ex.text_a
                row["hypothesis"] = ex.text_b
            else:
                row["text"] = ex.text_a
            row["label"] = dataset.label_names[ex.label]
            fh.write(json.dumps(row, ensure_ascii=True) + "\n")


def _balanced_counts(dataset: Dataset, shots: int, seed: int) -> list[int]:
    """Per-label draw counts: base quota everywhere, remainder to the most
    frequent labels (ties broken in seeded order)."""
    num = dataset.num_labels
    freq = [0] * num
    for ex in dataset.examples:
        freq[ex.label] += 1
    base, rem = divmod(shots, num)
    counts = [base] * num
    rng = rng_for(seed, "balance_ties")
    tie_order = {lab: pos for pos, lab in enumerate(shuffled(range(num), rng))}
    by_rank = sorted(range(num), key=lambda v: (-freq[v], tie_order[v]))
    for v in by_rank[:rem]:
        counts[v] += 1
    return counts


def sample_train_set(
    dataset: Dataset, shots: int, seed: int, balanced: bool = True
) -> TrainSet:
    """Draw the n-shot training samples without replacement.

    Balanced mode keeps per-label counts within 1 of each other whenever the
    dataset has enough examples of each label; shortfalls are redistributed
    best-effort. Deterministic for a fixed (dataset, shots, seed).
    """
    if shots > len(dataset.examples):
        raise DatasetError(
            f"cannot draw {shots} samples from {len(dataset.examples)} examples"
        )
    rng = rng_for(seed, "train_set")
    if not balanced:
        chosen = sample_without_replacement(dataset.examples, shots, rng)
        return TrainSet(samples=tuple(chosen), seed=seed)

    by_label: dict[int, list[LabeledExample]] = {v: [] for v in range(dataset.num_labels)}
    for ex in dataset.examples:
        by_label[ex.label].append(ex)
    counts = _balanced_counts(dataset, shots, seed)

    # Shift quota that a short label cannot fill onto the other labels.
    deficit = 0
    for v in range(dataset.num_labels):
        if counts[v] > len(by_label[v]):
            deficit += counts[v] - len(by_label[v])
            counts[v] = len(by_label[v])
    v = 0
    while deficit > 0:
        if counts[v] < len(by_label[v]):
            counts[v] += 1
            deficit -= 1
        v = (v + 1) % dataset.num_labels

    chosen: list[LabeledExample] = []
    for v in range(dataset.num_labels):
        if counts[v]:
            chosen.extend(sample_without_replacement(by_label[v], counts[v], rng))
    return TrainSet(samples=tuple(shuffled(chosen, rng)), seed=seed)


def subsample_eval(dataset: Dataset, n: int, seed: int) -> list[LabeledExample]:
    """Uniform evaluation subsample, clamped to the dataset size."""
    if n < 1:
        raise DatasetError("eval subsample size must be >= 1")
    rng = rng_for(seed, "eval_subsample")
    k = min(n, len(dataset.examples))
    return sample_without_replacement(dataset.examples, k, rng)
