"""Candidate accuracy, baselines, and order-sensitivity statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from scipy import stats as _scipy_stats

from .backend import Backend, run_parallel
from .core import LabeledExample, TrainSet
from .errors import DatasetError, OrderProbeError
from .permute import PromptCandidate, enumerate_orderings, render_candidates
from .probing import Probe
from .scoring import CandidateScore, predict_label
from .seeding import rng_for, shuffled
from .templating import PromptTemplate


def predictions(
    context_text: str,
    examples: Sequence[LabeledExample],
    backend: Backend,
    tpl: PromptTemplate,
) -> list[int]:
    """Predicted label ids for every example under one candidate context."""

    def one(ex: LabeledExample) -> int:
        return predict_label(context_text, Probe(ex.text_a, ex.text_b), backend, tpl)

    return run_parallel(one, list(examples), backend.parallelism)


def accuracy(
    context_text: str,
    examples: Sequence[LabeledExample],
    backend: Backend,
    tpl: PromptTemplate,
) -> float:
    """Fraction of examples whose predicted label matches gold."""
    if not examples:
        raise DatasetError("cannot evaluate accuracy on an empty set")
    preds = predictions(context_text, examples, backend, tpl)
    matches = sum(1 for pred, ex in zip(preds, examples) if pred == ex.label)
    return matches / len(examples)


def majority_baseline(examples: Sequence[LabeledExample]) -> float:
    """Accuracy of always predicting the most frequent label."""
    if not examples:
        raise DatasetError("cannot compute a majority baseline on an empty set")
    counts: dict[int, int] = {}
    for ex in examples:
        counts[ex.label] = counts.get(ex.label, 0) + 1
    return max(counts.values()) / len(examples)


def top_k_by(values: Sequence[float], k: int) -> list[int]:
    """Indices of the k largest values, descending, ties to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return order[:k]


def oracle_select(
    candidates: Sequence[PromptCandidate],
    validation_set: Sequence[LabeledExample],
    backend: Backend,
    tpl: PromptTemplate,
    k: int = 4,
) -> list[int]:
    """Top-k candidate indices by true validation accuracy (upper bound,
    not a deployable selection method)."""
    accs = [accuracy(c.context_text, validation_set, backend, tpl) for c in candidates]
    return [candidates[i].candidate_index for i in top_k_by(accs, k)]


@dataclass(frozen=True, slots=True)
class SplitSelection:
    """Result of tuning on a held-back half of the train samples."""

    prompt_samples: tuple[LabeledExample, ...]
    holdout: tuple[LabeledExample, ...]
    candidates: tuple[PromptCandidate, ...]
    holdout_accuracies: tuple[float, ...]
    selected: tuple[int, ...]


def split_train_select(
    ts: TrainSet,
    tpl: PromptTemplate,
    backend: Backend,
    k: int = 4,
    max_permutations: int = 24,
    label_names: Sequence[str] | None = None,
) -> SplitSelection:
    """Split the train samples in half (seeded assignment), permute the
    first half into prompts, and keep the top-k by accuracy on the second
    half. Odd sizes put the extra sample in the holdout."""
    if ts.shots < 2:
        raise DatasetError("split-train selection needs at least 2 train samples")
    order = shuffled(range(ts.shots), rng_for(ts.seed, "split_train"))
    half = ts.shots // 2
    prompt_samples = tuple(ts.samples[i] for i in order[:half])
    holdout = tuple(ts.samples[i] for i in order[half:])
    sub = TrainSet(samples=prompt_samples, seed=ts.seed)
    orderings = enumerate_orderings(half, cap=max_permutations, seed=ts.seed)
    candidates = render_candidates(sub, tpl, orderings, label_names)
    accs = [accuracy(c.context_text, holdout, backend, tpl) for c in candidates]
    selected = [candidates[i].candidate_index for i in top_k_by(accs, k)]
    return SplitSelection(
        prompt_samples=prompt_samples,
        holdout=holdout,
        candidates=tuple(candidates),
        holdout_accuracies=tuple(accs),
        selected=tuple(selected),
    )


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman's rank correlation with average ranks for ties."""
    if len(a) != len(b):
        raise OrderProbeError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise OrderProbeError("need at least 2 points for a rank correlation")
    rho = _scipy_stats.spearmanr(list(a), list(b)).correlation
    return float(rho)


def correlation_matrix(score_lists: Sequence[Sequence[float]]) -> list[list[float]]:
    """Pairwise Spearman matrix; symmetric with an exact unit diagonal."""
    if len(score_lists) < 2:
        raise OrderProbeError("need at least two score lists to correlate")
    length = len(score_lists[0])
    for i, scores in enumerate(score_lists):
        if len(scores) != length:
            raise OrderProbeError(
                f"score list {i} has {len(scores)} entries, expected {length}"
            )
    size = len(score_lists)
    matrix = [[1.0] * size for _ in range(size)]
    for i in range(size):
        for j in range(i + 1, size):
            rho = spearman(score_lists[i], score_lists[j])
            matrix[i][j] = rho
            matrix[j][i] = rho
    return matrix


def topk_sweep(
    scores: Sequence[CandidateScore],
    accuracies: Sequence[float],
    metric: str,
) -> list[tuple[int, float]]:
    """Mean accuracy of the top-K candidates by ``metric`` for every K.

    ``accuracies[i]`` belongs to ``scores[i]``; K runs from 1 to the full
    candidate count, where the sweep equals the all-candidates mean.
    """
    if len(scores) != len(accuracies):
        raise OrderProbeError("scores and accuracies must align")
    by_rank = sorted(range(len(scores)), key=lambda i: (-scores[i].metric(metric), scores[i].candidate_index))
    out = []
    running = 0.0
    for pos, idx in enumerate(by_rank, start=1):
        running += accuracies[idx]
        out.append((pos, running / pos))
    return out


def mean(values: Sequence[float]) -> float:
    if not values:
        raise OrderProbeError("mean of empty sequence")
    return sum(values) / len(values)


def std(values: Sequence[float], population: bool = True) -> float:
    """Standard deviation over per-set means; population (/N) by default."""
    if not values:
        raise OrderProbeError("std of empty sequence")
    if len(values) == 1:
        return 0.0
    mu = mean(values)
    ss = sum((v - mu) ** 2 for v in values)
    denom = len(values) if population else len(values) - 1
    return (ss / denom) ** 0.5


@dataclass(frozen=True, slots=True)
class StrategyStats:
    """Per-train-set means and their aggregate for one selection strategy."""

    per_set: tuple[float, ...]
    mean: float
    std: float


def strategy_stats(
    per_set_values: Sequence[float], population_std: bool = True
) -> StrategyStats:
    return StrategyStats(
        per_set=tuple(per_set_values),
        mean=mean(per_set_values),
        std=std(per_set_values, population=population_std),
    )


def run_statistics(
    accuracy_matrix: Sequence[Sequence[float]],
    selections: Mapping[str, Sequence[Sequence[int] | None]],
    population_std: bool = True,
) -> dict[str, StrategyStats]:
    """Aggregate the train_set x candidate accuracy matrix per strategy.

    ``selections[name][s]`` lists the candidate indices the strategy keeps
    for train set ``s`` (None means all candidates). Each strategy reports
    the mean over train sets of its per-set selected-candidate mean, plus
    the spread across train sets.
    """
    out: dict[str, StrategyStats] = {}
    for name, per_set_selection in selections.items():
        if len(per_set_selection) != len(accuracy_matrix):
            raise OrderProbeError(
                f"strategy {name!r} has {len(per_set_selection)} selections for "
                f"{len(accuracy_matrix)} train sets"
            )
        per_set_means = []
        for row, chosen in zip(accuracy_matrix, per_set_selection):
            values = list(row) if chosen is None else [row[i] for i in chosen]
            per_set_means.append(mean(values))
        out[name] = strategy_stats(per_set_means, population_std)
    return out


@dataclass(frozen=True, slots=True)
class RunReport:
    """Everything the evaluate step publishes for one experiment."""

    dataset: str
    model_id: str
    config_hash: str
    strategies: dict[str, StrategyStats]
    accuracy_matrix: tuple[tuple[float, ...], ...]
    orderings: tuple[tuple[tuple[int, ...], ...], ...]
    eval_histograms: tuple[tuple[tuple[int, ...], ...], ...]
    label_names: tuple[str, ...]
    eval_size: int
    train_seeds: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model_id": self.model_id,
            "config_hash": self.config_hash,
            "label_names": list(self.label_names),
            "eval_size": self.eval_size,
            "train_seeds": list(self.train_seeds),
            "strategies": {
                name: {
                    "per_set": list(st.per_set),
                    "mean": st.mean,
                    "std": st.std,
                }
                for name, st in sorted(self.strategies.items())
            },
            "accuracy_matrix": [list(row) for row in self.accuracy_matrix],
            "orderings": [
                [list(o) for o in per_set] for per_set in self.orderings
            ],
            "eval_histograms": [
                [list(h) for h in per_set] for per_set in self.eval_histograms
            ],
        }
