"""Per-candidate entropy metrics over the probing set, and candidate ranking.

Two scores are computed from the same label-distribution queries (one
backend call per candidate/probe pair): the entropy of the predicted-label
histogram across the probing set, and the mean per-probe entropy of the
label distribution. Both use natural log; ranking is invariant to the
base. All accumulation is plain left-to-right floating point so that
independent loop-based recomputations match exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backend import Backend, LabelQueryResult, run_parallel
from .errors import BackendError, EmptyProbingSetError
from .permute import PromptCandidate
from .probing import Probe, ProbingSet
from .templating import PromptTemplate, concat, render_input


@dataclass(frozen=True, slots=True)
class CandidateScore:
    """Entropy statistics for one candidate ordering."""

    candidate_index: int
    global_entropy: float
    local_entropy: float
    histogram: tuple[int, ...]

    def metric(self, name: str) -> float:
        if name == "globalE":
            return self.global_entropy
        if name == "localE":
            return self.local_entropy
        raise ValueError(f"unknown metric {name!r} (use globalE or localE)")


METRICS = ("globalE", "localE")


def entropy(probs: Sequence[float]) -> float:
    """Shannon entropy in nats with the 0*log(0) := 0 convention."""
    total = 0.0
    for p in probs:
        if p > 0.0:
            total += -p * math.log(p)
    return total


def argmax_index(values: Sequence[float]) -> int:
    """Index of the largest value; ties go to the lowest index."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def query_distribution(
    context_text: str, probe: Probe, backend: Backend, tpl: PromptTemplate
) -> LabelQueryResult:
    """One label-distribution query for a probe appended to a context."""
    query = concat([context_text, render_input(probe.text_a, probe.text_b, tpl)], tpl)
    return backend.label_distribution(query, tpl.verbalizer)


def predict_label(
    context_text: str, probe: Probe, backend: Backend, tpl: PromptTemplate
) -> int:
    """Most probable label id for the probe under this context."""
    result = query_distribution(context_text, probe, backend, tpl)
    return argmax_index(result.normalized)


def _probe_distributions(
    context_text: str,
    probes: Sequence[Probe],
    backend: Backend,
    tpl: PromptTemplate,
    candidate_index: int | None = None,
) -> list[LabelQueryResult]:
    if not probes:
        raise EmptyProbingSetError("cannot score a candidate over an empty probing set")

    def query(item: tuple[int, Probe]) -> LabelQueryResult:
        probe_index, probe = item
        try:
            return query_distribution(context_text, probe, backend, tpl)
        except BackendError as exc:
            where = f"probe {probe_index}"
            if candidate_index is not None:
                where = f"candidate {candidate_index}, {where}"
            raise type(exc)(f"{exc} [{where}]") from exc

    return run_parallel(query, list(enumerate(probes)), backend.parallelism)


def _probability_vector(
    result: LabelQueryResult, use_raw_probabilities: bool
) -> tuple[float, ...]:
    if not use_raw_probabilities:
        return result.normalized
    return tuple(math.exp(s) for s in result.scores)


def score_candidate(
    candidate: PromptCandidate,
    probing_set: ProbingSet,
    backend: Backend,
    tpl: PromptTemplate,
    use_raw_probabilities: bool = False,
) -> CandidateScore:
    """Both entropy metrics and the prediction histogram from one query
    pass over the probing set."""
    dists = _probe_distributions(
        candidate.context_text,
        probing_set.probes,
        backend,
        tpl,
        candidate.candidate_index,
    )
    counts = [0] * tpl.num_labels
    local_sum = 0.0
    for dist in dists:
        counts[argmax_index(dist.normalized)] += 1
        local_sum += entropy(_probability_vector(dist, use_raw_probabilities))
    size = len(dists)
    shares = [c / size for c in counts]
    return CandidateScore(
        candidate_index=candidate.candidate_index,
        global_entropy=entropy(shares),
        local_entropy=local_sum / size,
        histogram=tuple(counts),
    )


def score_candidates(
    candidates: Sequence[PromptCandidate],
    probing_set: ProbingSet,
    backend: Backend,
    tpl: PromptTemplate,
    use_raw_probabilities: bool = False,
) -> list[CandidateScore]:
    return [
        score_candidate(cand, probing_set, backend, tpl, use_raw_probabilities)
        for cand in candidates
    ]


def global_entropy(
    context_text: str,
    probing_set: ProbingSet,
    backend: Backend,
    tpl: PromptTemplate,
) -> float:
    """Entropy of the predicted-label distribution over the probing set."""
    dists = _probe_distributions(context_text, probing_set.probes, backend, tpl)
    counts = [0] * tpl.num_labels
    for dist in dists:
        counts[argmax_index(dist.normalized)] += 1
    return entropy([c / len(dists) for c in counts])


def local_entropy(
    context_text: str,
    probing_set: ProbingSet,
    backend: Backend,
    tpl: PromptTemplate,
    use_raw_probabilities: bool = False,
) -> float:
    """Mean per-probe entropy of the label distribution."""
    dists = _probe_distributions(context_text, probing_set.probes, backend, tpl)
    total = 0.0
    for dist in dists:
        total += entropy(_probability_vector(dist, use_raw_probabilities))
    return total / len(dists)


def rank_candidates(
    scores: Sequence[CandidateScore], metric: str, k: int
) -> list[int]:
    """Top-k candidate indices by the chosen metric, descending; equal
    scores keep ascending candidate order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(scores, key=lambda s: (-s.metric(metric), s.candidate_index))
    return [s.candidate_index for s in ranked[:k]]
