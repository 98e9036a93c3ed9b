"""Build the artificial probing set from candidate-conditioned generations.

Each candidate context seeds one generation; every complete sample parsed
out of it contributes its sentence (the generated label is discarded, since
nothing guarantees its validity) tagged with the source candidate index.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .backend import Backend, GenParams, run_parallel
from .errors import EmptyProbingSetError
from .permute import PromptCandidate
from .seeding import child_seed
from .templating import PromptTemplate, scan

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Probe:
    """One unlabeled probe input."""

    text_a: str
    text_b: str | None = None


@dataclass(frozen=True, slots=True)
class ProbingDiagnostics:
    failed_candidates: int
    incomplete_segments: int
    duplicate_probes: int


@dataclass(frozen=True, slots=True)
class ProbingSet:
    probes: tuple[Probe, ...]
    provenance: tuple[int, ...]
    diagnostics: ProbingDiagnostics

    def __len__(self) -> int:
        return len(self.probes)


def build_probing_set(
    candidates: Sequence[PromptCandidate],
    backend: Backend,
    tpl: PromptTemplate,
    params: GenParams,
    generations_per_candidate: int = 1,
) -> ProbingSet:
    """Sample one generation per candidate (optionally more) and pool every
    extracted sentence, in candidate order, with labels stripped."""
    if not candidates:
        raise EmptyProbingSetError("no candidates to probe")

    def one_generation(job: tuple[PromptCandidate, int]) -> str:
        cand, repeat = job
        if repeat == 0:
            run_params = params
        else:
            run_params = replace(
                params, seed=child_seed(params.seed or 0, f"repeat:{repeat}")
            )
        return backend.generate(cand.context_text, run_params)

    jobs = [
        (cand, repeat)
        for cand in candidates
        for repeat in range(max(1, generations_per_candidate))
    ]
    generations = run_parallel(one_generation, jobs, backend.parallelism)

    probes: list[Probe] = []
    provenance: list[int] = []
    incomplete = 0
    extracted_per_candidate = {c.candidate_index: 0 for c in candidates}
    for (cand, _), generated in zip(jobs, generations):
        samples, residue = scan(generated, tpl)
        if residue.strip():
            incomplete += 1
        for sample in samples:
            probes.append(Probe(text_a=sample.text_a, text_b=sample.text_b))
            provenance.append(cand.candidate_index)
            extracted_per_candidate[cand.candidate_index] += 1

    if not probes:
        raise EmptyProbingSetError(
            f"empty probing set: none of the {len(candidates)} candidate "
            f"generations contained a parseable sample"
        )
    if len(probes) < len(candidates):
        logger.warning(
            "probing set holds %d probes for %d candidates; entropy scores "
            "will be coarse",
            len(probes),
            len(candidates),
        )
    failed = sum(1 for count in extracted_per_candidate.values() if count == 0)
    seen: set[Probe] = set()
    duplicates = 0
    for probe in probes:
        if probe in seen:
            duplicates += 1
        else:
            seen.add(probe)
    return ProbingSet(
        probes=tuple(probes),
        provenance=tuple(provenance),
        diagnostics=ProbingDiagnostics(
            failed_candidates=failed,
            incomplete_segments=incomplete,
            duplicate_probes=duplicates,
        ),
    )


def write_probing_jsonl(ps: ProbingSet, path: str | Path) -> None:
    """Export probes with provenance for inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        for probe, source in zip(ps.probes, ps.provenance):
            row: dict = {"text": probe.text_a}
            if probe.text_b is not None:
                row["text_b"] = probe.text_b
            row["candidate_index"] = source
            fh.write(json.dumps(row, ensure_ascii=True) + "\n")
