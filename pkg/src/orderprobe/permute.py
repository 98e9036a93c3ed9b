"""Ordering permutations of a train set and their rendered prompt candidates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from .core import TrainSet
from .errors import OrderProbeError
from .seeding import rng_for, shuffled
from .templating import PromptTemplate, concat, linearize


@dataclass(frozen=True, slots=True)
class PromptCandidate:
    """One ordering of the train samples rendered into a context."""

    candidate_index: int
    ordering: tuple[int, ...]
    context_text: str
    label_pattern: str


def _factorial_at_most(n: int, cap: int) -> int | None:
    """n! when it does not exceed cap, else None (avoids huge factorials)."""
    total = 1
    for i in range(2, n + 1):
        total *= i
        if total > cap:
            return None
    return total


def enumerate_orderings(n: int, cap: int = 24, seed: int = 0) -> list[tuple[int, ...]]:
    """All n! orderings (lexicographic) when they fit within ``cap``;
    otherwise ``cap`` distinct orderings sampled uniformly without
    replacement, deterministic per seed."""
    if n < 1 or cap < 1:
        raise OrderProbeError("need n >= 1 and cap >= 1")
    if _factorial_at_most(n, cap) is not None:
        return list(itertools.permutations(range(n)))
    rng = rng_for(seed, f"orderings:{n}")
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    draws = 0
    limit = 1000 * cap
    while len(out) < cap:
        draws += 1
        if draws > limit:  # unreachable when cap << n!
            raise OrderProbeError(
                f"could not draw {cap} distinct orderings of {n} items "
                f"within {limit} attempts"
            )
        perm = tuple(shuffled(range(n), rng))
        if perm not in seen:
            seen.add(perm)
            out.append(perm)
    return out


def label_symbols(label_names: Sequence[str] | None, num_labels: int) -> list[str]:
    """One symbol per label: initial letters when unambiguous, ids otherwise."""
    if label_names:
        letters = [nm[0].upper() for nm in label_names]
        if len(set(letters)) == len(letters):
            return letters
    return [str(v) for v in range(num_labels)]


def _pattern(
    ts: TrainSet, ordering: Sequence[int], symbols: Sequence[str]
) -> str:
    parts = [symbols[ts.samples[i].label] for i in ordering]
    joiner = "" if all(len(p) == 1 for p in symbols) else "-"
    return joiner.join(parts)


def label_patterns(
    ts: TrainSet,
    orderings: Sequence[tuple[int, ...]],
    label_names: Sequence[str] | None = None,
) -> dict[str, list[tuple[int, ...]]]:
    """Group orderings by the label sequence they induce."""
    num_labels = max(s.label for s in ts.samples) + 1
    symbols = label_symbols(label_names, num_labels)
    groups: dict[str, list[tuple[int, ...]]] = {}
    for ordering in orderings:
        _check_ordering(ts, ordering)
        groups.setdefault(_pattern(ts, ordering, symbols), []).append(ordering)
    return groups


def _check_ordering(ts: TrainSet, ordering: Sequence[int]) -> None:
    if sorted(ordering) != list(range(ts.shots)):
        raise OrderProbeError(
            f"ordering {tuple(ordering)} is not a permutation of 0..{ts.shots - 1}"
        )


def render_candidates(
    ts: TrainSet,
    tpl: PromptTemplate,
    orderings: Sequence[tuple[int, ...]],
    label_names: Sequence[str] | None = None,
) -> list[PromptCandidate]:
    """Render one candidate per ordering, indexed by position."""
    num_labels = max(s.label for s in ts.samples) + 1
    symbols = label_symbols(label_names, num_labels)
    rendered = [linearize(s, True, tpl) for s in ts.samples]
    out = []
    for m, ordering in enumerate(orderings):
        _check_ordering(ts, ordering)
        context = concat([rendered[i] for i in ordering], tpl)
        out.append(
            PromptCandidate(
                candidate_index=m,
                ordering=tuple(ordering),
                context_text=context,
                label_pattern=_pattern(ts, ordering, symbols),
            )
        )
    return out


def duplicate_contexts(candidates: Sequence[PromptCandidate]) -> dict[str, list[int]]:
    """Context texts shared by several candidates (diagnostics only)."""
    by_text: dict[str, list[int]] = {}
    for cand in candidates:
        by_text.setdefault(cand.context_text, []).append(cand.candidate_index)
    return {text: idxs for text, idxs in by_text.items() if len(idxs) > 1}
