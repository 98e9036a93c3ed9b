from __future__ import annotations

import dataclasses
import json

import pytest

from orderprobe import (
    CachedBackend,
    EmptyProbingSetError,
    GenParams,
    MockBackend,
    MockModelConfig,
    PromptCandidate,
    build_probing_set,
)
from orderprobe.probing import write_probing_jsonl

from conftest import CannedGenerator


def make_candidates(n: int) -> list[PromptCandidate]:
    return [
        PromptCandidate(
            candidate_index=m,
            ordering=(0,),
            context_text=f"input: context {m} type: positive",
            label_pattern="P",
        )
        for m in range(n)
    ]


PARAMS = GenParams(block_ngram=0)


class TestBuildProbingSet:
    def test_two_samples_per_candidate(self, basic_template):
        backend = MockBackend(
            MockModelConfig(
                keywords={},
                corpus=tuple(
                    f"input: generated sentence {i} type: positive" for i in range(40)
                ),
                samples_per_generation=2,
            )
        )
        candidates = make_candidates(24)
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        assert len(ps) == 48
        assert backend.generate_calls == 24

    def test_garbage_candidate_contributes_nothing(self, basic_template):
        good = "input: a fine probe type: positive"
        candidates = make_candidates(3)
        backend = CannedGenerator(
            {c.context_text: good for c in candidates[:2]},
            default="no structure at all",
        )
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        assert len(ps) == 2
        assert ps.diagnostics.failed_candidates == 1
        assert set(ps.provenance) == {0, 1}

    def test_labels_are_discarded(self, basic_template):
        candidates = make_candidates(2)
        backend = CannedGenerator(
            {},
            default="input: clearly shaped probe type: positive",
        )
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        for probe in ps.probes:
            assert basic_template.label_prefix not in probe.text_a
        serialized = json.dumps([dataclasses.asdict(probe) for probe in ps.probes])
        assert "label" not in serialized

    def test_all_garbage_raises(self, basic_template):
        candidates = make_candidates(3)
        backend = CannedGenerator({}, default="nothing parseable here")
        with pytest.raises(EmptyProbingSetError, match="empty probing set"):
            build_probing_set(candidates, backend, basic_template, PARAMS)

    def test_no_candidates_raises(self, basic_template):
        with pytest.raises(EmptyProbingSetError):
            build_probing_set([], CannedGenerator({}), basic_template, PARAMS)

    def test_provenance_follows_candidate_order(self, basic_template):
        backend = MockBackend(
            MockModelConfig(
                keywords={},
                corpus=tuple(f"input: probe {i} type: x" for i in range(10)),
                samples_per_generation=3,
            ),
            parallelism=4,
        )
        candidates = make_candidates(8)
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        assert list(ps.provenance) == sorted(ps.provenance)

    def test_incomplete_tail_counted(self, basic_template):
        candidates = make_candidates(1)
        backend = CannedGenerator(
            {},
            default="input: whole sample type: ok\ninput: dangling half",
        )
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        assert len(ps) == 1
        assert ps.diagnostics.incomplete_segments == 1

    def test_duplicates_counted_not_removed(self, basic_template):
        candidates = make_candidates(2)
        backend = CannedGenerator({}, default="input: same probe type: x")
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        assert len(ps) == 2
        assert ps.diagnostics.duplicate_probes == 1

    def test_extra_generations_per_candidate(self, basic_template):
        backend = MockBackend(
            MockModelConfig(
                keywords={},
                corpus=tuple(f"input: probe {i} type: x" for i in range(30)),
                samples_per_generation=1,
            )
        )
        candidates = make_candidates(4)
        ps = build_probing_set(
            candidates, backend, basic_template, PARAMS, generations_per_candidate=3
        )
        assert backend.generate_calls == 12
        assert len(ps) == 12

    def test_replay_reproduces_probing_set(self, tmp_path, basic_template):
        inner = MockBackend(
            MockModelConfig(
                keywords={},
                corpus=tuple(f"input: probe {i} type: x" for i in range(10)),
            )
        )
        candidates = make_candidates(5)
        recorded = build_probing_set(
            candidates,
            CachedBackend(inner, tmp_path / "cache", "record"),
            basic_template,
            PARAMS,
        )
        replayed = build_probing_set(
            candidates,
            CachedBackend(None, tmp_path / "cache", "replay"),
            basic_template,
            PARAMS,
        )
        assert recorded == replayed

    def test_jsonl_export(self, tmp_path, basic_template):
        candidates = make_candidates(2)
        backend = CannedGenerator({}, default="input: exported probe type: x")
        ps = build_probing_set(candidates, backend, basic_template, PARAMS)
        out = tmp_path / "probes.jsonl"
        write_probing_jsonl(ps, out)
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows == [
            {"text": "exported probe", "candidate_index": 0},
            {"text": "exported probe", "candidate_index": 1},
        ]
