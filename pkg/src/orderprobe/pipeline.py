"""End-to-end orchestration: select, evaluate, sweep, and correlate runs.

Every artifact carries the config hash of the run that produced it; an
existing artifact written under a different configuration is never
silently overwritten. All file writes are atomic (temp file + rename) and
byte-deterministic for a fixed configuration and backend state, which is
what makes committed replay caches usable as golden fixtures.
"""

from __future__ import annotations

import csv
import io
import json
import os
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import evaluation
from .backend import Backend
from .config import ExperimentSpec, build_backend, config_hash, resolve_template
from .core import Dataset, TrainSet, load_dataset, sample_train_set, subsample_eval
from .errors import ConfigError
from .evaluation import RunReport
from .permute import PromptCandidate, duplicate_contexts, enumerate_orderings, render_candidates
from .probing import build_probing_set
from .scoring import METRICS, CandidateScore, rank_candidates, score_candidates
from .templating import PromptTemplate, reject_colliding

STRATEGIES = ("all", "localE", "globalE", "oracle", "split", "majority")


# ---------------------------------------------------------------------------
# Artifact IO


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _existing_hash(path: Path) -> str | None:
    """Config hash recorded in an artifact, or None if unreadable."""
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
    except OSError:
        return None
    if first.startswith("# config_hash="):
        return first.split("=", 1)[1]
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, dict):
            return data.get("config_hash")
    except json.JSONDecodeError:
        try:
            meta = json.loads(first)
            if isinstance(meta, dict) and "_meta" in meta:
                return meta["_meta"].get("config_hash")
        except json.JSONDecodeError:
            return None
    return None


def _guard_overwrite(path: Path, chash: str) -> None:
    if not path.exists():
        return
    previous = _existing_hash(path)
    if previous is not None and previous != chash:
        raise ConfigError(
            f"refusing to overwrite {path}: it was produced under config "
            f"{previous}, current config is {chash} (clean the output "
            f"directory or pick another one)"
        )


def write_json_artifact(path: Path, payload: dict, chash: str) -> None:
    _guard_overwrite(path, chash)
    body = {"config_hash": chash}
    body.update(payload)
    _atomic_write_text(path, json.dumps(body, sort_keys=True, ensure_ascii=True, indent=2) + "\n")


def write_csv_artifact(
    path: Path, header: Sequence[str], rows: Sequence[Sequence[object]], chash: str
) -> None:
    _guard_overwrite(path, chash)
    buf = io.StringIO()
    buf.write(f"# config_hash={chash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_text(path, buf.getvalue())


def read_csv_artifact(path: Path) -> tuple[str, list[dict[str, str]]]:
    if not path.exists():
        raise ConfigError(f"missing artifact {path} (run 'select' first)")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# config_hash="):
            raise ConfigError(f"{path}: not an artifact file (missing config hash)")
        chash = first.split("=", 1)[1]
        return chash, list(csv.DictReader(fh))


def read_json_artifact(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"missing artifact {path} (run 'select' first)")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict) or "config_hash" not in data:
        raise ConfigError(f"{path}: not an artifact file (missing config hash)")
    return data


# ---------------------------------------------------------------------------
# Shared experiment state


@dataclass(frozen=True)
class RunContext:
    spec: ExperimentSpec
    dataset: Dataset
    template: PromptTemplate
    backend: Backend
    config_hash: str
    rejected_examples: int

    @property
    def out_dir(self) -> Path:
        return self.spec.resolve_path(self.spec.output_dir)


def prepare(spec: ExperimentSpec) -> RunContext:
    """Load the dataset aligned with the template and build the backend."""
    tpl = resolve_template(spec)
    label_names = (
        list(spec.dataset.label_names)
        if spec.dataset.label_names is not None
        else list(tpl.verbalizer)
    )
    dataset = load_dataset(
        spec.resolve_path(spec.dataset.path),
        fmt=spec.dataset.format,
        label_names=label_names,
        name=spec.dataset.name,
    )
    if dataset.pair_task != tpl.is_pair:
        raise ConfigError(
            f"dataset {dataset.name!r} is {'pair' if dataset.pair_task else 'single'}-"
            f"text but template {tpl.name!r} is not"
        )
    if dataset.num_labels != tpl.num_labels:
        raise ConfigError(
            f"dataset has {dataset.num_labels} labels but template {tpl.name!r} "
            f"verbalizes {tpl.num_labels}"
        )
    kept, rejected = reject_colliding(dataset.examples, tpl)
    if not kept:
        raise ConfigError("every example collides with the template markers")
    clean = Dataset(
        name=dataset.name,
        examples=tuple(kept),
        label_names=dataset.label_names,
        pair_task=dataset.pair_task,
    )
    return RunContext(
        spec=spec,
        dataset=clean,
        template=tpl,
        backend=build_backend(spec),
        config_hash=config_hash(spec),
        rejected_examples=rejected,
    )


def train_sets(ctx: RunContext) -> list[TrainSet]:
    run = ctx.spec.run
    return [
        sample_train_set(ctx.dataset, run.shots, seed, run.balanced)
        for seed in run.train_seeds()
    ]


def candidates_for(ctx: RunContext, ts: TrainSet) -> list[PromptCandidate]:
    orderings = enumerate_orderings(
        ts.shots, cap=ctx.spec.run.max_permutations, seed=ts.seed
    )
    return render_candidates(ts, ctx.template, orderings, ctx.dataset.label_names)


# ---------------------------------------------------------------------------
# select


def run_select(spec: ExperimentSpec) -> dict:
    """Probe and rank candidate orderings; write the four select artifacts."""
    ctx = prepare(spec)
    out = ctx.out_dir
    run = spec.run

    candidate_rows: list[list[object]] = []
    score_rows: list[list[object]] = []
    probing_rows: list[str] = []
    per_set_payload = []
    duplicate_diag = 0

    for set_index, ts in enumerate(train_sets(ctx)):
        candidates = candidates_for(ctx, ts)
        duplicate_diag += len(duplicate_contexts(candidates))
        probing = build_probing_set(
            candidates,
            ctx.backend,
            ctx.template,
            spec.generation,
            spec.generations_per_candidate,
        )
        scores = score_candidates(
            candidates, probing, ctx.backend, ctx.template, spec.use_raw_probabilities
        )
        selected = {
            metric: rank_candidates(scores, metric, run.top_k) for metric in METRICS
        }
        for cand in candidates:
            candidate_rows.append(
                [
                    set_index,
                    cand.candidate_index,
                    json.dumps(list(cand.ordering)),
                    cand.label_pattern,
                    cand.context_text,
                ]
            )
        for cand, score in zip(candidates, scores):
            score_rows.append(
                [
                    set_index,
                    score.candidate_index,
                    json.dumps(list(cand.ordering)),
                    cand.label_pattern,
                    repr(score.global_entropy),
                    repr(score.local_entropy),
                    json.dumps(list(score.histogram)),
                ]
            )
        for probe, source in zip(probing.probes, probing.provenance):
            row: dict = {"train_set": set_index, "text": probe.text_a}
            if probe.text_b is not None:
                row["text_b"] = probe.text_b
            row["candidate_index"] = source
            probing_rows.append(json.dumps(row, ensure_ascii=True))
        per_set_payload.append(
            {
                "seed": ts.seed,
                "orderings": [list(c.ordering) for c in candidates],
                "selected": selected,
                "probing_size": len(probing),
                "diagnostics": {
                    "failed_candidates": probing.diagnostics.failed_candidates,
                    "incomplete_segments": probing.diagnostics.incomplete_segments,
                    "duplicate_probes": probing.diagnostics.duplicate_probes,
                },
            }
        )

    chash = ctx.config_hash
    write_csv_artifact(
        out / "candidates.csv",
        ["train_set", "candidate_index", "ordering", "label_pattern", "context_text"],
        candidate_rows,
        chash,
    )
    write_csv_artifact(
        out / "scores.csv",
        [
            "train_set",
            "candidate_index",
            "ordering",
            "label_pattern",
            "globalE",
            "localE",
            "histogram",
        ],
        score_rows,
        chash,
    )
    _guard_overwrite(out / "probing_set.jsonl", chash)
    meta_line = json.dumps({"_meta": {"config_hash": chash}})
    _atomic_write_text(
        out / "probing_set.jsonl", "\n".join([meta_line, *probing_rows]) + "\n"
    )
    write_json_artifact(
        out / "selected.json",
        {
            "dataset": ctx.dataset.name,
            "model_id": ctx.backend.info().model_id,
            "top_k": run.top_k,
            "rejected_examples": ctx.rejected_examples,
            "duplicate_contexts": duplicate_diag,
            "train_sets": per_set_payload,
        },
        chash,
    )
    return {
        "output_dir": str(out),
        "config_hash": chash,
        "train_sets": len(per_set_payload),
        "candidates_per_set": len(per_set_payload[0]["orderings"]),
        "probing_sizes": [p["probing_size"] for p in per_set_payload],
    }


# ---------------------------------------------------------------------------
# evaluate


def _load_selection(ctx: RunContext) -> dict:
    data = read_json_artifact(ctx.out_dir / "selected.json")
    if data["config_hash"] != ctx.config_hash:
        raise ConfigError(
            f"selected.json was produced under config {data['config_hash']}, "
            f"current config is {ctx.config_hash}; re-run 'select'"
        )
    return data


def _accuracy_and_histogram(
    ctx: RunContext, context_text: str, eval_set: Sequence
) -> tuple[float, tuple[int, ...]]:
    preds = evaluation.predictions(context_text, eval_set, ctx.backend, ctx.template)
    counts = [0] * ctx.dataset.num_labels
    matches = 0
    for pred, ex in zip(preds, eval_set):
        counts[pred] += 1
        if pred == ex.label:
            matches += 1
    return matches / len(eval_set), tuple(counts)


def run_evaluate(spec: ExperimentSpec, strategies: Sequence[str] | None = None) -> dict:
    """Measure selected candidates on the evaluation subsample and report
    per-strategy statistics."""
    strategies = list(strategies or STRATEGIES)
    unknown = set(strategies) - set(STRATEGIES)
    if unknown:
        raise ConfigError(f"unknown strategies {sorted(unknown)} (choose from {STRATEGIES})")
    ctx = prepare(spec)
    run = spec.run
    eval_set = subsample_eval(ctx.dataset, run.eval_subsample, run.seed)

    needs_selection = {"localE", "globalE"} & set(strategies)
    needs_matrix = {"all", "localE", "globalE", "oracle"} & set(strategies)
    selection_data = _load_selection(ctx) if needs_selection else None

    all_sets = train_sets(ctx)
    acc_matrix: list[list[float]] = []
    histograms: list[list[tuple[int, ...]]] = []
    orderings_per_set: list[list[tuple[int, ...]]] = []
    if needs_matrix:
        for set_index, ts in enumerate(all_sets):
            candidates = candidates_for(ctx, ts)
            if selection_data is not None:
                stored = selection_data["train_sets"][set_index]["orderings"]
                if [list(c.ordering) for c in candidates] != stored:
                    raise ConfigError(
                        f"train set {set_index}: orderings in selected.json do not "
                        f"match this configuration; re-run 'select'"
                    )
            row: list[float] = []
            hist_row: list[tuple[int, ...]] = []
            for cand in candidates:
                acc, hist = _accuracy_and_histogram(ctx, cand.context_text, eval_set)
                row.append(acc)
                hist_row.append(hist)
            acc_matrix.append(row)
            histograms.append(hist_row)
            orderings_per_set.append([c.ordering for c in candidates])

    selections: dict[str, list[Sequence[int] | None]] = {}
    if "all" in strategies:
        selections["all"] = [None] * len(all_sets)
    for metric in ("localE", "globalE"):
        if metric in strategies:
            assert selection_data is not None
            selections[metric] = [
                per_set["selected"][metric] for per_set in selection_data["train_sets"]
            ]
    if "oracle" in strategies:
        selections["oracle"] = [
            evaluation.top_k_by(row, run.top_k) for row in acc_matrix
        ]
    stats = evaluation.run_statistics(acc_matrix, selections, spec.population_std)

    if "split" in strategies:
        per_set_means = []
        for ts in all_sets:
            split = evaluation.split_train_select(
                ts,
                ctx.template,
                ctx.backend,
                k=run.top_k,
                max_permutations=run.max_permutations,
                label_names=ctx.dataset.label_names,
            )
            accs = [
                evaluation.accuracy(
                    split.candidates[i].context_text, eval_set, ctx.backend, ctx.template
                )
                for i in split.selected
            ]
            per_set_means.append(evaluation.mean(accs))
        stats["split"] = evaluation.strategy_stats(per_set_means, spec.population_std)
    if "majority" in strategies:
        majority = evaluation.majority_baseline(eval_set)
        stats["majority"] = evaluation.strategy_stats(
            [majority] * len(all_sets), spec.population_std
        )

    report = RunReport(
        dataset=ctx.dataset.name,
        model_id=ctx.backend.info().model_id,
        config_hash=ctx.config_hash,
        strategies=stats,
        accuracy_matrix=tuple(tuple(row) for row in acc_matrix),
        orderings=tuple(
            tuple(tuple(o) for o in per_set) for per_set in orderings_per_set
        ),
        eval_histograms=tuple(tuple(per_set) for per_set in histograms),
        label_names=ctx.dataset.label_names,
        eval_size=len(eval_set),
        train_seeds=tuple(run.train_seeds()),
    )
    payload = report.to_json_dict()
    del payload["config_hash"]  # written by the artifact wrapper
    write_json_artifact(ctx.out_dir / "report.json", payload, ctx.config_hash)

    header = ["strategy", "mean", "std"] + [f"set_{i}" for i in range(len(all_sets))]
    rows = [
        [name, repr(st.mean), repr(st.std), *[repr(v) for v in st.per_set]]
        for name, st in sorted(stats.items())
    ]
    write_csv_artifact(ctx.out_dir / "report.csv", header, rows, ctx.config_hash)
    return {
        "output_dir": str(ctx.out_dir),
        "config_hash": ctx.config_hash,
        "eval_size": len(eval_set),
        "strategies": {name: {"mean": st.mean, "std": st.std} for name, st in sorted(stats.items())},
    }


# ---------------------------------------------------------------------------
# sweep


def _scores_from_csv(ctx: RunContext) -> list[list[CandidateScore]]:
    chash, rows = read_csv_artifact(ctx.out_dir / "scores.csv")
    if chash != ctx.config_hash:
        raise ConfigError(
            f"scores.csv was produced under config {chash}, current config is "
            f"{ctx.config_hash}; re-run 'select'"
        )
    per_set: dict[int, list[CandidateScore]] = {}
    for row in rows:
        score = CandidateScore(
            candidate_index=int(row["candidate_index"]),
            global_entropy=float(row["globalE"]),
            local_entropy=float(row["localE"]),
            histogram=tuple(json.loads(row["histogram"])),
        )
        per_set.setdefault(int(row["train_set"]), []).append(score)
    return [per_set[i] for i in sorted(per_set)]


def run_sweep(spec: ExperimentSpec) -> dict:
    """Top-K accuracy curve per metric, averaged over train sets."""
    ctx = prepare(spec)
    run = spec.run
    scores_per_set = _scores_from_csv(ctx)
    eval_set = subsample_eval(ctx.dataset, run.eval_subsample, run.seed)

    acc_per_set: list[list[float]] = []
    for ts, scores in zip(train_sets(ctx), scores_per_set):
        candidates = candidates_for(ctx, ts)
        if len(candidates) != len(scores):
            raise ConfigError("scores.csv does not match this configuration")
        acc_per_set.append(
            [
                evaluation.accuracy(c.context_text, eval_set, ctx.backend, ctx.template)
                for c in candidates
            ]
        )

    rows: list[list[object]] = []
    curves: dict[str, list[float]] = {}
    for metric in METRICS:
        sweeps = [
            evaluation.topk_sweep(scores, accs, metric)
            for scores, accs in zip(scores_per_set, acc_per_set)
        ]
        n_candidates = len(sweeps[0])
        curve = []
        for k_index in range(n_candidates):
            k = sweeps[0][k_index][0]
            value = evaluation.mean([sweep[k_index][1] for sweep in sweeps])
            curve.append(value)
            rows.append([metric, k, repr(value)])
        curves[metric] = curve
    write_csv_artifact(
        ctx.out_dir / "sweep.csv", ["metric", "K", "mean_accuracy"], rows, ctx.config_hash
    )
    baseline = evaluation.mean([evaluation.mean(row) for row in acc_per_set])
    return {
        "output_dir": str(ctx.out_dir),
        "config_hash": ctx.config_hash,
        "baseline_mean": baseline,
        "curves": curves,
    }


# ---------------------------------------------------------------------------
# correlate


def run_correlate(report_paths: Sequence[str | Path], out_path: str | Path) -> dict:
    """Pairwise rank correlation of permutation accuracies across reports."""
    if len(report_paths) < 2:
        raise ConfigError("correlate needs at least two report files")
    reports = [read_json_artifact(Path(p)) for p in report_paths]
    identity = {
        "dataset": reports[0]["dataset"],
        "orderings": reports[0]["orderings"],
        "train_seeds": reports[0].get("train_seeds"),
    }
    for path, report in zip(report_paths, reports):
        candidate_set = {
            "dataset": report["dataset"],
            "orderings": report["orderings"],
            "train_seeds": report.get("train_seeds"),
        }
        if candidate_set != identity:
            raise ConfigError(
                f"{path}: candidate set differs from {report_paths[0]}; "
                f"reports must cover identical train seeds and orderings"
            )
    names = [str(r["model_id"]) for r in reports]
    vectors = [
        [acc for row in report["accuracy_matrix"] for acc in row] for report in reports
    ]
    matrix = evaluation.correlation_matrix(vectors)
    combined = "+".join(sorted(r["config_hash"] for r in reports))
    rows = [
        [names[i], *[repr(v) for v in matrix[i]]] for i in range(len(names))
    ]
    write_csv_artifact(Path(out_path), ["model_id", *names], rows, combined)
    return {"models": names, "matrix": matrix, "out": str(out_path)}
