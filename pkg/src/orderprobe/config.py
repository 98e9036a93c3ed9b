"""Experiment configuration: YAML schema, validation, and backend wiring.

One YAML file describes a full experiment; the CLI can override single
values. Secrets never live in the file: the HTTP token is read from the
environment variable named by ``backend.token_env``. The config hash
covers only result-relevant fields (dataset, template, backend identity,
run/generation/scoring/report settings), so cache location, output
directory, and record/replay mode do not change it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backend import (
    Backend,
    CachedBackend,
    GenParams,
    HTTPBackend,
    MockBackend,
    MockModelConfig,
)
from .core import RunConfig
from .errors import ConfigError
from .templating import PromptTemplate, get_preset, load_template

MODES = ("live", "record", "replay")


def _require_keys(section: str, data: dict, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"config section {section!r}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True, slots=True)
class DatasetSpec:
    path: str
    format: str | None = None
    name: str | None = None
    label_names: tuple[str, ...] | None = None


@dataclass(frozen=True, slots=True)
class BackendSpec:
    kind: str = "mock"
    endpoint: str | None = None
    model_id: str | None = None
    context_window: int = 1024
    token_env: str = "ORDERPROBE_API_TOKEN"
    parallelism: int = 4
    mock: MockModelConfig | None = None


@dataclass(frozen=True, slots=True)
class ExperimentSpec:
    dataset: DatasetSpec
    template_preset: str | None
    template_file: str | None
    backend: BackendSpec
    run: RunConfig = field(default_factory=RunConfig)
    generation: GenParams = field(default_factory=GenParams)
    generations_per_candidate: int = 1
    use_raw_probabilities: bool = False
    population_std: bool = True
    mode: str = "live"
    cache_dir: str | None = None
    output_dir: str = "out"
    base_dir: Path = field(default_factory=Path)

    def resolve_path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


def _parse_dataset(data: dict) -> DatasetSpec:
    _require_keys("dataset", data, {"path", "format", "name", "label_names"})
    if "path" not in data:
        raise ConfigError("config section 'dataset' needs a 'path'")
    labels = data.get("label_names")
    return DatasetSpec(
        path=str(data["path"]),
        format=data.get("format"),
        name=data.get("name"),
        label_names=tuple(str(v) for v in labels) if labels is not None else None,
    )


def _parse_mock(data: dict) -> MockModelConfig:
    _require_keys(
        "backend.mock",
        data,
        {
            "keywords",
            "corpus",
            "model_id",
            "context_window",
            "samples_per_generation",
            "line_separator",
            "recency_weight",
            "noise_scale",
            "seed",
        },
    )
    keywords = data.get("keywords", {})
    if not isinstance(keywords, dict):
        raise ConfigError("backend.mock.keywords must map label strings to word lists")
    return MockModelConfig(
        keywords={str(k): tuple(str(w) for w in v) for k, v in keywords.items()},
        corpus=tuple(str(line) for line in data.get("corpus", [])),
        model_id=str(data.get("model_id", "mock-lm")),
        context_window=int(data.get("context_window", 8192)),
        samples_per_generation=int(data.get("samples_per_generation", 2)),
        line_separator=str(data.get("line_separator", "\n")),
        recency_weight=float(data.get("recency_weight", 0.0)),
        noise_scale=float(data.get("noise_scale", 1e-6)),
        seed=int(data.get("seed", 0)),
    )


def _parse_backend(data: dict) -> BackendSpec:
    _require_keys(
        "backend",
        data,
        {"kind", "endpoint", "model_id", "context_window", "token_env", "parallelism", "mock"},
    )
    kind = str(data.get("kind", "mock"))
    if kind not in ("mock", "http"):
        raise ConfigError(f"backend.kind must be 'mock' or 'http', got {kind!r}")
    mock = _parse_mock(data["mock"]) if "mock" in data else None
    if kind == "http" and not data.get("endpoint"):
        raise ConfigError("http backend needs backend.endpoint")
    if kind == "http" and not data.get("model_id"):
        raise ConfigError("http backend needs backend.model_id")
    return BackendSpec(
        kind=kind,
        endpoint=data.get("endpoint"),
        model_id=data.get("model_id"),
        context_window=int(data.get("context_window", 1024)),
        token_env=str(data.get("token_env", "ORDERPROBE_API_TOKEN")),
        parallelism=int(data.get("parallelism", 4)),
        mock=mock,
    )


def _parse_run(data: dict) -> RunConfig:
    _require_keys(
        "run",
        data,
        {
            "shots",
            "num_train_sets",
            "max_permutations",
            "top_k",
            "eval_subsample",
            "seed",
            "balanced",
        },
    )
    defaults = RunConfig()
    try:
        return RunConfig(
            shots=int(data.get("shots", defaults.shots)),
            num_train_sets=int(data.get("num_train_sets", defaults.num_train_sets)),
            max_permutations=int(data.get("max_permutations", defaults.max_permutations)),
            top_k=int(data.get("top_k", defaults.top_k)),
            eval_subsample=int(data.get("eval_subsample", defaults.eval_subsample)),
            seed=int(data.get("seed", defaults.seed)),
            balanced=bool(data.get("balanced", defaults.balanced)),
        )
    except Exception as exc:
        raise ConfigError(f"invalid run settings: {exc}") from exc


def _parse_generation(data: dict) -> tuple[GenParams, int]:
    _require_keys(
        "generation",
        data,
        {
            "temperature",
            "max_new_tokens",
            "block_ngram",
            "stop_sequences",
            "seed",
            "generations_per_candidate",
        },
    )
    defaults = GenParams()
    try:
        params = GenParams(
            temperature=float(data.get("temperature", defaults.temperature)),
            max_new_tokens=int(data.get("max_new_tokens", defaults.max_new_tokens)),
            block_ngram=int(data.get("block_ngram", defaults.block_ngram)),
            stop_sequences=tuple(str(s) for s in data.get("stop_sequences", ())),
            seed=None if data.get("seed") is None else int(data["seed"]),
        )
    except Exception as exc:
        raise ConfigError(f"invalid generation settings: {exc}") from exc
    return params, int(data.get("generations_per_candidate", 1))


def parse_config(data: dict, base_dir: Path) -> ExperimentSpec:
    _require_keys(
        "<top level>",
        data,
        {
            "dataset",
            "template",
            "backend",
            "run",
            "generation",
            "scoring",
            "report",
            "mode",
            "cache_dir",
            "output_dir",
        },
    )
    if "dataset" not in data:
        raise ConfigError("config needs a 'dataset' section")
    tpl_section = data.get("template", {})
    _require_keys("template", tpl_section, {"preset", "file"})
    preset = tpl_section.get("preset")
    tpl_file = tpl_section.get("file")
    if (preset is None) == (tpl_file is None):
        raise ConfigError("template needs exactly one of 'preset' or 'file'")

    scoring_section = data.get("scoring", {})
    _require_keys("scoring", scoring_section, {"use_raw_probabilities"})
    report_section = data.get("report", {})
    _require_keys("report", report_section, {"population_std"})

    mode = str(data.get("mode", "live"))
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    cache_dir = data.get("cache_dir")
    if mode in ("record", "replay") and not cache_dir:
        raise ConfigError(f"mode {mode!r} needs a cache_dir")

    generation, per_candidate = _parse_generation(data.get("generation", {}))
    spec = ExperimentSpec(
        dataset=_parse_dataset(data["dataset"]),
        template_preset=preset,
        template_file=tpl_file,
        backend=_parse_backend(data.get("backend", {})),
        run=_parse_run(data.get("run", {})),
        generation=generation,
        generations_per_candidate=per_candidate,
        use_raw_probabilities=bool(scoring_section.get("use_raw_probabilities", False)),
        population_std=bool(report_section.get("population_std", True)),
        mode=mode,
        cache_dir=str(cache_dir) if cache_dir else None,
        output_dir=str(data.get("output_dir", "out")),
        base_dir=base_dir,
    )
    if spec.mode == "replay" and not spec.resolve_path(spec.cache_dir or "").is_dir():
        raise ConfigError(f"replay mode needs an existing cache at {spec.cache_dir!r}")
    return spec


def _apply_overrides(data: dict, overrides: dict[str, object]) -> dict:
    for dotted, value in overrides.items():
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {dotted!r}: {part!r} is not a section")
        node[parts[-1]] = value
    return data


def load_config(
    path: str | Path, overrides: dict[str, object] | None = None
) -> ExperimentSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    if overrides:
        data = _apply_overrides(data, overrides)
    return parse_config(data, base_dir=path.parent)


def resolve_template(spec: ExperimentSpec) -> PromptTemplate:
    if spec.template_preset is not None:
        return get_preset(spec.template_preset)
    assert spec.template_file is not None
    return load_template(spec.resolve_path(spec.template_file))


def config_hash(spec: ExperimentSpec) -> str:
    """Hash of the result-relevant configuration."""
    tpl = resolve_template(spec)
    material = {
        "dataset": {
            "path": spec.dataset.path,
            "format": spec.dataset.format,
            "name": spec.dataset.name,
            "label_names": list(spec.dataset.label_names or ()),
        },
        "template": {
            "name": tpl.name,
            "input_prefix": tpl.input_prefix,
            "label_prefix": tpl.label_prefix,
            "verbalizer": list(tpl.verbalizer),
            "sample_separator": tpl.sample_separator,
            "end_of_sample_marker": tpl.end_of_sample_marker,
            "pair_prefixes": list(tpl.pair_prefixes or ()),
        },
        "backend": {
            "kind": spec.backend.kind,
            "endpoint": spec.backend.endpoint,
            "model_id": spec.backend.model_id,
            "context_window": spec.backend.context_window,
            "mock": None
            if spec.backend.mock is None
            else {
                "keywords": {
                    k: list(v) for k, v in sorted(spec.backend.mock.keywords.items())
                },
                "corpus": list(spec.backend.mock.corpus),
                "model_id": spec.backend.mock.model_id,
                "context_window": spec.backend.mock.context_window,
                "samples_per_generation": spec.backend.mock.samples_per_generation,
                "line_separator": spec.backend.mock.line_separator,
                "recency_weight": spec.backend.mock.recency_weight,
                "noise_scale": spec.backend.mock.noise_scale,
                "seed": spec.backend.mock.seed,
            },
        },
        "run": {
            "shots": spec.run.shots,
            "num_train_sets": spec.run.num_train_sets,
            "max_permutations": spec.run.max_permutations,
            "top_k": spec.run.top_k,
            "eval_subsample": spec.run.eval_subsample,
            "seed": spec.run.seed,
            "balanced": spec.run.balanced,
        },
        "generation": {
            "temperature": spec.generation.temperature,
            "max_new_tokens": spec.generation.max_new_tokens,
            "block_ngram": spec.generation.block_ngram,
            "stop_sequences": list(spec.generation.stop_sequences),
            "seed": spec.generation.seed,
            "generations_per_candidate": spec.generations_per_candidate,
        },
        "scoring": {"use_raw_probabilities": spec.use_raw_probabilities},
        "report": {"population_std": spec.population_std},
    }
    canonical = json.dumps(material, sort_keys=True, ensure_ascii=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_backend(spec: ExperimentSpec) -> Backend:
    """Construct the configured backend, wrapped in a cache when asked."""
    inner: Backend | None
    if spec.mode == "replay":
        inner = None
    elif spec.backend.kind == "mock":
        if spec.backend.mock is None:
            raise ConfigError("mock backend needs a backend.mock section")
        inner = MockBackend(spec.backend.mock, parallelism=spec.backend.parallelism)
    else:
        assert spec.backend.endpoint is not None and spec.backend.model_id is not None
        inner = HTTPBackend(
            base_url=spec.backend.endpoint,
            model_id=spec.backend.model_id,
            context_window=spec.backend.context_window,
            api_token=os.environ.get(spec.backend.token_env),
            parallelism=spec.backend.parallelism,
        )
    if spec.mode == "live":
        assert inner is not None
        return inner
    assert spec.cache_dir is not None
    return CachedBackend(inner, spec.resolve_path(spec.cache_dir), mode=spec.mode)
