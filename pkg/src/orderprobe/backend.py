"""Language-model backends: scoring and generation, live or replayed.

Three interchangeable implementations sit behind one small interface:

* :class:`HTTPBackend` talks to an OpenAI-compatible completions endpoint,
  scoring label continuations via echo+logprobs and generating with
  sampling parameters.
* :class:`MockBackend` is a fully deterministic stand-in whose scoring rule
  (keyword occurrence counts, optionally recency-weighted, plus tiny hash
  noise) and corpus-driven generation are simple enough to recompute by
  hand in tests.
* :class:`CachedBackend` wraps either with a content-addressed on-disk
  cache supporting record and replay modes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence, TypeVar

import httpx

from .errors import BackendError, ContextOverflowError, FixtureIncompleteError
from .seeding import randbelow, rng_for, stable_unit_float

logger = logging.getLogger(__name__)

T = TypeVar("T")
U = TypeVar("U")


@dataclass(frozen=True, slots=True)
class GenParams:
    """Free-form generation controls (defaults follow the probing protocol)."""

    temperature: float = 2.0
    max_new_tokens: int = 128
    block_ngram: int = 4
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise BackendError("temperature must be > 0")
        if self.max_new_tokens < 1:
            raise BackendError("max_new_tokens must be >= 1")
        if self.block_ngram < 0:
            raise BackendError("block_ngram must be >= 0 (0 disables blocking)")


def softmax(scores: Sequence[float]) -> tuple[float, ...]:
    """Numerically stable softmax, written as plain loops so independent
    re-computations can match it bit for bit."""
    best = scores[0]
    for s in scores[1:]:
        if s > best:
            best = s
    exps = [math.exp(s - best) for s in scores]
    total = sum(exps)
    return tuple(e / total for e in exps)


@dataclass(frozen=True, slots=True)
class LabelQueryResult:
    """Per-label continuation scores and the probability vector over them."""

    scores: tuple[float, ...]
    normalized: tuple[float, ...]

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> LabelQueryResult:
        if not scores:
            raise BackendError("label query needs at least one continuation")
        return cls(scores=tuple(scores), normalized=softmax(scores))


@dataclass(frozen=True, slots=True)
class BackendInfo:
    model_id: str
    context_window: int

    def __post_init__(self) -> None:
        if self.context_window <= 0:
            raise BackendError("context_window must be positive")


class Backend(Protocol):
    """Label-probability queries plus free-form generation."""

    parallelism: int

    def info(self) -> BackendInfo: ...

    def label_distribution(
        self, context: str, continuations: Sequence[str]
    ) -> LabelQueryResult: ...

    def generate(self, context: str, params: GenParams) -> str: ...


def run_parallel(
    fn: Callable[[T], U], items: Sequence[T], parallelism: int
) -> list[U]:
    """Apply ``fn`` to every item, results in item order regardless of
    completion order (results are keyed by position)."""
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Mock backend


@dataclass(frozen=True)
class MockModelConfig:
    """Deterministic model definition used for tests and offline runs.

    Scoring: the score of continuation ``v`` is the number of occurrences
    of its keywords in the context, each occurrence weighted by
    ``1 + recency_weight * (end_position / len(context))``, plus
    ``noise_scale`` times a stable hash of (context, continuation). With
    ``recency_weight == 0`` this is the plain keyword-overlap count.

    Generation: draws ``samples_per_generation`` lines from ``corpus``
    (seeded by context and ``GenParams.seed``), joins them with
    ``line_separator``, then walks the whitespace tokens applying n-gram
    blocking and the token cap, and finally truncates at the earliest stop
    sequence.
    """

    keywords: dict[str, tuple[str, ...]]
    corpus: tuple[str, ...] = ()
    model_id: str = "mock-lm"
    context_window: int = 8192
    samples_per_generation: int = 2
    line_separator: str = "\n"
    recency_weight: float = 0.0
    noise_scale: float = 1e-6
    seed: int = 0


class MockBackend:
    """Pure-function backend; also counts calls for cache assertions."""

    def __init__(self, config: MockModelConfig, parallelism: int = 1) -> None:
        self.config = config
        self.parallelism = parallelism
        self.label_calls = 0
        self.generate_calls = 0
        self._lock = threading.Lock()

    def info(self) -> BackendInfo:
        return BackendInfo(
            model_id=self.config.model_id, context_window=self.config.context_window
        )

    def _count_tokens(self, text: str) -> int:
        return len(text.split())

    def _check_window(self, context: str, extra_tokens: int) -> None:
        used = self._count_tokens(context) + extra_tokens
        if used > self.config.context_window:
            raise ContextOverflowError(
                f"mock context window exceeded: {used} > {self.config.context_window} tokens"
            )

    def _keyword_score(self, context: str, continuation: str) -> float:
        cfg = self.config
        score = 0.0
        length = max(len(context), 1)
        for kw in cfg.keywords.get(continuation, ()):
            pos = context.find(kw)
            while pos >= 0:
                end = pos + len(kw)
                score += 1.0 + cfg.recency_weight * (end / length)
                pos = context.find(kw, end)
        if cfg.noise_scale:
            score += cfg.noise_scale * stable_unit_float(
                cfg.model_id, context, continuation
            )
        return score

    def label_distribution(
        self, context: str, continuations: Sequence[str]
    ) -> LabelQueryResult:
        with self._lock:
            self.label_calls += 1
        longest = max((self._count_tokens(c) for c in continuations), default=0)
        self._check_window(context, longest)
        scores = [self._keyword_score(context, c) for c in continuations]
        return LabelQueryResult.from_scores(scores)

    def generate(self, context: str, params: GenParams) -> str:
        with self._lock:
            self.generate_calls += 1
        self._check_window(context, params.max_new_tokens)
        cfg = self.config
        if not cfg.corpus:
            return ""
        mix = stable_unit_float(
            cfg.model_id, str(cfg.seed), str(params.seed), context
        )
        rng = rng_for(int(mix * 2**53), "mock_generate")
        lines = [
            cfg.corpus[randbelow(rng, len(cfg.corpus))]
            for _ in range(cfg.samples_per_generation)
        ]
        text = cfg.line_separator.join(lines)
        text = _apply_token_limits(text, params)
        return _apply_stop_sequences(text, params.stop_sequences)


def _apply_token_limits(text: str, params: GenParams) -> str:
    """Enforce the token cap and n-gram blocking over whitespace tokens."""
    pieces = re.split(r"(\s+)", text)
    out: list[str] = []
    words: list[str] = []
    seen: set[tuple[str, ...]] = set()
    n = params.block_ngram
    pending_sep = ""
    for piece in pieces:
        if not piece:
            continue
        if piece.isspace():
            pending_sep = pending_sep + piece if out or words else ""
            continue
        if len(words) >= params.max_new_tokens:
            break
        if n > 0 and len(words) >= n - 1:
            gram = tuple(words[-(n - 1) :] + [piece]) if n > 1 else (piece,)
            if gram in seen:
                pending_sep = ""  # decoder would pick another token; mock drops it
                continue
            seen.add(gram)
        if words:
            out.append(pending_sep or " ")
        pending_sep = ""
        out.append(piece)
        words.append(piece)
    return "".join(out)


def _apply_stop_sequences(text: str, stops: Sequence[str]) -> str:
    cut = len(text)
    for stop in stops:
        idx = text.find(stop)
        if idx >= 0:
            cut = min(cut, idx)
    return text[:cut]


# ---------------------------------------------------------------------------
# HTTP backend (OpenAI-compatible completions endpoint)


class HTTPBackend:
    """Client for ``POST {base_url}/completions``.

    Scoring sends the context plus one continuation with ``echo`` and
    ``logprobs`` enabled and ``max_tokens=0``, then sums the token
    log-probabilities whose text offsets fall inside the continuation.
    Generation passes sampling parameters through; ``block_ngram`` is
    forwarded as ``no_repeat_ngram_size`` for servers that support it.
    Transient failures (network errors, HTTP 5xx) are retried with
    exponential backoff; HTTP 4xx is not retried.
    """

    def __init__(
        self,
        base_url: str,
        model_id: str,
        context_window: int = 1024,
        api_token: str | None = None,
        timeout: float = 120.0,
        parallelism: int = 4,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        chars_per_token: float = 4.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.context_window = context_window
        self.parallelism = parallelism
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.chars_per_token = chars_per_token
        headers = {"Content-Type": "application/json"}
        if api_token:
            headers["Authorization"] = f"Bearer {api_token}"
        self._client = httpx.Client(
            headers=headers, timeout=timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def info(self) -> BackendInfo:
        return BackendInfo(model_id=self.model_id, context_window=self.context_window)

    def _count_tokens(self, text: str) -> int:
        return int(math.ceil(len(text) / self.chars_per_token))

    def _check_window(self, context: str, extra_tokens: int) -> None:
        used = self._count_tokens(context) + extra_tokens
        if used > self.context_window:
            raise ContextOverflowError(
                f"context window exceeded: ~{used} > {self.context_window} tokens "
                f"({self.model_id})"
            )

    def _post(self, payload: dict) -> dict:
        url = f"{self.base_url}/completions"
        last_error = ""
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"network error: {exc}"
            else:
                if response.status_code < 400:
                    return response.json()
                if response.status_code < 500:
                    raise BackendError(
                        f"backend rejected request (HTTP {response.status_code}): "
                        f"{response.text[:500]}"
                    )
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
            if attempt < self.max_attempts:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
        raise BackendError(
            f"backend unavailable after {self.max_attempts} attempts ({last_error})"
        )

    def _continuation_logprob(self, context: str, continuation: str) -> float:
        body = {
            "model": self.model_id,
            "prompt": context + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
            "temperature": 0.0,
        }
        data = self._post(body)
        try:
            lp = data["choices"][0]["logprobs"]
            token_logprobs = lp["token_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"malformed logprobs response from {self.base_url}: {exc}"
            ) from exc
        total = 0.0
        boundary = len(context)
        for offset, logprob in zip(offsets, token_logprobs):
            if offset >= boundary and logprob is not None:
                total += logprob
        return total

    def label_distribution(
        self, context: str, continuations: Sequence[str]
    ) -> LabelQueryResult:
        longest = max((self._count_tokens(c) for c in continuations), default=0)
        self._check_window(context, longest)
        scores = [self._continuation_logprob(context, c) for c in continuations]
        return LabelQueryResult.from_scores(scores)

    def generate(self, context: str, params: GenParams) -> str:
        self._check_window(context, params.max_new_tokens)
        body: dict = {
            "model": self.model_id,
            "prompt": context,
            "max_tokens": params.max_new_tokens,
            "temperature": params.temperature,
        }
        if params.stop_sequences:
            body["stop"] = list(params.stop_sequences)
        if params.block_ngram > 0:
            body["no_repeat_ngram_size"] = params.block_ngram
        data = self._post(body)
        try:
            return data["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"malformed completion response from {self.base_url}: {exc}"
            ) from exc


# ---------------------------------------------------------------------------
# Content-addressed cache


def _canonical(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def cache_key(material: dict) -> str:
    return hashlib.sha256(_canonical(material).encode("utf-8")).hexdigest()


class CachedBackend:
    """Record/replay wrapper around another backend.

    ``record`` mode computes misses with the inner backend and stores them;
    ``replay`` mode serves hits only and fails on misses, so runs against a
    committed cache are fully offline and byte-deterministic. Entries live
    one file per key; writes go through a temp file plus atomic rename.
    """

    INFO_FILE = "backend_info.json"

    def __init__(
        self,
        inner: Backend | None,
        cache_dir: str | Path,
        mode: str = "record",
    ) -> None:
        if mode not in ("record", "replay"):
            raise BackendError(f"unknown cache mode {mode!r} (use record or replay)")
        if mode == "record" and inner is None:
            raise BackendError("record mode needs an inner backend")
        self.inner = inner
        self.mode = mode
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.parallelism = inner.parallelism if inner is not None else 1
        self._info = self._resolve_info()

    def _resolve_info(self) -> BackendInfo:
        info_path = self.cache_dir / self.INFO_FILE
        if self.inner is not None:
            info = self.inner.info()
            if self.mode == "record" and not info_path.exists():
                self._atomic_write(
                    info_path,
                    {"model_id": info.model_id, "context_window": info.context_window},
                )
            return info
        if not info_path.exists():
            raise FixtureIncompleteError(
                f"replay cache {self.cache_dir} has no {self.INFO_FILE}"
            )
        data = json.loads(info_path.read_text(encoding="utf-8"))
        return BackendInfo(
            model_id=data["model_id"], context_window=data["context_window"]
        )

    def info(self) -> BackendInfo:
        return self._info

    def _entry_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _atomic_write(self, path: Path, body: dict) -> None:
        tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
        tmp.write_text(
            json.dumps(body, sort_keys=True, ensure_ascii=True, indent=1) + "\n",
            encoding="utf-8",
        )
        os.replace(tmp, path)

    def _load(self, key: str) -> dict | None:
        path = self._entry_path(key)
        if not path.exists():
            return None
        try:
            body = json.loads(path.read_text(encoding="utf-8"))
            return body["response"]
        except (json.JSONDecodeError, KeyError, OSError) as exc:
            logger.warning("corrupt cache entry %s treated as miss: %s", path, exc)
            return None

    def _store(self, key: str, material: dict, response: dict) -> None:
        body = {
            "request": material,
            "response": response,
            "model_id": self._info.model_id,
            "timestamp": time.time(),
        }
        self._atomic_write(self._entry_path(key), body)

    def _resolve(self, material: dict, compute: Callable[[], dict]) -> dict:
        key = cache_key(material)
        cached = self._load(key)
        if cached is not None:
            return cached
        if self.mode == "replay":
            raise FixtureIncompleteError(
                f"replay cache {self.cache_dir} is missing entry {key} "
                f"for op {material.get('op')}"
            )
        response = compute()
        self._store(key, material, response)
        return response

    def label_distribution(
        self, context: str, continuations: Sequence[str]
    ) -> LabelQueryResult:
        material = {
            "op": "label_distribution",
            "model_id": self._info.model_id,
            "context": context,
            "continuations": list(continuations),
        }

        def compute() -> dict:
            assert self.inner is not None
            result = self.inner.label_distribution(context, continuations)
            return {"scores": list(result.scores), "normalized": list(result.normalized)}

        body = self._resolve(material, compute)
        return LabelQueryResult(
            scores=tuple(body["scores"]), normalized=tuple(body["normalized"])
        )

    def generate(self, context: str, params: GenParams) -> str:
        material = {
            "op": "generate",
            "model_id": self._info.model_id,
            "context": context,
            "params": asdict(params),
        }

        def compute() -> dict:
            assert self.inner is not None
            return {"text": self.inner.generate(context, params)}

        return self._resolve(material, compute)["text"]
