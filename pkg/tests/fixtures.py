"""Deterministic experiment fixtures shared by the CLI and acceptance tests.

The "direction" task is a designed mock experiment: the model's scoring rule
weights keyword occurrences by recency, so orderings that stack one label at
the end of the prompt drag minority-label queries toward the majority label.
Those orderings produce skewed prediction histograms AND lower evaluation
accuracy, while orderings with mixed tails stay balanced and accurate --
exactly the regime entropy-based selection is meant to exploit.

Run ``python3 -m fixtures`` from this directory to (re)build the committed
replay cache under tests/data/replay/.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import yaml

NEG_KW = ("bad", "awful")
POS_KW = ("good", "great")
FILLER = ("ride", "story", "scene", "night", "turn", "sound", "shape", "walk")

DATA_DIR = Path(__file__).parent / "data"
REPLAY_DIR = DATA_DIR / "replay"


def direction_rows() -> list[dict]:
    rng = random.Random(123)
    rows = []
    i = 0
    for label_name, kws in (("negative", NEG_KW), ("positive", POS_KW)):
        for j in range(12):
            strength = 1 + (j % 3)
            words = [rng.choice(kws) for _ in range(strength)]
            words += [rng.choice(FILLER) for _ in range(4 - min(3, strength))]
            rng.shuffle(words)
            rows.append({"id": str(i), "text": " ".join(words), "label": label_name})
            i += 1
    rng.shuffle(rows)
    return rows


def direction_corpus() -> list[str]:
    rng = random.Random(321)
    lines = []
    for k in range(12):
        label = k % 2
        kw = rng.choice(POS_KW if label else NEG_KW)
        words = [kw, rng.choice(FILLER), rng.choice(FILLER)]
        rng.shuffle(words)
        lines.append(f"input: {' '.join(words)} type: {'positive' if label else 'negative'}")
    return lines


def direction_config(
    dataset_path: str,
    output_dir: str,
    mode: str = "live",
    cache_dir: str | None = None,
    num_train_sets: int = 5,
    eval_subsample: int = 16,
    samples_per_generation: int = 2,
) -> dict:
    config: dict = {
        "dataset": {
            "path": dataset_path,
            "name": "direction",
            "label_names": ["negative", "positive"],
        },
        "template": {"file": "template.yaml"},
        "backend": {
            "kind": "mock",
            "mock": {
                "keywords": {"negative": list(NEG_KW), "positive": list(POS_KW)},
                "corpus": direction_corpus(),
                "recency_weight": 3.0,
                "noise_scale": 1e-6,
                "samples_per_generation": samples_per_generation,
                "model_id": "mock-direction",
            },
        },
        "run": {
            "shots": 4,
            "num_train_sets": num_train_sets,
            "max_permutations": 24,
            "top_k": 4,
            "eval_subsample": eval_subsample,
            "seed": 0,
        },
        "generation": {"temperature": 2.0, "max_new_tokens": 128, "block_ngram": 4},
        "mode": mode,
        "output_dir": output_dir,
    }
    if cache_dir is not None:
        config["cache_dir"] = cache_dir
    return config


TEMPLATE_YAML = {
    "name": "direction",
    "input_prefix": "input: ",
    "label_prefix": " type: ",
    "verbalizer": ["negative", "positive"],
}


def write_direction_fixture(
    root: Path,
    mode: str = "live",
    cache_dir: str | None = None,
    output_dir: str = "out",
    num_train_sets: int = 5,
    eval_subsample: int = 16,
    samples_per_generation: int = 2,
) -> Path:
    """Write dataset + template + config under ``root``; returns config path."""
    root.mkdir(parents=True, exist_ok=True)
    dataset_path = root / "dataset.jsonl"
    dataset_path.write_text(
        "\n".join(json.dumps(r) for r in direction_rows()) + "\n", encoding="utf-8"
    )
    (root / "template.yaml").write_text(
        yaml.safe_dump(TEMPLATE_YAML, sort_keys=True), encoding="utf-8"
    )
    config = direction_config(
        "dataset.jsonl",
        output_dir,
        mode,
        cache_dir,
        num_train_sets,
        eval_subsample,
        samples_per_generation,
    )
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    return config_path


REPLAY_SETS = 1
REPLAY_EVAL = 8
REPLAY_SPG = 1


def build_replay_fixture() -> None:
    """Record the committed replay cache for the direction task."""
    import shutil

    from orderprobe.config import load_config
    from orderprobe.pipeline import run_evaluate, run_select, run_sweep

    if REPLAY_DIR.exists():
        shutil.rmtree(REPLAY_DIR)
    config_path = write_direction_fixture(
        REPLAY_DIR,
        mode="record",
        cache_dir="cache",
        num_train_sets=REPLAY_SETS,
        eval_subsample=REPLAY_EVAL,
        samples_per_generation=REPLAY_SPG,
    )
    with_scratch = load_config(config_path, {"output_dir": str(REPLAY_DIR / "scratch")})
    run_select(with_scratch)
    run_evaluate(with_scratch)
    run_sweep(with_scratch)
    shutil.rmtree(REPLAY_DIR / "scratch")
    # committed config replays by default
    replay_config = direction_config(
        "dataset.jsonl", "out", "replay", "cache", REPLAY_SETS, REPLAY_EVAL, REPLAY_SPG
    )
    config_path.write_text(yaml.safe_dump(replay_config, sort_keys=True), encoding="utf-8")
    entries = len(list((REPLAY_DIR / "cache").glob("*.json")))
    print(f"recorded {entries} cache entries under {REPLAY_DIR}")


if __name__ == "__main__":
    build_replay_fixture()
