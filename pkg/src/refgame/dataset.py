"""Dataset generation and on-disk layout.

A dataset directory holds ``manifest.jsonl`` plus one 64x64 RGB PNG per
referent, named ``<game-id>_<referent-index>.png``. The manifest's first line
is a JSON header embedding the environment config, seed, and per-condition
counts; every following line is one game record. All paths are relative to
the dataset directory so two runs with the same seed produce byte-identical
trees wherever they live.

Every game is seeded by (dataset seed, game id), so any single game can be
regenerated in isolation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from . import language
from .errors import GenerationError
from .games import CONDITIONS, ContextCondition, Referent, ReferenceGame, sample_game
from .scenes import Color, EnvironmentConfig, SceneSpec, Shape
from .util import atomic_write_text, rng_from

MANIFEST_NAME = "manifest.jsonl"
FORMAT_TAG = "refgame-dataset v1"


@dataclass
class GameRecord:
    id: int
    condition: ContextCondition
    target_index: int
    referents: list[SceneSpec]
    ground_truth: language.Utterance
    image_files: list[str]


@dataclass
class DatasetManifest:
    env: EnvironmentConfig
    num_games: int
    seed: int
    counts: dict[str, int]
    records: list[GameRecord]


def image_name(game_id: int, referent_index: int) -> str:
    return f"{game_id:06d}_{referent_index}.png"


def _spec_to_json(spec: SceneSpec) -> dict:
    return {
        "color": spec.color.name.lower(),
        "shape": spec.shape.value,
        "size": spec.size,
        "center": list(spec.center),
        "aspect": spec.aspect,
        "salience_pixel": list(spec.salience_pixel) if spec.salience_pixel else None,
    }


def _spec_from_json(d: dict) -> SceneSpec:
    return SceneSpec(
        color=Color[d["color"].upper()],
        shape=Shape(d["shape"]),
        size=d["size"],
        center=tuple(d["center"]),
        aspect=d["aspect"],
        salience_pixel=tuple(d["salience_pixel"]) if d["salience_pixel"] else None,
    )


def _record_to_json(rec: GameRecord) -> str:
    return json.dumps({
        "id": rec.id,
        "condition": rec.condition.value,
        "target_index": rec.target_index,
        "referents": [_spec_to_json(s) for s in rec.referents],
        "ground_truth": list(language.words(rec.ground_truth)),
        "images": rec.image_files,
    })


def _record_from_json(line: str) -> GameRecord:
    d = json.loads(line)
    return GameRecord(
        id=d["id"],
        condition=ContextCondition(d["condition"]),
        target_index=d["target_index"],
        referents=[_spec_from_json(r) for r in d["referents"]],
        ground_truth=language.from_words(*d["ground_truth"]),
        image_files=d["images"],
    )


def save_image(path: Path, img: np.ndarray) -> None:
    try:
        PILImage.fromarray(img, "RGB").save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"failed writing image {path}: {exc}") from exc


def load_image(path: Path) -> np.ndarray:
    return np.asarray(PILImage.open(path).convert("RGB"), dtype=np.uint8)


def generate_dataset(env: EnvironmentConfig, num_games: int, seed: int,
                     out_dir: str | Path) -> DatasetManifest:
    """Sample, render, and write a condition-balanced dataset.

    Conditions cycle in a fixed order, so each gets num_games/4 games with
    any remainder spread round-robin. The whole tree is a pure function of
    (env, num_games, seed).
    """
    if num_games < 4:
        raise GenerationError("need at least 4 games (one per condition)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = replace(env, seed=seed)
    counts = {c.value: 0 for c in CONDITIONS}
    records = []
    for gid in range(num_games):
        condition = CONDITIONS[gid % len(CONDITIONS)]
        game = sample_game(rng_from(seed, gid), condition, env, game_id=gid)
        files = []
        for k, ref in enumerate(game.referents):
            name = image_name(gid, k)
            save_image(out / name, ref.image)
            files.append(name)
        counts[condition.value] += 1
        records.append(GameRecord(gid, condition, game.target_index, game.specs(),
                                  game.ground_truth, files))
    manifest = DatasetManifest(env=env, num_games=num_games, seed=seed,
                               counts=counts, records=records)
    header = json.dumps({
        "format": FORMAT_TAG,
        "environment": asdict(env),
        "num_games": num_games,
        "seed": seed,
        "counts": counts,
    })
    lines = [header] + [_record_to_json(r) for r in records]
    atomic_write_text(out / MANIFEST_NAME, "\n".join(lines) + "\n")
    return manifest


def load_manifest(dataset_dir: str | Path, check_files: bool = False) -> DatasetManifest:
    path = Path(dataset_dir) / MANIFEST_NAME
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != FORMAT_TAG:
            raise GenerationError(f"{path}: not a {FORMAT_TAG} manifest")
        records = [_record_from_json(line) for line in f if line.strip()]
    counts = header["counts"]
    if sum(counts.values()) != header["num_games"] or len(records) != header["num_games"]:
        raise GenerationError(f"{path}: per-condition counts do not sum to the total")
    if check_files:
        for rec in records:
            for name in rec.image_files:
                if not (Path(dataset_dir) / name).exists():
                    raise GenerationError(f"{path}: missing image file {name}")
    return DatasetManifest(
        env=EnvironmentConfig(**header["environment"]),
        num_games=header["num_games"],
        seed=header["seed"],
        counts=counts,
        records=records,
    )


def load_games(dataset_dir: str | Path, records: list[GameRecord],
               with_images: bool = True) -> list[ReferenceGame]:
    """Materialize games from manifest records, attaching image arrays."""
    base = Path(dataset_dir)
    games = []
    for rec in records:
        referents = []
        for spec, name in zip(rec.referents, rec.image_files):
            img = load_image(base / name) if with_images else None
            referents.append(Referent(spec, img))
        games.append(ReferenceGame(id=rec.id, referents=referents,
                                   target_index=rec.target_index,
                                   condition=rec.condition,
                                   ground_truth=rec.ground_truth))
    return games
