"""The learned semantic function and its training procedure.

A semantic model scores how well an utterance applies to an image:
sigmoid of the dot product between a CNN image embedding and a GRU utterance
embedding, both d-dimensional. Each reference game contributes one positive
example (ground-truth utterance with the target) and two negatives (the same
utterance with each distractor).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import language
from .errors import TrainingDiverged
from .games import ReferenceGame
from .nn import (
    AdamState,
    EncoderConfig,
    Tensor,
    adam_update,
    bce_loss,
    collect_grads,
    image_encoder_forward,
    init_image_encoder,
    init_utterance_encoder,
    load_params,
    no_grad,
    save_params,
    utterance_encoder_forward,
    zero_grads,
)
from .util import rng_from

_SPLIT_STREAM = 101
_SHUFFLE_STREAM = 102
_INIT_STREAM = 100


@dataclass
class TrainingHyperparams:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size) <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch size and learning rate must be positive")
        if not 0.0 < self.validation_fraction < 0.5:
            raise ValueError("validation fraction must lie in (0, 0.5)")


@dataclass
class SemanticModel:
    params: dict[str, Tensor]
    config: EncoderConfig
    seed: int
    val_loss: float | None = None


@dataclass
class Ensemble:
    members: list[SemanticModel]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def new_semantic_model(config: EncoderConfig, seed: int) -> SemanticModel:
    rng = rng_from(seed, _INIT_STREAM)
    params = init_image_encoder(config, rng)
    params.update(init_utterance_encoder(config, len(language.VOCAB), rng))
    return SemanticModel(params=params, config=config, seed=seed)


def images_to_float(images: np.ndarray) -> np.ndarray:
    """uint8 (..., H, W, 3) -> float64 in [0, 1]."""
    return np.asarray(images, dtype=np.float64) / 255.0


def _pad_tokens(utterances: list[language.Utterance], width: int = 2
                ) -> tuple[np.ndarray, np.ndarray]:
    n = len(utterances)
    tokens = np.zeros((n, width), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    for i, u in enumerate(utterances):
        lengths[i] = len(u)
        tokens[i, :len(u)] = u
    return tokens, lengths


def encode_images(model: SemanticModel, images: np.ndarray,
                  batch: int = 256) -> np.ndarray:
    """(N, H, W, 3) images -> (N, d) embeddings, outside the autodiff graph."""
    out = []
    with no_grad():
        for start in range(0, len(images), batch):
            x = Tensor(images_to_float(images[start:start + batch]))
            out.append(image_encoder_forward(model.params, x, model.config).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.config.embed_dim))


def encode_utterances(model: SemanticModel,
                      utterances: list[language.Utterance]) -> np.ndarray:
    """List of token tuples -> (K, d) embeddings."""
    width = max(len(u) for u in utterances)
    tokens, lengths = _pad_tokens(utterances, width)
    with no_grad():
        return utterance_encoder_forward(model.params, tokens, lengths,
                                         model.config).data


def _sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def semantic_value(model: SemanticModel, utterance: language.Utterance,
                   image: np.ndarray) -> float:
    """P(utterance applies to image) in (0, 1)."""
    e_img = encode_images(model, np.asarray(image)[None])
    e_utt = encode_utterances(model, [utterance])
    return float(_sigmoid(e_img[0] @ e_utt[0]))


def semantic_values_matrix(model: SemanticModel,
                           utterances: list[language.Utterance],
                           images: np.ndarray,
                           image_embeddings: np.ndarray | None = None) -> np.ndarray:
    """(n_images, n_utterances) matrix of semantic values."""
    e_img = encode_images(model, images) if image_embeddings is None else image_embeddings
    e_utt = encode_utterances(model, utterances)
    return _sigmoid(e_img @ e_utt.T)


def ensemble_value(ensemble: Ensemble, utterance: language.Utterance,
                   image: np.ndarray) -> float:
    """Mean of the member semantic values."""
    return float(np.mean([semantic_value(m, utterance, image)
                          for m in ensemble.members]))


def make_training_examples(game: ReferenceGame
                           ) -> list[tuple[language.Utterance, np.ndarray, int]]:
    """Pair the ground-truth utterance with all three referents: label 1 for
    the target, 0 for each distractor."""
    out = []
    for i, ref in enumerate(game.referents):
        out.append((game.ground_truth, ref.image, int(i == game.target_index)))
    return out


def split_validation(games: list[ReferenceGame], fraction: float,
                     seed: int) -> tuple[list[ReferenceGame], list[ReferenceGame]]:
    """Hold out floor(fraction * N) whole games, split before example
    extraction so a game's positive and negatives stay on one side."""
    n_val = int(np.floor(fraction * len(games)))
    perm = rng_from(seed, _SPLIT_STREAM).permutation(len(games))
    val_idx = set(perm[:n_val].tolist())
    train = [g for i, g in enumerate(games) if i not in val_idx]
    val = [g for i, g in enumerate(games) if i in val_idx]
    return train, val


def _example_arrays(games: list[ReferenceGame]
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    examples = [ex for g in games for ex in make_training_examples(g)]
    tokens, lengths = _pad_tokens([ex[0] for ex in examples])
    images = np.stack([ex[1] for ex in examples])
    labels = np.array([ex[2] for ex in examples], dtype=np.float64)
    return tokens, lengths, images, labels


def _batch_loss(model: SemanticModel, tokens: np.ndarray, lengths: np.ndarray,
                images: np.ndarray, labels: np.ndarray) -> Tensor:
    x = Tensor(images_to_float(images))
    e_img = image_encoder_forward(model.params, x, model.config)
    e_utt = utterance_encoder_forward(model.params, tokens, lengths, model.config)
    p = (e_img * e_utt).sum(axis=1).sigmoid()
    return bce_loss(p, labels)


def _mean_loss(model: SemanticModel, arrays, batch: int = 256) -> float:
    tokens, lengths, images, labels = arrays
    total, n = 0.0, len(labels)
    with no_grad():
        for s in range(0, n, batch):
            loss = _batch_loss(model, tokens[s:s + batch], lengths[s:s + batch],
                               images[s:s + batch], labels[s:s + batch])
            total += float(loss.data) * len(labels[s:s + batch])
    return total / n


def train_semantic_function(games: list[ReferenceGame], hyper: TrainingHyperparams,
                            config: EncoderConfig
                            ) -> tuple[SemanticModel, list[EpochLog]]:
    """Train on BCE over shuffled example minibatches; return the epoch
    snapshot with the lowest validation loss."""
    if not games:
        raise ValueError("empty training subset")
    from .util import tune_allocator
    tune_allocator()
    train_games, val_games = split_validation(games, hyper.validation_fraction,
                                              hyper.seed)
    train_arrays = _example_arrays(train_games)
    val_arrays = _example_arrays(val_games) if val_games else train_arrays

    model = new_semantic_model(config, hyper.seed)
    state = AdamState(learning_rate=hyper.learning_rate)
    shuffle_rng = rng_from(hyper.seed, _SHUFFLE_STREAM)
    tokens, lengths, images, labels = train_arrays
    n = len(labels)

    best: tuple[float, dict[str, Tensor]] | None = None
    logs: list[EpochLog] = []
    for epoch in range(1, hyper.epochs + 1):
        perm = shuffle_rng.permutation(n)
        epoch_total = 0.0
        for bi, start in enumerate(range(0, n, hyper.batch_size)):
            idx = perm[start:start + hyper.batch_size]
            zero_grads(model.params)
            loss = _batch_loss(model, tokens[idx], lengths[idx], images[idx],
                               labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, bi, value)
            loss.backward()
            adam_update(model.params, collect_grads(model.params), state)
            epoch_total += value * len(idx)
        val_loss = _mean_loss(model, val_arrays)
        logs.append(EpochLog(epoch, epoch_total / n, val_loss))
        if best is None or val_loss < best[0]:
            best = (val_loss, {k: Tensor(v.data.copy(), requires_grad=True)
                               for k, v in model.params.items()})
    assert best is not None
    model.params = best[1]
    model.val_loss = best[0]
    return model, logs


def save_model(path: str | Path, model: SemanticModel, role: str) -> None:
    meta = {
        "role": role,
        "kind": "semantic",
        "seed": model.seed,
        "val_metric": model.val_loss,
        "config": {
            "image_side": model.config.image_side,
            "conv_channels": list(model.config.conv_channels),
            "embed_dim": model.config.embed_dim,
            "token_embed_dim": model.config.token_embed_dim,
        },
    }
    save_params(path, model.params, meta)


def load_model(path: str | Path) -> tuple[SemanticModel, dict]:
    params, meta = load_params(path)
    cfg = meta["config"]
    config = EncoderConfig(image_side=cfg["image_side"],
                           conv_channels=tuple(cfg["conv_channels"]),
                           embed_dim=cfg["embed_dim"],
                           token_embed_dim=cfg["token_embed_dim"])
    model = SemanticModel(params=params, config=config, seed=meta["seed"],
                          val_loss=meta["val_metric"])
    return model, meta


def write_training_log(path: str | Path, logs: list[EpochLog]) -> None:
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{l.epoch},{l.train_loss!r},{l.val_loss!r}" for l in logs]
    from .util import atomic_write_text
    atomic_write_text(path, "\n".join(lines) + "\n")
