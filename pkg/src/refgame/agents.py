"""Speaker and listener agents.

The evaluation listener picks referents with probability proportional to
exp(semantic value). The pragmatic speaker scores every utterance in the
35-member utterance space by how well its internal ensemble listener would
recover the target, minus a small length cost, and emits the argmax. The
literal speaker is an encoder-decoder network mapping (three referent
images, target index) straight to tokens.

Semantics objects are interchangeable: trained models score images, the
truth-conditional table scores scene specs. Both expose ``value`` for one
(utterance, referent) pair and ``values_matrix`` for a batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import language
from .errors import TrainingDiverged
from .games import ReferenceGame, Referent
from .nn import (
    AdamState,
    EncoderConfig,
    Tensor,
    adam_update,
    collect_grads,
    concat,
    cross_entropy_batch,
    decoder_init_state,
    decoder_step,
    image_encoder_forward,
    init_decoder,
    init_image_encoder,
    load_params,
    no_grad,
    save_params,
    zero_grads,
)
from .scenes import SceneSpec
from .semantics import (
    Ensemble,
    EpochLog,
    SemanticModel,
    TrainingHyperparams,
    _sigmoid,
    encode_images,
    encode_utterances,
    images_to_float,
    split_validation,
)
from .util import rng_from, tune_allocator

MAX_DECODE_STEPS = 3


class TabularSemantics:
    """Truth-conditional 0/1 semantics over scene specs (test oracle side)."""

    def from_referent(self, ref: Referent) -> SceneSpec:
        return ref.spec

    def value(self, utterance: language.Utterance, referent: SceneSpec) -> float:
        return 1.0 if language.utterance_true_of(utterance, referent) else 0.0

    def values_matrix(self, utterances: list[language.Utterance],
                      referents: list[SceneSpec]) -> np.ndarray:
        return np.array([[self.value(u, r) for u in utterances] for r in referents])


class ModelSemantics:
    """One trained semantic model scoring images; utterance embeddings are
    cached since the utterance space is tiny and game-independent."""

    def __init__(self, model: SemanticModel):
        self.model = model
        self._utt_cache: dict[language.Utterance, np.ndarray] = {}

    def from_referent(self, ref: Referent) -> np.ndarray:
        return ref.image

    def _utt_embeddings(self, utterances: list[language.Utterance]) -> np.ndarray:
        missing = [u for u in utterances if u not in self._utt_cache]
        if missing:
            embs = encode_utterances(self.model, missing)
            for u, e in zip(missing, embs):
                self._utt_cache[u] = e
        return np.stack([self._utt_cache[u] for u in utterances])

    def value(self, utterance: language.Utterance, referent: np.ndarray) -> float:
        return float(self.values_matrix([utterance], [referent])[0, 0])

    def values_matrix(self, utterances: list[language.Utterance],
                      referents, image_embeddings: np.ndarray | None = None
                      ) -> np.ndarray:
        if image_embeddings is None:
            image_embeddings = encode_images(self.model, np.stack(referents))
        return _sigmoid(image_embeddings @ self._utt_embeddings(utterances).T)


class EnsembleSemantics:
    """Mean of the member model semantics (the pragmatic speaker's internal
    listener uses this)."""

    def __init__(self, ensemble: Ensemble):
        self.members = [ModelSemantics(m) for m in ensemble.members]

    def from_referent(self, ref: Referent) -> np.ndarray:
        return ref.image

    def value(self, utterance: language.Utterance, referent) -> float:
        return float(np.mean([m.value(utterance, referent) for m in self.members]))

    def values_matrix(self, utterances: list[language.Utterance],
                      referents) -> np.ndarray:
        stack = np.stack([m.values_matrix(utterances, referents)
                          for m in self.members])
        return stack.mean(axis=0)


@dataclass
class EvalListener:
    semantics: object

    def distribution(self, utterance: language.Utterance, referents) -> np.ndarray:
        return eval_listener_distribution(self, utterance, referents)

    def choice(self, utterance: language.Utterance, referents) -> int:
        return listener_choice(self, utterance, referents)


def eval_listener_distribution(listener: EvalListener,
                               utterance: language.Utterance,
                               referents) -> np.ndarray:
    """Simplex over the three referents, proportional to exp(semantic value)."""
    values = listener.semantics.values_matrix([utterance], referents)[:, 0]
    e = np.exp(values - values.max())
    return e / e.sum()


def listener_choice(listener: EvalListener, utterance: language.Utterance,
                    referents) -> int:
    """Deterministic argmax choice; ties go to the lowest index."""
    return int(np.argmax(eval_listener_distribution(listener, utterance, referents)))


def distribution_from_values(values: np.ndarray) -> np.ndarray:
    e = np.exp(values - values.max())
    return e / e.sum()


@dataclass
class RSASpeaker:
    semantics: object
    cost_weight: float = 0.01
    utterances: tuple[language.Utterance, ...] = field(
        default_factory=lambda: language.UTTERANCE_SPACE)

    def speak(self, target_index: int, referents) -> language.Utterance:
        return rsa_speak(self, target_index, referents)

    def speak_game(self, game: ReferenceGame) -> language.Utterance:
        refs = [self.semantics.from_referent(r) for r in game.referents]
        return rsa_speak(self, game.target_index, refs)


def utility(speaker: RSASpeaker, utterance: language.Utterance, target_index: int,
            referents) -> float:
    """log P_listener(target | utterance) minus cost_weight * token count."""
    values = speaker.semantics.values_matrix([utterance], referents)[:, 0]
    p = distribution_from_values(values)
    return float(np.log(p[target_index])) - speaker.cost_weight * len(utterance)


def utilities_over_space(speaker: RSASpeaker, target_index: int,
                         referents) -> np.ndarray:
    """Utility of every utterance in the space, in enumeration order."""
    values = speaker.semantics.values_matrix(list(speaker.utterances), referents)
    e = np.exp(values - values.max(axis=0, keepdims=True))
    probs = e[target_index] / e.sum(axis=0)
    lengths = np.array([len(u) for u in speaker.utterances], dtype=np.float64)
    return np.log(probs) - speaker.cost_weight * lengths


def rsa_speak(speaker: RSASpeaker, target_index: int, referents) -> language.Utterance:
    """Exhaustive utility maximization; ties resolve to the earliest utterance
    in enumeration order."""
    return speaker.utterances[int(np.argmax(utilities_over_space(
        speaker, target_index, referents)))]


@dataclass
class LiteralSpeaker:
    params: dict[str, Tensor]
    config: EncoderConfig
    seed: int
    val_accuracy: float | None = None

    def speak(self, target_index: int, referent_images) -> language.Utterance:
        return literal_speak(self, target_index, referent_images)

    def speak_game(self, game: ReferenceGame) -> language.Utterance:
        return literal_speak(self, game.target_index, game.images())


def new_literal_speaker(config: EncoderConfig, seed: int) -> LiteralSpeaker:
    rng = rng_from(seed, 200)
    params = init_image_encoder(config, rng)
    params.update(init_decoder(config, language.N_DECODER_SYMBOLS,
                               language.N_DECODER_OUTPUTS, rng))
    return LiteralSpeaker(params=params, config=config, seed=seed)


def _encode_contexts(sp: LiteralSpeaker, images: np.ndarray,
                     target_indices: np.ndarray) -> Tensor:
    """(G*3, H, W, 3) images + (G,) targets -> (G, 3d+3) context batch."""
    x = Tensor(images_to_float(images))
    emb = image_encoder_forward(sp.params, x, sp.config)
    G = len(target_indices)
    flat = emb.reshape(G, 3 * sp.config.embed_dim)
    hot = np.zeros((G, 3))
    hot[np.arange(G), target_indices] = 1.0
    return concat([flat, Tensor(hot)], axis=1)


def literal_encode(sp: LiteralSpeaker, target_index: int,
                   referent_images) -> np.ndarray:
    """Context vector [f(r1); f(r2); f(r3); one-hot(t)], dimension 3d+3."""
    with no_grad():
        ctx = _encode_contexts(sp, np.stack(referent_images),
                               np.array([target_index]))
    return ctx.data[0]


def _greedy_decode(sp: LiteralSpeaker, contexts: Tensor) -> list[language.Utterance]:
    """Batched greedy decoding, capped at MAX_DECODE_STEPS tokens."""
    G = contexts.shape[0]
    h = decoder_init_state(sp.params, contexts)
    tokens = np.full(G, language.BOS_ID, dtype=np.int64)
    done = np.zeros(G, dtype=bool)
    out: list[list[int]] = [[] for _ in range(G)]
    for _ in range(MAX_DECODE_STEPS):
        logits, h = decoder_step(sp.params, tokens, h)
        nxt = logits.data.argmax(axis=1)
        for i in range(G):
            if done[i]:
                continue
            if nxt[i] == language.EOS_ID:
                done[i] = True
            else:
                out[i].append(int(nxt[i]))
        if done.all():
            break
        tokens = np.where(nxt == language.EOS_ID, language.BOS_ID, nxt)
    return [tuple(seq) for seq in out]


def literal_speak(sp: LiteralSpeaker, target_index: int,
                  referent_images) -> language.Utterance:
    """Greedy decode; the raw token sequence is returned even if it strays
    outside the utterance grammar."""
    with no_grad():
        ctx = _encode_contexts(sp, np.stack(referent_images),
                               np.array([target_index]))
        return _greedy_decode(sp, ctx)[0]


def _speaker_arrays(games: list[ReferenceGame]
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flattened images plus teacher-forcing input/target/mask arrays."""
    images = np.stack([img for g in games for img in g.images()])
    targets_idx = np.array([g.target_index for g in games], dtype=np.int64)
    G = len(games)
    toks_in = np.full((G, MAX_DECODE_STEPS), language.BOS_ID, dtype=np.int64)
    toks_out = np.zeros((G, MAX_DECODE_STEPS), dtype=np.int64)
    mask = np.zeros((G, MAX_DECODE_STEPS), dtype=bool)
    for i, g in enumerate(games):
        seq = list(g.ground_truth) + [language.EOS_ID]
        for t, sym in enumerate(seq):
            toks_out[i, t] = sym
            mask[i, t] = True
            if t + 1 < MAX_DECODE_STEPS and sym != language.EOS_ID:
                toks_in[i, t + 1] = sym
    return images, targets_idx, toks_in, toks_out, mask


def _teacher_forcing_loss(sp: LiteralSpeaker, images, targets_idx, toks_in,
                          toks_out, mask) -> Tensor:
    ctx = _encode_contexts(sp, images, targets_idx)
    h = decoder_init_state(sp.params, ctx)
    steps = []
    for t in range(MAX_DECODE_STEPS):
        logits, h = decoder_step(sp.params, toks_in[:, t], h)
        steps.append(logits)
    all_logits = concat(steps, axis=0)  # (T*G, V), step-major
    flat_targets = np.concatenate([toks_out[:, t] for t in range(MAX_DECODE_STEPS)])
    flat_mask = np.concatenate([mask[:, t] for t in range(MAX_DECODE_STEPS)])
    return cross_entropy_batch(all_logits, flat_targets, flat_mask)


def exact_match_rate(sp: LiteralSpeaker, games: list[ReferenceGame],
                     batch: int = 64) -> float:
    """Fraction of games whose greedy decode equals the ground truth."""
    hits = 0
    with no_grad():
        for s in range(0, len(games), batch):
            chunk = games[s:s + batch]
            images = np.stack([img for g in chunk for img in g.images()])
            tidx = np.array([g.target_index for g in chunk])
            ctx = _encode_contexts(sp, images, tidx)
            decoded = _greedy_decode(sp, ctx)
            hits += sum(d == g.ground_truth for d, g in zip(decoded, chunk))
    return hits / len(games)


def train_literal_speaker(games: list[ReferenceGame], hyper: TrainingHyperparams,
                          config: EncoderConfig
                          ) -> tuple[LiteralSpeaker, list[EpochLog]]:
    """Teacher-forced cross-entropy training; keeps the epoch snapshot with
    the highest validation exact-match accuracy."""
    if not games:
        raise ValueError("empty training subset")
    tune_allocator()
    train_games, val_games = split_validation(games, hyper.validation_fraction,
                                              hyper.seed)
    if not val_games:
        val_games = train_games
    images, targets_idx, toks_in, toks_out, mask = _speaker_arrays(train_games)

    sp = new_literal_speaker(config, hyper.seed)
    state = AdamState(learning_rate=hyper.learning_rate)
    shuffle_rng = rng_from(hyper.seed, 201)
    n = len(train_games)

    best: tuple[float, dict[str, Tensor]] | None = None
    logs: list[EpochLog] = []
    for epoch in range(1, hyper.epochs + 1):
        perm = shuffle_rng.permutation(n)
        epoch_total = 0.0
        for bi, start in enumerate(range(0, n, hyper.batch_size)):
            idx = perm[start:start + hyper.batch_size]
            img_idx = np.repeat(idx * 3, 3) + np.tile([0, 1, 2], len(idx))
            zero_grads(sp.params)
            loss = _teacher_forcing_loss(sp, images[img_idx], targets_idx[idx],
                                         toks_in[idx], toks_out[idx], mask[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, bi, value)
            loss.backward()
            adam_update(sp.params, collect_grads(sp.params), state)
            epoch_total += value * len(idx)
        val_acc = exact_match_rate(sp, val_games)
        logs.append(EpochLog(epoch, epoch_total / n, val_acc))
        if best is None or val_acc > best[0]:
            best = (val_acc, {k: Tensor(v.data.copy(), requires_grad=True)
                              for k, v in sp.params.items()})
    assert best is not None
    sp.params = best[1]
    sp.val_accuracy = best[0]
    return sp, logs


def save_literal_speaker(path: str | Path, sp: LiteralSpeaker) -> None:
    meta = {
        "role": "literal-speaker",
        "kind": "literal",
        "seed": sp.seed,
        "val_metric": sp.val_accuracy,
        "config": {
            "image_side": sp.config.image_side,
            "conv_channels": list(sp.config.conv_channels),
            "embed_dim": sp.config.embed_dim,
            "token_embed_dim": sp.config.token_embed_dim,
        },
    }
    save_params(path, sp.params, meta)


def load_literal_speaker(path: str | Path) -> tuple[LiteralSpeaker, dict]:
    params, meta = load_params(path)
    cfg = meta["config"]
    config = EncoderConfig(image_side=cfg["image_side"],
                           conv_channels=tuple(cfg["conv_channels"]),
                           embed_dim=cfg["embed_dim"],
                           token_embed_dim=cfg["token_embed_dim"])
    return LiteralSpeaker(params=params, config=config, seed=meta["seed"],
                          val_accuracy=meta["val_metric"]), meta
