"""Encoder architectures: CNN over images, GRU over token sequences.

Parameter sets are plain dicts mapping names to Tensors; insertion order is
the canonical checkpoint order. All weights are drawn uniformly from
+-1/sqrt(fan_in), biases start at zero, so a model is fully determined by
its seed and config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InputError
from .tensor import Tensor, concat, conv2d, maxpool2x2


@dataclass(frozen=True)
class EncoderConfig:
    """Shared structural hyperparameters of the image and utterance encoders."""

    image_side: int = 64
    conv_channels: tuple[int, ...] = (16, 32, 64)
    embed_dim: int = 64
    token_embed_dim: int = 32

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigurationError("embed_dim must be >= 1")
        if self.image_side % (2 ** len(self.conv_channels)) != 0:
            raise ConfigurationError(
                f"image side {self.image_side} not divisible by 2^{len(self.conv_channels)}"
            )

    @property
    def flat_dim(self) -> int:
        side = self.image_side // (2 ** len(self.conv_channels))
        return side * side * self.conv_channels[-1]


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_image_encoder(cfg: EncoderConfig, rng: np.random.Generator,
                       prefix: str = "img.") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    cin = 3
    for i, cout in enumerate(cfg.conv_channels):
        params[f"{prefix}conv{i}.w"] = _uniform(rng, (3, 3, cin, cout), 9 * cin)
        params[f"{prefix}conv{i}.b"] = _zeros(cout)
        cin = cout
    params[f"{prefix}proj.w"] = _uniform(rng, (cfg.flat_dim, cfg.embed_dim), cfg.flat_dim)
    params[f"{prefix}proj.b"] = _zeros(cfg.embed_dim)
    return params


def image_encoder_forward(params: dict[str, Tensor], x: Tensor, cfg: EncoderConfig,
                          prefix: str = "img.") -> Tensor:
    """(B, side, side, 3) images in [0,1] -> (B, d) embeddings."""
    if x.data.ndim != 4 or x.data.shape[1:] != (cfg.image_side, cfg.image_side, 3):
        raise ConfigurationError(
            f"expected image batch of shape (B, {cfg.image_side}, {cfg.image_side}, 3), "
            f"got {x.data.shape}"
        )
    h = x
    for i in range(len(cfg.conv_channels)):
        h = conv2d(h, params[f"{prefix}conv{i}.w"], params[f"{prefix}conv{i}.b"])
        h = h.relu()
        h = maxpool2x2(h)
    h = h.reshape(h.shape[0], cfg.flat_dim)
    return h @ params[f"{prefix}proj.w"] + params[f"{prefix}proj.b"]


def init_gru(rng: np.random.Generator, input_dim: int, hidden_dim: int,
             prefix: str) -> dict[str, Tensor]:
    """Fused-gate GRU weights, gate order (reset, update, candidate)."""
    return {
        f"{prefix}w_ih": _uniform(rng, (input_dim, 3 * hidden_dim), input_dim),
        f"{prefix}w_hh": _uniform(rng, (hidden_dim, 3 * hidden_dim), hidden_dim),
        f"{prefix}b_ih": _zeros(3 * hidden_dim),
        f"{prefix}b_hh": _zeros(3 * hidden_dim),
    }


def gru_cell(x: Tensor, h: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    hid = params[f"{prefix}w_hh"].shape[0]
    gi = x @ params[f"{prefix}w_ih"] + params[f"{prefix}b_ih"]
    gh = h @ params[f"{prefix}w_hh"] + params[f"{prefix}b_hh"]
    r = (gi[:, 0:hid] + gh[:, 0:hid]).sigmoid()
    z = (gi[:, hid:2 * hid] + gh[:, hid:2 * hid]).sigmoid()
    n = (gi[:, 2 * hid:] + r * gh[:, 2 * hid:]).tanh()
    return (1.0 - z) * n + z * h


def init_utterance_encoder(cfg: EncoderConfig, vocab_size: int, rng: np.random.Generator,
                           prefix: str = "utt.") -> dict[str, Tensor]:
    params = {f"{prefix}embed": _uniform(rng, (vocab_size, cfg.token_embed_dim),
                                         cfg.token_embed_dim)}
    params.update(init_gru(rng, cfg.token_embed_dim, cfg.embed_dim, f"{prefix}gru."))
    return params


def utterance_encoder_forward(params: dict[str, Tensor], tokens: np.ndarray,
                              lengths: np.ndarray, cfg: EncoderConfig,
                              prefix: str = "utt.") -> Tensor:
    """Encode padded token-id sequences; returns the hidden state at each
    sequence's final position.

    tokens: (B, T) int array, positions beyond a sequence's length may hold
    any in-range id (they are masked out). lengths: (B,) in [1, T].
    """
    embed = params[f"{prefix}embed"]
    vocab_size = embed.shape[0]
    if tokens.min() < 0 or tokens.max() >= vocab_size:
        raise InputError(f"token id out of range [0, {vocab_size})")
    B, T = tokens.shape
    hid = cfg.embed_dim
    h: Tensor = Tensor(np.zeros((B, hid)))
    final: Tensor | None = None
    for t in range(T):
        x_t = embed[tokens[:, t]]
        h = gru_cell(x_t, h, params, f"{prefix}gru.")
        picked = Tensor((lengths == t + 1).astype(np.float64).reshape(B, 1))
        term = picked * h
        final = term if final is None else final + term
    assert final is not None
    return final


def init_decoder(cfg: EncoderConfig, n_symbols: int, n_outputs: int,
                 rng: np.random.Generator, prefix: str = "dec.") -> dict[str, Tensor]:
    """Greedy utterance decoder: learned linear map initializes the GRU state
    from the context vector, then per-step token embeddings drive the cell."""
    ctx_dim = 3 * cfg.embed_dim + 3
    hid = cfg.embed_dim
    params = {
        f"{prefix}init.w": _uniform(rng, (ctx_dim, hid), ctx_dim),
        f"{prefix}init.b": _zeros(hid),
        f"{prefix}embed": _uniform(rng, (n_symbols, cfg.token_embed_dim),
                                   cfg.token_embed_dim),
    }
    params.update(init_gru(rng, cfg.token_embed_dim, hid, f"{prefix}gru."))
    params[f"{prefix}out.w"] = _uniform(rng, (hid, n_outputs), hid)
    params[f"{prefix}out.b"] = _zeros(n_outputs)
    return params


def decoder_init_state(params: dict[str, Tensor], context: Tensor,
                       prefix: str = "dec.") -> Tensor:
    return context @ params[f"{prefix}init.w"] + params[f"{prefix}init.b"]


def decoder_step(params: dict[str, Tensor], token_ids: np.ndarray, h: Tensor,
                 prefix: str = "dec.") -> tuple[Tensor, Tensor]:
    """One teacher-forcing / decoding step: returns (logits, new hidden)."""
    x = params[f"{prefix}embed"][token_ids]
    h_new = gru_cell(x, h, params, f"{prefix}gru.")
    logits = h_new @ params[f"{prefix}out.w"] + params[f"{prefix}out.b"]
    return logits, h_new


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


def concat_context(embeddings: Tensor, target_index: int) -> Tensor:
    """[f(r1); f(r2); f(r3); one-hot(t)] for a batch of one game.

    embeddings: (3, d) stacked referent embeddings in presentation order.
    """
    flat = embeddings.reshape(1, embeddings.shape[0] * embeddings.shape[1])
    t = Tensor(one_hot(target_index, 3).reshape(1, 3))
    return concat([flat, t], axis=1)
