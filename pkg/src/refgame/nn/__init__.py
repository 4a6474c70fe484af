"""Tensor, autodiff, layer and optimizer substrate for the two architectures."""

from .checkpoint import load_params, save_params
from .gradcheck import gradient_check
from .layers import (
    EncoderConfig,
    concat_context,
    decoder_init_state,
    decoder_step,
    gru_cell,
    image_encoder_forward,
    init_decoder,
    init_gru,
    init_image_encoder,
    init_utterance_encoder,
    one_hot,
    utterance_encoder_forward,
)
from .losses import bce_loss, cross_entropy_batch, cross_entropy_loss, softmax
from .optim import AdamState, adam_update, collect_grads
from .tensor import Tensor, as_tensor, concat, conv2d, maxpool2x2, no_grad, zero_grads


def forward_image_encoder(params, image, cfg, prefix: str = "img."):
    """Embed one (side, side, 3) image in [0,1] as a (d,) vector."""
    x = as_tensor(image)
    out = image_encoder_forward(params, x.reshape(1, *x.shape), cfg, prefix)
    return out.reshape(cfg.embed_dim)


def forward_utterance_encoder(params, tokens, cfg, prefix: str = "utt."):
    """Embed one token-id sequence as the final GRU hidden state, shape (d,)."""
    import numpy as np

    ids = np.asarray(tokens, dtype=np.int64).reshape(1, -1)
    lengths = np.array([ids.shape[1]], dtype=np.int64)
    out = utterance_encoder_forward(params, ids, lengths, cfg, prefix)
    return out.reshape(cfg.embed_dim)
