"""Transformer encoder + Stack-Transformer decoder scoring parser actions.

The decoder's cross-attention dedicates head 0 to the tokens currently on
the stack and head 1 to the tokens still in the buffer; remaining heads
attend the whole utterance. Masked positions get an additive -inf before
the softmax, so their attention weight is exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import AllMasked, ConfigError, NoLegalActions

STACK_HEAD = 0
BUFFER_HEAD = 1


@dataclass
class ModelConfig:
    d_model: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.3
    label_smoothing: float = 0.01
    max_positions: int = 512
    feature_dim: int = 0    # >0: inputs are frozen per-token vectors, not a lookup table

    def __post_init__(self):
        if self.heads < 2:
            raise ConfigError("need at least 2 cross-attention heads (stack + buffer)")
        if self.d_model % self.heads:
            raise ConfigError("d_model must be divisible by heads")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    i = torch.arange(0, dim, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, i / dim)
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : dim // 2])
    return pe


def masked_attention(q, k, v, mask):
    """Scaled dot-product attention with a boolean mask (True = attend).

    Rows whose mask is all False produce a zero vector and zero weights.
    Returns ``(z, alpha)``.
    """
    d = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d)
    scores = scores.masked_fill(~mask, float("-inf"))
    empty = ~mask.any(dim=-1, keepdim=True)
    scores = scores.masked_fill(empty, 0.0)
    alpha = torch.softmax(scores, dim=-1).masked_fill(empty, 0.0)
    return alpha @ v, alpha


class AttentionHeadParams(NamedTuple):
    w_q: torch.Tensor   # (d_model, d)
    w_k: torch.Tensor
    w_v: torch.Tensor
    role: str           # "stack" | "buffer" | "regular"


def attend(q, H, mask, head: AttentionHeadParams, strict: bool = False):
    """One attention head over encoder states ``H`` for decoder state ``q``.

    Returns ``(z, alpha)``. With every position masked the result is the
    zero vector; ``strict=True`` raises :class:`AllMasked` instead.
    """
    mask = torch.as_tensor(np.asarray(mask, dtype=bool))
    if strict and not bool(mask.any()):
        raise AllMasked("every input position is masked")
    z, alpha = masked_attention((q @ head.w_q)[None, :], H @ head.w_k, H @ head.w_v, mask[None, :])
    return z[0], alpha[0]


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model, heads):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.w_q = nn.Linear(d_model, d_model, bias=False)
        self.w_k = nn.Linear(d_model, d_model, bias=False)
        self.w_v = nn.Linear(d_model, d_model, bias=False)
        self.w_o = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.d_head).transpose(1, 2)

    def forward(self, x, mem, mask):
        """``mask``: bool, broadcastable to (B, heads, Tq, Tk)."""
        q, k, v = self._split(self.w_q(x)), self._split(self.w_k(mem)), self._split(self.w_v(mem))
        z, _ = masked_attention(q, k, v, mask)
        b, _, t, _ = z.shape
        return self.w_o(z.transpose(1, 2).reshape(b, t, -1))

    def head(self, h: int, role: str = "regular") -> AttentionHeadParams:
        sl = slice(h * self.d_head, (h + 1) * self.d_head)
        return AttentionHeadParams(self.w_q.weight[sl].T, self.w_k.weight[sl].T, self.w_v.weight[sl].T, role)


class FeedForward(nn.Module):
    def __init__(self, d_model, ffn_dim, dropout):
        super().__init__()
        self.fc1 = nn.Linear(d_model, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.drop(F.relu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        h = self.ln1(x)
        x = x + self.drop(self.attn(h, h, mask))
        return x + self.drop(self.ffn(self.ln2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y, enc, self_mask, cross_mask):
        h = self.ln1(y)
        y = y + self.drop(self.self_attn(h, h, self_mask))
        y = y + self.drop(self.cross_attn(self.ln2(y), enc, cross_mask))
        return y + self.drop(self.ffn(self.ln3(y)))

    def head_roles(self):
        roles = ["regular"] * self.cross_attn.heads
        roles[STACK_HEAD] = "stack"
        roles[BUFFER_HEAD] = "buffer"
        return roles


class StackTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig, n_tokens: int, n_actions: int):
        super().__init__()
        self.cfg = cfg
        self.n_actions = n_actions
        d = cfg.d_model
        if cfg.feature_dim:
            self.feature_proj = nn.Linear(cfg.feature_dim, d)
        else:
            self.tok_emb = nn.Embedding(n_tokens, d, padding_idx=0)
            nn.init.normal_(self.tok_emb.weight, 0.0, d ** -0.5)
            with torch.no_grad():
                self.tok_emb.weight[0].zero_()
        self.act_emb = nn.Embedding(n_actions + 1, d)   # last row = start symbol
        nn.init.normal_(self.act_emb.weight, 0.0, d ** -0.5)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.final_ln = nn.LayerNorm(d)
        self.out = nn.Linear(d, n_actions)
        self.drop = nn.Dropout(cfg.dropout)
        self.register_buffer("pe", sinusoidal_positions(cfg.max_positions, d), persistent=False)
        self.embed_scale = math.sqrt(d)

    # -- encoder -----------------------------------------------------------

    def embed(self, tokens=None, features=None):
        """Input representations e_1..e_n (scaled lookup or projected features + positions)."""
        if self.cfg.feature_dim:
            x = self.feature_proj(features)
        else:
            x = self.tok_emb(tokens) * self.embed_scale
        return x + self.pe[: x.shape[1]].to(x.dtype)

    def encode(self, tokens=None, src_mask=None, features=None):
        """Encoder states H, shape (B, N, d_model). ``src_mask`` is True on real tokens."""
        x = self.drop(self.embed(tokens, features))
        if src_mask is None:
            src_mask = torch.ones(x.shape[:2], dtype=torch.bool)
        attn_mask = src_mask[:, None, None, :]
        for layer in self.encoder:
            x = layer(x, attn_mask)
        return x

    # -- decoder -----------------------------------------------------------

    def decode(self, enc, src_mask, act_in, stack_masks, buffer_masks, tgt_mask=None):
        """Action logits for every history position, shape (B, T, n_actions).

        ``act_in[:, t]`` is the action taken before step t (start symbol at
        t=0); ``stack_masks[:, t]``/``buffer_masks[:, t]`` describe the
        configuration in which action t is predicted.
        """
        b, t = act_in.shape
        y = self.act_emb(act_in) * self.embed_scale + self.pe[:t].to(enc.dtype)
        y = self.drop(y)
        causal = torch.ones(t, t, dtype=torch.bool).tril()
        if tgt_mask is not None:
            self_mask = causal[None, None] & tgt_mask[:, None, None, :]
        else:
            self_mask = causal[None, None]
        heads = self.cfg.heads
        regular = src_mask[:, None, :].expand(b, t, -1)
        cross = torch.stack(
            [stack_masks, buffer_masks] + [regular] * (heads - 2), dim=1)
        for layer in self.decoder:
            y = layer(y, enc, self_mask, cross)
        return self.out(self.final_ln(y))

    def forward(self, batch):
        enc = self.encode(batch.get("tokens"), batch["src_mask"], batch.get("features"))
        return self.decode(enc, batch["src_mask"], batch["act_in"], batch["stack_masks"],
                           batch["buffer_masks"], batch["tgt_mask"])

    def cross_heads(self, layer: int):
        dec = self.decoder[layer]
        return [dec.cross_attn.head(h, role) for h, role in enumerate(dec.head_roles())]


def legal_log_softmax(logits, legal):
    """Log-probabilities renormalised over legal actions; illegal ones get -inf."""
    return torch.log_softmax(logits.masked_fill(~legal, float("-inf")), dim=-1)


def sequence_loss(logp, targets, legal, tgt_mask, smoothing: float = 0.0):
    """Mean per-action negative log-likelihood with label smoothing over legal actions.

    Returns ``(loss, n_actions)``.
    """
    gold = logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    nll = -gold
    if smoothing:
        safe = logp.masked_fill(~legal, 0.0)
        smooth = -safe.sum(-1) / legal.sum(-1).clamp(min=1)
        nll = (1.0 - smoothing) * nll + smoothing * smooth
    nll = nll.masked_fill(~tgt_mask, 0.0)
    count = int(tgt_mask.sum())
    return nll.sum() / max(count, 1), count


def decode_step(model: StackTransformer, enc, src_mask, history, stack_rows, buffer_rows, legal):
    """Log-probabilities of the next action for a single hypothesis.

    ``history``: action ids taken so far; ``stack_rows``/``buffer_rows``:
    one mask row per step including the current one (len(history) + 1).
    ``legal``: boolean vector over the action vocabulary.
    """
    legal = torch.as_tensor(np.asarray(legal, dtype=bool))
    if not bool(legal.any()):
        raise NoLegalActions("no legal action in the vocabulary")
    act_in = torch.tensor([[model.n_actions] + list(history)])
    sm = torch.as_tensor(np.asarray(stack_rows, dtype=bool))[None]
    bm = torch.as_tensor(np.asarray(buffer_rows, dtype=bool))[None]
    logits = model.decode(enc, src_mask, act_in, sm, bm)[0, -1]
    return legal_log_softmax(logits, legal)
