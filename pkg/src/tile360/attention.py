"""Spatial-temporal attention transformer for multi-viewpoint prediction.

Frames arrive as pre-extracted feature grids ``(F, H, W, C)``. Each frame is
cut into ``Z = (H/h)(W/w)`` patches; a spatial encoder attends within a frame,
the pooled frame tokens go through a temporal encoder, the quantised viewpoint
history goes through its own encoder, and a causal decoder cross-attends to
the concatenation of both token sets to emit one K-way class distribution per
future step.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .sphere import Codebook, PredictionSet, top_i_decode
from .tensorio import load_tensors, save_tensors


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AttentionConfig:
    n_classes: int = 64
    d_model: int = 32
    n_heads: int = 4
    frames: int = 5
    frame_height: int = 8
    frame_width: int = 16
    channels: int = 3
    patch_height: int = 4
    patch_width: int = 4
    history: int = 5
    horizon: int = 5
    spatial_layers: int = 2
    temporal_layers: int = 2
    viewpoint_layers: int = 1
    decoder_layers: int = 1
    ff_mult: int = 2

    @property
    def patches(self) -> int:
        return (self.frame_height // self.patch_height) * (self.frame_width // self.patch_width)

    def validate(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.frame_height % self.patch_height or self.frame_width % self.patch_width:
            raise ValueError("frame size must be a multiple of the patch size")

    @classmethod
    def full_scale(cls, **overrides) -> "AttentionConfig":
        """1500 classes, 768-wide, 12 heads: far beyond single-core desk budgets."""
        base = dict(
            n_classes=1500, d_model=768, n_heads=12, spatial_layers=4, temporal_layers=4,
            viewpoint_layers=2, decoder_layers=2, ff_mult=4,
        )
        base.update(overrides)
        return cls(**base)


def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, mask: torch.Tensor | None = None):
    """softmax((q / sqrt(d_k)) k^T) v over the last two axes."""
    scores = (q / math.sqrt(q.shape[-1])) @ k.transpose(-2, -1)
    if mask is not None:
        scores = scores.masked_fill(~mask, float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, s, d = x.shape
        return x.view(b, s, self.n_heads, d // self.n_heads).transpose(1, 2)

    def forward(self, x, memory=None, mask=None):
        memory = x if memory is None else memory
        q, k, v = self._split(self.q(x)), self._split(self.k(memory)), self._split(self.v(memory))
        ctx, _ = scaled_dot_attention(q, k, v, mask)
        b, h, s, dh = ctx.shape
        return self.out(ctx.transpose(1, 2).reshape(b, s, h * dh))


class FeedForward(nn.Sequential):
    def __init__(self, d_model: int, mult: int):
        super().__init__(nn.Linear(d_model, d_model * mult), nn.GELU(), nn.Linear(d_model * mult, d_model))


class EncoderBlock(nn.Module):
    def __init__(self, d_model, n_heads, ff_mult):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.ff = FeedForward(d_model, ff_mult)

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.ff(self.ln2(x))


class DecoderBlock(nn.Module):
    def __init__(self, d_model, n_heads, ff_mult):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.ln3 = nn.LayerNorm(d_model)
        self.ff = FeedForward(d_model, ff_mult)

    def forward(self, x, memory, causal):
        x = x + self.self_attn(self.ln1(x), mask=causal)
        x = x + self.cross_attn(self.ln2(x), memory=memory)
        return x + self.ff(self.ln3(x))


class ViewpointTransformer(nn.Module):
    def __init__(self, config: AttentionConfig, seed: int = 0, dtype=torch.float32):
        super().__init__()
        config.validate()
        self.config = config
        c = config
        d = c.d_model
        gen_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        try:
            self.patch_embed = nn.Linear(c.patch_height * c.patch_width * c.channels, d)
            self.patch_pos = nn.Parameter(0.02 * torch.randn(c.patches, d))
            self.spatial = nn.ModuleList(EncoderBlock(d, c.n_heads, c.ff_mult) for _ in range(c.spatial_layers))
            self.frame_pos = nn.Parameter(0.02 * torch.randn(c.frames, d))
            self.temporal = nn.ModuleList(EncoderBlock(d, c.n_heads, c.ff_mult) for _ in range(c.temporal_layers))
            # index K is the decoder start token
            self.token_embed = nn.Embedding(c.n_classes + 1, d)
            self.history_pos = nn.Parameter(0.02 * torch.randn(c.history, d))
            self.viewpoint = nn.ModuleList(EncoderBlock(d, c.n_heads, c.ff_mult) for _ in range(c.viewpoint_layers))
            self.decoder_pos = nn.Parameter(0.02 * torch.randn(c.horizon, d))
            self.decoder = nn.ModuleList(DecoderBlock(d, c.n_heads, c.ff_mult) for _ in range(c.decoder_layers))
            self.final_ln = nn.LayerNorm(d)
            self.head = nn.Linear(d, c.n_classes)
        finally:
            torch.random.set_rng_state(gen_state)
        self.to(dtype)
        self.optimizer: torch.optim.Optimizer | None = None

    # -- encoders ---------------------------------------------------------
    def _patchify(self, frames: torch.Tensor) -> torch.Tensor:
        c = self.config
        b, f, hgt, wid, ch = frames.shape
        if (f, hgt, wid, ch) != (c.frames, c.frame_height, c.frame_width, c.channels):
            raise ValueError(f"frames shape {tuple(frames.shape[1:])} does not match config")
        ph, pw = c.patch_height, c.patch_width
        x = frames.reshape(b, f, hgt // ph, ph, wid // pw, pw, ch)
        x = x.permute(0, 1, 2, 4, 3, 5, 6)
        return x.reshape(b, f, c.patches, ph * pw * ch)

    def encode(self, frames: torch.Tensor, history: torch.Tensor) -> torch.Tensor:
        c = self.config
        if history.shape[-1] != c.history:
            raise ValueError(f"history length {history.shape[-1]} does not match config {c.history}")
        b = frames.shape[0]
        tokens = self.patch_embed(self._patchify(frames)) + self.patch_pos
        x = tokens.reshape(b * c.frames, c.patches, c.d_model)
        for blk in self.spatial:
            x = blk(x)
        frame_tokens = x.mean(dim=1).reshape(b, c.frames, c.d_model) + self.frame_pos
        for blk in self.temporal:
            frame_tokens = blk(frame_tokens)
        y = self.token_embed(history) + self.history_pos
        for blk in self.viewpoint:
            y = blk(y)
        return torch.cat([frame_tokens, y], dim=1)

    def decode_logits(self, memory: torch.Tensor, decoder_tokens: torch.Tensor) -> torch.Tensor:
        s = decoder_tokens.shape[1]
        x = self.token_embed(decoder_tokens) + self.decoder_pos[:s]
        causal = torch.tril(torch.ones(s, s, dtype=torch.bool, device=x.device))
        for blk in self.decoder:
            x = blk(x, memory, causal)
        return self.head(self.final_ln(x))

    def _start(self, b: int) -> torch.Tensor:
        return torch.full((b, 1), self.config.n_classes, dtype=torch.long)

    def teacher_forced_logits(self, frames, history, targets) -> torch.Tensor:
        memory = self.encode(frames, history)
        dec_in = torch.cat([self._start(frames.shape[0]), targets[:, :-1]], dim=1)
        return self.decode_logits(memory, dec_in)

    @torch.no_grad()
    def generate(self, frames, history, first_tokens: torch.Tensor | None = None) -> torch.Tensor:
        """Greedy autoregressive decoding; returns (batch, B, K) probabilities.

        ``first_tokens`` optionally forces the token fed back after step one.
        """
        memory = self.encode(frames, history)
        tokens = self._start(frames.shape[0])
        out = []
        for step in range(self.config.horizon):
            probs = torch.softmax(self.decode_logits(memory, tokens)[:, -1], dim=-1)
            out.append(probs)
            nxt = probs.argmax(dim=-1, keepdim=True)
            if step == 0 and first_tokens is not None:
                nxt = first_tokens.view(-1, 1)
            tokens = torch.cat([tokens, nxt], dim=1)
        return torch.stack(out, dim=1)

    # -- persistence ------------------------------------------------------
    def save(self, path: str | Path) -> None:
        tensors = {k: v.detach().cpu().double().numpy() for k, v in self.state_dict().items()}
        meta = {k: str(v) for k, v in asdict(self.config).items()}
        save_tensors(path, tensors, meta)

    @classmethod
    def load(cls, path: str | Path) -> "ViewpointTransformer":
        tensors, meta = load_tensors(path)
        fields = {k: int(v) for k, v in meta.items() if k in AttentionConfig.__dataclass_fields__}
        model = cls(AttentionConfig(**fields))
        model.load_state_dict({k: torch.from_numpy(v).float() for k, v in tensors.items()})
        return model


def _as_tensors(model, frames, history, targets=None):
    dtype = next(model.parameters()).dtype
    f = torch.as_tensor(np.asarray(frames), dtype=dtype)
    h = torch.as_tensor(np.asarray(history), dtype=torch.long)
    if f.dim() == 4:
        f, h = f.unsqueeze(0), h.unsqueeze(0)
    t = None if targets is None else torch.as_tensor(np.asarray(targets), dtype=torch.long).reshape(f.shape[0], -1)
    return f, h, t


def model_forward(model: ViewpointTransformer, frames, history) -> np.ndarray:
    """Greedy inference for one sample: (B, K) probabilities as float64."""
    f, h, _ = _as_tensors(model, frames, history)
    model.eval()
    return model.generate(f, h)[0].double().numpy()


def cross_entropy(model: ViewpointTransformer, frames, history, targets) -> torch.Tensor:
    logits = model.teacher_forced_logits(frames, history, targets)
    return nn.functional.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1))


def train_step(model: ViewpointTransformer, batch, learning_rate: float) -> float:
    """One Adam step on mean cross-entropy over every output step.

    ``batch`` is ``(frames, history, targets)`` with leading batch axes. The
    returned value is the loss before the update.
    """
    if targets_out_of_range(batch[2], model.config.n_classes):
        raise ValueError("target class outside [0, K)")
    f, h, t = _as_tensors(model, *batch)
    if model.optimizer is None:
        model.optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate, betas=(0.9, 0.999), eps=1e-8)
    for group in model.optimizer.param_groups:
        group["lr"] = learning_rate
    model.train()
    model.optimizer.zero_grad()
    loss = cross_entropy(model, f, h, t)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise NonFiniteLossError(f"non-finite loss {value}; update skipped")
    loss.backward()
    model.optimizer.step()
    return value


def targets_out_of_range(targets, k: int) -> bool:
    t = np.asarray(targets)
    return bool(t.size and (t.min() < 0 or t.max() >= k))


def predict_trajectories(model: ViewpointTransformer, frames, history, count: int, codebook: Codebook) -> PredictionSet:
    """Top-``count`` first-step classes, each continued by re-running greedy decoding."""
    f, h, _ = _as_tensors(model, frames, history)
    model.eval()
    base = model.generate(f, h)[0].double().numpy()
    if count == 1:
        return top_i_decode(base, 1, codebook)
    order = np.argsort(-base[0], kind="stable")[:count]
    trajs = []
    for cls in order:
        probs = model.generate(f, h, first_tokens=torch.tensor([int(cls)]))[0].double().numpy()
        path = np.concatenate([[cls], probs[1:].argmax(axis=1)])
        trajs.append(codebook.centroids[path])
    return PredictionSet(np.array(trajs), base[0, order])
