"""Miniature transformer language models, encoder-only and decoder-only.

Pre-norm blocks, learned absolute positional embeddings, untied output
projection. The encoder trains with masked-token prediction over bidirectional
context; the decoder trains with next-token prediction behind a causal mask.
Both mask PAD positions out of attention, and every attention row keeps its
own diagonal so no softmax row is ever empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .corpus import BOS, EOS, MASK, PAD, SEP, TokenIds
from .errors import ConfigError
from .optim import AdamState, adam_step, lr_at_step

SPECIAL_IDS = frozenset({PAD, BOS, EOS, MASK, SEP})
INIT_GAIN = 0.02


@dataclass(frozen=True)
class ModelConfig:
    arch_kind: str            # "encoder" or "decoder"
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    vocab_size: int = 512
    max_len: int = 128
    mask_prob: float = 0.15   # encoder pretraining only

    def validate(self) -> None:
        if self.arch_kind not in ("encoder", "decoder"):
            raise ConfigError(f"arch_kind must be encoder|decoder, got {self.arch_kind!r}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by "
                              f"n_heads {self.n_heads}")
        if self.max_len < 4:
            raise ConfigError("max_len must be at least 4")
        if not 0.0 < self.mask_prob < 1.0:
            raise ConfigError("mask_prob must lie in (0, 1)")
        for name in ("d_model", "n_layers", "n_heads", "d_ff", "vocab_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**d)
        cfg.validate()
        return cfg


class Linear:
    """Affine map x @ W + b with an optional low-rank adapter path."""

    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b
        self.lora_a: Tensor | None = None
        self.lora_b: Tensor | None = None
        self.lora_scale = 0.0

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.add_bias(ad.matmul(x, self.w), self.b)
        if self.lora_a is not None:
            delta = ad.matmul(ad.matmul(x, self.lora_a), self.lora_b)
            out = ad.add(out, ad.scale(delta, self.lora_scale))
        return out


class LayerNorm:
    def __init__(self, gain: Tensor, offset: Tensor):
        self.gain = gain
        self.offset = offset

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm_rows(x, self.gain, self.offset)


@dataclass
class Block:
    ln1: LayerNorm
    wq: Linear
    wk: Linear
    wv: Linear
    wo: Linear
    ln2: LayerNorm
    ff1: Linear
    ff2: Linear


@dataclass
class HiddenStates:
    """Per-token representations; rows past valid_length are padding."""
    states: Tensor
    valid_length: int


class MiniLlm:
    """The text representation module: token ids -> per-token hidden states."""

    def __init__(self, config: ModelConfig, seed: int):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        D, V, F = config.d_model, config.vocab_size, config.d_ff

        def gauss(rows, cols, name):
            return Tensor(rng.normal(0.0, INIT_GAIN, size=(rows, cols)),
                          requires_grad=True, name=name)

        def ln_params(name):
            return LayerNorm(Tensor(np.ones((1, D)), requires_grad=True, name=f"{name}.gain"),
                             Tensor(np.zeros((1, D)), requires_grad=True, name=f"{name}.offset"))

        def linear(rows, cols, name):
            return Linear(gauss(rows, cols, f"{name}.w"),
                          Tensor(np.zeros((1, cols)), requires_grad=True, name=f"{name}.b"))

        self.tok_emb = gauss(V, D, "tok_emb")
        self.pos_emb = gauss(config.max_len, D, "pos_emb")
        self.blocks = [
            Block(ln1=ln_params(f"layers.{i}.ln1"),
                  wq=linear(D, D, f"layers.{i}.attn.q"),
                  wk=linear(D, D, f"layers.{i}.attn.k"),
                  wv=linear(D, D, f"layers.{i}.attn.v"),
                  wo=linear(D, D, f"layers.{i}.attn.o"),
                  ln2=ln_params(f"layers.{i}.ln2"),
                  ff1=linear(D, F, f"layers.{i}.ff1"),
                  ff2=linear(F, D, f"layers.{i}.ff2"))
            for i in range(config.n_layers)
        ]
        self.ln_f = ln_params("ln_f")
        self.out_proj = gauss(D, V, "out_proj")

    # -- parameter bookkeeping ------------------------------------------------

    def adapted_linears(self) -> list[Linear]:
        """The attention and feed-forward maps that low-rank adapters target."""
        out = []
        for b in self.blocks:
            out.extend([b.wq, b.wk, b.wv, b.wo, b.ff1, b.ff2])
        return out

    def base_params(self) -> dict[str, Tensor]:
        params = {"tok_emb": self.tok_emb, "pos_emb": self.pos_emb,
                  "out_proj": self.out_proj,
                  "ln_f.gain": self.ln_f.gain, "ln_f.offset": self.ln_f.offset}
        for b in self.blocks:
            for ln in (b.ln1, b.ln2):
                params[ln.gain.name] = ln.gain
                params[ln.offset.name] = ln.offset
            for lin in (b.wq, b.wk, b.wv, b.wo, b.ff1, b.ff2):
                params[lin.w.name] = lin.w
                params[lin.b.name] = lin.b
        return params

    def lora_params(self) -> dict[str, Tensor]:
        params = {}
        for lin in self.adapted_linears():
            if lin.lora_a is not None:
                params[lin.lora_a.name] = lin.lora_a
                params[lin.lora_b.name] = lin.lora_b
        return params

    def trainable_params(self) -> list[Tensor]:
        named = {**self.base_params(), **self.lora_params()}
        return [t for _, t in sorted(named.items()) if t.requires_grad]

    # -- forward --------------------------------------------------------------

    def _attention_mask(self, length: int, valid_length: int) -> np.ndarray:
        keep = np.zeros((length, length), dtype=bool)
        keep[:, :valid_length] = True
        if self.config.arch_kind == "decoder":
            keep &= np.tril(np.ones((length, length), dtype=bool))
        np.fill_diagonal(keep, True)  # PAD query rows still need a live softmax
        return keep

    def encode(self, seq: TokenIds) -> HiddenStates:
        """Hidden states for one sequence; trailing PADs stay masked out."""
        cfg = self.config
        L = len(seq)
        if L == 0:
            raise ValueError("cannot encode an empty sequence")
        if L > cfg.max_len:
            raise ValueError(f"sequence length {L} exceeds max_len {cfg.max_len}; "
                             "callers must truncate first")
        if cfg.arch_kind == "decoder" and seq[0] != BOS:
            raise ValueError("decoder input must begin with BOS")
        valid = L
        while valid > 0 and seq[valid - 1] == PAD:
            valid -= 1
        if valid == 0:
            raise ValueError("sequence is all padding")

        x = ad.add(ad.embedding_lookup(self.tok_emb, seq),
                   ad.slice_rows(self.pos_emb, 0, L))
        mask = self._attention_mask(L, valid)
        scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
        dh = cfg.d_model // cfg.n_heads

        for block in self.blocks:
            normed = block.ln1(x)
            q, k, v = block.wq(normed), block.wk(normed), block.wv(normed)
            heads = []
            for h in range(cfg.n_heads):
                qs = ad.slice_cols(q, h * dh, (h + 1) * dh)
                ks = ad.slice_cols(k, h * dh, (h + 1) * dh)
                vs = ad.slice_cols(v, h * dh, (h + 1) * dh)
                scores = ad.scale(ad.matmul(qs, ad.transpose(ks)), scale)
                probs = ad.softmax_rows(scores, mask)
                heads.append(ad.matmul(probs, vs))
            attn = block.wo(ad.concat_cols(heads))
            x = ad.add(x, attn)
            normed = block.ln2(x)
            x = ad.add(x, block.ff2(ad.gelu(block.ff1(normed))))

        return HiddenStates(states=self.ln_f(x), valid_length=valid)

    def project_tokens(self, hidden: Tensor) -> Tensor:
        """Map hidden rows to vocabulary logits."""
        return ad.matmul(hidden, self.out_proj)


def build_model(config: ModelConfig, rng_seed: int) -> MiniLlm:
    return MiniLlm(config, rng_seed)


def encode_sequence(model: MiniLlm, seq: TokenIds) -> HiddenStates:
    return model.encode(seq)


# ---------------------------------------------------------------------------
# Pretraining objectives
# ---------------------------------------------------------------------------

def mask_for_mlm(seq: TokenIds, mask_prob: float,
                 rng: np.random.Generator) -> tuple[TokenIds, list[int], list[int]]:
    """Mask ceil(mask_prob * n_content) non-special positions, uniformly.

    Returns (masked sequence, masked positions, original ids at those
    positions). Every masked position is replaced by the MASK id.
    """
    content_pos = [i for i, tok in enumerate(seq) if tok not in SPECIAL_IDS]
    if not content_pos:
        raise ValueError("sequence has no non-special tokens to mask")
    n_mask = math.ceil(mask_prob * len(content_pos))
    n_mask = min(n_mask, len(content_pos))
    chosen = sorted(rng.choice(len(content_pos), size=n_mask, replace=False).tolist())
    positions = [content_pos[i] for i in chosen]
    masked = list(seq)
    targets = []
    for pos in positions:
        targets.append(masked[pos])
        masked[pos] = MASK
    return masked, positions, targets


def mlm_loss(model: MiniLlm, masked_seq: TokenIds, positions: list[int],
             targets: list[int]) -> Tensor:
    """Mean cross-entropy of the masked positions against their originals."""
    if not positions:
        raise ValueError("mask set is empty")
    hidden = model.encode(masked_seq).states
    rows = ad.concat_rows([ad.slice_rows(hidden, p, p + 1) for p in positions])
    return ad.cross_entropy_mean(model.project_tokens(rows), targets)


def clm_loss(model: MiniLlm, seq: TokenIds) -> Tensor:
    """Next-token cross-entropy with BOS prepended; PAD targets excluded."""
    if not seq:
        raise ValueError("sequence is empty")
    content = [tok for tok in seq if tok != PAD]
    if not content:
        raise ValueError("sequence is all padding")
    if len(content) + 1 > model.config.max_len:
        raise ValueError("sequence (plus BOS) exceeds max_len")
    shifted = [BOS] + content
    hidden = model.encode(shifted).states
    # h_{i-1} predicts x_i: logits from rows 0..L-1, targets content tokens
    logits = model.project_tokens(ad.slice_rows(hidden, 0, len(content)))
    return ad.cross_entropy_mean(logits, content)


@dataclass(frozen=True)
class PretrainSchedule:
    steps: int = 500
    batch: int = 32
    peak_lr: float = 2e-3
    warmup: int = 100
    seed: int = 0


def pretrain(model: MiniLlm, corpus: list[TokenIds],
             schedule: PretrainSchedule) -> list[float]:
    """Minimize the architecture's LM objective over the corpus.

    Batches are drawn with replacement from the corpus; returns the per-step
    mean batch loss. Deterministic under the schedule seed.
    """
    if not corpus:
        raise ValueError("pretraining corpus is empty")
    rng = np.random.default_rng(schedule.seed)
    params = model.trainable_params()
    state = AdamState(params)
    is_encoder = model.config.arch_kind == "encoder"
    losses = []
    for step in range(1, schedule.steps + 1):
        picks = rng.integers(len(corpus), size=schedule.batch)
        with Tape() as tape:
            batch_terms = []
            for idx in picks:
                seq = corpus[int(idx)]
                if is_encoder:
                    masked, pos, targets = mask_for_mlm(seq, model.config.mask_prob, rng)
                    batch_terms.append(mlm_loss(model, masked, pos, targets))
                else:
                    batch_terms.append(clm_loss(model, seq))
            stacked = ad.concat_rows(batch_terms) if len(batch_terms) > 1 else batch_terms[0]
            loss = ad.mean_all(stacked)
        grads = tape.gradients(loss, params)
        lr = lr_at_step(step, schedule.warmup, schedule.steps, schedule.peak_lr)
        if lr > 0:
            adam_step(state, grads, lr)
        losses.append(loss.item())
    return losses
