"""Tiny causal transformer over mixed visual/text sequences, in numpy.

Everything is float64 and every gradient is derived by hand, which keeps the
whole model finite-difference checkable and bit-reproducible: fixed seeds and
fixed batch order give bit-identical parameters, losses, and checkpoints.

Forward pass per sequence:
  x = embed[text tokens] with projected visual vectors scattered into their
      slots, plus learned absolute position embeddings
  n_layers pre-norm blocks: x += attn(LN(x)); x += mlp(LN(x))
  logits = head(LN(x))

Attention carries a learned per-head relative-distance bias added to the
scores. Sequences here have variable-length visual prefixes, so "the word k
positions back" is invisible to absolute position embeddings; the relative
bias gives heads that addressing mode directly.

The answer loss at position i reads the logits at position i-1, so only
masked positions (answer tokens and <eos>) contribute. Per-sequence mean
over masked tokens, then mean over the batch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError
from .projector import gelu, gelu_grad, init_projection_params, project, project_backward
from .sequence import VISUAL_SLOT, TokenSequence
from .vocab import Vocabulary

_LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    h: int = 32
    n_layers: int = 2
    n_heads: int = 2
    ff: int = 0  # 0 means 4*h
    max_len: int = 512
    proj_in: int = 19  # feature dim + 3 coordinate dims
    proj_mid: int = 32

    def __post_init__(self):
        if self.ff == 0:
            object.__setattr__(self, "ff", 4 * self.h)
        if self.h % self.n_heads != 0:
            raise ConfigError(f"h={self.h} not divisible by n_heads={self.n_heads}")
        for name in ("vocab_size", "h", "n_layers", "n_heads", "ff", "max_len", "proj_in", "proj_mid"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.h // self.n_heads


def init_params(cfg: ModelConfig, seed: int = 0,
                word_grounding: dict[int, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Parameter dict in a fixed insertion order (serialization depends on it).

    `word_grounding` maps token ids to visual-space feature vectors (the
    simulator's category embeddings). When given, those word embeddings and
    the projection layer initialize into one shared random lift of the visual
    feature space, mirroring the text/image alignment a pretrained
    contrastive feature extractor hands the full-scale pipeline for free.
    Everything stays trainable; this only shapes the starting point.
    """
    rng = np.random.default_rng(seed)
    params = init_projection_params(rng, cfg.proj_in, cfg.proj_mid, cfg.h)
    params["lm.embed"] = rng.normal(0.0, 0.1, size=(cfg.vocab_size, cfg.h))
    params["lm.pos"] = rng.normal(0.0, 0.05, size=(cfg.max_len, cfg.h))
    for l in range(cfg.n_layers):
        p = f"lm.layers.{l}."
        params[p + "ln1.g"] = np.ones(cfg.h)
        params[p + "ln1.b"] = np.zeros(cfg.h)
        for nm in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + nm] = rng.normal(0.0, 0.05, size=(cfg.h, cfg.h))
        for nm in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + nm] = np.zeros(cfg.h)
        params[p + "attn.rel"] = np.zeros((cfg.n_heads, cfg.max_len))
        params[p + "ln2.g"] = np.ones(cfg.h)
        params[p + "ln2.b"] = np.zeros(cfg.h)
        params[p + "mlp.w1"] = rng.normal(0.0, 0.05, size=(cfg.h, cfg.ff))
        params[p + "mlp.b1"] = np.zeros(cfg.ff)
        params[p + "mlp.w2"] = rng.normal(0.0, 0.05, size=(cfg.ff, cfg.h))
        params[p + "mlp.b2"] = np.zeros(cfg.h)
    params["lm.ln_f.g"] = np.ones(cfg.h)
    params["lm.ln_f.b"] = np.zeros(cfg.h)
    params["lm.head.w"] = rng.normal(0.0, 0.05, size=(cfg.h, cfg.vocab_size))
    params["lm.head.b"] = np.zeros(cfg.vocab_size)
    if word_grounding:
        e_dim = len(next(iter(word_grounding.values())))
        if e_dim > cfg.proj_in - 3:
            raise ConfigError("grounding dim exceeds the projection input's feature block")
        lift = rng.normal(0.0, 1.0, size=(e_dim, cfg.h)) / np.sqrt(e_dim)
        for tid, vec in word_grounding.items():
            params["lm.embed"][tid] = np.asarray(vec, dtype=np.float64) @ lift
        if e_dim <= cfg.proj_mid:
            # the projection starts out as (roughly) the same lift applied to
            # the leading feature block: identity into the hidden layer, lift
            # on the way out, so matching words and voxels begin nearby in
            # model space (skipped when the hidden layer is too narrow)
            w1 = rng.normal(0.0, 0.02, size=(cfg.proj_in, cfg.proj_mid))
            w1[:e_dim, :e_dim] += np.eye(e_dim)
            w2 = rng.normal(0.0, 0.02, size=(cfg.proj_mid, cfg.h))
            w2[:e_dim] += lift
            params["proj.w1"] = w1
            params["proj.w2"] = w2
        # head 0 of every layer starts as a similarity head: query and key
        # share one random projection, so grounded words already attend to
        # voxels of their own category before any training. Its distance-0
        # relative bias starts strongly negative, otherwise self-attention
        # (the most similar vector of all) swallows the whole softmax.
        g = rng.normal(0.0, 1.0, size=(cfg.h, cfg.head_dim)) * 0.3
        for l in range(cfg.n_layers):
            p = f"lm.layers.{l}."
            params[p + "attn.wq"][:, : cfg.head_dim] = g
            params[p + "attn.wk"][:, : cfg.head_dim] = g
            params[p + "attn.rel"][0, 0] = -6.0
    return params


@dataclass(frozen=True)
class AlignmentModel:
    cfg: ModelConfig
    params: dict[str, np.ndarray]
    vocab: Vocabulary

    @staticmethod
    def create(cfg: ModelConfig, vocab: Vocabulary, seed: int = 0,
               word_grounding: dict[str, np.ndarray] | None = None) -> "AlignmentModel":
        if cfg.vocab_size != len(vocab):
            cfg = replace(cfg, vocab_size=len(vocab))
        grounding_ids = None
        if word_grounding:
            grounding_ids = {
                vocab.index[w.lower()]: v for w, v in word_grounding.items()
                if w.lower() in vocab.index
            }
        return AlignmentModel(cfg, init_params(cfg, seed, grounding_ids), vocab)

    def with_params(self, params: dict[str, np.ndarray]) -> "AlignmentModel":
        return AlignmentModel(self.cfg, params, self.vocab)


def param_hash(params: dict[str, np.ndarray], prefix: str = "") -> str:
    """Byte-level hash of (a subset of) the parameter set, key-sorted."""
    h = hashlib.sha256()
    for name in sorted(params):
        if not name.startswith(prefix):
            continue
        h.update(name.encode())
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# batching


@dataclass
class PackedBatch:
    tokens: np.ndarray  # (B, T) int64, PAD-filled, 0 at visual slots
    visual_mask: np.ndarray  # (B, T) bool
    visuals: np.ndarray  # (K, Din) all visual vectors, batch-major order
    loss_mask: np.ndarray  # (B, T) bool
    lengths: np.ndarray  # (B,) true lengths


def pack_batch(seqs: list[TokenSequence], pad_id: int) -> PackedBatch:
    if not seqs:
        raise ConfigError("cannot pack an empty batch")
    b = len(seqs)
    t = max(len(s) for s in seqs)
    tokens = np.full((b, t), pad_id, dtype=np.int64)
    visual_mask = np.zeros((b, t), dtype=bool)
    loss_mask = np.zeros((b, t), dtype=bool)
    lengths = np.zeros(b, dtype=np.int64)
    vis_parts = []
    for i, s in enumerate(seqs):
        n = len(s)
        lengths[i] = n
        row = s.tokens.copy()
        slots = row == VISUAL_SLOT
        row[slots] = 0
        tokens[i, :n] = row
        visual_mask[i, :n] = slots
        loss_mask[i, :n] = s.loss_mask
        if s.n_visual:
            vis_parts.append(s.visuals)
    if vis_parts:
        visuals = np.concatenate(vis_parts, axis=0)
    else:
        visuals = np.zeros((0, 1))
    return PackedBatch(tokens, visual_mask, visuals, loss_mask, lengths)


# ---------------------------------------------------------------------------
# forward / backward


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _ln_backward(dout, g, cache):
    xhat, rstd = cache
    axes = tuple(range(dout.ndim - 1))
    dg = np.sum(dout * xhat, axis=axes)
    db = np.sum(dout, axis=axes)
    dxhat = dout * g
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x, n_heads):
    b, t, h = x.shape
    return x.reshape(b, t, n_heads, h // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, nh, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, nh * dh)


def _forward(params, cfg: ModelConfig, batch: PackedBatch, want_cache: bool):
    b, t = batch.tokens.shape
    if t > cfg.max_len:
        raise ConfigError(f"sequence length {t} exceeds model max_len {cfg.max_len}")
    if batch.visuals.shape[0] and batch.visuals.shape[1] != cfg.proj_in:
        raise ConfigError(
            f"visual vector dim {batch.visuals.shape[1]} does not match proj_in {cfg.proj_in}"
        )
    x = params["lm.embed"][batch.tokens].copy()
    if batch.visuals.shape[0]:
        projected = project(batch.visuals, params)
        x[batch.visual_mask] = projected
    x = x + params["lm.pos"][:t]

    causal = np.tril(np.ones((t, t), dtype=bool))
    dist = np.maximum(np.subtract.outer(np.arange(t), np.arange(t)), 0)
    scale = 1.0 / np.sqrt(cfg.head_dim)
    layer_caches = []
    for l in range(cfg.n_layers):
        p = f"lm.layers.{l}."
        a, ln1_cache = _ln_forward(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(a @ params[p + "attn.wq"] + params[p + "attn.bq"], cfg.n_heads)
        k = _split_heads(a @ params[p + "attn.wk"] + params[p + "attn.bk"], cfg.n_heads)
        v = _split_heads(a @ params[p + "attn.wv"] + params[p + "attn.bv"], cfg.n_heads)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale + params[p + "attn.rel"][:, dist]
        scores = np.where(causal, scores, -np.inf)
        m = scores.max(axis=-1, keepdims=True)
        e = np.exp(scores - m)
        att = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(att @ v)
        attn_out = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        x_mid = x + attn_out
        a2, ln2_cache = _ln_forward(x_mid, params[p + "ln2.g"], params[p + "ln2.b"])
        h1 = a2 @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
        hg = gelu(h1)
        x = x_mid + hg @ params[p + "mlp.w2"] + params[p + "mlp.b2"]
        if want_cache:
            layer_caches.append(
                dict(a=a, ln1=ln1_cache, q=q, k=k, v=v, att=att, ctx=ctx,
                     a2=a2, ln2=ln2_cache, h1=h1, hg=hg)
            )
    xf, lnf_cache = _ln_forward(x, params["lm.ln_f.g"], params["lm.ln_f.b"])
    logits = xf @ params["lm.head.w"] + params["lm.head.b"]
    cache = dict(layers=layer_caches, xf=xf, lnf=lnf_cache) if want_cache else None
    return logits, cache


def _loss_from_logits(logits, batch: PackedBatch):
    """Per-sequence mean NLL over masked positions, then batch mean.

    Also returns the pieces needed to seed the backward pass.
    """
    bs, cols = np.nonzero(batch.loss_mask)
    if bs.size == 0:
        raise ConfigError("batch has no masked positions to score")
    if np.any(cols == 0):
        raise ConfigError("masked position at index 0 has no predictor position")
    b = batch.tokens.shape[0]
    counts = batch.loss_mask.sum(axis=1)
    rows = logits[bs, cols - 1]  # (M, V)
    m = rows.max(axis=1)
    logz = m + np.log(np.exp(rows - m[:, None]).sum(axis=1))
    targets = batch.tokens[bs, cols]
    nll = logz - rows[np.arange(bs.size), targets]
    per_seq = np.zeros(b)
    np.add.at(per_seq, bs, nll)
    per_seq = per_seq / np.maximum(counts, 1)
    loss_val = per_seq.mean()
    weights = 1.0 / (counts[bs] * b)
    return float(loss_val), per_seq, (bs, cols, targets, rows, logz, weights)


def _loss_backward_into_dlogits(logits_shape, filler):
    bs, cols, targets, rows, logz, weights = filler
    probs = np.exp(rows - logz[:, None])
    probs[np.arange(bs.size), targets] -= 1.0
    probs *= weights[:, None]
    dlogits = np.zeros(logits_shape)
    # (b, i-1) pairs are unique within a batch, so plain fancy assignment is safe.
    dlogits[bs, cols - 1] = probs
    return dlogits


def _backward(params, cfg: ModelConfig, batch: PackedBatch, cache, dlogits):
    grads = {}
    xf = cache["xf"]
    b, t, _ = xf.shape

    def flat(arr):
        return arr.reshape(b * t, -1)

    grads["lm.head.w"] = flat(xf).T @ flat(dlogits)
    grads["lm.head.b"] = dlogits.sum(axis=(0, 1))
    dxf = dlogits @ params["lm.head.w"].T
    dx, dgf, dbf = _ln_backward(dxf, params["lm.ln_f.g"], cache["lnf"])
    grads["lm.ln_f.g"] = dgf
    grads["lm.ln_f.b"] = dbf

    scale = 1.0 / np.sqrt(cfg.head_dim)
    dist = np.maximum(np.subtract.outer(np.arange(t), np.arange(t)), 0)
    for l in reversed(range(cfg.n_layers)):
        p = f"lm.layers.{l}."
        c = cache["layers"][l]
        # MLP block: x = x_mid + gelu(a2 @ w1 + b1) @ w2 + b2
        dm = dx
        grads[p + "mlp.w2"] = flat(c["hg"]).T @ flat(dm)
        grads[p + "mlp.b2"] = dm.sum(axis=(0, 1))
        dhg = dm @ params[p + "mlp.w2"].T
        dh1 = dhg * gelu_grad(c["h1"])
        grads[p + "mlp.w1"] = flat(c["a2"]).T @ flat(dh1)
        grads[p + "mlp.b1"] = dh1.sum(axis=(0, 1))
        da2 = dh1 @ params[p + "mlp.w1"].T
        dx_mid_ln, dg2, db2 = _ln_backward(da2, params[p + "ln2.g"], c["ln2"])
        grads[p + "ln2.g"] = dg2
        grads[p + "ln2.b"] = db2
        dx_mid = dx + dx_mid_ln
        # Attention block: x_mid = x_in + merge(att @ v) @ wo + bo
        dattn_out = dx_mid
        grads[p + "attn.wo"] = flat(c["ctx"]).T @ flat(dattn_out)
        grads[p + "attn.bo"] = dattn_out.sum(axis=(0, 1))
        dctx = _split_heads(dattn_out @ params[p + "attn.wo"].T, cfg.n_heads)
        att, q, k, v = c["att"], c["q"], c["k"], c["v"]
        datt = dctx @ v.transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ dctx
        dscores = att * (datt - np.sum(datt * att, axis=-1, keepdims=True))
        drel = np.zeros_like(params[p + "attn.rel"])
        dscores_heads = dscores.sum(axis=0)  # (nh, T, T)
        for hd in range(cfg.n_heads):
            np.add.at(drel[hd], dist.ravel(), dscores_heads[hd].ravel())
        grads[p + "attn.rel"] = drel
        draw = dscores * scale
        dq = draw @ k
        dk = draw.transpose(0, 1, 3, 2) @ q
        dqf, dkf, dvf = (_merge_heads(z) for z in (dq, dk, dv))
        a = c["a"]
        da = np.zeros_like(a)
        for name, dz in (("q", dqf), ("k", dkf), ("v", dvf)):
            grads[p + f"attn.w{name}"] = flat(a).T @ flat(dz)
            grads[p + f"attn.b{name}"] = dz.sum(axis=(0, 1))
            da += dz @ params[p + f"attn.w{name}"].T
        dx_in_ln, dg1, db1 = _ln_backward(da, params[p + "ln1.g"], c["ln1"])
        grads[p + "ln1.g"] = dg1
        grads[p + "ln1.b"] = db1
        dx = dx_mid + dx_in_ln

    # Input: x = scatter(embed, projected visuals) + pos
    grads["lm.pos"] = np.zeros_like(params["lm.pos"])
    grads["lm.pos"][:t] = dx.sum(axis=0)
    dembed = np.zeros_like(params["lm.embed"])
    text_mask = ~batch.visual_mask
    np.add.at(dembed, batch.tokens[text_mask], dx[text_mask])
    grads["lm.embed"] = dembed
    if batch.visuals.shape[0]:
        dvis_out = dx[batch.visual_mask]
        proj_grads, _ = project_backward(batch.visuals, params, dvis_out)
        grads.update(proj_grads)
    else:
        for nm in ("proj.w1", "proj.b1", "proj.w2", "proj.b2"):
            grads[nm] = np.zeros_like(params[nm])
    return grads


def batch_loss_and_grads(model: AlignmentModel, seqs: list[TokenSequence],
                         trainable_prefixes: tuple[str, ...] | None = None):
    """Mean masked NLL over a batch plus gradients for the trainable subset."""
    batch = pack_batch(seqs, model.vocab.pad_id)
    logits, cache = _forward(model.params, model.cfg, batch, want_cache=True)
    loss_val, per_seq, filler = _loss_from_logits(logits, batch)
    dlogits = _loss_backward_into_dlogits(logits.shape, filler)
    grads = _backward(model.params, model.cfg, batch, cache, dlogits)
    if trainable_prefixes is not None:
        grads = {k: g for k, g in grads.items() if k.startswith(trainable_prefixes)}
    return loss_val, per_seq, grads


def loss(seq: TokenSequence, model: AlignmentModel) -> float:
    """Mean NLL over the sequence's masked (answer + <eos>) positions."""
    if not seq.loss_mask.any():
        raise ConfigError("sequence has no masked positions; nothing to score")
    batch = pack_batch([seq], model.vocab.pad_id)
    logits, _ = _forward(model.params, model.cfg, batch, want_cache=False)
    val, _, _ = _loss_from_logits(logits, batch)
    return val


def gradients(seq: TokenSequence, model: AlignmentModel,
              trainable_prefixes: tuple[str, ...] = ("proj.", "lm.")) -> dict[str, np.ndarray]:
    """Exact loss gradients for every parameter matching the trainable prefixes."""
    _, _, grads = batch_loss_and_grads(model, [seq], trainable_prefixes)
    return grads


def forward_logits(model: AlignmentModel, seq: TokenSequence) -> np.ndarray:
    """(T, vocab) logits for one sequence; row i predicts the token at i+1."""
    batch = pack_batch([seq], model.vocab.pad_id)
    logits, _ = _forward(model.params, model.cfg, batch, want_cache=False)
    return logits[0]


def generate(prefix: TokenSequence, model: AlignmentModel, max_len: int = 32,
             decode: str = "greedy") -> str:
    """Greedily extend a prompt until <eos> or max_len new tokens.

    Ties break toward the lowest token id (argmax semantics). Returns the
    generated words (specials stripped).
    """
    if decode != "greedy":
        raise ConfigError(f"unsupported decode mode {decode!r}")
    if prefix.loss_mask.any():
        raise ConfigError("generation prefix must end before the answer region")
    tokens = prefix.tokens.tolist()
    generated: list[int] = []
    eos = model.vocab.eos_id
    for _ in range(max_len):
        if len(tokens) >= model.cfg.max_len:
            break
        seq = TokenSequence(np.array(tokens, dtype=np.int64), prefix.visuals,
                            np.zeros(len(tokens), dtype=bool))
        logits = forward_logits(model, seq)
        nxt = int(np.argmax(logits[-1]))
        if nxt == eos:
            break
        generated.append(nxt)
        tokens.append(nxt)
    return model.vocab.decode(generated)
