"""Post-LN transformer encoder for two-class sequence classification, in numpy.

Forward and backward passes are written out by hand. Batches are trimmed to
their longest real sequence before the forward pass: padded keys get ``-inf``
attention scores and every layer is position-wise, so the first-token output
does not depend on trailing padding.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

from ..errors import ShapeError

LN_EPS = 1e-12
INIT_STD = 0.02


@dataclass
class ModelConfig:
    vocab_size: int
    num_layers: int = 4
    num_heads: int = 8
    d_model: int = 256
    d_ff: int = 1024
    dropout: float = 0.1
    max_len: int = 512
    num_labels: int = 2
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("vocab_size", "num_layers", "num_heads", "d_model", "d_ff", "max_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.d_model % self.num_heads:
            raise ValueError("d_model must be divisible by num_heads")
        if self.num_labels != 2:
            raise ValueError("num_labels must be 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be a probability below 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    def to_json(self) -> dict:
        return asdict(self)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f = cfg.d_model, cfg.d_ff
    shapes = {"embed.token": (cfg.vocab_size, d), "embed.position": (cfg.max_len, d)}
    for l in range(cfg.num_layers):
        p = f"layer{l}."
        for m in ("q", "k", "v", "o"):
            shapes[p + f"attn.{m}.w"] = (d, d)
            shapes[p + f"attn.{m}.b"] = (d,)
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        shapes[p + "ffn.w1"] = (d, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
    shapes["head.w"] = (d, cfg.num_labels)
    shapes["head.b"] = (cfg.num_labels,)
    return shapes


def is_decayed(name: str) -> bool:
    """Weight decay applies to matrices and embeddings, not to biases or layer-norm parameters."""
    return not (name.endswith(".b") or ".ln" in name or name.endswith(".g") or ".b1" in name or ".b2" in name)


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Truncated normal (std 0.02) matrices, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(cfg.seed)
    dtype = np.dtype(cfg.dtype)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".g"):
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        else:
            arr = _trunc_normal(rng, shape, INIT_STD)
        params[name] = arr.astype(dtype)
    return params


def check_params(params: dict, cfg: ModelConfig) -> None:
    shapes = param_shapes(cfg)
    if set(params) != set(shapes):
        raise ShapeError(f"parameter names differ from the configuration: {sorted(set(params) ^ set(shapes))[:5]}")
    for name, shape in shapes.items():
        if tuple(params[name].shape) != shape:
            raise ShapeError(f"{name}: shape {params[name].shape} != {shape}")


# ---------------------------------------------------------------- primitives


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def layer_norm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(0)
    db = dy.reshape(-1, dy.shape[-1]).sum(0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def masked_softmax(scores, key_mask):
    """Softmax over the last axis with masked keys at ``-inf``; rows sum to 1 over real keys, 0 with none."""
    s = np.where(key_mask, scores, -np.inf)
    top = s.max(-1, keepdims=True)
    e = np.exp(s - np.where(np.isfinite(top), top, 0.0))
    total = e.sum(-1, keepdims=True)
    # a row with no real key attends to nothing
    return e / np.where(total > 0, total, 1.0)


def _dropout_mask(rng, shape, rate, dtype):
    if rng is None or rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


# ------------------------------------------------------------------- forward


def trim(ids: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cut trailing columns that are padding in every row."""
    if ids.shape[1] == 0:
        return ids, mask
    used = np.flatnonzero(mask.any(0))
    width = int(used[-1]) + 1 if used.size else 1
    return ids[:, :width], mask[:, :width]


def forward(params: dict, cfg: ModelConfig, ids: np.ndarray, mask: np.ndarray,
            rng: np.random.Generator | None = None, keep_cache: bool = False):
    """Logits ``[batch, 2]`` for token ids and attention masks of shape ``[batch, len]``.

    ``rng`` enables dropout (training mode). With ``keep_cache`` the
    activations needed by :func:`backward` are returned as a second value.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask)
    if ids.ndim != 2 or ids.shape != mask.shape:
        raise ShapeError("ids and mask must be matching [batch, length] arrays")
    if ids.shape[1] > cfg.max_len:
        raise ShapeError(f"sequence length {ids.shape[1]} exceeds max_len {cfg.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ShapeError("token id outside the vocabulary")
    if params["embed.token"].shape != (cfg.vocab_size, cfg.d_model):
        raise ShapeError("embedding table does not match the configuration")
    ids, mask = trim(ids, mask)
    dtype = params["embed.token"].dtype
    B, T = ids.shape
    H, dh, d = cfg.num_heads, cfg.head_dim, cfg.d_model
    rate = cfg.dropout if rng is not None else 0.0
    key_mask = mask.astype(bool)[:, None, None, :]
    scale = dtype.type(1.0 / math.sqrt(dh))

    x = params["embed.token"][ids] + params["embed.position"][:T]
    drop = _dropout_mask(rng, x.shape, rate, dtype)
    if drop is not None:
        x = x * drop
    cache = {"ids": ids, "mask": mask, "emb_drop": drop, "layers": []}

    for l in range(cfg.num_layers):
        p = f"layer{l}."
        lc = {"x": x}
        q = (x @ params[p + "attn.q.w"] + params[p + "attn.q.b"]).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        k = (x @ params[p + "attn.k.w"] + params[p + "attn.k.b"]).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        v = (x @ params[p + "attn.v.w"] + params[p + "attn.v.b"]).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        probs = masked_softmax((q @ k.transpose(0, 1, 3, 2)) * scale, key_mask)
        pdrop = _dropout_mask(rng, probs.shape, rate, dtype)
        pd = probs * pdrop if pdrop is not None else probs
        ctx = (pd @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
        att = ctx @ params[p + "attn.o.w"] + params[p + "attn.o.b"]
        adrop = _dropout_mask(rng, att.shape, rate, dtype)
        if adrop is not None:
            att = att * adrop
        x1, ln1 = layer_norm(x + att, params[p + "ln1.g"], params[p + "ln1.b"])
        h = x1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        gh = gelu(h).astype(dtype, copy=False)
        f = gh @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        fdrop = _dropout_mask(rng, f.shape, rate, dtype)
        if fdrop is not None:
            f = f * fdrop
        x, ln2 = layer_norm(x1 + f, params[p + "ln2.g"], params[p + "ln2.b"])
        if keep_cache:
            lc.update(q=q, k=k, v=v, probs=probs, pdrop=pdrop, pd=pd, ctx=ctx, adrop=adrop,
                      ln1=ln1, x1=x1, h=h, gh=gh, fdrop=fdrop, ln2=ln2)
            cache["layers"].append(lc)
        else:
            cache["layers"].append({"probs": probs})

    cls = x[:, 0, :]
    cdrop = _dropout_mask(rng, cls.shape, rate, dtype)
    if cdrop is not None:
        cls = cls * cdrop
    logits = cls @ params["head.w"] + params["head.b"]
    if keep_cache:
        cache.update(cls=cls, cdrop=cdrop, xL=x)
        return logits, cache
    return logits


def backward(params: dict, cfg: ModelConfig, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with respect to every parameter, given ``dL/dlogits``."""
    grads = {name: np.zeros_like(v) for name, v in params.items()}
    ids = cache["ids"]
    B, T = ids.shape
    H, dh, d = cfg.num_heads, cfg.head_dim, cfg.d_model
    dtype = params["embed.token"].dtype
    scale = dtype.type(1.0 / math.sqrt(dh))

    grads["head.w"] = cache["cls"].T @ dlogits
    grads["head.b"] = dlogits.sum(0)
    dcls = dlogits @ params["head.w"].T
    if cache["cdrop"] is not None:
        dcls = dcls * cache["cdrop"]
    dx = np.zeros((B, T, d), dtype=dtype)
    dx[:, 0, :] = dcls

    for l in reversed(range(cfg.num_layers)):
        p = f"layer{l}."
        c = cache["layers"][l]
        # second sublayer: x = LN(x1 + drop(ffn(x1)))
        dres, grads[p + "ln2.g"], grads[p + "ln2.b"] = layer_norm_backward(dx, params[p + "ln2.g"], c["ln2"])
        df = dres * c["fdrop"] if c["fdrop"] is not None else dres
        grads[p + "ffn.w2"] = c["gh"].reshape(-1, cfg.d_ff).T @ df.reshape(-1, d)
        grads[p + "ffn.b2"] = df.reshape(-1, d).sum(0)
        dgh = df @ params[p + "ffn.w2"].T
        dh_ = (dgh * gelu_grad(c["h"])).astype(dtype, copy=False)
        grads[p + "ffn.w1"] = c["x1"].reshape(-1, d).T @ dh_.reshape(-1, cfg.d_ff)
        grads[p + "ffn.b1"] = dh_.reshape(-1, cfg.d_ff).sum(0)
        dx1 = dres + dh_ @ params[p + "ffn.w1"].T
        # first sublayer: x1 = LN(x + drop(attn(x)))
        dres, grads[p + "ln1.g"], grads[p + "ln1.b"] = layer_norm_backward(dx1, params[p + "ln1.g"], c["ln1"])
        datt = dres * c["adrop"] if c["adrop"] is not None else dres
        grads[p + "attn.o.w"] = c["ctx"].reshape(-1, d).T @ datt.reshape(-1, d)
        grads[p + "attn.o.b"] = datt.reshape(-1, d).sum(0)
        dctx = (datt @ params[p + "attn.o.w"].T).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        dpd = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = c["pd"].transpose(0, 1, 3, 2) @ dctx
        dprobs = dpd * c["pdrop"] if c["pdrop"] is not None else dpd
        probs = c["probs"]
        dscores = probs * (dprobs - (dprobs * probs).sum(-1, keepdims=True))
        dscores = dscores * scale
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        x = c["x"]
        xf = x.reshape(-1, d)
        dxl = dres.copy()
        for name, dm in (("q", dq), ("k", dk), ("v", dv)):
            dm2 = dm.transpose(0, 2, 1, 3).reshape(-1, d)
            grads[p + f"attn.{name}.w"] = xf.T @ dm2
            grads[p + f"attn.{name}.b"] = dm2.sum(0)
            dxl += (dm2 @ params[p + f"attn.{name}.w"].T).reshape(B, T, d)
        dx = dxl

    if cache["emb_drop"] is not None:
        dx = dx * cache["emb_drop"]
    grads["embed.position"][:T] = dx.sum(0)
    np.add.at(grads["embed.token"], ids.reshape(-1), dx.reshape(-1, d))
    return grads


# ---------------------------------------------------------------------- loss


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(-1, keepdims=True)
    return z - np.log(np.exp(z).sum(-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean two-class cross-entropy of ``softmax(logits)`` against integer labels."""
    labels = np.asarray(labels)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    lp = log_softmax(np.asarray(logits, dtype=np.float64))
    return float(-lp[np.arange(len(labels)), labels].mean())


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)
