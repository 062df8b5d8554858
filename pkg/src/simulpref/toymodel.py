"""A tiny numpy translation agent with hand-written gradients.

The model reads a source prefix, gates each word by a learned content score,
turns the gate cumsum into a soft ordinal, and attends to the word whose
ordinal matches the next target position. The attended embedding feeds a
softmax token head; the same embedding plus the amount of un-emitted content
feeds a logistic write-confidence head. Everything is differentiable by hand:
forward returns a cache and backward turns per-position gradients on token
log-probs and confidences into parameter gradients.

Sequence scoring covers target positions 1..T+1, the last one scoring the
end marker, which matches the layout the preference losses expect.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Sentence
from .errors import ValidationError
from .policy import AgentStep

BOS = "<s>"
EOS = "</s>"

CHECKPOINT_VERSION = 1

_CONF_EPS = 1e-12


@dataclass
class ToyVocab:
    src_tokens: tuple[str, ...]
    tgt_tokens: tuple[str, ...]  # includes BOS and EOS
    src_ids: dict[str, int] = field(init=False, repr=False)
    tgt_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if BOS not in self.tgt_tokens or EOS not in self.tgt_tokens:
            raise ValidationError("target vocab must include the BOS and EOS markers")
        self.src_ids = {tok: i for i, tok in enumerate(self.src_tokens)}
        self.tgt_ids = {tok: i for i, tok in enumerate(self.tgt_tokens)}
        if len(self.src_ids) != len(self.src_tokens) or len(self.tgt_ids) != len(self.tgt_tokens):
            raise ValidationError("vocab contains duplicate tokens")

    @property
    def bos_id(self) -> int:
        return self.tgt_ids[BOS]

    @property
    def eos_id(self) -> int:
        return self.tgt_ids[EOS]

    def encode_src(self, tokens: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.src_ids[t] for t in tokens], dtype=np.int64)
        except KeyError as e:
            raise ValidationError(f"source token {e.args[0]!r} not in vocab") from e

    def encode_tgt(self, tokens: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.tgt_ids[t] for t in tokens], dtype=np.int64)
        except KeyError as e:
            raise ValidationError(f"target token {e.args[0]!r} not in vocab") from e


def init_params(vocab: ToyVocab, embed_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    vs, vt, d = len(vocab.src_tokens), len(vocab.tgt_tokens), embed_dim
    return {
        "E_src": rng.normal(0.0, 0.3, (vs, d)),
        "E_tgt": rng.normal(0.0, 0.3, (vt, d)),
        "w_gate": np.zeros(d),
        "b_gate": np.zeros(1),
        "kappa": np.array([2.0]),
        "u_boost": np.array([1.0]),
        "W_prev": rng.normal(0.0, 0.2, (d, d)),
        "w_remain": np.zeros(d),
        "W_out": rng.normal(0.0, 0.3, (vt, d)),
        "b_out": np.zeros(vt),
        "w_conf": np.zeros(d),
        "v_conf": np.array([0.5]),
        "b_conf": np.zeros(1),
    }


def param_count(params: dict[str, np.ndarray]) -> int:
    return sum(int(np.prod(p.shape)) for p in params.values())


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _forward(params, src_ids: np.ndarray, prev_ids: np.ndarray, q: np.ndarray) -> dict:
    """Shared forward pass for a block of target positions.

    q holds the 0-based target ordinals; prev_ids the conditioning token per
    position. Returns a cache with every intermediate the backward needs.
    """
    e = params["E_src"][src_ids]  # (L, d)
    gate_in = e @ params["w_gate"] + params["b_gate"][0]
    g = _sigmoid(gate_in)
    m = np.concatenate(([0.0], np.cumsum(g)[:-1]))  # exclusive ordinal
    total = float(np.sum(g))
    diff = m[None, :] - q[:, None]  # (P, L)
    scores = -params["kappa"][0] * diff**2 + params["u_boost"][0] * g[None, :]
    scores = scores - scores.max(axis=1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=1, keepdims=True)
    ctx = attn @ e  # (P, d)
    p_emb = params["E_tgt"][prev_ids]  # (P, d)
    # The decoder state carries the un-emitted content mass explicitly, so
    # the token head can tell "more to say" from "done" the same way the
    # confidence head does.
    h = ctx + p_emb @ params["W_prev"].T + np.outer(total - q, params["w_remain"])
    logits = h @ params["W_out"].T + params["b_out"]
    logp_all = _log_softmax(logits)
    conf_in = ctx @ params["w_conf"] + params["v_conf"][0] * (total - q) + params["b_conf"][0]
    conf = np.clip(_sigmoid(conf_in), _CONF_EPS, 1.0 - _CONF_EPS)
    return {
        "src_ids": src_ids,
        "prev_ids": prev_ids,
        "q": q,
        "e": e,
        "g": g,
        "m": m,
        "total": total,
        "diff": diff,
        "attn": attn,
        "ctx": ctx,
        "p_emb": p_emb,
        "h": h,
        "logp_all": logp_all,
        "conf": conf,
    }


def score_sequence(
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str],
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Teacher-forced scores for a target sequence against a source prefix.

    Returns (logp, confidence, cache) over positions 1..T+1, position T+1
    scoring the end marker.
    """
    if len(src_tokens) == 0:
        raise ValidationError("cannot score against an empty source prefix")
    src_ids = vocab.encode_src(src_tokens)
    tgt_ids = vocab.encode_tgt(tgt_tokens)
    prev_ids = np.concatenate(([vocab.bos_id], tgt_ids))
    targets = np.concatenate((tgt_ids, [vocab.eos_id]))
    q = np.arange(len(targets), dtype=float)
    cache = _forward(params, src_ids, prev_ids, q)
    rows = np.arange(len(targets))
    logp = cache["logp_all"][rows, targets]
    cache["targets"] = targets
    return logp, cache["conf"].copy(), cache


def backward(
    params: dict[str, np.ndarray],
    cache: dict,
    d_logp: np.ndarray,
    d_conf: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    """Accumulate parameter gradients for one scored sequence.

    d_logp and d_conf are the loss gradients w.r.t. the per-position target
    log-probs and confidences returned by score_sequence.
    """
    targets = cache["targets"]
    attn, e, g, ctx = cache["attn"], cache["e"], cache["g"], cache["ctx"]
    conf, q, diff = cache["conf"], cache["q"], cache["diff"]
    rows = np.arange(len(targets))

    # Confidence head; the sigmoid derivative uses the clipped output, which
    # only matters in the saturated regime where it vanishes anyway.
    d_conf_in = d_conf * conf * (1.0 - conf)
    grads["w_conf"] += ctx.T @ d_conf_in
    grads["v_conf"][0] += float(np.sum(d_conf_in * (cache["total"] - q)))
    grads["b_conf"][0] += float(np.sum(d_conf_in))
    d_ctx = np.outer(d_conf_in, params["w_conf"])
    d_total = params["v_conf"][0] * float(np.sum(d_conf_in))

    # Token head.
    probs = np.exp(cache["logp_all"])
    d_logits = -probs * d_logp[:, None]
    d_logits[rows, targets] += d_logp
    grads["W_out"] += d_logits.T @ cache["h"]
    grads["b_out"] += d_logits.sum(axis=0)
    d_h = d_logits @ params["W_out"]
    d_ctx += d_h
    d_p_emb = d_h @ params["W_prev"]
    grads["W_prev"] += d_h.T @ cache["p_emb"]
    np.add.at(grads["E_tgt"], cache["prev_ids"], d_p_emb)
    remain = cache["total"] - q
    grads["w_remain"] += d_h.T @ remain
    d_total += float(np.sum(d_h @ params["w_remain"]))

    # Attention block.
    d_attn = d_ctx @ e.T
    d_scores = attn * (d_attn - np.sum(attn * d_attn, axis=1, keepdims=True))
    grads["kappa"][0] += float(np.sum(d_scores * (-(diff**2))))
    grads["u_boost"][0] += float(np.sum(d_scores * g[None, :]))
    d_diff = d_scores * (-2.0 * params["kappa"][0] * diff)
    d_m = d_diff.sum(axis=0)
    d_g = params["u_boost"][0] * d_scores.sum(axis=0)
    d_e = attn.T @ d_ctx

    # Exclusive cumsum backward plus the total-content path.
    suffix = np.cumsum(d_m[::-1])[::-1]
    d_g += suffix - d_m
    d_g += d_total

    d_gate_in = d_g * g * (1.0 - g)
    grads["w_gate"] += e.T @ d_gate_in
    grads["b_gate"][0] += float(np.sum(d_gate_in))
    d_e += np.outer(d_gate_in, params["w_gate"])
    np.add.at(grads["E_src"], cache["src_ids"], d_e)


def greedy_step(
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str],
) -> tuple[str, float, dict[str, float]]:
    """Greedy next token, write confidence, and the full distribution."""
    if len(src_tokens) == 0:
        raise ValidationError("cannot step on an empty source prefix")
    src_ids = vocab.encode_src(src_tokens)
    prev = vocab.encode_tgt(tgt_tokens[-1:]) if tgt_tokens else np.array([vocab.bos_id])
    q = np.array([float(len(tgt_tokens))])
    cache = _forward(params, src_ids, prev, q)
    logp = cache["logp_all"][0].copy()
    probs = np.exp(logp)
    logp[vocab.bos_id] = -np.inf  # the sentence marker is never emitted
    token = vocab.tgt_tokens[int(np.argmax(logp))]
    conf = float(cache["conf"][0])
    dist = {tok: float(p) for tok, p in zip(vocab.tgt_tokens, probs)}
    return token, conf, dist


@dataclass
class ToyAgent:
    """Policy-loop adapter around a parameter set and vocab."""

    params: dict[str, np.ndarray]
    vocab: ToyVocab

    def step(self, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
        token, conf, dist = greedy_step(
            self.params, self.vocab, source_prefix.tokens, target_prefix.tokens
        )
        next_token = None if token == EOS else token
        return AgentStep(next_token=next_token, confidence=conf, distribution=dist)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    meta: dict | None = None,
) -> None:
    """Write a versioned binary checkpoint with the vocab embedded."""
    payload = {
        "format": "simulpref-toy-agent",
        "format_version": CHECKPOINT_VERSION,
        "src_vocab": list(vocab.src_tokens),
        "tgt_vocab": list(vocab.tgt_tokens),
        "params": {k: np.asarray(v) for k, v in params.items()},
        "meta": dict(meta or {}),
    }
    with Path(path).open("wb") as fh:
        pickle.dump(payload, fh, protocol=4)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ToyVocab, dict]:
    with Path(path).open("rb") as fh:
        try:
            payload = pickle.load(fh)
        except Exception as e:
            raise ValidationError(f"unreadable checkpoint {path}") from e
    if not isinstance(payload, dict) or payload.get("format") != "simulpref-toy-agent":
        raise ValidationError(f"{path} is not a toy agent checkpoint")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint version {payload.get('format_version')!r}"
        )
    vocab = ToyVocab(tuple(payload["src_vocab"]), tuple(payload["tgt_vocab"]))
    params = {k: np.asarray(v, dtype=float) for k, v in payload["params"].items()}
    return params, vocab, payload["meta"]


def load_agent(path: str | Path) -> ToyAgent:
    params, vocab, _ = load_checkpoint(path)
    return ToyAgent(params, vocab)
