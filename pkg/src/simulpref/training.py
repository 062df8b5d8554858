"""Trainers that take the toy agent through the two-stage recipe.

Stage one fits translation and write-confidence jointly on prefix pairs
(MSFTTranslator). Stage two starts from those weights and optimizes one of
the preference objectives over prefix-level preference triples
(SimulPreferenceTuner), scoring the policy on the source prefix and the
frozen reference on the full source. Both are sklearn-style estimators:
constructor args are stored verbatim, fitted state lands in trailing
underscore attributes, and get_params/set_params come from BaseEstimator.

evaluate_tradeoff sweeps the reading length and aggregates the latency and
preference metrics per setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import AlignmentMap, PreferenceExample, Sentence
from .errors import TrainingError, ValidationError
from .latency import (
    average_lagging,
    average_proportion,
    delays_from_trace,
    differentiable_average_lagging,
    length_adaptive_average_lagging,
)
from .losses import (
    LossConfig,
    TerminalMode,
    TokenScores,
    estimate_kto_shift,
    msft_loss,
    simulcpo_loss,
    simuldpo_loss,
    simulkto_loss,
)
from .metrics import normalized_inversion_rate, sentence_length_ratio, token_f1
from .policy import Agent, AgentStep, PolicyConfig, run_session
from .prefixes import extract_prefix_pairs, prefix_table
from .toymodel import BOS, EOS, ToyAgent, ToyVocab, backward, init_params, score_sequence
from .toytask import SyntheticCorpus

PREFERENCE_VARIANTS = ("simuldpo", "simulcpo", "simulkto")


# ---------------------------------------------------------------------------
# Per-item objectives (exposed so gradients can be finite-difference checked
# against the scalar returned here)


def msft_item_loss(
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    src_tokens: Sequence[str],
    tgt_tokens: Sequence[str],
    full_sentence: bool,
    stop_weight: float = 1.0,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    """Joint token/confidence objective for one prefix pair.

    Full-sentence pairs additionally pay the end-marker negative log
    probability (weighted by stop_weight) so that greedy decoding learns to
    terminate; prefix pairs get confidence supervision only at their end.
    """
    logp, conf, cache = score_sequence(params, vocab, src_tokens, tgt_tokens)
    scores = TokenScores(logp, np.zeros_like(logp), conf, len(tgt_tokens))
    res = msft_loss(scores)
    value = res.value
    d_logp = res.grads[0].logp_policy.copy()
    d_conf = res.grads[0].confidence.copy()
    if full_sentence:
        value += stop_weight * -float(logp[-1])
        d_logp[-1] -= stop_weight
    if grads is not None:
        backward(params, cache, d_logp, d_conf, grads)
    return value


@dataclass(frozen=True)
class PreferenceItem:
    """One prefix-level training triple with precomputed reference scores."""

    src_prefix: tuple[str, ...]
    preferred: tuple[str, ...]
    rejected: tuple[str, ...]
    ref_logp_preferred: np.ndarray
    ref_logp_rejected: np.ndarray


def _policy_scores(params, vocab, item: PreferenceItem):
    logp_w, conf_w, cache_w = score_sequence(params, vocab, item.src_prefix, item.preferred)
    logp_l, conf_l, cache_l = score_sequence(params, vocab, item.src_prefix, item.rejected)
    ts_w = TokenScores(logp_w, item.ref_logp_preferred, conf_w, len(item.preferred))
    ts_l = TokenScores(logp_l, item.ref_logp_rejected, conf_l, len(item.rejected))
    return ts_w, ts_l, cache_w, cache_l


def preference_item_loss(
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    item: PreferenceItem,
    cfg: LossConfig,
    variant: str,
    z0: float = 0.0,
    grads: dict[str, np.ndarray] | None = None,
) -> float:
    """Preference objective for one triple under the chosen variant.

    z0 only matters for the desirability variant and is treated as a
    constant, matching how the shift estimate is used during training.
    """
    ts_w, ts_l, cache_w, cache_l = _policy_scores(params, vocab, item)
    if variant == "simuldpo":
        res = simuldpo_loss(ts_w, ts_l, cfg)
        gw, gl = res.grads
        value = res.value
    elif variant == "simulcpo":
        res = simulcpo_loss(ts_w, ts_l, cfg)
        gw, gl = res.grads
        value = res.value
    elif variant == "simulkto":
        rw = simulkto_loss(ts_w, True, z0, cfg)
        rl = simulkto_loss(ts_l, False, z0, cfg)
        value = rw.value + rl.value
        gw = rw.grads[0]
        gl = rl.grads[0]
    else:
        raise ValidationError(f"unknown preference variant {variant!r}")
    if grads is not None:
        backward(params, cache_w, gw.logp_policy, gw.confidence, grads)
        backward(params, cache_l, gl.logp_policy, gl.confidence, grads)
    return value


# ---------------------------------------------------------------------------
# Estimators


def _unpack_corpus(corpus, *alignment_sets):
    if isinstance(corpus, SyntheticCorpus):
        return (
            list(corpus.examples),
            list(corpus.alignments_preferred),
            list(corpus.alignments_rejected),
            corpus.spec,
        )
    examples = list(corpus)
    unpacked = []
    for aligns in alignment_sets:
        if aligns is None:
            raise ValidationError("alignments are required unless fitting a synthetic corpus")
        aligns = list(aligns)
        if len(aligns) != len(examples):
            raise ValidationError("one alignment per example is required")
        unpacked.append(aligns)
    return (examples, *unpacked, None)


def _vocab_for(examples: Sequence[PreferenceExample], spec) -> ToyVocab:
    if spec is not None:
        return ToyVocab(spec.source_vocab(), (BOS, EOS) + spec.target_vocab())
    src = sorted({t for ex in examples for t in ex.source.tokens})
    tgt = set()
    for ex in examples:
        tgt.update(ex.preferred.tokens)
        if ex.rejected is not None:
            tgt.update(ex.rejected.tokens)
    return ToyVocab(tuple(src), (BOS, EOS) + tuple(sorted(tgt)))


def _gd_epochs(items, params, rng, epochs, batch_size, lr, item_fn) -> list[float]:
    """Shuffled minibatch gradient descent; returns the per-epoch mean loss."""
    if not items:
        raise ValidationError("training set is empty")
    curve = []
    order = np.arange(len(items))
    for epoch in range(epochs):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            batch_loss = item_fn(batch, grads)
            if not math.isfinite(batch_loss):
                raise TrainingError(
                    f"loss diverged at epoch {epoch}, step {start // batch_size}"
                )
            total += batch_loss
            scale = lr / len(batch)
            for k in params:
                params[k] -= scale * grads[k]
        curve.append(total / len(items))
    return curve


class _SessionPredictor:
    """predict() shared by both estimators once params_/vocab_ exist."""

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise ValidationError("estimator is not fitted yet")

    @property
    def agent_(self) -> ToyAgent:
        self._require_fitted()
        return ToyAgent(self.params_, self.vocab_)

    def predict(
        self,
        sources: Sequence[Sentence],
        read_length: int = 1,
        threshold: float = 0.5,
        max_target_len: int = 64,
    ) -> list[Sentence]:
        self._require_fitted()
        cfg = PolicyConfig(
            read_length=read_length, threshold=threshold, max_target_len=max_target_len
        )
        agent = self.agent_
        return [run_session(agent, src, cfg).hypothesis for src in sources]


class MSFTTranslator(_SessionPredictor, BaseEstimator):
    """Joint translation + write-confidence trainer on prefix pairs."""

    def __init__(
        self,
        embed_dim: int = 16,
        lr: float = 0.1,
        epochs: int = 16,
        batch_size: int = 16,
        stop_weight: float = 1.0,
        seed: int = 0,
    ):
        self.embed_dim = embed_dim
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.stop_weight = stop_weight
        self.seed = seed

    def fit(self, corpus, alignments: Sequence[AlignmentMap] | None = None):
        if isinstance(corpus, SyntheticCorpus):
            examples, aligns, _, spec = _unpack_corpus(corpus)
        else:
            examples, aligns, spec = _unpack_corpus(corpus, alignments)
        vocab = _vocab_for(examples, spec)
        items: list[tuple[tuple[str, ...], tuple[str, ...], bool]] = []
        for ex, align in zip(examples, aligns):
            for pair in extract_prefix_pairs(align):
                items.append(
                    (
                        ex.source.tokens[: pair.source_prefix_len],
                        ex.preferred.tokens[: pair.target_prefix_len],
                        pair.source_prefix_len == len(ex.source),
                    )
                )
        rng = np.random.default_rng(self.seed)
        params = init_params(vocab, self.embed_dim, rng)

        def run_batch(batch, grads):
            return sum(
                msft_item_loss(params, vocab, *items[i], self.stop_weight, grads=grads)
                for i in batch
            )

        self.loss_curve_ = _gd_epochs(
            items, params, rng, self.epochs, self.batch_size, self.lr, run_batch
        )
        self.params_ = params
        self.vocab_ = vocab
        self.n_items_ = len(items)
        return self


class SimulPreferenceTuner(_SessionPredictor, BaseEstimator):
    """Preference-objective fine-tuning on top of a fitted MSFTTranslator.

    The policy is scored on the source prefix of each triple; the frozen
    copy of the base model scores the same continuations on the complete
    source (ref_conditioning="full", the default) or on the prefix
    (ref_conditioning="prefix", the ablation).
    """

    def __init__(
        self,
        base: MSFTTranslator | None = None,
        variant: str = "simuldpo",
        alpha: float = 0.1,
        beta: float = 0.1,
        lambda_w: float = 1.0,
        lambda_l: float = 1.0,
        terminal_mode: str = "eos_logratio",
        ref_conditioning: str = "full",
        lr: float = 0.01,
        epochs: int = 6,
        batch_size: int = 8,
        seed: int = 0,
    ):
        self.base = base
        self.variant = variant
        self.alpha = alpha
        self.beta = beta
        self.lambda_w = lambda_w
        self.lambda_l = lambda_l
        self.terminal_mode = terminal_mode
        self.ref_conditioning = ref_conditioning
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _loss_config(self) -> LossConfig:
        return LossConfig(
            alpha=self.alpha,
            beta=self.beta,
            lambda_w=self.lambda_w,
            lambda_l=self.lambda_l,
            terminal_mode=TerminalMode(self.terminal_mode),
        )

    def fit(
        self,
        corpus,
        alignments_preferred: Sequence[AlignmentMap] | None = None,
        alignments_rejected: Sequence[AlignmentMap] | None = None,
    ):
        if self.base is None or not hasattr(self.base, "params_"):
            raise ValidationError("base must be a fitted MSFTTranslator")
        if self.variant not in PREFERENCE_VARIANTS:
            raise ValidationError(f"variant must be one of {PREFERENCE_VARIANTS}")
        if self.ref_conditioning not in ("full", "prefix"):
            raise ValidationError("ref_conditioning must be 'full' or 'prefix'")
        cfg = self._loss_config()
        examples, aligns_w, aligns_l, _ = _unpack_corpus(
            corpus, alignments_preferred, alignments_rejected
        )
        vocab = self.base.vocab_
        ref_params = self.base.params_

        items: list[PreferenceItem] = []
        for ex, a_w, a_l in zip(examples, aligns_w, aligns_l):
            if ex.rejected is None:
                raise ValidationError("preference tuning needs a rejected translation")
            table_w = prefix_table(a_w)
            table_l = prefix_table(a_l)
            for L in sorted(set(table_w) & set(table_l)):
                w_prefix = ex.preferred.tokens[: table_w[L]]
                l_prefix = ex.rejected.tokens[: table_l[L]]
                if w_prefix == l_prefix:
                    continue
                src_prefix = ex.source.tokens[:L]
                cond = ex.source.tokens if self.ref_conditioning == "full" else src_prefix
                ref_w, _, _ = score_sequence(ref_params, vocab, cond, w_prefix)
                ref_l, _, _ = score_sequence(ref_params, vocab, cond, l_prefix)
                items.append(PreferenceItem(src_prefix, w_prefix, l_prefix, ref_w, ref_l))

        params = {k: v.copy() for k, v in ref_params.items()}
        rng = np.random.default_rng(self.seed)

        def run_batch(batch, grads):
            z0 = 0.0
            if self.variant == "simulkto":
                pool = []
                for i in batch:
                    ts_w, ts_l, _, _ = _policy_scores(params, vocab, items[i])
                    pool.extend((ts_w, ts_l))
                z0 = estimate_kto_shift(pool)
            return sum(
                preference_item_loss(params, vocab, items[i], cfg, self.variant, z0, grads)
                for i in batch
            )

        self.loss_curve_ = _gd_epochs(
            items, params, rng, self.epochs, self.batch_size, self.lr, run_batch
        )
        self.params_ = params
        self.vocab_ = vocab
        self.n_items_ = len(items)
        return self


# ---------------------------------------------------------------------------
# Evaluation sweeps


@dataclass(frozen=True)
class TradeoffRow:
    """Corpus-mean metrics for one reading-length setting."""

    n: int
    laal: float
    al: float
    ap: float
    dal: float
    token_f1: float
    nir: float | None
    slr: float
    depth: float | None = None


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def evaluate_tradeoff(
    agent: Agent,
    examples: Sequence[PreferenceExample],
    n_values: Sequence[int],
    threshold: float = 0.5,
    max_target_len: int = 64,
    position_fn: Callable[[Sentence, Sentence], Sequence[int]] | None = None,
) -> list[TradeoffRow]:
    """Latency/quality curve over reading lengths for a fixed agent.

    position_fn maps (hypothesis, source) to 1-based source positions for the
    inversion metric; without it the NIR column is left undefined. Sessions
    that produce an empty hypothesis score zero quality and are skipped in
    the latency means, which have no definition there.
    """
    if not examples:
        raise ValidationError("need at least one example to evaluate")
    rows = []
    for n in n_values:
        lat: dict[str, list[float]] = {"al": [], "laal": [], "ap": [], "dal": []}
        f1s: list[float] = []
        slrs: list[float] = []
        nirs: list[float] = []
        for ex in examples:
            cfg = PolicyConfig(
                read_length=n, threshold=threshold, max_target_len=max_target_len
            )
            result = run_session(agent, ex.source, cfg, ref_len=len(ex.preferred))
            hyp = result.hypothesis
            if len(hyp) == 0:
                f1s.append(0.0)
                slrs.append(0.0)
                continue
            delays = delays_from_trace(result.trace)
            ref_len = result.trace.ref_len
            lat["al"].append(average_lagging(delays, ref_len=ref_len))
            lat["laal"].append(length_adaptive_average_lagging(delays, ref_len=ref_len))
            lat["ap"].append(average_proportion(delays))
            lat["dal"].append(differentiable_average_lagging(delays, ref_len=ref_len))
            f1s.append(token_f1(hyp, ex.preferred))
            slrs.append(sentence_length_ratio(hyp, ex.source))
            if position_fn is not None:
                rate = normalized_inversion_rate(list(position_fn(hyp, ex.source)))
                if rate.defined:
                    nirs.append(rate.value)
        rows.append(
            TradeoffRow(
                n=int(n),
                laal=_mean(lat["laal"]),
                al=_mean(lat["al"]),
                ap=_mean(lat["ap"]),
                dal=_mean(lat["dal"]),
                token_f1=_mean(f1s),
                nir=_mean(nirs) if nirs else None,
                slr=_mean(slrs),
            )
        )
    return rows


class _ConfidenceTap:
    """Agent wrapper recording every confidence the policy loop sees."""

    def __init__(self, agent: Agent):
        self._agent = agent
        self.confidences: list[float] = []

    def step(self, source_prefix: Sentence, target_prefix: Sentence) -> AgentStep:
        step = self._agent.step(source_prefix, target_prefix)
        self.confidences.append(step.confidence)
        return step


def mean_session_confidence(
    agent: Agent,
    examples: Sequence[PreferenceExample],
    read_length: int = 1,
    threshold: float = 0.5,
    max_target_len: int = 64,
) -> float:
    """Mean of all write-confidence queries over full sessions on a corpus."""
    if not examples:
        raise ValidationError("need at least one example")
    tap = _ConfidenceTap(agent)
    cfg = PolicyConfig(
        read_length=read_length, threshold=threshold, max_target_len=max_target_len
    )
    for ex in examples:
        run_session(tap, ex.source, cfg, ref_len=len(ex.preferred))
    if not tap.confidences:
        raise ValidationError("sessions produced no confidence queries")
    return float(np.mean(tap.confidences))


def confidence_calibration(
    params: dict[str, np.ndarray],
    vocab: ToyVocab,
    examples: Sequence[PreferenceExample],
    alignments: Sequence[AlignmentMap],
) -> tuple[float, float]:
    """Mean confidence at writable positions vs. at prefix ends.

    Scores every prefix pair teacher-forced and averages the confidence over
    positions 1..T separately from position T+1. A calibrated model puts the
    first mean high and the second low.
    """
    write_conf: list[float] = []
    stop_conf: list[float] = []
    for ex, align in zip(examples, alignments):
        for pair in extract_prefix_pairs(align):
            src = ex.source.tokens[: pair.source_prefix_len]
            tgt = ex.preferred.tokens[: pair.target_prefix_len]
            _, conf, _ = score_sequence(params, vocab, src, tgt)
            write_conf.extend(conf[:-1])
            stop_conf.append(float(conf[-1]))
    if not stop_conf:
        raise ValidationError("no prefix pairs to calibrate on")
    return float(np.mean(write_conf)), float(np.mean(stop_conf))
