"""Confidence-weighted preference losses with analytic gradients.

Every loss consumes TokenScores: per-position policy and reference log
probabilities plus a write-confidence, over positions 1..n+1 where n is the
number of target words and position n+1 scores the stop token. Preferred
sequences keep their model confidences (gradients flow through them);
rejected sequences are weighted by the indicator of being a real token
position, with no confidence gradient.

Gradients are returned alongside values as plain arrays, one pair per
TokenScores argument, and are checked against central finite differences by
the harness at the bottom of this module.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError


class TerminalMode(enum.Enum):
    """How the stop position of a preferred sequence enters the reward.

    EOS_LOGRATIO scores the stop token like any other position. PENALTY_ONLY
    drops the log-ratio there and keeps only the length-penalty term, so the
    stop confidence is trained purely as a read signal.
    """

    EOS_LOGRATIO = "eos_logratio"
    PENALTY_ONLY = "penalty_only"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.1
    beta: float = 0.1
    lambda_w: float = 1.0
    lambda_l: float = 1.0
    terminal_mode: TerminalMode = TerminalMode.EOS_LOGRATIO

    def __post_init__(self):
        if self.beta <= 0:
            raise ValidationError("beta must be positive")
        if self.alpha < 0:
            raise ValidationError("alpha must be non-negative")
        if self.lambda_w <= 0 or self.lambda_l <= 0:
            raise ValidationError("lambda weights must be positive")

    def lambda_for(self, is_preferred: bool) -> float:
        return self.lambda_w if is_preferred else self.lambda_l


@dataclass(frozen=True)
class TokenScores:
    """Per-position scores for one scored sequence of n words plus stop.

    Arrays have length n+1. Log probabilities are non-positive; confidences
    live strictly inside (0, 1).
    """

    logp_policy: np.ndarray
    logp_ref: np.ndarray
    confidence: np.ndarray
    seq_len: int

    def __post_init__(self):
        for name in ("logp_policy", "logp_ref", "confidence"):
            arr = np.array(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        if self.seq_len < 0:
            raise ValidationError("seq_len must be non-negative")
        expect = self.seq_len + 1
        for name in ("logp_policy", "logp_ref", "confidence"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.shape[0] != expect:
                raise ValidationError(f"{name} must be a 1-d array of length seq_len+1={expect}")
        if np.any(self.logp_policy > 0) or np.any(self.logp_ref > 0):
            raise ValidationError("log probabilities must be non-positive")
        if np.any(self.confidence <= 0) or np.any(self.confidence >= 1):
            raise ValidationError("confidences must lie strictly inside (0, 1)")

    @classmethod
    def from_lists(
        cls,
        logp_policy: Sequence[float],
        logp_ref: Sequence[float],
        confidence: Sequence[float],
    ) -> "TokenScores":
        n = len(logp_policy) - 1
        return cls(
            np.asarray(logp_policy, dtype=float),
            np.asarray(logp_ref, dtype=float),
            np.asarray(confidence, dtype=float),
            n,
        )

    def replace_entry(self, field: str, index: int, value: float) -> "TokenScores":
        arrays = {
            "logp_policy": self.logp_policy.copy(),
            "logp_ref": self.logp_ref.copy(),
            "confidence": self.confidence.copy(),
        }
        arrays[field][index] = value
        return TokenScores(arrays["logp_policy"], arrays["logp_ref"], arrays["confidence"], self.seq_len)


class SequenceGrads(NamedTuple):
    logp_policy: np.ndarray
    confidence: np.ndarray


@dataclass(frozen=True)
class LossValueWithGrad:
    """A scalar loss plus gradients, one SequenceGrads per scored input."""

    value: float
    grads: tuple[SequenceGrads, ...]


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def _indicator_confidence(scores: TokenScores) -> np.ndarray:
    c = np.ones(scores.seq_len + 1)
    c[scores.seq_len] = 0.0
    return c


def _side_rewards(
    scores: TokenScores, cfg: LossConfig, preferred: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-position rewards r_t = c_t * (beta * logratio_t - alpha).

    Returns (r, dr/dlogp_policy, dr/dconfidence). Rejected sides use the
    token-position indicator as confidence, so their stop position carries
    zero reward and no confidence gradient exists for them.
    """
    conf = scores.confidence if preferred else _indicator_confidence(scores)
    ratio = scores.logp_policy - scores.logp_ref
    base = cfg.beta * ratio - cfg.alpha
    r = conf * base
    dr_dlogp = cfg.beta * conf
    dr_dconf = base.copy()
    if cfg.terminal_mode is TerminalMode.PENALTY_ONLY:
        stop = scores.seq_len
        r[stop] = -cfg.alpha * conf[stop]
        dr_dlogp[stop] = 0.0
        dr_dconf[stop] = -cfg.alpha
    return r, dr_dlogp, dr_dconf


def msft_loss(scores: TokenScores) -> LossValueWithGrad:
    """Supervised prefix loss: token NLL plus write/stop confidence NLL.

    Positions 1..n pay -logp_policy and -log c; the stop position pays
    -log(1 - c), pushing the model to signal READ once the prefix is spent.
    """
    n = scores.seq_len
    lp = scores.logp_policy
    c = scores.confidence
    value = -float(np.sum(lp[:n])) - float(np.sum(np.log(c[:n]))) - math.log1p(-c[n])
    grad_logp = np.zeros(n + 1)
    grad_logp[:n] = -1.0
    grad_conf = np.zeros(n + 1)
    grad_conf[:n] = -1.0 / c[:n]
    grad_conf[n] = 1.0 / (1.0 - c[n])
    return LossValueWithGrad(value, (SequenceGrads(grad_logp, grad_conf),))


def simuldpo_loss(
    scores_preferred: TokenScores, scores_rejected: TokenScores, cfg: LossConfig
) -> LossValueWithGrad:
    """Preference loss on confidence-weighted sequence rewards.

    -log sigmoid(sum r_w - sum r_l) with r_t = c_t*(beta*logratio_t - alpha).
    Gradients flow through the preferred side's policy log-probs and
    confidences and the rejected side's policy log-probs only.
    """
    r_w, dlp_w, dc_w = _side_rewards(scores_preferred, cfg, preferred=True)
    r_l, dlp_l, _ = _side_rewards(scores_rejected, cfg, preferred=False)
    delta = float(np.sum(r_w) - np.sum(r_l))
    value = -_log_sigmoid(delta)
    dl_ddelta = _sigmoid(delta) - 1.0
    grads = (
        SequenceGrads(dl_ddelta * dlp_w, dl_ddelta * dc_w),
        SequenceGrads(-dl_ddelta * dlp_l, np.zeros(scores_rejected.seq_len + 1)),
    )
    return LossValueWithGrad(value, grads)


def _side_utilities(
    scores: TokenScores, cfg: LossConfig, preferred: bool
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Reference-free variant of _side_rewards: u_t = c_t*(beta*logp_t - alpha).
    conf = scores.confidence if preferred else _indicator_confidence(scores)
    base = cfg.beta * scores.logp_policy - cfg.alpha
    u = conf * base
    du_dlogp = cfg.beta * conf
    du_dconf = base.copy()
    if cfg.terminal_mode is TerminalMode.PENALTY_ONLY:
        stop = scores.seq_len
        u[stop] = -cfg.alpha * conf[stop]
        du_dlogp[stop] = 0.0
        du_dconf[stop] = -cfg.alpha
    return u, du_dlogp, du_dconf


def simulcpo_loss(
    scores_preferred: TokenScores, scores_rejected: TokenScores, cfg: LossConfig
) -> LossValueWithGrad:
    """Reference-free preference loss plus token NLL on the preferred side.

    The pairwise term scores u_t = c_t*(beta*logp_policy_t - alpha); the NLL
    term covers the preferred side's word positions. logp_ref fields are
    ignored entirely.
    """
    u_w, dlp_w, dc_w = _side_utilities(scores_preferred, cfg, preferred=True)
    u_l, dlp_l, _ = _side_utilities(scores_rejected, cfg, preferred=False)
    delta = float(np.sum(u_w) - np.sum(u_l))
    n_w = scores_preferred.seq_len
    value = -_log_sigmoid(delta) - float(np.sum(scores_preferred.logp_policy[:n_w]))
    dl_ddelta = _sigmoid(delta) - 1.0
    grad_lp_w = dl_ddelta * dlp_w
    grad_lp_w[:n_w] -= 1.0
    grads = (
        SequenceGrads(grad_lp_w, dl_ddelta * dc_w),
        SequenceGrads(-dl_ddelta * dlp_l, np.zeros(scores_rejected.seq_len + 1)),
    )
    return LossValueWithGrad(value, grads)


def simulkto_loss(
    scores: TokenScores, is_preferred: bool, z0: float, cfg: LossConfig
) -> LossValueWithGrad:
    """Single-sequence desirability loss against a reference shift z0.

    Preferred sequences pay lambda_w*(1 - sigmoid(sum r - z0)); rejected
    ones pay lambda_l*(1 - sigmoid(z0 - sum r)) with indicator confidences.
    z0 is treated as a constant.
    """
    r, dlp, dconf = _side_rewards(scores, cfg, preferred=is_preferred)
    total = float(np.sum(r))
    lam = cfg.lambda_for(is_preferred)
    if is_preferred:
        s = _sigmoid(total - z0)
        value = lam * (1.0 - s)
        dl_dtotal = -lam * s * (1.0 - s)
        grad_conf = dl_dtotal * dconf
    else:
        s = _sigmoid(z0 - total)
        value = lam * (1.0 - s)
        dl_dtotal = lam * s * (1.0 - s)
        grad_conf = np.zeros(scores.seq_len + 1)
    return LossValueWithGrad(value, (SequenceGrads(dl_dtotal * dlp, grad_conf),))


def estimate_kto_shift(batch: Sequence[TokenScores]) -> float:
    """Batch estimate of the desirability shift: clamped mean weighted log-ratio.

    max(0, mean over the batch of sum_t c_t*(logp_policy_t - logp_ref_t)),
    using each sequence's stored confidences.
    """
    if len(batch) == 0:
        raise ValidationError("cannot estimate a shift from an empty batch")
    totals = [float(np.sum(s.confidence * (s.logp_policy - s.logp_ref))) for s in batch]
    return max(0.0, sum(totals) / len(totals))


# ---------------------------------------------------------------------------
# Finite-difference gradient checking

LossFn = Callable[..., LossValueWithGrad]


def finite_difference_grads(
    fn: LossFn, scores_list: Sequence[TokenScores], h: float = 1e-5
) -> list[SequenceGrads]:
    """Central-difference gradients of fn w.r.t. every logp_policy and
    confidence entry of every TokenScores argument."""
    out = []
    for k, scores in enumerate(scores_list):
        fd = {}
        for field in ("logp_policy", "confidence"):
            base = getattr(scores, field)
            grad = np.zeros_like(base)
            for idx in range(base.shape[0]):
                plus = list(scores_list)
                minus = list(scores_list)
                plus[k] = scores.replace_entry(field, idx, base[idx] + h)
                minus[k] = scores.replace_entry(field, idx, base[idx] - h)
                grad[idx] = (fn(*plus).value - fn(*minus).value) / (2.0 * h)
            fd[field] = grad
        out.append(SequenceGrads(fd["logp_policy"], fd["confidence"]))
    return out


def max_relative_gradient_error(
    fn: LossFn, scores_list: Sequence[TokenScores], h: float = 1e-5
) -> float:
    """Largest mismatch between analytic and finite-difference gradients.

    The error of each entry is |a - f| / max(1, |a|, |f|); the unit floor
    keeps near-zero gradients from inflating finite-difference noise.
    """
    analytic = fn(*scores_list).grads
    numeric = finite_difference_grads(fn, scores_list, h=h)
    worst = 0.0
    for a, f in zip(analytic, numeric):
        for a_arr, f_arr in ((a.logp_policy, f.logp_policy), (a.confidence, f.confidence)):
            denom = np.maximum(1.0, np.maximum(np.abs(a_arr), np.abs(f_arr)))
            worst = max(worst, float(np.max(np.abs(a_arr - f_arr) / denom)))
    return worst


def random_token_scores(
    rng: np.random.Generator, min_len: int = 1, max_len: int = 6
) -> TokenScores:
    """A random but valid TokenScores with margins wide enough for h=1e-5."""
    n = int(rng.integers(min_len, max_len + 1))
    logp_policy = -rng.uniform(0.05, 3.0, n + 1)
    logp_ref = -rng.uniform(0.05, 3.0, n + 1)
    confidence = rng.uniform(0.08, 0.92, n + 1)
    return TokenScores(logp_policy, logp_ref, confidence, n)


def _random_config(rng: np.random.Generator) -> LossConfig:
    mode = TerminalMode.EOS_LOGRATIO if rng.random() < 0.5 else TerminalMode.PENALTY_ONLY
    return LossConfig(
        alpha=float(rng.uniform(0.0, 2.0)),
        beta=float(rng.uniform(0.05, 2.0)),
        lambda_w=float(rng.uniform(0.5, 2.0)),
        lambda_l=float(rng.uniform(0.5, 2.0)),
        terminal_mode=mode,
    )


LOSS_NAMES = ("msft", "simuldpo", "simulcpo", "simulkto")


def gradient_check_suite(
    loss: str, instances: int = 20, seed: int = 0, h: float = 1e-5
) -> float:
    """Max relative gradient error over random instances of one loss."""
    if loss not in LOSS_NAMES:
        raise ValidationError(f"unknown loss {loss!r}; expected one of {LOSS_NAMES}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        cfg = _random_config(rng)
        if loss == "msft":
            worst = max(
                worst,
                max_relative_gradient_error(
                    lambda s: msft_loss(s), [random_token_scores(rng)], h=h
                ),
            )
        elif loss == "simuldpo":
            worst = max(
                worst,
                max_relative_gradient_error(
                    lambda w, l: simuldpo_loss(w, l, cfg),
                    [random_token_scores(rng), random_token_scores(rng)],
                    h=h,
                ),
            )
        elif loss == "simulcpo":
            worst = max(
                worst,
                max_relative_gradient_error(
                    lambda w, l: simulcpo_loss(w, l, cfg),
                    [random_token_scores(rng), random_token_scores(rng)],
                    h=h,
                ),
            )
        else:
            is_pref = bool(rng.random() < 0.5)
            z0 = float(rng.uniform(0.0, 1.0))
            worst = max(
                worst,
                max_relative_gradient_error(
                    lambda s: simulkto_loss(s, is_pref, z0, cfg),
                    [random_token_scores(rng)],
                    h=h,
                ),
            )
    return worst


# ---------------------------------------------------------------------------
# Exhaustive optimal-policy check

_MAX_ORACLE_VOCAB = 4
_MAX_ORACLE_LEN = 3


@dataclass(frozen=True)
class OptimalPolicy:
    """Closed-form tilted policy over an enumerable sequence space."""

    probabilities: dict[tuple[int, ...], float]
    log_partition: float
    max_reward_residual: float


def optimal_policy_oracle(
    vocab_size: int,
    max_len: int,
    reward_fn: Callable[[tuple[int, ...]], float],
    ref_distribution: Mapping[tuple[int, ...], float] | Callable[[tuple[int, ...]], float],
    cfg: LossConfig,
) -> OptimalPolicy:
    """Enumerate the reward-tilted policy and verify its reward round-trip.

    Over all sequences of length 1..max_len, the tilted policy is
    ref(y) * exp((reward(y) + alpha*|y|) / beta) normalized by the partition
    sum. The residual reports how far beta*(log pi - log ref) + beta*log Z
    - alpha*|y| drifts from the input reward; algebraically it is zero.
    """
    if vocab_size < 1 or vocab_size > _MAX_ORACLE_VOCAB:
        raise ValidationError(f"vocab_size must be within 1..{_MAX_ORACLE_VOCAB}")
    if max_len < 1 or max_len > _MAX_ORACLE_LEN:
        raise ValidationError(f"max_len must be within 1..{_MAX_ORACLE_LEN}")

    sequences: list[tuple[int, ...]] = []

    def expand(prefix: tuple[int, ...]):
        if len(prefix) >= 1:
            sequences.append(prefix)
        if len(prefix) == max_len:
            return
        for v in range(vocab_size):
            expand(prefix + (v,))

    expand(())

    if callable(ref_distribution):
        ref_raw = np.array([ref_distribution(y) for y in sequences], dtype=float)
    else:
        try:
            ref_raw = np.array([ref_distribution[y] for y in sequences], dtype=float)
        except KeyError as e:
            raise ValidationError(f"ref_distribution missing sequence {e.args[0]!r}") from e
    if np.any(ref_raw <= 0):
        raise ValidationError("reference distribution must give positive mass everywhere")
    log_ref = np.log(ref_raw / ref_raw.sum())

    rewards = np.array([float(reward_fn(y)) for y in sequences])
    lengths = np.array([len(y) for y in sequences], dtype=float)
    tilt = (rewards + cfg.alpha * lengths) / cfg.beta
    scores = log_ref + tilt
    log_z = float(np.logaddexp.reduce(scores))
    log_pi = scores - log_z
    pi = np.exp(log_pi)

    reconstructed = cfg.beta * (log_pi - log_ref) + cfg.beta * log_z - cfg.alpha * lengths
    residual = float(np.max(np.abs(reconstructed - rewards)))
    return OptimalPolicy(
        probabilities={y: float(p) for y, p in zip(sequences, pi)},
        log_partition=log_z,
        max_reward_residual=residual,
    )
