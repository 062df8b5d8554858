"""End-to-end acceptance checks, one test per numbered criterion.

Each test is self-contained: oracles (quadratic inversion counting, the
pairwise sequence baseline, the raw translatability condition) are re-coded
here rather than imported, so every check runs two independent routes.
The two training-based criteria share one session-scoped five-seed run.
"""

from __future__ import annotations

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from simulpref.corpus import AlignmentMap, Sentence, write_jsonl_corpus
from simulpref.latency import (
    average_lagging,
    delays_from_trace,
    differentiable_average_lagging,
    worst_case_al_bound,
)
from simulpref.losses import (
    LossConfig,
    TerminalMode,
    TokenScores,
    gradient_check_suite,
    optimal_policy_oracle,
    simuldpo_loss,
)
from simulpref.metrics import inversion_count, normalized_inversion_rate
from simulpref.policy import CopyAgent, PolicyConfig, ScriptedAgent, run_session, run_wait_k
from simulpref.prefixes import extract_prefix_pairs
from simulpref.toytask import SyntheticTaskSpec, generate_synthetic_corpus
from simulpref.training import (
    MSFTTranslator,
    SimulPreferenceTuner,
    evaluate_tradeoff,
    mean_session_confidence,
)


def test_c01_gradients_match_finite_differences():
    start = time.monotonic()
    for loss in ("msft", "simuldpo", "simulcpo", "simulkto"):
        worst = gradient_check_suite(loss, instances=20, seed=0, h=1e-5)
        assert worst < 1e-4, f"{loss}: max relative error {worst:.3e}"
    assert time.monotonic() - start < 10.0


def test_c02_reduces_to_pairwise_sequence_baseline():
    def baseline(policy_w, ref_w, policy_l, ref_l, beta):
        # textbook pairwise loss on summed sequence log-probabilities
        margin = beta * ((sum(policy_w) - sum(ref_w)) - (sum(policy_l) - sum(ref_l)))
        return -math.log(1.0 / (1.0 + math.exp(-margin)))

    rng = np.random.default_rng(7)
    for _ in range(100):
        beta = float(rng.uniform(0.05, 2.0))
        cfg = LossConfig(alpha=0.0, beta=beta, terminal_mode=TerminalMode.PENALTY_ONLY)
        sides = []
        for _ in range(2):
            n = int(rng.integers(1, 6))
            sides.append(
                TokenScores(
                    -rng.uniform(0.1, 3.0, n + 1),
                    -rng.uniform(0.1, 3.0, n + 1),
                    np.full(n + 1, 1.0 - 1e-15),
                    n,
                )
            )
        w, l = sides
        expected = baseline(
            w.logp_policy[: w.seq_len],
            w.logp_ref[: w.seq_len],
            l.logp_policy[: l.seq_len],
            l.logp_ref[: l.seq_len],
            beta,
        )
        got = simuldpo_loss(w, l, cfg).value
        assert abs(got - expected) < 1e-12


def test_c03_inversion_counting_matches_quadratic_oracle():
    def quadratic(seq):
        return sum(
            1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j]
        )

    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        perm = rng.permutation(n).tolist()
        assert inversion_count(perm) == quadratic(perm)
    for n in (2, 5, 17, 50):
        assert normalized_inversion_rate(list(range(n))).value == 0.0
        assert normalized_inversion_rate(list(range(n, 0, -1))).value == 100.0


def test_c04_waitk_hits_closed_form_lag():
    agent = CopyAgent()
    for k in (1, 3, 5):
        for src_len in (6, 8, 12):
            source = Sentence(tuple(f"x{i}" for i in range(src_len)))
            result = run_wait_k(agent, source, k, ratio=1.0)
            delays = delays_from_trace(result.trace)
            ref_len = result.trace.ref_len
            assert ref_len == src_len  # one-to-one corpus
            al = average_lagging(delays, ref_len=ref_len)
            dal = differentiable_average_lagging(delays, ref_len=ref_len)
            assert abs(al - k) < 1e-9
            assert abs(dal - k) < 1e-9


def test_c05_worst_case_lag_under_linear_bound():
    rng = np.random.default_rng(13)
    violations = 0
    for _ in range(100_000):
        full_src = int(rng.integers(1, 31))
        full_tgt = int(rng.integers(1, 31))
        budget = int(rng.integers(full_tgt, full_tgt + 30))
        px = int(rng.integers(1, full_src + 1))
        py = int(rng.integers(1, full_tgt + 1))
        al_worst, bound = worst_case_al_bound(px, py, full_src, full_tgt, budget)
        if al_worst > bound:
            violations += 1
    assert violations == 0


def test_c06_optimal_policy_round_trips_rewards():
    rng = np.random.default_rng(17)
    for _ in range(50):
        vocab = int(rng.integers(1, 4))
        max_len = int(rng.integers(1, 4))
        cfg = LossConfig(
            alpha=float(rng.uniform(0.0, 1.0)), beta=float(rng.uniform(0.1, 2.0))
        )
        rewards = {}

        def reward_fn(y):
            if y not in rewards:
                rewards[y] = float(rng.normal())
            return rewards[y]

        def ref_fn(y):
            return float(rng.uniform(0.1, 1.0))

        policy = optimal_policy_oracle(vocab, max_len, reward_fn, ref_fn, cfg)
        assert policy.max_reward_residual < 1e-9
        assert abs(sum(policy.probabilities.values()) - 1.0) < 1e-12


def test_c07_prefix_extraction_matches_brute_force():
    def brute_force(alignment: AlignmentMap) -> set[tuple[int, int]]:
        # positions straight from the raw links: a target token sits at the
        # rightmost source word it touches; unaligned tokens inherit the
        # running maximum (they become translatable with their context)
        pos = []
        running = 0
        for t in range(1, alignment.target_len + 1):
            linked = [s for tt, s in alignment.links if tt == t]
            if linked:
                running = max(running, max(linked))
            pos.append(running if running > 0 else 1)
        out = set()
        for L in range(1, alignment.source_len + 1):
            for T in range(1, alignment.target_len + 1):
                covered = all(pos[t] <= L for t in range(T))
                nxt = pos[T] if T < alignment.target_len else float("inf")
                if covered and nxt > L:
                    out.add((L, T))
        return out

    rng = np.random.default_rng(19)
    for _ in range(500):
        slen = int(rng.integers(1, 7))
        tlen = int(rng.integers(1, 7))
        links = set()
        for t in range(1, tlen + 1):
            for s in range(1, slen + 1):
                if rng.random() < 0.35:
                    links.add((t, s))
        alignment = AlignmentMap(frozenset(links), tlen, slen)
        got = {
            (p.source_prefix_len, p.target_prefix_len)
            for p in extract_prefix_pairs(alignment)
        }
        assert got == brute_force(alignment)


# criterion 8 --------------------------------------------------------------

# (confidences, tokens, read_length, threshold, max_target_len, source_len,
#  expected events, expected truncated flag)
SCRIPTED_CASES = [
    # worked two-word-read trace: write, wait for two words, write twice
    ([0.9, 0.2, 0.9, 0.9], ["a", "b", "c"], 2, 0.5, 64, 4,
     [("R", 1), ("W", "a"), ("R", 2), ("W", "b"), ("W", "c")], False),
    # degenerate always-confident agent: streams after the initial read
    ([], ["a", "b"], 1, 0.5, 64, 5,
     [("R", 1), ("W", "a"), ("W", "b")], False),
    # degenerate never-confident agent: reads everything, then forced writes
    ([0.0] * 8, ["a", "b"], 1, 0.5, 64, 3,
     [("R", 1), ("R", 1), ("R", 1), ("W", "a"), ("W", "b")], False),
    # the comparison is at-or-above the threshold
    ([0.5], ["a"], 1, 0.5, 64, 3,
     [("R", 1), ("W", "a")], False),
    # threshold 1.0 still writes on exact 1.0 confidence
    ([1.0, 0.99], ["a", "b"], 1, 1.0, 64, 2,
     [("R", 1), ("W", "a"), ("R", 1), ("W", "b")], False),
    # the read block clamps at the source end
    ([0.2], ["a"], 3, 0.5, 64, 2,
     [("R", 1), ("R", 1), ("W", "a")], False),
    # truncation at the target budget
    ([], ["a", "b", "c", "d", "e"], 1, 0.5, 3, 4,
     [("R", 1), ("W", "a"), ("W", "b"), ("W", "c")], True),
    # two waits, then a burst
    ([0.3, 0.3, 0.9, 0.9, 0.9], ["a", "b", "c"], 2, 0.5, 64, 6,
     [("R", 1), ("R", 2), ("R", 2), ("W", "a"), ("W", "b"), ("W", "c")], False),
    # strict alternation
    ([0.9, 0.1, 0.9, 0.1, 0.9], ["a", "b", "c"], 1, 0.5, 64, 4,
     [("R", 1), ("W", "a"), ("R", 1), ("W", "b"), ("R", 1), ("W", "c")], False),
    # early stop with source words left over and trailing reads logged
    ([0.9, 0.2, 0.2, 0.9], ["a"], 1, 0.5, 64, 4,
     [("R", 1), ("W", "a"), ("R", 1), ("R", 1)], False),
]


def test_c08_policy_conformance_and_monotonicity():
    from simulpref.latency import Read

    def events_of(trace):
        return [
            ("R", ev.count) if isinstance(ev, Read) else ("W", ev.token)
            for ev in trace.events
        ]

    def src(n):
        return Sentence(tuple(f"x{i}" for i in range(1, n + 1)))

    for confs, tokens, n, threshold, cap, slen, expected, truncated in SCRIPTED_CASES:
        cfg = PolicyConfig(read_length=n, threshold=threshold, max_target_len=cap)
        result = run_session(ScriptedAgent(confs, tokens), src(slen), cfg)
        assert events_of(result.trace) == expected
        assert result.truncated is truncated

    # raising the threshold can only delay each written word
    rng = np.random.default_rng(23)
    checked = 0
    for _ in range(200):
        slen = int(rng.integers(2, 10))
        confs = rng.uniform(0, 1, 15).tolist()
        tokens = [f"t{i}" for i in range(8)]
        n = int(rng.integers(1, 4))
        lo_t, hi_t = sorted(rng.uniform(0.05, 0.95, 2).tolist())
        lo = run_session(
            ScriptedAgent(confs, tokens), src(slen),
            PolicyConfig(read_length=n, threshold=lo_t),
        )
        hi = run_session(
            ScriptedAgent(confs, tokens), src(slen),
            PolicyConfig(read_length=n, threshold=hi_t),
        )
        if lo.hypothesis.tokens and hi.hypothesis.tokens:
            for a, b in zip(
                delays_from_trace(lo.trace).delays, delays_from_trace(hi.trace).delays
            ):
                assert b >= a
            checked += 1
    assert checked >= 150

    # on single-wait agents a bigger read block can only push delays up
    for _ in range(200):
        slen = int(rng.integers(3, 12))
        k = int(rng.integers(0, 4))
        confs = [0.9] * k + [0.1] + [0.9] * 6
        tokens = [f"t{i}" for i in range(6)]
        n = int(rng.integers(1, 4))
        small = run_session(
            ScriptedAgent(confs, tokens), src(slen), PolicyConfig(read_length=n)
        )
        big = run_session(
            ScriptedAgent(confs, tokens), src(slen), PolicyConfig(read_length=n + 2)
        )
        for a, b in zip(
            delays_from_trace(small.trace).delays, delays_from_trace(big.trace).delays
        ):
            assert b >= a


# criteria 9 and 10 ---------------------------------------------------------

SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def five_seed_runs():
    """MSFT plus two preference runs (gentle and harsh latency pressure) per
    seed, evaluated on held-out data at the lowest-latency setting."""
    start = time.monotonic()
    spec = SyntheticTaskSpec()
    per_seed = []
    for seed in SEEDS:
        train = generate_synthetic_corpus(spec, 60, seed=seed)
        val = generate_synthetic_corpus(spec, 40, seed=1000 + seed)
        msft = MSFTTranslator(seed=seed).fit(train)
        gentle = SimulPreferenceTuner(base=msft, alpha=0.1, seed=seed).fit(train)
        harsh = SimulPreferenceTuner(base=msft, alpha=10.0, seed=seed).fit(train)

        def probe(model):
            row = evaluate_tradeoff(model.agent_, val.examples, n_values=(1,))[0]
            conf = mean_session_confidence(model.agent_, val.examples, read_length=1)
            return {"conf": conf, "laal": row.laal, "f1": row.token_f1}

        per_seed.append({"msft": probe(msft), "gentle": probe(gentle), "harsh": probe(harsh)})

    # the reference-conditioning ablation only needs one seed
    base = MSFTTranslator(seed=0).fit(generate_synthetic_corpus(spec, 60, seed=0))
    train0 = generate_synthetic_corpus(spec, 60, seed=0)
    full = SimulPreferenceTuner(base=base, seed=0, ref_conditioning="full").fit(train0)
    prefix = SimulPreferenceTuner(base=base, seed=0, ref_conditioning="prefix").fit(train0)

    return {
        "per_seed": per_seed,
        "curve_full": full.loss_curve_,
        "curve_prefix": prefix.loss_curve_,
        "elapsed": time.monotonic() - start,
    }


def _mean(runs, model, key):
    return float(np.mean([r[model][key] for r in runs]))


def test_c09_latency_pressure_lowers_confidence_raises_lag(five_seed_runs):
    runs = five_seed_runs["per_seed"]
    conf_gentle = _mean(runs, "gentle", "conf")
    conf_harsh = _mean(runs, "harsh", "conf")
    laal_gentle = _mean(runs, "gentle", "laal")
    laal_harsh = _mean(runs, "harsh", "laal")
    assert conf_harsh < conf_gentle, (conf_harsh, conf_gentle)
    assert laal_harsh > laal_gentle, (laal_harsh, laal_gentle)
    assert five_seed_runs["elapsed"] < 300.0


def test_c10_preference_tuning_holds_quality_at_lowest_latency(five_seed_runs):
    runs = five_seed_runs["per_seed"]
    f1_msft = _mean(runs, "msft", "f1")
    f1_tuned = _mean(runs, "gentle", "f1")
    laal_msft = _mean(runs, "msft", "laal")
    laal_tuned = _mean(runs, "gentle", "laal")
    assert f1_tuned >= f1_msft, (f1_tuned, f1_msft)
    assert laal_tuned <= laal_msft, (laal_tuned, laal_msft)

    curve_full = five_seed_runs["curve_full"]
    curve_prefix = five_seed_runs["curve_prefix"]
    divergence = max(abs(a - b) for a, b in zip(curve_full, curve_prefix))
    assert divergence > 1e-6, divergence


# criterion 11 ---------------------------------------------------------------


def _run(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "simulpref", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def test_c11_seeded_commands_are_byte_identical(tmp_path):
    corpus = generate_synthetic_corpus(SyntheticTaskSpec(), 6, seed=5)
    corpus_path = tmp_path / "corpus.jsonl"
    write_jsonl_corpus(corpus.examples, corpus_path)
    for name, amaps in (
        ("align_w.txt", corpus.alignments_preferred),
        ("align_l.txt", corpus.alignments_rejected),
    ):
        lines = []
        for m in amaps:
            links = sorted(m.links, key=lambda ts: (ts[1], ts[0]))
            lines.append(" ".join(f"{s - 1}-{t - 1}" for t, s in links))
        (tmp_path / name).write_text("\n".join(lines) + "\n")
    hyps_ref = tmp_path / "hyps_ref.txt"
    hyps_ref.write_text(
        "\n".join(" ".join(ex.preferred.tokens) for ex in corpus.examples) + "\n"
    )
    scores = tmp_path / "scores.jsonl"
    scores.write_text(
        json.dumps(
            {
                "preferred": {
                    "logp_policy": [-0.1, -0.2],
                    "logp_ref": [-0.15, -0.2],
                    "confidence": [0.8, 0.2],
                },
                "rejected": {
                    "logp_policy": [-1.0, -0.9, -0.5],
                    "logp_ref": [-0.9, -0.8, -0.5],
                    "confidence": [0.7, 0.6, 0.3],
                },
            }
        )
        + "\n"
    )

    train_sets = [
        "--set", "corpus_examples=12", "--set", "msft_epochs=3", "--set", "tune_epochs=2",
    ]
    commands = {
        "train-toy": [
            "train-toy", *train_sets,
            "--checkpoint", "{run}/toy.ckpt", "--curve", "{run}/curve.csv",
        ],
        "simulate-checkpoint": [
            "simulate", "--corpus", str(corpus_path), "--agent", "checkpoint",
            "--checkpoint", "{prev}/toy.ckpt",
            "--traces", "{run}/traces.jsonl", "--hypotheses", "{run}/hyps.txt",
        ],
        "simulate-waitk": [
            "simulate", "--corpus", str(corpus_path), "--agent", "wait-k", "--k", "3",
            "--traces", "{run}/wk.jsonl",
        ],
        "eval-latency": ["eval-latency", "--traces", "{prev}/wk.jsonl",
                         "--output", "{run}/latency.csv"],
        "eval-preference": [
            "eval-preference", "--corpus", str(corpus_path),
            "--hypotheses", str(hyps_ref),
            "--alignments", str(tmp_path / "align_w.txt"),
            "--output", "{run}/pref.csv",
        ],
        "extract-prefixes": [
            "extract-prefixes", "--corpus", str(corpus_path),
            "--alignments-preferred", str(tmp_path / "align_w.txt"),
            "--alignments-rejected", str(tmp_path / "align_l.txt"),
            "--output", "{run}/prefixes.jsonl",
        ],
        "loss": ["loss", "--loss", "simulkto", "--scores", str(scores)],
        "grad-check": ["grad-check", "--instances", "5", "--seed", "3"],
        "tradeoff": [
            "tradeoff", "--checkpoint", "{prev}/toy.ckpt", "--corpus", str(corpus_path),
            "--n-values", "1,2", "--output", "{run}/tradeoff.csv",
        ],
    }

    outputs: dict[str, list[tuple[str, dict[str, bytes]]]] = {}
    for run_name in ("first", "second"):
        run_dir = tmp_path / run_name
        run_dir.mkdir()
        for cmd_name, template in commands.items():
            args = [a.replace("{run}", str(run_dir)).replace("{prev}", str(run_dir))
                    for a in template]
            # echoed output paths differ by run directory; the content must not
            stdout = _run(args, cwd=tmp_path).replace(str(run_dir), "<run>")
            files = {
                p.name: p.read_bytes()
                for p in sorted(run_dir.iterdir())
                if p.is_file()
            }
            outputs.setdefault(cmd_name, []).append((stdout, files))

    for cmd_name, (first, second) in outputs.items():
        assert first[0] == second[0], f"{cmd_name}: stdout differs between runs"
        assert first[1].keys() == second[1].keys(), f"{cmd_name}: file sets differ"
        for fname in first[1]:
            assert first[1][fname] == second[1][fname], (
                f"{cmd_name}: {fname} differs between runs"
            )
