"""Command-line entry point.

Subcommands cover the whole pipeline: prefix extraction, simulation,
latency/preference evaluation, loss evaluation and gradient checking, toy
training, the reading-length tradeoff sweep, and the optional annotation
client. Exit codes: 0 success, 1 for validation/input errors, 2 for
anything unexpected.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from pathlib import Path

from .config import ConfigView, apply_overrides, parse_flat_config
from .corpus import (
    Sentence,
    parse_conllu_trees,
    parse_jsonl_corpus,
    parse_pharaoh_file,
    write_jsonl_corpus,
)
from .errors import ValidationError
from .latency import (
    average_lagging,
    average_proportion,
    delays_from_trace,
    differentiable_average_lagging,
    length_adaptive_average_lagging,
    read_trace_jsonl,
    write_trace_jsonl,
)
from .losses import (
    LOSS_NAMES,
    LossConfig,
    TerminalMode,
    TokenScores,
    estimate_kto_shift,
    gradient_check_suite,
    msft_loss,
    simulcpo_loss,
    simuldpo_loss,
    simulkto_loss,
)
from .metrics import (
    aligned_source_positions,
    dependency_depth,
    normalized_inversion_rate,
    sentence_length_ratio,
    token_f1,
)
from .policy import CopyAgent, PolicyConfig, ScriptedAgent, run_session, run_wait_k
from .prefixes import build_prefix_preference_dataset
from .prompts import AnnotationClient, PromptTemplate, load_bundled_template, render_preference_prompt
from .report import emit_tradeoff_report, latency_report, preference_report
from .toymodel import load_agent, save_checkpoint
from .toytask import SyntheticTaskSpec, generate_synthetic_corpus, hypothesis_source_positions
from .training import MSFTTranslator, SimulPreferenceTuner, evaluate_tradeoff

# Help output is golden-file tested; pin the wrap width so it does not follow
# the invoking terminal.
_FORMATTER = functools.partial(argparse.HelpFormatter, width=80)


def _write_or_print(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# extract-prefixes


def cmd_extract_prefixes(args) -> int:
    examples = parse_jsonl_corpus(args.corpus)
    for i, ex in enumerate(examples):
        if ex.rejected is None:
            raise ValidationError(f"corpus line {i + 1} has no rejected translation")
    lens_w = [(len(ex.source), len(ex.preferred)) for ex in examples]
    lens_l = [(len(ex.source), len(ex.rejected)) for ex in examples]
    aligns_w = parse_pharaoh_file(args.alignments_preferred, lens_w)
    aligns_l = parse_pharaoh_file(args.alignments_rejected, lens_l)
    triples = []
    for ex, a_w, a_l in zip(examples, aligns_w, aligns_l):
        triples.extend(build_prefix_preference_dataset(ex, a_w, a_l))
    write_jsonl_corpus(triples, args.output)
    print(f"wrote {len(triples)} prefix triples from {len(examples)} sentence pairs")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _load_scripts(path: str) -> list[ScriptedAgent]:
    agents = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip() == "":
                continue
            try:
                record = json.loads(raw)
                agents.append(
                    ScriptedAgent(
                        [float(c) for c in record["confidences"]],
                        [str(t) for t in record["tokens"]],
                    )
                )
            except (ValueError, KeyError, TypeError):
                raise ValidationError(f"{path}:{lineno}: bad script record")
    return agents


def cmd_simulate(args) -> int:
    examples = parse_jsonl_corpus(args.corpus)
    results = []
    if args.agent == "wait-k":
        agent = CopyAgent()
        for ex in examples:
            results.append(
                run_wait_k(
                    agent,
                    ex.source,
                    args.k,
                    ratio=args.ratio,
                    max_target_len=args.max_target_len,
                    ref_len=len(ex.preferred),
                )
            )
    elif args.agent == "scripted":
        if args.scripts is None:
            raise ValidationError("--scripts is required for the scripted agent")
        agents = _load_scripts(args.scripts)
        if len(agents) != len(examples):
            raise ValidationError(
                f"{len(agents)} scripts for {len(examples)} corpus sentences"
            )
        cfg = PolicyConfig(args.read_length, args.threshold, args.max_target_len)
        for agent, ex in zip(agents, examples):
            results.append(run_session(agent, ex.source, cfg, ref_len=len(ex.preferred)))
    else:  # checkpoint
        if args.checkpoint is None:
            raise ValidationError("--checkpoint is required for the checkpoint agent")
        agent = load_agent(args.checkpoint)
        cfg = PolicyConfig(args.read_length, args.threshold, args.max_target_len)
        for ex in examples:
            results.append(run_session(agent, ex.source, cfg, ref_len=len(ex.preferred)))
    write_trace_jsonl([(r.trace, r.truncated) for r in results], args.traces)
    if args.hypotheses is not None:
        text = "".join(r.hypothesis.text() + "\n" for r in results)
        Path(args.hypotheses).write_text(text, encoding="utf-8")
    print(f"simulated {len(results)} sessions")
    return 0


# ---------------------------------------------------------------------------
# eval-latency / eval-preference


def cmd_eval_latency(args) -> int:
    traces = read_trace_jsonl(args.traces)
    per_sentence = []
    for i, trace in enumerate(traces):
        if trace.hyp_len == 0:
            raise ValidationError(f"trace {i + 1} wrote no tokens; latency is undefined")
        delays = delays_from_trace(trace)
        per_sentence.append(
            (
                average_lagging(delays, ref_len=trace.ref_len),
                length_adaptive_average_lagging(delays, ref_len=trace.ref_len),
                average_proportion(delays),
                differentiable_average_lagging(delays, ref_len=trace.ref_len),
            )
        )
    _write_or_print(latency_report(per_sentence), args.output)
    return 0


def cmd_eval_preference(args) -> int:
    examples = parse_jsonl_corpus(args.corpus)
    hyp_lines = Path(args.hypotheses).read_text(encoding="utf-8").splitlines()
    if len(hyp_lines) != len(examples):
        raise ValidationError(
            f"{len(hyp_lines)} hypotheses for {len(examples)} corpus sentences"
        )
    hyps = [Sentence(tuple(line.split())) for line in hyp_lines]
    lens = [(len(ex.source), len(hyp)) for ex, hyp in zip(examples, hyps)]
    aligns = parse_pharaoh_file(args.alignments, lens)
    trees = None
    if args.conllu is not None:
        trees = parse_conllu_trees(args.conllu)
        if len(trees) != len(examples):
            raise ValidationError(
                f"{len(trees)} dependency trees for {len(examples)} sentences"
            )
    per_sentence = []
    for i, (ex, hyp, amap) in enumerate(zip(examples, hyps, aligns)):
        nir = normalized_inversion_rate(aligned_source_positions(amap))
        depth = dependency_depth(trees[i]) if trees is not None else None
        slr = sentence_length_ratio(hyp, ex.source)
        f1 = token_f1(hyp, ex.preferred) if len(hyp) > 0 else 0.0
        per_sentence.append((nir, depth, slr, f1))
    _write_or_print(preference_report(per_sentence), args.output)
    return 0


# ---------------------------------------------------------------------------
# loss / grad-check


def _scores_from_record(record: dict, side: str, lineno: int) -> TokenScores:
    try:
        blob = record[side]
        return TokenScores.from_lists(
            blob["logp_policy"], blob["logp_ref"], blob["confidence"]
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"scores line {lineno}: missing or malformed {side!r}") from e


def _read_score_records(path: str) -> list[tuple[int, dict]]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip() == "":
                continue
            try:
                records.append((lineno, json.loads(raw)))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not valid JSON")
    if not records:
        raise ValidationError(f"{path}: no score records")
    return records


def cmd_loss(args) -> int:
    cfg = LossConfig(
        alpha=args.alpha,
        beta=args.beta,
        lambda_w=args.lambda_w,
        lambda_l=args.lambda_l,
        terminal_mode=TerminalMode(args.terminal_mode),
    )
    records = _read_score_records(args.scores)
    values = []
    if args.loss == "msft":
        for lineno, record in records:
            values.append(msft_loss(_scores_from_record(record, "preferred", lineno)).value)
    elif args.loss in ("simuldpo", "simulcpo"):
        fn = simuldpo_loss if args.loss == "simuldpo" else simulcpo_loss
        for lineno, record in records:
            w = _scores_from_record(record, "preferred", lineno)
            l = _scores_from_record(record, "rejected", lineno)
            values.append(fn(w, l, cfg).value)
    else:  # simulkto: every present side scored against the shift
        per_record: list[list[tuple[TokenScores, bool]]] = []
        for lineno, record in records:
            pairs = [
                (_scores_from_record(record, side, lineno), flag)
                for side, flag in (("preferred", True), ("rejected", False))
                if side in record
            ]
            if not pairs:
                raise ValidationError(f"scores line {lineno}: no preferred or rejected side")
            per_record.append(pairs)
        pool = [s for pairs in per_record for s, _ in pairs]
        z0 = args.z0 if args.z0 is not None else estimate_kto_shift(pool)
        for pairs in per_record:
            values.append(sum(simulkto_loss(s, f, z0, cfg).value for s, f in pairs))
    lines = [f"{i + 1},{v:.6f}" for i, v in enumerate(values)]
    lines.append(f"mean,{sum(values) / len(values):.6f}")
    _write_or_print("index,loss\n" + "\n".join(lines) + "\n", args.output)
    return 0


def cmd_grad_check(args) -> int:
    for name in LOSS_NAMES:
        err = gradient_check_suite(
            name, instances=args.instances, seed=args.seed, h=args.step
        )
        print(f"{name} {err:.3e}")
    return 0


# ---------------------------------------------------------------------------
# train-toy / tradeoff


TRAIN_DEFAULTS = {
    "task_content_vocab": "12",
    "task_filler_vocab": "4",
    "task_min_len": "6",
    "task_max_len": "12",
    "task_filler_rate": "0.3",
    "task_swap_rate": "0.5",
    "corpus_examples": "60",
    "corpus_seed": "0",
    "embed_dim": "16",
    "msft_lr": "0.1",
    "msft_epochs": "16",
    "msft_batch": "16",
    "msft_stop_weight": "1.0",
    "variant": "simuldpo",
    "alpha": "0.1",
    "beta": "0.1",
    "lambda_w": "1.0",
    "lambda_l": "1.0",
    "terminal_mode": "eos_logratio",
    "ref_conditioning": "full",
    "tune_lr": "0.01",
    "tune_epochs": "6",
    "tune_batch": "8",
    "seed": "0",
    "stage": "both",
}


def _train_config(args) -> ConfigView:
    values = dict(TRAIN_DEFAULTS)
    if args.config is not None:
        file_values = parse_flat_config(args.config)
        unknown = set(file_values) - set(TRAIN_DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(file_values)
    merged = apply_overrides(values, args.set or [])
    unknown = set(merged) - set(TRAIN_DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return ConfigView(merged)


def cmd_train_toy(args) -> int:
    cfg = _train_config(args)
    spec = SyntheticTaskSpec(
        content_vocab=cfg.get_int("task_content_vocab"),
        filler_vocab=cfg.get_int("task_filler_vocab"),
        min_len=cfg.get_int("task_min_len"),
        max_len=cfg.get_int("task_max_len"),
        filler_rate=cfg.get_float("task_filler_rate"),
        swap_rate=cfg.get_float("task_swap_rate"),
    )
    corpus = generate_synthetic_corpus(
        spec, cfg.get_int("corpus_examples"), seed=cfg.get_int("corpus_seed")
    )
    stage = cfg.get_choice("stage", ("msft", "both"))
    msft = MSFTTranslator(
        embed_dim=cfg.get_int("embed_dim"),
        lr=cfg.get_float("msft_lr"),
        epochs=cfg.get_int("msft_epochs"),
        batch_size=cfg.get_int("msft_batch"),
        stop_weight=cfg.get_float("msft_stop_weight"),
        seed=cfg.get_int("seed"),
    )
    msft.fit(corpus)
    print(f"msft: {msft.n_items_} prefix pairs, final loss {msft.loss_curve_[-1]:.6f}")
    curves = [("msft", msft.loss_curve_)]
    final = msft
    meta = {"config": {k: cfg.get_str(k) for k in sorted(TRAIN_DEFAULTS)}}
    if stage == "both":
        variant = cfg.get_choice("variant", ("simuldpo", "simulcpo", "simulkto"))
        tuner = SimulPreferenceTuner(
            base=msft,
            variant=variant,
            alpha=cfg.get_float("alpha"),
            beta=cfg.get_float("beta"),
            lambda_w=cfg.get_float("lambda_w"),
            lambda_l=cfg.get_float("lambda_l"),
            terminal_mode=cfg.get_choice(
                "terminal_mode", ("eos_logratio", "penalty_only")
            ),
            ref_conditioning=cfg.get_choice("ref_conditioning", ("full", "prefix")),
            lr=cfg.get_float("tune_lr"),
            epochs=cfg.get_int("tune_epochs"),
            batch_size=cfg.get_int("tune_batch"),
            seed=cfg.get_int("seed"),
        )
        tuner.fit(corpus)
        print(
            f"{variant}: {tuner.n_items_} preference triples,"
            f" final loss {tuner.loss_curve_[-1]:.6f}"
        )
        curves.append((variant, tuner.loss_curve_))
        final = tuner
    meta["loss_curves"] = {name: list(curve) for name, curve in curves}
    save_checkpoint(args.checkpoint, final.params_, final.vocab_, meta)
    print(f"checkpoint written to {args.checkpoint}")
    if args.curve is not None:
        lines = ["stage,epoch,loss"]
        for name, curve in curves:
            lines.extend(f"{name},{i + 1},{v:.6f}" for i, v in enumerate(curve))
        Path(args.curve).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_tradeoff(args) -> int:
    agent = load_agent(args.checkpoint)
    examples = parse_jsonl_corpus(args.corpus)
    try:
        n_values = [int(part) for part in args.n_values.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"--n-values must be a comma list of integers, got {args.n_values!r}")
    if not n_values:
        raise ValidationError("--n-values is empty")
    position_fn = hypothesis_source_positions if args.nir == "synthetic" else None
    rows = evaluate_tradeoff(
        agent,
        examples,
        n_values,
        threshold=args.threshold,
        max_target_len=args.max_target_len,
        position_fn=position_fn,
    )
    csv_text, summary = emit_tradeoff_report(rows)
    _write_or_print(csv_text, args.output)
    if args.output is not None:
        print(summary)
    return 0


# ---------------------------------------------------------------------------
# annotate


def cmd_annotate(args) -> int:
    examples = parse_jsonl_corpus(args.corpus)
    if args.template is not None:
        template = PromptTemplate(Path(args.template).read_text(encoding="utf-8"))
    else:
        template = load_bundled_template()
    prompts = [render_preference_prompt(template, ex.as_parallel()) for ex in examples]
    client = AnnotationClient(
        endpoint=args.endpoint,
        model=args.model,
        max_attempts=args.max_attempts,
        backoff=args.backoff,
        timeout=args.timeout,
        max_workers=args.max_workers,
    )
    responses = client.annotate_all(prompts)
    with Path(args.output).open("w", encoding="utf-8") as fh:
        for resp in responses:
            record = {
                "index": resp.index,
                "translation": resp.text,
                "status": resp.status,
                "attempts": resp.attempts,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"annotated {len(responses)} sentences")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulpref",
        description="Preference-learning toolkit for simultaneous translation.",
        formatter_class=_FORMATTER,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser(
        "extract-prefixes",
        help="turn aligned preference pairs into prefix-level triples",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--corpus", required=True, help="JSONL corpus with both target sides")
    p.add_argument(
        "--alignments-preferred", required=True, help="Pharaoh file for the preferred side"
    )
    p.add_argument(
        "--alignments-rejected", required=True, help="Pharaoh file for the rejected side"
    )
    p.add_argument("--output", required=True, help="output JSONL path")
    p.set_defaults(fn=cmd_extract_prefixes)

    p = sub.add_parser(
        "simulate",
        help="run an agent over a corpus and record read/write traces",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--corpus", required=True, help="JSONL corpus")
    p.add_argument(
        "--agent",
        required=True,
        choices=("wait-k", "scripted", "checkpoint"),
        help="agent kind",
    )
    p.add_argument("--k", type=int, default=3, help="wait-k offset (default 3)")
    p.add_argument(
        "--ratio", type=float, default=1.0, help="wait-k catchup ratio (default 1.0)"
    )
    p.add_argument("--scripts", help="JSONL of per-sentence confidence/token scripts")
    p.add_argument("--checkpoint", help="toy agent checkpoint path")
    p.add_argument(
        "--read-length", type=int, default=1, help="words consumed per READ (default 1)"
    )
    p.add_argument(
        "--threshold", type=float, default=0.5, help="write-confidence threshold (default 0.5)"
    )
    p.add_argument(
        "--max-target-len", type=int, default=64, help="hypothesis length cap (default 64)"
    )
    p.add_argument("--traces", required=True, help="output trace JSONL path")
    p.add_argument("--hypotheses", help="optional output text file, one hypothesis per line")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser(
        "eval-latency",
        help="latency metrics (AL/LAAL/AP/DAL) over a trace file",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--traces", required=True, help="trace JSONL path")
    p.add_argument("--output", help="output CSV path (default: stdout)")
    p.set_defaults(fn=cmd_eval_latency)

    p = sub.add_parser(
        "eval-preference",
        help="preference metrics (NIR/DD/SLR/token-F1) over hypotheses",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--corpus", required=True, help="JSONL corpus with references")
    p.add_argument("--hypotheses", required=True, help="text file, one hypothesis per line")
    p.add_argument(
        "--alignments", required=True, help="Pharaoh file aligning source to hypothesis"
    )
    p.add_argument("--conllu", help="optional CoNLL-U parses of the hypotheses")
    p.add_argument("--output", help="output CSV path (default: stdout)")
    p.set_defaults(fn=cmd_eval_preference)

    p = sub.add_parser(
        "loss",
        help="evaluate a training loss over a JSONL file of score records",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--loss", required=True, choices=LOSS_NAMES, help="loss to evaluate")
    p.add_argument("--scores", required=True, help="JSONL of per-sequence score records")
    p.add_argument("--alpha", type=float, default=0.1, help="latency threshold (default 0.1)")
    p.add_argument("--beta", type=float, default=0.1, help="preference sharpness (default 0.1)")
    p.add_argument("--lambda-w", type=float, default=1.0, help="preferred-side weight")
    p.add_argument("--lambda-l", type=float, default=1.0, help="rejected-side weight")
    p.add_argument(
        "--terminal-mode",
        choices=tuple(m.value for m in TerminalMode),
        default=TerminalMode.EOS_LOGRATIO.value,
        help="stop-position handling (default eos_logratio)",
    )
    p.add_argument(
        "--z0", type=float, default=None, help="desirability shift (default: batch estimate)"
    )
    p.add_argument("--output", help="output CSV path (default: stdout)")
    p.set_defaults(fn=cmd_loss)

    p = sub.add_parser(
        "grad-check",
        help="finite-difference check of every loss gradient",
        formatter_class=_FORMATTER,
    )
    p.add_argument(
        "--instances", type=int, default=20, help="random instances per loss (default 20)"
    )
    p.add_argument("--seed", type=int, default=0, help="instance seed (default 0)")
    p.add_argument(
        "--step", type=float, default=1e-5, help="central difference step (default 1e-5)"
    )
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser(
        "train-toy",
        help="train the toy agent on the synthetic task",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable; wins over the file)",
    )
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.add_argument("--curve", help="optional loss-curve CSV path")
    p.set_defaults(fn=cmd_train_toy)

    p = sub.add_parser(
        "tradeoff",
        help="latency/quality curve over reading lengths for a checkpoint",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--checkpoint", required=True, help="toy agent checkpoint path")
    p.add_argument("--corpus", required=True, help="JSONL corpus with references")
    p.add_argument(
        "--n-values", default="1,2,4", help="comma list of reading lengths (default 1,2,4)"
    )
    p.add_argument(
        "--threshold", type=float, default=0.5, help="write-confidence threshold (default 0.5)"
    )
    p.add_argument(
        "--max-target-len", type=int, default=64, help="hypothesis length cap (default 64)"
    )
    p.add_argument(
        "--nir",
        choices=("synthetic", "none"),
        default="synthetic",
        help="how to align hypotheses for the inversion metric (default synthetic)",
    )
    p.add_argument("--output", help="output CSV path (default: stdout)")
    p.set_defaults(fn=cmd_tradeoff)

    p = sub.add_parser(
        "annotate",
        help="send preference prompts to a completion endpoint",
        formatter_class=_FORMATTER,
    )
    p.add_argument("--corpus", required=True, help="JSONL corpus to annotate")
    p.add_argument("--template", help="prompt template file (default: bundled Zh->En)")
    p.add_argument("--endpoint", required=True, help="chat-completions endpoint URL")
    p.add_argument("--model", required=True, help="model identifier sent to the endpoint")
    p.add_argument("--output", required=True, help="output JSONL path")
    p.add_argument(
        "--max-workers", type=int, default=4, help="bounded in-flight requests (default 4)"
    )
    p.add_argument(
        "--max-attempts", type=int, default=3, help="delivery attempts per prompt (default 3)"
    )
    p.add_argument(
        "--backoff", type=float, default=0.5, help="base retry backoff seconds (default 0.5)"
    )
    p.add_argument(
        "--timeout", type=float, default=30.0, help="per-request timeout seconds (default 30)"
    )
    p.set_defaults(fn=cmd_annotate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
