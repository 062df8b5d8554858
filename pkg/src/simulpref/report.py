"""CSV report emission with byte-stable formatting.

All numbers are written with six decimal places so repeated runs compare
equal byte for byte; undefined cells (no tree available, inversion rate on a
too-short alignment) stay empty.
"""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .metrics import InversionRate
from .training import TradeoffRow

TRADEOFF_COLUMNS = ("n", "LAAL", "AL", "AP", "DAL", "token_F1", "NIR", "SLR", "DD")
LATENCY_COLUMNS = ("sentence", "AL", "LAAL", "AP", "DAL")
PREFERENCE_COLUMNS = ("sentence", "NIR", "DD", "SLR", "token_F1", "NIR_defined")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return f"{value:.6f}"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit_tradeoff_report(rows: Sequence[TradeoffRow]) -> tuple[str, str]:
    """Reading-length sweep as (csv_text, one-line-per-setting summary)."""
    table = [
        (r.n, r.laal, r.al, r.ap, r.dal, r.token_f1, r.nir, r.slr, r.depth) for r in rows
    ]
    csv_text = _csv_text(TRADEOFF_COLUMNS, table)
    lines = [
        f"n={r.n}: LAAL={r.laal:.3f} token_F1={r.token_f1:.3f} SLR={r.slr:.3f}"
        + (f" NIR={r.nir:.3f}" if r.nir is not None else "")
        for r in rows
    ]
    return csv_text, "\n".join(lines)


def latency_report(per_sentence: Sequence[tuple[float, float, float, float]]) -> str:
    """Per-sentence AL/LAAL/AP/DAL rows plus a corpus-mean row."""
    rows = [(i, *vals) for i, vals in enumerate(per_sentence, start=1)]
    if per_sentence:
        means = [sum(col) / len(per_sentence) for col in zip(*per_sentence)]
        rows.append(("mean", *means))
    return _csv_text(LATENCY_COLUMNS, rows)


def preference_report(
    per_sentence: Sequence[tuple[InversionRate, int | None, float, float]],
) -> str:
    """Per-sentence NIR/DD/SLR/token-F1 rows plus a corpus-mean row.

    Undefined inversion rates are written as 0 with the flag column false and
    are excluded from the mean; a missing tree leaves the DD cell empty.
    """
    rows = []
    for i, (nir, depth, slr, f1) in enumerate(per_sentence, start=1):
        rows.append((i, nir.value, depth, slr, f1, nir.defined))
    if per_sentence:
        defined = [r[0].value for r in per_sentence if r[0].defined]
        depths = [r[1] for r in per_sentence if r[1] is not None]
        rows.append(
            (
                "mean",
                sum(defined) / len(defined) if defined else None,
                sum(depths) / len(depths) if depths else None,
                sum(r[2] for r in per_sentence) / len(per_sentence),
                sum(r[3] for r in per_sentence) / len(per_sentence),
                None,
            )
        )
    return _csv_text(PREFERENCE_COLUMNS, rows)
