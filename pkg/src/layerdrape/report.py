"""Saving, loading, and rendering energy reports.

One JSON layout (SCHEMA) carries everything a pipeline run measured:
per-garment term values, penetration counts, strain ratios, and residual
penetration records. Keys are sorted and timings are left out by default, so
rerunning a deterministic pipeline rewrites the same bytes. The text, CSV,
and figure renderers are derived views of the same payload.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .errors import ValidationError
from .postprocess import BODY_REF, TERM_NAMES, EnergyReport

SCHEMA = "layerdrape-report/1"

RESIDUAL_PRINT_LIMIT = 20


def dumps(report: EnergyReport, include_timings: bool = False) -> str:
    """Canonical JSON text: schema-tagged, keys sorted, newline-terminated."""
    payload = {"schema": SCHEMA, **report.to_dict(include_timings=include_timings)}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_report(path: str, report: EnergyReport, include_timings: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report, include_timings=include_timings))


def load_report(path: str) -> EnergyReport:
    """Read a report file back; OSError propagates, bad content raises."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: report root must be an object")
    if payload.get("schema") != SCHEMA:
        raise ValidationError(
            f"{path}: expected schema {SCHEMA!r}, got {payload.get('schema')!r}"
        )
    return EnergyReport.from_dict(payload)


# ---------------------------------------------------------------------------
# Derived views.
# ---------------------------------------------------------------------------

def _ratio_row_labels(rows: list[list[float]]) -> list[str]:
    # a pipeline report carries one row (its own stack); multi-run tables are
    # lower-triangular with row k covering the (k+1)-garment stack
    if len(rows) == 1:
        return [f"M={len(rows[0])}"]
    return [f"M={k + 1}" for k in range(len(rows))]


def format_text(report: EnergyReport) -> str:
    """Aligned per-term table plus ratio/penetration summaries."""
    name_w = max(len(n) for n in report.garment_names + ["garment"])
    cols = list(TERM_NAMES) + ["objective"]
    widths = [max(len(c), 11) + 2 for c in cols]
    lines = ["garment".ljust(name_w) + "".join(c.rjust(w) for c, w in zip(cols, widths))]
    for i, name in enumerate(report.garment_names):
        vals = [report.terms[i][t] for t in TERM_NAMES] + [report.objectives[i]]
        lines.append(
            name.ljust(name_w) + "".join(f"{v:>{w}.4e}" for v, w in zip(vals, widths))
        )
    lines.append("")
    counted = " ".join(f"{k}={v}" for k, v in sorted(report.counts.items()))
    lines.append(f"penetrations: {counted or 'not audited'}")
    if report.strain_ratios is not None:
        lines.append("")
        lines.append("strain ratio vs single drape (innermost garment first):")
        for label, row in zip(_ratio_row_labels(report.strain_ratios), report.strain_ratios):
            cells = "".join(
                ("--" if math.isnan(v) else f"{v:.4f}").rjust(9) for v in row
            )
            lines.append(f"  {label:<5}{cells}")
    lines.append("")
    if report.residuals:
        lines.append(f"residual penetrations: {len(report.residuals)}")
        for r in report.residuals[:RESIDUAL_PRINT_LIMIT]:
            ref = "body" if r.reference == BODY_REF else f"garment {r.reference + 1}"
            lines.append(
                f"  garment={report.garment_names[r.garment]} vertex={r.vertex} "
                f"reference={ref} depth={r.depth:.3e}"
            )
        if len(report.residuals) > RESIDUAL_PRINT_LIMIT:
            lines.append(f"  ... {len(report.residuals) - RESIDUAL_PRINT_LIMIT} more")
    else:
        lines.append("residual penetrations: none")
    return "\n".join(lines) + "\n"


def write_csv(path: str, report: EnergyReport) -> None:
    """One row per garment, full-precision floats, byte-stable line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["garment", *TERM_NAMES, "objective"])
        for i, name in enumerate(report.garment_names):
            writer.writerow(
                [name]
                + [repr(float(report.terms[i][t])) for t in TERM_NAMES]
                + [repr(float(report.objectives[i]))]
            )


def write_figures(out_dir: str, report: EnergyReport) -> list[str]:
    """Render the term table (and the ratio table when present) as PNGs.

    Drawn through the object-layer figure API: no pyplot state, no backend
    switching, and the Software metadata is stripped so the output bytes
    depend only on the report content.
    """
    from matplotlib.figure import Figure

    written = []
    m = len(report.garment_names)
    fig = Figure(figsize=(9.6, 4.8))
    ax = fig.add_subplot(111)
    idx = np.arange(len(TERM_NAMES))
    width = 0.8 / m
    for i, name in enumerate(report.garment_names):
        vals = [report.terms[i][t] for t in TERM_NAMES]
        ax.bar(idx + (i - 0.5 * (m - 1)) * width, vals, width, label=name)
    # spans zero (gravity can be negative) and ~12 decades, hence symlog
    ax.set_yscale("symlog", linthresh=1e-9)
    ax.set_xticks(idx)
    ax.set_xticklabels(TERM_NAMES, rotation=30, ha="right")
    ax.set_ylabel("energy")
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = os.path.join(out_dir, "energy_terms.png")
    fig.savefig(path, dpi=120, metadata={"Software": None})
    written.append(path)

    if report.strain_ratios is not None:
        rows = report.strain_ratios
        table = np.full((len(rows), max(len(r) for r in rows)), np.nan)
        for k, row in enumerate(rows):
            table[k, : len(row)] = row
        if len(report.garment_names) == table.shape[1]:
            col_labels = list(report.garment_names)
        else:
            col_labels = [f"layer {i + 1}" for i in range(table.shape[1])]
        fig = Figure(figsize=(1.6 + 1.1 * table.shape[1], 1.4 + 0.6 * table.shape[0]))
        ax = fig.add_subplot(111)
        im = ax.imshow(np.ma.masked_invalid(table), cmap="viridis", aspect="auto")
        ax.set_xticks(np.arange(table.shape[1]))
        ax.set_xticklabels(col_labels, rotation=30, ha="right")
        ax.set_yticks(np.arange(table.shape[0]))
        ax.set_yticklabels(_ratio_row_labels(rows))
        for (r, c), v in np.ndenumerate(table):
            if not math.isnan(v):
                shade = "black" if im.norm(v) > 0.6 else "white"
                ax.text(c, r, f"{v:.2f}", ha="center", va="center",
                        color=shade, fontsize=9)
        fig.colorbar(im, ax=ax, label="strain ratio")
        fig.tight_layout()
        path = os.path.join(out_dir, "strain_ratios.png")
        fig.savefig(path, dpi=120, metadata={"Software": None})
        written.append(path)
    return written
