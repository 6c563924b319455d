"""
Result tables for evaluations and sweeps: CSV, aligned plain text, and a PDF
report with a hit-rate chart.
"""

import csv
import logging
import os
from datetime import datetime
from typing import Dict, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.platypus import Image, Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from ..config.constants import RESULTS_CSV_HEADER
from .errors import IoFailure
from .evaluation import EvalResult, SweepResult

logger = logging.getLogger(__name__)

NOT_AVAILABLE = "n/a"


def format_percent(rate: Optional[float]) -> str:
    return NOT_AVAILABLE if rate is None else f"{rate * 100:.2f}"


def format_seconds(value: Optional[float]) -> str:
    return NOT_AVAILABLE if value is None else f"{value:.3f}"


def _csv_number(value: Optional[float]) -> str:
    # undefined rates stay empty in CSV
    return "" if value is None else f"{value:.6f}"


def result_row(eta_s, ell_s, delta, result: EvalResult):
    return [
        f"{eta_s:g}", f"{ell_s:g}", str(delta),
        str(result.tp), str(result.fn), str(result.fp), str(result.tn),
        _csv_number(result.hit_rate), _csv_number(result.fall_out), _csv_number(result.mean_latency_s),
    ]


def write_results_csv(sweep_result: SweepResult, destination) -> None:
    """Write one row per scored cell, in grid order, to a path or text stream."""
    def _write(handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULTS_CSV_HEADER)
        for cell in sweep_result.cells:
            writer.writerow(result_row(cell.eta_s, cell.ell_s, cell.delta, cell.result))

    if hasattr(destination, "write"):
        _write(destination)
        return
    try:
        directory = os.path.dirname(os.path.abspath(destination))
        os.makedirs(directory, exist_ok=True)
        with open(destination, "w", encoding="utf-8", newline="") as handle:
            _write(handle)
    except OSError as exc:
        raise IoFailure(f"cannot write results to {destination}: {exc}") from exc
    logger.info("wrote %d result rows to %s", len(sweep_result.cells), destination)


def write_group_csv(meta_key: str, table: Mapping[str, Mapping[int, EvalResult]],
                    eta_s: float, ell_s: float, destination) -> None:
    """Like write_results_csv with a leading label column, one row per (label, delta)."""
    try:
        directory = os.path.dirname(os.path.abspath(destination))
        os.makedirs(directory, exist_ok=True)
        with open(destination, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow((meta_key,) + RESULTS_CSV_HEADER)
            for label, row in table.items():
                for delta in sorted(row):
                    writer.writerow([label] + result_row(eta_s, ell_s, delta, row[delta]))
    except OSError as exc:
        raise IoFailure(f"cannot write results to {destination}: {exc}") from exc


def _align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for index, row in enumerate(rows):
        lines.append("  ".join(cell.rjust(width) for cell, width in zip(row, widths)).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


def render_sweep_table(sweep_result: SweepResult) -> str:
    rows = [["eta_s", "ell_s", "delta", "tp", "fn", "fp", "tn", "hit%", "fall-out%", "latency_s"]]
    for cell in sweep_result.cells:
        result = cell.result
        rows.append([
            f"{cell.eta_s:g}", f"{cell.ell_s:g}", str(cell.delta),
            str(result.tp), str(result.fn), str(result.fp), str(result.tn),
            format_percent(result.hit_rate), format_percent(result.fall_out),
            format_seconds(result.mean_latency_s),
        ])
    text = _align(rows)
    for skipped in sweep_result.skipped:
        text += f"\nskipped eta_s={skipped.eta_s:g} ell_s={skipped.ell_s:g} delta={skipped.delta}: {skipped.reason}"
    return text


def render_result(result: EvalResult) -> str:
    return (
        f"sessions={result.sessions} tp={result.tp} fn={result.fn} fp={result.fp} tn={result.tn} "
        f"hit_rate={format_percent(result.hit_rate)}% fall_out={format_percent(result.fall_out)}% "
        f"mean_latency_s={format_seconds(result.mean_latency_s)}"
    )


def render_group_table(meta_key: str, groups: Mapping[str, EvalResult]) -> str:
    rows = [[meta_key, "sessions", "tp", "fn", "fp", "tn", "hit%", "fall-out%", "latency_s"]]
    for label, result in groups.items():
        rows.append([
            label, str(result.sessions), str(result.tp), str(result.fn), str(result.fp), str(result.tn),
            format_percent(result.hit_rate), format_percent(result.fall_out),
            format_seconds(result.mean_latency_s),
        ])
    return _align(rows)


def render_group_delta_table(meta_key: str, table: Mapping[str, Mapping[int, EvalResult]]) -> str:
    """Hit rate (%) with one row per label and one column per delta."""
    deltas = sorted({delta for row in table.values() for delta in row})
    rows = [[meta_key] + [f"delta={delta}" for delta in deltas]]
    for label, row in table.items():
        rows.append([label] + [format_percent(row[delta].hit_rate) for delta in deltas])
    return _align(rows)


def create_hit_rate_chart(sweep_result: SweepResult, chart_path: str) -> str:
    """Hit rate against delta, one line per (eta, ell) pair."""
    series: Dict[tuple, list] = {}
    for cell in sweep_result.cells:
        if cell.result.hit_rate is None:
            continue
        series.setdefault((cell.eta_s, cell.ell_s), []).append((cell.delta, cell.result.hit_rate * 100))

    plt.figure(figsize=(8, 5))
    if not series:
        plt.text(0.5, 0.5, "No scored cells", ha='center', va='center', fontsize=16)
        plt.axis('off')
    else:
        for (eta_s, ell_s), points in sorted(series.items()):
            xs, ys = zip(*points)
            plt.plot(xs, ys, marker="o", label=f"eta={eta_s:g}s ell={ell_s:g}s")
        plt.xlabel("delta (%)")
        plt.ylabel("hit rate (%)")
        plt.ylim(0, 105)
        plt.grid(alpha=0.3)
        plt.legend(fontsize=7, ncol=3)
        plt.title("Hit rate by threshold", fontsize=14, fontweight='bold')
    plt.tight_layout()
    plt.savefig(chart_path, dpi=150)
    plt.close()
    return chart_path


def generate_pdf_report(sweep_result: SweepResult, pdf_path: str, corpus_label: str = "",
                        sessions: int = 0) -> str:
    """Build a PDF with the hit-rate chart and the full sweep table."""
    directory = os.path.dirname(os.path.abspath(pdf_path))
    os.makedirs(directory, exist_ok=True)
    chart_path = os.path.join(directory, f".{os.path.basename(pdf_path)}.chart.png")
    create_hit_rate_chart(sweep_result, chart_path)

    doc = SimpleDocTemplate(pdf_path, pagesize=letter, rightMargin=54, leftMargin=54,
                            topMargin=54, bottomMargin=54)
    styles = getSampleStyleSheet()
    body_style = ParagraphStyle('Body', parent=styles['Normal'], fontSize=10, leading=14)

    elements = [
        Paragraph("Departure detector parameter sweep", styles["Title"]),
        Spacer(1, 12),
        Paragraph(f"Date: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}", styles["Normal"]),
    ]
    if corpus_label:
        elements.append(Paragraph(f"Corpus: {escape(corpus_label)} ({sessions} sessions)", body_style))
    elements.append(Spacer(1, 18))
    elements.append(Image(chart_path, width=460, height=288))
    elements.append(Spacer(1, 18))

    data = [["eta_s", "ell_s", "delta", "TP", "FN", "FP", "TN", "Hit %", "Fall-out %", "Latency s"]]
    for cell in sweep_result.cells:
        result = cell.result
        data.append([
            f"{cell.eta_s:g}", f"{cell.ell_s:g}", cell.delta, result.tp, result.fn, result.fp, result.tn,
            format_percent(result.hit_rate), format_percent(result.fall_out),
            format_seconds(result.mean_latency_s),
        ])
    table = Table(data, repeatRows=1)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.grey),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.whitesmoke),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
        ('ALIGN', (0, 0), (-1, -1), 'RIGHT'),
        ('GRID', (0, 0), (-1, -1), 0.5, colors.black),
    ]))
    elements.append(table)
    if sweep_result.skipped:
        elements.append(Spacer(1, 12))
        for skipped in sweep_result.skipped:
            elements.append(Paragraph(
                f"Skipped eta={skipped.eta_s:g}s ell={skipped.ell_s:g}s delta={skipped.delta}: {escape(skipped.reason)}",
                body_style,
            ))

    try:
        doc.build(elements)
    except OSError as exc:
        raise IoFailure(f"cannot write PDF report {pdf_path}: {exc}") from exc
    finally:
        try:
            if os.path.exists(chart_path):
                os.remove(chart_path)
        except OSError as exc:
            logger.warning("could not delete chart file %s: %s", chart_path, exc)
    logger.info("PDF report generated: %s", pdf_path)
    return pdf_path
