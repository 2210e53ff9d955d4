"""
Reporting Service Module
Text tables and the Excel workbook for profile and cost reports
"""
import logging
from pathlib import Path
from typing import Union

import pandas as pd

from services.cost_model import TERM_NAMES, CostReport
from services.profiler import ProfileReport

logger = logging.getLogger("QemLab")


def render_profile_table(report: ProfileReport) -> str:
    """Summary text: one row per parameter, average and maximum over components"""
    label_width = 14
    lines = [
        f"{'Parameter':<{label_width}} {'avg':>14} {'max':>14}",
        "-" * (label_width + 30),
    ]
    for label, avg, peak in report.table_rows():
        lines.append(f"{label:<{label_width}} {avg:>14.6g} {peak:>14.6g}")
    lines.append("")
    lines.append(f"eta = {report.eta:.6g}   n = {report.n}   d = {report.d}   k = {report.k}")
    suffix = " (upper bound)" if report.mu_V_prime_is_bound else ""
    if report.mu_V_prime is not None:
        lines.append(f"mu(V') = {report.mu_V_prime:.6g}{suffix}")
    lines.append(f"kappa* threshold = {report.kappa_threshold:g}")
    return "\n".join(lines) + "\n"


def render_cost_table(report: CostReport) -> str:
    lines = [f"{'Term':<10} {'model units':>16}", "-" * 27]
    for name in TERM_NAMES:
        marker = "  <- dominant" if name == report.dominant_term else ""
        lines.append(f"{name:<10} {getattr(report, name):>16.6g}{marker}")
    if report.classical_cost is not None:
        lines.append(f"{'classical':<10} {report.classical_cost:>16.6g}")
    if report.crossover_n is not None:
        lines.append(f"crossover n* = {report.crossover_n:.6g}")
    for flag in report.flags:
        lines.append(f"flag: {flag}")
    return "\n".join(lines) + "\n"


def write_profile_workbook(path: Union[str, Path], report: ProfileReport):
    """
    Write the profile as an .xlsx workbook

    Sheets:
        Summary: parameter / avg / max rows
        Components: per-component values
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    summary = pd.DataFrame(report.table_rows(), columns=["Parameter", "Average", "Maximum"])
    components = pd.DataFrame({
        "Component": list(range(report.k)),
        "Spectral_Norm": report.spectral_norms,
        "Abs_Log_Det": report.log_abs_dets,
        "Log_Det_Exact": report.log_dets_exact or [None] * report.k,
        "Kappa": report.kappa_sigma,
        "Kappa_Thresholded": report.kappa_sigma_thresholded,
        "Mu": report.mu_sigma,
    })

    try:
        with pd.ExcelWriter(path, engine='openpyxl') as writer:
            summary.to_excel(writer, index=False, sheet_name='Summary')
            components.to_excel(writer, index=False, sheet_name='Components')
            writer.sheets['Summary'].column_dimensions['A'].width = 16
            writer.sheets['Components'].column_dimensions['B'].width = 16
        logger.info(f"Profile workbook written: {path}")
    except Exception as e:
        logger.error(f"Error writing profile workbook: {str(e)}")
        raise
