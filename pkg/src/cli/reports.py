"""Report rendering: JSON through pydantic, text and CSV tables through pandas."""

import json
from typing import Any

import pandas as pd

from core.schemas.report import Report


def _flatten(prefix: str, value: Any, rows: list[tuple[str, str]]):
    if isinstance(value, dict):
        for key, inner in value.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), inner, rows)
    elif isinstance(value, list | tuple) and value and isinstance(value[0], dict):
        for i, inner in enumerate(value):
            _flatten(f"{prefix}[{i}]", inner, rows)
    elif isinstance(value, float):
        rows.append((prefix, f"{value:.12g}"))
    elif isinstance(value, list | tuple):
        rows.append((prefix, "[" + ", ".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in value) + "]"))
    else:
        rows.append((prefix, str(value)))


def checks_frame(report: Report) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "check": c.name,
                "status": "pass" if c.passed else ("warn" if c.warning_only else "FAIL"),
                "residual": c.residual,
                "tolerance": c.tolerance,
                "detail": c.detail,
            }
            for c in report.checks
        ],
        columns=["check", "status", "residual", "tolerance", "detail"],
    )


def render_json(report: Report) -> str:
    return report.model_dump_json(indent=2, exclude_none=True) + "\n"


def render_text(report: Report) -> str:
    lines = [f"{report.command} (schema {report.schema_version})", ""]
    rows: list[tuple[str, str]] = []
    _flatten("", report.echo, rows)
    if rows:
        lines += ["input:"] + [f"  {k} = {v}" for k, v in rows] + [""]
    rows = []
    _flatten("", report.results, rows)
    if rows:
        width = max(len(k) for k, _ in rows)
        lines += ["results:"] + [f"  {k.ljust(width)}  {v}" for k, v in rows] + [""]
    if report.checks:
        lines.append(checks_frame(report).to_string(index=False, float_format=lambda v: f"{v:.3e}"))
        lines.append("")
        lines.append("PASSED" if report.passed else "FAILED")
    if report.timing is not None:
        lines.append("timing: " + json.dumps(report.timing, sort_keys=True))
    return "\n".join(lines) + "\n"


def render_csv(report: Report) -> str:
    """CSV is reserved for verification summaries: one row per batch instance or per check."""
    if report.command != "verify":
        raise ValueError("csv output is only available for verify")
    instances = report.results.get("instances")
    if instances:
        frame = pd.DataFrame(instances)
        frame["failures"] = frame["failures"].map(lambda names: "; ".join(names))
    else:
        frame = checks_frame(report)
    return frame.to_csv(index=False, lineterminator="\n")


RENDERERS = {"json": render_json, "text": render_text, "csv": render_csv}


def render(report: Report, fmt: str) -> str:
    return RENDERERS[fmt](report)
