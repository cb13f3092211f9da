"""
Formatting utilities for console summaries
"""
import logging
from typing import Any, Dict, Iterable, Optional

logger = logging.getLogger(__name__)


def format_norm(value: Optional[float], precision: int = 3) -> str:
    """Scientific notation, '-' for missing values"""
    if value is None:
        return "-"
    try:
        return f"{value:.{precision}e}"
    except (TypeError, ValueError):
        return str(value)


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human readable format"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    if seconds < 3600:
        return f"{int(seconds // 60)}m {int(seconds % 60)}s"
    return f"{int(seconds // 3600)}h {int(seconds % 3600 // 60)}m"


def format_status(ok: Optional[bool]) -> str:
    if ok is None:
        return "➖"
    return "✅" if ok else "❌"


def format_table(rows: Iterable[Dict[str, Any]], columns: Optional[list] = None) -> str:
    """Plain-text table with left-aligned columns"""
    rows = list(rows)
    if not rows:
        return "(empty)"
    columns = columns or list(rows[0])

    def cell(value: Any) -> str:
        if isinstance(value, float):
            return format_norm(value)
        return "-" if value is None else str(value)

    body = [[cell(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(str(c)), *(len(r[k]) for r in body)) for k, c in enumerate(columns)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


def format_manifest(manifest) -> str:
    """Step summary of a run manifest"""
    lines = [f"{format_status(manifest.success)} {manifest.command}"]
    if manifest.times:
        lines.append("Times: " + " | ".join(f"{k}={v:.4f}" for k, v in manifest.times.items()))
    for step in manifest.steps:
        tag = "skipped" if step.skipped else format_status(step.passed)
        lines.append(
            f"  {step.name:<11} [{step.start:.4f}, {step.end:.4f}] {tag} | "
            f"error={format_norm(step.terminal_error)} | relative={format_norm(step.relative_error)}"
            + (f" | {step.message}" if step.message else "")
        )
    if manifest.terminal_error is not None:
        lines.append(f"Terminal error: {format_norm(manifest.terminal_error)} "
                     f"(relative {format_norm(manifest.relative_error)})")
    if manifest.failed_step:
        lines.append(f"Failed step: {manifest.failed_step}")
    for rate in manifest.rates:
        lines.append(f"Rate {rate.get('quantity')}: slope={format_norm(rate.get('slope'))} "
                     f"claimed={rate.get('claimed')} {format_status(rate.get('meets_claim'))}")
    return "\n".join(lines)
