"""CDF figure generation for positioning campaign reports."""

from .render import (DEFAULT_GROUP, PACKED_METRICS, SCALAR_METRICS, FigureSpec,
                     RenderResult, ReportError, collect_samples, empirical_cdf,
                     main, read_rows, render_cdf, summary_table)

__all__ = [
    "DEFAULT_GROUP",
    "PACKED_METRICS",
    "SCALAR_METRICS",
    "FigureSpec",
    "RenderResult",
    "ReportError",
    "collect_samples",
    "empirical_cdf",
    "main",
    "read_rows",
    "render_cdf",
    "summary_table",
]

__version__ = "0.1.0"
