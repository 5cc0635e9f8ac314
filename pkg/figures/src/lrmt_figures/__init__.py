"""Static figure rendering for experiment result CSVs."""

from .render import (
    FAMILY_AXES,
    FigureSpec,
    SchemaError,
    aggregate_series,
    load_rows,
    render,
)

__version__ = "0.1.0"
