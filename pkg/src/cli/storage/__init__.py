"""
Storage Package
"""
from .csv_storage import (
    CSVStorage,
    FieldRow,
    SeriesRow,
    HumIterationRow,
    TraceRow,
    RateRow
)

__all__ = [
    'CSVStorage',
    'FieldRow',
    'SeriesRow',
    'HumIterationRow',
    'TraceRow',
    'RateRow'
]
