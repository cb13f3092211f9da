"""
Return-method reference flow, flushing check and transport controls
"""
from .flowmap import FlushingReport, flow_map, steady_exit_times, trace, verify_flushing
from .partition import FlushPartition, build_partition, cutoff, cutoff_derivative, strip_squares
from .reference import Amplitude, ReferenceFlow, build_reference_flow
from .transport import (
    TransportControls,
    characteristic_feet,
    combine_controls,
    exact_transport_control,
    transport_control,
    transported,
)

__all__ = [
    "Amplitude",
    "FlushPartition",
    "FlushingReport",
    "ReferenceFlow",
    "TransportControls",
    "build_partition",
    "build_reference_flow",
    "characteristic_feet",
    "combine_controls",
    "cutoff",
    "cutoff_derivative",
    "exact_transport_control",
    "flow_map",
    "steady_exit_times",
    "strip_squares",
    "trace",
    "transport_control",
    "transported",
    "verify_flushing",
]
