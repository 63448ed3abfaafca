"""Numerical laboratory for hermitian operator tuples modulo normed ideals.

The pieces fit together in one pipeline: symmetric gauge norms on singular
values (with conjugates and trace duality), banded hermitian tuples whose
commutators are exact under truncation, certified quasicentral approximate
units and their norm tables, functionals split into trace and tail parts,
and a config-driven runner that writes deterministic artifacts.
"""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .functionals import (
    FunctionalCombo,
    FunctionalSpec,
    NormBounds,
    NotConverged,
    PredualElement,
    QuotientBounds,
    TailStateSpec,
    TracePart,
    combine,
    combined_trace_part,
    coordinate_tail_states,
    detect_limit,
    eval_functional,
    eval_singular_part,
    eval_trace_part,
    functional_norm_bounds,
    pairing,
    quotient_norm_bounds,
    reduce_to_trace,
)
from .gauges import (
    GaugeSpec,
    HolderReport,
    conjugate_gauge,
    gauge_norm,
    gauge_value,
    holder_check,
    ky_fan,
    ky_fan_dual,
    norm_subgradient,
    operator_norm,
    schatten,
    singular_values,
    sup_gauge,
)
from .idealops import (
    HermitianTuple,
    OperatorModelSpec,
    commutator_tuple,
    e_norm_max,
    e_norm_sum,
    instantiate_model,
    support_size,
    tuple_gauge_norm,
)
from .lebesgue import (
    DecompositionReport,
    ProjectionReport,
    RecoveryResult,
    decompose,
    projection_check,
    recover_ac_part,
    recovery_error_bound,
)
from .qau import (
    CertificationError,
    KEstimateTable,
    MonotonizationError,
    SolverParams,
    UnitCertificate,
    UnitElement,
    UnitSchedule,
    build_schedule,
    k_estimate,
    optimize_unit,
    ramp_unit,
)
from .runner import render_report, run_experiment
from .sampling import SampleSpec, TestOperator, generate_test_set

__version__ = "0.1.0"

__all__ = [
    "CertificationError",
    "ConfigError",
    "DecompositionReport",
    "ExperimentConfig",
    "FunctionalCombo",
    "FunctionalSpec",
    "GaugeSpec",
    "HermitianTuple",
    "HolderReport",
    "KEstimateTable",
    "MonotonizationError",
    "NormBounds",
    "NotConverged",
    "OperatorModelSpec",
    "PredualElement",
    "ProjectionReport",
    "QuotientBounds",
    "RecoveryResult",
    "SampleSpec",
    "SolverParams",
    "TailStateSpec",
    "TestOperator",
    "TracePart",
    "UnitCertificate",
    "UnitElement",
    "UnitSchedule",
    "build_schedule",
    "combine",
    "combined_trace_part",
    "commutator_tuple",
    "conjugate_gauge",
    "coordinate_tail_states",
    "decompose",
    "detect_limit",
    "e_norm_max",
    "e_norm_sum",
    "eval_functional",
    "eval_singular_part",
    "eval_trace_part",
    "functional_norm_bounds",
    "gauge_norm",
    "gauge_value",
    "generate_test_set",
    "holder_check",
    "instantiate_model",
    "k_estimate",
    "ky_fan",
    "ky_fan_dual",
    "load_config",
    "norm_subgradient",
    "operator_norm",
    "optimize_unit",
    "pairing",
    "parse_config",
    "projection_check",
    "quotient_norm_bounds",
    "ramp_unit",
    "recover_ac_part",
    "recovery_error_bound",
    "reduce_to_trace",
    "render_report",
    "run_experiment",
    "schatten",
    "singular_values",
    "sup_gauge",
    "support_size",
    "tuple_gauge_norm",
]
