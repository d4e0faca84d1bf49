"""Phase retrieval from short-time Fourier magnitude measurements.

Submodules: :mod:`core` (signals, windows, dictionaries), :mod:`stft`
(transform and measurement operator), :mod:`direct` (exact L=1 recovery and
ambiguity constructions), :mod:`altproj` (GLA / PCGP), :mod:`gespar` (sparse
greedy solver) and :mod:`harness` (experiments and CLI).
"""

from ._kernels import BACKEND
from .altproj import AltProjConfig, AltProjResult, altproj_run, gla_run, pcgp_run
from .core import (
    Dictionary,
    GeometryError,
    InstanceError,
    Signal,
    SparseInstance,
    ValidationError,
    Window,
    check_uniqueness_conditions,
    make_window,
    sample_sparse_instance,
)
from .direct import construct_separated_ambiguity, construct_shift_ambiguity, direct_recover
from .gespar import GesparConfig, QuadraticProblem, gespar_solve, power_spectrum_problem
from .stft import (
    MeasurementSet,
    build_measurement_operator,
    istft,
    magnitude_sq,
    make_geometry,
    stft_forward,
)

__version__ = "0.1.0"

__all__ = [
    "AltProjConfig",
    "AltProjResult",
    "BACKEND",
    "Dictionary",
    "GeometryError",
    "GesparConfig",
    "InstanceError",
    "MeasurementSet",
    "QuadraticProblem",
    "Signal",
    "SparseInstance",
    "ValidationError",
    "Window",
    "altproj_run",
    "build_measurement_operator",
    "check_uniqueness_conditions",
    "construct_separated_ambiguity",
    "construct_shift_ambiguity",
    "direct_recover",
    "gespar_solve",
    "gla_run",
    "istft",
    "magnitude_sq",
    "make_geometry",
    "make_window",
    "pcgp_run",
    "power_spectrum_problem",
    "sample_sparse_instance",
    "stft_forward",
    "__version__",
]
