"""Composite outcomes from inverse regression of treatment on multiple outcomes.

Estimation, misspecification-robust Wald tests and dual-regime confidence
intervals for completely randomized, stratified and observational studies.
"""

from .analysis import Analysis, report, run
from .dataset import CIMethod, Design, DesignSpec, StudyData, load_csv
from .errors import InvCompositeError, NumericalError, ValidationError
from .wchi2 import WeightedChiSq

__version__ = "0.1.0"

__all__ = [
    "Analysis", "CIMethod", "Design", "DesignSpec", "InvCompositeError", "NumericalError",
    "StudyData", "ValidationError", "WeightedChiSq", "load_csv", "report", "run",
]
