"""Single-subject causal analysis of self-tracked time series.

Estimates the average period treatment effect (APTE) of a binary treatment on a
continuous outcome: changepoint-defined treatment periods, a random-forest
outcome model and g-formula marginalization, plus a simulator that supplies
ground truth for verification.
"""

from apte.errors import ApteError, DataError, EstimationError

__version__ = "0.1.0"

__all__ = ["ApteError", "DataError", "EstimationError", "__version__"]
