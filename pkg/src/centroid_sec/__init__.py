"""Online centroid anomaly detection security-analysis toolkit.

Implements the online centroid learner with its outgoing-point update rules,
optimal poisoning attacks against each rule (including the QCLP-driven greedy
attack for the nearest-out rule), stochastic limited-control and
false-positive-protected learning processes, closed-form evaluators for the
theoretical attack-progress bounds, a k-gram spectrum-kernel feature layer with
kernel PCA, and a Monte Carlo simulation harness that compares theory against
simulation.
"""

from centroid_sec.core import (
    AttackContext,
    CentroidState,
    RandomSource,
    WorkingSet,
    anomaly_score,
    relative_displacement,
)
from centroid_sec.learner import UpdateRule

__version__ = "0.1.0"

__all__ = [
    "AttackContext",
    "CentroidState",
    "RandomSource",
    "UpdateRule",
    "WorkingSet",
    "anomaly_score",
    "relative_displacement",
    "__version__",
]
