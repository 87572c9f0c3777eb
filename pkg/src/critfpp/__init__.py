"""Monte Carlo toolkit for critical first-passage percolation on the
triangular lattice: coupled weight fields, passage times, circuit
hierarchies, martingale decompositions, and arm-event estimators.

The site percolation model lives on Z^2 with the six-neighbor
adjacency of the triangular lattice.  Weights are i.i.d. nonnegative
draws; a site is open when its weight is at most the median threshold,
which puts every sampled field exactly at criticality.  Each field
carries a coupled companion in which every open site's weight is
replaced by the infimum of the support, so that exact domination and
coupling-gap statements can be checked sample by sample.

Entry points:

* :func:`critfpp.weights.sample_field` draws a coupled field.
* :func:`critfpp.passage.point_to_box` solves first-passage times.
* :func:`critfpp.circuits.outermost_closed_sequence` peels the nested
  closed-circuit hierarchy.
* :mod:`critfpp.estimators` turns per-sample records into slope fits,
  martingale variance decompositions, and arm-probability estimates.
* :mod:`critfpp.runner` and the ``critfpp`` console script run batch
  studies with byte-reproducible outputs.
* :func:`critfpp.verify.run_suite` prints the acceptance matrix.
"""

from .arms import ArmEventSpec, arm_exponent, has_disjoint_arms
from .circuits import (
    CircuitHierarchy,
    max_disjoint_closed_circuits,
    outermost_closed_sequence,
)
from .estimators import (
    EstimatorReport,
    MartingaleEstimate,
    aggregate_ladder,
    aggregate_martingale,
    aggregate_y_tilde,
    arm_sample,
    ladder_sample,
    martingale_sample,
    windowed_fit,
)
from .lattice import Box, neighbors
from .passage import PassageResult, brute_force_time, point_to_box
from .runner import RunConfig, report_from_files, run
from .tolerances import default_tolerances, resolve_tolerances
from .verify import run_suite, suite_gates
from .weights import (
    DistributionSpec,
    WeightField,
    low_weight_threshold,
    sample_field,
)

__version__ = "0.1.0"

__all__ = [
    "ArmEventSpec",
    "Box",
    "CircuitHierarchy",
    "DistributionSpec",
    "EstimatorReport",
    "MartingaleEstimate",
    "PassageResult",
    "RunConfig",
    "WeightField",
    "aggregate_ladder",
    "aggregate_martingale",
    "aggregate_y_tilde",
    "arm_exponent",
    "arm_sample",
    "brute_force_time",
    "default_tolerances",
    "ladder_sample",
    "low_weight_threshold",
    "martingale_sample",
    "max_disjoint_closed_circuits",
    "neighbors",
    "outermost_closed_sequence",
    "point_to_box",
    "report_from_files",
    "resolve_tolerances",
    "run",
    "run_suite",
    "sample_field",
    "suite_gates",
    "windowed_fit",
    "__version__",
]
