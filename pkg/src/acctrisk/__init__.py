"""Default-risk modeling on checking-account activity panels.

Library layout:

* ``panel`` - monthly panel data model, io, validation, splits
* ``synthgen`` - deterministic synthetic panel generator with ground truth
* ``features`` - window features, discrete classes, arithmetic interactions
* ``cart`` - Gini classification trees (the shared base learner)
* ``ensemble`` - uniform and class-balanced random forests
* ``boost`` - stagewise gradient boosting of the additive log-odds model
* ``glm`` - logistic regression, stepwise AIC, L1 paths
* ``metrics`` - ROC/AUC, confusion matrices, cross-validation
* ``cli`` - the experiment harness (``acctrisk`` entry point)

Hot kernels are numba-compiled; set ``ACCTRISK_DISABLE_NUMBA=1`` before
import to run on the pure-numpy fallback.
"""

__version__ = "0.1.0"

from ._kernels import NUMBA_ENABLED, backend_name  # noqa: F401
