"""Consequence-based utility scoring for candidate math solutions.

A candidate solution is scored by how much it helps a solver model on
related "neighborhood" questions when shown as a worked exemplar.  The
package also provides LLM-judge baselines, exact ranking metrics, rollout
budget analysis, logistic probes and neighborhood-question curation.

Hot numeric kernels use numba; set ``CBU_DISABLE_NUMBA=1`` to run the
pure-numpy implementations instead.
"""

__version__ = "0.1.0"

from ._accel import backend_name  # noqa: E402

__all__ = ["__version__", "backend_name"]
