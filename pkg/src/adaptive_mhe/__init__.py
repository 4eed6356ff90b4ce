"""Moving-horizon estimation with an adaptive robust stage cost.

Modules: ``robust_loss`` (the loss family), ``vehicle`` (tractor-trailer model
and path follower), ``disturbance`` (noise and outliers), ``solvers`` (boxed
L-BFGS and scalar minimization), ``mhe`` (windows, costs and the alternating
estimator), ``bench`` and ``report`` (Monte-Carlo runs and result files),
``config`` and ``cli``.
"""
from .mhe import (EstimationWindow, EstimatorSolution, EstimatorVariant,
                  MovingHorizonEstimator, SolverFailure, StageCostParams, estimate_step)
from .robust_loss import phi, rho

__version__ = "0.1.0"
