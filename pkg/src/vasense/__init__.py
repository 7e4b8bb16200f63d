"""Virtual-aperture ISAC sensing simulator.

A handheld device transmitting OFDM uplink symbols senses nearby reflection
points monostatically.  Natural hand motion sweeps the array through space,
forming a virtual aperture; range-compressed echoes are focused by near-field
backprojection.  The trajectory is only known through an IMU, so an
EKF-based autofocus tracks the position error from differential carrier
phases of strong scatterers.  Bayesian Cramer-Rao bounds quantify the
accuracy limits, and an exposure module maps range estimates and their
bounds to MPE-compliant EIRP.
"""

from vasense.radio import RadioConfig, ArrayGeometry, Scatterer, Scene, LinkBudget, complex_amplitude
from vasense.waveform import RangeCube, dirichlet_kernel, dirichlet_derivative
from vasense.trajectory import Trajectory, ImuSpec, ImuRun, ErrorPrior
from vasense.imaging import ImageGrid, CalibrationSet, backproject, matched_field_grid, localize
from vasense.autofocus import AutofocusResult, EkfState, run_autofocus
from vasense.bounds import MeanModel, FimBlocks, BcrbReport, fisher_blocks, bound_report
from vasense.exposure import MpePolicy, eirp_proposed, eirp_baseline, eirp_mpe_limit
from vasense.config import ExperimentConfig, load_config

__all__ = [
    "RadioConfig", "ArrayGeometry", "Scatterer", "Scene", "LinkBudget",
    "complex_amplitude", "RangeCube", "dirichlet_kernel",
    "dirichlet_derivative", "Trajectory", "ImuSpec", "ImuRun", "ErrorPrior",
    "ImageGrid", "CalibrationSet", "backproject", "matched_field_grid",
    "localize", "AutofocusResult", "EkfState", "run_autofocus",
    "MeanModel", "FimBlocks", "BcrbReport", "fisher_blocks", "bound_report",
    "MpePolicy", "eirp_proposed", "eirp_baseline", "eirp_mpe_limit",
    "ExperimentConfig", "load_config",
]
