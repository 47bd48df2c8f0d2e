"""Multi-sensor tracking of an extended object from active and passive
range/amplitude measurements, with a measurement-level scenario simulator
and evaluation metrics."""

from .dynamics import AugmentedState, KinematicState, MotionParams
from .geometry import AngularSector, ApproxExtent, EoExtent, EoPose
from .likelihood import ClutterModel, NoiseModel
from .simulator import RadioParams, Scenario, default_scenario
from .state import FrameMeasurements, Measurement, ParticleSet

__version__ = "0.1.0"

__all__ = [
    "AngularSector",
    "ApproxExtent",
    "AugmentedState",
    "ClutterModel",
    "EoExtent",
    "EoPose",
    "FrameMeasurements",
    "KinematicState",
    "Measurement",
    "MotionParams",
    "NoiseModel",
    "ParticleSet",
    "RadioParams",
    "Scenario",
    "default_scenario",
    "__version__",
]
