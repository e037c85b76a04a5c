# mottlab
# Cloud chamber and Geiger counter models of alpha wavefunction collimation

__version__ = "0.1.0"
__description__ = "Born-rule track-start models, fits and Geiger window curves"

from .chamber import ChamberGeometry, Cylinder, ScaleParams, Sphere, TrackStart
from .empirics import EmpiricalCDF, Metric, ModelCurve, TrackRecord
from .errors import DataError, DomainError, MottlabError, NumericalError, UsageError
from .fitting import FitConfig, FitResult
from .gamow import ClusterModel, CrossSectionModel, FluxMode, GamowParams
from .geiger import GeigerGeometry, ModelKind

__all__ = [
    "ChamberGeometry",
    "Cylinder",
    "Sphere",
    "ScaleParams",
    "TrackStart",
    "EmpiricalCDF",
    "Metric",
    "ModelCurve",
    "TrackRecord",
    "FitConfig",
    "FitResult",
    "GamowParams",
    "ClusterModel",
    "CrossSectionModel",
    "FluxMode",
    "GeigerGeometry",
    "ModelKind",
    "MottlabError",
    "UsageError",
    "DataError",
    "NumericalError",
    "DomainError",
]
