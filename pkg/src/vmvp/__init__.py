"""Pseudospectral Vlasov-Maxwell / Vlasov-Poisson multifluid solver on the torus.

Layering: ``spectral`` (Fourier fields and the weighted-norm calculus),
``fields`` (Coulomb-gauge electromagnetic state and the oscillatory wave
integrator), ``multifluid`` (phase-ensemble dynamics and the analytic
fixed-point scheme), ``lagrangian`` (paired characteristic flows),
``transport`` (Wasserstein-2 machinery and the coupling functional),
``harness`` (runs, sweeps, diagnostics), ``cli`` (command line).
"""

from .errors import NumericalAbort, ValidationError
from .spectral import AnalyticNormParams, SpectralField
from .fields import EMState
from .multifluid import Phase, PhaseEnsemble
from .lagrangian import ParticleCloud
from .transport import EmpiricalMeasure
from .config import PhaseSpec, RunConfig

__all__ = [
    "AnalyticNormParams",
    "EMState",
    "EmpiricalMeasure",
    "NumericalAbort",
    "ParticleCloud",
    "Phase",
    "PhaseEnsemble",
    "PhaseSpec",
    "RunConfig",
    "SpectralField",
    "ValidationError",
]

__version__ = "0.1.0"
