"""Numerical simulator of EIT light storage in a rare-earth-doped solid.

A three-level lambda ensemble with Gaussian optical and spin inhomogeneous
broadening is driven by probe and coupling beams; the probe propagates
through the 1D medium coupled to every detuning class. Store/recall
timelines with RF rephasing and bang-bang decoherence control reproduce
stopped-light experiments: EIT spectra, second-scale storage decay,
beam-geometry parity effects, and storage linearity.
"""

from .bloch import DriveFields, RFPulse, apply_rf_pulse, bloch_rhs, step_rk4
from .ensemble import (
    DetuningClass,
    Ensemble,
    InhomogeneousProfile,
    LevelScheme,
    as_ensemble,
    discretize_profile,
    eit_width_analytic,
    weak_probe_susceptibility,
    weak_probe_transmission,
)
from .errors import (
    AnalysisError,
    CalibrationError,
    ConfigurationError,
    EitstoreError,
    SequenceValidationError,
    StepSizeError,
)
from .kernels import active_backend
from .noise import (
    NoiseModel,
    TogglingFrame,
    calibrate,
    coherence_decay,
    decay_envelope,
    sample_ou,
    toggled_phase_variance,
)
from .propagation import (
    Geometry,
    Grid,
    MediumState,
    RunSetup,
    SimulationRecord,
    phase_matching_factor,
    propagate_step,
    run_sequence,
)
from .sequence import (
    Sequence,
    make_eit_sweep,
    make_store_recall_ddc,
    make_store_recall_simple,
    validate,
)

__version__ = "0.1.0"
