"""Single-emitter photon sorter: interference spectra, photon statistics and
spin-sorted polarisation correlations."""

__version__ = "0.1.0"

from .units import CavityModel, EmitterParams, energy_to_rate, fwhm_to_hwhm, rate_to_energy
from .scatter import (
    ModulationMetrics,
    Spectrum,
    cavity_field,
    emitter_field,
    fit_modulation,
    modulation_metrics,
    response_components,
    total_reflectivity,
)
from .bloch import (
    DensityMatrix2,
    DriveParams,
    FieldModel,
    G2Calibration,
    G2Curve,
    bloch_evolve,
    bloch_steady_state,
    classify_g2_shape,
    fit_g2_map,
    g2_map,
    g2_superposed,
)
from .trajectory import ClickStream, HbtHistogram, g2_zero_estimate, hbt_histogram, mc_jump_clicks
from .spin import (
    ChargeSpinParams,
    PolCorrResult,
    analytic_degree,
    blinking_g2,
    emit_polarized_clicks,
    fit_exponential,
    gillespie_charge_spin,
    pol_correlation,
)
