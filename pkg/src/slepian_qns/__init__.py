"""Band-limited (Slepian) quantum noise spectroscopy toolkit.

Library for estimating the power spectral density of multiplicative
amplitude noise on a driven qubit: discrete prolate spheroidal sequences
and their spectral windows, shaped control waveforms, filter functions,
a Monte Carlo qubit measurement simulator, and a family of spectral
estimators (single-taper, adaptive multitaper, single-sequence
quadrature-matched, comb-based reconstruction, Bayesian refinement).

The submodules follow the processing chain:

- `slepian`: DPSS tapers, spectral windows, concentrations.
- `noise`: PSD models and Gaussian noise trajectory synthesis.
- `waveforms`: shaped control envelopes, modulation, SSQM combination.
- `filters`: filter functions, passbands, band integrals.
- `sim`: simulated qubit measurements and their quadrature oracles.
- `estimators`: single-taper / SSQM / adaptive multitaper / comb
  estimation with variance bounds, bias diagnostics and significance.
- `bayes`: information-weighted priors and Gaussian posterior updates.
- `scenarios`: configuration-driven end-to-end studies.
- `cli`: the ``slepian-qns`` command.
"""

__version__ = "0.1.0"

from .slepian import (
    SlepianParams,
    Taper,
    shannon_number,
    compute_dpss,
    dpswf_eval,
    dpswf_uniform_grid,
    rho_K,
)
from .noise import (
    GaussianMixture,
    Lorentzian,
    WhitePlusLine,
    psd_eval,
    psd_variance,
    synthesize,
    synthesize_batch,
)
from .waveforms import (
    Waveform,
    combine_tapers,
    cpmg_rse,
    cs_pair,
    dpss_waveform,
    modulate,
    normalize_power,
    repeat_base,
    ssqm_coefficients,
    ssqm_waveform,
)
from .filters import (
    PassbandSpec,
    band_area,
    band_integral,
    broadband_integral,
    comb_filter,
    cpmg_passband,
    dpss_passband,
    effective_nyquist,
    filter_eval,
    filter_uniform_grid,
    passband,
    segment_areas,
    spectral_weight,
    total_area,
)
from .sim import (
    ExperimentConfig,
    ExperimentResult,
    error_angle,
    expected_measured_signal,
    expected_signal,
    run_experiment,
)
from .estimators import (
    AqmResult,
    CombReconstruction,
    EstimateRecord,
    ShiftData,
    adaptive_multitaper,
    aqm_effective_filter,
    aqm_variance_bound,
    broadband_bias,
    comb_expected_signals,
    comb_reconstruct,
    comb_transfer_matrix,
    eigenestimate,
    fisher_information,
    fisher_variance_correction,
    information_matrix,
    interpolated_estimate,
    local_bias,
    make_bias_context,
    significance_test,
    ssqm_estimate,
    variance_bound,
)
from .bayes import (
    BayesUpdate,
    GaussianBelief,
    bayes_update,
    build_prior,
    credible_intervals,
    regularize_covariance,
)
from .scenarios import (
    ConfigError,
    build_waveform,
    load_schema,
    noise_from_config,
    regenerate,
    run_scenario,
    validate_config,
)

__all__ = [
    "__version__",
    # slepian
    "SlepianParams", "Taper", "shannon_number", "compute_dpss",
    "dpswf_eval", "dpswf_uniform_grid", "rho_K",
    # noise
    "GaussianMixture", "Lorentzian", "WhitePlusLine", "psd_eval",
    "psd_variance", "synthesize", "synthesize_batch",
    # waveforms
    "Waveform", "combine_tapers", "cpmg_rse", "cs_pair", "dpss_waveform",
    "modulate", "normalize_power", "repeat_base", "ssqm_coefficients",
    "ssqm_waveform",
    # filters
    "PassbandSpec", "band_area", "band_integral", "broadband_integral",
    "comb_filter", "cpmg_passband", "dpss_passband", "effective_nyquist",
    "filter_eval", "filter_uniform_grid", "passband", "segment_areas",
    "spectral_weight", "total_area",
    # sim
    "ExperimentConfig", "ExperimentResult", "error_angle",
    "expected_measured_signal", "expected_signal", "run_experiment",
    # estimators
    "AqmResult", "CombReconstruction", "EstimateRecord", "ShiftData",
    "adaptive_multitaper", "aqm_effective_filter", "aqm_variance_bound",
    "broadband_bias", "comb_expected_signals", "comb_reconstruct",
    "comb_transfer_matrix", "eigenestimate", "fisher_information",
    "fisher_variance_correction", "information_matrix", "interpolated_estimate", "local_bias",
    "make_bias_context", "significance_test", "ssqm_estimate",
    "variance_bound",
    # bayes
    "BayesUpdate", "GaussianBelief", "bayes_update", "build_prior",
    "credible_intervals", "regularize_covariance",
    # scenarios
    "ConfigError", "build_waveform", "load_schema", "noise_from_config",
    "regenerate", "run_scenario", "validate_config",
]
