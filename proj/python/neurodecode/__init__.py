"""EEG neural-decoding benchmark: signal processing, CSP+LDA, models and analysis."""

from ._core import (
    ConfigError,
    DataError,
    NeurodecodeError,
    NumericError,
    ShapeError,
    audit_params,
    butterworth_bandpass,
    csp_lda_fit_predict,
    fit_csp_covariances,
    generate_synthetic,
    grad_check,
    load_epochs,
    lr_at,
    paired_ttest,
    restart_epochs,
    run_cli,
    sos_gain,
    sosfiltfilt,
    two_sided_p,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NeurodecodeError",
    "NumericError",
    "ShapeError",
    "audit_params",
    "butterworth_bandpass",
    "csp_lda_fit_predict",
    "fit_csp_covariances",
    "generate_synthetic",
    "grad_check",
    "load_epochs",
    "lr_at",
    "paired_ttest",
    "restart_epochs",
    "run_cli",
    "sos_gain",
    "sosfiltfilt",
    "two_sided_p",
]
