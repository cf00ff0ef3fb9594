"""Own-voice reconstruction toolkit (Python bindings)."""

from ._core import (
    OvrError,
    TransferModel,
    active_level_db,
    bonferroni,
    estimate_rtfs,
    estoi,
    estoi_improvement,
    fit_cubic,
    format_pvalue,
    friedman_test,
    istft,
    load_wav,
    mix_at_snr,
    mwf_enhance,
    pearson,
    resample,
    rmse_poly3,
    rmse_scaled,
    run_cli,
    save_wav,
    simulate_inear,
    spearman,
    stft,
    wilcoxon_signed_rank,
)

__version__ = "0.3.0"

__all__ = [
    "OvrError",
    "TransferModel",
    "active_level_db",
    "bonferroni",
    "estimate_rtfs",
    "estoi",
    "estoi_improvement",
    "fit_cubic",
    "format_pvalue",
    "friedman_test",
    "istft",
    "load_wav",
    "mix_at_snr",
    "mwf_enhance",
    "pearson",
    "resample",
    "rmse_poly3",
    "rmse_scaled",
    "run_cli",
    "save_wav",
    "simulate_inear",
    "spearman",
    "stft",
    "wilcoxon_signed_rank",
]
