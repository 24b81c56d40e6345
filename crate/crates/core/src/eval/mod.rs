//! Objective metrics, the SNR and model-size protocols and their reports.

mod metrics;
mod report;
mod sweep;

pub use metrics::{median_and_variance, si_sdr, MetricResult, PesqAdapter, SI_SDR_CAP_DB};
pub use report::{plot_size, plot_snr, size_summary, snr_summary, write_jsonl};
pub use sweep::{
    enhance, run_size_sweep, run_snr_sweep, ConstantMask, EnhanceOptions, EvalProtocol, MaskModel, SizeCell,
    SizeReport, SizeRow, SnrReport, SweepOptions, TestSet, NOISY_LABEL,
};
