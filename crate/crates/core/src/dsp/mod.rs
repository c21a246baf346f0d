//! Resampling, zero-phase FIR filtering, windowing, phase and spectra.

mod fir;
mod notch;
mod phase;
mod pipeline;
mod resample;
mod spectral;
mod windows;

pub use fir::{design_fir_bandpass, design_fir_lowpass, filtfilt, FirDesign, FirFilter, FirKind, FirWindow};
pub use notch::{notch_60hz, Notch};
pub use phase::{instantaneous_phase, InstantaneousPhase, PhaseExtractor, MIN_PHASE_SAMPLES};
pub use pipeline::{filter_matrix, preprocess_dataset, PreprocessConfig};
pub use resample::{decimation_factor, downsample, downsample_matrix};
pub use spectral::{ersp, hann, psd_welch, ErspConfig, Psd, TimeFreqMap};
pub use windows::{dataset_windows, sliding_windows, window_geometry};
