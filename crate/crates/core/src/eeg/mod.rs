//! Recordings, trials, class labels and the EEGC container.

mod container;
mod csv_import;
mod montage;
mod split;
mod types;

pub use container::{
    decode_eegc, encode_eegc, load_any, load_eegc, save_eegc, ContentKind, EegcContent, EegcFile, FORMAT_VERSION,
    MAGIC,
};
pub use csv_import::{import_csv, CsvSidecar};
pub use montage::{Montage, DEFAULT_CHANNELS};
pub use split::{split_trials, subset};
pub use types::{epoch, ChannelMatrix, ClassLabel, ClassSet, Dataset, Marker, Recording, Trial, Window, WindowSet};
