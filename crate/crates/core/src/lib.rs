pub mod connectivity;
pub mod dsp;
pub mod eeg;
mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};

/// Guide chapters, compiled so their examples run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/connectivity.md")]
    mod connectivity {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
