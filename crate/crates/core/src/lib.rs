//! Near-field XL-MIMO modelling: electromagnetic channels, closed-form SNR,
//! near/far-field boundaries, visibility regions and low-complexity
//! multi-user detection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod detectors;
pub mod em_channel;
pub mod error;
pub mod harness;
mod linalg;
pub mod partition;
pub mod scenario;
pub mod snr;
pub mod visibility;

pub use error::{Error, Result};

// Book chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/snr.md")]
    mod snr {}
    #[doc = include_str!("../../../book/src/boundaries.md")]
    mod boundaries {}
    #[doc = include_str!("../../../book/src/visibility.md")]
    mod visibility {}
    #[doc = include_str!("../../../book/src/detectors.md")]
    mod detectors {}
    #[doc = include_str!("../../../book/src/partition.md")]
    mod partition {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
