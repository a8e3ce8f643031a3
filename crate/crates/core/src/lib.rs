//! Collaborative multi-device MIMO system simulator.
//!
//! A primary handset pools the antennas of nearby helper devices, either by
//! frequency-translating amplify-and-forward relaying (diversity and rank
//! augmentation) or by sharing processed channel estimates (localization).
//! The crate models the multi-cell deployment, the channels, the link
//! abstraction and the Monte-Carlo traffic loop used to quantify those gains.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod comimo;
pub mod error;
pub mod linalg;
pub mod locaug;
pub mod phy;
pub mod rng;
pub mod scenario;
pub mod simloop;
pub mod units;

pub use error::{Error, Result};
