//! Respiration-pattern classification with an evolved 1D-CNN head.
//!
//! The crate is organised bottom-up:
//!
//! * [`synthgen`] synthesises labelled sin⁶ breathing waveforms for the eight
//!   breathing classes and reads/writes the binary dataset format.
//! * [`dsp`] holds the preprocessing chain (moving average, polynomial
//!   detrending), flip augmentation and stratified splitting.
//! * [`nn`] is a small 1D convolutional network engine with per-layer
//!   trainable flags, adaptive-moment training and a binary model format.
//! * [`transfer`] builds the base network, trims it to its frozen feature
//!   extractor and grafts searchable heads on top.
//! * [`ga`] is the genetic algorithm that searches over head architectures.

mod binio;
pub mod dsp;
pub mod error;
pub mod ga;
pub mod nn;
pub mod synthgen;
pub mod transfer;

pub use error::{Error, Result};

/// Number of breathing classes (seven patterns plus faulty data).
pub const NUM_CLASSES: usize = 8;
