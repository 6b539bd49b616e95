//! Pulse-pair detection pipeline for a two-element east-west interferometer.
//!
//! The crate covers the full processing chain for narrowband pulse-pair
//! searches on a short-baseline interferometer:
//!
//! * [`geometry`] - sidereal timekeeping, fringe geometry, beam model
//! * [`ionosphere`] - ionospheric phase/delay diagnostic formulas
//! * [`simulator`] - deterministic scenario synthesis (IQ blocks, injections)
//! * [`firstlevel`] - channelization, noise estimation, pulse detection
//! * [`secondlevel`] - pair matching, phase computation, filtering, RFI excision
//! * [`statistics`] - RA histograms, effect sizes, direction-of-interest search
//! * [`cli`] - subcommand entry points used by the `fringepair` binary
//!
//! Everything downstream of a scenario seed is deterministic: the same
//! configuration and seed produce byte-identical event files, pair files and
//! reports.

// Validation guards are written `!(x > 0.0)` rather than `x <= 0.0` so that
// NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod firstlevel;
pub mod geometry;
pub mod io;
pub mod ionosphere;
pub mod rng;
pub mod secondlevel;
pub mod simulator;
pub mod statistics;

pub use error::{Error, Result};

/// Identity of one interferometer element.
///
/// The array is a two-element east-west pair; canonical orderings everywhere
/// in the crate list East before West.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    East,
    West,
}

impl Element {
    pub const BOTH: [Element; 2] = [Element::East, Element::West];

    /// 0 for East, 1 for West; used for stream addressing and file layout.
    pub fn index(self) -> usize {
        match self {
            Element::East => 0,
            Element::West => 1,
        }
    }

    /// Single-letter tag used in event files.
    pub fn tag(self) -> char {
        match self {
            Element::East => 'E',
            Element::West => 'W',
        }
    }

    pub fn from_tag(c: &str) -> Option<Element> {
        match c {
            "E" => Some(Element::East),
            "W" => Some(Element::West),
            _ => None,
        }
    }
}

/// Complex baseband sample rate of one spectral segment, Hz.
pub const SAMPLE_RATE_HZ: f64 = 954.0;

/// Samples per integration block (and DFT length).
pub const BLOCK_LEN: usize = 256;

/// Integration time of one block, seconds.
pub const T_INT_S: f64 = BLOCK_LEN as f64 / SAMPLE_RATE_HZ;

/// Width of one DFT bin, Hz.
pub const BIN_WIDTH_HZ: f64 = SAMPLE_RATE_HZ / BLOCK_LEN as f64;

/// Width of the coincident total-power measurement band, Hz.
pub const BAND_WIDTH_HZ: f64 = 50.0e6;
