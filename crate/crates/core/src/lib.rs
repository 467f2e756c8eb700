//! Simulated attacks and countermeasures against biometric matchers.
//!
//! The crate contains a minutiae fingerprint matcher with a compact binary
//! template format, image analysis (orientation, thinning, minutiae
//! extraction, alteration detection), fingerprint reconstruction from
//! templates, an eigenface recognizer, hill-climbing and timing attacks
//! against both, and score-release defenses.

pub mod analysis;
pub mod attack;
pub mod defense;
pub mod face;
pub mod generate;
pub mod harness;
pub mod matcher;
pub mod model;
pub mod par;
pub mod sidechannel;
pub mod synthesis;
pub mod template_io;
