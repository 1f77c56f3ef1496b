//! Symbol-level precoding for the multiuser MISO downlink.
//!
//! Module layout follows the processing chain: constellations ([`modem`]),
//! channels ([`channel`]), data-vector enumeration ([`datavec`]), the conic
//! solver layer ([`conic`]), the block beamforming baseline ([`beamform`]),
//! fixed-rotation precoding ([`slp`]), joint rotation search ([`slpro`]),
//! a grid-search reference ([`oracle`]) and Monte Carlo drivers ([`sim`]).

pub mod beamform;
pub mod channel;
pub mod conic;
pub mod datavec;
pub mod error;
pub mod fixtures;
pub mod modem;
pub mod oracle;
pub mod sim;
pub mod slp;
pub mod slpro;

pub use error::{Error, Result};

#[cfg(test)]
mod proptests;
