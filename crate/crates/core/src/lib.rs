//! Confidential SBOM exchange: SBOM trees, attribute-based selective
//! redaction, dual-pass Merkle integrity and the redaction/consumption
//! pipeline built on them.

pub mod abkem;
pub mod encoding;
pub mod fixtures;
pub mod merkle;
pub mod month;
pub mod pipeline;
pub mod policy;
pub mod purl;
pub mod sbom;
