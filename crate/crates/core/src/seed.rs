//! Seed derivation for ensembles.
//!
//! `derive_seed(master, label, index)` is the first 8 bytes (little endian)
//! of `SHA-256("nlslab/seed/v1" ‖ master ‖ len(label) ‖ label ‖ index)`, all
//! integers little endian. The construction is part of the on-disk contract:
//! changing it changes every result.

use sha2::{Digest, Sha256};

const DOMAIN: &[u8] = b"nlslab/seed/v1";

pub fn derive_seed(master_seed: u64, stream_label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(master_seed.to_le_bytes());
    h.update((stream_label.len() as u64).to_le_bytes());
    h.update(stream_label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Stream labels used by the ensemble drivers.
pub mod labels {
    /// Initial-data draws shared by every flow.
    pub const DRAW: &str = "draw";
    /// Pilot draws used to tune thresholds.
    pub const PILOT: &str = "pilot";
    pub const CHAOS: &str = "chaos";
    pub const HYPER: &str = "hyper";
    pub const PHASE: &str = "phase";
}
