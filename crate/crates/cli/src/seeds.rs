//! Labeled seed derivation.
//!
//! Every random component gets `derive_seed(master, label)`: the first eight bytes
//! (little-endian) of SHA-256 over the master seed's decimal digits, a `/`, and the label.
//! Labels in use:
//!
//! | label | consumer |
//! |---|---|
//! | `split` | train/test split in `prep` |
//! | `synth` | `synth` cohort generator |
//! | `study/<family>/<sampler>` | HPO study (folds and sampler streams) |
//! | `model/<family>` | final model fit in `train-eval` |
//! | `model/horizon_classifier/<h>` | horizon classifier fit at horizon `h` |
//! | `explain/<family>/permutation` | permutation importance |
//! | `explain/<family>/shapley` | background draw and Shapley sampling |
//!
//! A label depends only on its own family, so adding a family never changes another
//! family's results.

use sha2::{Digest, Sha256};

pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_string().as_bytes());
    hasher.update(b"/");
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
