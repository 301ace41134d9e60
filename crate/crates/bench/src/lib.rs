//! Fixtures shared by the criterion benches.

use rmtpair_core::model::{sample_gaussian_invariant, SymmetryClass};
use rmtpair_core::{rng, HMatrix};

/// A reproducible GOE/GUE matrix for timing runs.
pub fn fixture_matrix(n: usize, symmetry: SymmetryClass) -> HMatrix {
    sample_gaussian_invariant(n, symmetry, &mut rng::seeded(0xbe7c))
}
