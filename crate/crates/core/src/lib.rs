//! Exact calculus of two-party, two-input, two-output nonsignaling boxes.
//!
//! Probabilities are arbitrary-precision rationals ([`Ratio`]), so every
//! equality and threshold below is decided exactly. Only entropies, the
//! two-valued model search and the Monte Carlo simulator work in `f64`.

pub mod boxes;
pub mod decomposition;
pub mod format;
pub mod lp;
pub mod measures;
pub mod ratio;
pub mod secrecy;

pub use boxes::{
    apply_relabeling, mix, InvalidBox, LocalRelabeling, MixError, Mixture, NsBox, Relabeling, Table, ValidationReport,
    VertexId,
};
pub use decomposition::{
    decompose_pr_fraction, decompose_pr_mixture, find_dim2_model, Dim2LocalModel, Dim2SearchConfig, PrDecomposition,
};
pub use measures::{correlators, is_local_chsh, is_local_lp, nl, LocalityCertificate, NlReport};
pub use ratio::Ratio;
pub use secrecy::{key_rate, noisy_pr, simulate_protocol, KeyRateResult};
