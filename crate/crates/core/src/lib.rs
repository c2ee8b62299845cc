//! Process tomography for quantum channels that need not preserve trace.
//!
//! A channel is described by its χ matrix in an operator basis. Loss that
//! depends on the input state shows up in the probability operator
//! P = Σ χ_mn A_n†A_m, whose eigenvalues are the extreme success
//! probabilities. The crate reconstructs χ from simulated or measured
//! coincidence counts by linear inversion or maximum likelihood, and
//! compares it against references with a fidelity that tolerates
//! sub-unit trace.
//!
//! ```
//! use ntpqpt::{pauli_basis, ppbs_chi, probability_operator, PpbsParams, ProbabilityClass};
//!
//! let chi = ppbs_chi(&PpbsParams::new(1.0, 0.3)?, &pauli_basis())?;
//! let p = probability_operator(&chi)?;
//! assert_eq!(p.classify(), ProbabilityClass::StateDependent);
//! # Ok::<(), ntpqpt::Error>(())
//! ```

pub mod channels;
pub mod error;
pub mod linalg;
pub mod mle;
pub mod optim;
pub mod schema;
pub mod simulator;
pub mod states;
pub mod tomography;

pub use channels::{
    apply_channel, change_basis, chi_from_kraus, elementary_basis, jamiolkowski_state, kraus_from_chi,
    pauli_basis, probability_operator, process_fidelity_ntp, process_fidelity_tp, BasisLabel, ChiMatrix,
    DensityMatrix, KrausSet, OperatorBasis, ProbabilityClass, ProbabilityOperator,
};
pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use mle::{
    fit_post_selected, fit_trace_preserving, fit_unconstrained, likelihood, normalize_max_p, reconstruct,
    FitOptions, FitReport, Method, MleParams, ZeroCountPolicy,
};
pub use schema::{MatrixJson, ReportJson, RunManifest, UnphysicalPolicy};
pub use simulator::{ppbs_chi, simulate_counts, Noise, PpbsParams, SimConfig};
pub use states::{Polarization, Protocol};
pub use tomography::{linear_inversion, state_tomography, CountTable, LinearInverter};
