//! Construction and verification of symmetry-invariant multiresolution
//! wavelet families on `R^n / Z^n`.
//!
//! The pipeline, bottom to top:
//!
//! * [`lattice`] — exact integer-lattice algebra: dilation matrices, coset
//!   systems for `G/AG` and its dual, the duality pairing and character
//!   tables.
//! * [`symmetry`] — finite subgroups of `GL_n(Z)` affiliated to a dilation,
//!   bounded conjugacy search, and the exhaustive census of affiliated
//!   pairs in dimension two.
//! * [`torusfn`] — function carriers on the torus: exact Laurent
//!   (trigonometric) polynomials, `AG`-periodic extensions, grid-sampled
//!   fields, the periodized bracket product, conditional expectation, and
//!   pointwise positive-matrix square roots.
//! * [`transfer`] — the transfer operator of a low-pass filter restricted
//!   to an invariant frequency box, its spectrum, the positive fixed
//!   vector, and filter normalization.
//! * [`cascade`] — infinite-product scaling functions and their
//!   orthonormality, invariance and duality diagnostics.
//! * [`waveletgen`] — polyphase coefficients, the two-phase wavelet
//!   formula, the Gram obstruction probe, orthonormalization of projected
//!   frames, and symmetry verification.

pub mod cascade;
pub mod lattice;
mod linalg;
pub mod pipeline;
pub mod presets;
pub mod symmetry;
pub mod torusfn;
pub mod transfer;
pub mod waveletgen;

pub use lattice::{CosetKind, CosetSystem, DilationMatrix, IntMatrix, LatticeError};
pub use symmetry::{AffiliationReport, SymmetryError, SymmetryGroup};
pub use torusfn::{BracketValue, GridFunction, LaurentPoly, ScaledLaurentPoly, TorusError};
pub use transfer::{FilterSpec, NormalizedFilter, SpectralReport, TransferError, TransferMatrixRep};
pub use waveletgen::{PolyphaseVector, WaveletError, WaveletFamily};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
