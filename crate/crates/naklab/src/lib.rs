//! naklab: exact Heisenberg-algebra calculus on the cohomology of Hilbert
//! schemes of points and symmetric products of a surface.
//!
//! The engine works over a graded Frobenius algebra `A` (the surface
//! cohomology) and builds, degree by degree and with exact Gaussian-rational
//! arithmetic:
//!
//! * the Fock space `F = Sym(A x t ...)` with creation/annihilation modes
//!   under either central sign convention ([`fock`]);
//! * the distinguished operator families (cubic zero-mode sums, the
//!   boundary operator, derivative towers and their closed forms, and the
//!   degree-`k` multiplication operators on both sides) ([`operators`]);
//! * the two ring structures on the level-`n` slice: the orbifold product
//!   on the symmetric-product side and the quantum-corrected product on the
//!   Hilbert-scheme side, together with the weighted transform `psi` that
//!   matches them ([`rings`]);
//! * named verification suites with machine-readable reports ([`suites`]).
//!
//! Everything is deterministic: iteration is over ordered maps, sampled
//! checks are seeded, and exported tables are byte-stable across runs.

pub mod fock;
pub mod frobenius;
pub mod operators;
pub mod parse;
pub mod rings;
pub mod scalar;
pub mod suites;

pub use fock::{CentralSign, FockVector, GeneralizedPartition, NakajimaMonomial, OperatorExpr};
pub use frobenius::{AlgebraElement, GradedFrobeniusAlgebra, TensorElement};
pub use scalar::{Rational, Scalar};
