//! Numerical toolkit for oscillation-type seminorms of piecewise-constant
//! functions on the unit cube `(0,1)^d`, `d = 1..=3`.
//!
//! The central quantity is the capped-cardinality oscillation bracket
//! `[f]_eps`: `eps^(d-1)` times the best achievable sum of mean oscillations
//! over families of pairwise interior-disjoint `eps`-cubes with at most
//! `floor(eps^(1-d))` members. Its supremum over `eps` is the `B`-norm.
//! Removing the cardinality cap recovers a BV-type functional; shrinking
//! `eps` to zero yields a tail functional that estimates the distance to
//! the vanishing subspace.
//!
//! Everything is computed over explicit lattice candidate sets, so every
//! reported value is a certified lower bound of the corresponding continuum
//! supremum, with refinement knobs (`s`, grid size `n`) to tighten it.
//!
//! Core math is generic over the scalar type via [`Real`]; concrete aliases
//! for `f64` (the type the file formats use) live at the crate root.

pub mod accum;
pub mod atoms;
pub mod distance;
pub mod error;
pub mod grid;
pub mod io;
pub mod mollifier;
pub mod oscillation;
pub mod synth;

pub use error::Error;

/// Scalar type for all grid values and norms: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + core::iter::Sum
    + core::fmt::Debug
    + core::fmt::Display
    + core::fmt::LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossless-enough cast from `f64` literals into the working scalar.
pub(crate) fn cast<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("finite f64 must convert into the scalar type")
}

pub type GridFunction64 = grid::GridFunction<f64>;
pub type Cube64 = grid::Cube<f64>;
pub type SummedTable64 = grid::SummedTable<f64>;

pub type GridFunction32 = grid::GridFunction<f32>;
pub type Cube32 = grid::Cube<f32>;

pub type CubeFamily64 = oscillation::CubeFamily<f64>;
pub type OscillationCurve64 = oscillation::OscillationCurve<f64>;
pub type Atom64 = atoms::Atom<f64>;
pub type AtomicFunctional64 = atoms::AtomicFunctional<f64>;
pub type MollifierParams64 = mollifier::MollifierParams<f64>;
pub type DistanceReport64 = distance::DistanceReport<f64>;
