use alloc::boxed::Box;
use core::fmt;

use crate::extremal::ExtremalProfile;

pub type Result<T> = core::result::Result<T, Error>;

/// One of the strict inequalities that define the admissible parameter range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Inequality {
    /// `d ≥ 3`
    DimensionAtLeastThree,
    /// `2 < 2s`
    LowerOrder,
    /// `2s < d`
    UpperOrder,
    /// `2d/(d+2s) < m`
    LowerDiffusion,
    /// `m < 2 − 2s/d`
    UpperDiffusion,
    /// `eps ≥ 0`
    NonNegativeEps,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::DimensionAtLeastThree => "d≥3",
            Inequality::LowerOrder => "2<2s",
            Inequality::UpperOrder => "2s<d",
            Inequality::LowerDiffusion => "2d/(d+2s)<m",
            Inequality::UpperDiffusion => "m<2−2s/d",
            Inequality::NonNegativeEps => "eps≥0",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("regime violated: {0} fails")]
    Regime(Inequality),
    #[error("argument outside the domain of {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: &'static str,
    },
    #[error("radial kernels are implemented for d = 3 only (got d = {0})")]
    UnsupportedDimension(u32),
    #[error("field and kernel live on incompatible grids")]
    GridMismatch,
    #[error("operation undefined for the zero field")]
    ZeroField,
    #[error("rescaled support does not fit in the target grid (relative mass loss {lost:.3e})")]
    SupportClipped { lost: f64 },
    #[error("non-finite or negative value in cell {cell}")]
    NonFiniteValue { cell: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("extremal iteration did not converge within {max_iter} iterations")]
    NoConvergence {
        max_iter: usize,
        best: Box<ExtremalProfile>,
    },
    #[error("extremal profile is not converged")]
    NotConverged,
}
