//! Exact moment-recursion polynomials and the limit moments `R_b^(m)(r)`.

mod asymptotics;
mod build;
mod iterate;
mod limits;
pub mod poly;

pub use asymptotics::{
    asymptotics_scan, dichotomy_scan, gaussian_constant, moment_bound_ratio, no_growth_trend, AsymptoticsReport, DichotomyEntry,
    DichotomyReport, MomentScan, Regime, ScanPoint, DIVERGENCE_LEVEL, VANISHING_LEVEL,
};
pub use build::{
    build_pm, check_structure, leading_coefficient_check, linear_coefficient, split_uv, structure_report,
    StructureReport, MAX_B, MAX_M,
};
pub use iterate::{iterate_moments, iterate_moments_exact, MomentSystem, MomentVector};
pub use limits::{
    limit_moments, limit_moments_row, limit_moments_series, moment_derivatives, LimitRow, LimitTable, SeriesValue,
    SERIES_MIN_TERMS,
};
pub use poly::{CompiledPoly, PolyRecord, SparsePolynomial, TermRecord};
