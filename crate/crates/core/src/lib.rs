//! Numerical relaxation toolkit for extended-real hyperelastic energy
//! densities with determinant-type constraints: inner-envelope upper bounds
//! via explicit piecewise-affine constructions, Kohn-Strang lamination with
//! certificates, membrane reduction, thin-film limits and inf/integral
//! interchange experiments.
//!
//! The `parallel` feature (on by default) runs the candidate sweeps on
//! rayon; without it every loop falls back to the identical sequential
//! order, so results are bit-for-bit the same either way.

pub mod density;
pub mod extval;
pub mod field;
pub mod interchange;
pub mod laminate;
pub mod mat;
pub mod membrane;
pub mod par;
pub mod sampling;
pub mod search;
pub mod thinfilm;
pub mod zest;

pub use density::{
    check_growth, make_det_barrier, make_membrane_barrier, membrane_reduce, monotone_family,
    ConstraintMode, Density, Domain, GrowthReport, HFunction, ReduceOptions,
};
pub use extval::ExtValue;
pub use field::{
    compose, conjugate_transform, construct, energy_of, ConstructionParams, PiecewiseAffineField,
};
pub use interchange::{build_multifunction, interchange_gap, MultifunctionKind};
pub use laminate::{ks_envelope, ks_step, replay, sv_lift, KsConfig, LaminateTree};
pub use mat::{
    adjoin_column, cross_columns, det3, rank_one_matrix, signed_svd, Mat, Mat32, Mat33,
    RankOneDyad, SignedSvd, Vec2, Vec3,
};
pub use membrane::{
    identity_check, membrane_density, membrane_functional, MembraneBudgets, MembraneDensityHandle,
    PlanarPiecewiseAffineMap,
};
pub use thinfilm::{energy_eps, gamma_report, pi_eps, recovery_sequence, AnsatzField, EpsSchedule};
pub use zest::{optimize_upper, OptimizeOptions, ZestOutcome};
