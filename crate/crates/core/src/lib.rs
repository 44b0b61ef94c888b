//! Homogeneous perfect sets on the line: construction, star systems, branch
//! hierarchies, quasisymmetric images, Frostman-type measures and dimension
//! estimates.
//!
//! Geometry is exact (`BigRational`) up to the point where a quasisymmetric
//! map is applied; images and everything downstream use `f64`.

pub mod checks;
pub mod construction;
pub mod dimension;
pub mod error;
pub mod hierarchy;
pub mod measure;
pub mod params;
pub mod qsmaps;
pub mod rational;

pub use checks::{Check, CheckList};
pub use construction::{build_levels, star_system, BasicInterval, LevelTree, StarSystem};
pub use dimension::{
    box_dim, box_dim_exact, formula_dim, formula_dim_tail, minimality_experiment, ExperimentConfig,
    ExperimentReport, Tail,
};
pub use error::{Error, Result, StageExt};
pub use hierarchy::{
    branching_constant, build_hierarchy, check_properties, level_exponent, split_block, Branch,
    Hierarchy,
};
pub use measure::{ball_scan, build_mu, ratio_scan, BallScan, BranchMeasure, RatioScan};
pub use params::{
    derive_chi, make_middle_thirds, make_near_full, make_uniform_cantor, validate_spec,
    ClosedInterval, GeneratorSpec, HpsSpec, LevelSpec, ValidationReport,
};
pub use qsmaps::{
    distortion_probe, push_hierarchy, DistortionEnvelope, ImageHierarchy, MapSpec, ProbeConfig,
    QsMap,
};
pub use rational::Rational;
