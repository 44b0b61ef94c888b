//! Shared fixtures for the benchmarks.

use hps_core::dimension::geometric_scales;
use hps_core::rational::Rational;
use hps_core::*;

pub fn middle_thirds(depth: usize) -> HpsSpec {
    make_middle_thirds(depth, ClosedInterval::unit()).expect("valid generator")
}

pub fn near_full(depth: usize) -> HpsSpec {
    make_near_full(depth, ClosedInterval::unit()).expect("valid generator")
}

pub fn hierarchy(spec: &HpsSpec) -> Hierarchy {
    let tree = build_levels(spec).expect("valid spec");
    let star = star_system(spec, &tree).expect("depth >= 2");
    let chi = derive_chi(spec).expect("chi defined");
    build_hierarchy(&star, &chi).expect("properties hold")
}

pub fn dyadic_scales(min_exp: u32, max_exp: u32) -> Vec<Rational> {
    geometric_scales(2, min_exp, max_exp).expect("valid range")
}

/// The desk-scale experiment on `near_full(depth)` under `power(alpha)`.
pub fn experiment_config(depth: usize, alpha: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(near_full(depth), QsMap::power(alpha).expect("alpha > 0"));
    cfg.formula_spec = Some(near_full(32));
    cfg.scales = dyadic_scales(4, depth as u32);
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(hierarchy(&middle_thirds(6)).depth(), 5);
        let report = minimality_experiment(&experiment_config(6, 2.0)).unwrap();
        assert!(report.checks.all_passed());
    }
}
