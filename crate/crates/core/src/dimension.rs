//! Finite-depth dimension estimates: the limsup packing-dimension formula for
//! homogeneous perfect sets, grid box counting, and the end-to-end
//! minimality experiment.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{Check, CheckList};
use crate::construction::{build_levels, star_system, verify_levels, verify_star, StarSystem};
use crate::error::{Error, Result, StageExt};
use crate::hierarchy::{
    build_hierarchy, check_properties, level_length_report, ratio_sequences, HierarchySummary,
};
use crate::measure::{ball_scan, build_mu, ratio_scan, RatioScan};
use crate::params::{derive_chi, validate_spec, HpsSpec};
use crate::qsmaps::{push_hierarchy, QsMap};
use crate::rational::{self, Rational};

/// Least-squares line through `(x, y)` with RMS residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    LineFit {
        slope,
        intercept,
        residual: (sse / n).sqrt(),
    }
}

/// Default trailing fraction of the formula sequence used for the tail.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.25;

/// Trailing window of the formula sequence over which the tail is taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    /// Last `ceil(fraction · len)` values.
    Fraction(f64),
    /// Last `n` values (all of them if the sequence is shorter).
    Last(usize),
}

impl Default for Tail {
    fn default() -> Self {
        Tail::Fraction(DEFAULT_TAIL_FRACTION)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FormulaReport {
    /// `(k, t_k)` for `1 ≤ k ≤ K − 1`.
    pub sequence: Vec<(usize, f64)>,
    /// Max of `t_k` over the trailing window.
    pub tail: f64,
    pub tail_window: usize,
    /// Whether the spec satisfies the bounded-gap-ratio condition.
    pub hypothesis_met: bool,
    /// Set when `|I₀| ≠ 1` and lengths were normalised.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<String>,
    /// Agreement of the sequence with the same formula written through star
    /// lengths `δ_k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub star_cross_check: Option<Check>,
}

/// `t_k = ln(n₁⋯n_{k+1}) / −ln[(c₁⋯c_k − (ξ_{k+1,0} + ξ_{k+1,n})/|I₀|)/n_{k+1}]`
/// for `1 ≤ k ≤ K − 1`, with the tail taken over the last `tail_fraction` of
/// the sequence.
pub fn formula_dim(
    spec: &HpsSpec,
    star: Option<&StarSystem>,
    tail_fraction: f64,
) -> Result<FormulaReport> {
    formula_dim_tail(spec, star, Tail::Fraction(tail_fraction))
}

pub fn formula_dim_tail(
    spec: &HpsSpec,
    star: Option<&StarSystem>,
    tail: Tail,
) -> Result<FormulaReport> {
    match tail {
        Tail::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::invalid("window", "tail fraction must lie in (0, 1]"));
        }
        Tail::Last(0) => return Err(Error::invalid("window", "tail window must be ≥ 1")),
        _ => {}
    }
    let depth = spec.depth();
    if depth < 2 {
        return Err(Error::invalid("depth", "formula needs depth ≥ 2"));
    }
    let i0 = spec.initial_length();
    let mut ln_count = (spec.level(1).n as f64).ln();
    let mut ln_product = 0.0f64;
    let mut sequence = Vec::with_capacity(depth - 1);
    for k in 1..depth {
        let c = &spec.level(k).c;
        ln_product += rational::ln(c);
        let next = spec.level(k + 1);
        let ln_n = (next.n as f64).ln();
        ln_count += ln_n;
        // ln(P_k − e) = ln P_k + ln(1 − e/P_k); only logs of the large
        // rationals are formed.
        let ends = next.end_gaps();
        let correction = if ends.is_zero() {
            0.0
        } else {
            let rel = (rational::ln(&ends) - rational::ln(&i0) - ln_product).exp();
            if rel >= 1.0 {
                return Err(Error::DegenerateLevel {
                    level: k + 1,
                    detail: "end gaps exhaust the parent interval".into(),
                });
            }
            (-rel).ln_1p()
        };
        let denominator = ln_n - ln_product - correction;
        if denominator <= 0.0 {
            return Err(Error::DegenerateLevel {
                level: k + 1,
                detail: "formula denominator is not positive".into(),
            });
        }
        sequence.push((k, ln_count / denominator));
    }
    let tail_window = match tail {
        Tail::Fraction(f) => ((sequence.len() as f64 * f).ceil() as usize).max(1),
        Tail::Last(n) => n.min(sequence.len()),
    };
    let tail = sequence[sequence.len() - tail_window..]
        .iter()
        .map(|&(_, t)| t)
        .fold(f64::NEG_INFINITY, f64::max);
    let normalization = (!i0.is_one()).then(|| {
        format!(
            "lengths divided by |I₀| = {} before evaluation",
            rational::format(&i0)
        )
    });
    let star_cross_check = star.map(|star| {
        let mut check = Check::new("formula_matches_star_lengths");
        let mut ln_count = (spec.level(1).n as f64).ln();
        for &(k, t) in sequence.iter().take_while(|(k, _)| *k <= star.depth()) {
            let ln_n = (spec.level(k + 1).n as f64).ln();
            ln_count += ln_n;
            let via_star = ln_count / (ln_n - rational::ln(&(star.delta(k) / &i0)));
            check.observe((via_star - t).abs() <= 1e-12 * t.abs().max(1.0), || {
                format!("k = {k}: {t} vs {via_star}")
            });
        }
        check
    });
    Ok(FormulaReport {
        sequence,
        tail,
        tail_window,
        hypothesis_met: derive_chi(spec).is_ok(),
        normalization,
        star_cross_check,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxRow {
    pub delta: f64,
    pub log_inv_delta: f64,
    pub count: u64,
    pub log_count: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoxReport {
    pub rows: Vec<BoxRow>,
    pub fit: LineFit,
}

impl BoxReport {
    /// Slopes over consecutive windows of `width` scales (in the given
    /// order), each window shifted by one scale.
    pub fn window_slopes(&self, width: usize) -> Vec<f64> {
        if width < 2 || width > self.rows.len() {
            return Vec::new();
        }
        self.rows
            .windows(width)
            .map(|w| {
                let xs: Vec<f64> = w.iter().map(|r| r.log_inv_delta).collect();
                let ys: Vec<f64> = w.iter().map(|r| r.log_count).collect();
                least_squares(&xs, &ys).slope
            })
            .collect()
    }
}

/// Cell-index range `[lo, hi]` of half-open cells `[jδ, (j+1)δ)` meeting
/// `[a, b]` in positive length (the single cell containing `a` when
/// `a = b`).
fn cell_range_exact(a: &Rational, b: &Rational, delta: &Rational) -> (BigInt, BigInt) {
    let lo = rational::floor_int(&(a / delta));
    if b <= a {
        return (lo.clone(), lo);
    }
    let hi = rational::ceil_int(&(b / delta)) - BigInt::one();
    (lo, hi)
}

fn merged_count<T: Ord + Clone>(
    ranges: impl IntoIterator<Item = (T, T)>,
    width: impl Fn(&T, &T) -> u64,
) -> u64 {
    let mut total = 0u64;
    let mut current: Option<(T, T)> = None;
    for (lo, hi) in ranges {
        current = match current {
            Some((clo, chi)) if lo <= chi => Some((clo, if hi > chi { hi } else { chi })),
            Some((clo, chi)) => {
                total += width(&clo, &chi);
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((clo, chi)) = current {
        total += width(&clo, &chi);
    }
    total
}

fn check_scales(hull: f64, scales: &[f64]) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::invalid("scales", "at least one scale is required"));
    }
    if let Some(d) = scales.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::invalid(
            "scales",
            format!("scale {d} must be positive"),
        ));
    }
    if let Some(d) = scales.iter().find(|d| **d > hull) {
        return Err(Error::invalid(
            "scales",
            format!("scale {d} is coarser than the hull length {hull}"),
        ));
    }
    Ok(())
}

fn report(scales: &[f64], counts: Vec<u64>) -> BoxReport {
    let rows: Vec<BoxRow> = scales
        .iter()
        .zip(counts)
        .map(|(&delta, count)| BoxRow {
            delta,
            log_inv_delta: -delta.ln(),
            count,
            log_count: (count as f64).ln(),
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.log_inv_delta).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.log_count).collect();
    let fit = least_squares(&xs, &ys);
    BoxReport { rows, fit }
}

/// Grid box counts of a sorted, interior-disjoint list of exact intervals.
pub fn box_dim_exact(intervals: &[(Rational, Rational)], scales: &[Rational]) -> Result<BoxReport> {
    if intervals.is_empty() {
        return Err(Error::invalid("intervals", "empty interval list"));
    }
    let hull = &intervals.last().unwrap().1 - &intervals[0].0;
    if scales.iter().any(|d| !d.is_positive()) {
        return Err(Error::invalid("scales", "scales must be positive"));
    }
    if let Some(d) = scales.iter().find(|d| **d > hull) {
        return Err(Error::invalid(
            "scales",
            format!(
                "scale {} is coarser than the hull length {}",
                rational::format(d),
                rational::format(&hull)
            ),
        ));
    }
    if scales.is_empty() {
        return Err(Error::invalid("scales", "at least one scale is required"));
    }
    let counts = scales
        .par_iter()
        .map(|delta| {
            merged_count(
                intervals.iter().map(|(a, b)| cell_range_exact(a, b, delta)),
                |lo, hi| (hi - lo + BigInt::one()).to_u64().unwrap_or(u64::MAX),
            )
        })
        .collect();
    let scales_f64: Vec<f64> = scales.iter().map(rational::to_f64).collect();
    Ok(report(&scales_f64, counts))
}

/// `x / δ` snapped to the nearest integer when within `1e-9` relative.
fn snapped(x: f64, delta: f64) -> f64 {
    let u = x / delta;
    let r = u.round();
    if (u - r).abs() <= 1e-9 * u.abs().max(1.0) {
        r
    } else {
        u
    }
}

/// Grid box counts of sorted, interior-disjoint `(left, length)` intervals.
pub fn box_dim(intervals: &[(f64, f64)], scales: &[f64]) -> Result<BoxReport> {
    if intervals.is_empty() {
        return Err(Error::invalid("intervals", "empty interval list"));
    }
    let (first, _) = intervals[0];
    let (last, last_len) = intervals[intervals.len() - 1];
    check_scales(last + last_len - first, scales)?;
    let counts = scales
        .par_iter()
        .map(|&delta| {
            merged_count(
                intervals.iter().map(|&(a, len)| {
                    let lo = snapped(a, delta).floor() as i64;
                    let hi = if len > 0.0 {
                        (snapped(a + len, delta).ceil() as i64 - 1).max(lo)
                    } else {
                        lo
                    };
                    (lo, hi)
                }),
                |lo, hi| (hi - lo + 1) as u64,
            )
        })
        .collect();
    Ok(report(scales, counts))
}

/// Inputs of [`minimality_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub spec: HpsSpec,
    /// Spec the formula is evaluated on; defaults to `spec`.
    pub formula_spec: Option<HpsSpec>,
    pub map: QsMap,
    pub chi: Option<Rational>,
    pub d_grid: Vec<f64>,
    pub scales: Vec<Rational>,
    pub tail: Tail,
    pub threshold: f64,
    pub levels_to_check: Option<Vec<usize>>,
    pub ball_points: usize,
    pub radii_per_point: usize,
    pub seed: u64,
    /// Number of consecutive scales per box-slope window.
    pub scale_window: usize,
    /// Trailing scanned levels compared for the boundedness verdict.
    pub trailing_levels: usize,
    /// Allowed growth of the max ratio across the trailing levels.
    pub growth_factor: f64,
}

impl ExperimentConfig {
    pub fn new(spec: HpsSpec, map: QsMap) -> Self {
        ExperimentConfig {
            spec,
            formula_spec: None,
            map,
            chi: None,
            d_grid: vec![0.5, 0.7, 0.9],
            scales: Vec::new(),
            tail: Tail::default(),
            threshold: 0.95,
            levels_to_check: None,
            ball_points: 16,
            radii_per_point: 1,
            seed: 0,
            scale_window: 5,
            trailing_levels: 5,
            growth_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BallSummary {
    pub rows: usize,
    pub max_branches_met: usize,
    pub branch_bound: usize,
    pub liminf_min: f64,
    pub liminf_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DVerdict {
    pub d: f64,
    pub ratio_scan: RatioScan,
    pub ball: BallSummary,
    /// Max ratio at the deepest checked level over the max ratio at the
    /// first of the trailing levels.
    pub trailing_growth: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub depth: usize,
    pub hierarchy: HierarchySummary,
    pub checks: CheckList,
    pub formula: FormulaReport,
    pub box_set: BoxReport,
    pub box_image: BoxReport,
    pub image_window_slopes: Vec<f64>,
    pub per_d: Vec<DVerdict>,
    pub threshold: f64,
    /// Formula tail reaches the threshold and the gap-ratio condition holds.
    pub hypothesis_met: bool,
}

/// Runs validation, construction, star system, hierarchy, image, measures,
/// formula and box estimates, and the measure scans, and collects them in one
/// report. Stage errors carry the stage name.
pub fn minimality_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let spec = &cfg.spec;
    validate_spec(spec).into_result().stage("validate")?;
    let tree = build_levels(spec).stage("construct")?;
    let star = star_system(spec, &tree).stage("star")?;
    let chi = match &cfg.chi {
        Some(c) => c.clone(),
        None => derive_chi(spec).stage("hierarchy")?.max(Rational::one()),
    };
    let h = build_hierarchy(&star, &chi).stage("hierarchy")?;

    let mut checks = verify_levels(spec, &tree);
    checks.extend(verify_star(spec, &tree, &star, &chi));
    checks.extend(check_properties(&h));
    let lengths = level_length_report(&h);
    let mut lemma = Check::new("level_length_bounds");
    for row in &lengths.rows {
        lemma.observe(row.passed, || format!("m = {}", row.m));
    }
    checks.push(lemma);
    checks.extend(ratio_sequences(&h).checks);

    let img = push_hierarchy(&cfg.map, &h, None);

    let formula_spec = cfg.formula_spec.as_ref().unwrap_or(spec);
    let formula_star = if cfg.formula_spec.is_none() {
        Some(&star)
    } else {
        None
    };
    let formula = formula_dim_tail(formula_spec, formula_star, cfg.tail).stage("formula")?;

    let set_pairs = tree.level_pairs(spec.depth());
    let box_set = box_dim_exact(&set_pairs, &cfg.scales).stage("box_set")?;
    let image_pairs: Vec<(f64, f64)> = tree
        .level_pairs_f64(spec.depth())
        .iter()
        .map(|&(a, b)| (cfg.map.eval(a), cfg.map.increment(a, b - a)))
        .collect();
    let scales_f64: Vec<f64> = cfg.scales.iter().map(rational::to_f64).collect();
    let box_image = box_dim(&image_pairs, &scales_f64).stage("box_image")?;
    let image_window_slopes = box_image.window_slopes(cfg.scale_window);

    let per_d = cfg
        .d_grid
        .iter()
        .map(|&d| -> Result<DVerdict> {
            let mu = build_mu(&img, d).stage("measure")?;
            let scan = ratio_scan(&mu, &img, cfg.levels_to_check.as_deref()).stage("ratio_scan")?;
            let balls = ball_scan(&mu, &img, cfg.ball_points, cfg.radii_per_point, cfg.seed)
                .stage("ball_scan")?;
            let trailing = &scan.rows[scan.rows.len().saturating_sub(cfg.trailing_levels)..];
            let trailing_growth = match (trailing.first(), trailing.last()) {
                (Some(a), Some(b)) => b.max_ratio / a.max_ratio,
                _ => 1.0,
            };
            let liminf_min = balls
                .liminf_estimates
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            let liminf_max = balls
                .liminf_estimates
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(DVerdict {
                d,
                bounded: trailing_growth <= cfg.growth_factor,
                trailing_growth,
                ratio_scan: scan,
                ball: BallSummary {
                    rows: balls.rows.len(),
                    max_branches_met: balls.max_branches_met,
                    branch_bound: balls.branch_bound,
                    liminf_min,
                    liminf_max,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let hypothesis_met = formula.hypothesis_met && formula.tail >= cfg.threshold;
    Ok(ExperimentReport {
        depth: spec.depth(),
        hierarchy: h.summary(),
        checks,
        formula,
        box_set,
        box_image,
        image_window_slopes,
        per_d,
        threshold: cfg.threshold,
        hypothesis_met,
    })
}

/// `base^{-j}` for `j` in `min_exp..=max_exp`.
pub fn geometric_scales(base: u64, min_exp: u32, max_exp: u32) -> Result<Vec<Rational>> {
    if base < 2 || min_exp > max_exp {
        return Err(Error::invalid(
            "scales",
            "need base ≥ 2 and min_exp ≤ max_exp",
        ));
    }
    Ok((min_exp..=max_exp)
        .map(|j| Rational::new(BigInt::one(), BigInt::from(base).pow(j)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_middle_thirds, make_near_full, ClosedInterval};
    use crate::rational::{int, ratio};

    fn middle_thirds_closed_form(k: usize) -> f64 {
        let k = k as f64;
        (k + 1.0) * 2f64.ln() / (k * 3f64.ln() + 2f64.ln())
    }

    #[test]
    fn middle_thirds_formula_matches_closed_form() {
        let spec = make_middle_thirds(51, ClosedInterval::unit()).unwrap();
        let tree = build_levels(&spec.truncated(6).unwrap()).unwrap();
        let star = star_system(&spec.truncated(6).unwrap(), &tree).unwrap();
        let report = formula_dim(&spec, None, DEFAULT_TAIL_FRACTION).unwrap();
        assert_eq!(report.sequence.len(), 50);
        assert!((report.sequence[0].1 - 0.7737).abs() < 1e-4);
        for &(k, t) in &report.sequence {
            assert!((t - middle_thirds_closed_form(k)).abs() < 1e-12, "k = {k}");
        }
        assert!(report.hypothesis_met);
        assert!(report.normalization.is_none());

        let short = formula_dim(&spec.truncated(6).unwrap(), Some(&star), 1.0).unwrap();
        assert!(short.star_cross_check.unwrap().passed);
    }

    #[test]
    fn near_full_tail_reaches_threshold_at_thirty() {
        let spec = make_near_full(31, ClosedInterval::unit()).unwrap();
        let report = formula_dim(&spec, None, DEFAULT_TAIL_FRACTION).unwrap();
        assert!(report.tail >= 0.96, "tail = {}", report.tail);
        let short = formula_dim(&spec.truncated(14).unwrap(), None, DEFAULT_TAIL_FRACTION).unwrap();
        assert!(short.tail < report.tail);
    }

    #[test]
    fn fixed_tail_window_takes_last_values() {
        let spec = make_middle_thirds(12, ClosedInterval::unit()).unwrap();
        let last3 = formula_dim_tail(&spec, None, Tail::Last(3)).unwrap();
        assert_eq!(last3.tail_window, 3);
        // The middle-thirds sequence decreases, so the tail is its 9th value.
        assert_eq!(last3.tail, last3.sequence[8].1);
        let all = formula_dim_tail(&spec, None, Tail::Last(100)).unwrap();
        assert_eq!(all.tail_window, 11);
        assert_eq!(all.tail, all.sequence[0].1);
        assert!(formula_dim_tail(&spec, None, Tail::Last(0)).is_err());
    }

    #[test]
    fn end_gaps_enter_the_denominator() {
        let spec = HpsSpec {
            initial_interval: ClosedInterval::new(int(0), int(2)),
            levels: vec![
                crate::params::LevelSpec {
                    n: 2,
                    c: ratio(1, 4),
                    gaps: vec![ratio(1, 4), ratio(1, 2), ratio(1, 4)],
                },
                crate::params::LevelSpec {
                    n: 2,
                    c: ratio(1, 4),
                    gaps: vec![ratio(1, 16), ratio(1, 8), ratio(1, 16)],
                },
                crate::params::LevelSpec {
                    n: 2,
                    c: ratio(1, 4),
                    gaps: vec![ratio(1, 64), ratio(1, 32), ratio(1, 64)],
                },
            ],
        };
        let tree = build_levels(&spec).unwrap();
        let star = star_system(&spec, &tree).unwrap();
        let report = formula_dim(&spec, Some(&star), 1.0).unwrap();
        // k = 1: ln 4 / −ln[(1/4 − (1/8)/2)/2] = ln 4 / ln(32/3)
        let expected = 4f64.ln() / (32f64 / 3.0).ln();
        assert!((report.sequence[0].1 - expected).abs() < 1e-14);
        assert!(report.star_cross_check.unwrap().passed);
        assert!(report.normalization.is_some());
    }

    #[test]
    fn unit_interval_has_slope_one() {
        let scales = geometric_scales(2, 1, 12).unwrap();
        let report = box_dim_exact(&[(int(0), int(1))], &scales).unwrap();
        assert!((report.fit.slope - 1.0).abs() < 1e-12);
        let f: Vec<f64> = scales.iter().map(rational::to_f64).collect();
        let float = box_dim(&[(0.0, 1.0)], &f).unwrap();
        assert_eq!(float.rows, report.rows);
    }

    #[test]
    fn middle_thirds_counts_are_powers_of_two() {
        let spec = make_middle_thirds(12, ClosedInterval::unit()).unwrap();
        let tree = build_levels(&spec).unwrap();
        let scales = geometric_scales(3, 4, 12).unwrap();
        let report = box_dim_exact(&tree.level_pairs(12), &scales).unwrap();
        for (row, j) in report.rows.iter().zip(4..) {
            assert_eq!(row.count, 1u64 << j);
        }
        assert!((report.fit.slope - 2f64.ln() / 3f64.ln()).abs() < 1e-9);
        let f: Vec<f64> = scales.iter().map(rational::to_f64).collect();
        let pairs: Vec<(f64, f64)> = tree
            .level_pairs_f64(12)
            .into_iter()
            .map(|(a, b)| (a, b - a))
            .collect();
        assert_eq!(box_dim(&pairs, &f).unwrap().rows, report.rows);
    }

    #[test]
    fn coarse_scales_are_rejected() {
        assert!(box_dim_exact(&[(int(0), ratio(1, 2))], &[int(1)]).is_err());
        assert!(box_dim(&[(0.0, 0.5)], &[1.0]).is_err());
        assert!(box_dim(&[(0.0, 0.5)], &[]).is_err());
    }

    #[test]
    fn shared_cells_count_once() {
        let pairs = vec![
            (ratio(0, 1), ratio(1, 10)),
            (ratio(1, 5), ratio(3, 10)),
            (ratio(9, 10), ratio(1, 1)),
        ];
        let report = box_dim_exact(&pairs, &[ratio(1, 2)]).unwrap();
        assert_eq!(report.rows[0].count, 2);
    }

    #[test]
    fn experiment_flags_middle_thirds_under_power() {
        let spec = make_middle_thirds(8, ClosedInterval::unit()).unwrap();
        let mut cfg = ExperimentConfig::new(spec, QsMap::power(2.0).unwrap());
        cfg.scales = geometric_scales(3, 2, 8).unwrap();
        cfg.d_grid = vec![0.5];
        let report = minimality_experiment(&cfg).unwrap();
        assert!(!report.hypothesis_met);
        assert!(
            report.checks.all_passed(),
            "{:?}",
            report.checks.failures().collect::<Vec<_>>()
        );
        assert!((report.box_set.fit.slope - 0.6309).abs() < 0.03);
    }

    #[test]
    fn experiment_tags_stage_errors() {
        let spec = make_middle_thirds(4, ClosedInterval::unit()).unwrap();
        let mut cfg = ExperimentConfig::new(spec, QsMap::identity());
        cfg.scales = vec![int(2)];
        let err = minimality_experiment(&cfg).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "box_set",
                    ..
                }
            ),
            "{err}"
        );
    }
}
