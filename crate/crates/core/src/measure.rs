//! The branch measure `μ_d` on an image hierarchy and the scans that probe
//! its local dimension.
//!
//! Mass flows top-down: a branch passes its mass to its children in
//! proportion to `|J|^d`. Sums over sibling groups and level totals use
//! Neumaier compensation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dimension::least_squares;
use crate::error::{Error, Result};
use crate::qsmaps::ImageHierarchy;

/// Neumaier-compensated sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Relative tolerance for per-level total mass.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BranchMeasure {
    d: f64,
    masses: Vec<Vec<f64>>,
}

impl BranchMeasure {
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn level(&self, m: usize) -> &[f64] {
        &self.masses[m]
    }

    pub fn level_total(&self, m: usize) -> f64 {
        neumaier_sum(self.masses[m].iter().copied())
    }
}

/// Splits `mass` among children in proportion to `length^d`.
pub fn split_mass(mass: f64, lengths: &[f64], d: f64) -> Vec<f64> {
    let weights: Vec<f64> = lengths.iter().map(|l| l.powf(d)).collect();
    let total = neumaier_sum(weights.iter().copied());
    weights.into_iter().map(|w| mass * (w / total)).collect()
}

/// Builds `μ_d`. Rejects zero-length or non-finite image branches and
/// branches with more than `M²` children; verifies every level total.
pub fn build_mu(img: &ImageHierarchy, d: f64) -> Result<BranchMeasure> {
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::invalid("d", format!("d = {d} must lie in (0, 1)")));
    }
    for (m, lvl) in img.levels().iter().enumerate() {
        if let Some(i) = lvl
            .lengths
            .iter()
            .position(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::DegenerateImage {
                level: m,
                index: i,
                length: lvl.lengths[i],
            });
        }
    }
    let bound = (img.modulus() * img.modulus()) as usize;
    let mut masses = vec![vec![1.0]];
    for m in 0..img.depth() {
        let parent = img.level(m);
        let child = img.level(m + 1);
        if let Some(i) = parent.children.iter().position(|r| r.len() > bound) {
            return Err(Error::PropertyViolated {
                property: "at most M² children per branch",
                witness: format!(
                    "level {m}, branch {i}: {} children",
                    parent.children[i].len()
                ),
            });
        }
        let prev = &masses[m];
        let next: Vec<f64> = parent
            .children
            .par_iter()
            .zip(prev.par_iter())
            .flat_map_iter(|(range, &mass)| split_mass(mass, &child.lengths[range.clone()], d))
            .collect();
        masses.push(next);
    }
    let mu = BranchMeasure { d, masses };
    for m in 0..=mu.depth() {
        let total = mu.level_total(m);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::PropertyViolated {
                property: "unit mass per level",
                witness: format!("level {m}: total mass {total:e}"),
            });
        }
    }
    Ok(mu)
}

/// Hierarchy levels `a_k = m_k − 1 ≥ 1`.
pub fn default_scan_levels(img: &ImageHierarchy) -> Vec<usize> {
    img.markers()
        .iter()
        .skip(1)
        .map(|&mk| mk - 1)
        .filter(|&a| a >= 1)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub level: usize,
    pub max_ratio: f64,
    pub argmax: usize,
    /// `|J_{i−1}|^d / Σ_j |J_{i−1,j}|^d` along the ancestor chain of the
    /// maximising branch, root first; their product divided by `|J_0|^d` is
    /// `max_ratio`.
    pub factors: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioScan {
    pub d: f64,
    pub rows: Vec<RatioRow>,
    /// Least-squares slope of `ln max_ratio` against level.
    pub slope: f64,
    /// True when the slope is positive, i.e. the ratio grows with depth.
    pub growing: bool,
}

/// Per level, the largest `μ_d(J)/|J|^d` over the branches of that level.
pub fn ratio_scan(
    mu: &BranchMeasure,
    img: &ImageHierarchy,
    levels: Option<&[usize]>,
) -> Result<RatioScan> {
    let levels = levels.map_or_else(|| default_scan_levels(img), <[usize]>::to_vec);
    if let Some(&m) = levels.iter().find(|&&m| m > mu.depth()) {
        return Err(Error::invalid(
            "levels_to_check",
            format!("level {m} beyond measure depth {}", mu.depth()),
        ));
    }
    let d = mu.d();
    let mut rows = Vec::with_capacity(levels.len());
    for &m in &levels {
        let lvl = img.level(m);
        let (argmax, max_ratio) = mu
            .level(m)
            .par_iter()
            .zip(lvl.lengths.par_iter())
            .enumerate()
            .map(|(i, (mass, len))| (i, mass / len.powf(d)))
            .reduce(
                || (0, f64::NEG_INFINITY),
                |a, b| {
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        let mut chain = vec![argmax];
        for j in (1..=m).rev() {
            let i = *chain.last().unwrap();
            chain.push(img.level(j).parents[i]);
        }
        chain.reverse();
        let factors = (1..=m)
            .map(|j| {
                let parent = img.level(j - 1);
                let p = chain[j - 1];
                let children = &img.level(j).lengths[parent.children[p].clone()];
                parent.lengths[p].powf(d) / neumaier_sum(children.iter().map(|l| l.powf(d)))
            })
            .collect();
        rows.push(RatioRow {
            level: m,
            max_ratio,
            argmax,
            factors,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.level as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.max_ratio.ln()).collect();
    let slope = if rows.len() >= 2 {
        least_squares(&xs, &ys).slope
    } else {
        0.0
    };
    Ok(RatioScan {
        d,
        rows,
        slope,
        growing: slope > 0.0,
    })
}

/// Total mass of the branches of level `m` meeting `[x − r, x + r]`, and
/// their number.
pub fn ball_mass(
    mu: &BranchMeasure,
    img: &ImageHierarchy,
    m: usize,
    x: f64,
    r: f64,
) -> (f64, usize) {
    let lvl = img.level(m);
    let (lo, hi) = (x - r, x + r);
    let (mut a, mut b) = (0, lvl.len());
    while a < b {
        let mid = (a + b) / 2;
        if lvl.right(mid) < lo {
            a = mid + 1;
        } else {
            b = mid;
        }
    }
    let start = a;
    let mut mass = Vec::new();
    let mut i = start;
    while i < lvl.len() && lvl.lefts[i] <= hi {
        mass.push(mu.level(m)[i]);
        i += 1;
    }
    (neumaier_sum(mass.iter().copied()), mass.len())
}

#[derive(Clone, Debug, Serialize)]
pub struct BallRow {
    pub x: f64,
    pub level: usize,
    pub r: f64,
    pub mass: f64,
    pub ratio: f64,
    pub branches_met: usize,
    pub running_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BallScan {
    pub d: f64,
    pub rows: Vec<BallRow>,
    pub max_branches_met: usize,
    /// `2M²`.
    pub branch_bound: usize,
    /// Final running minimum per sample point.
    pub liminf_estimates: Vec<f64>,
}

/// Length of the preimage `f^{-1}[x − r, x + r]`.
fn preimage_length(img: &ImageHierarchy, x: f64, r: f64) -> f64 {
    let f = img.map();
    f.inverse(x + r) - f.inverse(x - r)
}

/// Bisection for the radius whose preimage ball has length `target`.
fn radius_for(img: &ImageHierarchy, x: f64, target: f64) -> f64 {
    let mut hi = target.max(f64::MIN_POSITIVE);
    while preimage_length(img, x, hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if preimage_length(img, x, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Samples `points` image points (left endpoints of random deepest-level
/// branches) and, at each level `a_k`, `radii_per_point` radii whose
/// preimage balls have lengths log-spaced in `[min|H_a|, min|H_{a−1}|)`.
pub fn ball_scan(
    mu: &BranchMeasure,
    img: &ImageHierarchy,
    points: usize,
    radii_per_point: usize,
    seed: u64,
) -> Result<BallScan> {
    if points == 0 || radii_per_point == 0 {
        return Err(Error::invalid(
            "ball",
            "points and radii_per_point must be positive",
        ));
    }
    let d = mu.d();
    let deepest = img.level(mu.depth());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..points)
        .map(|j| {
            let i = if j == 0 {
                0
            } else {
                rng.random_range(0..deepest.len())
            };
            deepest.lefts[i]
        })
        .collect();
    let levels: Vec<usize> = default_scan_levels(img)
        .into_iter()
        .filter(|&a| a <= mu.depth())
        .collect();
    let per_point: Vec<Vec<BallRow>> = xs
        .par_iter()
        .map(|&x| {
            let mut out = Vec::new();
            let mut running = f64::INFINITY;
            for &a in &levels {
                let lo = img.source_length_range(a).0;
                let hi = img.source_length_range(a - 1).0;
                for j in 0..radii_per_point {
                    let target = lo * (hi / lo).powf(j as f64 / radii_per_point as f64);
                    let r = radius_for(img, x, target);
                    let (mass, met) = ball_mass(mu, img, a, x, r);
                    let ratio = mass / r.powf(d);
                    running = running.min(ratio);
                    out.push(BallRow {
                        x,
                        level: a,
                        r,
                        mass,
                        ratio,
                        branches_met: met,
                        running_min: running,
                    });
                }
            }
            out
        })
        .collect();
    let liminf_estimates = per_point
        .iter()
        .map(|rows| rows.last().map_or(f64::NAN, |r| r.running_min))
        .collect();
    let rows: Vec<BallRow> = per_point.into_iter().flatten().collect();
    let max_branches_met = rows.iter().map(|r| r.branches_met).max().unwrap_or(0);
    Ok(BallScan {
        d,
        rows,
        max_branches_met,
        branch_bound: 2 * (img.modulus() * img.modulus()) as usize,
        liminf_estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_levels, star_system};
    use crate::hierarchy::build_hierarchy;
    use crate::params::{make_middle_thirds, make_uniform_cantor, ClosedInterval, HpsSpec};
    use crate::qsmaps::{push_hierarchy, QsMap};
    use crate::rational::{ratio, Rational};
    use num_traits::One;

    fn image(spec: &HpsSpec, map: &QsMap) -> ImageHierarchy {
        let tree = build_levels(spec).unwrap();
        let star = star_system(spec, &tree).unwrap();
        let chi = crate::params::derive_chi(spec)
            .unwrap()
            .max(Rational::one());
        let h = build_hierarchy(&star, &chi).unwrap();
        push_hierarchy(map, &h, None)
    }

    fn middle_thirds(depth: usize) -> ImageHierarchy {
        image(
            &make_middle_thirds(depth, ClosedInterval::unit()).unwrap(),
            &QsMap::identity(),
        )
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
    }

    #[test]
    fn equal_children_split_evenly() {
        let img = middle_thirds(4);
        for d in [0.1, 0.5, 0.9] {
            let mu = build_mu(&img, d).unwrap();
            assert!(mu.level(3).iter().all(|&m| m == 0.125));
        }
    }

    #[test]
    fn unequal_children_follow_length_power() {
        let masses = split_mass(0.9, &[0.4, 0.1], 0.5);
        assert!((masses[0] - 0.6).abs() < 1e-15);
        assert!((masses[1] - 0.3).abs() < 1e-15);
        assert_eq!(split_mass(1.0, &[0.2, 0.2], 0.37), vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_exponent() {
        let img = middle_thirds(3);
        assert!(build_mu(&img, 0.0).is_err());
        assert!(build_mu(&img, 1.0).is_err());
    }

    #[test]
    fn middle_thirds_ratio_scan_detects_dimension() {
        let img = middle_thirds(12);
        let low = ratio_scan(&build_mu(&img, 0.5).unwrap(), &img, None).unwrap();
        for row in &low.rows {
            let expected = (3f64.sqrt() / 2.0).powi(row.level as i32);
            assert!((row.max_ratio - expected).abs() < 1e-12 * expected);
            let product: f64 = row.factors.iter().product();
            assert!((product - row.max_ratio).abs() < 1e-12 * row.max_ratio);
        }
        assert!(low.slope < 0.0 && !low.growing);
        let high = ratio_scan(&build_mu(&img, 0.7).unwrap(), &img, None).unwrap();
        assert!(high.slope > 0.0 && high.growing);
    }

    #[test]
    fn ball_scan_on_middle_thirds() {
        let img = middle_thirds(10);
        let mu = build_mu(&img, 0.5).unwrap();
        let scan = ball_scan(&mu, &img, 8, 2, 11).unwrap();
        assert!(scan.max_branches_met <= scan.branch_bound);
        let at_zero: Vec<&BallRow> = scan.rows.iter().filter(|r| r.x == 0.0).collect();
        assert!(!at_zero.is_empty());
        for w in at_zero.windows(2) {
            assert!(w[1].running_min <= w[0].running_min);
        }
        let (mass, met) = ball_mass(&mu, &img, 0, 0.0, 1.0);
        assert_eq!((mass, met), (1.0, 1));
    }

    #[test]
    fn uniform_five_children_mass() {
        let spec = make_uniform_cantor(&[5], &[ratio(1, 7)], 4, ClosedInterval::unit()).unwrap();
        let img = image(&spec, &QsMap::power(2.0).unwrap());
        let mu = build_mu(&img, 0.6).unwrap();
        for m in 0..=mu.depth() {
            assert!((mu.level_total(m) - 1.0).abs() <= MASS_TOLERANCE);
        }
    }
}
