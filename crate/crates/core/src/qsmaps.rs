//! Concrete increasing quasisymmetric maps of the line, images of branch
//! hierarchies, and empirical distortion envelopes.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::rational;

/// Config form of a map, as it appears in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    Affine { a: f64, b: f64 },
    Power { alpha: f64 },
    ShiftedPower { alpha: f64, shift: f64 },
    Composition { maps: Vec<MapSpec> },
}

impl MapSpec {
    /// `(kind, parameter doc)` for every variant, sorted by kind.
    pub const CATALOG: [(&'static str, &'static str); 5] = [
        ("affine", "{a > 0, b}; x -> a x + b"),
        ("composition", "{maps: [map, ...]}; applied first to last"),
        ("identity", "{}; x -> x"),
        ("power", "{alpha > 0}; x -> sign(x) |x|^alpha"),
        (
            "shifted_power",
            "{alpha > 0, shift >= 0}; x -> sign(x + shift) |x + shift|^alpha - shift^alpha",
        ),
    ];

    fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and > 0")))
            }
        };
        match self {
            MapSpec::Identity => Ok(()),
            MapSpec::Affine { a, b } => {
                positive("a", *a)?;
                if !b.is_finite() {
                    return Err(Error::invalid("b", "offset must be finite"));
                }
                Ok(())
            }
            MapSpec::Power { alpha } => positive("alpha", *alpha),
            MapSpec::ShiftedPower { alpha, shift } => {
                positive("alpha", *alpha)?;
                if !(shift.is_finite() && *shift >= 0.0) {
                    return Err(Error::invalid(
                        "shift",
                        format!("{shift} must be finite and ≥ 0"),
                    ));
                }
                Ok(())
            }
            MapSpec::Composition { maps } => {
                if maps.is_empty() {
                    return Err(Error::invalid("maps", "composition needs at least one map"));
                }
                maps.iter().try_for_each(MapSpec::validate)
            }
        }
    }
}

/// A validated, strictly increasing homeomorphism of the line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapSpec", into = "MapSpec")]
pub struct QsMap {
    spec: MapSpec,
}

impl TryFrom<MapSpec> for QsMap {
    type Error = Error;

    fn try_from(spec: MapSpec) -> Result<Self> {
        spec.validate()?;
        Ok(QsMap { spec })
    }
}

impl From<QsMap> for MapSpec {
    fn from(m: QsMap) -> MapSpec {
        m.spec
    }
}

/// `sign(x)|x|^α`.
fn odd_power(x: f64, alpha: f64) -> f64 {
    x.signum() * x.abs().powf(alpha)
}

/// `P_α(x + h) − P_α(x)` for `h ≥ 0` without cancellation.
fn odd_power_increment(x: f64, h: f64, alpha: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let y = x + h;
    if x >= 0.0 {
        if x == 0.0 {
            h.powf(alpha)
        } else {
            x.powf(alpha) * (alpha * (h / x).ln_1p()).exp_m1()
        }
    } else if y <= 0.0 {
        odd_power_increment(-y, h, alpha)
    } else {
        (-x).powf(alpha) + y.powf(alpha)
    }
}

impl QsMap {
    pub fn new(spec: MapSpec) -> Result<Self> {
        QsMap::try_from(spec)
    }

    pub fn identity() -> Self {
        QsMap {
            spec: MapSpec::Identity,
        }
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        QsMap::new(MapSpec::Affine { a, b })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        QsMap::new(MapSpec::Power { alpha })
    }

    pub fn shifted_power(alpha: f64, shift: f64) -> Result<Self> {
        QsMap::new(MapSpec::ShiftedPower { alpha, shift })
    }

    /// Applies `maps` left to right.
    pub fn compose(maps: Vec<QsMap>) -> Result<Self> {
        QsMap::new(MapSpec::Composition {
            maps: maps.into_iter().map(|m| m.spec).collect(),
        })
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval(&self.spec, x)
    }

    /// `f(x + h) − f(x)` for `h ≥ 0`, computed without subtracting images.
    pub fn increment(&self, x: f64, h: f64) -> f64 {
        increment(&self.spec, x, h)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        inverse(&self.spec, y)
    }

    /// Exponent `θ ∈ (0, 1]` of the reference modulus `C·max(t^θ, t^{1/θ})`.
    pub fn theta(&self) -> f64 {
        theta(&self.spec)
    }
}

fn eval(spec: &MapSpec, x: f64) -> f64 {
    match spec {
        MapSpec::Identity => x,
        MapSpec::Affine { a, b } => a * x + b,
        MapSpec::Power { alpha } => odd_power(x, *alpha),
        MapSpec::ShiftedPower { alpha, shift } => {
            if x >= 0.0 {
                odd_power_increment(*shift, x, *alpha)
            } else {
                -odd_power_increment(shift + x, -x, *alpha)
            }
        }
        MapSpec::Composition { maps } => maps.iter().fold(x, |y, m| eval(m, y)),
    }
}

fn increment(spec: &MapSpec, x: f64, h: f64) -> f64 {
    match spec {
        MapSpec::Identity => h,
        MapSpec::Affine { a, .. } => a * h,
        MapSpec::Power { alpha } => odd_power_increment(x, h, *alpha),
        MapSpec::ShiftedPower { alpha, shift } => odd_power_increment(x + shift, h, *alpha),
        MapSpec::Composition { maps } => {
            let (mut y, mut dy) = (x, h);
            for m in maps {
                dy = increment(m, y, dy);
                y = eval(m, y);
            }
            dy
        }
    }
}

fn inverse(spec: &MapSpec, y: f64) -> f64 {
    match spec {
        MapSpec::Identity => y,
        MapSpec::Affine { a, b } => (y - b) / a,
        MapSpec::Power { alpha } => odd_power(y, 1.0 / alpha),
        MapSpec::ShiftedPower { alpha, shift } => {
            odd_power(y + shift.powf(*alpha), 1.0 / alpha) - shift
        }
        MapSpec::Composition { maps } => maps.iter().rev().fold(y, |x, m| inverse(m, x)),
    }
}

fn theta(spec: &MapSpec) -> f64 {
    match spec {
        MapSpec::Identity | MapSpec::Affine { .. } => 1.0,
        MapSpec::Power { alpha } | MapSpec::ShiftedPower { alpha, .. } => alpha.min(1.0 / alpha),
        MapSpec::Composition { maps } => maps.iter().map(theta).product(),
    }
}

/// One level of an image hierarchy.
#[derive(Clone, Debug, Default)]
pub struct ImageLevel {
    pub lefts: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Parent index in the previous level (empty for the root level).
    pub parents: Vec<usize>,
    /// Child index range in the next level (empty for the deepest level).
    pub children: Vec<Range<usize>>,
}

impl ImageLevel {
    pub fn len(&self) -> usize {
        self.lefts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lefts.is_empty()
    }

    pub fn right(&self, i: usize) -> f64 {
        self.lefts[i] + self.lengths[i]
    }
}

/// `f(H_m)` for every level, in f64.
#[derive(Clone, Debug)]
pub struct ImageHierarchy {
    map: QsMap,
    modulus: u64,
    markers: Vec<usize>,
    levels: Vec<ImageLevel>,
    /// `(min, max)` source branch length per level.
    source_lengths: Vec<(f64, f64)>,
}

impl ImageHierarchy {
    pub fn map(&self) -> &QsMap {
        &self.map
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn markers(&self) -> &[usize] {
        &self.markers
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn is_marker(&self, m: usize) -> bool {
        self.markers.binary_search(&m).is_ok()
    }

    pub fn level(&self, m: usize) -> &ImageLevel {
        &self.levels[m]
    }

    pub fn levels(&self) -> &[ImageLevel] {
        &self.levels
    }

    pub fn source_length_range(&self, m: usize) -> (f64, f64) {
        self.source_lengths[m]
    }
}

/// Pushes `H_0..=H_depth` through `map`. Endpoint order is preserved because
/// the map is increasing; image lengths are computed as increments.
pub fn push_hierarchy(map: &QsMap, h: &Hierarchy, depth: Option<usize>) -> ImageHierarchy {
    let depth = depth.map_or(h.depth(), |d| d.min(h.depth()));
    let mut levels: Vec<ImageLevel> = (0..=depth)
        .map(|m| {
            let geometry = h.geometry_f64(m);
            let (lefts, lengths) = geometry
                .par_iter()
                .map(|&(x, len)| (map.eval(x), map.increment(x, len)))
                .unzip();
            let parents = if m == 0 { Vec::new() } else { h.parents(m) };
            ImageLevel {
                lefts,
                lengths,
                parents,
                children: Vec::new(),
            }
        })
        .collect();
    for m in 0..depth {
        let mut children = vec![0..0; levels[m].len()];
        for (i, &p) in levels[m + 1].parents.iter().enumerate() {
            let r = &mut children[p];
            if r.end == 0 {
                *r = i..i + 1;
            } else {
                r.end = i + 1;
            }
        }
        levels[m].children = children;
    }
    let source_lengths = (0..=depth)
        .map(|m| {
            let (lo, hi) = h.length_range(m);
            (rational::to_f64(&lo), rational::to_f64(&hi))
        })
        .collect();
    ImageHierarchy {
        map: map.clone(),
        modulus: h.modulus(),
        markers: h
            .markers()
            .iter()
            .copied()
            .filter(|&mk| mk <= depth)
            .collect(),
        levels,
        source_lengths,
    }
}

/// Sampling setup for [`distortion_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub samples: usize,
    pub rho: Vec<f64>,
    /// Closed window `[a, b]` the sampled points lie in.
    pub window: (f64, f64),
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            samples: 100_000,
            rho: vec![2.0, 4.0],
            window: (0.0, 1.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionEnvelope {
    /// Upper exponent: `|f(I′)|/|f(I)| ≤ 4 t^p`.
    pub p: f64,
    /// Lower exponent: `β t^q ≤ |f(I′)|/|f(I)|`.
    pub q: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k_rho: BTreeMap<String, f64>,
    /// `(t, max observed |f(x)−f(a)|/|f(x)−f(b)|)` per log-spaced bin of
    /// `t = |x−a|/|x−b|`.
    pub eta_profile: Vec<[f64; 2]>,
    /// Smallest `C` with every sampled triple below `C·max(t^θ, t^{1/θ})`.
    pub eta_constant: f64,
    pub theta: f64,
    pub samples: usize,
    pub window: [f64; 2],
    /// Recorded `(t, s)` pairs for nested intervals.
    #[serde(skip)]
    pub pairs: Vec<(f64, f64)>,
}

impl DistortionEnvelope {
    /// True when every recorded pair satisfies `β t^q ≤ s ≤ 4 t^p` up to a
    /// relative `tol`.
    pub fn contains_all(&self, tol: f64) -> bool {
        self.pairs.iter().all(|&(t, s)| {
            let lo = self.beta * t.powf(self.q);
            let hi = 4.0 * t.powf(self.p);
            s >= lo * (1.0 - tol) && s <= hi * (1.0 + tol)
        })
    }
}

const SHARD: usize = 4096;
const MIN_T: f64 = 1e-6;
const ETA_T: f64 = 1e3;
const ETA_BINS: usize = 24;

struct Sample {
    t: f64,
    s: f64,
    k: Vec<f64>,
    eta_t: f64,
    eta: f64,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

/// Fraction in `[0, 1]` for placing a subinterval: exactly at either end
/// with probability 1/8 each, log-uniformly close to an end with
/// probability 1/4, otherwise uniform.
fn placement<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    if u < 0.125 {
        0.0
    } else if u < 0.25 {
        1.0
    } else if u < 0.5 {
        let v = log_uniform(rng, MIN_T, 1.0);
        if rng.random::<bool>() {
            v
        } else {
            1.0 - v
        }
    } else {
        rng.random()
    }
}

fn draw<R: Rng>(rng: &mut R, map: &QsMap, window: (f64, f64), rho: &[f64]) -> Sample {
    let (a, b) = window;
    let width = b - a;
    let len = log_uniform(rng, width * MIN_T, width);
    let left = a + placement(rng) * (width - len);
    let t = log_uniform(rng, MIN_T, 1.0);
    let inner_len = t * len;
    let inner_left = left + placement(rng) * (len - inner_len);
    let image = map.increment(left, len);
    let s = map.increment(inner_left, inner_len) / image;
    let centre = left + len / 2.0;
    let k = rho
        .iter()
        .map(|r| map.increment(centre - r * len / 2.0, r * len) / image)
        .collect();

    // Triple x, a, b with |x − b| = dist and |x − a| = eta_t · dist, both
    // inside the window.
    let (eta_t, eta) = loop {
        let dist = log_uniform(rng, width * MIN_T, width);
        let eta_t = log_uniform(rng, 1.0 / ETA_T, ETA_T);
        let near = eta_t * dist;
        let far = dist.max(near);
        if far > width {
            continue;
        }
        let x = a + placement(rng) * width;
        let side = |d: f64, up: bool| -> Option<f64> {
            let p = if up { x + d } else { x - d };
            (a..=b).contains(&p).then_some(p)
        };
        let up_a = rng.random::<bool>();
        let up_b = rng.random::<bool>();
        let pa = side(near, up_a).or_else(|| side(near, !up_a));
        let pb = side(dist, up_b).or_else(|| side(dist, !up_b));
        if let (Some(pa), Some(pb)) = (pa, pb) {
            let fx = |p: f64| {
                if p >= x {
                    map.increment(x, p - x)
                } else {
                    map.increment(p, x - p)
                }
            };
            break ((pa - x).abs() / (pb - x).abs(), fx(pa) / fx(pb));
        }
    };
    Sample {
        t,
        s,
        k,
        eta_t,
        eta,
    }
}

/// Upper convex hull of points sorted by x.
fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Fits `(β, q)` with `y ≤ −ln β + q x` for every `(x, y) = (−ln t, −ln s)`:
/// `q` is the slope of the upper hull at the midpoint of the sampled `x`
/// range (at least 1), `β` the largest value keeping all points below.
fn fit_lower(points: &mut [(f64, f64)]) -> (f64, f64) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let hull = upper_hull(points);
    let mid = (points[0].0 + points[points.len() - 1].0) / 2.0;
    let slope = hull
        .windows(2)
        .find(|w| w[1].0 >= mid && w[1].0 > w[0].0)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .unwrap_or(1.0);
    let q = slope.max(1.0);
    let b = points
        .iter()
        .map(|&(x, y)| y - q * x)
        .fold(f64::NEG_INFINITY, f64::max);
    (q, (-b).exp())
}

/// Samples nested interval pairs and point triples in `config.window` and
/// fits the distortion envelope. Samples are drawn in fixed-size shards,
/// each from its own ChaCha stream, so the result is deterministic for a
/// seed and a larger sample size extends a smaller one.
pub fn distortion_probe(map: &QsMap, config: &ProbeConfig) -> Result<DistortionEnvelope> {
    if config.samples < 1000 {
        return Err(Error::invalid(
            "samples",
            "distortion probe needs at least 1000 samples",
        ));
    }
    let (a, b) = config.window;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(
            "window",
            format!("degenerate window [{a}, {b}]"),
        ));
    }
    if let Some(r) = config.rho.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::invalid("rho", format!("ρ = {r} must be > 0")));
    }
    let shards = config.samples.div_ceil(SHARD);
    let samples: Vec<Sample> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let count = SHARD.min(config.samples - i * SHARD);
            (0..count)
                .map(|_| draw(&mut rng, map, config.window, &config.rho))
                .collect::<Vec<_>>()
        })
        .collect();

    let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.s)).collect();
    let p = pairs
        .iter()
        .filter(|(t, _)| *t < 1.0)
        .map(|&(t, s)| (4f64.ln() - s.ln()) / -t.ln())
        .fold(1.0, f64::min);
    let mut points: Vec<(f64, f64)> = pairs.iter().map(|&(t, s)| (-t.ln(), -s.ln())).collect();
    let (q, beta) = fit_lower(&mut points);

    let k_rho = config
        .rho
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let max = samples.iter().map(|s| s.k[j]).fold(0.0, f64::max);
            (r.to_string(), max)
        })
        .collect();

    let theta = map.theta();
    let span = 2.0 * ETA_T.ln();
    let mut bins = [0.0f64; ETA_BINS];
    let mut eta_constant = 0.0f64;
    for s in &samples {
        let pos = ((s.eta_t.ln() + ETA_T.ln()) / span * ETA_BINS as f64) as usize;
        let bin = &mut bins[pos.min(ETA_BINS - 1)];
        *bin = bin.max(s.eta);
        let reference = s.eta_t.powf(theta).max(s.eta_t.powf(1.0 / theta));
        eta_constant = eta_constant.max(s.eta / reference);
    }
    let eta_profile = bins
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, &m)| {
            let centre = ((i as f64 + 0.5) / ETA_BINS as f64 * span - ETA_T.ln()).exp();
            [centre, m]
        })
        .collect();

    Ok(DistortionEnvelope {
        p,
        q,
        beta,
        k_rho,
        eta_profile,
        eta_constant,
        theta,
        samples: config.samples,
        window: [a, b],
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_levels, star_system};
    use crate::hierarchy::build_hierarchy;
    use crate::params::{make_middle_thirds, ClosedInterval};
    use crate::rational::Rational;
    use num_traits::One;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(QsMap::identity().eval(0.7), 0.7);
        assert_eq!(QsMap::power(2.0).unwrap().eval(0.5), 0.25);
        let c = QsMap::compose(vec![
            QsMap::affine(2.0, 0.0).unwrap(),
            QsMap::power(2.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(QsMap::power(2.0).unwrap().eval(-0.5), -0.25);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(QsMap::power(0.0).is_err());
        assert!(QsMap::power(-1.0).is_err());
        assert!(QsMap::affine(0.0, 1.0).is_err());
        assert!(QsMap::shifted_power(2.0, -1.0).is_err());
        assert!(QsMap::compose(vec![]).is_err());
        let bad: std::result::Result<QsMap, _> =
            serde_json::from_str(r#"{"kind":"power","alpha":-2.0}"#);
        assert!(bad.is_err());
        let unknown: std::result::Result<QsMap, _> =
            serde_json::from_str(r#"{"kind":"power","alpha":2.0,"beta":1}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn config_round_trip() {
        let json = r#"{"kind":"composition","maps":[{"kind":"affine","a":2.0,"b":0.5},{"kind":"shifted_power","alpha":0.5,"shift":1.0}]}"#;
        let m: QsMap = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), json);
    }

    #[test]
    fn increments_and_inverses_agree_with_eval() {
        let maps = [
            QsMap::identity(),
            QsMap::affine(3.0, -1.0).unwrap(),
            QsMap::power(2.0).unwrap(),
            QsMap::power(0.5).unwrap(),
            QsMap::shifted_power(1.5, 0.25).unwrap(),
            QsMap::compose(vec![
                QsMap::power(2.0).unwrap(),
                QsMap::shifted_power(0.5, 1.0).unwrap(),
            ])
            .unwrap(),
        ];
        for m in &maps {
            for &x in &[-1.5, -0.3, 0.0, 0.2, 0.9, 2.0] {
                for &h in &[0.1, 0.7, 2.5] {
                    let direct = m.eval(x + h) - m.eval(x);
                    assert!(close(m.increment(x, h), direct, 1e-12), "{m:?} {x} {h}");
                    assert!(m.increment(x, h) > 0.0);
                }
                assert!(close(m.inverse(m.eval(x)), x, 1e-12), "{m:?} {x}");
            }
        }
    }

    #[test]
    fn shifted_power_fixes_origin_and_is_odd() {
        let m = QsMap::shifted_power(2.0, 1.0).unwrap();
        assert_eq!(m.eval(0.0), 0.0);
        assert!(close(m.eval(1.0), 3.0, 1e-15));
        assert!(close(m.eval(-0.5), -(1.0 - 0.25), 1e-15));
        assert!(m.eval(-2.0) < m.eval(-1.5));
    }

    #[test]
    fn increment_is_accurate_for_tiny_steps() {
        let m = QsMap::power(2.0).unwrap();
        let inc = m.increment(0.5, 1e-14);
        assert!(close(inc, 1e-14 + 1e-28, 1e-12));
    }

    fn hierarchy(depth: usize) -> Hierarchy {
        let spec = make_middle_thirds(depth, ClosedInterval::unit()).unwrap();
        let tree = build_levels(&spec).unwrap();
        let star = star_system(&spec, &tree).unwrap();
        build_hierarchy(&star, &Rational::one()).unwrap()
    }

    #[test]
    fn push_identity_keeps_lengths() {
        let h = hierarchy(4);
        let img = push_hierarchy(&QsMap::identity(), &h, None);
        assert_eq!(img.depth(), 3);
        for m in 0..=img.depth() {
            let src = h.geometry_f64(m);
            let lvl = img.level(m);
            for (i, (x, l)) in src.iter().enumerate() {
                assert_eq!(lvl.lefts[i], *x);
                assert_eq!(lvl.lengths[i], *l);
            }
        }
        assert_eq!(img.level(0).children[0], 0..2);
    }

    #[test]
    fn push_power_two_squares_endpoints() {
        let h = hierarchy(3);
        let img = push_hierarchy(&QsMap::power(2.0).unwrap(), &h, None);
        let lvl = img.level(1);
        assert!(close(lvl.lefts[1], 4.0 / 9.0, 1e-15));
        assert!(close(lvl.lengths[1], 5.0 / 9.0, 1e-15));
        let lvl2 = img.level(2);
        for i in 1..lvl2.len() {
            assert!(lvl2.right(i - 1) <= lvl2.lefts[i]);
        }
    }

    #[test]
    fn identity_envelope_is_exact() {
        let cfg = ProbeConfig {
            samples: 5000,
            rho: vec![2.0, 3.0],
            window: (0.0, 1.0),
            seed: 7,
        };
        let env = distortion_probe(&QsMap::identity(), &cfg).unwrap();
        assert_eq!(env.p, 1.0);
        assert!(close(env.q, 1.0, 1e-9));
        assert!(close(env.beta, 1.0, 1e-9));
        assert!(close(env.k_rho["2"], 2.0, 1e-12));
        assert!(close(env.k_rho["3"], 3.0, 1e-12));
        assert!(env.contains_all(1e-12));
        assert!(close(env.eta_constant, 1.0, 1e-9));
    }

    #[test]
    fn power_two_needs_q_at_least_two_near_zero() {
        let cfg = ProbeConfig {
            samples: 20_000,
            rho: vec![2.0],
            window: (0.0, 1.0),
            seed: 1,
        };
        let env = distortion_probe(&QsMap::power(2.0).unwrap(), &cfg).unwrap();
        assert!(env.q >= 2.0 - 1e-9, "q = {}", env.q);
        assert!(env.p > 0.0 && env.p <= 1.0);
        assert!(env.contains_all(1e-12));
    }

    #[test]
    fn probe_is_deterministic_and_nested() {
        let m = QsMap::power(0.5).unwrap();
        let small = ProbeConfig {
            samples: 5000,
            rho: vec![2.0],
            window: (0.1, 2.0),
            seed: 3,
        };
        let a = distortion_probe(&m, &small).unwrap();
        let b = distortion_probe(&m, &small).unwrap();
        assert_eq!(a.pairs, b.pairs);
        let big = distortion_probe(
            &m,
            &ProbeConfig {
                samples: 10_000,
                ..small.clone()
            },
        )
        .unwrap();
        assert_eq!(&big.pairs[..5000], &a.pairs[..]);
    }

    #[test]
    fn probe_rejects_bad_input() {
        let m = QsMap::identity();
        let cfg = ProbeConfig::default();
        assert!(distortion_probe(
            &m,
            &ProbeConfig {
                samples: 10,
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(distortion_probe(
            &m,
            &ProbeConfig {
                window: (1.0, 1.0),
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(distortion_probe(
            &m,
            &ProbeConfig {
                rho: vec![0.0],
                ..cfg
            }
        )
        .is_err());
    }
}
