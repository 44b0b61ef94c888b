//! Parameter data of homogeneous perfect sets: definition, validation and
//! the standard generators.
//!
//! A spec is a finite truncation: `levels[k - 1]` describes level `k` for
//! `k = 1..=K`. Gap lengths are absolute and position independent within a
//! level; the initial interval is never normalised here.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, int, Rational};

/// A closed interval with exact endpoints, serialised as `["p/q", "p/q"]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedInterval {
    pub left: Rational,
    pub right: Rational,
}

impl ClosedInterval {
    pub fn new(left: Rational, right: Rational) -> Self {
        ClosedInterval { left, right }
    }

    pub fn unit() -> Self {
        ClosedInterval::new(Rational::zero(), Rational::one())
    }

    pub fn length(&self) -> Rational {
        &self.right - &self.left
    }

    pub fn contains(&self, other: &ClosedInterval) -> bool {
        self.left <= other.left && other.right <= self.right
    }
}

impl Serialize for ClosedInterval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [rational::format(&self.left), rational::format(&self.right)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClosedInterval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [l, r] = <[String; 2]>::deserialize(d)?;
        let left = rational::parse(&l).map_err(serde::de::Error::custom)?;
        let right = rational::parse(&r).map_err(serde::de::Error::custom)?;
        Ok(ClosedInterval { left, right })
    }
}

/// One level of the construction: `n` children of relative length `c`,
/// separated by the `n + 1` absolute gaps `gaps[0..=n]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub n: u64,
    #[serde(with = "rational::serde_str")]
    pub c: Rational,
    #[serde(with = "rational::serde_vec")]
    pub gaps: Vec<Rational>,
}

impl LevelSpec {
    pub fn interior_gaps(&self) -> &[Rational] {
        if self.gaps.len() < 2 {
            return &[];
        }
        &self.gaps[1..self.gaps.len() - 1]
    }

    pub fn left_gap(&self) -> &Rational {
        &self.gaps[0]
    }

    pub fn right_gap(&self) -> &Rational {
        &self.gaps[self.gaps.len() - 1]
    }

    pub fn end_gaps(&self) -> Rational {
        self.left_gap() + self.right_gap()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpsSpec {
    pub initial_interval: ClosedInterval,
    pub levels: Vec<LevelSpec>,
}

impl HpsSpec {
    /// Truncation depth `K`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `k` (1-based).
    pub fn level(&self, k: usize) -> &LevelSpec {
        &self.levels[k - 1]
    }

    pub fn initial_length(&self) -> Rational {
        self.initial_interval.length()
    }

    /// `c_1 ⋯ c_k` for `k = 0..=K`.
    pub fn ratio_products(&self) -> Vec<Rational> {
        let mut out = Vec::with_capacity(self.levels.len() + 1);
        let mut acc = Rational::one();
        out.push(acc.clone());
        for lvl in &self.levels {
            acc = rational::mul(&acc, &lvl.c);
            out.push(acc.clone());
        }
        out
    }

    /// Basic interval length `|I₀| c_1 ⋯ c_k` for `k = 0..=K`.
    pub fn basic_lengths(&self) -> Vec<Rational> {
        let len0 = self.initial_length();
        self.ratio_products()
            .into_iter()
            .map(|p| rational::mul(&p, &len0))
            .collect()
    }

    /// The spec truncated to its first `depth` levels.
    pub fn truncated(&self, depth: usize) -> Result<HpsSpec> {
        if depth == 0 || depth > self.depth() {
            return Err(Error::invalid(
                "depth",
                format!("cannot truncate a depth-{} spec to {depth}", self.depth()),
            ));
        }
        Ok(HpsSpec {
            initial_interval: self.initial_interval.clone(),
            levels: self.levels[..depth].to_vec(),
        })
    }

    /// Number of level-`k` basic intervals `n_1 ⋯ n_k`, saturating.
    pub fn count_at(&self, k: usize) -> u128 {
        self.levels[..k]
            .iter()
            .fold(1u128, |acc, l| acc.saturating_mul(l.n as u128))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyDepth,
    DegenerateInitialInterval,
    BranchCount,
    RatioRange,
    NcGeOne,
    GapCount,
    NegativeGap,
    GapSumIdentity,
    MixedInteriorGaps,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::EmptyDepth => "empty_depth",
            Rule::DegenerateInitialInterval => "degenerate_initial_interval",
            Rule::BranchCount => "branch_count",
            Rule::RatioRange => "ratio_range",
            Rule::NcGeOne => "n_c_ge_one",
            Rule::GapCount => "gap_count",
            Rule::NegativeGap => "negative_gap",
            Rule::GapSumIdentity => "gap_sum_identity",
            Rule::MixedInteriorGaps => "mixed_interior_gaps",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Rule::EmptyDepth => "depth K must be at least 1",
            Rule::DegenerateInitialInterval => "initial interval must have positive length",
            Rule::BranchCount => "n < 2",
            Rule::RatioRange => "c outside (0, 1)",
            Rule::NcGeOne => "n·c ≥ 1",
            Rule::GapCount => "gap list must have n + 1 entries",
            Rule::NegativeGap => "negative gap",
            Rule::GapSumIdentity => "gap-sum identity",
            Rule::MixedInteriorGaps => "interior gaps mix zero and positive values",
        };
        f.write_str(text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based level, or `None` for spec-wide rules.
    pub level: Option<usize>,
    pub rule: Rule,
    pub detail: String,
    /// Offending quantities as exact `"p/q"` strings.
    pub quantities: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidSpec {
                count: self.violations.len(),
                first: format!(
                    "{} at level {}: {}",
                    v.rule.id(),
                    v.level.map_or("-".to_string(), |l| l.to_string()),
                    v.detail
                ),
            }),
        }
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(
        &mut self,
        level: Option<usize>,
        rule: Rule,
        detail: impl Into<String>,
        quantities: &[(&str, &Rational)],
    ) {
        self.0.push(Violation {
            level,
            rule,
            detail: detail.into(),
            quantities: quantities
                .iter()
                .map(|(k, v)| (k.to_string(), rational::format(v)))
                .collect(),
        });
    }
}

/// Lists every violated invariant of the spec, with exact residuals.
pub fn validate_spec(spec: &HpsSpec) -> ValidationReport {
    let mut out = Collector(Vec::new());
    if spec.levels.is_empty() {
        out.push(None, Rule::EmptyDepth, "spec has no levels", &[]);
    }
    let len0 = spec.initial_length();
    if !len0.is_positive() {
        out.push(
            None,
            Rule::DegenerateInitialInterval,
            "right endpoint must exceed left endpoint",
            &[("length", &len0)],
        );
    }

    // |I₀| c_1 ⋯ c_{k-1}: the parent length at level k.
    let mut parent_len = len0;
    for (idx, lvl) in spec.levels.iter().enumerate() {
        let k = idx + 1;
        let n = int(lvl.n as i64);
        if lvl.n < 2 {
            out.push(
                Some(k),
                Rule::BranchCount,
                format!("n = {}", lvl.n),
                &[("n", &n)],
            );
        }
        if !lvl.c.is_positive() || lvl.c >= Rational::one() {
            out.push(
                Some(k),
                Rule::RatioRange,
                "c must lie in (0, 1)",
                &[("c", &lvl.c)],
            );
        }
        let nc = &n * &lvl.c;
        if nc >= Rational::one() {
            out.push(Some(k), Rule::NcGeOne, "n·c ≥ 1", &[("n_c", &nc)]);
        }
        if lvl.gaps.len() as u64 != lvl.n + 1 {
            out.push(
                Some(k),
                Rule::GapCount,
                format!("{} gaps for n = {}", lvl.gaps.len(), lvl.n),
                &[],
            );
        } else {
            for (l, g) in lvl.gaps.iter().enumerate() {
                if g.is_negative() {
                    out.push(
                        Some(k),
                        Rule::NegativeGap,
                        format!("gap {l} < 0"),
                        &[("gap", g)],
                    );
                }
            }
            let actual = rational::sum(&lvl.gaps);
            let expected = &parent_len * (Rational::one() - &nc);
            if actual != expected {
                let residual = &actual - &expected;
                out.push(
                    Some(k),
                    Rule::GapSumIdentity,
                    format!("gap sum exceeds target by {}", rational::format(&residual)),
                    &[
                        ("actual", &actual),
                        ("expected", &expected),
                        ("residual", &residual),
                    ],
                );
            }
            let interior = lvl.interior_gaps();
            let zeros = interior.iter().filter(|g| g.is_zero()).count();
            if zeros > 0 && zeros < interior.len() {
                out.push(
                    Some(k),
                    Rule::MixedInteriorGaps,
                    format!("{zeros} of {} interior gaps are zero", interior.len()),
                    &[],
                );
            }
        }
        parent_len *= &lvl.c;
    }
    ValidationReport {
        ok: out.0.is_empty(),
        violations: out.0,
    }
}

/// χ = max(1, max over levels of max interior gap / min interior gap).
pub fn derive_chi(spec: &HpsSpec) -> Result<Rational> {
    let mut chi = Rational::one();
    for (idx, lvl) in spec.levels.iter().enumerate() {
        let interior = lvl.interior_gaps();
        let Some(lo) = interior.iter().min() else {
            continue;
        };
        let hi = interior.iter().max().expect("nonempty");
        if hi.is_zero() {
            continue;
        }
        if lo.is_zero() {
            return Err(Error::ChiUndefined { level: idx + 1 });
        }
        let r = hi / lo;
        if r > chi {
            chi = r;
        }
    }
    Ok(chi)
}

fn check_uniform_level(n: u64, c: &Rational) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("n", format!("n = {n} < 2")));
    }
    if !c.is_positive() {
        return Err(Error::invalid(
            "c",
            format!("c = {} must be positive", rational::format(c)),
        ));
    }
    if int(n as i64) * c >= Rational::one() {
        return Err(Error::invalid(
            "c",
            format!("n·c ≥ 1 for n = {n}, c = {}", rational::format(c)),
        ));
    }
    Ok(())
}

/// Uniform Cantor spec: zero end gaps, equal interior gaps.
///
/// `n_seq` and `c_seq` repeat periodically when shorter than `depth`.
pub fn make_uniform_cantor(
    n_seq: &[u64],
    c_seq: &[Rational],
    depth: usize,
    initial_interval: ClosedInterval,
) -> Result<HpsSpec> {
    if depth == 0 {
        return Err(Error::invalid("depth", "depth must be at least 1"));
    }
    if n_seq.is_empty() || c_seq.is_empty() {
        return Err(Error::invalid(
            "n/c",
            "branch and ratio sequences must be nonempty",
        ));
    }
    if !initial_interval.length().is_positive() {
        return Err(Error::invalid(
            "initial_interval",
            "length must be positive",
        ));
    }
    let mut parent_len = initial_interval.length();
    let mut levels = Vec::with_capacity(depth);
    for k in 0..depth {
        let n = n_seq[k % n_seq.len()];
        let c = c_seq[k % c_seq.len()].clone();
        check_uniform_level(n, &c)?;
        let share = (Rational::one() - int(n as i64) * &c) / int(n as i64 - 1);
        let interior = rational::mul(&parent_len, &share);
        let mut gaps = vec![interior; n as usize + 1];
        gaps[0] = Rational::zero();
        gaps[n as usize] = Rational::zero();
        parent_len = rational::mul(&parent_len, &c);
        levels.push(LevelSpec { n, c, gaps });
    }
    Ok(HpsSpec {
        initial_interval,
        levels,
    })
}

pub fn make_middle_thirds(depth: usize, initial_interval: ClosedInterval) -> Result<HpsSpec> {
    make_uniform_cantor(&[2], &[rational::ratio(1, 3)], depth, initial_interval)
}

/// Two children per level with `c_k = (1 − (k+1)^{-2}) / 2`; the product of
/// `2 c_k` converges, so the dimension formula tends to 1.
pub fn make_near_full(depth: usize, initial_interval: ClosedInterval) -> Result<HpsSpec> {
    let c: Vec<Rational> = (1..=depth as i64)
        .map(|k| rational::ratio(k * (k + 2), 2 * (k + 1) * (k + 1)))
        .collect();
    if c.is_empty() {
        return Err(Error::invalid("depth", "depth must be at least 1"));
    }
    make_uniform_cantor(&[2], &c, depth, initial_interval)
}

/// Size limits for [`random_spec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomSpecBounds {
    pub max_depth: usize,
    pub max_branches: u64,
    /// Cap on `n_1 ⋯ n_K` so the deepest level can be materialised.
    pub max_leaves: u64,
    /// Upper bound on the interior gap ratio at every level.
    pub max_chi: u64,
}

impl Default for RandomSpecBounds {
    fn default() -> Self {
        RandomSpecBounds {
            max_depth: 6,
            max_branches: 500,
            max_leaves: 8192,
            max_chi: 3,
        }
    }
}

/// A random valid spec of depth in `[2, max_depth]`: rational ratios with
/// `n·c < 1`, interior gaps within a factor `max_chi` of each other (or all
/// zero), and random end gaps, all satisfying the gap-sum identity exactly.
pub fn random_spec<R: rand::Rng>(rng: &mut R, bounds: RandomSpecBounds) -> HpsSpec {
    let depth = rng.random_range(2..=bounds.max_depth.max(2));
    let left = rational::ratio(rng.random_range(-8..=8), rng.random_range(1..=8));
    let width = rational::ratio(rng.random_range(1..=16), rng.random_range(1..=8));
    let initial_interval = ClosedInterval::new(left.clone(), left + width.clone());
    let mut parent_len = width;
    let mut leaves = 1u64;
    let mut levels = Vec::with_capacity(depth);
    for k in 1..=depth {
        let reserve = 1u64 << (depth - k);
        let cap = (bounds.max_leaves / (leaves * reserve))
            .min(bounds.max_branches)
            .max(2);
        let n = rng.random_range(2..=cap);
        leaves *= n;
        let b = rng.random_range(2..=40i64);
        let c = rational::ratio(rng.random_range(1..b), b * n as i64);
        let total = rational::mul(&parent_len, &(Rational::one() - int(n as i64) * &c));

        let interior_share = match rng.random_range(0..10) {
            0 => Rational::zero(),
            1..=3 => Rational::one(),
            _ => rational::ratio(rng.random_range(1..8), 8),
        };
        let weights: Vec<i64> = if bounds.max_chi <= 1 || rng.random_bool(0.3) {
            vec![1; n as usize - 1]
        } else {
            (1..n)
                .map(|_| rng.random_range(1..=bounds.max_chi as i64))
                .collect()
        };
        let weight_sum: i64 = weights.iter().sum();
        let interior_total = rational::mul(&total, &interior_share);
        let ends = &total - &interior_total;
        let left_share = rational::ratio(rng.random_range(0..=4), 4);
        let left_gap = rational::mul(&ends, &left_share);
        let right_gap = &ends - &left_gap;

        let mut gaps = Vec::with_capacity(n as usize + 1);
        gaps.push(left_gap);
        gaps.extend(
            weights
                .iter()
                .map(|&w| rational::mul(&interior_total, &rational::ratio(w, weight_sum))),
        );
        gaps.push(right_gap);
        parent_len = rational::mul(&parent_len, &c);
        levels.push(LevelSpec { n, c, gaps });
    }
    HpsSpec {
        initial_interval,
        levels,
    }
}

/// Generator block of the JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub params: GeneratorParams,
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    UniformCantor,
    NearFull,
    MiddleThirds,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [
        GeneratorKind::MiddleThirds,
        GeneratorKind::NearFull,
        GeneratorKind::UniformCantor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::UniformCantor => "uniform_cantor",
            GeneratorKind::NearFull => "near_full",
            GeneratorKind::MiddleThirds => "middle_thirds",
        }
    }

    pub fn doc(self) -> &'static str {
        match self {
            GeneratorKind::UniformCantor => {
                "params {n: int | [int], c: \"p/q\" | [\"p/q\"], initial_interval?}; sequences repeat periodically"
            }
            GeneratorKind::NearFull => {
                "params {initial_interval?}; n_k = 2, c_k = (1 - (k+1)^-2)/2, dimension formula tends to 1"
            }
            GeneratorKind::MiddleThirds => "params {initial_interval?}; n_k = 2, c_k = 1/3",
        }
    }
}

/// Either a scalar or a list in the generator params.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<OneOrMany<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<OneOrMany<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_interval: Option<ClosedInterval>,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<HpsSpec> {
        self.generate_to(self.depth)
    }

    /// Same generator at another depth (used to extend the dimension formula).
    pub fn generate_to(&self, depth: usize) -> Result<HpsSpec> {
        let init = self
            .params
            .initial_interval
            .clone()
            .unwrap_or_else(ClosedInterval::unit);
        match self.kind {
            GeneratorKind::MiddleThirds => make_middle_thirds(depth, init),
            GeneratorKind::NearFull => make_near_full(depth, init),
            GeneratorKind::UniformCantor => {
                let n = self
                    .params
                    .n
                    .as_ref()
                    .ok_or_else(|| Error::invalid("params.n", "uniform_cantor needs n"))?
                    .to_vec();
                let c = self
                    .params
                    .c
                    .as_ref()
                    .ok_or_else(|| Error::invalid("params.c", "uniform_cantor needs c"))?
                    .to_vec()
                    .iter()
                    .map(|s| rational::parse(s))
                    .collect::<Result<Vec<_>>>()?;
                make_uniform_cantor(&n, &c, depth, init)
            }
        }
    }
}
