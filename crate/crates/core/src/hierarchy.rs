//! The branch hierarchy `{H_m}` interpolating between consecutive star
//! levels.
//!
//! Star level `k` sits at marker `m_k = i_1 + ⋯ + i_k`, where `i_k` is the
//! base-`M` exponent of `n_k`. Between markers, the `n_k` star children of
//! each star parent are regrouped `M` at a time by quotient–remainder
//! splitting (larger groups first); a branch is the convex hull of a
//! contiguous run of star children.
//!
//! Every star parent at level `k − 1` is split the same way, so the
//! hierarchy stores one local layout per star level and materialises global
//! branch lists on demand. Lengths, ratios and level totals are computed from
//! the local layout in exact arithmetic.

use std::collections::HashMap;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::checks::{Check, CheckList};
use crate::construction::StarSystem;
use crate::error::{Error, Result};
use crate::rational::{self, int, Rational};

/// `M = ⌊2χ⌋ + 1`.
pub fn branching_constant(chi: &Rational) -> Result<u64> {
    if *chi < Rational::one() {
        return Err(Error::invalid(
            "chi",
            format!("χ = {} < 1", rational::format(chi)),
        ));
    }
    let twice = chi * int(2);
    let m = rational::floor_int(&twice) + 1;
    u64::try_from(m).map_err(|_| Error::invalid("chi", "χ too large"))
}

/// `i = 1` when `n < M`, else the unique `i` with `M^i ≤ n < M^{i+1}`.
pub fn level_exponent(n: u64, modulus: u64) -> Result<u32> {
    if n < 2 {
        return Err(Error::invalid("n", format!("n = {n} < 2")));
    }
    if modulus < 3 {
        return Err(Error::invalid("M", format!("M = {modulus} < 3")));
    }
    if n < modulus {
        return Ok(1);
    }
    let mut i = 0u32;
    let mut power = 1u64;
    while let Some(next) = power.checked_mul(modulus) {
        if next > n {
            break;
        }
        power = next;
        i += 1;
    }
    Ok(i)
}

/// Splits a block of `size` into `M` groups: `size mod M` groups of
/// `⌊size/M⌋ + 1` followed by the rest of size `⌊size/M⌋`.
pub fn split_once(size: u64, modulus: u64) -> Vec<u64> {
    let q = size / modulus;
    let r = size % modulus;
    (0..modulus)
        .map(|i| if i < r { q + 1 } else { q })
        .collect()
}

/// Nested group sizes produced by repeated splitting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupTree {
    pub size: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<GroupTree>,
}

impl GroupTree {
    fn build(size: u64, modulus: u64, depth: u32) -> GroupTree {
        let children = if depth == 0 {
            Vec::new()
        } else {
            split_once(size, modulus)
                .into_iter()
                .map(|s| GroupTree::build(s, modulus, depth - 1))
                .collect()
        };
        GroupTree { size, children }
    }

    pub fn child_sizes(&self) -> Vec<u64> {
        self.children.iter().map(|c| c.size).collect()
    }

    /// Leaf sizes, left to right.
    pub fn leaves(&self) -> Vec<u64> {
        if self.children.is_empty() {
            return vec![self.size];
        }
        self.children.iter().flat_map(|c| c.leaves()).collect()
    }
}

fn check_split_depth(n: u64, modulus: u64, depth: u32) -> Result<()> {
    let exponent = level_exponent(n, modulus)?;
    if depth + 1 != exponent {
        return Err(Error::DepthMismatch {
            n,
            modulus,
            exponent,
            given: depth,
        });
    }
    Ok(())
}

/// Recursive quotient–remainder split of `n` star children into nested
/// groups, `depth = level_exponent(n, M) − 1` levels deep.
pub fn split_block(n: u64, modulus: u64, depth: u32) -> Result<GroupTree> {
    check_split_depth(n, modulus, depth)?;
    Ok(GroupTree::build(n, modulus, depth))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LeafSummary {
    pub count: u64,
    pub total: u64,
    pub min: u64,
    pub max: u64,
}

/// Leaf statistics of `split_block(n, M, depth)` without materialising the
/// tree. Subtrees depend only on `(size, remaining depth)`, so the recursion
/// is memoised on that pair.
pub fn split_summary(n: u64, modulus: u64, depth: u32) -> Result<LeafSummary> {
    check_split_depth(n, modulus, depth)?;
    fn go(
        size: u64,
        modulus: u64,
        depth: u32,
        memo: &mut HashMap<(u64, u32), LeafSummary>,
    ) -> LeafSummary {
        if depth == 0 {
            return LeafSummary {
                count: 1,
                total: size,
                min: size,
                max: size,
            };
        }
        if let Some(s) = memo.get(&(size, depth)) {
            return *s;
        }
        let mut acc: Option<LeafSummary> = None;
        for s in split_once(size, modulus) {
            let c = go(s, modulus, depth - 1, memo);
            acc = Some(match acc {
                None => c,
                Some(a) => LeafSummary {
                    count: a.count + c.count,
                    total: a.total + c.total,
                    min: a.min.min(c.min),
                    max: a.max.max(c.max),
                },
            });
        }
        let out = acc.expect("M ≥ 3 groups");
        memo.insert((size, depth), out);
        out
    }
    Ok(go(n, modulus, depth, &mut HashMap::new()))
}

/// A contiguous run of local star-child indices (0-based, inclusive).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LocalGroup {
    first: usize,
    last: usize,
    /// Index of the enclosing group in the previous layer (0 = the star parent).
    parent: usize,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    exponent: u32,
    /// `layers[t − 1]` is layer `t` for `t = 1..=i_k`; the last layer holds
    /// the star children themselves.
    layers: Vec<Vec<LocalGroup>>,
    /// Exact branch lengths per layer.
    lengths: Vec<Vec<Rational>>,
}

impl BlockLayout {
    fn new(star: &StarSystem, k: usize, modulus: u64) -> Result<BlockLayout> {
        let n = star.n(k);
        let exponent = level_exponent(n, modulus)?;
        let mut layers = Vec::with_capacity(exponent as usize);
        let mut current = vec![LocalGroup {
            first: 0,
            last: n as usize - 1,
            parent: 0,
        }];
        for _ in 1..exponent {
            let mut next = Vec::with_capacity(current.len() * modulus as usize);
            for (pi, g) in current.iter().enumerate() {
                let mut start = g.first;
                for s in split_once((g.last - g.first + 1) as u64, modulus) {
                    let s = s as usize;
                    next.push(LocalGroup {
                        first: start,
                        last: start + s - 1,
                        parent: pi,
                    });
                    start += s;
                }
            }
            layers.push(next.clone());
            current = next;
        }
        let singles = current
            .iter()
            .enumerate()
            .flat_map(|(pi, g)| {
                (g.first..=g.last).map(move |j| LocalGroup {
                    first: j,
                    last: j,
                    parent: pi,
                })
            })
            .collect();
        layers.push(singles);

        let delta = star.delta(k);
        let lengths = layers
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|g| star.child_offset(k, g.last) - star.child_offset(k, g.first) + delta)
                    .collect()
            })
            .collect();
        Ok(BlockLayout {
            exponent,
            layers,
            lengths,
        })
    }
}

/// Position of a hierarchy level relative to the markers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LevelRef {
    /// Star level being refined: `m_{k−1} < m ≤ m_k` (0 for the root).
    pub k: usize,
    /// `m − m_{k−1}`; equals `i_k` on the marker level.
    pub t: u32,
}

/// A branch of `H_m` with exact endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    pub level: usize,
    pub index: usize,
    pub left: Rational,
    pub right: Rational,
    pub parent: Option<usize>,
    pub span: StarRun,
}

impl Branch {
    pub fn length(&self) -> Rational {
        &self.right - &self.left
    }
}

/// The run `[first..=last]` of flat star-interval indices at `star_level`
/// whose convex hull is the branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StarRun {
    pub star_level: usize,
    pub first: usize,
    pub last: usize,
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    modulus: u64,
    chi: Rational,
    markers: Vec<usize>,
    blocks: Vec<BlockLayout>,
    star: StarSystem,
}

#[derive(Clone, Debug, Serialize)]
pub struct HierarchySummary {
    pub modulus: u64,
    #[serde(with = "rational::serde_str")]
    pub chi: Rational,
    pub exponents: Vec<u32>,
    pub markers: Vec<usize>,
    pub level_sizes: Vec<String>,
}

/// Builds `{H_m}` up to the deepest star level. `chi` must bound the
/// interior star gap ratio at every level (any χ at least the one derived
/// from the spec does). Aborts with a witness if level lengths are not
/// `2χ`-comparable.
pub fn build_hierarchy(star: &StarSystem, chi: &Rational) -> Result<Hierarchy> {
    if star.depth() < 1 {
        return Err(Error::StarTooShallow {
            depth: star.depth() + 1,
        });
    }
    let modulus = branching_constant(chi)?;
    for k in 1..=star.depth() {
        if *star.alpha_max(k) > chi * star.alpha_min(k) {
            return Err(Error::invalid(
                "chi",
                format!(
                    "χ = {} is below the interior star gap ratio at level {k}",
                    rational::format(chi)
                ),
            ));
        }
    }
    let blocks = (1..=star.depth())
        .map(|k| BlockLayout::new(star, k, modulus))
        .collect::<Result<Vec<_>>>()?;
    let mut markers = vec![0usize];
    for b in &blocks {
        markers.push(markers.last().unwrap() + b.exponent as usize);
    }
    let h = Hierarchy {
        modulus,
        chi: chi.clone(),
        markers,
        blocks,
        star: star.clone(),
    };
    let two_chi = chi * int(2);
    for m in 0..=h.depth() {
        let (lo, hi) = h.length_range(m);
        if hi > &two_chi * &lo {
            return Err(Error::PropertyViolated {
                property: "level length comparability",
                witness: format!(
                    "level {m}: max {} > 2χ · min {}",
                    rational::format(&hi),
                    rational::format(&lo)
                ),
            });
        }
    }
    Ok(h)
}

impl Hierarchy {
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn chi(&self) -> &Rational {
        &self.chi
    }

    pub fn star(&self) -> &StarSystem {
        &self.star
    }

    /// Deepest level index `m_{K'}`.
    pub fn depth(&self) -> usize {
        *self.markers.last().unwrap()
    }

    /// `m_k` for `k = 0..=K'`.
    pub fn markers(&self) -> &[usize] {
        &self.markers
    }

    /// `i_k` for `k = 1..=K'`.
    pub fn exponents(&self) -> Vec<u32> {
        self.blocks.iter().map(|b| b.exponent).collect()
    }

    pub fn is_marker(&self, m: usize) -> bool {
        self.markers.binary_search(&m).is_ok()
    }

    pub fn locate(&self, m: usize) -> LevelRef {
        assert!(
            m <= self.depth(),
            "level {m} beyond hierarchy depth {}",
            self.depth()
        );
        if m == 0 {
            return LevelRef { k: 0, t: 0 };
        }
        let k = self.markers.partition_point(|&mk| mk < m);
        LevelRef {
            k,
            t: (m - self.markers[k - 1]) as u32,
        }
    }

    /// Branches per star parent at `(k, t)`.
    fn width(&self, at: LevelRef) -> usize {
        if at.k == 0 {
            1
        } else {
            self.blocks[at.k - 1].layers[at.t as usize - 1].len()
        }
    }

    /// Number of branches of `H_m` (saturating).
    pub fn level_size(&self, m: usize) -> u128 {
        let at = self.locate(m);
        if at.k == 0 {
            return 1;
        }
        self.star
            .count(at.k - 1)
            .saturating_mul(self.width(at) as u128)
    }

    /// Distinct branch lengths of `H_m`, one per local group.
    pub fn local_lengths(&self, m: usize) -> Vec<Rational> {
        let at = self.locate(m);
        if at.k == 0 {
            return vec![self.star.delta(0).clone()];
        }
        self.blocks[at.k - 1].lengths[at.t as usize - 1].clone()
    }

    /// `(min, max)` branch length of `H_m`.
    pub fn length_range(&self, m: usize) -> (Rational, Rational) {
        let lens = self.local_lengths(m);
        let lo = lens.iter().min().unwrap().clone();
        let hi = lens.iter().max().unwrap().clone();
        (lo, hi)
    }

    /// Total length `l(H_m)`.
    pub fn level_length(&self, m: usize) -> Rational {
        let at = self.locate(m);
        if at.k == 0 {
            return self.star.delta(0).clone();
        }
        self.star.count_rational(at.k - 1) * rational::sum(&self.local_lengths(m))
    }

    /// Parent index (in `H_{m−1}`) of every branch of `H_m`, `m ≥ 1`.
    pub fn parents(&self, m: usize) -> Vec<usize> {
        let at = self.locate(m);
        assert!(at.k > 0, "root has no parents");
        let layout = &self.blocks[at.k - 1];
        let layer = &layout.layers[at.t as usize - 1];
        let parent_width = if at.t == 1 {
            1
        } else {
            layout.layers[at.t as usize - 2].len()
        };
        let blocks = self.star.level_size(at.k - 1);
        let mut out = Vec::with_capacity(blocks * layer.len());
        for sigma in 0..blocks {
            out.extend(layer.iter().map(|g| sigma * parent_width + g.parent));
        }
        out
    }

    /// Materialises `H_m` with exact endpoints.
    pub fn branches(&self, m: usize) -> Vec<Branch> {
        let at = self.locate(m);
        if at.k == 0 {
            return vec![Branch {
                level: 0,
                index: 0,
                left: self.star.initial.left.clone(),
                right: self.star.initial.right.clone(),
                parent: None,
                span: StarRun {
                    star_level: 0,
                    first: 0,
                    last: 0,
                },
            }];
        }
        let k = at.k;
        let layout = &self.blocks[k - 1];
        let layer = &layout.layers[at.t as usize - 1];
        let parents = self.parents(m);
        let n = self.star.n(k) as usize;
        let delta = self.star.delta(k);
        let mut out = Vec::with_capacity(parents.len());
        for (sigma, base) in self.star.lefts(k - 1).iter().enumerate() {
            for g in layer {
                let index = out.len();
                let left = base + self.star.child_offset(k, g.first);
                let right = base + self.star.child_offset(k, g.last) + delta;
                out.push(Branch {
                    level: m,
                    index,
                    left,
                    right,
                    parent: Some(parents[index]),
                    span: StarRun {
                        star_level: k,
                        first: sigma * n + g.first,
                        last: sigma * n + g.last,
                    },
                });
            }
        }
        out
    }

    /// `(left, length)` of every branch of `H_m` in f64. Lengths come from the
    /// exact local lengths, so they carry no cancellation error.
    pub fn geometry_f64(&self, m: usize) -> Vec<(f64, f64)> {
        let at = self.locate(m);
        if at.k == 0 {
            return vec![(
                rational::to_f64(&self.star.initial.left),
                rational::to_f64(self.star.delta(0)),
            )];
        }
        let k = at.k;
        let layer = &self.blocks[k - 1].layers[at.t as usize - 1];
        let lens: Vec<f64> = self.local_lengths(m).iter().map(rational::to_f64).collect();
        let offs: Vec<f64> = layer
            .iter()
            .map(|g| rational::to_f64(self.star.child_offset(k, g.first)))
            .collect();
        let bases = self.star.lefts_f64(k - 1);
        let mut out = Vec::with_capacity(bases.len() * layer.len());
        for base in bases {
            out.extend(offs.iter().zip(&lens).map(|(o, l)| (base + o, *l)));
        }
        out
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            modulus: self.modulus,
            chi: self.chi.clone(),
            exponents: self.exponents(),
            markers: self.markers.clone(),
            level_sizes: (0..=self.depth())
                .map(|m| self.level_size(m).to_string())
                .collect(),
        }
    }
}

/// Verifies the hierarchy properties on the materialised branches:
/// interior-disjoint ordered branches, markers equal to star levels, at most
/// `M²` children per branch (exactly `M` between markers), `2χ` length
/// comparability, hull-of-run endpoints and decreasing nested lengths.
pub fn check_properties(h: &Hierarchy) -> CheckList {
    let star = h.star();
    let m2 = h.modulus * h.modulus;
    let two_chi = h.chi() * int(2);
    let mut disjoint = Check::new("p1_branches_interior_disjoint");
    let mut marker = Check::new("p2_marker_level_equals_star_level");
    let mut at_most = Check::new("p3_children_at_most_M2");
    let mut exactly = Check::new("p3_exactly_M_between_markers");
    let mut comparable = Check::new("p4_lengths_2chi_comparable");
    let mut hull = Check::new("branch_is_hull_of_star_run");
    let mut nested = Check::new("children_nested_in_parent");
    let mut decreasing = Check::new("level_length_decreasing");

    let mut prev = h.branches(0);
    let mut prev_len = h.level_length(0);
    for m in 0..=h.depth() {
        let cur = if m == 0 { prev.clone() } else { h.branches(m) };
        let at = h.locate(m);
        for w in cur.windows(2) {
            disjoint.observe(w[0].left < w[0].right && w[0].right <= w[1].left, || {
                format!("level {m}, branches {} and {}", w[0].index, w[1].index)
            });
        }
        let lens: Vec<Rational> = cur.iter().map(Branch::length).collect();
        let lo = lens.iter().min().unwrap();
        let hi = lens.iter().max().unwrap();
        comparable.observe(*hi <= &two_chi * lo, || {
            format!(
                "level {m}: max {} vs min {}",
                rational::format(hi),
                rational::format(lo)
            )
        });
        if at.k > 0 {
            let stars = star.level(at.k);
            for b in &cur {
                let a = &stars[b.span.first];
                let z = &stars[b.span.last];
                hull.observe(b.left == a.left && b.right == z.right, || {
                    format!("level {m}, branch {}", b.index)
                });
            }
        }
        if h.is_marker(m) {
            let stars = star.level(at.k);
            marker.observe(
                stars.len() == cur.len()
                    && stars
                        .iter()
                        .zip(&cur)
                        .all(|(s, b)| s.left == b.left && s.right == b.right),
                || format!("marker level {m} (star level {})", at.k),
            );
        }
        if m > 0 {
            let mut counts = vec![0u64; prev.len()];
            for b in &cur {
                let p = &prev[b.parent.unwrap()];
                counts[p.index] += 1;
                nested.observe(p.left <= b.left && b.right <= p.right, || {
                    format!("level {m}, branch {} in parent {}", b.index, p.index)
                });
            }
            let between = m < h.markers()[at.k];
            for (i, &c) in counts.iter().enumerate() {
                at_most.observe(c <= m2, || {
                    format!("level {}, branch {i}: {c} children", m - 1)
                });
                if between {
                    exactly.observe(c == h.modulus(), || {
                        format!("level {}, branch {i}: {c} children", m - 1)
                    });
                }
            }
            let len = h.level_length(m);
            decreasing.observe(len <= prev_len, || format!("level {m}"));
            prev_len = len;
        }
        prev = cur;
    }
    CheckList {
        checks: vec![
            disjoint, marker, at_most, exactly, comparable, hull, nested, decreasing,
        ],
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthRow {
    pub m: usize,
    pub k: usize,
    pub marker: bool,
    #[serde(with = "rational::serde_str")]
    pub total: Rational,
    /// Exact target on markers, lower bound between markers.
    #[serde(with = "rational::serde_str")]
    pub lower: Rational,
    #[serde(with = "rational::serde_str")]
    pub upper: Rational,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthReport {
    pub rows: Vec<LengthRow>,
    pub passed: bool,
}

/// Total branch length per level against its bounds: equality
/// `l(H_{m_k}) = N_k* δ_k*` on markers and
/// `(1 − 2χ/M) N*_{k−1} δ*_{k−1} ≤ l(H_m) ≤ N*_{k−1} δ*_{k−1}` between them.
pub fn level_length_report(h: &Hierarchy) -> LengthReport {
    let star = h.star();
    let slack = Rational::one() - h.chi() * int(2) / int(h.modulus() as i64);
    let mut rows = Vec::with_capacity(h.depth() + 1);
    for m in 0..=h.depth() {
        let at = h.locate(m);
        let total = h.level_length(m);
        let marker = h.is_marker(m);
        let (lower, upper) = if marker {
            let target = star.count_rational(at.k) * star.delta_star(at.k);
            (target.clone(), target)
        } else {
            let prev = star.count_rational(at.k - 1) * star.delta_star(at.k - 1);
            (&slack * &prev, prev)
        };
        let passed = if marker {
            total == lower
        } else {
            lower <= total && total <= upper
        };
        rows.push(LengthRow {
            m,
            k: at.k,
            marker,
            total,
            lower,
            upper,
            passed,
        });
    }
    let passed = rows.iter().all(|r| r.passed);
    LengthReport { rows, passed }
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioRow {
    pub m: usize,
    pub k: usize,
    #[serde(with = "rational::serde_str")]
    pub big_lambda: Rational,
    #[serde(with = "rational::serde_str")]
    pub lambda: Rational,
    #[serde(with = "rational::serde_str")]
    pub big_gamma: Rational,
    #[serde(with = "rational::serde_str")]
    pub gamma: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioSequences {
    /// Rows for `m = 1..=depth`.
    pub rows: Vec<RatioRow>,
    /// Levels whose interior star gaps are all zero (`γ = Γ = 0`).
    pub zero_gap_levels: Vec<usize>,
    pub checks: CheckList,
}

impl RatioSequences {
    /// `γ(m)` for `m ≥ 1`.
    pub fn gamma(&self, m: usize) -> &Rational {
        &self.rows[m - 1].gamma
    }
}

/// Child/parent length ratios `Λ, λ` and gap ratios `Γ, γ` per level, with
/// the envelope checks `λ ≤ Λ ≤ 4χ²λ`, `γ ≤ Γ ≤ 2χ²γ` and the two product
/// bounds on `l(H_m)` (scaled by `δ_0`).
pub fn ratio_sequences(h: &Hierarchy) -> RatioSequences {
    let star = h.star();
    let chi2 = h.chi() * h.chi();
    let m2 = int((h.modulus() * h.modulus()) as i64);
    let mut lambda_env = Check::new("lambda_envelope_4chi2");
    let mut gamma_env = Check::new("gamma_envelope_2chi2");
    let mut prod_lambda = Check::new("length_below_product_M2_Lambda");
    let mut prod_gamma = Check::new("length_below_product_one_minus_gamma");

    let mut rows = Vec::with_capacity(h.depth());
    let mut zero_gap_levels = Vec::new();
    let mut acc_lambda = star.delta(0).clone();
    let mut acc_gamma = star.delta(0).clone();
    for m in 1..=h.depth() {
        let at = h.locate(m);
        let k = at.k;
        let layout = &h.blocks[k - 1];
        let child_layer = &layout.layers[at.t as usize - 1];
        let child_lens = &layout.lengths[at.t as usize - 1];
        let parent_lens: Vec<Rational> = if at.t == 1 {
            vec![star.delta(k - 1).clone()]
        } else {
            layout.lengths[at.t as usize - 2].clone()
        };
        let (mut big_lambda, mut lambda): (Option<Rational>, Option<Rational>) = (None, None);
        for (g, len) in child_layer.iter().zip(child_lens) {
            let r = len / &parent_lens[g.parent];
            if big_lambda.as_ref().is_none_or(|x| r > *x) {
                big_lambda = Some(r.clone());
            }
            if lambda.as_ref().is_none_or(|x| r < *x) {
                lambda = Some(r);
            }
        }
        let (big_lambda, lambda) = (big_lambda.unwrap(), lambda.unwrap());
        let pmin = parent_lens.iter().min().unwrap();
        let pmax = parent_lens.iter().max().unwrap();
        let big_gamma = star.alpha_max(k) / pmin;
        let gamma = star.alpha_min(k) / pmax;
        if big_gamma.is_zero() && !zero_gap_levels.contains(&k) {
            zero_gap_levels.push(k);
        }

        lambda_env.observe(
            lambda <= big_lambda && big_lambda <= int(4) * &chi2 * &lambda,
            || format!("m = {m}"),
        );
        gamma_env.observe(
            gamma <= big_gamma && big_gamma <= int(2) * &chi2 * &gamma,
            || format!("m = {m}"),
        );
        acc_lambda *= &m2 * &big_lambda;
        acc_gamma *= Rational::one() - &gamma;
        let len = h.level_length(m);
        prod_lambda.observe(len <= acc_lambda, || format!("m = {m}"));
        prod_gamma.observe(len <= acc_gamma, || format!("m = {m}"));

        rows.push(RatioRow {
            m,
            k,
            big_lambda,
            lambda,
            big_gamma,
            gamma,
        });
    }
    RatioSequences {
        rows,
        zero_gap_levels,
        checks: CheckList {
            checks: vec![lambda_env, gamma_env, prod_lambda, prod_gamma],
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsequenceRow {
    pub k: usize,
    /// Candidate index `a = m_k − 1`.
    pub a: usize,
    /// `(l(H_a) / δ_0)^{1/a}`.
    pub length_root: f64,
    /// `#S_ε(a) / a`.
    pub small_gap_fraction: f64,
    /// `(Π_{j ∈ S_ε(a)} (1 − γ(j)^p))^{1/a}`.
    pub gap_product_root: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsequenceReport {
    #[serde(with = "rational::serde_str")]
    pub epsilon: Rational,
    pub p: f64,
    pub rows: Vec<SubsequenceRow>,
    /// Candidates at which `length_root` sets a new running maximum: the
    /// finite-depth stand-in for the maximising subsequence.
    pub record_subsequence: Vec<usize>,
}

/// Finite-depth trend table over the candidates `a = m_k − 1 ≥ 1`.
pub fn subsequence_report(
    h: &Hierarchy,
    ratios: &RatioSequences,
    epsilon: &Rational,
    p: f64,
) -> Result<SubsequenceReport> {
    if *epsilon <= Rational::zero() || *epsilon >= Rational::one() {
        return Err(Error::invalid("epsilon", "ε must lie in (0, 1)"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", "p must lie in (0, 1]"));
    }
    let delta0 = h.star().delta(0);
    let mut rows = Vec::new();
    let mut record_subsequence = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (k, &mk) in h.markers().iter().enumerate().skip(1) {
        let a = mk - 1;
        if a == 0 {
            continue;
        }
        let length_root = (rational::ln(&(h.level_length(a) / delta0)) / a as f64).exp();
        let small: Vec<usize> = (1..=a).filter(|&j| ratios.gamma(j) <= epsilon).collect();
        let log_prod: f64 = small
            .iter()
            .map(|&j| (1.0 - rational::to_f64(ratios.gamma(j)).powf(p)).ln())
            .sum();
        if length_root > best {
            best = length_root;
            record_subsequence.push(a);
        }
        rows.push(SubsequenceRow {
            k,
            a,
            length_root,
            small_gap_fraction: small.len() as f64 / a as f64,
            gap_product_root: (log_prod / a as f64).exp(),
        });
    }
    Ok(SubsequenceReport {
        epsilon: epsilon.clone(),
        p,
        rows,
        record_subsequence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_levels, star_system};
    use crate::params::{make_middle_thirds, make_uniform_cantor, ClosedInterval, HpsSpec};
    use crate::rational::ratio;

    fn star_of(spec: &HpsSpec) -> StarSystem {
        let tree = build_levels(spec).unwrap();
        star_system(spec, &tree).unwrap()
    }

    #[test]
    fn branching_constant_examples() {
        assert_eq!(branching_constant(&int(1)).unwrap(), 3);
        assert_eq!(branching_constant(&ratio(12, 5)).unwrap(), 5);
        assert_eq!(branching_constant(&int(3)).unwrap(), 7);
        assert!(branching_constant(&ratio(1, 2)).is_err());
    }

    #[test]
    fn level_exponent_examples() {
        assert_eq!(level_exponent(2, 3).unwrap(), 1);
        assert_eq!(level_exponent(13, 3).unwrap(), 2);
        assert_eq!(level_exponent(27, 3).unwrap(), 3);
        assert_eq!(level_exponent(26, 3).unwrap(), 2);
        assert_eq!(level_exponent(8, 3).unwrap(), 1);
        assert!(level_exponent(1, 3).is_err());
    }

    #[test]
    fn split_block_examples() {
        let t = split_block(13, 3, 1).unwrap();
        assert_eq!(t.child_sizes(), vec![5, 4, 4]);
        assert_eq!(split_once(5, 3), vec![2, 2, 1]);
        assert_eq!(split_block(20, 3, 1).unwrap().child_sizes(), vec![7, 7, 6]);
        assert!(matches!(
            split_block(13, 3, 2),
            Err(Error::DepthMismatch { .. })
        ));
        let deep = split_block(100, 3, 3).unwrap();
        assert_eq!(deep.leaves().iter().sum::<u64>(), 100);
        let s = split_summary(100, 3, 3).unwrap();
        assert_eq!(s.count, deep.leaves().len() as u64);
        assert_eq!(s.max, *deep.leaves().iter().max().unwrap());
    }

    #[test]
    fn middle_thirds_has_no_intermediate_levels() {
        let spec = make_middle_thirds(5, ClosedInterval::unit()).unwrap();
        let h = build_hierarchy(&star_of(&spec), &Rational::one()).unwrap();
        assert_eq!(h.modulus(), 3);
        assert_eq!(h.exponents(), vec![1; 4]);
        assert_eq!(h.markers(), &[0, 1, 2, 3, 4]);
        assert!(check_properties(&h).all_passed());
        let lengths = level_length_report(&h);
        assert!(lengths.passed);
        assert_eq!(lengths.rows[1].total, ratio(2, 3));
    }

    #[test]
    fn thirteen_children_regroup_five_four_four() {
        let spec = make_uniform_cantor(&[13], &[ratio(1, 20)], 3, ClosedInterval::unit()).unwrap();
        let h = build_hierarchy(&star_of(&spec), &Rational::one()).unwrap();
        assert_eq!(h.markers(), &[0, 2, 4]);
        let h1 = h.branches(1);
        let runs: Vec<(usize, usize)> = h1.iter().map(|b| (b.span.first, b.span.last)).collect();
        assert_eq!(runs, vec![(0, 4), (5, 8), (9, 12)]);
        let checks = check_properties(&h);
        assert!(checks.all_passed(), "{checks:?}");
        // Each H_1 branch holds 5, 4, 4 ≤ 9 branches of H_2.
        let parents = h.parents(2);
        let mut counts = [0; 3];
        for p in parents {
            counts[p] += 1;
        }
        assert_eq!(counts, [5, 4, 4]);

        let report = level_length_report(&h);
        assert!(report.passed);
        let row = &report.rows[1];
        assert!(!row.marker);
        assert_eq!(row.upper, h.star().delta(0).clone());
        assert_eq!(row.lower, ratio(1, 3) * h.star().delta(0));
    }

    #[test]
    fn middle_thirds_ratios() {
        let spec = make_middle_thirds(6, ClosedInterval::unit()).unwrap();
        let h = build_hierarchy(&star_of(&spec), &Rational::one()).unwrap();
        let r = ratio_sequences(&h);
        for row in &r.rows {
            assert_eq!(row.big_lambda, ratio(1, 3));
            assert_eq!(row.lambda, ratio(1, 3));
            assert_eq!(row.big_gamma, ratio(1, 3));
            assert_eq!(row.gamma, ratio(1, 3));
        }
        assert!(r.checks.all_passed());
        assert!(r.zero_gap_levels.is_empty());

        let sub = subsequence_report(&h, &r, &ratio(1, 2), 1.0).unwrap();
        for row in &sub.rows {
            assert!((row.length_root - 2.0 / 3.0).abs() < 1e-12);
            assert_eq!(row.small_gap_fraction, 1.0);
        }
        assert!(subsequence_report(&h, &r, &int(1), 1.0).is_err());
    }

    #[test]
    fn near_full_length_roots_increase() {
        let spec = crate::params::make_near_full(20, ClosedInterval::unit()).unwrap();
        let chi = crate::params::derive_chi(&spec).unwrap();
        let h = build_hierarchy(&star_of(&spec), &chi).unwrap();
        let r = ratio_sequences(&h);
        assert!(r.checks.all_passed(), "{:?}", r.checks);
        assert!(level_length_report(&h).passed);
        let sub = subsequence_report(&h, &r, &ratio(1, 2), 1.0).unwrap();
        let roots: Vec<f64> = sub.rows.iter().map(|r| r.length_root).collect();
        assert!(roots.len() >= 15);
        assert!(roots.windows(2).all(|w| w[1] > w[0]), "{roots:?}");
        assert!(*roots.last().unwrap() < 1.0);
    }

    #[test]
    fn chi_below_star_gap_ratio_is_rejected() {
        // interior gaps 1/10 and 1/5 give χ = 2.
        let spec = HpsSpec {
            initial_interval: ClosedInterval::unit(),
            levels: vec![
                crate::params::LevelSpec {
                    n: 3,
                    c: ratio(1, 5),
                    gaps: vec![ratio(1, 10), ratio(1, 10), ratio(1, 5), ratio(0, 1)],
                },
                crate::params::LevelSpec {
                    n: 2,
                    c: ratio(1, 3),
                    gaps: vec![ratio(0, 1), ratio(1, 15), ratio(0, 1)],
                },
            ],
        };
        let star = star_of(&spec);
        assert!(build_hierarchy(&star, &Rational::one()).is_err());
        let h = build_hierarchy(&star, &int(2)).unwrap();
        assert_eq!(h.modulus(), 5);
        assert!(check_properties(&h).all_passed());
    }
}
