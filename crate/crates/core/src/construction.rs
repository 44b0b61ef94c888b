//! Exact basic-interval trees `E_0 ⊇ E_1 ⊇ … ⊇ E_K` and the star
//! reconstruction that trims every basic interval to the hull of its
//! children.
//!
//! Both trees are stored as per-level offset tables: every interval at level
//! `k` is `parent.left + offset[j]` for its child index `j`, with a common
//! length. Intervals are materialised on demand, flattened in left-to-right
//! order so that the flat index of `σ = σ_1 ⋯ σ_k` is the mixed-radix value
//! of `(σ_1 − 1, …, σ_k − 1)`.

use num_traits::One;
use serde::Serialize;

use crate::checks::{Check, CheckList};
use crate::error::{Error, Result};
use crate::params::{validate_spec, ClosedInterval, HpsSpec};
use crate::rational::{self, int, Rational};

/// A `k`-order basic interval `I_σ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicInterval {
    /// 1-based child indices `σ_1 ⋯ σ_k`.
    pub word: Vec<u32>,
    pub level: usize,
    pub left: Rational,
    pub right: Rational,
}

impl BasicInterval {
    pub fn length(&self) -> Rational {
        &self.right - &self.left
    }

    pub fn word_string(&self) -> String {
        self.word
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(".")
    }
}

/// Offset-table representation shared by the level tree and the star tree.
#[derive(Clone, Debug, PartialEq, Eq)]
struct OffsetTree {
    origin: Rational,
    branch_counts: Vec<u64>,
    lengths: Vec<Rational>,
    offsets: Vec<Vec<Rational>>,
}

impl OffsetTree {
    fn depth(&self) -> usize {
        self.branch_counts.len()
    }

    fn count(&self, k: usize) -> u128 {
        self.branch_counts[..k]
            .iter()
            .fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
    }

    fn count_usize(&self, k: usize) -> usize {
        usize::try_from(self.count(k)).expect("level too large to materialise")
    }

    fn lefts(&self, k: usize) -> Vec<Rational> {
        let mut lefts = vec![self.origin.clone()];
        for level in 1..=k {
            let offs = &self.offsets[level - 1];
            let mut next = Vec::with_capacity(lefts.len() * offs.len());
            for p in &lefts {
                next.extend(offs.iter().map(|o| p + o));
            }
            lefts = next;
        }
        lefts
    }

    fn lefts_f64(&self, k: usize) -> Vec<f64> {
        let mut lefts = vec![rational::to_f64(&self.origin)];
        for level in 1..=k {
            let offs: Vec<f64> = self.offsets[level - 1]
                .iter()
                .map(rational::to_f64)
                .collect();
            let mut next = Vec::with_capacity(lefts.len() * offs.len());
            for p in &lefts {
                next.extend(offs.iter().map(|o| p + o));
            }
            lefts = next;
        }
        lefts
    }

    fn word_of(&self, k: usize, mut flat: usize) -> Vec<u32> {
        let mut word = vec![0u32; k];
        for level in (1..=k).rev() {
            let n = self.branch_counts[level - 1] as usize;
            word[level - 1] = (flat % n) as u32 + 1;
            flat /= n;
        }
        word
    }

    fn interval(&self, k: usize, flat: usize) -> BasicInterval {
        let word = self.word_of(k, flat);
        let mut left = self.origin.clone();
        for (level, &d) in word.iter().enumerate() {
            left += &self.offsets[level][d as usize - 1];
        }
        let right = &left + &self.lengths[k];
        BasicInterval {
            word,
            level: k,
            left,
            right,
        }
    }

    fn level(&self, k: usize) -> Vec<BasicInterval> {
        let len = &self.lengths[k];
        self.lefts(k)
            .into_iter()
            .enumerate()
            .map(|(i, left)| BasicInterval {
                word: self.word_of(k, i),
                level: k,
                right: &left + len,
                left,
            })
            .collect()
    }
}

fn offset_table(n: u64, len: &Rational, gaps: &[Rational]) -> Vec<Rational> {
    let mut out = Vec::with_capacity(n as usize);
    let mut pos = gaps[0].clone();
    out.push(pos.clone());
    for gap in &gaps[1..n as usize] {
        pos += len;
        pos += gap;
        out.push(pos.clone());
    }
    out
}

/// The basic-interval tree of a validated spec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelTree {
    tree: OffsetTree,
}

/// Builds the exact level tree `E_0..E_K`. Fails if the spec does not
/// validate.
pub fn build_levels(spec: &HpsSpec) -> Result<LevelTree> {
    validate_spec(spec).into_result()?;
    let lengths = spec.basic_lengths();
    let offsets = spec
        .levels
        .iter()
        .enumerate()
        .map(|(i, lvl)| offset_table(lvl.n, &lengths[i + 1], &lvl.gaps))
        .collect();
    Ok(LevelTree {
        tree: OffsetTree {
            origin: spec.initial_interval.left.clone(),
            branch_counts: spec.levels.iter().map(|l| l.n).collect(),
            lengths,
            offsets,
        },
    })
}

impl LevelTree {
    pub fn depth(&self) -> usize {
        self.tree.depth()
    }

    /// Number of level-`k` basic intervals (saturating).
    pub fn count(&self, k: usize) -> u128 {
        self.tree.count(k)
    }

    /// Common length of every level-`k` basic interval.
    pub fn length(&self, k: usize) -> &Rational {
        &self.tree.lengths[k]
    }

    /// Left endpoint of child `j` (0-based) relative to its parent's left endpoint.
    pub fn child_offset(&self, k: usize, j: usize) -> &Rational {
        &self.tree.offsets[k - 1][j]
    }

    pub fn interval(&self, k: usize, flat: usize) -> BasicInterval {
        self.tree.interval(k, flat)
    }

    /// Every level-`k` basic interval, left to right.
    pub fn level(&self, k: usize) -> Vec<BasicInterval> {
        self.tree.level(k)
    }

    /// `(left, right)` pairs of `E_k`, left to right.
    pub fn level_pairs(&self, k: usize) -> Vec<(Rational, Rational)> {
        let len = &self.tree.lengths[k];
        self.tree
            .lefts(k)
            .into_iter()
            .map(|l| {
                let r = &l + len;
                (l, r)
            })
            .collect()
    }

    pub fn level_pairs_f64(&self, k: usize) -> Vec<(f64, f64)> {
        let len = rational::to_f64(&self.tree.lengths[k]);
        self.tree
            .lefts_f64(k)
            .into_iter()
            .map(|l| (l, l + len))
            .collect()
    }
}

/// Re-checks the level structure on the materialised tree: root, child
/// lengths, ordering, gaps and nesting, all with exact zero residual.
pub fn verify_levels(spec: &HpsSpec, tree: &LevelTree) -> CheckList {
    let mut root = Check::new("root_is_initial_interval");
    let i0 = tree.interval(0, 0);
    root.observe(
        i0.left == spec.initial_interval.left && i0.right == spec.initial_interval.right,
        || "root differs from I0".into(),
    );
    let mut ratio = Check::new("child_length_ratio");
    let mut order = Check::new("children_ordered");
    let mut gaps = Check::new("gap_lengths");
    let mut nested = Check::new("children_nested");

    let mut parents = tree.level(0);
    for k in 1..=tree.depth() {
        let lvl = spec.level(k);
        let n = lvl.n as usize;
        let children = tree.level(k);
        for (pi, parent) in parents.iter().enumerate() {
            let kids = &children[pi * n..(pi + 1) * n];
            let plen = parent.length();
            for (j, kid) in kids.iter().enumerate() {
                ratio.observe(kid.length() == &plen * &lvl.c, || {
                    format!("level {k}, word {}", kid.word_string())
                });
                nested.observe(parent.left <= kid.left && kid.right <= parent.right, || {
                    format!("level {k}, word {}", kid.word_string())
                });
                let gap = if j == 0 {
                    &kid.left - &parent.left
                } else {
                    &kid.left - &kids[j - 1].right
                };
                if j > 0 {
                    order.observe(kid.left >= kids[j - 1].right, || {
                        format!("level {k}, word {}", kid.word_string())
                    });
                }
                gaps.observe(gap == lvl.gaps[j], || {
                    format!("level {k}, word {}, gap {j}", kid.word_string())
                });
            }
            let last = &kids[n - 1];
            gaps.observe(&parent.right - &last.right == lvl.gaps[n], || {
                format!("level {k}, parent {}, right gap", parent.word_string())
            });
        }
        parents = children;
    }
    CheckList {
        checks: vec![root, ratio, order, gaps, nested],
    }
}

/// The trimmed reconstruction `{I_σ*}` with its parameters.
///
/// Star data exists for levels `0..=K−1`: `δ_k` needs the gaps of level
/// `k + 1`, so the deepest spec level has no star counterpart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarSystem {
    pub initial: ClosedInterval,
    /// `n_k*` for `k = 1..=K'`, stored at `k − 1`.
    pub branch_counts: Vec<u64>,
    /// `δ_k` for `k = 0..=K'`.
    pub lengths: Vec<Rational>,
    /// `c_k*` for `k = 1..=K'`, stored at `k − 1`.
    pub ratios: Vec<Rational>,
    /// `ξ*_{k,0..n_k}` for `k = 1..=K'`, stored at `k − 1`.
    pub gaps: Vec<Vec<Rational>>,
    tree: OffsetTree,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarLevelSummary {
    pub k: usize,
    pub n: u64,
    #[serde(with = "rational::serde_str")]
    pub delta: Rational,
    #[serde(with = "rational::serde_opt")]
    pub c_star: Option<Rational>,
    #[serde(with = "rational::serde_opt")]
    pub alpha_min: Option<Rational>,
    #[serde(with = "rational::serde_opt")]
    pub alpha_max: Option<Rational>,
}

/// Builds the star system from a spec of depth `K ≥ 2`.
pub fn star_system(spec: &HpsSpec, levels: &LevelTree) -> Result<StarSystem> {
    let depth = spec.depth();
    if depth < 2 {
        return Err(Error::StarTooShallow { depth });
    }
    if levels.depth() != depth {
        return Err(Error::invalid(
            "levels",
            format!(
                "level tree depth {} does not match spec depth {depth}",
                levels.depth()
            ),
        ));
    }
    let star_depth = depth - 1;
    let first = spec.level(1);
    let initial = ClosedInterval::new(
        &spec.initial_interval.left + first.left_gap(),
        &spec.initial_interval.right - first.right_gap(),
    );
    let products = spec.ratio_products();
    let len0 = spec.initial_length();

    // δ_k = Σ interior ξ_{k+1,l} + |I₀| c_1⋯c_{k+1} n_{k+1}
    let lengths: Vec<Rational> = (0..=star_depth)
        .map(|k| {
            let next = spec.level(k + 1);
            rational::sum(next.interior_gaps()) + &len0 * &products[k + 1] * int(next.n as i64)
        })
        .collect();
    let ratios: Vec<Rational> = (1..=star_depth)
        .map(|k| &lengths[k] / &lengths[k - 1])
        .collect();
    let gaps: Vec<Vec<Rational>> = (1..=star_depth)
        .map(|k| {
            let lvl = spec.level(k);
            let next = spec.level(k + 1);
            let trim = next.end_gaps();
            let n = lvl.n as usize;
            (0..=n)
                .map(|l| match l {
                    0 => next.left_gap().clone(),
                    l if l == n => next.right_gap().clone(),
                    l => &lvl.gaps[l] + &trim,
                })
                .collect()
        })
        .collect();
    let branch_counts: Vec<u64> = spec.levels[..star_depth].iter().map(|l| l.n).collect();
    let offsets = (1..=star_depth)
        .map(|k| offset_table(branch_counts[k - 1], &lengths[k], &gaps[k - 1]))
        .collect();
    Ok(StarSystem {
        tree: OffsetTree {
            origin: initial.left.clone(),
            branch_counts: branch_counts.clone(),
            lengths: lengths.clone(),
            offsets,
        },
        initial,
        branch_counts,
        lengths,
        ratios,
        gaps,
    })
}

impl StarSystem {
    /// Usable star depth `K' = K − 1`.
    pub fn depth(&self) -> usize {
        self.branch_counts.len()
    }

    pub fn n(&self, k: usize) -> u64 {
        self.branch_counts[k - 1]
    }

    pub fn delta(&self, k: usize) -> &Rational {
        &self.lengths[k]
    }

    pub fn c_star(&self, k: usize) -> &Rational {
        &self.ratios[k - 1]
    }

    pub fn gaps_at(&self, k: usize) -> &[Rational] {
        &self.gaps[k - 1]
    }

    pub fn interior_gaps(&self, k: usize) -> &[Rational] {
        let g = &self.gaps[k - 1];
        &g[1..g.len() - 1]
    }

    /// `α̲*_k`, the smallest interior star gap.
    pub fn alpha_min(&self, k: usize) -> &Rational {
        self.interior_gaps(k).iter().min().expect("n_k ≥ 2")
    }

    /// `ᾱ*_k`, the largest interior star gap.
    pub fn alpha_max(&self, k: usize) -> &Rational {
        self.interior_gaps(k).iter().max().expect("n_k ≥ 2")
    }

    /// `N_k* = n_1* ⋯ n_k*` (saturating).
    pub fn count(&self, k: usize) -> u128 {
        self.tree.count(k)
    }

    pub fn count_rational(&self, k: usize) -> Rational {
        self.branch_counts[..k]
            .iter()
            .fold(Rational::one(), |acc, &n| acc * int(n as i64))
    }

    /// `δ_k* = δ_0 c_1* ⋯ c_k*`.
    pub fn delta_star(&self, k: usize) -> Rational {
        &self.lengths[0] * rational::product(&self.ratios[..k])
    }

    /// Left offset of star child `j` (0-based) inside its star parent.
    pub fn child_offset(&self, k: usize, j: usize) -> &Rational {
        &self.tree.offsets[k - 1][j]
    }

    pub fn interval(&self, k: usize, flat: usize) -> BasicInterval {
        self.tree.interval(k, flat)
    }

    pub fn level(&self, k: usize) -> Vec<BasicInterval> {
        self.tree.level(k)
    }

    pub fn lefts(&self, k: usize) -> Vec<Rational> {
        self.tree.lefts(k)
    }

    pub fn lefts_f64(&self, k: usize) -> Vec<f64> {
        self.tree.lefts_f64(k)
    }

    pub fn level_size(&self, k: usize) -> usize {
        self.tree.count_usize(k)
    }

    pub fn summary(&self) -> Vec<StarLevelSummary> {
        (0..=self.depth())
            .map(|k| StarLevelSummary {
                k,
                n: if k == 0 { 1 } else { self.n(k) },
                delta: self.lengths[k].clone(),
                c_star: (k > 0).then(|| self.c_star(k).clone()),
                alpha_min: (k > 0).then(|| self.alpha_min(k).clone()),
                alpha_max: (k > 0).then(|| self.alpha_max(k).clone()),
            })
            .collect()
    }
}

/// Verifies every star invariant against the original level tree: trims
/// (A), lengths (B), `c_k*`, the `ξ*` identities, the two gap inequalities,
/// the sandwich `E_k ⊇ E_k* ⊇ E_{k+1}` and equal star lengths per level.
pub fn verify_star(
    spec: &HpsSpec,
    levels: &LevelTree,
    star: &StarSystem,
    chi: &Rational,
) -> CheckList {
    let mut trim_a = Check::new("star_trim_A");
    let mut length_b = Check::new("star_length_B");
    let mut ratio = Check::new("star_ratio");
    let mut xi = Check::new("star_gap_identities");
    let mut rs1 = Check::new("rs1_end_gaps_below_min_interior");
    let mut rs2 = Check::new("rs2_interior_gaps_chi_comparable");
    let mut sandwich = Check::new("sandwich");
    let mut uniform = Check::new("star_level_uniform");
    let mut initial = Check::new("star_initial_interval");

    initial.observe(
        star.initial.left == star.interval(0, 0).left
            && star.initial.right == star.interval(0, 0).right
            && star.initial.length() == star.lengths[0],
        || "I0* disagrees with δ_0".into(),
    );

    for k in 0..=star.depth() {
        let next = spec.level(k + 1);
        let originals = levels.level(k);
        let stars = star.level(k);
        let children = levels.level(k + 1);
        let n_next = next.n as usize;
        uniform.observe(stars.len() as u128 == star.count(k), || {
            format!("level {k}: {} star intervals", stars.len())
        });
        for (i, (orig, st)) in originals.iter().zip(&stars).enumerate() {
            trim_a.observe(
                &st.left - &orig.left == *next.left_gap()
                    && &orig.right - &st.right == *next.right_gap(),
                || format!("level {k}, word {}", orig.word_string()),
            );
            length_b.observe(st.length() == star.lengths[k], || {
                format!("level {k}, word {}", st.word_string())
            });
            let kids = &children[i * n_next..(i + 1) * n_next];
            sandwich.observe(
                orig.left <= st.left
                    && st.right <= orig.right
                    && kids
                        .iter()
                        .all(|c| st.left <= c.left && c.right <= st.right),
                || format!("level {k}, word {}", orig.word_string()),
            );
        }
    }

    for k in 1..=star.depth() {
        ratio.observe(
            star.c_star(k) * &star.lengths[k - 1] == star.lengths[k],
            || format!("level {k}"),
        );
        // Gaps measured on the materialised star tree against the closed form.
        let n = star.n(k) as usize;
        let parents = star.level(k - 1);
        let kids = star.level(k);
        let lvl = spec.level(k);
        let next = spec.level(k + 1);
        for (pi, parent) in parents.iter().enumerate() {
            let block = &kids[pi * n..(pi + 1) * n];
            for l in 0..=n {
                let measured = match l {
                    0 => &block[0].left - &parent.left,
                    l if l == n => &parent.right - &block[n - 1].right,
                    l => &block[l].left - &block[l - 1].right,
                };
                let expected = match l {
                    0 => next.left_gap().clone(),
                    l if l == n => next.right_gap().clone(),
                    l => &lvl.gaps[l] + next.left_gap() + next.right_gap(),
                };
                xi.observe(
                    measured == expected && measured == star.gaps_at(k)[l],
                    || format!("level {k}, parent {}, gap {l}", parent.word_string()),
                );
            }
        }
        let g = star.gaps_at(k);
        rs1.observe(&g[0] + &g[n] <= *star.alpha_min(k), || format!("level {k}"));
        rs2.observe(*star.alpha_max(k) <= chi * star.alpha_min(k), || {
            format!("level {k}")
        });
    }
    CheckList {
        checks: vec![
            initial, trim_a, length_b, ratio, xi, rs1, rs2, sandwich, uniform,
        ],
    }
}
