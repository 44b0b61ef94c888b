//! Run configuration: one JSON file per run, with a handful of scalar
//! overrides from the command line.

use std::path::{Path, PathBuf};

use hps_core::params::{ClosedInterval, GeneratorSpec, LevelSpec};
use hps_core::rational::{self, Rational};
use hps_core::{dimension, HpsSpec, ProbeConfig, QsMap, Tail};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_D_GRID: [f64; 3] = [0.5, 0.7, 0.9];
pub const DEFAULT_EPSILON: (i64, i64) = (1, 10);
pub const DEFAULT_THRESHOLD: f64 = 0.95;
/// Generated specs evaluate the dimension formula at least this deep.
pub const MIN_FORMULA_DEPTH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scales {
    /// `base^{-j}` for `j` in `min_exp..=max_exp`.
    Geometric {
        base: u64,
        min_exp: u32,
        max_exp: u32,
    },
    #[serde(with = "rational::serde_vec")]
    List(Vec<Rational>),
}

impl Scales {
    pub fn resolve(&self) -> hps_core::Result<Vec<Rational>> {
        match self {
            Scales::Geometric {
                base,
                min_exp,
                max_exp,
            } => dimension::geometric_scales(*base, *min_exp, *max_exp),
            Scales::List(v) => Ok(v.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallBlock {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_radii")]
    pub radii_per_point: usize,
}

fn default_points() -> usize {
    16
}

fn default_radii() -> usize {
    1
}

impl Default for BallBlock {
    fn default() -> Self {
        BallBlock {
            points: default_points(),
            radii_per_point: default_radii(),
        }
    }
}

/// The config file. Exactly one of `levels` or `generator` describes the
/// set; everything else has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_interval: Option<ClosedInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<LevelSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default = "QsMap::identity")]
    pub map: QsMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(
        default,
        with = "rational::serde_opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub chi: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Scales>,
    #[serde(
        default,
        with = "rational::serde_opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub epsilon: Option<Rational>,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Trailing number of formula values the tail is taken over; defaults
    /// to the last quarter of the sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory. Not part of the resolved config in reports, so
    /// identical runs into different directories stay byte-identical.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula_depth: Option<usize>,
    #[serde(default)]
    pub probe: ProbeBlock,
    #[serde(default)]
    pub ball: BallBlock,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels_to_check: Option<Vec<usize>>,
}

fn default_p() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

/// Command-line overrides of scalar fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub depth: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::usage("config", format!("{e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = o.depth {
            self.depth = Some(d);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    /// Checks the spec/generator exclusivity and fills every defaulted field
    /// that depends on the spec, returning the spec at the run depth.
    pub fn resolve(&mut self) -> Result<Resolved, CliError> {
        let spec = match (&self.levels, &self.generator) {
            (Some(_), Some(_)) => {
                return Err(CliError::usage(
                    "config",
                    "give either `levels` or `generator`, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::usage(
                    "config",
                    "missing set description: `levels` or `generator`",
                ))
            }
            (Some(levels), None) => {
                let initial = self.initial_interval.clone().ok_or_else(|| {
                    CliError::usage("config", "`levels` needs `initial_interval`")
                })?;
                let full = HpsSpec {
                    initial_interval: initial,
                    levels: levels.clone(),
                };
                let depth = self.depth.unwrap_or(full.depth());
                if depth > full.depth() {
                    return Err(CliError::usage(
                        "config",
                        format!("depth {depth} exceeds the {} given levels", full.depth()),
                    ));
                }
                full.truncated(depth)
                    .map_err(|e| CliError::from_core("params", e))?
            }
            (None, Some(generator)) => {
                if self.initial_interval.is_some() {
                    return Err(CliError::usage(
                        "config",
                        "`initial_interval` goes inside generator.params",
                    ));
                }
                let depth = self.depth.unwrap_or(generator.depth);
                generator
                    .generate_to(depth)
                    .map_err(|e| CliError::from_core("params", e))?
            }
        };
        let depth = spec.depth();
        self.depth = Some(depth);

        let formula_depth = match (&self.generator, self.formula_depth) {
            (Some(_), Some(f)) => f,
            (Some(_), None) => depth.max(MIN_FORMULA_DEPTH),
            (None, Some(f)) if f <= self.levels.as_ref().map_or(0, Vec::len) => f,
            (None, Some(f)) => {
                return Err(CliError::usage(
                    "config",
                    format!("formula_depth {f} exceeds the given levels"),
                ))
            }
            (None, None) => depth,
        };
        self.formula_depth = Some(formula_depth);
        let formula_spec = if formula_depth == depth {
            spec.clone()
        } else {
            match (&self.generator, &self.levels) {
                (Some(g), _) => g.generate_to(formula_depth),
                (None, Some(levels)) => HpsSpec {
                    initial_interval: self.initial_interval.clone().expect("checked above"),
                    levels: levels.clone(),
                }
                .truncated(formula_depth),
                (None, None) => unreachable!(),
            }
            .map_err(|e| CliError::from_core("params", e))?
        };

        let d_grid = self
            .d_grid
            .get_or_insert_with(|| DEFAULT_D_GRID.to_vec())
            .clone();
        if let Some(d) = d_grid.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return Err(CliError::usage("config", format!("d = {d} outside (0, 1)")));
        }
        let scales = match &self.scales {
            Some(s) => s.resolve().map_err(|e| CliError::from_core("config", e))?,
            None => default_scales(&spec, &self.map),
        };
        if scales
            .iter()
            .any(|s| *s <= Rational::from_integer(0.into()))
        {
            return Err(CliError::usage("config", "scales must be positive"));
        }
        self.scales = Some(Scales::List(scales.clone()));
        let epsilon = self
            .epsilon
            .get_or_insert_with(|| rational::ratio(DEFAULT_EPSILON.0, DEFAULT_EPSILON.1))
            .clone();

        let i0 = &spec.initial_interval;
        let window = *self
            .probe
            .window
            .get_or_insert((rational::to_f64(&i0.left), rational::to_f64(&i0.right)));
        let defaults = ProbeConfig::default();
        let probe = ProbeConfig {
            samples: *self.probe.samples.get_or_insert(defaults.samples),
            rho: self.probe.rho.get_or_insert(defaults.rho).clone(),
            window,
            seed: self.seed,
        };
        let tail = match self.window {
            Some(n) => Tail::Last(n),
            None => Tail::default(),
        };

        Ok(Resolved {
            spec,
            formula_spec,
            d_grid,
            scales,
            epsilon,
            probe,
            tail,
        })
    }
}

/// Everything a subcommand needs, derived from a resolved config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub spec: HpsSpec,
    pub formula_spec: HpsSpec,
    pub d_grid: Vec<f64>,
    pub scales: Vec<Rational>,
    pub epsilon: Rational,
    pub probe: ProbeConfig,
    pub tail: Tail,
}

/// Dyadic scales from the first one no coarser than the hulls of `I₀` and
/// of its image down to the last one no finer than the deepest basic
/// intervals.
pub fn default_scales(spec: &HpsSpec, map: &QsMap) -> Vec<Rational> {
    let zero = Rational::from_integer(0.into());
    let hull = spec.initial_length();
    if hull <= zero {
        return Vec::new();
    }
    let image_hull = map.increment(
        rational::to_f64(&spec.initial_interval.left),
        rational::to_f64(&hull),
    );
    let finest = spec
        .basic_lengths()
        .pop()
        .filter(|l| *l > zero)
        .unwrap_or_else(|| hull.clone());
    let two = Rational::from_integer(2.into());
    let mut scale = Rational::from_integer(1.into());
    while scale > hull {
        scale = rational::div(&scale, &two);
    }
    while &scale * &two <= hull {
        scale = rational::mul(&scale, &two);
    }
    while rational::to_f64(&scale) > image_hull && scale > finest {
        scale = rational::div(&scale, &two);
    }
    let mut out = Vec::new();
    while scale >= finest || out.len() < 2 {
        out.push(scale.clone());
        scale = rational::div(&scale, &two);
    }
    out
}
