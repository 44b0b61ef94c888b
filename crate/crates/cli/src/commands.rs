use std::path::PathBuf;

use hps_core::construction::{verify_levels, verify_star};
use hps_core::dimension::{BoxReport, FormulaReport};
use hps_core::hierarchy::{level_length_report, ratio_sequences, subsequence_report};
use hps_core::measure::{ball_scan, build_mu, ratio_scan};
use hps_core::params::GeneratorKind;
use hps_core::qsmaps::MapSpec;
use hps_core::rational::{self, Rational};
use hps_core::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Resolved, RunConfig};
use crate::output::{to_value, Output};
use crate::CliError;

/// Row cap for interval and branch dumps.
pub const MAX_DUMP_ROWS: u128 = 1_000_000;
/// Cap on the number of deepest-level intervals box counting will handle.
pub const MAX_BOX_INTERVALS: u128 = 4_000_000;
/// Consecutive scales per box-slope window.
pub const SCALE_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Construct,
    Hierarchy,
    Dim,
    Probe,
    Measure,
    Experiment,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Construct => "construct",
            Command::Hierarchy => "hierarchy",
            Command::Dim => "dim",
            Command::Probe => "probe",
            Command::Measure => "measure",
            Command::Experiment => "experiment",
        }
    }
}

type Written = (String, Vec<PathBuf>);

pub fn execute(
    command: Command,
    cfg: &RunConfig,
    r: &Resolved,
    out: &Output,
) -> Result<Written, CliError> {
    match command {
        Command::Validate => validate(r, out),
        Command::Construct => construct(cfg, r, out),
        Command::Hierarchy => hierarchy(cfg, r, out),
        Command::Dim => dim(cfg, r, out),
        Command::Probe => probe(cfg, r, out),
        Command::Measure => measure(cfg, r, out),
        Command::Experiment => experiment(cfg, r, out),
    }
}

#[derive(Serialize)]
pub struct CatalogEntry {
    pub kind: &'static str,
    pub doc: &'static str,
}

#[derive(Serialize)]
pub struct Catalog {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub generators: Vec<CatalogEntry>,
    pub maps: Vec<CatalogEntry>,
}

/// Map variants and generator kinds, each sorted by kind.
pub fn list_catalog() -> Catalog {
    let mut generators: Vec<CatalogEntry> = GeneratorKind::ALL
        .iter()
        .map(|k| CatalogEntry {
            kind: k.name(),
            doc: k.doc(),
        })
        .collect();
    generators.sort_by_key(|e| e.kind);
    let mut maps: Vec<CatalogEntry> = MapSpec::CATALOG
        .iter()
        .map(|&(kind, doc)| CatalogEntry { kind, doc })
        .collect();
    maps.sort_by_key(|e| e.kind);
    Catalog {
        toolkit: crate::TOOLKIT,
        version: crate::VERSION,
        generators,
        maps,
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn rat(r: &Rational) -> String {
    rational::format(r)
}

fn failed_checks(checks: &CheckList) -> serde_json::Value {
    json!(checks.failures().collect::<Vec<_>>())
}

fn chi_for(cfg: &RunConfig, spec: &HpsSpec) -> Result<Rational, CliError> {
    match &cfg.chi {
        Some(c) => Ok(c.clone()),
        None => derive_chi(spec).map_err(|e| CliError::from_core("params", e.at("chi"))),
    }
}

/// Fails with the validation report as witness when the spec is invalid.
fn require_valid(spec: &HpsSpec) -> Result<(), CliError> {
    let report = validate_spec(spec);
    if report.ok {
        return Ok(());
    }
    let first = report.violations[0].detail.clone();
    Err(CliError::invariant(
        "params/validate",
        format!("{} violation(s); first: {first}", report.violations.len()),
        to_value(&report)?,
    ))
}

fn validate(r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let report = validate_spec(&r.spec);
    let chi = derive_chi(&r.spec).ok().map(|c| rat(&c));
    let files = vec![out.report(&json!({ "validation": report, "chi": chi }))?];
    if !report.ok {
        require_valid(&r.spec)?;
    }
    Ok((format!("valid, depth {}", r.spec.depth()), files))
}

struct Built {
    tree: LevelTree,
    star: StarSystem,
    chi: Rational,
    checks: CheckList,
}

fn build_star(cfg: &RunConfig, spec: &HpsSpec) -> Result<Built, CliError> {
    require_valid(spec)?;
    let tree =
        build_levels(spec).map_err(|e| CliError::from_core("construction", e.at("levels")))?;
    let star =
        star_system(spec, &tree).map_err(|e| CliError::from_core("construction", e.at("star")))?;
    let chi = chi_for(cfg, spec)?;
    let mut checks = verify_levels(spec, &tree);
    checks.extend(verify_star(spec, &tree, &star, &chi));
    Ok(Built {
        tree,
        star,
        chi,
        checks,
    })
}

fn construct(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let spec = &r.spec;
    let b = build_star(cfg, spec)?;
    let tree_rows: u128 = (0..=spec.depth()).map(|k| b.tree.count(k)).sum();
    let star_rows: u128 = (0..=b.star.depth()).map(|k| b.star.count(k)).sum();
    let dumped = tree_rows + star_rows <= MAX_DUMP_ROWS;
    let mut files = Vec::new();
    if dumped {
        let levels =
            (0..=spec.depth()).flat_map(|k| b.tree.level(k).into_iter().map(|i| (i, false)));
        let stars =
            (0..=b.star.depth()).flat_map(|k| b.star.level(k).into_iter().map(|i| (i, true)));
        files.push(out.series(
            "intervals",
            &["level", "word", "left", "right", "star"],
            levels.chain(stars).map(|(i, star)| {
                vec![
                    i.level.to_string(),
                    i.word_string(),
                    rat(&i.left),
                    rat(&i.right),
                    star.to_string(),
                ]
            }),
        )?);
    }
    let level_rows: Vec<_> = (0..=spec.depth())
        .map(|k| json!({"k": k, "count": b.tree.count(k).to_string(), "length": rat(b.tree.length(k))}))
        .collect();
    files.insert(
        0,
        out.report(&json!({
            "levels": level_rows,
            "star": b.star.summary(),
            "chi": rat(&b.chi),
            "checks": b.checks,
            "dump": {"rows": (tree_rows + star_rows).to_string(), "written": dumped, "cap": MAX_DUMP_ROWS.to_string()},
        }))?,
    );
    if !b.checks.all_passed() {
        return Err(CliError::invariant(
            "construction/verify",
            "construction invariants failed",
            failed_checks(&b.checks),
        ));
    }
    Ok((format!("{} checks passed", b.checks.checks.len()), files))
}

fn hierarchy(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let b = build_star(cfg, &r.spec)?;
    let h = build_hierarchy(&b.star, &b.chi)
        .map_err(|e| CliError::from_core("hierarchy", e.at("build")))?;
    let mut checks = b.checks;
    checks.extend(check_properties(&h));
    let lengths = level_length_report(&h);
    let ratios = ratio_sequences(&h);
    checks.extend(ratios.checks.clone());
    let mut length_check = Check::new("level_length_bounds");
    for row in &lengths.rows {
        length_check.observe(row.passed, || format!("m = {}", row.m));
    }
    checks.push(length_check);
    let subseq = subsequence_report(&h, &ratios, &r.epsilon, cfg.p)
        .map_err(|e| CliError::from_core("hierarchy", e.at("subsequence")))?;

    let mut files = Vec::new();
    let rows: u128 = (0..=h.depth()).map(|m| h.level_size(m)).sum();
    let dumped = rows <= MAX_DUMP_ROWS;
    if dumped {
        let branches = (0..=h.depth()).flat_map(|m| h.branches(m));
        files.push(out.series(
            "hierarchy",
            &["m", "index", "left", "right", "parent", "is_marker", "k"],
            branches.map(|b| {
                vec![
                    b.level.to_string(),
                    b.index.to_string(),
                    rat(&b.left),
                    rat(&b.right),
                    b.parent.map_or_else(String::new, |p| p.to_string()),
                    h.is_marker(b.level).to_string(),
                    h.locate(b.level).k.to_string(),
                ]
            }),
        )?);
    }
    files.push(out.series(
        "level_lengths",
        &["m", "k", "marker", "total", "lower", "upper", "passed"],
        lengths.rows.iter().map(|row| {
            vec![
                row.m.to_string(),
                row.k.to_string(),
                row.marker.to_string(),
                rat(&row.total),
                rat(&row.lower),
                rat(&row.upper),
                row.passed.to_string(),
            ]
        }),
    )?);
    files.push(out.series(
        "ratios",
        &["m", "k", "Lambda", "lambda", "Gamma", "gamma"],
        ratios.rows.iter().map(|row| {
            vec![
                row.m.to_string(),
                row.k.to_string(),
                rat(&row.big_lambda),
                rat(&row.lambda),
                rat(&row.big_gamma),
                rat(&row.gamma),
            ]
        }),
    )?);
    files.push(out.series(
        "subsequence",
        &[
            "k",
            "a",
            "length_root",
            "small_gap_fraction",
            "gap_product_root",
        ],
        subseq.rows.iter().map(|row| {
            vec![
                row.k.to_string(),
                row.a.to_string(),
                num(row.length_root),
                num(row.small_gap_fraction),
                num(row.gap_product_root),
            ]
        }),
    )?);
    files.insert(
        0,
        out.report(&json!({
            "hierarchy": h.summary(),
            "checks": checks,
            "level_lengths": lengths,
            "zero_gap_levels": ratios.zero_gap_levels,
            "subsequence": subseq,
            "dump": {"rows": rows.to_string(), "written": dumped, "cap": MAX_DUMP_ROWS.to_string()},
        }))?,
    );
    if !checks.all_passed() {
        return Err(CliError::invariant(
            "hierarchy/verify",
            "hierarchy invariants failed",
            failed_checks(&checks),
        ));
    }
    Ok((
        format!(
            "M = {}, {} levels, {} checks passed",
            h.modulus(),
            h.depth() + 1,
            checks.checks.len()
        ),
        files,
    ))
}

fn box_series(out: &Output, name: &str, report: &BoxReport) -> Result<PathBuf, CliError> {
    out.series(
        name,
        &["delta", "log_inv_delta", "count", "log_count"],
        report.rows.iter().map(|row| {
            vec![
                num(row.delta),
                num(row.log_inv_delta),
                row.count.to_string(),
                num(row.log_count),
            ]
        }),
    )
}

fn formula_series(out: &Output, report: &FormulaReport) -> Result<PathBuf, CliError> {
    out.series(
        "formula",
        &["k", "t_k"],
        report
            .sequence
            .iter()
            .map(|&(k, t)| vec![k.to_string(), num(t)]),
    )
}

fn check_box_size(spec: &HpsSpec) -> Result<(), CliError> {
    let count = spec.count_at(spec.depth());
    if count > MAX_BOX_INTERVALS {
        return Err(CliError::usage(
            "dimension/box",
            format!("{count} deepest intervals exceed the box-count cap {MAX_BOX_INTERVALS}; lower the depth"),
        ));
    }
    Ok(())
}

fn dim(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let spec = &r.spec;
    require_valid(spec)?;
    if r.formula_spec.depth() != spec.depth() {
        require_valid(&r.formula_spec)?;
    }
    check_box_size(spec)?;
    let tree =
        build_levels(spec).map_err(|e| CliError::from_core("construction", e.at("levels")))?;
    // The star cross-check is only available when the formula runs on the
    // constructed spec itself.
    let star = if r.formula_spec.depth() == spec.depth() && spec.depth() >= 2 {
        Some(
            star_system(spec, &tree)
                .map_err(|e| CliError::from_core("construction", e.at("star")))?,
        )
    } else {
        None
    };
    let formula = formula_dim_tail(&r.formula_spec, star.as_ref(), r.tail)
        .map_err(|e| CliError::from_core("dimension", e.at("formula")))?;
    let pairs = tree.level_pairs(spec.depth());
    let box_set = box_dim_exact(&pairs, &r.scales)
        .map_err(|e| CliError::from_core("dimension", e.at("box_set")))?;
    let identity = *cfg.map.spec() == MapSpec::Identity;
    let box_image = if identity {
        None
    } else {
        let images: Vec<(f64, f64)> = tree
            .level_pairs_f64(spec.depth())
            .iter()
            .map(|&(a, b)| (cfg.map.eval(a), cfg.map.increment(a, b - a)))
            .collect();
        let scales: Vec<f64> = r.scales.iter().map(rational::to_f64).collect();
        Some(
            box_dim(&images, &scales)
                .map_err(|e| CliError::from_core("dimension", e.at("box_image")))?,
        )
    };

    let mut files = vec![
        formula_series(out, &formula)?,
        box_series(out, "box_set", &box_set)?,
    ];
    if let Some(b) = &box_image {
        files.push(box_series(out, "box_image", b)?);
    }
    let set_windows = box_set.window_slopes(SCALE_WINDOW);
    let image_windows = box_image.as_ref().map(|b| b.window_slopes(SCALE_WINDOW));
    files.insert(
        0,
        out.report(&json!({
            "formula": formula,
            "box_set": box_set,
            "box_set_window_slopes": set_windows,
            "box_image": box_image,
            "box_image_window_slopes": image_windows,
        }))?,
    );
    if let Some(check) = formula.star_cross_check.as_ref().filter(|c| !c.passed) {
        return Err(CliError::invariant(
            "dimension/formula",
            "formula disagrees with star lengths",
            to_value(check)?,
        ));
    }
    Ok((
        format!(
            "formula tail {:.6}, box slope {:.6}",
            formula.tail, box_set.fit.slope
        ),
        files,
    ))
}

fn probe(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let env = distortion_probe(&cfg.map, &r.probe)
        .map_err(|e| CliError::from_core("qsmaps", e.at("probe")))?;
    let files = vec![
        out.report(&json!({ "map": cfg.map, "envelope": env }))?,
        out.series(
            "eta_profile",
            &["t", "ratio"],
            env.eta_profile.iter().map(|[t, s]| vec![num(*t), num(*s)]),
        )?,
    ];
    // Relative slack for rounding in the envelope evaluation.
    if !env.contains_all(1e-9) {
        return Err(CliError::invariant(
            "qsmaps/probe",
            "a sample lies outside its fitted envelope",
            json!({"p": env.p, "q": env.q, "beta": env.beta}),
        ));
    }
    Ok((
        format!("p = {:.6}, q = {:.6}, beta = {:.6}", env.p, env.q, env.beta),
        files,
    ))
}

fn measure(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    let b = build_star(cfg, &r.spec)?;
    let h = build_hierarchy(&b.star, &b.chi)
        .map_err(|e| CliError::from_core("hierarchy", e.at("build")))?;
    let img = push_hierarchy(&cfg.map, &h, None);
    let mut per_d = Vec::new();
    let mut ratio_rows = Vec::new();
    let mut ball_rows = Vec::new();
    for &d in &r.d_grid {
        let mu = build_mu(&img, d).map_err(|e| CliError::from_core("measure", e.at("mu")))?;
        let scan = ratio_scan(&mu, &img, cfg.levels_to_check.as_deref())
            .map_err(|e| CliError::from_core("measure", e.at("ratio_scan")))?;
        let balls = ball_scan(
            &mu,
            &img,
            cfg.ball.points,
            cfg.ball.radii_per_point,
            cfg.seed,
        )
        .map_err(|e| CliError::from_core("measure", e.at("ball_scan")))?;
        let totals: Vec<f64> = (0..=mu.depth()).map(|m| mu.level_total(m)).collect();
        let drift = totals.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
        for row in &scan.rows {
            ratio_rows.push(vec![
                num(d),
                row.level.to_string(),
                num(row.max_ratio),
                row.argmax.to_string(),
            ]);
        }
        for row in &balls.rows {
            ball_rows.push(vec![
                num(d),
                num(row.x),
                row.level.to_string(),
                num(row.r),
                num(row.mass),
                num(row.ratio),
                row.branches_met.to_string(),
            ]);
        }
        per_d.push(json!({
            "d": d,
            "max_mass_drift": drift,
            "ratio_scan": scan,
            "ball_scan": {
                "max_branches_met": balls.max_branches_met,
                "branch_bound": balls.branch_bound,
                "liminf_estimates": balls.liminf_estimates,
            },
        }));
    }
    let files = vec![
        out.report(&json!({ "hierarchy": h.summary(), "per_d": per_d }))?,
        out.series(
            "ratio_scan",
            &["d", "level", "max_ratio", "argmax"],
            ratio_rows,
        )?,
        out.series(
            "ball_scan",
            &["d", "x", "level", "r", "mass", "ratio", "branches_met"],
            ball_rows,
        )?,
    ];
    Ok((
        format!("{} d values over {} levels", r.d_grid.len(), h.depth() + 1),
        files,
    ))
}

fn experiment(cfg: &RunConfig, r: &Resolved, out: &Output) -> Result<Written, CliError> {
    check_box_size(&r.spec)?;
    if r.formula_spec.depth() != r.spec.depth() {
        require_valid(&r.formula_spec)?;
    }
    let mut ec = ExperimentConfig::new(r.spec.clone(), cfg.map.clone());
    ec.formula_spec = (r.formula_spec.depth() != r.spec.depth()).then(|| r.formula_spec.clone());
    ec.chi = cfg.chi.clone();
    ec.d_grid = r.d_grid.clone();
    ec.scales = r.scales.clone();
    ec.tail = r.tail;
    ec.threshold = cfg.threshold;
    ec.levels_to_check = cfg.levels_to_check.clone();
    ec.ball_points = cfg.ball.points;
    ec.radii_per_point = cfg.ball.radii_per_point;
    ec.seed = cfg.seed;
    ec.scale_window = SCALE_WINDOW;
    let report = minimality_experiment(&ec).map_err(|e| CliError::from_core("dimension", e))?;

    let trend = report.per_d.iter().flat_map(|v| {
        v.ratio_scan.rows.iter().map(move |row| {
            vec![
                num(v.d),
                row.level.to_string(),
                num(row.max_ratio),
                row.argmax.to_string(),
            ]
        })
    });
    let files = vec![
        out.report(&report)?,
        formula_series(out, &report.formula)?,
        box_series(out, "box_set", &report.box_set)?,
        box_series(out, "box_image", &report.box_image)?,
        out.series("d_trend", &["d", "level", "max_ratio", "argmax"], trend)?,
    ];
    if !report.checks.all_passed() {
        return Err(CliError::invariant(
            "dimension/experiment",
            "pipeline invariants failed",
            failed_checks(&report.checks),
        ));
    }
    let bounded: Vec<String> = report
        .per_d
        .iter()
        .map(|v| {
            format!(
                "d={}:{}",
                v.d,
                if v.bounded { "bounded" } else { "growing" }
            )
        })
        .collect();
    Ok((
        format!(
            "formula tail {:.4}, f(E) slope {:.4}, {}",
            report.formula.tail,
            report.box_image.fit.slope,
            bounded.join(" ")
        ),
        files,
    ))
}
