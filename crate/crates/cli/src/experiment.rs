//! Batch experiments: generate a family of instances, solve the ground
//! truth on a grid of right-hand-side changes, run every method and write
//! the tables and charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use copsense::exact::DEFAULT_NODE_BUDGET;
use copsense::model::{generate_comb, generate_sslp, generate_ssqp, read_graph, read_instance, reduce_edge_coloring, Graph, MbqpInstance};
use copsense::sensitivity::{evaluate_instance, EvalOptions, Method, SensitivityReport};
use copsense::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::svg::render_chart;

pub const SEED_ENV: &str = "COPSENSE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "COMB", alias = "comb")]
    Comb,
    #[serde(rename = "SSLP", alias = "sslp")]
    Sslp,
    #[serde(rename = "SSQP", alias = "ssqp")]
    Ssqp,
    EdgeColor,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sizes {
    /// Vertices per side of the COMB graph.
    pub v: usize,
    /// COMB cardinality bound.
    pub p: f64,
    /// Items of SSLP/SSQP.
    pub n: usize,
    /// Resource rows of SSLP/SSQP.
    pub m: usize,
    /// Colors of the edge-coloring program; the graph's maximum degree when
    /// absent.
    pub colors: Option<usize>,
    /// Right-hand side of the color-count row.
    pub rhs: f64,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            v: 5,
            p: 2.0,
            n: 6,
            m: 2,
            colors: None,
            rhs: 0.0,
        }
    }
}

/// Which raw constraints are shifted and by which amounts. Defaults depend
/// on the family: the cardinality row with `{1, …, 10}` for COMB, the
/// resource rows with `{0, …, 3}` for SSLP/SSQP, the color-count row for
/// EdgeColor and the first row for File.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: Option<Vec<usize>>,
    pub values: Option<Vec<f64>>,
    /// Above this many points the product grid is replaced by `samples`
    /// uniform draws.
    pub max_exhaustive: usize,
    pub samples: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: None,
            values: None,
            max_exhaustive: 1024,
            samples: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceOverrides {
    pub sdp_tol: Option<f64>,
    pub sdp_max_iter: Option<usize>,
    pub fit_tol: Option<f64>,
    pub fit_max_iter: Option<usize>,
    pub exact_budget: Option<usize>,
    pub eps0: Option<f64>,
    pub r: Option<f64>,
    /// Slack allowed by the weak-duality check of the summary.
    pub weak_duality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub csv: String,
    pub json: String,
    pub timings: String,
    pub gaps: String,
    /// Write one chart per instance.
    pub svg: bool,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            dir: PathBuf::from("out"),
            csv: "report.csv".into(),
            json: "report.json".into(),
            timings: "timings.csv".into(),
            gaps: "gaps.csv".into(),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_densities")]
    pub densities: Vec<f64>,
    #[serde(default)]
    pub sizes: Sizes,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "yes")]
    pub ground_truth: bool,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub output: OutputPaths,
    /// Instance files of the File family.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// Graphs of the EdgeColor family: a graph file, or one of `petersen`,
    /// `K<k>`, `P<k>`.
    #[serde(default)]
    pub graphs: Vec<String>,
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_densities() -> Vec<f64> {
    vec![0.3, 0.5, 0.7]
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn new(family: Family) -> Self {
        ExperimentConfig {
            family,
            seeds: default_seeds(),
            densities: default_densities(),
            sizes: Sizes::default(),
            grid: GridSpec::default(),
            methods: default_methods(),
            ground_truth: true,
            tolerances: ToleranceOverrides::default(),
            output: OutputPaths::default(),
            files: Vec::new(),
            graphs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Replaces the seed list by the comma-separated list in
    /// `COPSENSE_SEED`, when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seeds = parse_seeds(&s)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match self.family {
            Family::Comb | Family::Sslp | Family::Ssqp => {
                if self.seeds.is_empty() || self.densities.is_empty() {
                    return bad("generated families need at least one seed and one density".into());
                }
                if let Some(d) = self.densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
                    return bad(format!("density {d} outside [0, 1]"));
                }
            }
            Family::File if self.files.is_empty() => return bad("File family without files".into()),
            Family::EdgeColor if self.graphs.is_empty() => return bad("EdgeColor family without graphs".into()),
            _ => {}
        }
        if let Some(rows) = &self.grid.rows {
            if rows.is_empty() {
                return bad("grid has no rows".into());
            }
        }
        if let Some(values) = &self.grid.values {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return bad("grid values must be finite and nonempty".into());
            }
        }
        if self.grid.samples == 0 {
            return bad("grid sample count must be positive".into());
        }
        // The exact solver enumerates binaries; keep ground truth within reach.
        if self.ground_truth {
            let (vars, rows) = match self.family {
                Family::Comb => (2 * self.sizes.v, 0),
                Family::Sslp | Family::Ssqp => (2 * self.sizes.n, self.sizes.m),
                _ => (0, 0),
            };
            if vars > 40 || rows > 10 {
                return bad(format!("{vars} variables and {rows} rows exceed the exact solver's reach"));
            }
        }
        Ok(())
    }

    fn eval_options(&self) -> EvalOptions {
        let mut opts = EvalOptions {
            methods: self.methods.clone(),
            ground_truth: self.ground_truth,
            ..EvalOptions::default()
        };
        let t = &self.tolerances;
        if let Some(v) = t.sdp_tol {
            opts.sdp.tol = v;
        }
        if let Some(v) = t.sdp_max_iter {
            opts.sdp.max_iter = v;
        }
        if let Some(v) = t.fit_tol {
            opts.fit_sdp.tol = v;
        }
        if let Some(v) = t.fit_max_iter {
            opts.fit_sdp.max_iter = v;
        }
        opts.exact_budget = t.exact_budget.unwrap_or(DEFAULT_NODE_BUDGET);
        if let Some(v) = t.eps0 {
            opts.eps0 = v;
        }
        if let Some(v) = t.r {
            opts.r = v;
        }
        opts
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: std::result::Result<Vec<u64>, _> = s.split(',').map(|t| t.trim().parse::<u64>()).collect();
    match seeds {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::InvalidArgument(format!("cannot parse seed list {s:?}"))),
    }
}

/// Parses `petersen`, `K<k>` (complete) or `P<k>` (path); anything else is
/// read as a graph file.
pub fn resolve_graph(spec: &str) -> Result<Graph> {
    let lower = spec.to_ascii_lowercase();
    if lower == "petersen" {
        return Ok(Graph::petersen());
    }
    if let Some(k) = lower.strip_prefix('k').and_then(|k| k.parse().ok()) {
        return Ok(Graph::complete(k));
    }
    if let Some(k) = lower.strip_prefix('p').and_then(|k| k.parse().ok()) {
        return Ok(Graph::path(k));
    }
    read_graph(Path::new(spec))
}

/// One instance of an experiment with its grid.
#[derive(Debug, Clone)]
pub struct Case {
    pub id: String,
    pub density: Option<f64>,
    pub instance: MbqpInstance,
    /// Shifted standard rows, in grid order.
    pub rows: Vec<usize>,
    pub grid: Vec<DVector<f64>>,
}

/// Case that could not be built.
#[derive(Debug, Clone, Serialize)]
pub struct CaseFailure {
    pub id: String,
    pub error: String,
}

fn raw_rows(family: Family, spec: &GridSpec, inst: &MbqpInstance, sizes: &Sizes) -> Vec<usize> {
    if let Some(rows) = &spec.rows {
        return rows.clone();
    }
    match family {
        Family::Sslp | Family::Ssqp => (0..sizes.m).collect(),
        Family::EdgeColor => vec![inst.slack_map.constraint_rows.len().saturating_sub(1)],
        _ => vec![0],
    }
}

fn grid_values(family: Family, spec: &GridSpec) -> Vec<f64> {
    if let Some(v) = &spec.values {
        return v.clone();
    }
    match family {
        Family::Comb => (1..=10).map(f64::from).collect(),
        _ => vec![0.0, 1.0, 2.0, 3.0],
    }
}

/// Product grid over `rows × values`, or `spec.samples` uniform draws from
/// it when it has more than `spec.max_exhaustive` points.
pub fn build_grid(inst: &MbqpInstance, rows: &[usize], values: &[f64], spec: &GridSpec, seed: u64) -> Result<Vec<DVector<f64>>> {
    let m = inst.num_rows();
    let std_rows: Vec<usize> = rows
        .iter()
        .map(|&r| {
            inst.constraint_row(r)
                .ok_or_else(|| Error::InvalidArgument(format!("instance has no raw constraint {r}")))
        })
        .collect::<Result<_>>()?;
    let total = (values.len() as f64).powi(rows.len() as i32);
    let point = |choice: &[usize]| {
        let mut d = DVector::zeros(m);
        for (&r, &k) in std_rows.iter().zip(choice) {
            d[r] = values[k];
        }
        d
    };
    if total <= spec.max_exhaustive as f64 {
        let mut out = Vec::new();
        let mut choice = vec![0usize; rows.len()];
        loop {
            out.push(point(&choice));
            let mut i = rows.len();
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                choice[i] += 1;
                if choice[i] < values.len() {
                    break;
                }
                choice[i] = 0;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.samples)
        .map(|_| {
            let choice: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..values.len())).collect();
            point(&choice)
        })
        .collect())
}

fn family_tag(f: Family) -> &'static str {
    match f {
        Family::Comb => "comb",
        Family::Sslp => "sslp",
        Family::Ssqp => "ssqp",
        Family::EdgeColor => "edgecolor",
        Family::File => "file",
    }
}

/// Instances and grids of a configuration, in a fixed order.
pub fn build_cases(cfg: &ExperimentConfig) -> (Vec<Case>, Vec<CaseFailure>) {
    let mut cases = Vec::new();
    let mut failures = Vec::new();
    let mut push = |id: String, density: Option<f64>, seed: u64, made: Result<MbqpInstance>| {
        let built = made.and_then(|inst| {
            let rows = raw_rows(cfg.family, &cfg.grid, &inst, &cfg.sizes);
            let values = grid_values(cfg.family, &cfg.grid);
            let grid = build_grid(&inst, &rows, &values, &cfg.grid, seed)?;
            Ok(Case {
                id: id.clone(),
                density,
                rows,
                grid,
                instance: inst,
            })
        });
        match built {
            Ok(c) => cases.push(c),
            Err(e) => failures.push(CaseFailure { id, error: e.to_string() }),
        }
    };
    let s = &cfg.sizes;
    match cfg.family {
        Family::Comb | Family::Sslp | Family::Ssqp => {
            for &d in &cfg.densities {
                for &seed in &cfg.seeds {
                    let id = format!("{}-d{d}-s{seed}", family_tag(cfg.family));
                    let inst = match cfg.family {
                        Family::Comb => generate_comb(seed, d, s.v, s.p),
                        Family::Sslp => generate_sslp(seed, d, s.n, s.m),
                        _ => generate_ssqp(seed, d, s.n, s.m),
                    };
                    push(id, Some(d), seed, inst);
                }
            }
        }
        Family::EdgeColor => {
            for (k, spec) in cfg.graphs.iter().enumerate() {
                let inst = resolve_graph(spec).and_then(|g| {
                    let colors = s.colors.unwrap_or_else(|| g.max_degree());
                    reduce_edge_coloring(&g, colors, s.rhs)
                });
                let name: String = spec.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                push(format!("edgecolor-{k}-{name}"), None, k as u64, inst);
            }
        }
        Family::File => {
            for (k, path) in cfg.files.iter().enumerate() {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
                push(format!("file-{k}-{stem}"), None, k as u64, read_instance(path));
            }
        }
    }
    (cases, failures)
}

/// Mean relative gap of one method at one grid point, over one density or
/// all. `delta` lists the changes of the shifted raw rows only, so that
/// instances with different row counts pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCell {
    pub method: Method,
    pub density: Option<f64>,
    pub delta: Vec<f64>,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub report: SensitivityReport,
    pub failures: Vec<CaseFailure>,
    /// Per density (in configuration order) then overall (`density: None`).
    pub gaps: Vec<GapCell>,
    pub weak_duality_violations: usize,
    pub instances: usize,
}

/// Mean relative gaps of every method except Shor1, which is the
/// normalization and always has gap 1. Rows with an undefined gap are
/// skipped.
pub fn gap_table(report: &SensitivityReport, cases: &[Case], methods: &[Method]) -> Vec<GapCell> {
    let mut densities: Vec<Option<f64>> = Vec::new();
    for c in cases {
        if c.density.is_some() && !densities.contains(&c.density) {
            densities.push(c.density);
        }
    }
    densities.push(None);
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    methods.retain(|m| *m != Method::Shor1);
    let key = |case: &Case, delta: &[f64]| -> Vec<f64> {
        case.rows
            .iter()
            .filter_map(|&r| case.instance.constraint_row(r))
            .map(|r| delta[r])
            .collect()
    };
    let mut out = Vec::new();
    for density in densities {
        for &method in &methods {
            let mut cells: Vec<(Vec<f64>, f64, usize)> = Vec::new();
            for case in cases.iter().filter(|c| density.is_none() || c.density == density) {
                for r in report.rows.iter().filter(|r| r.method == method && r.instance == case.id) {
                    let Some(g) = r.rel_gap.filter(|g| g.is_finite()) else {
                        continue;
                    };
                    let k = key(case, &r.delta);
                    match cells.iter_mut().find(|c| c.0 == k) {
                        Some(c) => {
                            c.1 += g;
                            c.2 += 1;
                        }
                        None => cells.push((k, g, 1)),
                    }
                }
            }
            cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            out.extend(cells.into_iter().map(|(delta, sum, count)| GapCell {
                method,
                density,
                delta,
                mean: sum / count as f64,
                count,
            }));
        }
    }
    out
}

pub fn gaps_csv(gaps: &[GapCell]) -> String {
    let mut out = String::from("method,density,delta,mean_gap,count\n");
    for g in gaps {
        let density = g.density.map(|d| d.to_string()).unwrap_or_else(|| "all".into());
        let delta: Vec<String> = g.delta.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{density},{},{},{}", g.method.name(), delta.join(";"), g.mean, g.count);
    }
    out
}

/// Writes through a temporary file in the same directory so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs the experiment on `jobs` threads (0 picks the default) and writes
/// every output file. Per-instance failures are recorded in the report and
/// do not stop the run.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let opts = cfg.eval_options();
    let (cases, failures) = build_cases(cfg);
    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_case: Vec<Result<SensitivityReport>> = pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let rep = evaluate_instance(&case.id, &case.instance, &case.grid, &opts);
                write_atomic(&out_dir.join(format!("{}.json", case.id)), &serde_json::to_string_pretty(&rep)?)?;
                if cfg.output.svg {
                    write_atomic(&out_dir.join(format!("{}.svg", case.id)), &render_chart(&case.id, case, &rep))?;
                }
                Ok(rep)
            })
            .collect()
    });

    let mut report = SensitivityReport::default();
    let mut failures = failures;
    for (case, rep) in cases.iter().zip(per_case) {
        match rep {
            Ok(r) => report.extend(r),
            Err(e) => failures.push(CaseFailure {
                id: case.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let gaps = gap_table(&report, &cases, &cfg.methods);
    let tol = cfg.tolerances.weak_duality.unwrap_or(1e-4);
    let outcome = ExperimentOutcome {
        weak_duality_violations: report.weak_duality_violations(tol).len(),
        instances: cases.len(),
        report,
        failures,
        gaps,
    };
    write_atomic(&out_dir.join(&cfg.output.csv), &outcome.report.to_csv())?;
    write_atomic(&out_dir.join(&cfg.output.timings), &outcome.report.timings_csv())?;
    write_atomic(&out_dir.join(&cfg.output.gaps), &gaps_csv(&outcome.gaps))?;
    write_atomic(&out_dir.join(&cfg.output.json), &serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}
