//! Benchmark matrix over problems and radius variants, with performance
//! profiles.
//!
//! A run is solved when it stops at first order within its budgets. For a
//! cost metric, the ratio of variant `s` on problem `p` is
//! `r = cost(p, s) / min_s cost(p, s)` (infinite for failures) and its
//! profile is `rho_s(tau) = |{p : r <= tau}| / |P|`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{model_for, solve, SolveOptions, SolveReport, StopStatus, TrParams};
use crate::hessian::HessianMode;
use crate::problems::find_builtin;

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_EVAL_BUDGET: u64 = 100_000;
/// Floor on recorded wall time so every cost stays positive.
pub const MIN_TIME_MS: f64 = 1e-3;
pub const STANDARD_VARIANTS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("no runs requested")]
    EmptySpecs,
    #[error("no variant solved any problem; profiles are undefined")]
    AllFailed,
    #[error("nothing to emit: profile list is empty")]
    EmptyProfiles,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{0}")]
    Parse(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem: String,
    pub alpha: f64,
    pub beta: f64,
    pub hessian: HessianMode,
    pub memory: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub eval_budget: u64,
}

impl RunSpec {
    pub fn new(problem: &str, alpha: f64, beta: f64, hessian: HessianMode) -> Self {
        Self {
            problem: problem.to_string(),
            alpha,
            beta,
            hessian,
            memory: 5,
            eps: 1e-6,
            max_iter: DEFAULT_MAX_ITER,
            eval_budget: DEFAULT_EVAL_BUDGET,
        }
    }

    pub fn variant(&self) -> String {
        variant_label(self.hessian, self.alpha, self.beta)
    }
}

/// `trunk_<a>_<b>` for exact Hessians, `trunk_bfgs_<a>_<b>` and
/// `trunk_sr1_<a>_<b>` for the limited-memory models.
pub fn variant_label(mode: HessianMode, alpha: f64, beta: f64) -> String {
    let prefix = match mode {
        HessianMode::Exact => "trunk",
        HessianMode::Lbfgs => "trunk_bfgs",
        HessianMode::Lsr1 => "trunk_sr1",
        HessianMode::Zero => "trunk_zero",
        HessianMode::Scripted => "trunk_scripted",
    };
    format!("{prefix}_{alpha}_{beta}")
}

/// Parses `"a,b;a,b;..."`.
pub fn parse_variants(s: &str) -> Result<Vec<(f64, f64)>, BenchError> {
    let bad = || BenchError::Parse(format!("variants must look like `0,0;1,1`, got `{s}`"));
    let out: Vec<(f64, f64)> = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair.split_once(',').ok_or_else(bad)?;
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok((a, b))
        })
        .collect::<Result<_, BenchError>>()?;
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// One spec per (problem, variant) pair.
pub fn specs_for(
    problems: &[String],
    variants: &[(f64, f64)],
    hessian: HessianMode,
    memory: usize,
    eps: f64,
) -> Vec<RunSpec> {
    let mut specs = Vec::new();
    for name in problems {
        for &(a, b) in variants {
            let mut s = RunSpec::new(name, a, b, hessian);
            s.memory = memory;
            s.eps = eps;
            specs.push(s);
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub status: String,
    pub cost_f: u64,
    pub cost_g: u64,
    pub time_ms: f64,
    pub iters: usize,
}

impl Cell {
    pub fn solved(&self) -> bool {
        self.status == StopStatus::FirstOrder.as_str()
    }
}

/// Results keyed by `(problem, variant)`, both sorted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostMatrix {
    pub problems: Vec<String>,
    pub variants: Vec<String>,
    pub cells: BTreeMap<(String, String), Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixRow {
    problem: String,
    variant: String,
    status: String,
    cost_f: u64,
    cost_g: u64,
    time_ms: f64,
    iters: usize,
}

impl CostMatrix {
    pub fn insert(&mut self, problem: &str, variant: &str, cell: Cell) {
        self.cells.insert((problem.to_string(), variant.to_string()), cell);
        let problems: BTreeSet<&String> = self.cells.keys().map(|k| &k.0).collect();
        let variants: BTreeSet<&String> = self.cells.keys().map(|k| &k.1).collect();
        self.problems = problems.into_iter().cloned().collect();
        self.variants = variants.into_iter().cloned().collect();
    }

    pub fn get(&self, problem: &str, variant: &str) -> Option<&Cell> {
        self.cells.get(&(problem.to_string(), variant.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for ((problem, variant), c) in &self.cells {
            w.serialize(MatrixRow {
                problem: problem.clone(),
                variant: variant.clone(),
                status: c.status.clone(),
                cost_f: c.cost_f,
                cost_g: c.cost_g,
                time_ms: c.time_ms,
                iters: c.iters,
            })
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self, BenchError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut m = Self::default();
        for row in r.deserialize::<MatrixRow>() {
            let row = row.map_err(|e| csv_err(path, e))?;
            m.cells.insert(
                (row.problem, row.variant),
                Cell {
                    status: row.status,
                    cost_f: row.cost_f,
                    cost_g: row.cost_g,
                    time_ms: row.time_ms,
                    iters: row.iters,
                },
            );
        }
        let problems: BTreeSet<String> = m.cells.keys().map(|k| k.0.clone()).collect();
        let variants: BTreeSet<String> = m.cells.keys().map(|k| k.1.clone()).collect();
        m.problems = problems.into_iter().collect();
        m.variants = variants.into_iter().collect();
        Ok(m)
    }

    pub fn solved_count(&self, variant: &str) -> usize {
        self.problems
            .iter()
            .filter(|p| self.get(p, variant).is_some_and(Cell::solved))
            .count()
    }
}

fn csv_err(path: &Path, e: csv::Error) -> BenchError {
    BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub variant: String,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
    pub time_ms: f64,
}

fn execute(spec: &RunSpec) -> RunOutcome {
    let start = Instant::now();
    let result = (|| {
        let problem = find_builtin(&spec.problem).map_err(|e| e.to_string())?;
        let params = TrParams::default().with_alpha_beta(spec.alpha, spec.beta);
        let mut model = model_for(&problem, spec.hessian, spec.memory, 0).map_err(|e| e.to_string())?;
        let mut opts = SolveOptions::new(spec.eps, spec.max_iter);
        opts.eval_budget = Some(spec.eval_budget);
        solve(&problem, &params, &mut model, &opts).map_err(|e| e.to_string())
    })();
    let time_ms = (start.elapsed().as_secs_f64() * 1e3).max(MIN_TIME_MS);
    let (report, error) = match result {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    RunOutcome {
        variant: spec.variant(),
        spec: spec.clone(),
        report,
        error,
        time_ms,
    }
}

/// Runs every spec on the rayon pool. Outcomes come back sorted by
/// `(problem, variant)`.
pub fn run_matrix(specs: &[RunSpec]) -> Result<(CostMatrix, Vec<RunOutcome>), BenchError> {
    if specs.is_empty() {
        return Err(BenchError::EmptySpecs);
    }
    for s in specs {
        find_builtin(&s.problem).map_err(|_| BenchError::UnknownProblem(s.problem.clone()))?;
    }
    let mut outcomes: Vec<RunOutcome> = specs.par_iter().map(execute).collect();
    outcomes.sort_by(|a, b| (&a.spec.problem, &a.variant).cmp(&(&b.spec.problem, &b.variant)));
    let mut m = CostMatrix::default();
    for o in &outcomes {
        let cell = match &o.report {
            Some(r) => Cell {
                status: r.status.as_str().to_string(),
                cost_f: r.evals.n_f,
                cost_g: r.evals.n_g,
                time_ms: o.time_ms,
                iters: r.iterations,
            },
            None => Cell {
                status: "error".to_string(),
                cost_f: 0,
                cost_g: 0,
                time_ms: o.time_ms,
                iters: 0,
            },
        };
        m.cells.insert((o.spec.problem.clone(), o.variant.clone()), cell);
    }
    let problems: BTreeSet<String> = m.cells.keys().map(|k| k.0.clone()).collect();
    let variants: BTreeSet<String> = m.cells.keys().map(|k| k.1.clone()).collect();
    m.problems = problems.into_iter().collect();
    m.variants = variants.into_iter().collect();
    Ok((m, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fevals,
    Gevals,
    /// Wall time; not reproducible between runs.
    Time,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Fevals, Metric::Gevals, Metric::Time];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fevals => "fevals",
            Self::Gevals => "gevals",
            Self::Time => "time",
        }
    }

    fn cost(self, c: &Cell) -> f64 {
        match self {
            Self::Fevals => c.cost_f as f64,
            Self::Gevals => c.cost_g as f64,
            Self::Time => c.time_ms.max(MIN_TIME_MS),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fevals" => Ok(Self::Fevals),
            "gevals" => Ok(Self::Gevals),
            "time" => Ok(Self::Time),
            other => Err(BenchError::Parse(format!(
                "unknown metric `{other}` (expected fevals, gevals or time)"
            ))),
        }
    }
}

/// Right-continuous step function: `rho(tau) = values[i]` for
/// `breakpoints[i] <= tau < breakpoints[i+1]`, and 0 below the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub variant: String,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn value_at(&self, tau: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= tau);
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn terminal(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

pub fn performance_profile(m: &CostMatrix, metric: Metric) -> Result<Vec<Profile>, BenchError> {
    let n_problems = m.problems.len();
    if n_problems == 0 || !m.cells.values().any(Cell::solved) {
        return Err(BenchError::AllFailed);
    }
    let mut ratios: BTreeMap<&str, Vec<f64>> = m.variants.iter().map(|v| (v.as_str(), Vec::new())).collect();
    for p in &m.problems {
        let best = m
            .variants
            .iter()
            .filter_map(|v| m.get(p, v).filter(|c| c.solved()).map(|c| metric.cost(c)))
            .fold(f64::INFINITY, f64::min);
        for v in &m.variants {
            let r = match m.get(p, v) {
                Some(c) if c.solved() => metric.cost(c) / best,
                _ => f64::INFINITY,
            };
            ratios.get_mut(v.as_str()).expect("variant present").push(r);
        }
    }
    let profiles = m
        .variants
        .iter()
        .map(|v| {
            let mut rs: Vec<f64> = ratios[v.as_str()].iter().copied().filter(|r| r.is_finite()).collect();
            rs.sort_by(f64::total_cmp);
            let mut breakpoints: Vec<f64> = Vec::new();
            let mut values: Vec<f64> = Vec::new();
            for (i, r) in rs.iter().enumerate() {
                let frac = (i + 1) as f64 / n_problems as f64;
                if breakpoints.last() == Some(r) {
                    *values.last_mut().expect("nonempty") = frac;
                } else {
                    breakpoints.push(*r);
                    values.push(frac);
                }
            }
            Profile {
                variant: v.clone(),
                breakpoints,
                values,
            }
        })
        .collect();
    Ok(profiles)
}

/// `tau` grid shared by all profiles: 1 and every breakpoint.
fn tau_grid(profiles: &[Profile]) -> Vec<f64> {
    let mut taus: Vec<f64> = profiles.iter().flat_map(|p| p.breakpoints.iter().copied()).collect();
    taus.push(1.0);
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

pub fn profile_csv(profiles: &[Profile]) -> Result<String, BenchError> {
    if profiles.is_empty() {
        return Err(BenchError::EmptyProfiles);
    }
    let mut out = String::from("tau");
    for p in profiles {
        out.push(',');
        out.push_str(&p.variant);
    }
    out.push('\n');
    for tau in tau_grid(profiles) {
        let _ = write!(out, "{tau}");
        for p in profiles {
            let _ = write!(out, ",{}", p.value_at(tau));
        }
        out.push('\n');
    }
    Ok(out)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Step plot of the profiles against `log2(tau)`, one polyline per variant.
pub fn profile_svg(profiles: &[Profile], metric: Metric) -> Result<String, BenchError> {
    if profiles.is_empty() {
        return Err(BenchError::EmptyProfiles);
    }
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 180.0, 30.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let max_log = tau_grid(profiles).last().copied().unwrap_or(1.0).log2().max(1.0) * 1.05;
    let sx = |tau: f64| left + plot_w * tau.log2() / max_log;
    let sy = |rho: f64| top + plot_h * (1.0 - rho);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle">performance profile ({})</text>"#,
        left + plot_w / 2.0,
        metric
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{y0}" stroke="black"/>"#,
        y0 = top + plot_h,
        x1 = left + plot_w
    );
    for i in 0..=4 {
        let rho = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{rho}</text>"#,
            left - 6.0,
            sy(rho) + 4.0
        );
    }
    let ticks = max_log.ceil() as usize;
    let stride = (ticks / 8).max(1);
    for t in (0..=ticks).step_by(stride) {
        let x = left + plot_w * t as f64 / max_log;
        if x > left + plot_w + 0.5 {
            break;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{t}</text>"#,
            top + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">log2(tau)</text>"#,
        left + plot_w / 2.0,
        h - 12.0
    );
    let x_end = left + plot_w;
    for (i, p) in profiles.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = vec![(sx(1.0), sy(p.value_at(1.0)))];
        let mut current = p.value_at(1.0);
        for (b, v) in p.breakpoints.iter().zip(&p.values) {
            if *b <= 1.0 {
                continue;
            }
            pts.push((sx(*b), sy(current)));
            pts.push((sx(*b), sy(*v)));
            current = *v;
        }
        pts.push((x_end, sy(current)));
        let points: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = w - right + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape_xml(&p.variant)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `profile_<metric>.csv` and `profile_<metric>.svg` into `dir`.
pub fn emit_profile(profiles: &[Profile], metric: Metric, dir: &Path) -> Result<(PathBuf, PathBuf), BenchError> {
    let csv_text = profile_csv(profiles)?;
    let svg_text = profile_svg(profiles, metric)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join(format!("profile_{metric}.csv"));
    let svg_path = dir.join(format!("profile_{metric}.svg"));
    fs::write(&csv_path, csv_text).map_err(io_err(&csv_path))?;
    fs::write(&svg_path, svg_text).map_err(io_err(&svg_path))?;
    Ok((csv_path, svg_path))
}

/// Writes `matrix.csv` and the profiles for every metric into `dir`.
pub fn emit(m: &CostMatrix, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let matrix_path = dir.join("matrix.csv");
    m.write_csv(&matrix_path)?;
    let mut written = vec![matrix_path];
    for metric in Metric::ALL {
        let profiles = performance_profile(m, metric)?;
        let (c, s) = emit_profile(&profiles, metric, dir)?;
        written.push(c);
        written.push(s);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_names;

    fn cell(cost: u64, solved: bool) -> Cell {
        Cell {
            status: if solved { "first_order" } else { "max_iter" }.to_string(),
            cost_f: cost,
            cost_g: cost,
            time_ms: cost as f64,
            iters: cost as usize,
        }
    }

    fn matrix(rows: &[(&str, &str, u64, bool)]) -> CostMatrix {
        let mut m = CostMatrix::default();
        for (p, v, c, s) in rows {
            m.insert(p, v, cell(*c, *s));
        }
        m
    }

    #[test]
    fn labels_and_variant_parsing() {
        assert_eq!(variant_label(HessianMode::Exact, 0.0, 1.0), "trunk_0_1");
        assert_eq!(variant_label(HessianMode::Lbfgs, 1.0, 1.0), "trunk_bfgs_1_1");
        assert_eq!(variant_label(HessianMode::Lsr1, 0.5, 0.0), "trunk_sr1_0.5_0");
        assert_eq!(parse_variants("0,0;0,1;1,0;1,1").unwrap(), STANDARD_VARIANTS.to_vec());
        assert!(parse_variants("0;1").is_err());
        assert!(parse_variants("").is_err());
    }

    #[test]
    fn profile_single_variant() {
        let m = matrix(&[("a", "s", 3, true), ("b", "s", 5, true)]);
        let prof = performance_profile(&m, Metric::Fevals).unwrap();
        assert_eq!(prof[0].value_at(1.0), 1.0);
    }

    #[test]
    fn profile_two_variants_one_problem() {
        let m = matrix(&[("p", "a", 1, true), ("p", "b", 2, true)]);
        let prof = performance_profile(&m, Metric::Fevals).unwrap();
        assert_eq!(prof[0].value_at(1.0), 1.0);
        assert_eq!(prof[1].value_at(1.0), 0.0);
        assert_eq!(prof[1].value_at(1.999), 0.0);
        assert_eq!(prof[1].value_at(2.0), 1.0);
    }

    #[test]
    fn profile_two_variants_two_problems() {
        let m = matrix(&[
            ("p", "a", 1, true),
            ("p", "b", 2, true),
            ("q", "a", 4, true),
            ("q", "b", 2, true),
        ]);
        let prof = performance_profile(&m, Metric::Fevals).unwrap();
        assert_eq!(prof[0].value_at(1.0), 0.5);
        assert_eq!(prof[1].value_at(1.0), 0.5);
        assert_eq!(prof[0].value_at(2.0), 1.0);
        assert_eq!(prof[1].value_at(2.0), 1.0);
    }

    #[test]
    fn failures_never_count() {
        let m = matrix(&[
            ("p", "a", 1, true),
            ("p", "b", 1, false),
            ("q", "a", 1, false),
            ("q", "b", 1, false),
        ]);
        let prof = performance_profile(&m, Metric::Fevals).unwrap();
        assert_eq!(prof[0].terminal(), 0.5);
        assert_eq!(prof[1].terminal(), 0.0);
        assert_eq!(prof[1].value_at(1e300), 0.0);
    }

    #[test]
    fn all_failures_are_an_error() {
        let m = matrix(&[("p", "a", 1, false)]);
        assert!(matches!(
            performance_profile(&m, Metric::Fevals),
            Err(BenchError::AllFailed)
        ));
    }

    #[test]
    fn empty_profiles_are_an_error() {
        assert!(matches!(profile_csv(&[]), Err(BenchError::EmptyProfiles)));
        assert!(matches!(
            profile_svg(&[], Metric::Fevals),
            Err(BenchError::EmptyProfiles)
        ));
    }

    #[test]
    fn svg_has_one_polyline_per_variant() {
        let m = matrix(&[
            ("p", "a", 1, true),
            ("p", "b", 2, true),
            ("p", "c", 3, true),
            ("p", "d", 9, true),
        ]);
        let prof = performance_profile(&m, Metric::Fevals).unwrap();
        let svg = profile_svg(&prof, Metric::Fevals).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches(r#"class="legend""#).count(), 4);
        assert!(!svg.contains("href"));
    }

    #[test]
    fn unknown_problem_is_rejected() {
        let specs = vec![RunSpec::new("nope", 0.0, 0.0, HessianMode::Exact)];
        assert!(matches!(run_matrix(&specs), Err(BenchError::UnknownProblem(_))));
        assert!(matches!(run_matrix(&[]), Err(BenchError::EmptySpecs)));
    }

    #[test]
    fn small_matrix_shape_and_budget() {
        let names: Vec<String> = ["sphere", "rosenbrock"].iter().map(|s| s.to_string()).collect();
        let mut specs = specs_for(&names, &STANDARD_VARIANTS, HessianMode::Exact, 5, 1e-6);
        let (m, outcomes) = run_matrix(&specs).unwrap();
        assert_eq!(outcomes.len(), 8);
        assert_eq!(m.problems.len(), 2);
        assert_eq!(m.variants.len(), 4);
        assert!(m.get("sphere", "trunk_0_0").unwrap().solved());

        for s in &mut specs {
            s.eval_budget = 1;
        }
        let (m, _) = run_matrix(&specs).unwrap();
        assert!(!m.get("rosenbrock", "trunk_0_0").unwrap().solved());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let names: Vec<String> = builtin_names().into_iter().take(5).collect();
        let specs = specs_for(&names, &STANDARD_VARIANTS, HessianMode::Lbfgs, 5, 1e-5);
        let (m, _) = run_matrix(&specs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = emit(&m, dir.path()).unwrap();
        assert_eq!(written.len(), 7);
        let back = CostMatrix::read_csv(&dir.path().join("matrix.csv")).unwrap();
        assert_eq!(back, m);
        let header = fs::read_to_string(dir.path().join("matrix.csv")).unwrap();
        assert!(header.starts_with("problem,variant,status,cost_f,cost_g,time_ms,iters\n"));
        let prof = fs::read_to_string(dir.path().join("profile_fevals.csv")).unwrap();
        assert!(prof.starts_with("tau,trunk_bfgs_0_0,trunk_bfgs_0_1,trunk_bfgs_1_0,trunk_bfgs_1_1\n"));
    }
}
