//! Monte Carlo sweeps over scenario parameters, CSV/SVG emission.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{gen_channels, path_amplitude};
use crate::driver::{RunResult, Scheme};
use crate::error::{Error, Result};
use crate::scenario::{dbm_to_watts, ScenarioConfig};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "RISCOM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "vs_L")]
    VsL,
    #[serde(rename = "vs_e")]
    VsE,
    #[serde(rename = "vs_gamma")]
    VsGamma,
    #[serde(rename = "vs_power")]
    VsPower,
    #[serde(rename = "per_mr")]
    PerMr,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::VsL,
        Experiment::VsE,
        Experiment::VsGamma,
        Experiment::VsPower,
        Experiment::PerMr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::VsL => "vs_L",
            Experiment::VsE => "vs_e",
            Experiment::VsGamma => "vs_gamma",
            Experiment::VsPower => "vs_power",
            Experiment::PerMr => "per_mr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment `{s}`")))
    }

    /// Default sweep points. `vs_power` is in dBm, `per_mr` in MR indices.
    pub fn default_values(self, cfg: &ScenarioConfig) -> Vec<f64> {
        match self {
            Experiment::VsL => vec![4.0, 16.0, 36.0, 64.0],
            Experiment::VsE => vec![1.0, 2.0, 3.0, 4.0, 5.0],
            Experiment::VsGamma => vec![0.3e-4, 0.4e-4, 0.5e-4, 0.6e-4],
            Experiment::VsPower => vec![14.0, 17.0, 20.0, 23.0, 26.0],
            Experiment::PerMr => (1..=cfg.mrs).map(|k| k as f64).collect(),
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            Experiment::VsL => "RIS elements L",
            Experiment::VsE => "phase bits e",
            Experiment::VsGamma => "sensing threshold",
            Experiment::VsPower => "P_max (dBm)",
            Experiment::PerMr => "MR index",
        }
    }

    /// Scenario for sweep point `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let invalid = |reason: &str| Error::InvalidSweepValue {
            experiment: self.name().to_string(),
            value,
            reason: reason.to_string(),
        };
        let positive_int = |v: f64| -> Option<usize> {
            (v.is_finite() && v >= 1.0 && v.fract() == 0.0).then_some(v as usize)
        };
        let mut cfg = base.clone();
        match self {
            Experiment::VsL => {
                let l = positive_int(value).ok_or_else(|| invalid("not a positive integer"))?;
                let (rows, cols) = grid_factorization(l).ok_or_else(|| invalid("no floor(sqrt(L)) x L/floor(sqrt(L)) grid"))?;
                cfg.ris_rows = rows;
                cfg.ris_cols = cols;
            }
            Experiment::VsE => {
                let e = positive_int(value).ok_or_else(|| invalid("not a positive integer"))?;
                if e > 16 {
                    return Err(invalid("more than 16 bits"));
                }
                cfg.phase_bits = e as u32;
            }
            Experiment::VsGamma => {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(invalid("negative or non-finite"));
                }
                cfg.gamma_th = value;
            }
            Experiment::VsPower => {
                if !value.is_finite() {
                    return Err(invalid("non-finite"));
                }
                cfg.p_max = dbm_to_watts(value);
            }
            Experiment::PerMr => {
                let k = positive_int(value)
                    .filter(|&k| k <= cfg.mrs)
                    .ok_or_else(|| invalid("not an MR index"))?;
                cfg.target_pos = cfg.mr_positions[k - 1];
            }
        }
        cfg.validate().map_err(|e| invalid(&e.to_string()))?;
        Ok(cfg)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `L_x = floor(sqrt(L))`, `L_y = L / L_x` when that division is exact.
pub fn grid_factorization(l: usize) -> Option<(usize, usize)> {
    if l == 0 {
        return None;
    }
    let mut lx = (l as f64).sqrt().floor() as usize;
    // guard against sqrt rounding on perfect squares
    while (lx + 1) * (lx + 1) <= l {
        lx += 1;
    }
    while lx * lx > l {
        lx -= 1;
    }
    (l % lx == 0).then_some((lx, l / lx))
}

/// Algorithm seed derived from the channel seed (splitmix64 finalizer).
pub fn algorithm_seed(channel_seed: u64) -> u64 {
    let mut z = channel_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("no sweep values".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("sweep values must be strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes".into()));
        }
        let unique: HashSet<_> = self.schemes.iter().collect();
        if unique.len() != self.schemes.len() {
            return Err(Error::InvalidConfig("repeated scheme".into()));
        }
        let unique: HashSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("repeated seed".into()));
        }
        self.scenario.validate()
    }
}

/// One (scheme, sweep point, seed) outcome.
///
/// For `per_mr` rows the rates are those of the MR at `sweep_value` only.
/// `echo_gain` is `gain` scaled by the two-way RIS–target path loss
/// `d^(-2·alpha_los)` (d in metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub experiment: Experiment,
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub seed: u64,
    pub rate_relaxed: f64,
    pub rate_extracted: f64,
    pub gain: f64,
    pub echo_gain: f64,
    pub feasible: bool,
    pub extraction_feasible: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub wall_time: f64,
}

impl SweepRow {
    fn from_run(experiment: Experiment, value: f64, cfg: &ScenarioConfig, run: &RunResult, seed: u64) -> Self {
        let (rate_relaxed, rate_extracted) = match experiment {
            Experiment::PerMr => {
                let k = value as usize - 1;
                (run.user_rates[k], run.user_rates_extracted[k])
            }
            _ => (run.rate_relaxed, run.rate_extracted),
        };
        let loss = path_amplitude(1.0, cfg.ris_target_distance(), cfg.alpha_los).powi(4);
        SweepRow {
            experiment,
            scheme: run.scheme,
            sweep_value: value,
            seed,
            rate_relaxed,
            rate_extracted,
            gain: run.gain,
            echo_gain: run.gain * loss,
            feasible: run.feasible,
            extraction_feasible: run.extraction_feasible,
            outer_iters: run.outer_iters,
            inner_iters_total: run.inner_iters_total,
            wall_time: run.wall_time,
        }
    }

    fn key(&self) -> (Experiment, Scheme, u64, u64) {
        (self.experiment, self.scheme, self.sweep_value.to_bits(), self.seed)
    }
}

/// A sweep point or run that could not be evaluated.
#[derive(Debug, Clone)]
pub struct PointFailure {
    pub scheme: Option<Scheme>,
    pub value: f64,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<PointFailure>,
}

impl SweepReport {
    /// True when rows exist and none of them is feasible.
    pub fn infeasible_only(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| !r.feasible)
    }
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn sort_rows(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        (a.experiment, a.scheme)
            .cmp(&(b.experiment, b.scheme))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.seed.cmp(&b.seed))
    });
}

/// Runs every (scheme, value, seed) combination of `spec`. Invalid sweep
/// points and failed runs are collected in the report instead of aborting.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let mut report = SweepReport::default();
    let mut jobs = Vec::new();
    for &value in &spec.values {
        match spec.experiment.apply(&spec.scenario, value) {
            Ok(cfg) => {
                for &scheme in &spec.schemes {
                    for &seed in &spec.seeds {
                        jobs.push((value, scheme, seed, cfg.clone()));
                    }
                }
            }
            Err(e) => report.failures.push(PointFailure {
                scheme: None,
                value,
                seed: None,
                message: e.to_string(),
            }),
        }
    }

    let experiment = spec.experiment;
    let outcomes: Vec<std::result::Result<SweepRow, PointFailure>> = with_pool(|| {
        jobs.par_iter()
            .map(|(value, scheme, seed, cfg)| {
                let ch = gen_channels(cfg, *seed);
                scheme
                    .run(&ch, cfg, algorithm_seed(*seed))
                    .map(|run| SweepRow::from_run(experiment, *value, cfg, &run, *seed))
                    .map_err(|e| PointFailure {
                        scheme: Some(*scheme),
                        value: *value,
                        seed: Some(*seed),
                        message: e.to_string(),
                    })
            })
            .collect()
    });
    for o in outcomes {
        match o {
            Ok(row) => report.rows.push(row),
            Err(f) => report.failures.push(f),
        }
    }
    sort_rows(&mut report.rows);
    Ok(report)
}

/// Per-MR rate and sensing gain of the proposed scheme, with the target
/// moved onto each MR in turn.
pub fn per_mr_profile(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<SweepReport> {
    run_sweep(&SweepSpec {
        experiment: Experiment::PerMr,
        values: Experiment::PerMr.default_values(cfg),
        schemes: vec![Scheme::Proposed],
        seeds: seeds.to_vec(),
        scenario: cfg.clone(),
    })
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub count: usize,
    pub rate_relaxed_mean: f64,
    pub rate_relaxed_stderr: f64,
    pub rate_extracted_mean: f64,
    pub rate_extracted_stderr: f64,
    pub gain_mean: f64,
    pub gain_stderr: f64,
    pub echo_gain_mean: f64,
    pub echo_gain_stderr: f64,
    pub feasible_fraction: f64,
}

/// Aggregates rows per (experiment, scheme, sweep_value).
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Experiment, Scheme, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.experiment, r.scheme, r.sweep_value.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let col = |f: fn(&SweepRow) -> f64| mean_stderr(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (rr, rrs) = col(|r| r.rate_relaxed);
            let (re, res) = col(|r| r.rate_extracted);
            let (gm, gs) = col(|r| r.gain);
            let (em, es) = col(|r| r.echo_gain);
            SummaryRow {
                experiment: g[0].experiment,
                scheme: g[0].scheme,
                sweep_value: g[0].sweep_value,
                count: g.len(),
                rate_relaxed_mean: rr,
                rate_relaxed_stderr: rrs,
                rate_extracted_mean: re,
                rate_extracted_stderr: res,
                gain_mean: gm,
                gain_stderr: gs,
                echo_gain_mean: em,
                echo_gain_stderr: es,
                feasible_fraction: g.iter().filter(|r| r.feasible).count() as f64 / g.len() as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.experiment, a.scheme)
            .cmp(&(b.experiment, b.scheme))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
    });
    out
}

/// Paths written by [`emit`].
#[derive(Debug, Clone)]
pub struct Emitted {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.csv` and one `<experiment>.svg` chart per
/// experiment present in `rows`.
pub fn emit(rows: &[SweepRow], out_dir: &Path) -> Result<Emitted> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to emit".into()));
    }
    let mut seen = HashSet::new();
    for r in rows {
        if !seen.insert(r.key()) {
            return Err(Error::DuplicateKey {
                scheme: r.scheme.name().to_string(),
                value: r.sweep_value,
                seed: r.seed,
            });
        }
    }
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = out_dir.join("results.csv");
    write_csv(&results, &sorted)?;
    let summary_rows = summarize(&sorted);
    let summary = out_dir.join("summary.csv");
    write_csv(&summary, &summary_rows)?;

    let mut charts = Vec::new();
    let experiments: Vec<Experiment> = {
        let mut e: Vec<_> = sorted.iter().map(|r| r.experiment).collect();
        e.dedup();
        e
    };
    for exp in experiments {
        let path = out_dir.join(format!("{}.svg", exp.name()));
        let svg = line_chart(exp, &summary_rows);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        charts.push(path);
    }
    Ok(Emitted {
        results,
        summary,
        charts,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

/// Mean relaxed rate against the sweep value, one polyline per scheme.
fn line_chart(exp: Experiment, summary: &[SummaryRow]) -> String {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 30.0, 60.0);
    let pts: Vec<&SummaryRow> = summary.iter().filter(|s| s.experiment == exp).collect();
    let xs = pts.iter().map(|s| s.sweep_value);
    let ys = pts.iter().map(|s| s.rate_relaxed_mean).filter(|y| y.is_finite());
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let mut y1 = ys.fold(0.0f64, f64::max);
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= 0.0 {
        y1 = 1.0;
    }
    y1 *= 1.05;
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + plot_h - y / y1 * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    );
    for i in 0..=4 {
        let y = y1 * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(y) + 4.0,
            tick_label(y)
        );
    }
    let mut xticks: Vec<f64> = pts.iter().map(|p| p.sweep_value).collect();
    xticks.sort_by(f64::total_cmp);
    xticks.dedup();
    for x in xticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            top + plot_h + 18.0,
            tick_label(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        height - 15.0,
        exp.axis_label()
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">sum rate (bit/s/Hz)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    let mut schemes: Vec<Scheme> = pts.iter().map(|p| p.scheme).collect();
    schemes.dedup();
    for (i, scheme) in schemes.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.scheme == *scheme && p.rate_relaxed_mean.is_finite())
            .map(|p| format!("{:.1},{:.1}", sx(p.sweep_value), sy(p.rate_relaxed_mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, scheme.name());
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-2 || v.abs() >= 1e4 {
        format!("{v:.1e}")
    } else {
        let t = format!("{v:.3}");
        t.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
