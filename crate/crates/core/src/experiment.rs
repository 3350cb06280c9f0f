//! Seeded runs and their output files.
//!
//! A compare run writes into its output directory:
//!
//! | file | content |
//! |------|---------|
//! | `scenario.txt` | resolved scenario snapshot (reloadable) |
//! | `comparison.csv` / `.json` | one row per method plus the full-activation reference |
//! | `trace_<method>.csv` / `.json` | one row per AD iteration; the JSON adds the Boolean QP traces |
//! | `selection_<method>.json` | selected antennas, power split, rate vs threshold |
//! | `manifest.json` | methods, seed, version, scenario hash, failures |
//!
//! Every CSV starts with a `# schema: <name>/<version>` row. With several
//! seeds each seed gets its own `seed_<n>` subdirectory and the manifest sits
//! at the top.
//!
//! Wall times are written as zero unless timing is enabled, which keeps the
//! output of a given manifest byte-identical across runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::ad::{self, AdStatus, AdTrace, Solution};
use crate::baselines::{self, Method};
use crate::channel::generate_channel;
use crate::config::Scenario;
use crate::rate::EsrProblem;
use crate::{Error, Result, VERSION};

pub const TRACE_SCHEMA: &str = "adsbqp-trace/v1";
pub const COMPARISON_SCHEMA: &str = "adsbqp-comparison/v1";

pub const TRACE_COLUMNS: [&str; 8] = [
    "iter",
    "objective",
    "complementarity",
    "rate_residual",
    "dP_norm",
    "dx_norm",
    "lambda",
    "stage_time",
];

pub const COMPARISON_COLUMNS: [&str; 10] = [
    "method",
    "objective",
    "complementarity",
    "iterations",
    "wall_time",
    "status",
    "n_selected",
    "rate",
    "r_th",
    "scenario_hash",
];

/// Fields of `selection_<method>.json`.
pub const SELECTION_FIELDS: [&str; 10] = [
    "method",
    "selected",
    "antenna_power",
    "rate",
    "r_th",
    "rate_margin",
    "transmit_power",
    "standby_power",
    "objective",
    "status",
];

/// Label of the all-antennas-on reference row.
pub const FULL_ACTIVATION: &str = "FULL";

#[derive(Debug, Clone)]
pub struct RunManifest {
    /// Where the scenario came from; informational.
    pub scenario_path: Option<PathBuf>,
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

/// What `manifest.json` records after a run.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestEcho {
    pub version: String,
    pub scenario_path: Option<String>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedEcho>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedEcho {
    pub seed: u64,
    pub directory: String,
    /// Channel fingerprint; empty when the channel could not be built.
    pub scenario_hash: String,
    pub failures: Vec<String>,
}

/// One row of `comparison.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub objective: f64,
    pub complementarity: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub status: String,
    pub n_selected: usize,
    pub rate: f64,
    pub r_th: f64,
    pub scenario_hash: String,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub row: ComparisonRow,
    pub solution: Solution,
    pub trace: Option<AdTrace>,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dir: PathBuf,
    pub scenario_hash: String,
    pub problem: Option<EsrProblem>,
    pub full_activation: Option<ComparisonRow>,
    pub methods: Vec<MethodOutcome>,
    pub failures: Vec<String>,
}

impl SeedOutcome {
    pub fn rows(&self) -> Vec<ComparisonRow> {
        self.methods
            .iter()
            .map(|m| m.row.clone())
            .chain(self.full_activation.clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub seeds: Vec<SeedOutcome>,
}

impl CompareOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.seeds.iter().all(|s| s.failures.is_empty())
    }
}

/// Selected antennas and where the power goes.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub method: String,
    pub selected: Vec<usize>,
    /// Row sums of `P`, selected antennas only.
    pub antenna_power: Vec<f64>,
    pub rate: f64,
    pub r_th: f64,
    pub rate_margin: f64,
    /// `sum_ij p_ij x_i`
    pub transmit_power: f64,
    /// `p_rf sum_i x_i`
    pub standby_power: f64,
    pub objective: f64,
    pub status: String,
}

impl SelectionReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{}: {} of {} antennas on, status {}\n",
            self.method,
            self.selected.len(),
            self.antenna_power.len().max(self.selected.len()),
            self.status
        );
        out.push_str(&format!("  selected: {:?}\n", self.selected));
        out.push_str(&format!(
            "  rate {:.6e} vs threshold {:.6e} (margin {:.3e})\n",
            self.rate, self.r_th, self.rate_margin
        ));
        out.push_str(&format!(
            "  objective {:.9} = transmit {:.9} + standby {:.9}\n",
            self.objective, self.transmit_power, self.standby_power
        ));
        out
    }
}

pub fn emit_selection_report(method: &str, solution: &Solution, prob: &EsrProblem) -> SelectionReport {
    let x = &solution.switches;
    let rows = solution.power.row_sums();
    let selected = x.selected();
    let transmit_power = (0..x.len()).map(|i| rows[i] * x.entries[i]).sum();
    let standby_power = prob.cfg.p_rf * x.entries.sum();
    let rate = prob.sum_rate(&solution.power, x);
    SelectionReport {
        method: method.to_string(),
        antenna_power: selected.iter().map(|&i| rows[i]).collect(),
        selected,
        rate,
        r_th: prob.r_th,
        rate_margin: rate - prob.r_th,
        transmit_power,
        standby_power,
        objective: solution.objective,
        status: solution.status.label().to_string(),
    }
}

fn row_for(
    method: &str,
    sol: &Solution,
    prob: &EsrProblem,
    wall_time: f64,
    hash: &str,
) -> ComparisonRow {
    ComparisonRow {
        method: method.to_string(),
        objective: sol.objective,
        complementarity: sol.complementarity,
        iterations: sol.iterations,
        wall_time,
        status: sol.status.label().to_string(),
        n_selected: sol.switches.selected().len(),
        rate: sol.rate,
        r_th: prob.r_th,
        scenario_hash: hash.to_string(),
    }
}

/// Runs every method of the manifest on one seed without writing anything.
pub fn run_seed(scenario: &Scenario, methods: &[Method], seed: u64) -> SeedOutcome {
    let mut channel_cfg = scenario.channel.clone();
    channel_cfg.seed = seed;
    let mut out = SeedOutcome {
        seed,
        dir: PathBuf::new(),
        scenario_hash: String::new(),
        problem: None,
        full_activation: None,
        methods: Vec::new(),
        failures: Vec::new(),
    };
    let channel = match generate_channel(&channel_cfg) {
        Ok(c) => c,
        Err(e) => {
            out.failures.push(format!("scenario: {e}"));
            return out;
        }
    };
    out.scenario_hash = channel.fingerprint();
    let prob = match EsrProblem::new(channel, channel_cfg) {
        Ok(p) => p,
        Err(e) => {
            out.failures.push(format!("scenario: {e}"));
            return out;
        }
    };
    let cfg = &scenario.solver;
    let clock = |start: Instant| {
        if cfg.timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    };

    let start = Instant::now();
    match ad::full_activation(&prob, &cfg.nlp) {
        Ok(sol) => {
            out.full_activation = Some(row_for(FULL_ACTIVATION, &sol, &prob, clock(start), &out.scenario_hash))
        }
        Err(e) => out.failures.push(format!("{FULL_ACTIVATION}: {e}")),
    }
    for &method in methods {
        let start = Instant::now();
        match baselines::run_method(&prob, method, cfg) {
            Ok(run) => {
                if let AdStatus::InfeasibleSelection { .. } = run.solution.status {
                    out.failures.push(format!("{method}: no switch step reaches the rate threshold"));
                }
                let row = row_for(method.name(), &run.solution, &prob, clock(start), &out.scenario_hash);
                out.methods.push(MethodOutcome {
                    method,
                    row,
                    solution: run.solution,
                    trace: run.trace,
                });
            }
            Err(e) => out.failures.push(format!("{method}: {e}")),
        }
    }
    out.problem = Some(prob);
    out
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn write_csv(path: &Path, schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut body = format!("# schema: {schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut body);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, body)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn trace_rows(trace: &AdTrace) -> Vec<Vec<String>> {
    trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                float(r.objective),
                float(r.complementarity),
                float(r.rate_residual),
                float(r.dp_norm),
                float(r.dx_norm),
                float(r.lambda),
                float(r.stage_time),
            ]
        })
        .collect()
}

fn comparison_rows(rows: &[ComparisonRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.method.clone(),
                float(r.objective),
                float(r.complementarity),
                r.iterations.to_string(),
                float(r.wall_time),
                r.status.clone(),
                r.n_selected.to_string(),
                float(r.rate),
                float(r.r_th),
                r.scenario_hash.clone(),
            ]
        })
        .collect()
}

/// Writes one seed's files into `dir`.
pub fn write_seed(dir: &Path, scenario: &Scenario, outcome: &SeedOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut snapshot = scenario.clone();
    snapshot.channel.seed = outcome.seed;
    fs::write(dir.join("scenario.txt"), snapshot.snapshot())?;

    let rows = outcome.rows();
    write_csv(
        &dir.join("comparison.csv"),
        COMPARISON_SCHEMA,
        &COMPARISON_COLUMNS,
        &comparison_rows(&rows),
    )?;
    write_json(&dir.join("comparison.json"), &rows)?;

    for m in &outcome.methods {
        let slug = m.method.slug();
        if let Some(trace) = &m.trace {
            write_csv(
                &dir.join(format!("trace_{slug}.csv")),
                TRACE_SCHEMA,
                &TRACE_COLUMNS,
                &trace_rows(trace),
            )?;
            write_json(&dir.join(format!("trace_{slug}.json")), trace)?;
        }
        if let Some(prob) = &outcome.problem {
            let report = emit_selection_report(m.method.name(), &m.solution, prob);
            write_json(&dir.join(format!("selection_{slug}.json")), &report)?;
        }
    }
    Ok(())
}

/// Runs every seed of the manifest (in parallel) and writes all outputs.
///
/// Method failures do not abort the run; they are collected per seed and
/// echoed in `manifest.json`. Only I/O errors are returned as `Err`.
pub fn run_compare(manifest: &RunManifest) -> Result<CompareOutcome> {
    manifest.scenario.validate()?;
    if manifest.seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds requested".into()));
    }
    if manifest.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let batch = manifest.seeds.len() > 1;
    let mut seeds: Vec<SeedOutcome> = manifest
        .seeds
        .par_iter()
        .map(|&seed| run_seed(&manifest.scenario, &manifest.methods, seed))
        .collect();

    fs::create_dir_all(&manifest.out_dir)?;
    for s in &mut seeds {
        s.dir = if batch {
            manifest.out_dir.join(format!("seed_{}", s.seed))
        } else {
            manifest.out_dir.clone()
        };
        write_seed(&s.dir, &manifest.scenario, s)?;
    }

    let echo = ManifestEcho {
        version: VERSION.to_string(),
        scenario_path: manifest.scenario_path.as_ref().map(|p| p.display().to_string()),
        methods: manifest.methods.clone(),
        seeds: manifest.seeds.clone(),
        runs: seeds
            .iter()
            .map(|s| SeedEcho {
                seed: s.seed,
                directory: s
                    .dir
                    .strip_prefix(&manifest.out_dir)
                    .unwrap_or(&s.dir)
                    .display()
                    .to_string(),
                scenario_hash: s.scenario_hash.clone(),
                failures: s.failures.clone(),
            })
            .collect(),
    };
    write_json(&manifest.out_dir.join("manifest.json"), &echo)?;
    Ok(CompareOutcome { seeds })
}
