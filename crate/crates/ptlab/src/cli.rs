//! Command-line surface: energy evaluation, transport solves, certified
//! rearrangement, improvement steps, annealing sweeps, the line oracle, and
//! the verification suites.
//!
//! Conventions: the machine-readable envelope `{"manifest": .., "report": ..}`
//! goes to stdout, human logs go to stderr, and every output file gets a
//! sibling `<file>.manifest.json` naming the manifest hash that produced it.
//! Exit codes: 0 success, 1 certificate or suite failure, 2 input error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Value, json};

use ptlab_core::lattice::LatticeSet;
use ptlab_core::reduction::{DEFAULT_GAMMA_THRESHOLD, ScanCenter, TruncationCase};
use ptlab_core::search::AnnealConfig;
use ptlab_core::{constructions, reduction, search, transport};

use crate::lgrid;
use crate::report::{ARTIFACT_VERSION, RunManifest, params};
use crate::suites;

#[derive(Parser)]
#[command(
    name = "ptlab",
    version,
    about = "Lattice laboratory for the perimeter-plus-transport energy T(E) = P(E) + W_p(E)"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate T(E) = P(E) + W_p(E) for a grid and print the full report.
    Energy {
        /// Input LGRID file.
        #[arg(long)]
        grid: PathBuf,
        /// Transport exponent, at least 1.
        #[arg(long, default_value_t = 1.0)]
        p: f64,
    },
    /// Solve the cheapest equal-volume disjoint target of a grid.
    Wfun {
        /// Input LGRID file.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Write the optimal target set as LGRID here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a disjoint equal-volume pair near the origin, with
    /// certificates for volume, disjointness, perimeter, transport, and
    /// containment.
    Rearrange {
        /// The set E as LGRID.
        #[arg(long)]
        grid: PathBuf,
        /// Its transport target F as LGRID (equal volume, disjoint).
        #[arg(long = "grid-f")]
        grid_f: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Volume budget for the uncovered residual; defaults to vol(E)/4.
        #[arg(long)]
        epsilon: Option<f64>,
        /// A-priori covering constant guess for the epsilon admissibility
        /// check; defaults to the library constant.
        #[arg(long = "c-guess")]
        c_guess: Option<f64>,
        /// Write the rebuilt source here (target goes to `<out>.target.lgrid`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Try to strictly lower T(G), either by a given two-part split or by a
    /// radial truncation scan.
    Improve {
        /// The set G as LGRID.
        #[arg(long)]
        grid: PathBuf,
        /// With `--mode partition`: the part G1 as LGRID (G2 = G minus G1).
        #[arg(long = "grid-f")]
        grid_f: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: ImproveMode,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Largest small-part to large-part volume ratio still eligible.
        #[arg(long = "eps-threshold", default_value_t = DEFAULT_GAMMA_THRESHOLD)]
        eps_threshold: f64,
        /// Partition mode: write the improved set as LGRID when accepted.
        /// Scan mode: write the per-radius rows as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Anneal a list of masses from a JSON config and report every run.
    Sweep {
        /// JSON config: {"m_values": [..], "p": .., "d": .., "h": ..} plus
        /// optional schedule overrides (moves_per_temp, temp_initial,
        /// temp_decay, w_recompute_period, seed, max_temps, teleport_prob).
        #[arg(long)]
        config: PathBuf,
        /// Override the config dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Override the config lattice spacing.
        #[arg(long)]
        spacing: Option<f64>,
        /// Override the config base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the sweep report here; each run also gets
        /// `<out>.run<N>.trace.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form energy table for k equal far-apart sub-intervals on the
    /// line.
    Oracle1d {
        /// Total mass (interval length before splitting).
        #[arg(long)]
        m: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        /// Largest interval count to tabulate.
        #[arg(long = "k-max", default_value_t = 8)]
        k_max: usize,
        /// Lattice spacing h.
        #[arg(long, default_value_t = 0.005)]
        spacing: f64,
    },
    /// Run one verification suite and exit nonzero if any case fails.
    Verify {
        /// Suite name; see `--suite help` for the list.
        #[arg(long)]
        suite: String,
        /// Write the suite report here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ImproveMode {
    /// Split along a provided partition and keep the better rebuilt set.
    Partition,
    /// Scan concentric truncation radii for a qualifying split.
    Scan,
}

/// Terminal failure with its process exit code.
struct Fail {
    code: i32,
    message: String,
}

fn input_error(message: impl Into<String>) -> Fail {
    Fail {
        code: 2,
        message: message.into(),
    }
}

trait OrInputError<T> {
    fn or_input_error(self, what: &str) -> Result<T, Fail>;
}

impl<T, E: std::fmt::Display> OrInputError<T> for Result<T, E> {
    fn or_input_error(self, what: &str) -> Result<T, Fail> {
        self.map_err(|e| input_error(format!("{what}: {e}")))
    }
}

/// Parses the arguments, runs the command, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(fail) => {
            eprintln!("ptlab: error: {}", fail.message);
            fail.code
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Fail> {
    let started = Instant::now();
    match command {
        Command::Energy { grid, p } => cmd_energy(&grid, p, started),
        Command::Wfun { grid, p, out } => cmd_wfun(&grid, p, out.as_deref(), started),
        Command::Rearrange {
            grid,
            grid_f,
            p,
            epsilon,
            c_guess,
            out,
        } => cmd_rearrange(&grid, &grid_f, p, epsilon, c_guess, out.as_deref(), started),
        Command::Improve {
            grid,
            grid_f,
            mode,
            p,
            eps_threshold,
            out,
        } => cmd_improve(
            &grid,
            grid_f.as_deref(),
            mode,
            p,
            eps_threshold,
            out.as_deref(),
            started,
        ),
        Command::Sweep {
            config,
            dim,
            spacing,
            seed,
            out,
        } => cmd_sweep(&config, dim, spacing, seed, out.as_deref(), started),
        Command::Oracle1d {
            m,
            p,
            k_max,
            spacing,
        } => cmd_oracle1d(m, p, k_max, spacing, started),
        Command::Verify { suite, out } => cmd_verify(&suite, out.as_deref(), started),
    }
}

fn read_grid(path: &Path) -> Result<LatticeSet, Fail> {
    lgrid::read_lgrid(path).or_input_error(&format!("reading {}", path.display()))
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Prints the stdout envelope and writes one sibling manifest per output
/// file, after stamping the wall time (which the hash ignores).
fn emit(
    mut manifest: RunManifest,
    report: Value,
    outputs: &[&Path],
    started: Instant,
) -> Result<(), Fail> {
    manifest.wall_time_secs = started.elapsed().as_secs_f64();
    for out in outputs {
        let sibling = sibling_manifest_path(out);
        crate::report::write_json(&sibling, &manifest)
            .or_input_error(&format!("writing {}", sibling.display()))?;
    }
    let envelope = json!({ "manifest": manifest, "report": report });
    println!(
        "{}",
        serde_json::to_string_pretty(&envelope).expect("envelope serializes")
    );
    Ok(())
}

fn sibling_manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_energy(grid: &Path, p: f64, started: Instant) -> Result<i32, Fail> {
    let e = read_grid(grid)?;
    let report = reduction::energy_t(&e, p).or_input_error("evaluating the energy")?;
    let manifest = RunManifest::new(
        "energy",
        params(&[("p", json!(p))]),
        vec![path_str(grid)],
        vec![],
    );
    emit(
        manifest,
        serde_json::to_value(&report).expect("report serializes"),
        &[],
        started,
    )?;
    Ok(0)
}

fn cmd_wfun(grid: &Path, p: f64, out: Option<&Path>, started: Instant) -> Result<i32, Fail> {
    let e = read_grid(grid)?;
    let res = transport::wasserstein_functional(&e, p).or_input_error("solving the transport")?;
    if let Some(path) = out {
        lgrid::write_lgrid(path, &res.target_set)
            .or_input_error(&format!("writing {}", path.display()))?;
    }
    let report = json!({
        "value": res.value,
        "max_displacement": res.max_displacement,
        "total_cost": res.plan.total_cost,
        "entries": res.plan.entries.len(),
        "window_cells": res.sink_window.cell_count(),
        "target_cells": res.target_set.cell_count(),
    });
    let manifest = RunManifest::new(
        "wfun",
        params(&[("p", json!(p))]),
        vec![path_str(grid)],
        out.iter().map(|o| path_str(o)).collect(),
    );
    let outputs: Vec<&Path> = out.iter().copied().collect();
    emit(manifest, report, &outputs, started)?;
    Ok(0)
}

fn cmd_rearrange(
    grid: &Path,
    grid_f: &Path,
    p: f64,
    epsilon: Option<f64>,
    c_guess: Option<f64>,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Fail> {
    let e = read_grid(grid)?;
    let f = read_grid(grid_f)?;
    let epsilon = epsilon.unwrap_or(0.25 * e.volume());
    let unit_scale = constructions::default_unit_scale(&e);
    let res = match c_guess {
        Some(c) => constructions::rearrange_with_c(&e, &f, p, epsilon, unit_scale, c),
        None => constructions::rearrange(&e, &f, p, epsilon, unit_scale),
    }
    .or_input_error("rearranging the pair")?;
    let mut written: Vec<PathBuf> = Vec::new();
    if let Some(path) = out {
        lgrid::write_lgrid(path, &res.source)
            .or_input_error(&format!("writing {}", path.display()))?;
        let mut target_name = path
            .file_stem()
            .map(|s| s.to_os_string())
            .unwrap_or_default();
        target_name.push(".target.lgrid");
        let target_path = path.with_file_name(target_name);
        lgrid::write_lgrid(&target_path, &res.target)
            .or_input_error(&format!("writing {}", target_path.display()))?;
        written.push(path.to_path_buf());
        written.push(target_path);
    }
    let all_passed = res.all_passed();
    let report = json!({
        "all_passed": all_passed,
        "certificates": res.certificates,
        "epsilon": epsilon,
        "unit_scale": unit_scale,
        "empirical_c": res.cover.empirical_c,
        "nuclei": res.cover.points.len(),
        "residual_cells": res.cover.residual.cell_count(),
        "container_radius": res.layout.container_radius,
    });
    let manifest = RunManifest::new(
        "rearrange",
        params(&[
            ("p", json!(p)),
            ("epsilon", json!(epsilon)),
            ("unit_scale", json!(unit_scale)),
            ("c_guess", json!(c_guess)),
        ]),
        vec![path_str(grid), path_str(grid_f)],
        written.iter().map(|w| path_str(w)).collect(),
    );
    let outputs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    emit(manifest, report, &outputs, started)?;
    Ok(if all_passed { 0 } else { 1 })
}

fn cmd_improve(
    grid: &Path,
    grid_f: Option<&Path>,
    mode: ImproveMode,
    p: f64,
    eps_threshold: f64,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Fail> {
    let g = read_grid(grid)?;
    match mode {
        ImproveMode::Partition => {
            let g1_path = grid_f
                .ok_or_else(|| input_error("--mode partition needs --grid-f for the part G1"))?;
            let g1 = read_grid(g1_path)?;
            let g2 = g.minus(&g1).or_input_error("forming G2 = G minus G1")?;
            let outcome = reduction::try_split_improvement(&g, &g1, &g2, p, eps_threshold)
                .or_input_error("evaluating the split")?;
            let mut written: Vec<PathBuf> = Vec::new();
            if let (Some(path), Some(better)) = (out, &outcome.improved) {
                lgrid::write_lgrid(path, better)
                    .or_input_error(&format!("writing {}", path.display()))?;
                written.push(path.to_path_buf());
            }
            let report = json!({
                "mode": "partition",
                "accepted": outcome.accepted,
                "gamma": outcome.gamma,
                "ell": outcome.ell,
                "condition_lhs": outcome.condition_lhs,
                "condition_rhs": outcome.condition_rhs,
                "t_before": outcome.t_before,
                "t_after": outcome.t_after,
            });
            let manifest = RunManifest::new(
                "improve",
                params(&[
                    ("mode", json!("partition")),
                    ("p", json!(p)),
                    ("eps_threshold", json!(eps_threshold)),
                ]),
                vec![path_str(grid), path_str(g1_path)],
                written.iter().map(|w| path_str(w)).collect(),
            );
            let outputs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
            emit(manifest, report, &outputs, started)?;
            Ok(0)
        }
        ImproveMode::Scan => {
            let scan = reduction::truncation_scan(&g, p, ScanCenter::Centroid, eps_threshold)
                .or_input_error("scanning truncation radii")?;
            let mut written: Vec<PathBuf> = Vec::new();
            if let Some(path) = out {
                let mut csv = String::from("t,cut,tail_t,case,tail_volume\n");
                for row in &scan.rows {
                    let case_name = match row.case {
                        TruncationCase::SplitCandidate => "split_candidate",
                        TruncationCase::TailDecay => "tail_decay",
                        TruncationCase::Contained => "contained",
                    };
                    let tail_t = row
                        .tail_t
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        row.t, row.cut, tail_t, case_name, row.tail_volume
                    ));
                }
                std::fs::write(path, csv)
                    .or_input_error(&format!("writing {}", path.display()))?;
                written.push(path.to_path_buf());
            }
            let accepted = scan
                .improvement
                .as_ref()
                .map(|o| o.accepted)
                .unwrap_or(false);
            let report = json!({
                "mode": "scan",
                "rows": scan.rows.len(),
                "contained": scan.contained,
                "inner_radius": scan.inner_radius,
                "split_candidates": scan
                    .rows
                    .iter()
                    .filter(|r| matches!(r.case, TruncationCase::SplitCandidate))
                    .count(),
                "improvement_accepted": accepted,
                "improvement_t_after": scan.improvement.as_ref().map(|o| o.t_after),
            });
            let manifest = RunManifest::new(
                "improve",
                params(&[
                    ("mode", json!("scan")),
                    ("p", json!(p)),
                    ("eps_threshold", json!(eps_threshold)),
                ]),
                vec![path_str(grid)],
                written.iter().map(|w| path_str(w)).collect(),
            );
            let outputs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
            emit(manifest, report, &outputs, started)?;
            Ok(0)
        }
    }
}

/// On-disk sweep configuration; unset schedule fields fall back to the desk
/// defaults for the first mass in the list.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    m_values: Vec<f64>,
    p: f64,
    d: usize,
    h: f64,
    moves_per_temp: Option<usize>,
    temp_initial: Option<f64>,
    temp_decay: Option<f64>,
    w_recompute_period: Option<usize>,
    seed: Option<u64>,
    max_temps: Option<usize>,
    teleport_prob: Option<f64>,
}

fn cmd_sweep(
    config_path: &Path,
    dim: Option<usize>,
    spacing: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Fail> {
    let text = std::fs::read_to_string(config_path)
        .or_input_error(&format!("reading {}", config_path.display()))?;
    let cfg: SweepConfig = serde_json::from_str(&text)
        .or_input_error(&format!("parsing {}", config_path.display()))?;
    if cfg.m_values.is_empty() {
        return Err(input_error("config lists no m_values"));
    }
    let d = dim.unwrap_or(cfg.d);
    let h = spacing.unwrap_or(cfg.h);
    let mut base = AnnealConfig::desk(cfg.p, d, cfg.m_values[0], h);
    if let Some(v) = cfg.moves_per_temp {
        base.moves_per_temp = v;
    }
    if let Some(v) = cfg.temp_initial {
        base.temp_initial = v;
    }
    if let Some(v) = cfg.temp_decay {
        base.temp_decay = v;
    }
    if let Some(v) = cfg.w_recompute_period {
        base.w_recompute_period = v;
    }
    if let Some(v) = cfg.seed {
        base.seed = v;
    }
    if let Some(v) = cfg.max_temps {
        base.max_temps = v;
    }
    if let Some(v) = cfg.teleport_prob {
        base.teleport_prob = v;
    }
    if let Some(v) = seed {
        base.seed = v;
    }
    let outcomes =
        search::sweep(&cfg.m_values, cfg.p, d, &base).or_input_error("running the sweep")?;
    let records: Vec<_> = outcomes.iter().map(|o| &o.record).collect();
    let report = json!({ "records": records });
    let mut written: Vec<PathBuf> = Vec::new();
    if let Some(path) = out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )
        .or_input_error(&format!("writing {}", path.display()))?;
        written.push(path.to_path_buf());
        for (i, outcome) in outcomes.iter().enumerate() {
            let mut csv = String::from(
                "temp_index,temperature,current_t,best_t,acceptance_rate,last_exact_t,last_exact_w\n",
            );
            for (ti, rec) in outcome.trace.records.iter().enumerate() {
                let last_t = rec
                    .checkpoint_ts
                    .last()
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                let last_w = rec
                    .checkpoint_ws
                    .last()
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    ti,
                    rec.temperature,
                    rec.current_t,
                    rec.best_t,
                    rec.acceptance_rate,
                    last_t,
                    last_w
                ));
            }
            let mut trace_name = path
                .file_name()
                .map(|s| s.to_os_string())
                .unwrap_or_default();
            trace_name.push(format!(".run{i}.trace.csv"));
            let trace_path = path.with_file_name(trace_name);
            std::fs::write(&trace_path, csv)
                .or_input_error(&format!("writing {}", trace_path.display()))?;
            written.push(trace_path);
        }
    }
    let manifest = RunManifest::new(
        "sweep",
        params(&[
            ("p", json!(cfg.p)),
            ("d", json!(d)),
            ("h", json!(h)),
            ("m_values", json!(cfg.m_values)),
            ("seed", json!(base.seed)),
            ("moves_per_temp", json!(base.moves_per_temp)),
            ("temp_initial", json!(base.temp_initial)),
            ("temp_decay", json!(base.temp_decay)),
            ("w_recompute_period", json!(base.w_recompute_period)),
            ("max_temps", json!(base.max_temps)),
            ("teleport_prob", json!(base.teleport_prob)),
        ]),
        vec![path_str(config_path)],
        written.iter().map(|w| path_str(w)).collect(),
    );
    let outputs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    emit(manifest, report, &outputs, started)?;
    Ok(0)
}

fn cmd_oracle1d(m: f64, p: f64, k_max: usize, spacing: f64, started: Instant) -> Result<i32, Fail> {
    let table = search::equal_intervals_oracle(m, p, k_max, spacing)
        .or_input_error("building the interval table")?;
    let manifest = RunManifest::new(
        "oracle1d",
        params(&[
            ("m", json!(m)),
            ("p", json!(p)),
            ("k_max", json!(k_max)),
            ("spacing", json!(spacing)),
        ]),
        vec![],
        vec![],
    );
    emit(
        manifest,
        serde_json::to_value(&table).expect("table serializes"),
        &[],
        started,
    )?;
    Ok(0)
}

fn cmd_verify(suite: &str, out: Option<&Path>, started: Instant) -> Result<i32, Fail> {
    if !suites::SUITE_NAMES.contains(&suite) {
        return Err(input_error(format!(
            "unknown suite {suite:?}; choose one of: {}",
            suites::SUITE_NAMES.join(", ")
        )));
    }
    eprintln!("ptlab: running suite {suite}");
    let report = suites::run_suite(suite);
    let mut written: Vec<PathBuf> = Vec::new();
    if let Some(path) = out {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )
        .or_input_error(&format!("writing {}", path.display()))?;
        written.push(path.to_path_buf());
    }
    let passed = report.passed;
    let manifest = RunManifest::new(
        "verify",
        params(&[
            ("suite", json!(suite)),
            ("threads", json!(suites::thread_cap())),
            ("artifact", json!(ARTIFACT_VERSION)),
        ]),
        vec![],
        written.iter().map(|w| path_str(w)).collect(),
    );
    let outputs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    emit(
        manifest,
        serde_json::to_value(&report).expect("report serializes"),
        &outputs,
        started,
    )?;
    Ok(if passed { 0 } else { 1 })
}
