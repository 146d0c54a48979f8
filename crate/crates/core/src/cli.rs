//! Command-line front end: `run`, `verify` and `sweep`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::{self, RunOutcome, Scenario, ScenarioConfig};
use crate::verify::{self, VerifyOptions, BUILTIN_DESIGNS, NEGATIVE_CONTROL};

#[derive(Debug, Parser)]
#[command(name = "orbitforge", version, about = "Orbital stabilization by interconnection and damping assignment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario config and run its analyses.
    Run {
        config: PathBuf,
        /// Output directory (default: `output.dir` from the config, else `runs/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the structural conditions of a built-in design.
    Verify {
        /// im_msea, im_epd, pendulum_local, pendulum_global or im_msea_perturbed.
        design: String,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write report.toml here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config over a parameter grid.
    Sweep {
        config: PathBuf,
        /// `key=a:b:steps` or `key=v1,v2,..`; bare keys refer to plant.params. Repeatable.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, out } => run(&config, out),
        Command::Verify { design, grid, seed, out } => {
            if !BUILTIN_DESIGNS.contains(&design.as_str()) && design != NEGATIVE_CONTROL {
                return Err(Error::Config(format!(
                    "unknown design '{design}' (expected {} or {NEGATIVE_CONTROL})",
                    BUILTIN_DESIGNS.join(", ")
                )));
            }
            let opts = VerifyOptions {
                grid,
                seed: seed.unwrap_or(VerifyOptions::default().seed),
                ..VerifyOptions::default()
            };
            let report = verify::verify_builtin(&design, &opts)?;
            for c in &report.checks {
                println!("{:<24} {}  ({} violations)", c.name, status(c.passed), c.violation_count);
            }
            println!("{design}: {}", status(report.passed));
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let p = dir.join("report.toml");
                std::fs::write(&p, report.to_toml()?).map_err(|e| Error::io(&p, e))?;
            }
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Sweep { config, params, out } => sweep(&config, &params, out),
    }
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn output_dir(cfg: &ScenarioConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn run(path: &Path, out: Option<PathBuf>) -> Result<i32> {
    let (cfg, _) = ScenarioConfig::load(path)?;
    let dir = output_dir(&cfg, out);
    let sc = Scenario::build(cfg, &base_dir(path))?;
    let outcome = scenario::run_scenario(&sc)?;
    outcome.write(&dir)?;
    print_outcome(&outcome);
    println!("outputs written to {}", dir.display());
    Ok(if outcome.passed() { 0 } else { 1 })
}

fn print_outcome(o: &RunOutcome) {
    for (name, ok) in &o.summary.analyses {
        println!("{name:<20} {}", status(*ok));
    }
    println!("final_dist           {:.3e}", o.summary.final_dist);
    for f in &o.summary.fitted_rates {
        println!("rate {:<15} {:.5} (R^2 {:.5})", f.channel, f.rate, f.r_squared);
    }
    if let Some(p) = o.summary.period {
        println!("period               {p:.6}");
    }
    println!("{}: {}", o.summary.scenario, status(o.passed()));
}

#[derive(Debug, Serialize)]
struct SweepRow {
    index: usize,
    params: toml::Table,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_dist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    rates: toml::Table,
}

#[derive(Debug, Serialize)]
struct SweepFile {
    config: String,
    runs: Vec<SweepRow>,
}

/// Cartesian product of the parameter lists.
pub fn sweep_points(specs: &[(String, Vec<f64>)]) -> Vec<Vec<(String, f64)>> {
    specs.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((key.clone(), *v));
                    p
                })
            })
            .collect()
    })
}

fn sweep(path: &Path, params: &[String], out: Option<PathBuf>) -> Result<i32> {
    let (cfg, value) = ScenarioConfig::load(path)?;
    let specs = params
        .iter()
        .map(|s| scenario::parse_sweep(s))
        .collect::<Result<Vec<_>>>()?;
    let points = sweep_points(&specs);
    let dir = output_dir(&cfg, out);
    let base = base_dir(path);

    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(index, point)| {
            let mut table = toml::Table::new();
            for (k, v) in point {
                table.insert(k.clone(), toml::Value::Float(*v));
            }
            let attempt = || -> Result<RunOutcome> {
                let mut v = value.clone();
                for (k, x) in point {
                    scenario::set_key(&mut v, k, *x)?;
                }
                let sc = Scenario::build(ScenarioConfig::from_value(v)?, &base)?;
                let o = scenario::run_scenario(&sc)?;
                o.write(&dir.join(format!("run_{index:04}")))?;
                Ok(o)
            };
            match attempt() {
                Ok(o) => SweepRow {
                    index,
                    params: table,
                    passed: o.passed(),
                    final_dist: Some(o.summary.final_dist),
                    error: None,
                    rates: o
                        .summary
                        .fitted_rates
                        .iter()
                        .map(|f| (f.channel.clone(), toml::Value::Float(f.rate)))
                        .collect(),
                },
                Err(e) => SweepRow {
                    index,
                    params: table,
                    passed: false,
                    final_dist: None,
                    error: Some(e.to_string()),
                    rates: toml::Table::new(),
                },
            }
        })
        .collect();

    for r in &rows {
        let p: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match &r.error {
            Some(e) => println!("run_{:04} {:<30} FAIL  {e}", r.index, p.join(" ")),
            None => println!("run_{:04} {:<30} {}", r.index, p.join(" "), status(r.passed)),
        }
    }
    let all = rows.iter().all(|r| r.passed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let file = SweepFile {
        config: path.display().to_string(),
        runs: rows,
    };
    let p = dir.join("sweep.toml");
    std::fs::write(&p, toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?)
        .map_err(|e| Error::io(&p, e))?;
    println!("sweep written to {}", p.display());
    Ok(if all { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_product() {
        let pts = sweep_points(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0, 4.0, 5.0])]);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[5], vec![("a".to_string(), 2.0), ("b".to_string(), 5.0)]);
    }

    #[test]
    fn unknown_design_is_config_error() {
        assert_eq!(main_with_args(["orbitforge", "verify", "nope"]), 2);
        assert_eq!(main_with_args(["orbitforge", "run", "/nonexistent.toml"]), 2);
    }
}
