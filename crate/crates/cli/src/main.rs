use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use resbeam_core::harness::{preset_names, prepare, prepare_link, Metric, PreparedScenario, PRESETS};
use resbeam_core::{
    build_scenario, compute_field_map, derive_seed, run_experiment, ArrayId, ExperimentSpec, FieldMap,
    SimulationConfig, TableFormat,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "resbeam", version, about = "Resonant beam positioning simulator")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate both resonators to steady state; write power histories and field maps.
    Resonate(RunArgs),
    /// Run MUSIC at both transmitters for one seeded snapshot batch.
    Doa(RunArgs),
    /// One full pipeline run: resonance, DOA and triangulation.
    Locate(RunArgs),
    /// Run an experiment spec and write its result table.
    Sweep(RunArgs),
    /// Run a position-accuracy experiment and write its result table.
    Rmse(RunArgs),
    /// List the built-in presets, or print one.
    Presets {
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a JSON spec.
    spec: String,

    /// Master seed; overrides the spec.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (default: results/<name>/<timestamp>).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: TableFormat,

    /// Sweep point used by resonate, doa and locate.
    #[arg(long, default_value_t = 0)]
    point: usize,
}

fn parse_format(s: &str) -> std::result::Result<TableFormat, String> {
    s.parse().map_err(|e: resbeam_core::Error| e.to_string())
}

fn load_spec(arg: &str) -> Result<ExperimentSpec> {
    if preset_names().any(|n| n == arg) {
        return Ok(resbeam_core::preset(arg)?);
    }
    let path = Path::new(arg);
    if !path.exists() {
        bail!("`{arg}` is neither a preset nor an existing file");
    }
    ExperimentSpec::from_path(path).with_context(|| format!("loading {}", path.display()))
}

/// Output directory plus the bookkeeping shared by every command.
struct Run {
    command: &'static str,
    dir: PathBuf,
    spec: ExperimentSpec,
    format: TableFormat,
    files: Vec<String>,
}

impl Run {
    fn new(command: &'static str, args: &RunArgs) -> Result<Self> {
        let mut spec = load_spec(&args.spec)?;
        if let Some(seed) = args.seed {
            spec.master_seed = seed;
        }
        let dir = match &args.out_dir {
            Some(d) => d.clone(),
            None => PathBuf::from("results")
                .join(&spec.name)
                .join(chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut run = Self {
            command,
            dir,
            spec,
            format: args.format,
            files: Vec::new(),
        };
        let text = run.spec.to_json()?;
        run.write("spec.json", text)?;
        Ok(run)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> resbeam_core::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    /// Small key/value summary in the requested format.
    fn write_summary(&mut self, stem: &str, records: &[serde_json::Value]) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        let text = match self.format {
            TableFormat::Json => serde_json::to_string_pretty(records)? + "\n",
            TableFormat::Csv => {
                let keys: Vec<String> = match records.first() {
                    Some(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
                    _ => Vec::new(),
                };
                let mut out = keys.join(",") + "\n";
                for r in records {
                    let line: Vec<String> = keys
                        .iter()
                        .map(|k| match &r[k] {
                            serde_json::Value::String(s) => s.clone(),
                            serde_json::Value::Null => String::new(),
                            v => v.to_string(),
                        })
                        .collect();
                    out += &line.join(",");
                    out.push('\n');
                }
                out
            }
        };
        self.write(&name, text)
    }

    fn point_config(&self, point: usize) -> Result<SimulationConfig> {
        let values = self.spec.sweep_values();
        let Some(&value) = values.get(point) else {
            bail!("sweep point {point} out of range (spec has {})", values.len());
        };
        let series = &self.spec.series_list()[0];
        Ok(self.spec.point_config(series, value)?)
    }

    fn finish(mut self) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "name": self.spec.name,
            "spec_hash": self.spec.hash(),
            "master_seed": self.spec.master_seed,
            "threads": rayon::current_num_threads(),
            "code_version": env!("CARGO_PKG_VERSION"),
            "timestamp": chrono::Utc::now().to_rfc3339(),
            "files": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        self.write("run.json", text)?;
        println!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn resonate(args: &RunArgs) -> Result<()> {
    let mut run = Run::new("resonate", args)?;
    let cfg = run.point_config(args.point)?;
    let scenario = build_scenario(&cfg.scenario).context("geometry")?;
    let pattern = cfg.link.pattern().context("channel")?;
    let mut combined: Option<FieldMap> = None;
    let mut summary = Vec::new();
    for tx in [ArrayId::Tx1, ArrayId::Tx2] {
        let link = prepare_link(&scenario, &cfg, tx)?;
        let state = &link.state;
        run.write_with(&format!("power_history_{}.csv", tx.name()), |w| state.write_history_csv(w))?;
        println!(
            "{}: {} round trips, efficiency {:.4}, converged {}",
            tx.name(),
            state.iteration,
            state.efficiency(),
            state.converged
        );
        summary.push(json!({
            "tx": tx.name(),
            "iterations": state.iteration,
            "converged": state.converged,
            "mode_converged": state.mode_converged,
            "efficiency": state.efficiency(),
            "p_tx_total_w": state.power_history.last().map(|r| r.p_tx_total),
            "p_rx_total_w": state.power_history.last().map(|r| r.p_rx_total),
        }));
        if let Some(grid) = &run.spec.field_map {
            let map = compute_field_map(state, scenario.array(tx), scenario.wavelength, &pattern, grid)
                .map_err(|e| e.in_stage("field map"))?;
            run.write_with(&format!("field_map_{}.csv", tx.name()), |w| map.write_csv(w))?;
            match &mut combined {
                Some(c) => c.accumulate(&map)?,
                None => combined = Some(map),
            }
        }
    }
    if let Some(map) = combined {
        run.write_with("field_map.csv", |w| map.write_csv(w))?;
        run.write_with("field_map_dense.txt", |w| map.write_dense(w))?;
    }
    run.write_summary("resonance", &summary)?;
    run.finish()
}

fn prepared(run: &Run, point: usize) -> Result<PreparedScenario> {
    Ok(prepare(&run.point_config(point)?)?)
}

fn doa(args: &RunArgs) -> Result<()> {
    let mut run = Run::new("doa", args)?;
    let prep = prepared(&run, args.point)?;
    let seed = derive_seed(run.spec.master_seed, 0, args.point as u64, 0);
    let mut summary = Vec::new();
    for (i, link) in prep.links.iter().enumerate() {
        let spectrum = prep.spectrum(i, seed).map_err(|e| e.in_stage("doa"))?;
        run.write_with(&format!("spectrum_{}.csv", link.tx.name()), |w| spectrum.write_csv(w))?;
        let est = spectrum.peak.direction;
        let err = est.angle_to(&link.true_direction).to_degrees();
        println!(
            "{}: theta {:.4} deg, phi {:.4} deg (error {:.4} deg)",
            link.tx.name(),
            est.elevation_deg(),
            est.azimuth_deg(),
            err
        );
        summary.push(json!({
            "tx": link.tx.name(),
            "theta_deg": est.elevation_deg(),
            "phi_deg": est.azimuth_deg(),
            "true_theta_deg": link.true_direction.elevation_deg(),
            "true_phi_deg": link.true_direction.azimuth_deg(),
            "error_deg": err,
            "peak_value": spectrum.peak.peak_value,
        }));
    }
    run.write_summary("doa", &summary)?;
    run.finish()
}

fn locate(args: &RunArgs) -> Result<()> {
    let mut run = Run::new("locate", args)?;
    let prep = prepared(&run, args.point)?;
    let seed = derive_seed(run.spec.master_seed, 0, args.point as u64, 0);
    let out = prep.trial(seed)?;
    let p = out.position.coordinates;
    println!(
        "estimate ({:.5}, {:.5}, {:.5}) m, truth ({:.5}, {:.5}, {:.5}) m, error {:.3} mm",
        p.x,
        p.y,
        p.z,
        prep.truth.x,
        prep.truth.y,
        prep.truth.z,
        out.error_m * 1e3
    );
    let record = json!({
        "seed": seed,
        "x_hat": p.x,
        "y_hat": p.y,
        "z_hat": p.z,
        "truth_x": prep.truth.x,
        "truth_y": prep.truth.y,
        "truth_z": prep.truth.z,
        "error_m": out.error_m,
        "doa_err_tx1_deg": out.doa_error_deg[0],
        "doa_err_tx2_deg": out.doa_error_deg[1],
        "range_r1_m": out.position.range_r1,
        "skew_distance_m": out.position.skew_distance,
        "condition": format!("{:?}", out.position.condition_flag),
    });
    run.write_summary("location", &[record])?;
    run.finish()
}

fn sweep(args: &RunArgs, require_rmse: bool) -> Result<()> {
    if require_rmse {
        let spec = load_spec(&args.spec)?;
        if spec.metric != Metric::Rmse {
            bail!("`{}` is not a position-accuracy experiment; use `sweep`", spec.name);
        }
    }
    let mut run = Run::new(if require_rmse { "rmse" } else { "sweep" }, args)?;
    let out = run_experiment(&run.spec)?;
    let name = format!("results.{}", run.format.extension());
    let text = out.table.render(run.format)?;
    run.write(&name, text)?;
    if !out.trials.is_empty() {
        run.write_with("trials.csv", |w| out.write_trials_csv(w))?;
    }
    for row in &out.table.rows {
        let value = row.sweep_value.map_or_else(String::new, |v| format!("{v}"));
        let label = if row.series.is_empty() { String::new() } else { format!("[{}] ", row.series) };
        match (&row.error, row.rmse_m, row.mean_efficiency) {
            (Some(e), _, _) => println!("{label}{value}: error: {e}"),
            (None, Some(r), _) => println!("{label}{value}: rmse {:.3} mm, median {:.3} mm", r * 1e3, row.median_err_m.unwrap_or(f64::NAN) * 1e3),
            (None, None, Some(eff)) => println!("{label}{value}: efficiency {eff:.4}"),
            _ => println!("{label}{value}: no successful trials"),
        }
    }
    run.finish()
}

fn presets(name: Option<&str>) -> Result<()> {
    match name {
        None => {
            for (n, _) in PRESETS {
                let spec = resbeam_core::preset(n)?;
                println!("{n:8} {}", spec.description.unwrap_or_default());
            }
        }
        Some(n) => print!("{}", resbeam_core::preset(n)?.to_json()?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Resonate(a) => resonate(a),
        Command::Doa(a) => doa(a),
        Command::Locate(a) => locate(a),
        Command::Sweep(a) => sweep(a, false),
        Command::Rmse(a) => sweep(a, true),
        Command::Presets { name } => presets(name.as_deref()),
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
