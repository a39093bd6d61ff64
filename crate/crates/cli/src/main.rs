use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use icschaos::config::{demo_tec, sweep_configs, validate_str, ConfigFile, DemoScenario};
use icschaos::experiment::{batch_run, run_experiment};
use icschaos::report::{render_csv, render_json, render_table, write_jsonl, write_trajectory_csv, SummaryRow};

/// Deterministic chaos experiments on a simulated networked control system.
#[derive(Parser)]
#[command(name = "icschaos", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a config for schema and invariant errors.
    Validate { config: PathBuf },
    /// Run one experiment. Exit code: 0 held, 2 disproved, 3 aborted, 4 no steady state, 1 error.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "icschaos-out")]
        out: PathBuf,
        /// Overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run one experiment per value of a numeric config key.
    Sweep {
        config: PathBuf,
        /// Dotted key path, e.g. `events.0.added_latency_min`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Write the built-in TEC-surrogate experiment config.
    DemoTec {
        #[arg(long, value_enum, default_value_t = Scenario::RouterOutage)]
        scenario: Scenario,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Nominal,
    RouterOutage,
    Overdrive,
    LatencySweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Cmd) -> anyhow::Result<u8> {
    match cmd {
        Cmd::Validate { config } => validate(&config),
        Cmd::Run { config, out, seed, format } => run(&config, &out, seed, format),
        Cmd::Sweep { config, param, values, out, seed, parallel, format } => {
            sweep(&config, &param, &values, out.as_deref(), seed, parallel, format)
        }
        Cmd::DemoTec { scenario, out } => {
            let s = match scenario {
                Scenario::Nominal => DemoScenario::Nominal,
                Scenario::RouterOutage => DemoScenario::RouterOutage,
                Scenario::Overdrive => DemoScenario::Overdrive,
                Scenario::LatencySweep => DemoScenario::LatencySweep,
            };
            let text = demo_tec(s).to_toml_string();
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn validate(path: &Path) -> anyhow::Result<u8> {
    let issues = validate_str(&read(path)?);
    if issues.is_empty() {
        println!("ok");
        return Ok(0);
    }
    for i in &issues {
        eprintln!("{i}");
    }
    Ok(1)
}

fn load(path: &Path, seed: Option<u64>) -> anyhow::Result<ConfigFile> {
    let mut cfg = ConfigFile::from_toml_str(&read(path)?).map_err(|i| anyhow!("{i}"))?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn print_rows(rows: &[SummaryRow], format: Format) {
    let text = match format {
        Format::Table => render_table(rows),
        Format::Csv => render_csv(rows),
        Format::Json => render_json(rows),
    };
    print!("{text}");
}

fn run(path: &Path, out: &Path, seed: Option<u64>, format: Format) -> anyhow::Result<u8> {
    let spec = load(path, seed)?.build()?;
    let result = run_experiment(&spec)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut w = create(out, "result.jsonl")?;
    writeln!(w, "{}", result.to_json_line())?;
    w.flush()?;
    let mut w = create(out, "trajectory.csv")?;
    write_trajectory_csv(&result.trajectory, &mut w)?;
    w.flush()?;
    let mut w = create(out, "events.jsonl")?;
    write_jsonl(&result.events, &mut w)?;
    w.flush()?;
    let mut w = create(out, "messages.jsonl")?;
    write_jsonl(&result.messages, &mut w)?;
    w.flush()?;

    print_rows(&[SummaryRow::from_result(result.name.clone(), &result)], format);
    Ok(result.verdict.exit_code() as u8)
}

fn parse_values(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().with_context(|| format!("bad sweep value `{v}`")))
        .collect()
}

fn sweep(
    path: &Path,
    param: &str,
    values: &str,
    out: Option<&Path>,
    seed: Option<u64>,
    parallel: usize,
    format: Format,
) -> anyhow::Result<u8> {
    let values = parse_values(values)?;
    let text = read(path)?;
    let mut cfgs = sweep_configs(&text, param, &values)?;
    if let Some(s) = seed {
        if param == "run.seed" {
            bail!("--seed conflicts with sweeping run.seed");
        }
        for c in &mut cfgs {
            c.run.seed = s;
        }
    }
    let specs = cfgs.iter().map(|c| c.build()).collect::<Result<Vec<_>, _>>()?;
    let results = batch_run(&specs, parallel);

    let mut rows = Vec::new();
    let mut failed = false;
    for ((v, spec), r) in values.iter().zip(&specs).zip(&results) {
        let label = format!("{param}={v}");
        match r {
            Ok(r) => rows.push(SummaryRow::from_result(label, r)),
            Err(e) => {
                eprintln!("{label}: {e}");
                failed = true;
                rows.push(SummaryRow::error(label, &spec.name, spec.sim.seed));
            }
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut w = create(dir, "results.jsonl")?;
        for r in results.iter().flatten() {
            writeln!(w, "{}", r.to_json_line())?;
        }
        w.flush()?;
        fs::write(dir.join("summary.csv"), render_csv(&rows))?;
    }
    print_rows(&rows, format);
    Ok(if failed { 1 } else { 0 })
}
