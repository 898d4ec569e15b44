use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sens::density::DEFAULT_JC_GAMMA;
use sens::io::{read_long_csv_path, write_unit_csv, ConfigSection, RunSection, RunSummary};
use sens::methods::{analyze, repeat_analysis, Method, MethodOptions};
use sens::scoring::Antisym;
use sens::simulation::{
    run_replications, write_aggregate_csv, write_results_csv, ReplicationReport, ScenarioFile,
};
use sens::{Dataset, Error, Result};

#[derive(Parser)]
#[command(name = "sens", version, about = "Conformalized multiple testing with self-calibrated empirical null samples")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a long-format CSV (`unit,group,value`).
    Analyze(AnalyzeArgs),
    /// Run a scenario file and write replication CSVs.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NullChoice {
    Kn,
    Jc,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Per-unit results CSV.
    #[arg(long)]
    output: PathBuf,
    /// Summary file (default: standard output).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Method id; `sens` and `dsens` pick the null from --null-estimator.
    #[arg(long, default_value = "sens-kn")]
    method: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum)]
    null_estimator: Option<NullChoice>,
    #[arg(long, default_value_t = DEFAULT_JC_GAMMA)]
    jc_gamma: f64,
    #[arg(long)]
    bias_correct: bool,
    /// Anti-symmetric function: paper, g1 or g2.
    #[arg(long, default_value = "paper")]
    antisym: String,
    #[arg(long, default_value_t = 10)]
    derand_n: usize,
    #[arg(long, default_value_t = 0.5)]
    derand_alpha_frac: f64,
    #[arg(long, default_value_t = 1000)]
    sfbh_b: usize,
    /// Repeat a randomized method on independent splits.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Directory for results.csv and aggregate.csv.
    #[arg(long)]
    output_dir: PathBuf,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the method list (comma separated).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve_method(id: &str, null: Option<NullChoice>) -> Result<Method> {
    let jc = null == Some(NullChoice::Jc);
    let method = match id {
        "sens" if jc => Method::SensJc,
        "sens" => Method::SensKn,
        "dsens" if jc => Method::DsensJc,
        "dsens" => Method::DsensKn,
        other => other.parse().map_err(|_| {
            Error::Config(format!(
                "unknown method {other:?}; valid ids: sens, dsens, {}",
                Method::valid_ids()
            ))
        })?,
    };
    if let Some(choice) = null {
        let implied = match method {
            Method::SensKn | Method::DsensKn => Some(NullChoice::Kn),
            Method::SensJc | Method::DsensJc => Some(NullChoice::Jc),
            _ => None,
        };
        if implied != Some(choice) {
            return Err(Error::Config(format!(
                "--null-estimator conflicts with method {method}"
            )));
        }
    }
    Ok(method)
}

fn null_label(method: Method) -> &'static str {
    match method {
        Method::SensKn | Method::DsensKn | Method::CfBh => "kn",
        Method::SensJc | Method::DsensJc | Method::BhEen => "jc",
        Method::BhTn => "theoretical",
        Method::SfBh | Method::StBc => "none",
    }
}

fn check_output_dir(path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("output directory {} does not exist", dir.display())))
    }
}

fn run_analyze(a: &AnalyzeArgs) -> Result<()> {
    let method = resolve_method(&a.method, a.null_estimator)?;
    let opts = MethodOptions {
        alpha: a.alpha,
        jc_gamma: a.jc_gamma,
        bias_correct: a.bias_correct,
        antisym: a.antisym.parse::<Antisym>()?,
        derand_runs: a.derand_n,
        derand_alpha_fraction: a.derand_alpha_frac,
        sfbh_b: a.sfbh_b,
    };
    opts.validate()?;
    if a.repeats == 0 {
        return Err(Error::Config("--repeats must be at least 1".into()));
    }
    if a.repeats > 1 && !method.is_randomized() {
        return Err(Error::Config(format!(
            "method {method} is deterministic; --repeats needs a randomized method"
        )));
    }
    if !a.input.is_file() {
        return Err(Error::Config(format!("input {} is not a file", a.input.display())));
    }
    check_output_dir(&a.output)?;
    if let Some(s) = &a.summary {
        check_output_dir(s)?;
    }

    let data = read_long_csv_path(&a.input)?;
    let analysis = analyze(method, &data, &opts, a.seed)?;
    let repeats = if a.repeats > 1 {
        Some(repeat_analysis(method, &data, &opts, a.seed, a.repeats)?)
    } else {
        None
    };

    let mut table = Vec::new();
    write_unit_csv(
        &mut table,
        &data.ids(),
        &analysis,
        repeats.as_ref().map(|r| r.frequency.as_slice()),
    )?;
    fs::write(&a.output, table)?;

    let run = RunSection {
        method: method.id().into(),
        design: match data {
            Dataset::OneSample(_) => "one-sample",
            Dataset::TwoSample(_) => "two-sample",
        }
        .into(),
        units: data.len(),
        seed: a.seed,
    };
    let config = ConfigSection {
        alpha: opts.alpha,
        null_estimator: null_label(method).into(),
        jc_gamma: opts.jc_gamma,
        bias_correct: opts.bias_correct,
        antisym: opts.antisym.to_string(),
        derand_n: opts.derand_runs,
        derand_alpha_frac: opts.derand_alpha_fraction,
        sfbh_b: opts.sfbh_b,
        input: a.input.display().to_string(),
        output: a.output.display().to_string(),
    };
    let text = RunSummary::new(run, config, &analysis, repeats.as_ref()).to_text()?;
    match &a.summary {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scenario)?;
    let mut file = ScenarioFile::parse(&text)?;
    if let Some(r) = a.reps {
        file.reps = r;
    }
    if let Some(m) = &a.methods {
        file.methods = m.clone();
    }
    if let Some(s) = a.seed {
        file.seed = s;
    }
    if file.reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let methods = file.methods()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    let mut opts = MethodOptions::default();
    file.options.apply(&mut opts)?;
    opts.validate()?;
    let points = file.points()?;

    let mut rows: Vec<(String, ReplicationReport)> = Vec::new();
    for p in points {
        let report = run_replications(&p.model, &methods, file.reps, &opts, file.seed)?;
        rows.push((p.label, report));
    }

    fs::create_dir_all(&a.output_dir)?;
    let mut results = Vec::new();
    write_results_csv(&mut results, &rows)?;
    fs::write(a.output_dir.join("results.csv"), results)?;
    let mut aggregate = Vec::new();
    write_aggregate_csv(&mut aggregate, &rows)?;
    fs::write(a.output_dir.join("aggregate.csv"), aggregate)?;

    for (label, report) in &rows {
        for s in &report.summaries {
            println!(
                "{label} {}: fdr {:.4} ap {:.4} ({} of {} runs completed)",
                s.method,
                s.fdr,
                s.ap,
                s.completed,
                s.completed + s.failed
            );
        }
    }
    let failed: usize = rows
        .iter()
        .flat_map(|(_, r)| &r.summaries)
        .map(|s| s.failed)
        .sum();
    if failed > 0 {
        let first = rows
            .iter()
            .flat_map(|(_, r)| &r.records)
            .find_map(|r| r.result.as_ref().err())
            .cloned()
            .unwrap_or_default();
        return Err(Error::Config(format!("{failed} runs failed; first: {first}")));
    }
    Ok(())
}

fn report_error(kind: &str, msg: &str) {
    eprintln!("sens: error[{kind}]: {}", msg.replace('\n', " "));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            report_error("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        let built = if n == 0 {
            Err("--threads must be at least 1".to_string())
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        };
        if let Err(msg) = built {
            report_error("config", &msg);
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
