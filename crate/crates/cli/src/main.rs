use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use fk_cli::{columns, emit, run, CliError, Format, Params, EXPERIMENTS};

const AFTER_HELP: &str = "\
Points: circle `0.25`, torus `0.1:0.2`, words `w0110`, seeded sequences `s7`,
flow points `<base>@<height>`. Point lists are comma separated; `--pairs`
takes `x;y,x;y` or `random:<count>,seed=<int>`; `--sample` and `--instances`
take `<count>,seed=<int>`.

Partitions: `grid:k=<k>` or `file:<path>` with lines
`cell <label> box <lo1> <hi1> [<lo2> <hi2>]`.

Config files: `--config <path>` with `key = value` lines using the flag
names; flags given on the command line win.

Exit codes: 0 all verdicts pass, 1 a verdict fails, 2 parse or usage error,
3 input refused by a size limit, 4 output or input file error.

CSV headers:
";

#[derive(Parser, Debug)]
#[command(name = "fk", version, about = "Orbit matching experiments for maps and flows")]
struct Cli {
    /// Experiment to run (may also come from the config file).
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
    experiment: Option<String>,
    /// System spec, e.g. `suspend(rotation:alpha=0.6180339887)`.
    #[arg(long)]
    system: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// Point list or `random:<count>,seed=<int>`.
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    pairs: Option<String>,
    /// `<count>,seed=<int>` sample for masses and covers.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// One value, or a comma list for `beta`.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// Discrete horizon of `lift-check`.
    #[arg(long)]
    n: Option<String>,
    /// Comma list of increasing horizons.
    #[arg(long)]
    horizons: Option<String>,
    /// Sampling step of flow orbits.
    #[arg(long)]
    step: Option<String>,
    /// Bracket width of the threshold bisections.
    #[arg(long)]
    tol: Option<String>,
    /// Partition spec; `beta` takes a `;` separated list.
    #[arg(long)]
    partition: Option<String>,
    #[arg(long = "partition-p")]
    partition_p: Option<String>,
    #[arg(long = "partition-q")]
    partition_q: Option<String>,
    /// Largest cut displacement of perturbed grids.
    #[arg(long)]
    perturb: Option<String>,
    /// Growth scale: identity, log or sqrt.
    #[arg(long)]
    u: Option<String>,
    /// Probe times per piece in the continuous-time checker.
    #[arg(long)]
    probes: Option<String>,
    /// `<count>,seed=<int>` partitions for the essentialize sweep.
    #[arg(long)]
    instances: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; overrides FK_JOBS.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Cli {
    fn params(&self) -> Params {
        let mut p = Params::new();
        let flags = [
            ("experiment", &self.experiment),
            ("system", &self.system),
            ("x", &self.x),
            ("y", &self.y),
            ("points", &self.points),
            ("pairs", &self.pairs),
            ("sample", &self.sample),
            ("delta", &self.delta),
            ("eps", &self.eps),
            ("t", &self.t),
            ("n", &self.n),
            ("horizons", &self.horizons),
            ("step", &self.step),
            ("tol", &self.tol),
            ("partition", &self.partition),
            ("partition-p", &self.partition_p),
            ("partition-q", &self.partition_q),
            ("perturb", &self.perturb),
            ("u", &self.u),
            ("probes", &self.probes),
            ("instances", &self.instances),
            ("format", &self.format),
            ("output", &self.output),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                p.set(key, v.clone());
            }
        }
        p
    }
}

fn jobs(cli: &Cli) -> Result<Option<usize>, CliError> {
    if let Some(j) = cli.jobs {
        return Ok(Some(j));
    }
    match std::env::var("FK_JOBS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Parse(format!("FK_JOBS: column 1: invalid count {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let mut params = cli.params();
    if let Some(path) = &cli.config {
        params.merge_file(path)?;
    }
    let experiment = params.str("experiment").map_err(|_| CliError::Usage("no experiment given".into()))?;
    if !EXPERIMENTS.contains(&experiment.as_str()) {
        return Err(CliError::Parse(format!("experiment: column 1: unknown experiment {experiment:?}")));
    }
    if let Some(n) = jobs(cli)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    let format = Format::parse(&params.str_or("format", "csv"))?;
    let output = params.str_opt("output").map(PathBuf::from);
    let start = Instant::now();
    let mut report = run(&experiment, &params)?;
    // The destination does not affect the content.
    report.metadata.config.remove("output");
    emit(&report, output.as_deref(), format)?;
    for v in &report.verdicts {
        eprintln!("{}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    eprintln!("{experiment}: {} rows in {:.2} s", report.rows.len(), start.elapsed().as_secs_f64());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let mut help = String::from(AFTER_HELP);
    for e in EXPERIMENTS {
        help.push_str(&format!("  {e}: {}\n", columns(e).join(",")));
    }
    let cmd = <Cli as clap::CommandFactory>::command().after_help(help);
    let matches = cmd.get_matches();
    let cli = <Cli as clap::FromArgMatches>::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("fk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
