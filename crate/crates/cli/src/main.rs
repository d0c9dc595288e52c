//! `lesioneval` command-line front end.
//!
//! Exit status: 0 when every case was scored, 2 when some case ended in a
//! typed error, 1 on configuration or I/O failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use lesioneval::batch::{self, Plan};
use lesioneval::metrics::{EvalOptions, MatchMode, PercentileMethod, DEFAULT_MIN_LESION_VOXELS};
use lesioneval::nifti::write_volume_file;
use lesioneval::phantom::{generate, PhantomSpec};
use lesioneval::report::{self, EvaluateReport};

#[derive(Parser)]
#[command(name = "lesioneval", version, about = "Lesion-wise Dice / 95HD scoring and leaderboards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one prediction against one reference volume.
    Evaluate(EvaluateArgs),
    /// Score every team on every reference case and rank the teams (with a
    /// single team, just score the directory).
    Leaderboard(LeaderboardArgs),
    /// Summary statistics from a report or distribution file.
    Summarize(SummarizeArgs),
    /// Write a synthetic reference/prediction pair from a JSON spec.
    Phantom(PhantomArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PercentileArg {
    Interp,
    Nearest,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Undilated,
    Dilated,
}

#[derive(Args)]
struct ScoringArgs {
    /// Reference lesions with fewer voxels are not evaluated.
    #[arg(long, default_value_t = DEFAULT_MIN_LESION_VOXELS)]
    min_lesion_voxels: usize,
    /// 95th-percentile convention for the Hausdorff distance.
    #[arg(long, value_enum, default_value = "interp")]
    percentile: PercentileArg,
    /// Whether the reference/prediction overlap test uses dilated lesions.
    #[arg(long = "match", value_enum, default_value = "undilated")]
    match_mode: MatchArg,
}

impl ScoringArgs {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            min_lesion_voxels: self.min_lesion_voxels,
            percentile: match self.percentile {
                PercentileArg::Interp => PercentileMethod::Linear,
                PercentileArg::Nearest => PercentileMethod::NearestRank,
            },
            match_mode: match self.match_mode {
                MatchArg::Undilated => MatchMode::Undilated,
                MatchArg::Dilated => MatchMode::Dilated,
            },
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// JSON report (the default).
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    /// CSV projection of the report.
    #[arg(long)]
    csv: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn emit(&self, json: impl FnOnce() -> String, csv: impl FnOnce() -> String) -> Result<()> {
        let text = if self.csv { csv() } else { json() };
        match &self.out {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
            }
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    prediction: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LeaderboardArgs {
    /// Directory of reference volumes, one file per case.
    #[arg(long, required_unless_present = "manifest")]
    reference_dir: Option<PathBuf>,
    /// Team prediction directory as NAME=DIR, or DIR to name the team after
    /// the directory. Repeatable.
    #[arg(long = "team", required_unless_present = "manifest")]
    teams: Vec<String>,
    /// Explicit case pairing (JSON); replaces basename pairing.
    #[arg(long, conflicts_with_all = ["reference_dir", "teams"])]
    manifest: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-team value lists for plotting (.csv or .json by extension).
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Run report, case report or distribution JSON.
    #[arg(long)]
    report: PathBuf,
    /// Print the rows as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write .nii.gz instead of .nii.
    #[arg(long)]
    gzip: bool,
}

fn parse_team(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((name, dir)) = arg.split_once('=') {
        if name.is_empty() || dir.is_empty() {
            bail!("bad --team value {arg:?}: expected NAME=DIR");
        }
        return Ok((name.to_string(), PathBuf::from(dir)));
    }
    let dir = PathBuf::from(arg);
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("cannot derive a team name from {arg:?}"))?
        .to_string();
    Ok((name, dir))
}

fn evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let options = args.scoring.options();
    let case = batch::evaluate_files(&args.reference, &args.prediction, &options);
    if let Some(err) = &case.error {
        eprintln!("error [{}]: {}", err.kind, err.message);
    }
    let ok = case.is_ok();
    let report = EvaluateReport::new(&options, case);
    args.output
        .emit(|| json_text(&report), || report.to_csv())?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn leaderboard(args: &LeaderboardArgs) -> Result<ExitCode> {
    let options = args.scoring.options();
    let plan = match (&args.manifest, &args.reference_dir) {
        (Some(manifest), _) => Plan::from_manifest(manifest)?,
        (None, Some(dir)) => {
            let teams = args
                .teams
                .iter()
                .map(|t| parse_team(t))
                .collect::<Result<Vec<_>>>()?;
            Plan::from_dirs(dir, &teams)?
        }
        (None, None) => bail!("either --reference-dir or --manifest is required"),
    };
    if plan.teams.len() < 2 {
        warn!("one team: scoring its cases without a ranking");
    }
    info!("{} cases × {} teams", plan.cases.len(), plan.teams.len());

    let report = batch::run(&plan, &options, args.workers)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    for team in &report.teams {
        for case in team.cases.iter().filter(|c| !c.is_ok()) {
            let err = case.error.as_ref().expect("failed case carries an error");
            eprintln!("{} / {}: {} ({})", team.team, case.case_id, err.message, err.kind);
        }
    }
    if let Some(lb) = &report.leaderboard {
        eprint!("{}", report::render_standings(lb));
    }
    eprint!("{}", report::render_summary_table(&report.summaries));

    if let Some(path) = &args.distribution {
        let data = report.distribution();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let text = if is_csv { data.to_csv() } else { json_text(&data) };
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }

    args.output.emit(|| json_text(&report), || report.to_csv())?;
    Ok(if report.case_error_count() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn summarize(args: &SummarizeArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("cannot read {}", args.report.display()))?;
    let rows = report::summarize_report(&text)?;
    if args.json {
        print!("{}", json_text(&rows));
    } else {
        print!("{}", report::render_summary_table(&rows));
    }
    Ok(ExitCode::SUCCESS)
}

fn phantom(args: &PhantomArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("cannot read {}", args.spec.display()))?;
    let spec: PhantomSpec = serde_json::from_str(&text).context("invalid phantom spec")?;
    let ph = generate(&spec)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let ext = if args.gzip { "nii.gz" } else { "nii" };
    let write = |name: &str, vol| -> Result<PathBuf> {
        let path = args.out.join(format!("{name}.{ext}"));
        write_volume_file(vol, &path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    };
    let r = write("reference", &ph.reference)?;
    let p = write("prediction", &ph.prediction)?;
    let m = args.out.join("manifest.json");
    fs::write(&m, json_text(&ph.manifest))?;
    for path in [r, p, m] {
        println!("{}", display(&path));
    }
    Ok(ExitCode::SUCCESS)
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap's own usage-error status (2) would collide with "some cases failed"
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Evaluate(a) => evaluate(a),
        Command::Leaderboard(a) => leaderboard(a),
        Command::Summarize(a) => summarize(a),
        Command::Phantom(a) => phantom(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
