use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coupled_ie::pipeline::{self, DirLock, Mode, Pipeline, PipelineConfig, Stage};
use coupled_ie::synthdata::{self, SynthSpec};
use coupled_ie::{Error, Result};

#[derive(Parser)]
#[command(
    name = "coupled-ie",
    version,
    about = "Relation extraction with list and section coupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with pipeline settings.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured mode (DS1, DS2, DS+L, DIEBOLDS-SN, DIEBOLDS-S, DIEBOLDS-N, DIEBOLDS).
    #[arg(long)]
    mode: Option<Mode>,
    /// Recompute even when inputs are unchanged.
    #[arg(long)]
    force: bool,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    Ingest(Common),
    Seeds(Common),
    Graph(Common),
    Propagate(Common),
    Select(Common),
    Featurize(Common),
    Train(Common),
    Extract(Common),
    Evaluate(Common),
    /// Grid search over top-N and seed fraction against validation pseudo-labels.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
        top_n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        seed_ratio: Vec<f64>,
    },
    /// All stages; several replicates when asked.
    Run {
        #[command(flatten)]
        common: Common,
        /// Defaults to the configured count.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Prints the 11-point curves of evaluated modes as CSV.
    PlotData(Common),
    /// Writes a synthetic corpus and a matching config.toml into `--out`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML generator settings; defaults apply otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(m) = common.mode {
        config.mode = m;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn stage(common: &Common, stage: Stage) -> Result<()> {
    let p = Pipeline::new(load(common)?)?;
    let _lock = DirLock::acquire(&p.config.out_dir)?;
    let outcome = p.run_stage(stage, common.force)?;
    let state = if outcome.skipped { "up to date" } else { "done" };
    println!("{stage}: {state} ({})", p.stage_dir(stage).display());
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn summary(label: &str, r: &coupled_ie::evaluate::EvalReport) {
    print!(
        "{label}: P={:.4} R={:.4} F1={:.4}",
        r.micro.precision, r.micro.recall, r.micro.f1
    );
    if let Some(q) = r.qa {
        print!(" MRR={:.4} MAP={:.4}", q.mrr, q.map);
    }
    println!();
}

fn run(common: &Common, replicates: Option<usize>) -> Result<()> {
    let config = load(common)?;
    let n = replicates.unwrap_or(config.replicates);
    if n <= 1 {
        let p = Pipeline::new(config)?;
        p.run_all(common.force)?;
        summary(p.config.mode.as_str(), &p.report()?);
        return Ok(());
    }
    let (mean, runs) = pipeline::run_replicates(&config, n, common.force)?;
    for (k, r) in runs.iter().enumerate() {
        summary(&format!("run{k}"), r);
    }
    summary("mean", &mean);
    write_json(&config.out_dir.join("mean_report.json"), &mean)
}

fn tune(common: &Common, top_n: &[usize], seed_ratio: &[f64]) -> Result<()> {
    let p = Pipeline::new(load(common)?)?;
    let _lock = DirLock::acquire(&p.config.out_dir)?;
    for st in [Stage::Ingest, Stage::Seeds, Stage::Graph] {
        p.run_stage(st, common.force)?;
    }
    let report = pipeline::tune(&p, top_n, seed_ratio)?;
    for row in &report.rows {
        println!("top_n={} seed_ratio={} F1={:.4}", row.top_n, row.seed_ratio, row.prf.f1);
    }
    println!(
        "best: top_n={} seed_ratio={}",
        report.best.top_n, report.best.seed_ratio
    );
    let dir = p.config.out_dir.join(p.config.mode.slug());
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    write_json(&dir.join("tune.json"), &report)
}

fn plot_data(common: &Common) -> Result<()> {
    let config = load(common)?;
    let modes: Vec<Mode> = match common.mode {
        Some(m) => vec![m],
        None => Mode::ALL.to_vec(),
    };
    let mut out = Vec::new();
    let mut header = true;
    for mode in modes {
        let p = Pipeline::new(PipelineConfig { mode, ..config.clone() })?;
        if p.manifest(Stage::Evaluate).is_none() {
            if common.mode.is_some() {
                return Err(Error::MissingArtifact {
                    stage: "plot-data".into(),
                    run_first: "evaluate".into(),
                });
            }
            continue;
        }
        let mut buf = Vec::new();
        pipeline::write_curve(mode, &p.report()?, &mut buf).expect("write to memory");
        let text = String::from_utf8(buf).expect("utf-8 csv");
        let skip = usize::from(!header);
        for line in text.lines().skip(skip) {
            writeln!(out, "{line}").expect("write to memory");
        }
        header = false;
    }
    if header {
        return Err(Error::MissingArtifact {
            stage: "plot-data".into(),
            run_first: "evaluate".into(),
        });
    }
    std::io::stdout().write_all(&out).map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn synth(out: &Path, spec: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut s = match spec {
        Some(path) => SynthSpec::load(path)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        s.rng_seed = seed;
    }
    let data = synthdata::generate(&s)?;
    synthdata::write_synth(&data, out)?;
    // relative paths resolve against the config file's directory
    let config = PipelineConfig {
        rng_seed: s.rng_seed,
        ..synthdata::pipeline_config(Path::new(""), Path::new("out"))
    };
    let path = out.join("config.toml");
    fs::write(&path, config.to_toml()).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!(
        "wrote {} target and {} structured documents, {} gold facts, config {}",
        data.target.documents.len(),
        data.structured.documents.len(),
        data.gold.facts.len(),
        path.display()
    );
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(c) => stage(&c, Stage::Ingest),
        Command::Seeds(c) => stage(&c, Stage::Seeds),
        Command::Graph(c) => stage(&c, Stage::Graph),
        Command::Propagate(c) => stage(&c, Stage::Propagate),
        Command::Select(c) => stage(&c, Stage::Select),
        Command::Featurize(c) => stage(&c, Stage::Featurize),
        Command::Train(c) => stage(&c, Stage::Train),
        Command::Extract(c) => stage(&c, Stage::Extract),
        Command::Evaluate(c) => stage(&c, Stage::Evaluate),
        Command::Tune {
            common,
            top_n,
            seed_ratio,
        } => tune(&common, &top_n, &seed_ratio),
        Command::Run { common, replicates } => run(&common, replicates),
        Command::PlotData(c) => plot_data(&c),
        Command::Synth { out, spec, seed } => synth(&out, spec.as_deref(), seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {message}", e.code());
            ExitCode::FAILURE
        }
    }
}
