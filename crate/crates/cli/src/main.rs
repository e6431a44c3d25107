use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lastmile::config::Config;
use lastmile::episode::{run_batch, EpisodeResult};
use lastmile::eval;
use lastmile::explorers::ExplorerKind;
use lastmile::sim::generate::Difficulty;
use lastmile::sim::io::{read_episodes, read_scenes, write_episodes, write_scenes};
use lastmile::sim::{generate_scenes_and_episodes, Episode, Scene};
use lastmile::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_GENERATION: u8 = 3;

#[derive(Parser)]
#[command(name = "lastmile", version, about = "Generate synthetic worlds and evaluate last-mile image-goal navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write scenes and episodes for every difficulty.
    Generate(Common),
    /// Roll out every episode and write results and a summary table.
    Run(Common),
    /// Run one of the ablation studies.
    Study {
        #[arg(value_enum)]
        study: Study,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Study {
    StopBudget,
    SwitchAccuracy,
    HeadingBias,
    NoiseSweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory written by `generate`; worlds are generated from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    explorer: Option<ExplorerKind>,
    #[arg(long, value_enum)]
    sling: Option<Toggle>,
    /// Dotted `key=value` setting, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> lastmile::Result<Config> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(w) = self.workers {
            overrides.push(format!("run.workers={w}"));
        }
        if let Some(e) = self.explorer {
            overrides.push(format!("explorer.kind=\"{}\"", e.name()));
        }
        if let Some(t) = self.sling {
            overrides.push(format!("run.sling={}", matches!(t, Toggle::On)));
        }
        Config::load(self.config.as_deref(), &overrides)
    }

    fn world(&self, cfg: &Config) -> lastmile::Result<(Vec<Scene>, Vec<Episode>)> {
        match &self.data {
            Some(dir) => {
                let scenes = read_scenes(&dir.join("scenes"))?;
                let episodes = read_episodes(&dir.join("episodes.jsonl"))?;
                Ok((scenes, episodes))
            }
            None => generate_scenes_and_episodes(&cfg.generation, &cfg.sensor.intrinsics()?, cfg.seed),
        }
    }
}

fn write(path: &Path, text: &str) -> lastmile::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn prepare_out(common: &Common, cfg: &Config) -> lastmile::Result<()> {
    fs::create_dir_all(&common.out).map_err(|e| Error::Io(format!("{}: {e}", common.out.display())))?;
    write(&common.out.join("effective_config.toml"), &cfg.to_toml()?)
}

fn write_results(path: &Path, results: &[EpisodeResult]) -> lastmile::Result<()> {
    let mut text = String::new();
    for r in results {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?);
        text.push('\n');
    }
    write(path, &text)
}

fn generate(common: &Common) -> lastmile::Result<()> {
    let cfg = common.config()?;
    let (scenes, episodes) = generate_scenes_and_episodes(&cfg.generation, &cfg.sensor.intrinsics()?, cfg.seed)?;
    prepare_out(common, &cfg)?;
    write_scenes(&common.out.join("scenes"), &scenes)?;
    write_episodes(&common.out.join("episodes.jsonl"), &episodes)?;
    println!("scenes: {}", scenes.len());
    for d in Difficulty::ALL {
        println!("{}: {}", d.name(), episodes.iter().filter(|e| e.difficulty == d).count());
    }
    Ok(())
}

fn run(common: &Common) -> lastmile::Result<()> {
    let cfg = common.config()?;
    let (scenes, episodes) = common.world(&cfg)?;
    prepare_out(common, &cfg)?;
    let results = run_batch(&scenes, &episodes, &cfg, cfg.seed, cfg.run.workers)?;
    write_results(&common.out.join("results.jsonl"), &results)?;
    let csv = eval::summary_csv(&eval::summarize(&results, &cfg.run.fold)?);
    write(&common.out.join("summary.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn study(kind: Study, common: &Common) -> lastmile::Result<()> {
    let cfg = common.config()?;
    let (scenes, episodes) = common.world(&cfg)?;
    prepare_out(common, &cfg)?;
    let workers = cfg.run.workers;
    let (name, csv) = match kind {
        Study::StopBudget => {
            let max = cfg.studies.max_stop_budget;
            let (rows, results) = eval::run_stop_budget_study(&scenes, &episodes, &cfg, max, cfg.seed, workers)?;
            write_results(&common.out.join("results.jsonl"), &results)?;
            ("stop_budget.csv", eval::stop_budget_csv(&rows))
        }
        Study::SwitchAccuracy => {
            let (acc, _) = eval::run_switch_accuracy_study(&scenes, &cfg, cfg.seed, workers)?;
            ("switch_accuracy.csv", eval::switch_accuracy_csv(&acc))
        }
        Study::HeadingBias => {
            let results = run_batch(&scenes, &episodes, &cfg, cfg.seed, workers)?;
            write_results(&common.out.join("results.jsonl"), &results)?;
            let report = eval::heading_bias_report(&results, cfg.studies.heading_bin_deg)?
                .ok_or_else(|| Error::Domain("no episode reached the exploit phase".into()))?;
            write(&common.out.join("heading_histogram.csv"), &eval::heading_histogram_csv(&report))?;
            ("heading_bias.csv", eval::heading_bias_csv(&report))
        }
        Study::NoiseSweep => {
            let conditions = eval::noise_conditions(&cfg.noise, &cfg.studies.noise_scales);
            let rows = eval::run_noise_sweep(&scenes, &episodes, &cfg, &conditions, cfg.seed, workers)?;
            let trend = if eval::scaled_trend_non_increasing(&rows) { "non-increasing" } else { "not monotone" };
            println!("success across noise scales: {trend}");
            ("noise_sweep.csv", eval::noise_csv(&rows))
        }
    };
    write(&common.out.join(name), &csv)?;
    print!("{csv}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Io(_) => EXIT_DATA,
        Error::GenerationInfeasible { .. } => EXIT_GENERATION,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => run(c),
        Command::Study { study: s, common } => study(*s, common),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
