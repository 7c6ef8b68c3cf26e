use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sourcelens_core::fixture::{generate_fixture, IMAGE_COUNT};
use sourcelens_core::pipeline::{self, stages, PipelineConfig};
use sourcelens_service::AppState;

#[derive(Parser)]
#[command(name = "sourcelens", version, about = "Compare how real and suspicious news accounts write, what they talk about and what they post")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

/// Config flags. Each one overrides the config-file key of the same name
/// (dashes become underscores).
#[derive(Args, Default)]
struct Global {
    /// key = value config file; relative paths in it resolve against its directory
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fail on the first malformed record instead of skipping it
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Bundle directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, hide_short_help = true)]
    accounts: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    tweets: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    lexicons: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    gazetteer: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    blocklist: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    images: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    image_dir: Option<PathBuf>,
    #[arg(long, global = true, hide_short_help = true)]
    resolution: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    dimension: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    window: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    negatives: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    epochs: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    learning_rate: Option<String>,
    #[arg(long, global = true, hide_short_help = true)]
    min_count: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with planted structure, plus a config for it
    GenerateFixture {
        /// Output directory
        dir: PathBuf,
    },
    /// Load the account list and tweets into the bundle directory
    Ingest,
    /// Language profiles, entities, graphs and communities
    Analyze,
    /// Train the real and suspicious word embedding models
    Embed,
    /// Load image feature vectors
    IndexImages,
    /// Hash the stage outputs and write the manifest
    Bundle,
    /// All stages in order
    Run,
    /// Serve the bundle over HTTP
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Bundle directory; defaults to `out`
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

impl Global {
    fn overrides(&self) -> Vec<(String, String)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        let pairs = [
            ("strict", self.strict.then(|| "true".to_string())),
            ("seed", self.seed.map(|s| s.to_string())),
            ("threads", self.threads.map(|t| t.to_string())),
            ("out", path(&self.out)),
            ("accounts", path(&self.accounts)),
            ("tweets", path(&self.tweets)),
            ("lexicons", path(&self.lexicons)),
            ("gazetteer", path(&self.gazetteer)),
            ("blocklist", path(&self.blocklist)),
            ("images", path(&self.images)),
            ("image_dir", path(&self.image_dir)),
            ("resolution", self.resolution.clone()),
            ("dimension", self.dimension.clone()),
            ("window", self.window.clone()),
            ("negatives", self.negatives.clone()),
            ("epochs", self.epochs.clone()),
            ("learning_rate", self.learning_rate.clone()),
            ("min_count", self.min_count.clone()),
        ];
        pairs.into_iter().filter_map(|(k, v)| Some((k.to_string(), v?))).collect()
    }

    fn config(&self) -> Result<PipelineConfig> {
        let overrides = self.overrides();
        let cfg = match &self.config {
            Some(path) => PipelineConfig::load(path, &overrides)?,
            None => PipelineConfig::from_overrides(&overrides)?,
        };
        if let Some(n) = cfg.threads()? {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
        }
        Ok(cfg)
    }
}

fn serve(cfg: &PipelineConfig, addr: SocketAddr, bundle: Option<PathBuf>) -> Result<()> {
    let dir = match bundle {
        Some(d) => d,
        None => cfg.path("out")?,
    };
    let image_dir = cfg.optional_path("image_dir");
    let state = AppState::load(&dir, image_dir.as_deref()).with_context(|| format!("loading bundle {}", dir.display()))?;
    let c = &state.bundle.manifest.counts;
    println!("bundle {}: {} accounts, {} tweets, {} images", dir.display(), c.accounts, c.tweets, c.images);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = sourcelens_service::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        sourcelens_service::serve(listener, Arc::new(state), async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await?;
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::GenerateFixture { dir } => {
            let seed = g.seed.unwrap_or(42);
            let truth = generate_fixture(seed, &dir)?;
            println!(
                "fixture {}: seed {seed}, {} tweets, {} images; config {}",
                dir.display(),
                truth.tweet_count,
                IMAGE_COUNT,
                Path::new(&dir).join("pipeline.conf").display()
            );
        }
        Command::Ingest => {
            let (accounts, tweets) = stages::ingest(&g.config()?)?;
            println!("ingest: {accounts} accounts, {tweets} tweets");
        }
        Command::Analyze => {
            let a = stages::analyze(&g.config()?)?;
            println!(
                "analyze: {} profiles, {} entities, {} communities (Q={:.4})",
                a.profiles.profiles.len(),
                a.bipartite.entities.len(),
                a.communities.community_count,
                a.communities.modularity
            );
        }
        Command::Embed => {
            let e = stages::embed(&g.config()?)?;
            println!(
                "embed: vocabulary {} real, {} suspicious; final epoch loss {:.4} / {:.4}",
                e.real.vocab().len(),
                e.suspicious.vocab().len(),
                e.epoch_losses_real.last().copied().unwrap_or(f64::NAN),
                e.epoch_losses_suspicious.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::IndexImages => {
            let images = stages::index_images(&g.config()?)?;
            println!("index-images: {} images ({} skipped)", images.len(), images.warnings());
        }
        Command::Bundle => println!("{}", pipeline::bundle(&g.config()?)?),
        Command::Run => println!("{}", pipeline::run_pipeline(&g.config()?)?),
        Command::Serve { addr, bundle } => {
            let cfg = match (&g.config, &bundle) {
                (None, Some(_)) => PipelineConfig::from_overrides(&g.overrides())?,
                _ => g.config()?,
            };
            serve(&cfg, addr, bundle)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // stage errors already carry their cause in the message
            if e.is::<pipeline::PipelineError>() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
