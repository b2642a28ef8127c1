//! Command-line front end. Every stage prints one `key=value` summary line
//! on stdout; diagnostics go to the log on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::pipeline::{
    run_extraction, run_logo_protocol, run_split_protocol, run_testing, run_training, Config, Modes, Seeds,
};
use crate::synthetic::{generate, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "irispad", version, about = "Textured contact lens detection with BSIF features and SVM ensembles")]
struct Cli {
    /// INI configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key (bare or section.key), repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Set every seed (split, fold, tie, synthetic)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute BSIF histograms for the manifest images
    Extract,
    /// Train one SVM per scale on the training manifest
    Train,
    /// Evaluate models on the testing manifest
    Test,
    /// Seeded 80:20 split, per-scale training, ranking and ensemble sweep
    #[command(name = "protocol-8020")]
    Protocol8020,
    /// Leave-one-group-out over the manifest's attack groups
    #[command(name = "protocol-logo")]
    ProtocolLogo,
    /// Write a synthetic image set, manifests, filter banks and a config
    #[command(name = "gen-synthetic")]
    GenSynthetic {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Images per class
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Images per class held out for the test manifest
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        /// Attack groups
        #[arg(long, default_value_t = 1)]
        groups: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
    },
    /// Print the effective configuration as INI
    #[command(name = "show-config")]
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let (cfg, warnings) = Config::load(path)?;
            for w in warnings {
                log::warn!("{}: {w}", path.display());
            }
            cfg
        }
        None => Config::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = Seeds::all(seed);
    }
    cfg.check_values()?;
    Ok(cfg)
}

fn only(mode: &str) -> Modes {
    Modes {
        extract_features: mode == "extract",
        train_models: mode == "train",
        test_images: mode == "test",
    }
}

/// Config for a freshly generated synthetic set with every path filled in.
fn synthetic_config(out: &Path, base: &Config, has_holdout: bool) -> Config {
    let mut cfg = base.clone();
    cfg.modes = Modes {
        extract_features: true,
        train_models: has_holdout,
        test_images: has_holdout,
    };
    let p = &mut cfg.paths;
    p.image_dir = Some(out.join("images"));
    p.filter_dir = Some(out.join("filters"));
    p.feature_dir = Some(out.join("features"));
    p.model_dir = Some(out.join("models"));
    p.output_dir = Some(out.join("reports"));
    p.manifest = Some(out.join("manifest.csv"));
    if has_holdout {
        p.training_manifest = Some(out.join("train.csv"));
        p.testing_manifest = Some(out.join("test.csv"));
    }
    cfg
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = load_config(cli)?;
    let mut code = 0;
    let mut emit = |line: String| -> Result<()> {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    match &cli.command {
        Command::ShowConfig => {
            emit(cfg.to_ini())?;
        }
        Command::Extract | Command::Train | Command::Test => {
            let name = match cli.command {
                Command::Extract => "extract",
                Command::Train => "train",
                _ => "test",
            };
            cfg.modes = only(name);
            cfg.validate()?;
            match name {
                "extract" => {
                    let summary = run_extraction(&cfg)?;
                    for (file, err) in &summary.failures {
                        log::error!("failed {file}: {err}");
                    }
                    if !summary.failures.is_empty() {
                        code = 2;
                    }
                    emit(summary.summary_line(&cfg))?;
                }
                "train" => emit(run_training(&cfg)?.summary_line(&cfg))?,
                _ => {
                    let summary = run_testing(&cfg)?;
                    emit(summary.table())?;
                    emit(summary.summary_line(&cfg))?;
                }
            }
        }
        Command::Protocol8020 | Command::ProtocolLogo => {
            if cfg.modes.extract_features {
                let summary = run_extraction(&cfg)?;
                if !summary.failures.is_empty() {
                    code = 2;
                }
                emit(summary.summary_line(&cfg))?;
            }
            let line = match cli.command {
                Command::Protocol8020 => run_split_protocol(&cfg)?.summary_line(&cfg),
                _ => run_logo_protocol(&cfg)?.summary_line(&cfg),
            };
            emit(line)?;
        }
        Command::GenSynthetic {
            out: dir,
            count,
            holdout,
            groups,
            width,
            height,
        } => {
            let spec = SyntheticSpec {
                count: *count,
                holdout: *holdout,
                seed: cfg.seeds.synthetic,
                groups: *groups,
                width: *width,
                height: *height,
                bits: cfg.bits,
                filter_sizes: cfg.scales.clone(),
            };
            let set = generate(dir, &spec)?;
            let config_path = dir.join("config.ini");
            crate::fsutil::write_atomic(&config_path, synthetic_config(dir, &cfg, *holdout > 0).to_ini().as_bytes())?;
            emit(format!(
                "stage=gen-synthetic images={} manifest={} config={} {}",
                2 * count,
                set.manifest.display(),
                config_path.display(),
                cfg.seeds.summary()
            ))?;
        }
    }
    Ok(code)
}

/// Parse `args` (program name first) and run; returns the exit code:
/// 0 success, 1 fatal error or bad usage, 2 some images failed extraction.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = Cli::command().after_long_help(Config::key_help());
    let cli = match command
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            1
        }
    }
}
