mod args;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use settings::Settings;

/// Environment variable that caps the worker threads of parallel sections.
const THREADS_ENV: &str = "GMC_THREADS";

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let common = cli.command.common();
    let mut settings = Settings::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        settings.train.seed = seed;
    }
    if let Command::Train { stage, .. } = &cli.command {
        settings.train.stage = *stage;
    }
    settings.echo();
    match &cli.command {
        Command::Train {
            from,
            resume,
            checkpoint_every,
            out,
            ..
        } => commands::train(&settings, from.as_deref(), resume.as_deref(), *checkpoint_every, out),
        Command::Compress {
            input,
            weights,
            out,
            dump_latents,
            ..
        } => commands::compress(&settings, input, weights, out, dump_latents.as_deref()),
        Command::Decompress {
            input,
            weights,
            weights_g2,
            alpha,
            mode,
            out,
            dump_latents,
            ..
        } => commands::decompress(
            &settings,
            input,
            weights,
            weights_g2.as_deref(),
            *alpha,
            *mode,
            out,
            dump_latents.as_deref(),
        ),
        Command::Sweep {
            input,
            weights,
            weights_g2,
            original,
            alphas,
            mode,
            out,
            ..
        } => commands::sweep(&settings, input, weights, weights_g2, original, alphas, *mode, out),
        Command::Eval {
            original,
            reconstruction,
            bitstream,
            weights,
            ..
        } => commands::eval(
            &settings,
            original,
            reconstruction,
            bitstream.as_deref(),
            weights.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Train {
        stage: 2,
        from: None,
        resume: None,
        ..
    } = &cli.command
    {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "stage 2 needs --from <stage-1 checkpoint> (or --resume <stage-2 checkpoint>)",
            )
            .exit();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
