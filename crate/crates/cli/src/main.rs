mod args;
mod commands;
mod failure;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{PredictInputs, TrainInputs};
use failure::Failure;
use settings::Settings;

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let settings = match &cli.command {
        Command::MineRules { mining, .. } => Settings::resolve(g, Some(mining), None, None)?,
        Command::FitNumeric { fit, .. } => Settings::resolve(g, None, Some(fit), None)?,
        Command::Train {
            mining, fit, train, ..
        } => Settings::resolve(g, Some(mining), Some(fit), Some(train))?,
        _ => Settings::resolve(g, None, None, None)?,
    };
    eprint!("{}", settings.echo());
    if let Some(n) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::data(format!("cannot start {n} threads: {e}")))?;
    }
    let out = &g.out;
    match &cli.command {
        Command::Ingest { data } => commands::ingest(out, data),
        Command::MineRules { data, .. } => commands::mine(out, &settings, data),
        Command::FitNumeric { data, .. } => commands::fit_numeric(out, &settings, data),
        Command::Train {
            data,
            rules,
            numeric_spec,
            f32,
            ..
        } => commands::train(
            out,
            &settings,
            TrainInputs {
                data,
                rules: rules.as_deref(),
                numeric_spec: numeric_spec.as_deref(),
                f32: *f32,
            },
        ),
        Command::Eval {
            data,
            checkpoint,
            check,
            split,
            by_cardinality,
        } => commands::eval(
            out,
            &settings,
            data,
            checkpoint,
            check,
            *split,
            *by_cardinality,
        ),
        Command::Predict {
            data,
            checkpoint,
            check,
            query,
            topk,
            filtered,
        } => commands::predict(
            &settings,
            PredictInputs {
                data,
                checkpoint,
                check,
                query,
                topk: *topk,
                filtered: *filtered,
            },
        ),
        Command::Prauc {
            data,
            checkpoint,
            check,
            query,
            ground_truth,
        } => commands::prauc(out, &settings, data, checkpoint, check, query, ground_truth),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
