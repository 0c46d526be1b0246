//! Command-line front end: run experiments, sweep the hyperparameter
//! grid, dump target-layer activations, or run the acceptance checks.

use std::path::PathBuf;
use std::process::ExitCode;

use cwtalar::harness::{
    self, dump_target_layer, grid_search, run_experiment, trainer_config, RunConfig,
};
use cwtalar::models::FeatureNet;
use cwtalar::selftest;
use cwtalar::trainer::Trainer;
use cwtalar::{CwError, Result};

const USAGE: &str = "\
usage: cwtalar <command> [--config FILE] [--<key> <value>]...

commands:
  run               train and evaluate one method over one stream
  grid              sweep trainer.lambda x trainer.beta, pick the best
  dump-activations  run the regularized method and dump per-task
                    target-layer activations per checkpoint
  selftest          run the property suite; --full adds the experiment
                    gates (exit code 1 on any failure)

Any config key doubles as a flag, e.g. --scenario icl --trainer.lambda 10.
Keys and defaults are listed in the README; unknown keys are rejected.
";

struct Cli {
    command: String,
    config_file: Option<PathBuf>,
    overrides: Vec<(String, String)>,
    full: bool,
}

fn parse_args(args: &[String]) -> Result<Cli> {
    if args.is_empty() {
        return Err(CwError::Config("missing command".into()));
    }
    let command = args[0].clone();
    let mut config_file = None;
    let mut overrides = Vec::new();
    let mut full = false;
    let mut i = 1;
    while i < args.len() {
        let arg = &args[i];
        if arg == "--full" {
            full = true;
            i += 1;
            continue;
        }
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CwError::Config(format!("expected a --flag, got '{arg}'")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = args
                    .get(i + 1)
                    .ok_or_else(|| CwError::Config(format!("flag --{key} needs a value")))?;
                i += 1;
                (key.to_string(), v.clone())
            }
        };
        if key == "config" {
            config_file = Some(PathBuf::from(value));
        } else {
            overrides.push((key, value));
        }
        i += 1;
    }
    Ok(Cli {
        command,
        config_file,
        overrides,
        full,
    })
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config_file {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for (key, value) in &cli.overrides {
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let table = run_experiment(cfg)?;
    print!("{}", table.to_csv());
    match table.end_average_stats() {
        Some((mean, std)) => println!(
            "# end-average {:.2}% ± {:.2} over {} seed(s)",
            mean * 100.0,
            std * 100.0,
            table.seeds().len()
        ),
        None => println!("# no successful seeds"),
    }
    if !table.failures.is_empty() {
        for (seed, err) in &table.failures {
            eprintln!("seed {seed} failed: {err}");
        }
        return Err(CwError::Data("some seeds failed".into()));
    }
    println!("# artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_grid(cfg: &RunConfig) -> Result<()> {
    let outcome = grid_search(cfg)?;
    for p in &outcome.points {
        println!(
            "lambda={} beta={} end_average={:.4}",
            p.lambda, p.beta, p.end_average_mean
        );
    }
    println!(
        "best: lambda={} beta={} end_average={:.4}",
        outcome.best.lambda, outcome.best.beta, outcome.best.end_average_mean
    );
    println!("grid table in {}", cfg.out_dir.join("grid.csv").display());
    Ok(())
}

fn cmd_dump_activations(cfg: &RunConfig) -> Result<()> {
    let (train, test) = harness::base_datasets(cfg)?;
    let stream = harness::build_stream(cfg, &train, &test)?;
    let tcfg = trainer_config(cfg);
    let fwidths = harness::feature_widths(cfg.profile, stream.input_dim);
    let gwidths = harness::generator_widths(cfg.profile);
    let seed = *cfg.seeds.first().unwrap_or(&1);
    let outcome = Trainer::new(&tcfg, seed).run_sequence(&stream, &fwidths, &gwidths)?;

    for sol in &outcome.solutions {
        let mut net = FeatureNet::new(&fwidths, seed)?;
        net.set_params(&sol.theta);
        let dir = cfg
            .out_dir
            .join(format!("activations/checkpoint{}", sol.task + 1));
        let named: Vec<(String, &cwtalar::data::LabeledDataset)> = (0..=sol.task)
            .map(|i| (format!("task{}", i + 1), &stream.tasks[i].test))
            .collect();
        let refs: Vec<(&str, &cwtalar::data::LabeledDataset)> =
            named.iter().map(|(n, d)| (n.as_str(), *d)).collect();
        dump_target_layer(&net, &refs, &dir)?;
        println!(
            "checkpoint {}: wrote {} file(s) in {}",
            sol.task + 1,
            refs.len(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_selftest(full: bool) -> Result<bool> {
    let mut results = selftest::property_suite();
    if full {
        results.extend(selftest::experiment_gates());
    }
    let (text, all_passed) = selftest::report(&results);
    print!("{text}");
    Ok(all_passed)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match parse_args(&args) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("{e}\n\n{USAGE}");
            return ExitCode::FAILURE;
        }
    };

    let outcome = match cli.command.as_str() {
        "run" | "grid" | "dump-activations" => match load_config(&cli) {
            Ok(cfg) => match cli.command.as_str() {
                "run" => cmd_run(&cfg),
                "grid" => cmd_grid(&cfg),
                _ => cmd_dump_activations(&cfg),
            },
            Err(e) => Err(e),
        },
        "selftest" => match cmd_selftest(cli.full) {
            Ok(true) => Ok(()),
            Ok(false) => {
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            Ok(())
        }
        other => Err(CwError::Config(format!("unknown command '{other}'"))),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
