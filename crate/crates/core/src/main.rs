use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedids::dataset::{generate_synthetic, Schema, BENIGN};
use fedids::experiment::{read_synthetic_spec, rerender, run_all, validate_config, Approach, EvalTarget};
use fedids::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fedids",
    version,
    about = "Federated intrusion-detection transferability simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured approaches and write every artifact.
    Run {
        config: PathBuf,
        /// Comma-separated approach tags overriding the config.
        #[arg(long, value_delimiter = ',')]
        approaches: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score federated rows with the global model instead of the local ones.
        #[arg(long)]
        global: bool,
    },
    /// Validate a config and print its fully defaulted snapshot.
    Validate { config: PathBuf },
    /// Generate a synthetic dataset (CSV plus matching schema) from a spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rebuild pairs, overlap and summary from the matrices in a run directory.
    Report {
        dir: PathBuf,
        #[arg(long, default_value_t = fedids::evaluation::THRESHOLD)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            approaches,
            seed,
            out,
            global,
        } => {
            let mut cfg = validate_config(&config)?;
            if let Some(list) = approaches {
                cfg.approaches = list.iter().map(|s| s.parse::<Approach>()).collect::<Result<_>>()?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if global {
                cfg.evaluate = EvalTarget::Global;
            }
            let report = run_all(&cfg)?;
            print!("{}", report.summary());
            println!("artifacts written to {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = validate_config(&config)?;
            print!("{}", cfg.snapshot()?);
            Ok(())
        }
        Command::Synth { spec, out, seed } => synth(&spec, &out, seed),
        Command::Report { dir, threshold } => {
            print!("{}", rerender(&dir, threshold)?);
            Ok(())
        }
    }
}

fn synth(spec_path: &Path, out: &Path, seed: u64) -> Result<()> {
    let spec = read_synthetic_spec(spec_path).map_err(|e| Error::Config(vec![format!("spec: {e}")]))?;
    let ds = generate_synthetic(&spec, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let names = spec.class_names();
    let csv_path = out.join("dataset.csv");
    ds.write_csv(&csv_path, &names)?;
    let schema = Schema {
        label_column: "label".into(),
        feature_columns: None,
        exclude_columns: Vec::new(),
        labels: names.iter().map(|(&c, n)| (n.clone(), c)).collect(),
        ignore_labels: Vec::new(),
    };
    let schema_text = toml::to_string(&schema).map_err(|e| Error::Serialize(e.to_string()))?;
    let schema_path = out.join("schema.toml");
    std::fs::write(&schema_path, schema_text).map_err(|e| Error::Io {
        path: schema_path.clone(),
        source: e,
    })?;
    println!(
        "wrote {} records ({} benign) to {} with schema {}",
        ds.len(),
        ds.class_counts().get(&BENIGN).copied().unwrap_or(0),
        csv_path.display(),
        schema_path.display()
    );
    Ok(())
}
