//! Command-line wiring for the `cddg` binary.
//!
//! Each subcommand is a thin shell: parse flags, resolve the config file,
//! call into the library, write artifacts under the output directory, and
//! echo the resolved config next to them so any run can be reproduced from
//! its artifacts alone. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! config error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::data::{generate_synthetic, leave_one_out, save_as_directory, DGDataset};
use crate::evaluation::{
    export_embeddings, export_plot_data, probe_disentanglement, run_ablation, run_benchmark,
};
use crate::training::{load_checkpoint, train, CheckpointMeta, SelectionMethod, TrainVariant};
use crate::verify::run_verification;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "cddg",
    version,
    about = "Dual-encoder contrastive disentanglement workbench"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured synthetic corpus to disk as a domain/class image tree
    GenData {
        /// TOML config file; defaults apply when omitted
        config: Option<PathBuf>,
        /// Dataset directory (default: <output_dir>/dataset)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model with one domain held out
    Train {
        config: Option<PathBuf>,
        /// Held-out target domain, by name
        #[arg(long)]
        target: String,
        /// Objective variant: full_comb, full_ind, disentangle_only, contrastive_only
        #[arg(long)]
        variant: Option<String>,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Leave-one-domain-out sweep over every target and seed
    Benchmark {
        config: Option<PathBuf>,
        /// Comma-separated seed list
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Benchmark all four objective variants and render the comparison table
    Ablate {
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Fit linear probes on a trained checkpoint's frozen embeddings
    Probe {
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target domain the checkpoint was trained against
        #[arg(long)]
        target: String,
    },
    /// Dump per-example embeddings from a checkpoint to delimited text
    Export {
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Restrict the export to one domain, by name
        #[arg(long)]
        domain: Option<String>,
        /// Output file (default: <output_dir>/embeddings.csv)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write a 2-D principal-plane table next to the export
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Run the numeric self-verification suite
    Verify,
}

/// Parse real process arguments and run. Returns the process exit code;
/// clap itself exits with 2 on usage errors.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => cmd_gen_data(config, out),
        Command::Train {
            config,
            target,
            variant,
            seed,
        } => cmd_train(config, &target, variant.as_deref(), seed),
        Command::Benchmark { config, seeds } => cmd_benchmark(config, &seeds),
        Command::Ablate { config, seeds } => cmd_ablate(config, &seeds),
        Command::Probe {
            config,
            checkpoint,
            target,
        } => cmd_probe(config, &checkpoint, &target),
        Command::Export {
            config,
            checkpoint,
            domain,
            output,
            emit_plot_data,
        } => cmd_export(config, &checkpoint, domain.as_deref(), output, emit_plot_data),
        Command::Verify => cmd_verify(),
    }
}

fn load_config(path: Option<PathBuf>) -> Result<ConfigFile> {
    let cfg = match path {
        Some(p) => ConfigFile::load(&p)?,
        None => ConfigFile::default(),
    };
    Ok(cfg.resolved())
}

fn write_json(path: &std::path::Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Serde(format!("artifact encode: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &std::path::Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for rec in records {
        text.push_str(
            &serde_json::to_string(rec).map_err(|e| Error::Serde(format!("record encode: {e}")))?,
        );
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_gen_data(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config)?;
    let ds = generate_synthetic(&cfg.synthetic)?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.join("dataset"));
    save_as_directory(&ds, &dir)?;
    cfg.echo_to(&dir)?;
    println!(
        "dataset: {} classes x {} domains, {} examples -> {}",
        ds.space.num_classes(),
        ds.space.num_domains(),
        ds.examples.len(),
        dir.display()
    );
    println!("classes: {}", ds.class_names.join(", "));
    println!("domains: {}", ds.domain_names.join(", "));
    Ok(())
}

/// Both selection rules applied to one finished run.
#[derive(Debug, Serialize)]
struct SelectionSummary {
    method: SelectionMethod,
    checkpoint_id: String,
    step: usize,
    source_val_accuracy: f64,
    target_val_accuracy: f64,
}

fn cmd_train(
    config: Option<PathBuf>,
    target: &str,
    variant: Option<&str>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(name) = variant {
        cfg.train.variant = TrainVariant::parse(name)?;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let ds = cfg.load_dataset()?;
    let target_idx = ds.domain_index(target)?;
    let plan = leave_one_out(&ds, target_idx, cfg.train.seed)?;

    let run_dir = cfg.output_dir.join(format!(
        "train-{target}-{}-seed{}",
        cfg.train.variant.name(),
        cfg.train.seed
    ));
    std::fs::create_dir_all(&run_dir)?;
    cfg.echo_to(&run_dir)?;

    let outcome = train(&cfg.train, &plan, &ds, Some(&run_dir.join("checkpoints")))?;
    for rec in &outcome.history.records {
        println!("{rec}");
    }
    write_jsonl(&run_dir.join("history.jsonl"), &outcome.history.records)?;

    let mut selections = Vec::new();
    for method in SelectionMethod::ALL {
        let (rec, _) = outcome.select(method)?;
        println!(
            "selected ({}): {} target accuracy {:.4}",
            method.label(),
            rec.checkpoint_id,
            rec.target_val_accuracy
        );
        selections.push(SelectionSummary {
            method,
            checkpoint_id: rec.checkpoint_id.clone(),
            step: rec.step,
            source_val_accuracy: rec.source_val_accuracy,
            target_val_accuracy: rec.target_val_accuracy,
        });
    }
    write_json(&run_dir.join("selection.json"), &selections)?;
    println!("run artifacts -> {}", run_dir.display());
    Ok(())
}

fn cmd_benchmark(config: Option<PathBuf>, seeds: &[u64]) -> Result<()> {
    let cfg = load_config(config)?;
    let ds = cfg.load_dataset()?;
    let report = run_benchmark(&cfg.train, &ds, seeds)?;
    let dir = cfg.output_dir.join("benchmark");
    std::fs::create_dir_all(&dir)?;
    cfg.echo_to(&dir)?;
    write_jsonl(&dir.join("records.jsonl"), &report.records)?;
    write_json(&dir.join("summary.json"), &report.summaries)?;
    let table = report.render();
    std::fs::write(dir.join("table.txt"), &table)?;
    print!("{table}");
    println!("benchmark artifacts -> {}", dir.display());
    Ok(())
}

fn cmd_ablate(config: Option<PathBuf>, seeds: &[u64]) -> Result<()> {
    let cfg = load_config(config)?;
    let ds = cfg.load_dataset()?;
    let report = run_ablation(&cfg.train, &ds, seeds)?;
    let dir = cfg.output_dir.join("ablation");
    std::fs::create_dir_all(&dir)?;
    cfg.echo_to(&dir)?;
    write_jsonl(&dir.join("records.jsonl"), &report.records)?;
    write_json(&dir.join("ablation.json"), &report)?;
    let table = report.render();
    std::fs::write(dir.join("table.txt"), &table)?;
    print!("{table}");
    println!("ablation artifacts -> {}", dir.display());
    Ok(())
}

/// The checkpoint must have been trained against a dataset with the same
/// label-space shape; anything else makes the probe meaningless.
fn check_space(meta: &CheckpointMeta, ds: &DGDataset) -> Result<()> {
    if meta.num_classes != ds.space.num_classes() || meta.num_domains != ds.space.num_domains() {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained on {} classes / {} domains, dataset has {} / {}",
            meta.num_classes,
            meta.num_domains,
            ds.space.num_classes(),
            ds.space.num_domains()
        )));
    }
    Ok(())
}

fn cmd_probe(config: Option<PathBuf>, checkpoint: &std::path::Path, target: &str) -> Result<()> {
    let cfg = load_config(config)?;
    let ds = cfg.load_dataset()?;
    let target_idx = ds.domain_index(target)?;
    let (bundle, meta) = load_checkpoint(checkpoint)?;
    check_space(&meta, &ds)?;
    let plan = leave_one_out(&ds, target_idx, cfg.train.seed)?;
    let reports = probe_disentanglement(&bundle, &plan, &ds)?;
    for report in &reports {
        println!("{report}");
    }
    let dir = cfg.output_dir.join(format!("probe-{target}"));
    std::fs::create_dir_all(&dir)?;
    cfg.echo_to(&dir)?;
    write_json(&dir.join("probes.json"), &reports)?;
    println!("probe artifacts -> {}", dir.display());
    Ok(())
}

fn cmd_export(
    config: Option<PathBuf>,
    checkpoint: &std::path::Path,
    domain: Option<&str>,
    output: Option<PathBuf>,
    emit_plot_data: bool,
) -> Result<()> {
    let cfg = load_config(config)?;
    let ds = cfg.load_dataset()?;
    let (bundle, meta) = load_checkpoint(checkpoint)?;
    check_space(&meta, &ds)?;
    let indices: Vec<usize> = match domain {
        Some(name) => ds.indices_of_domain(ds.domain_index(name)?),
        None => (0..ds.examples.len()).collect(),
    };
    let path = output.unwrap_or_else(|| cfg.output_dir.join("embeddings.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    export_embeddings(&bundle, &ds, &indices, &path)?;
    println!(
        "wrote {} embedding rows -> {}",
        2 * indices.len(),
        path.display()
    );
    if emit_plot_data {
        let plot = path.with_extension("plot.csv");
        export_plot_data(&bundle, &ds, &indices, &plot)?;
        println!("wrote plot table -> {}", plot.display());
    }
    Ok(())
}

fn cmd_verify() -> Result<()> {
    let report = run_verification()?;
    print!("{}", report.render());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Error::Contract("verification failed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::error::ErrorKind;

    #[test]
    fn subcommands_parse() {
        for args in [
            vec!["cddg", "gen-data"],
            vec!["cddg", "gen-data", "run.toml", "--out", "d"],
            vec!["cddg", "train", "--target", "ember"],
            vec![
                "cddg", "train", "cfg.toml", "--target", "moss", "--variant", "full_ind",
                "--seed", "7",
            ],
            vec!["cddg", "benchmark", "--seeds", "0,1,2"],
            vec!["cddg", "ablate"],
            vec!["cddg", "probe", "--checkpoint", "c.ckpt", "--target", "tide"],
            vec![
                "cddg", "export", "--checkpoint", "c.ckpt", "--emit-plot-data", "--domain",
                "sand",
            ],
            vec!["cddg", "verify"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }

    #[test]
    fn train_requires_a_target() {
        let err = Cli::try_parse_from(["cddg", "train"]).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn seeds_split_on_commas() {
        let cli = Cli::try_parse_from(["cddg", "benchmark", "--seeds", "3,5,8"]).unwrap();
        match cli.command {
            Command::Benchmark { seeds, .. } => assert_eq!(seeds, vec![3, 5, 8]),
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn unknown_variant_is_a_usage_error() {
        let err = TrainVariant::parse("full_bomb").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_domain_maps_to_exit_code_2() {
        let ds = generate_synthetic(&crate::data::SyntheticSpec {
            num_classes: 2,
            num_domains: 2,
            n_per_cell: 1,
            image_size: 8,
            nuisance_strength: 1.0,
            seed: 0,
        })
        .unwrap();
        let err = ds.domain_index("atlantis").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
