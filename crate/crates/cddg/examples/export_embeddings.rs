//! Export per-example embeddings for external visualization.
//!
//! Writes the delimited embedding table (one row per example per branch,
//! branch-major, unit-norm rows, nine significant digits) plus the optional
//! 2-D principal-plane table that plotting tools can consume directly.
//! Equal inputs produce byte-identical files.

use std::path::Path;

use cddg::data::{generate_synthetic, leave_one_out, SyntheticSpec};
use cddg::evaluation::{export_embeddings, export_plot_data};
use cddg::networks::{Architecture, EncoderSpec};
use cddg::training::{train, SelectionMethod, TrainConfig};

fn main() -> cddg::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        num_classes: 3,
        num_domains: 3,
        n_per_cell: 16,
        image_size: 12,
        nuisance_strength: 1.0,
        seed: 0,
    })?;
    let config = TrainConfig {
        encoder: EncoderSpec {
            architecture: Architecture::Mlp,
            embedding_dim: 16,
            widths: vec![48],
            input_shape: (12, 12, 3),
            seed: 0,
            projection_head: false,
        },
        batch_size: 12,
        steps: 200,
        eval_every: 50,
        ..TrainConfig::default()
    };
    let plan = leave_one_out(&ds, 0, config.seed)?;
    let outcome = train(&config, &plan, &ds, None)?;
    let (_, bundle) = outcome.select(SelectionMethod::Tdvs)?;

    let dir = Path::new("target/examples/export");
    std::fs::create_dir_all(dir)?;
    let all: Vec<usize> = (0..ds.examples.len()).collect();

    let table = dir.join("embeddings.csv");
    export_embeddings(bundle, &ds, &all, &table)?;
    let plot = dir.join("embeddings.plot.csv");
    export_plot_data(bundle, &ds, &all, &plot)?;

    let text = std::fs::read_to_string(&table)?;
    let mut lines = text.lines();
    println!("{} data rows -> {}", text.lines().count() - 1, table.display());
    println!("header: {}", lines.next().unwrap());
    let first = lines.next().unwrap();
    let cut = first.splitn(6, ',').collect::<Vec<_>>();
    println!("first row: {},...", cut[..5].join(","));

    let plot_text = std::fs::read_to_string(&plot)?;
    println!(
        "\n{} plot rows -> {}",
        plot_text.lines().count() - 1,
        plot.display()
    );
    for line in plot_text.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
