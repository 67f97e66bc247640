//! Objective ablation: rerun the full benchmark once per variant and render
//! the comparison table.
//!
//! Rows: the full objective ("cddg"), the independent-label-space swap
//! ("w/ dscl_ind"), the contrastive term removed ("w/o dscl_comb"), and the
//! two-branch cross-entropy removed ("w/o ce_dis"). The directional trends
//! are reported as flags next to the numbers, never enforced: at this scale
//! seed noise can flip a small gap, and that is worth seeing.

use cddg::data::{generate_synthetic, SyntheticSpec};
use cddg::evaluation::run_ablation;
use cddg::networks::{Architecture, EncoderSpec};
use cddg::training::{TrainConfig, TrainVariant};

fn main() -> cddg::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        num_classes: 3,
        num_domains: 3,
        n_per_cell: 16,
        image_size: 12,
        nuisance_strength: 1.0,
        seed: 0,
    })?;
    let base = TrainConfig {
        encoder: EncoderSpec {
            architecture: Architecture::Mlp,
            embedding_dim: 24,
            widths: vec![48],
            input_shape: (12, 12, 3),
            seed: 0,
            projection_head: false,
        },
        batch_size: 12,
        steps: 300,
        eval_every: 50,
        ..TrainConfig::default()
    };

    let report = run_ablation(&base, &ds, &[0])?;
    print!("{}", report.render());

    println!();
    for variant in TrainVariant::ALL {
        let row = report.row(variant);
        let runs = report
            .records
            .iter()
            .filter(|r| r.variant == variant)
            .count()
            / 2;
        println!(
            "{:<16} TDVS {:.3} over {} runs per rule",
            variant.label(),
            row.tdvs_mean,
            runs
        );
    }
    Ok(())
}
