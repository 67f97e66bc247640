//! Leave-one-domain-out benchmarking, ablations, probes, and export.
//!
//! The benchmark trains one model per (target domain, seed), selects a
//! checkpoint under both rules (TDVS and Oracle), and reports target accuracy
//! per record plus mean ± std summaries. The ablation repeats that for all
//! four objective variants and adds directional trend flags; trends are
//! reported with their numbers, never silently enforced, because seed noise
//! at this scale can flip small gaps.

pub mod export;
pub mod probe;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{leave_one_out, DGDataset};
use crate::networks::ModelBundle;
use crate::training::{train, SelectionMethod, TrainConfig, TrainVariant};
use crate::{Error, Result};

pub use export::{export_embeddings, export_plot_data};
pub use probe::{probe_disentanglement, ProbeBranch, ProbeReport};

/// Evaluation mini-batch rows; bounds peak memory on large index sets.
const EVAL_CHUNK: usize = 256;

/// Class accuracy of `f_v . g_v` over the referenced examples, evaluated on
/// raw images (no augmentation). Argmax ties resolve to the lowest index.
pub fn accuracy(bundle: &ModelBundle, ds: &DGDataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Contract("accuracy over an empty index set".into()));
    }
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let images = ds.images_for(chunk);
        let (z_class, _) = bundle.class_encoder.forward(&images)?;
        let logits = bundle.class_head.forward(&z_class);
        for (row, &idx) in chunk.iter().enumerate() {
            if argmax(logits.row(row).as_slice().expect("contiguous"))
                == ds.examples[idx].class_label
            {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// First index of the maximal value.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Both branches' embeddings for the referenced examples, `[n, D]` each.
pub(crate) fn embeddings_for(
    bundle: &ModelBundle,
    ds: &DGDataset,
    indices: &[usize],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = bundle.spec.embedding_dim;
    let mut z_class = Array2::zeros((indices.len(), d));
    let mut z_domain = Array2::zeros((indices.len(), d));
    for (start, chunk) in indices.chunks(EVAL_CHUNK).enumerate() {
        let images = ds.images_for(chunk);
        let (zv, zs) = bundle.encode_images(&images)?;
        let offset = start * EVAL_CHUNK;
        z_class
            .slice_mut(ndarray::s![offset..offset + chunk.len(), ..])
            .assign(&zv);
        z_domain
            .slice_mut(ndarray::s![offset..offset + chunk.len(), ..])
            .assign(&zs);
    }
    Ok((z_class, z_domain))
}

/// One benchmark observation: target accuracy of the checkpoint selected by
/// `method` for this (target, seed, variant) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub target_domain: String,
    pub method: SelectionMethod,
    pub seed: u64,
    pub variant: TrainVariant,
    pub accuracy: f64,
    pub selected_step: usize,
    pub config_hash: String,
}

/// Mean ± std of accuracy over seeds for one (target, method) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub target_domain: String,
    pub method: SelectionMethod,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub records: Vec<RunResult>,
    pub summaries: Vec<SummaryCell>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Group records by (target, method) in first-appearance order and compute
/// mean ± sample std over seeds.
pub fn summarize(records: &[RunResult]) -> Vec<SummaryCell> {
    let mut cells: Vec<SummaryCell> = Vec::new();
    let mut keys: Vec<(String, SelectionMethod)> = Vec::new();
    for rec in records {
        let key = (rec.target_domain.clone(), rec.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (target, method) in keys {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r.target_domain == target && r.method == method)
            .map(|r| r.accuracy)
            .collect();
        let (mean, std) = mean_std(&values);
        cells.push(SummaryCell {
            target_domain: target,
            method,
            mean,
            std,
            n: values.len(),
        });
    }
    cells
}

/// `84.2 ± 1.1` in percent, the summary-table cell format.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", mean * 100.0, std * 100.0)
}

impl BenchmarkReport {
    /// Rendered per-target table with a trailing average row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let targets: Vec<&str> = {
            let mut t: Vec<&str> = Vec::new();
            for s in &self.summaries {
                if !t.contains(&s.target_domain.as_str()) {
                    t.push(&s.target_domain);
                }
            }
            t
        };
        out.push_str(&format!("{:<12} {:>14} {:>14}\n", "target", "TDVS", "Oracle"));
        let mut means = (Vec::new(), Vec::new());
        for target in &targets {
            let cell = |method| {
                self.summaries
                    .iter()
                    .find(|s| s.target_domain == *target && s.method == method)
                    .map(|s| (s.mean, s.std))
                    .unwrap_or((f64::NAN, f64::NAN))
            };
            let (tm, ts) = cell(SelectionMethod::Tdvs);
            let (om, os) = cell(SelectionMethod::Oracle);
            means.0.push(tm);
            means.1.push(om);
            out.push_str(&format!(
                "{:<12} {:>14} {:>14}\n",
                target,
                format_mean_std(tm, ts),
                format_mean_std(om, os)
            ));
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        out.push_str(&format!(
            "{:<12} {:>14} {:>14}\n",
            "average",
            format!("{:.1}", avg(&means.0) * 100.0),
            format!("{:.1}", avg(&means.1) * 100.0)
        ));
        out
    }
}

/// Train and evaluate every (target domain, seed) pair for `config.variant`.
/// Runs are independent and fan out across threads; each run is internally
/// single-threaded so records are bit-reproducible.
pub fn run_benchmark(
    config: &TrainConfig,
    ds: &DGDataset,
    seeds: &[u64],
) -> Result<BenchmarkReport> {
    if seeds.is_empty() {
        return Err(Error::Config("need at least one seed".into()));
    }
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..ds.space.num_domains())
        .flat_map(|t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let per_run: Vec<Vec<RunResult>> = jobs
        .par_iter()
        .map(|&(target, seed)| -> Result<Vec<RunResult>> {
            let mut cfg = config.clone();
            cfg.seed = seed;
            let plan = leave_one_out(ds, target, seed)?;
            let out = train(&cfg, &plan, ds, None)?;
            SelectionMethod::ALL
                .into_iter()
                .map(|method| {
                    let (rec, _) = out.select(method)?;
                    Ok(RunResult {
                        target_domain: ds.domain_names[target].clone(),
                        method,
                        seed,
                        variant: cfg.variant,
                        accuracy: rec.target_val_accuracy,
                        selected_step: rec.step,
                        config_hash: out.config_hash.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<RunResult> = per_run.into_iter().flatten().collect();
    let summaries = summarize(&records);
    Ok(BenchmarkReport { records, summaries })
}

/// One ablation-table row: pooled accuracy over targets and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: TrainVariant,
    pub label: String,
    pub tdvs_mean: f64,
    pub tdvs_std: f64,
    pub oracle_mean: f64,
    pub oracle_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub records: Vec<RunResult>,
    /// Fixed row order: full_comb, full_ind, disentangle_only, contrastive_only.
    pub rows: Vec<AblationRow>,
    /// TDVS trend full_comb >= full_ind; directional, not enforced.
    pub trend_comb_ge_ind: bool,
    /// TDVS trend full_comb >= disentangle_only.
    pub trend_full_ge_disentangle: bool,
}

impl AblationReport {
    pub fn row(&self, variant: TrainVariant) -> &AblationRow {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .expect("all four variants present")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>14} {:>14}\n",
            "variant", "TDVS", "Oracle"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>14} {:>14}\n",
                row.label,
                format_mean_std(row.tdvs_mean, row.tdvs_std),
                format_mean_std(row.oracle_mean, row.oracle_std)
            ));
        }
        out.push_str(&format!(
            "trend comb >= ind (TDVS): {}\n",
            if self.trend_comb_ge_ind { "yes" } else { "no" }
        ));
        out.push_str(&format!(
            "trend full >= disentangle_only (TDVS): {}\n",
            if self.trend_full_ge_disentangle { "yes" } else { "no" }
        ));
        out
    }
}

/// Run the four-variant ablation through the benchmark pipeline and pool
/// accuracies per (variant, method).
pub fn run_ablation(base: &TrainConfig, ds: &DGDataset, seeds: &[u64]) -> Result<AblationReport> {
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for variant in TrainVariant::ALL {
        let mut cfg = base.clone();
        cfg.variant = variant;
        let report = run_benchmark(&cfg, ds, seeds)?;
        let pooled = |method: SelectionMethod| -> (f64, f64) {
            let values: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.method == method)
                .map(|r| r.accuracy)
                .collect();
            mean_std(&values)
        };
        let (tdvs_mean, tdvs_std) = pooled(SelectionMethod::Tdvs);
        let (oracle_mean, oracle_std) = pooled(SelectionMethod::Oracle);
        rows.push(AblationRow {
            variant,
            label: variant.label().to_string(),
            tdvs_mean,
            tdvs_std,
            oracle_mean,
            oracle_std,
        });
        records.extend(report.records);
    }
    let mean_of = |variant: TrainVariant| {
        rows.iter()
            .find(|r| r.variant == variant)
            .map(|r| r.tdvs_mean)
            .expect("row present")
    };
    Ok(AblationReport {
        trend_comb_ge_ind: mean_of(TrainVariant::FullComb) >= mean_of(TrainVariant::FullInd),
        trend_full_ge_disentangle: mean_of(TrainVariant::FullComb)
            >= mean_of(TrainVariant::DisentangleOnly),
        records,
        rows,
    })
}
