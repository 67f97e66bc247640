//! The joint optimization loop, model selection, and checkpointing.
//!
//! One step: draw a two-view batch, encode through both branches, classify,
//! combine the two-branch cross-entropy with the configured contrastive term,
//! backpropagate, and update all four networks with AdamW. Every `eval_every`
//! steps the loop records loss components, source-validation and
//! target-validation accuracy, and snapshots a checkpoint.
//!
//! Model selection replays a finished history: TDVS picks the checkpoint with
//! the best source-validation accuracy (the deployable rule), Oracle the best
//! target accuracy (the upper bound).

pub mod checkpoint;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::core::DualEmbeddings;
use crate::data::{make_batches, AugmentConfig, DGDataset, SplitPlan};
use crate::evaluation::accuracy;
use crate::losses::{
    ce_dis_with_grad, cross_entropy_with_grad, dscl_comb_with_grad, dscl_ind_with_grad,
    sup_contrastive_with_grad, total_loss, LossConfig,
};
use crate::networks::{hex_string, init_bundle, EncoderSpec, ModelBundle, PairVisitor};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, load_checkpoint_checked, save_checkpoint, CheckpointMeta};

/// Which objective the run optimizes. The three non-default variants are the
/// ablation rows: swap the contrastive term, drop it, or drop the two-branch
/// cross-entropy (leaving plain classification plus class-label contrast on a
/// single encoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainVariant {
    #[default]
    FullComb,
    FullInd,
    DisentangleOnly,
    ContrastiveOnly,
}

impl TrainVariant {
    pub const ALL: [TrainVariant; 4] = [
        TrainVariant::FullComb,
        TrainVariant::FullInd,
        TrainVariant::DisentangleOnly,
        TrainVariant::ContrastiveOnly,
    ];

    /// Ablation-table row label.
    pub fn label(self) -> &'static str {
        match self {
            TrainVariant::FullComb => "cddg",
            TrainVariant::FullInd => "w/ dscl_ind",
            TrainVariant::DisentangleOnly => "w/o dscl_comb",
            TrainVariant::ContrastiveOnly => "w/o ce_dis",
        }
    }

    /// Config-file / CLI name.
    pub fn name(self) -> &'static str {
        match self {
            TrainVariant::FullComb => "full_comb",
            TrainVariant::FullInd => "full_ind",
            TrainVariant::DisentangleOnly => "disentangle_only",
            TrainVariant::ContrastiveOnly => "contrastive_only",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "variant",
                name: name.to_string(),
            })
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub encoder: EncoderSpec,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub variant: TrainVariant,
    /// Base samples per batch; the two-view batch holds twice as many rows.
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderSpec::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            variant: TrainVariant::FullComb,
            batch_size: 32,
            steps: 3000,
            eval_every: 100,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        if self.eval_every == 0 || self.steps < self.eval_every {
            return Err(Error::Config(format!(
                "need steps >= eval_every >= 1, got steps {} and eval_every {}",
                self.steps, self.eval_every
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form of a config; identifies runs and guards
/// checkpoint compatibility.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex_string(&Sha256::digest(json.as_bytes()))
}

/// One evaluation-point snapshot in a training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub ce: f64,
    pub dscl: f64,
    pub total: f64,
    pub source_val_accuracy: f64,
    pub target_val_accuracy: f64,
    pub checkpoint_id: String,
}

impl std::fmt::Display for EvalRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step {:>6}  ce {:>9.4}  dscl {:>9.4}  total {:>9.4}  src_acc {:.4}  tgt_acc {:.4}  ckpt {}",
            self.step,
            self.ce,
            self.dscl,
            self.total,
            self.source_val_accuracy,
            self.target_val_accuracy,
            self.checkpoint_id
        )
    }
}

/// Evaluation records in strictly increasing step order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
}

/// Model-selection rule over a finished history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Training-domain validation set: max source-validation accuracy.
    Tdvs,
    /// Test-domain validation set: max target accuracy (upper bound).
    Oracle,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 2] = [SelectionMethod::Tdvs, SelectionMethod::Oracle];

    pub fn label(self) -> &'static str {
        match self {
            SelectionMethod::Tdvs => "TDVS",
            SelectionMethod::Oracle => "Oracle",
        }
    }
}

/// Pick the record whose tracked accuracy is maximal; ties go to the
/// earliest step. Pure in the history.
pub fn select_model(history: &TrainHistory, method: SelectionMethod) -> Result<&EvalRecord> {
    let mut best: Option<&EvalRecord> = None;
    for rec in &history.records {
        let score = match method {
            SelectionMethod::Tdvs => rec.source_val_accuracy,
            SelectionMethod::Oracle => rec.target_val_accuracy,
        };
        let beat = match best {
            None => true,
            Some(b) => {
                let b_score = match method {
                    SelectionMethod::Tdvs => b.source_val_accuracy,
                    SelectionMethod::Oracle => b.target_val_accuracy,
                };
                score > b_score
            }
        };
        if beat {
            best = Some(rec);
        }
    }
    best.ok_or_else(|| Error::Contract("cannot select from an empty history".into()))
}

/// A finished run: the history plus every checkpoint bundle, in step order,
/// keyed by the ids the history references.
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub checkpoints: Vec<(String, ModelBundle)>,
    pub config_hash: String,
}

impl TrainOutcome {
    /// Resolve a history checkpoint id to its bundle.
    pub fn checkpoint(&self, id: &str) -> Result<&ModelBundle> {
        self.checkpoints
            .iter()
            .find(|(cid, _)| cid == id)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::Checkpoint(format!("unknown checkpoint id {id}")))
    }

    /// Bundle chosen by the given selection rule.
    pub fn select(&self, method: SelectionMethod) -> Result<(&EvalRecord, &ModelBundle)> {
        let rec = select_model(&self.history, method)?;
        Ok((rec, self.checkpoint(&rec.checkpoint_id)?))
    }
}

// ── AdamW ──────────────────────────────────────────────────────────────────

/// Adam with decoupled weight decay. Slots are allocated on first use in
/// parameter traversal order, which is fixed.
struct AdamW {
    lr: f64,
    wd: f64,
    t: u64,
    slots: Vec<(Vec<f64>, Vec<f64>)>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(lr: f64, wd: f64) -> Self {
        Self {
            lr,
            wd,
            t: 0,
            slots: Vec::new(),
        }
    }

    /// One update over every parameter whose name passes `filter`.
    /// Filtered-out parameters keep both their values and their moments.
    fn step(&mut self, bundle: &mut ModelBundle, filter: impl Fn(&str) -> bool) {
        self.t += 1;
        struct Update<'a> {
            opt: &'a mut AdamW,
            cursor: usize,
            filter: &'a dyn Fn(&str) -> bool,
        }
        impl PairVisitor for Update<'_> {
            fn visit(&mut self, name: &str, param: &mut [f64], grad: &[f64]) {
                if self.opt.slots.len() == self.cursor {
                    self.opt
                        .slots
                        .push((vec![0.0; param.len()], vec![0.0; param.len()]));
                }
                let (m, v) = &mut self.opt.slots[self.cursor];
                self.cursor += 1;
                if !(self.filter)(name) {
                    return;
                }
                let t = self.opt.t as f64;
                let bc1 = 1.0 - BETA1.powf(t);
                let bc2 = 1.0 - BETA2.powf(t);
                for i in 0..param.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param[i] -=
                        self.opt.lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.opt.wd * param[i]);
                }
            }
        }
        let mut update = Update {
            opt: self,
            cursor: 0,
            filter: &filter,
        };
        bundle.visit_pairs(&mut update);
    }
}

// ── The loop ───────────────────────────────────────────────────────────────

struct StepLoss {
    ce: f64,
    dscl: f64,
    total: f64,
    d_z_class: Array2<f64>,
    d_z_domain: Option<Array2<f64>>,
}

/// Loss value and embedding gradients for one batch under `variant`.
/// Head gradients are applied to `bundle` as a side effect; encoder
/// backward passes are the caller's job.
fn batch_loss(
    bundle: &mut ModelBundle,
    variant: TrainVariant,
    loss: &LossConfig,
    d: &DualEmbeddings,
) -> Result<StepLoss> {
    let space = bundle.space;
    let alpha = loss.alpha;
    let tau = loss.temperature;
    match variant {
        TrainVariant::FullComb | TrainVariant::FullInd | TrainVariant::DisentangleOnly => {
            let (class_logits, domain_logits) = bundle.classify(d)?;
            let (ce, d_cl, d_dl) = ce_dis_with_grad(
                &class_logits,
                &domain_logits,
                &d.class_labels,
                &d.domain_labels,
            )?;
            let mut d_z_class = bundle.class_head.backward(&d.z_class, &d_cl);
            let mut d_z_domain = bundle.domain_head.backward(&d.z_domain, &d_dl);

            let dscl = match variant {
                TrainVariant::FullComb => {
                    let (v, gc, gd) = dscl_comb_with_grad(d, &space, tau)?;
                    d_z_class += &(&gc * alpha);
                    d_z_domain += &(&gd * alpha);
                    v
                }
                TrainVariant::FullInd => {
                    let (v, gc, gd) = dscl_ind_with_grad(d, tau)?;
                    d_z_class += &(&gc * alpha);
                    d_z_domain += &(&gd * alpha);
                    v
                }
                // Alpha is forced to zero: the term is neither computed nor
                // recorded. ContrastiveOnly is handled by the outer match.
                _ => 0.0,
            };
            let alpha = if variant == TrainVariant::DisentangleOnly {
                0.0
            } else {
                alpha
            };
            Ok(StepLoss {
                ce,
                dscl,
                total: total_loss(ce, dscl, alpha),
                d_z_class,
                d_z_domain: Some(d_z_domain),
            })
        }
        TrainVariant::ContrastiveOnly => {
            // Plain classification plus class-label contrast, all on the
            // class branch; the domain branch stays at initialization.
            let class_logits = bundle.class_head.forward(&d.z_class);
            let (ce, d_cl) = cross_entropy_with_grad(&class_logits, &d.class_labels)?;
            let mut d_z_class = bundle.class_head.backward(&d.z_class, &d_cl);
            let (scl, g) = sup_contrastive_with_grad(&d.z_class, &d.class_labels, tau)?;
            d_z_class += &(&g * alpha);
            Ok(StepLoss {
                ce,
                dscl: scl,
                total: total_loss(ce, scl, alpha),
                d_z_class,
                d_z_domain: None,
            })
        }
    }
}

/// Run the loop. Checkpoints go to `checkpoint_dir` when given (files named
/// `<id>.ckpt`) and are always kept in memory in the outcome. Identical
/// `(config, plan, ds)` reproduce the exact same trace and parameters.
pub fn train(
    config: &TrainConfig,
    plan: &SplitPlan,
    ds: &DGDataset,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let hash = config_hash(config);
    let mut bundle = init_bundle(&config.encoder, &ds.space, config.seed)?;
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let update_filter = |name: &str| match config.variant {
        TrainVariant::ContrastiveOnly => !name.starts_with("g_s") && !name.starts_with("f_s"),
        _ => true,
    };

    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut history = TrainHistory::default();
    let mut checkpoints = Vec::new();
    let mut epoch = 0u64;
    let mut queue = make_batches(
        ds,
        &plan.source_train,
        &config.augment,
        config.batch_size,
        config.seed,
        epoch,
    )?;
    let mut queue_pos = 0usize;

    let record = |bundle: &ModelBundle,
                      checkpoints: &mut Vec<(String, ModelBundle)>,
                      history: &mut TrainHistory,
                      step: usize,
                      losses: (f64, f64, f64)|
     -> Result<()> {
        let (ce, dscl, total) = losses;
        let source_val_accuracy = accuracy(bundle, ds, &plan.source_val)?;
        let target_val_accuracy = accuracy(bundle, ds, &plan.target_val)?;
        let id = format!("step-{step:06}");
        let meta = CheckpointMeta {
            config_hash: hash.clone(),
            step,
            source_val_accuracy,
            target_val_accuracy,
            encoder: config.encoder.clone(),
            num_classes: ds.space.num_classes(),
            num_domains: ds.space.num_domains(),
        };
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(bundle, &meta, &dir.join(format!("{id}.ckpt")))?;
        }
        checkpoints.push((id.clone(), bundle.clone()));
        history.records.push(EvalRecord {
            step,
            ce,
            dscl,
            total,
            source_val_accuracy,
            target_val_accuracy,
            checkpoint_id: id,
        });
        Ok(())
    };

    // Step-0 snapshot: loss of the first batch before any update.
    {
        let batch = &queue[0];
        let fwd = bundle.forward_training(&batch.images)?;
        let d = DualEmbeddings::new(
            fwd.z_class,
            fwd.z_domain,
            batch.class_labels.clone(),
            batch.domain_labels.clone(),
        )?;
        bundle.zero_grad();
        let sl = batch_loss(&mut bundle, config.variant, &config.loss, &d)?;
        bundle.zero_grad();
        record(
            &bundle,
            &mut checkpoints,
            &mut history,
            0,
            (sl.ce, sl.dscl, sl.total),
        )?;
    }

    for step in 1..=config.steps {
        if queue_pos == queue.len() {
            epoch += 1;
            queue = make_batches(
                ds,
                &plan.source_train,
                &config.augment,
                config.batch_size,
                config.seed,
                epoch,
            )?;
            queue_pos = 0;
        }
        let batch = &queue[queue_pos];
        queue_pos += 1;

        let fwd = bundle.forward_training(&batch.images)?;
        let d = DualEmbeddings::new(
            fwd.z_class,
            fwd.z_domain,
            batch.class_labels.clone(),
            batch.domain_labels.clone(),
        )?;
        bundle.zero_grad();
        let sl = batch_loss(&mut bundle, config.variant, &config.loss, &d)?;
        if !sl.total.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("ce={}, dscl={}, total={}", sl.ce, sl.dscl, sl.total),
            });
        }
        bundle
            .class_encoder
            .backward(&fwd.class_cache, &sl.d_z_class);
        if let Some(dzs) = &sl.d_z_domain {
            bundle.domain_encoder.backward(&fwd.domain_cache, dzs);
        }
        opt.step(&mut bundle, update_filter);

        if step % config.eval_every == 0 || step == config.steps {
            record(
                &bundle,
                &mut checkpoints,
                &mut history,
                step,
                (sl.ce, sl.dscl, sl.total),
            )?;
        }
    }

    Ok(TrainOutcome {
        history,
        checkpoints,
        config_hash: hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, leave_one_out, SyntheticSpec};
    use crate::networks::Architecture;

    fn tiny_ds() -> DGDataset {
        generate_synthetic(&SyntheticSpec {
            num_classes: 2,
            num_domains: 3,
            n_per_cell: 8,
            image_size: 8,
            nuisance_strength: 1.0,
            seed: 11,
        })
        .unwrap()
    }

    fn tiny_config(steps: usize, eval_every: usize, variant: TrainVariant) -> TrainConfig {
        TrainConfig {
            encoder: EncoderSpec {
                architecture: Architecture::Mlp,
                embedding_dim: 8,
                widths: vec![16],
                input_shape: (8, 8, 3),
                seed: 0,
                projection_head: false,
            },
            batch_size: 4,
            steps,
            eval_every,
            variant,
            ..TrainConfig::default()
        }
    }

    fn history_of(variant: TrainVariant, steps: usize, eval_every: usize) -> TrainOutcome {
        let ds = tiny_ds();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        train(&tiny_config(steps, eval_every, variant), &plan, &ds, None).unwrap()
    }

    fn rec(step: usize, src: f64, tgt: f64) -> EvalRecord {
        EvalRecord {
            step,
            ce: 0.0,
            dscl: 0.0,
            total: 0.0,
            source_val_accuracy: src,
            target_val_accuracy: tgt,
            checkpoint_id: format!("step-{step:06}"),
        }
    }

    #[test]
    fn select_model_takes_argmax() {
        let history = TrainHistory {
            records: vec![rec(0, 0.5, 0.1), rec(1, 0.9, 0.2), rec(2, 0.7, 0.3)],
        };
        let chosen = select_model(&history, SelectionMethod::Tdvs).unwrap();
        assert_eq!(chosen.step, 1);
        let oracle = select_model(&history, SelectionMethod::Oracle).unwrap();
        assert_eq!(oracle.step, 2);
    }

    #[test]
    fn select_model_breaks_ties_earliest() {
        let history = TrainHistory {
            records: vec![rec(0, 0.5, 0.5), rec(1, 0.5, 0.5), rec(2, 0.5, 0.5)],
        };
        for method in SelectionMethod::ALL {
            assert_eq!(select_model(&history, method).unwrap().step, 0);
        }
    }

    #[test]
    fn select_model_rejects_empty_history() {
        let history = TrainHistory::default();
        assert!(select_model(&history, SelectionMethod::Tdvs).is_err());
    }

    #[test]
    fn history_steps_strictly_increase_and_stay_finite() {
        let out = history_of(TrainVariant::FullComb, 5, 2);
        let steps: Vec<usize> = out.history.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 2, 4, 5]);
        for r in &out.history.records {
            assert!(r.ce.is_finite() && r.dscl.is_finite() && r.total.is_finite());
            out.checkpoint(&r.checkpoint_id).unwrap();
        }
    }

    #[test]
    fn identical_runs_produce_identical_traces() {
        let a = history_of(TrainVariant::FullComb, 4, 2);
        let b = history_of(TrainVariant::FullComb, 4, 2);
        assert_eq!(a.history, b.history);
        let (_, ba) = a.select(SelectionMethod::Tdvs).unwrap();
        let (_, bb) = b.select(SelectionMethod::Tdvs).unwrap();
        assert_eq!(ba.param_fingerprint(), bb.param_fingerprint());
    }

    #[test]
    fn disentangle_only_records_zero_dscl() {
        let out = history_of(TrainVariant::DisentangleOnly, 4, 2);
        for r in &out.history.records {
            assert_eq!(r.dscl, 0.0);
            assert_eq!(r.total, r.ce);
        }
    }

    #[test]
    fn full_variants_update_all_four_networks() {
        let ds = tiny_ds();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        let config = tiny_config(1, 1, TrainVariant::FullComb);
        let init = init_bundle(&config.encoder, &ds.space, config.seed).unwrap();
        let out = train(&config, &plan, &ds, None).unwrap();
        let trained = &out.checkpoints.last().unwrap().1;

        for prefix in ["g_v", "g_s", "f_v", "f_s"] {
            assert_ne!(
                branch_values(&init, prefix),
                branch_values(trained, prefix),
                "{prefix} did not move"
            );
        }
    }

    #[test]
    fn contrastive_only_leaves_domain_branch_at_init() {
        let ds = tiny_ds();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        let config = tiny_config(3, 3, TrainVariant::ContrastiveOnly);
        let init = init_bundle(&config.encoder, &ds.space, config.seed).unwrap();
        let out = train(&config, &plan, &ds, None).unwrap();
        let trained = &out.checkpoints.last().unwrap().1;

        assert_eq!(branch_values(&init, "g_s"), branch_values(trained, "g_s"));
        assert_eq!(branch_values(&init, "f_s"), branch_values(trained, "f_s"));
        assert_ne!(branch_values(&init, "g_v"), branch_values(trained, "g_v"));
        assert_ne!(branch_values(&init, "f_v"), branch_values(trained, "f_v"));
    }

    fn branch_values(bundle: &ModelBundle, prefix: &str) -> Vec<f64> {
        struct Collect<'a> {
            prefix: &'a str,
            out: Vec<f64>,
        }
        impl crate::networks::ValueVisitor for Collect<'_> {
            fn visit(&mut self, name: &str, _: &[usize], values: &[f64]) {
                if name.starts_with(self.prefix) {
                    self.out.extend_from_slice(values);
                }
            }
        }
        let mut c = Collect {
            prefix,
            out: Vec::new(),
        };
        bundle.visit_values(&mut c);
        c.out
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = tiny_config(1, 2, TrainVariant::FullComb);
        assert!(config.validate().is_err()); // steps < eval_every
        config.steps = 2;
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
        config.learning_rate = 1e-3;
        config.batch_size = 1;
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = tiny_config(4, 2, TrainVariant::FullComb);
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 99;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn training_reduces_total_loss_on_synthetic_data() {
        let ds = generate_synthetic(&SyntheticSpec {
            num_classes: 5,
            num_domains: 4,
            n_per_cell: 20,
            image_size: 12,
            nuisance_strength: 1.0,
            seed: 0,
        })
        .unwrap();
        let plan = leave_one_out(&ds, 0, 0).unwrap();
        let config = TrainConfig {
            encoder: EncoderSpec {
                architecture: Architecture::Mlp,
                embedding_dim: 16,
                widths: vec![64],
                input_shape: (12, 12, 3),
                seed: 0,
                projection_head: false,
            },
            batch_size: 16,
            steps: 2000,
            eval_every: 500,
            ..TrainConfig::default()
        };
        let out = train(&config, &plan, &ds, None).unwrap();
        let first = &out.history.records[0];
        let last = out.history.records.last().unwrap();
        assert_eq!(first.step, 0);
        assert_eq!(last.step, 2000);
        assert!(
            last.total < first.total,
            "no progress: start {} end {}",
            first.total,
            last.total
        );
    }
}
