//! Objective terms: supervised contrastive loss, the combined- and
//! independent-label-space contrastive variants, the two-branch cross-entropy,
//! and the total objective.
//!
//! All losses are pure functions over `f64` matrices and come in a value-only
//! and a `_with_grad` form; the gradient is analytic and checked against
//! central finite differences by the verification suite. The [`oracle`]
//! submodule holds an independent double-loop reference implementation that
//! shares no code with the vectorized path here.
//!
//! Reduction convention: every contrastive term is the mean over anchors that
//! have at least one positive; anchors with an empty positive set are skipped,
//! and a batch where every anchor is skipped contributes 0. The
//! independent-variant loss averages its two parts separately and then adds
//! them. The mean (rather than the raw anchor sum) keeps the weight factor's
//! meaning independent of batch size against the mean-reduced cross-entropy.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::core::{check_unit_rows, DualEmbeddings, LabelSpace};
use crate::{Error, Result};

pub mod oracle;

/// Which contrastive mapping a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveVariant {
    /// One latent space over the combined class+domain label encoding.
    #[default]
    Comb,
    /// Two latent spaces; the opposite feature type joins only as negatives.
    Ind,
    /// Cross-entropy only; the contrastive term is identically zero.
    None,
}

/// Hyperparameters of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Temperature scaling the embedding dot products. Must be positive.
    pub temperature: f64,
    /// Weight of the contrastive term in the total objective. Nonnegative.
    pub alpha: f64,
    pub variant: ContrastiveVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            alpha: 1.0,
            variant: ContrastiveVariant::Comb,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Contract(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Contract(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    Ok(())
}

/// `true` where two rows share a label; diagonal is always `false`.
fn same_label_mask(labels: &[usize]) -> Array2<bool> {
    let n = labels.len();
    let mut mask = Array2::from_elem((n, n), false);
    for i in 0..n {
        for j in 0..n {
            if i != j && labels[i] == labels[j] {
                mask[[i, j]] = true;
            }
        }
    }
    mask
}

/// Shared core of all contrastive terms.
///
/// `x` holds unit rows; `pos_mask[i][j]` marks j as a positive for anchor i
/// (diagonal must be false); `anchors[i]` gates which rows act as anchors.
/// The denominator for anchor i always ranges over every other row of `x`.
/// Returns `(loss, contributing_anchor_count, gradient)`; the gradient is
/// filled only when `want_grad` is set.
fn scl_core(
    x: &Array2<f64>,
    pos_mask: &Array2<bool>,
    anchors: &[bool],
    tau: f64,
    want_grad: bool,
) -> (f64, usize, Option<Array2<f64>>) {
    let n = x.nrows();
    let logits = x.dot(&x.t()) / tau;

    let mut total = 0.0;
    let mut contributing = 0usize;
    // Per-anchor weights on the raw similarities; gradient is (W + W^T) x.
    let mut weights = want_grad.then(|| Array2::<f64>::zeros((n, n)));

    for i in 0..n {
        if !anchors[i] {
            continue;
        }
        let pos_count = (0..n).filter(|&j| pos_mask[[i, j]]).count();
        if pos_count == 0 {
            continue;
        }
        contributing += 1;

        // Stable log-sum-exp over A(i) = all rows except i.
        let mut max_logit = f64::NEG_INFINITY;
        for j in 0..n {
            if j != i {
                max_logit = max_logit.max(logits[[i, j]]);
            }
        }
        let mut sum_exp = 0.0;
        for j in 0..n {
            if j != i {
                sum_exp += (logits[[i, j]] - max_logit).exp();
            }
        }
        let lse = max_logit + sum_exp.ln();

        let mut pos_sum = 0.0;
        for j in 0..n {
            if pos_mask[[i, j]] {
                pos_sum += logits[[i, j]];
            }
        }
        total += lse - pos_sum / pos_count as f64;

        if let Some(w) = weights.as_mut() {
            let inv_pos = 1.0 / pos_count as f64;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let softmax = (logits[[i, j]] - lse).exp();
                let mut coeff = softmax;
                if pos_mask[[i, j]] {
                    coeff -= inv_pos;
                }
                w[[i, j]] = coeff / tau;
            }
        }
    }

    if contributing == 0 {
        let grad = want_grad.then(|| Array2::zeros(x.raw_dim()));
        return (0.0, 0, grad);
    }

    let scale = 1.0 / contributing as f64;
    let loss = (total * scale).max(0.0);
    let grad = weights.map(|w| {
        let mut g = w.dot(x);
        g += &w.t().dot(x);
        g *= scale;
        g
    });
    (loss, contributing, grad)
}

fn check_scl_inputs(z: &Array2<f64>, labels: &[usize], tau: f64) -> Result<()> {
    check_temperature(tau)?;
    if z.nrows() < 2 {
        return Err(Error::Contract(format!(
            "contrastive batch needs at least 2 rows, got {}",
            z.nrows()
        )));
    }
    if labels.len() != z.nrows() {
        return Err(Error::Shape(format!(
            "labels ({}) do not match rows ({})",
            labels.len(),
            z.nrows()
        )));
    }
    check_unit_rows(z, "embedding")
}

/// Supervised contrastive loss: same-label rows attract, all others repel.
pub fn sup_contrastive(z: &Array2<f64>, labels: &[usize], tau: f64) -> Result<f64> {
    check_scl_inputs(z, labels, tau)?;
    let mask = same_label_mask(labels);
    let anchors = vec![true; z.nrows()];
    let (loss, _, _) = scl_core(z, &mask, &anchors, tau, false);
    Ok(loss)
}

/// [`sup_contrastive`] plus the analytic gradient with respect to `z`.
pub fn sup_contrastive_with_grad(
    z: &Array2<f64>,
    labels: &[usize],
    tau: f64,
) -> Result<(f64, Array2<f64>)> {
    check_scl_inputs(z, labels, tau)?;
    let mask = same_label_mask(labels);
    let anchors = vec![true; z.nrows()];
    let (loss, _, grad) = scl_core(z, &mask, &anchors, tau, true);
    Ok((loss, grad.expect("gradient requested")))
}

fn comb_inputs(d: &DualEmbeddings, space: &LabelSpace) -> Result<(Array2<f64>, Array2<bool>)> {
    let (stacked, labels) = d.concat_mixed(space)?;
    if stacked.nrows() < 2 {
        return Err(Error::Contract(
            "combined contrastive batch needs at least 2 rows".into(),
        ));
    }
    let mask = same_label_mask(&labels);
    // Disjoint encoding: a class row and a domain row can never be positives.
    let b = d.len();
    for i in 0..b {
        for j in b..2 * b {
            debug_assert!(!mask[[i, j]] && !mask[[j, i]]);
            if mask[[i, j]] || mask[[j, i]] {
                return Err(Error::Contract(
                    "combined encoding produced a cross-type positive pair".into(),
                ));
            }
        }
    }
    Ok((stacked, mask))
}

/// Combined-label-space contrastive loss: both feature types share one latent
/// space under the disjoint `K + M` label encoding, so cross-type pairs are
/// always negatives.
pub fn dscl_comb(d: &DualEmbeddings, space: &LabelSpace, tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    let (stacked, mask) = comb_inputs(d, space)?;
    let anchors = vec![true; stacked.nrows()];
    let (loss, _, _) = scl_core(&stacked, &mask, &anchors, tau, false);
    Ok(loss)
}

/// [`dscl_comb`] plus gradients with respect to the class-branch and
/// domain-branch embeddings.
pub fn dscl_comb_with_grad(
    d: &DualEmbeddings,
    space: &LabelSpace,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_temperature(tau)?;
    let (stacked, mask) = comb_inputs(d, space)?;
    let anchors = vec![true; stacked.nrows()];
    let (loss, _, grad) = scl_core(&stacked, &mask, &anchors, tau, true);
    let g = grad.expect("gradient requested");
    let b = d.len();
    let d_class = g.slice(s![..b, ..]).to_owned();
    let d_domain = g.slice(s![b.., ..]).to_owned();
    Ok((loss, d_class, d_domain))
}

/// Stack domain features (rows `0..B`) over class features (rows `B..2B`)
/// and build the per-part positive masks and anchor gates.
fn ind_inputs(d: &DualEmbeddings) -> (Array2<f64>, [Array2<bool>; 2], [Vec<bool>; 2]) {
    let b = d.len();
    let dim = d.dim();
    let mut stacked = Array2::zeros((2 * b, dim));
    stacked.slice_mut(s![..b, ..]).assign(&d.z_domain);
    stacked.slice_mut(s![b.., ..]).assign(&d.z_class);

    let n = 2 * b;
    let mut domain_mask = Array2::from_elem((n, n), false);
    let mut class_mask = Array2::from_elem((n, n), false);
    for i in 0..b {
        for j in 0..b {
            if i != j && d.domain_labels[i] == d.domain_labels[j] {
                domain_mask[[i, j]] = true;
            }
            if i != j && d.class_labels[i] == d.class_labels[j] {
                class_mask[[b + i, b + j]] = true;
            }
        }
    }
    let mut domain_anchors = vec![false; n];
    let mut class_anchors = vec![false; n];
    domain_anchors[..b].fill(true);
    class_anchors[b..].fill(true);
    (stacked, [domain_mask, class_mask], [domain_anchors, class_anchors])
}

/// The two parts of the independent-label-space loss: `(domain_part,
/// class_part)`. Each part keeps positives within its own feature type and
/// lets the entire opposite type enter the denominator as extra negatives.
pub fn dscl_ind_parts(d: &DualEmbeddings, tau: f64) -> Result<(f64, f64)> {
    check_temperature(tau)?;
    if d.len() < 1 {
        return Err(Error::Contract("empty embedding batch".into()));
    }
    let (stacked, masks, anchors) = ind_inputs(d);
    let (domain_part, _, _) = scl_core(&stacked, &masks[0], &anchors[0], tau, false);
    let (class_part, _, _) = scl_core(&stacked, &masks[1], &anchors[1], tau, false);
    Ok((domain_part, class_part))
}

/// Independent-label-space contrastive loss: sum of the two parts from
/// [`dscl_ind_parts`].
pub fn dscl_ind(d: &DualEmbeddings, tau: f64) -> Result<f64> {
    let (domain_part, class_part) = dscl_ind_parts(d, tau)?;
    Ok(domain_part + class_part)
}

/// [`dscl_ind`] plus gradients with respect to the class-branch and
/// domain-branch embeddings.
pub fn dscl_ind_with_grad(
    d: &DualEmbeddings,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_temperature(tau)?;
    let (stacked, masks, anchors) = ind_inputs(d);
    let (domain_part, _, gd) = scl_core(&stacked, &masks[0], &anchors[0], tau, true);
    let (class_part, _, gc) = scl_core(&stacked, &masks[1], &anchors[1], tau, true);
    let mut g = gd.expect("gradient requested");
    g += &gc.expect("gradient requested");
    let b = d.len();
    let d_domain = g.slice(s![..b, ..]).to_owned();
    let d_class = g.slice(s![b.., ..]).to_owned();
    Ok((domain_part + class_part, d_class, d_domain))
}

fn check_ce_inputs(
    class_logits: &Array2<f64>,
    domain_logits: &Array2<f64>,
    class_labels: &[usize],
    domain_labels: &[usize],
) -> Result<()> {
    let b = class_logits.nrows();
    if b == 0 {
        return Err(Error::Contract("empty logit batch".into()));
    }
    if domain_logits.nrows() != b || class_labels.len() != b || domain_labels.len() != b {
        return Err(Error::Shape(format!(
            "batch sizes disagree: class logits {b}, domain logits {}, labels {}/{}",
            domain_logits.nrows(),
            class_labels.len(),
            domain_labels.len()
        )));
    }
    for (name, logits, labels) in [
        ("class", class_logits, class_labels),
        ("domain", domain_logits, domain_labels),
    ] {
        let width = logits.ncols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= width) {
            return Err(Error::Range(format!(
                "{name} label {bad} out of range [0, {width})"
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy of `logits` rows against integer `labels`, plus the
/// gradient `(softmax - onehot) / B` when requested.
fn softmax_ce(logits: &Array2<f64>, labels: &[usize], want_grad: bool) -> (f64, Option<Array2<f64>>) {
    let b = logits.nrows();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros(logits.raw_dim()));
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total += lse - row[labels[i]];
        if let Some(g) = grad.as_mut() {
            for (j, &v) in row.iter().enumerate() {
                let mut p = (v - lse).exp();
                if j == labels[i] {
                    p -= 1.0;
                }
                g[[i, j]] = p / b as f64;
            }
        }
    }
    ((total / b as f64).max(0.0), grad)
}

fn check_single_ce(logits: &Array2<f64>, labels: &[usize]) -> Result<()> {
    let b = logits.nrows();
    if b == 0 {
        return Err(Error::Contract("empty logit batch".into()));
    }
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for {b} logit rows",
            labels.len()
        )));
    }
    let width = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= width) {
        return Err(Error::Range(format!(
            "label {bad} out of range [0, {width})"
        )));
    }
    Ok(())
}

/// Mean cross-entropy over a single logit matrix; the plain classification
/// objective used when the domain branch is switched off.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_single_ce(logits, labels)?;
    Ok(softmax_ce(logits, labels, false).0)
}

/// [`cross_entropy`] plus its gradient with respect to the logits.
pub fn cross_entropy_with_grad(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    check_single_ce(logits, labels)?;
    let (loss, grad) = softmax_ce(logits, labels, true);
    Ok((loss, grad.expect("gradient requested")))
}

/// Two-branch cross-entropy: per sample, the class-branch term plus the
/// domain-branch term, averaged over the batch.
pub fn ce_dis(
    class_logits: &Array2<f64>,
    domain_logits: &Array2<f64>,
    class_labels: &[usize],
    domain_labels: &[usize],
) -> Result<f64> {
    check_ce_inputs(class_logits, domain_logits, class_labels, domain_labels)?;
    let (class_term, _) = softmax_ce(class_logits, class_labels, false);
    let (domain_term, _) = softmax_ce(domain_logits, domain_labels, false);
    Ok(class_term + domain_term)
}

/// [`ce_dis`] plus gradients with respect to both logit matrices.
pub fn ce_dis_with_grad(
    class_logits: &Array2<f64>,
    domain_logits: &Array2<f64>,
    class_labels: &[usize],
    domain_labels: &[usize],
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_ce_inputs(class_logits, domain_logits, class_labels, domain_labels)?;
    let (class_term, gc) = softmax_ce(class_logits, class_labels, true);
    let (domain_term, gd) = softmax_ce(domain_logits, domain_labels, true);
    Ok((
        class_term + domain_term,
        gc.expect("gradient requested"),
        gd.expect("gradient requested"),
    ))
}

/// Total objective: cross-entropy plus `alpha` times the contrastive term.
pub fn total_loss(ce: f64, dscl: f64, alpha: f64) -> f64 {
    ce + alpha * dscl
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const E: f64 = std::f64::consts::E;

    /// Random unit-row batch for randomized oracle/property checks.
    pub(crate) fn random_unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Array2<f64> {
        let mut z = Array2::zeros((rows, dim));
        for i in 0..rows {
            loop {
                let mut norm_sq = 0.0;
                for j in 0..dim {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    z[[i, j]] = v;
                    norm_sq += v * v;
                }
                if norm_sq > 1e-6 {
                    let norm = norm_sq.sqrt();
                    for j in 0..dim {
                        z[[i, j]] /= norm;
                    }
                    break;
                }
            }
        }
        z
    }

    #[test]
    fn single_positive_no_negatives_is_zero() {
        let z = array![[1.0, 0.0], [1.0, 0.0]];
        let loss = sup_contrastive(&z, &[0, 0], 1.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn all_distinct_labels_skip_every_anchor() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
        let loss = sup_contrastive(&z, &[0, 1, 2], 1.0).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn four_point_closed_form() {
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let loss = sup_contrastive(&z, &[0, 0, 1, 1], 1.0).unwrap();
        // Each anchor: one positive at similarity 1, two negatives at 0.
        let expected = (1.0 + 2.0 / E).ln();
        assert!((loss - expected).abs() < 1e-9, "got {loss}, want {expected}");
    }

    #[test]
    fn rejects_bad_temperature_and_non_unit_rows() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            sup_contrastive(&z, &[0, 1], 0.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            sup_contrastive(&z, &[0, 1], -1.0),
            Err(Error::Contract(_))
        ));
        let bad = array![[0.5, 0.0], [0.0, 1.0]];
        assert!(matches!(
            sup_contrastive(&bad, &[0, 1], 1.0),
            Err(Error::Contract(_))
        ));
        let single = array![[1.0, 0.0]];
        assert!(sup_contrastive(&single, &[0], 1.0).is_err());
    }

    fn toy_dual() -> DualEmbeddings {
        DualEmbeddings::new(
            array![[1.0, 0.0], [1.0, 0.0]],
            array![[0.0, 1.0], [0.0, 1.0]],
            vec![0, 0],
            vec![0, 0],
        )
        .unwrap()
    }

    #[test]
    fn comb_toy_closed_form() {
        let space = LabelSpace::new(5, 4).unwrap();
        let loss = dscl_comb(&toy_dual(), &space, 1.0).unwrap();
        let expected = (1.0 + 2.0 / E).ln();
        assert!((loss - expected).abs() < 1e-9, "got {loss}, want {expected}");
    }

    #[test]
    fn ind_toy_is_twice_the_comb_value() {
        let loss = dscl_ind(&toy_dual(), 1.0).unwrap();
        let expected = 2.0 * (1.0 + 2.0 / E).ln();
        assert!((loss - expected).abs() < 1e-9, "got {loss}, want {expected}");
        let (domain_part, class_part) = dscl_ind_parts(&toy_dual(), 1.0).unwrap();
        assert!((domain_part - class_part).abs() < 1e-12);
    }

    #[test]
    fn ind_parts_equal_when_branches_mirror() {
        // Copy the class rows into the domain slot and relabel; the two
        // sums are then symmetric.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random_unit_rows(&mut rng, 6, 3);
        let labels = vec![0, 1, 0, 1, 2, 2];
        let d = DualEmbeddings::new(z.clone(), z, labels.clone(), labels).unwrap();
        let (domain_part, class_part) = dscl_ind_parts(&d, 0.5).unwrap();
        assert!((domain_part - class_part).abs() < 1e-12);
    }

    #[test]
    fn ind_all_distinct_labels_is_zero() {
        let d = DualEmbeddings::new(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[0.0, -1.0], [-1.0, 0.0]],
            vec![0, 1],
            vec![0, 1],
        )
        .unwrap();
        assert_eq!(dscl_ind(&d, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn comb_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let space = LabelSpace::new(3, 2).unwrap();
        let zc = random_unit_rows(&mut rng, 5, 4);
        let zd = random_unit_rows(&mut rng, 5, 4);
        let class_labels = vec![0, 1, 2, 0, 1];
        let domain_labels = vec![0, 1, 0, 1, 0];
        let d = DualEmbeddings::new(zc.clone(), zd.clone(), class_labels.clone(), domain_labels.clone())
            .unwrap();
        let base = dscl_comb(&d, &space, 0.3).unwrap();

        let perm = [4usize, 2, 0, 3, 1];
        let select = |m: &Array2<f64>| {
            let rows: Vec<_> = perm.iter().map(|&i| m.row(i)).collect();
            ndarray::stack(Axis(0), &rows).unwrap()
        };
        let dp = DualEmbeddings::new(
            select(&zc),
            select(&zd),
            perm.iter().map(|&i| class_labels[i]).collect(),
            perm.iter().map(|&i| domain_labels[i]).collect(),
        )
        .unwrap();
        let permuted = dscl_comb(&dp, &space, 0.3).unwrap();
        assert!((base - permuted).abs() < 1e-9);
    }

    #[test]
    fn ce_confident_correct_logits_vanish() {
        let class_logits = array![[1000.0, 0.0, 0.0], [0.0, 1000.0, 0.0]];
        let domain_logits = array![[1000.0, 0.0], [0.0, 1000.0]];
        let loss = ce_dis(&class_logits, &domain_logits, &[0, 1], &[0, 1]).unwrap();
        assert!(loss < 1e-6, "got {loss}");
    }

    #[test]
    fn ce_uniform_logits_closed_form() {
        let class_logits = Array2::zeros((3, 7));
        let domain_logits = Array2::zeros((3, 4));
        let loss = ce_dis(&class_logits, &domain_logits, &[0, 3, 6], &[0, 1, 3]).unwrap();
        let expected = (7.0f64).ln() + (4.0f64).ln();
        assert!((loss - expected).abs() < 1e-9, "got {loss}, want {expected}");
    }

    #[test]
    fn ce_batch_duplication_invariant() {
        let class_logits = array![[0.3, -0.2, 1.0], [0.5, 0.1, -0.4]];
        let domain_logits = array![[0.9, -0.3], [-0.1, 0.2]];
        let base = ce_dis(&class_logits, &domain_logits, &[2, 0], &[0, 1]).unwrap();

        let dup = |m: &Array2<f64>| ndarray::concatenate(Axis(0), &[m.view(), m.view()]).unwrap();
        let doubled = ce_dis(
            &dup(&class_logits),
            &dup(&domain_logits),
            &[2, 0, 2, 0],
            &[0, 1, 0, 1],
        )
        .unwrap();
        assert!((base - doubled).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_labels() {
        let class_logits = Array2::zeros((2, 3));
        let domain_logits = Array2::zeros((2, 2));
        assert!(matches!(
            ce_dis(&class_logits, &domain_logits, &[0, 3], &[0, 1]),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            ce_dis(&class_logits, &domain_logits, &[0, 1], &[2, 0]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn total_loss_is_affine_in_alpha() {
        assert_eq!(total_loss(3.0, 0.7, 0.0), 3.0);
        let base = total_loss(3.3322, 0.5514, 1.0);
        assert!((base - 3.8836).abs() < 1e-9);
        let with_dscl = |alpha: f64| total_loss(1.0, 0.25, alpha) - 1.0;
        assert!((with_dscl(2.0) - 2.0 * with_dscl(1.0)).abs() < 1e-12);
    }

    #[test]
    fn temperature_limit_reaches_log_batch_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_unit_rows(&mut rng, 6, 4);
        let labels = vec![0, 0, 1, 1, 2, 2];
        let loss = sup_contrastive(&z, &labels, 1e6).unwrap();
        let expected = (5.0f64).ln();
        assert!((loss - expected).abs() < 1e-3, "got {loss}, want {expected}");
    }

    #[test]
    fn scl_nonnegative_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let rows = rng.gen_range(2..12);
            let dim = rng.gen_range(2..6);
            let z = random_unit_rows(&mut rng, rows, dim);
            let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..3)).collect();
            let loss = sup_contrastive(&z, &labels, 0.5).unwrap();
            assert!(loss >= 0.0);
        }
    }
}
