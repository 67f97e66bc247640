//! Linear probes on frozen embeddings.
//!
//! A probe is a multinomial logistic regression fit on one set of embeddings
//! and scored on a disjoint set; it measures what information a frozen
//! encoder exposes linearly, nothing else. Class probes use the domain
//! generalization reading: fit on source validation, test on the unseen
//! target domain. Domain probes need every domain present on both sides
//! (otherwise held-out domain labels are unlearnable by construction), so
//! they fit and test on disjoint stratified halves spanning all domains.
//! The pool is subsampled to equal per-domain counts first; with a flat
//! prior, chance is exactly 1/M and a feature-blind probe cannot beat it.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{argmax, embeddings_for};
use crate::core::LabelKind;
use crate::data::{DGDataset, SplitPlan};
use crate::losses::cross_entropy_with_grad;
use crate::networks::ModelBundle;
use crate::{Error, Result};

/// Which encoder the probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeBranch {
    ClassEncoder,
    DomainEncoder,
}

impl ProbeBranch {
    pub fn label(self) -> &'static str {
        match self {
            ProbeBranch::ClassEncoder => "g_v",
            ProbeBranch::DomainEncoder => "g_s",
        }
    }
}

/// Probe outcome for one (branch, label kind) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub branch: ProbeBranch,
    pub target: LabelKind,
    pub accuracy: f64,
    pub chance: f64,
}

impl std::fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} -> {:<6}  accuracy {:.4}  (chance {:.4})",
            self.branch.label(),
            match self.target {
                LabelKind::Class => "class",
                LabelKind::Domain => "domain",
            },
            self.accuracy,
            self.chance
        )
    }
}

const PROBE_STEPS: usize = 400;
const PROBE_LR: f64 = 0.05;
const PROBE_WEIGHT_DECAY: f64 = 1e-4;

/// Fit a multinomial logistic regression on `(x_fit, y_fit)` and return its
/// accuracy on `(x_test, y_test)`. Zero initialization plus full-batch AdamW
/// on a convex objective makes the fit deterministic.
pub fn linear_probe_accuracy(
    x_fit: &Array2<f64>,
    y_fit: &[usize],
    x_test: &Array2<f64>,
    y_test: &[usize],
    num_labels: usize,
) -> Result<f64> {
    if x_fit.nrows() != y_fit.len() || x_test.nrows() != y_test.len() {
        return Err(Error::Shape(format!(
            "probe rows/labels disagree: fit {}/{} test {}/{}",
            x_fit.nrows(),
            y_fit.len(),
            x_test.nrows(),
            y_test.len()
        )));
    }
    if y_fit.is_empty() || y_test.is_empty() {
        return Err(Error::Probe("empty probe split".into()));
    }
    let distinct = {
        let mut seen = vec![false; num_labels];
        for &y in y_fit {
            if y >= num_labels {
                return Err(Error::Range(format!(
                    "probe label {y} out of range [0, {num_labels})"
                )));
            }
            seen[y] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::Probe(format!(
            "probe training labels collapse to {distinct} distinct value(s)"
        )));
    }

    let dim = x_fit.ncols();
    let mut w = Array2::<f64>::zeros((dim, num_labels));
    let mut b = Array1::<f64>::zeros(num_labels);
    let (mut mw, mut vw) = (Array2::<f64>::zeros((dim, num_labels)), Array2::<f64>::zeros((dim, num_labels)));
    let (mut mb, mut vb) = (Array1::<f64>::zeros(num_labels), Array1::<f64>::zeros(num_labels));
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    for t in 1..=PROBE_STEPS {
        let logits = x_fit.dot(&w) + &b;
        let (_, dlogits) = cross_entropy_with_grad(&logits, y_fit)?;
        let gw = x_fit.t().dot(&dlogits);
        let gb = dlogits.sum_axis(Axis(0));

        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        ndarray::Zip::from(&mut w)
            .and(&mut mw)
            .and(&mut vw)
            .and(&gw)
            .for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= PROBE_LR * ((*m / bc1) / ((*v / bc2).sqrt() + eps) + PROBE_WEIGHT_DECAY * *p);
            });
        ndarray::Zip::from(&mut b)
            .and(&mut mb)
            .and(&mut vb)
            .and(&gb)
            .for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= PROBE_LR * ((*m / bc1) / ((*v / bc2).sqrt() + eps));
            });
    }

    let logits = x_test.dot(&w) + &b;
    let correct = logits
        .axis_iter(Axis(0))
        .zip(y_test)
        .filter(|(row, y)| argmax(row.as_slice().expect("contiguous")) == **y)
        .count();
    Ok(correct as f64 / y_test.len() as f64)
}

/// Stratified alternating split of `indices` by `label_of`: within each label
/// group (sorted order), even positions fit, odd positions test.
fn stratified_halves(
    indices: &[usize],
    label_of: impl Fn(usize) -> usize,
    num_labels: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); num_labels];
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    for idx in sorted {
        groups[label_of(idx)].push(idx);
    }
    let (mut fit, mut test) = (Vec::new(), Vec::new());
    for group in groups {
        for (pos, idx) in group.into_iter().enumerate() {
            if pos % 2 == 0 {
                fit.push(idx);
            } else {
                test.push(idx);
            }
        }
    }
    (fit, test)
}

/// Probe both frozen encoders for both label kinds; four reports in the
/// order (g_v, class), (g_v, domain), (g_s, class), (g_s, domain). Encoder
/// parameters are read, never written.
pub fn probe_disentanglement(
    bundle: &ModelBundle,
    plan: &SplitPlan,
    ds: &DGDataset,
) -> Result<Vec<ProbeReport>> {
    let k = ds.space.num_classes();
    let m = ds.space.num_domains();

    // Class probes: fit on source validation, test on the unseen target.
    let (fit_zv, fit_zs) = embeddings_for(bundle, ds, &plan.source_val)?;
    let (test_zv, test_zs) = embeddings_for(bundle, ds, &plan.target_val)?;
    let (fit_cls, _) = ds.labels_for(&plan.source_val);
    let (test_cls, _) = ds.labels_for(&plan.target_val);

    // Domain probes: stratified halves over all domains. The raw pool is
    // skewed (the whole target domain vs 20% validation slices of each
    // source), so a bias-only probe would beat 1/M by predicting the
    // majority domain. Subsample every domain to the smallest per-domain
    // count, spreading picks evenly over each sorted group to keep the
    // class mix, before splitting.
    let mut by_domain: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &i in plan.source_val.iter().chain(&plan.target_val) {
        by_domain[ds.examples[i].domain_label].push(i);
    }
    let n_min = by_domain.iter().map(Vec::len).min().unwrap_or(0);
    if n_min == 0 {
        return Err(Error::Probe(
            "domain probe pool is missing a domain".into(),
        ));
    }
    let pool: Vec<usize> = by_domain
        .iter_mut()
        .flat_map(|group| {
            group.sort_unstable();
            (0..n_min).map(|p| group[p * group.len() / n_min]).collect::<Vec<_>>()
        })
        .collect();
    let (dom_fit, dom_test) = stratified_halves(&pool, |i| ds.examples[i].domain_label, m);
    let (dfit_zv, dfit_zs) = embeddings_for(bundle, ds, &dom_fit)?;
    let (dtest_zv, dtest_zs) = embeddings_for(bundle, ds, &dom_test)?;
    let (_, dfit_lab) = ds.labels_for(&dom_fit);
    let (_, dtest_lab) = ds.labels_for(&dom_test);

    let reports = vec![
        ProbeReport {
            branch: ProbeBranch::ClassEncoder,
            target: LabelKind::Class,
            accuracy: linear_probe_accuracy(&fit_zv, &fit_cls, &test_zv, &test_cls, k)?,
            chance: 1.0 / k as f64,
        },
        ProbeReport {
            branch: ProbeBranch::ClassEncoder,
            target: LabelKind::Domain,
            accuracy: linear_probe_accuracy(&dfit_zv, &dfit_lab, &dtest_zv, &dtest_lab, m)?,
            chance: 1.0 / m as f64,
        },
        ProbeReport {
            branch: ProbeBranch::DomainEncoder,
            target: LabelKind::Class,
            accuracy: linear_probe_accuracy(&fit_zs, &fit_cls, &test_zs, &test_cls, k)?,
            chance: 1.0 / k as f64,
        },
        ProbeReport {
            branch: ProbeBranch::DomainEncoder,
            target: LabelKind::Domain,
            accuracy: linear_probe_accuracy(&dfit_zs, &dfit_lab, &dtest_zs, &dtest_lab, m)?,
            chance: 1.0 / m as f64,
        },
    ];
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, leave_one_out, SyntheticSpec};
    use crate::networks::{init_bundle, Architecture, EncoderSpec};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_features_score_exactly_majority_rate() {
        // All-identical embeddings: the probe can only learn the bias, which
        // settles on the most frequent fit label (ties to lowest index).
        let x_fit = Array2::from_elem((8, 4), 0.5);
        let x_test = Array2::from_elem((6, 4), 0.5);
        let y_fit = vec![0, 0, 0, 1, 1, 2, 2, 2]; // 0 and 2 tie at 3
        let y_test = vec![0, 0, 1, 1, 2, 2];
        let acc = linear_probe_accuracy(&x_fit, &y_fit, &x_test, &y_test, 3).unwrap();
        // Majority prediction is label 0 -> exactly 2/6 correct.
        assert!((acc - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn separable_features_reach_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut x_fit = Array2::zeros((20, 3));
        let mut y_fit = Vec::new();
        for i in 0..20 {
            let label = i % 2;
            y_fit.push(label);
            x_fit[[i, label]] = 1.0 + rng.gen_range(-0.05..0.05);
            x_fit[[i, 2]] = rng.gen_range(-0.1..0.1);
        }
        let x_test = x_fit.clone();
        let acc = linear_probe_accuracy(&x_fit, &y_fit, &x_test, &y_fit, 2).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn single_class_fit_data_is_an_error() {
        let x = Array2::from_elem((4, 2), 0.1);
        let y = vec![1, 1, 1, 1];
        assert!(matches!(
            linear_probe_accuracy(&x, &y, &x, &y, 3),
            Err(Error::Probe(_))
        ));
    }

    #[test]
    fn stratified_halves_are_disjoint_and_balanced() {
        let indices: Vec<usize> = (0..20).collect();
        let (fit, test) = stratified_halves(&indices, |i| i % 4, 4);
        assert_eq!(fit.len() + test.len(), 20);
        for label in 0..4 {
            let f = fit.iter().filter(|&&i| i % 4 == label).count();
            let t = test.iter().filter(|&&i| i % 4 == label).count();
            assert_eq!(f, 3);
            assert_eq!(t, 2);
        }
        assert!(fit.iter().all(|i| !test.contains(i)));
    }

    #[test]
    fn untrained_encoder_probes_stay_near_chance_without_nuisance() {
        // At nuisance 0 the domains are pixel-identical, so no encoder can
        // beat domain chance; classes may be partly linearly separable even
        // through random features, so that side is only loosely bounded.
        let ds = generate_synthetic(&SyntheticSpec {
            num_classes: 4,
            num_domains: 4,
            n_per_cell: 12,
            image_size: 8,
            nuisance_strength: 0.0,
            seed: 2,
        })
        .unwrap();
        let plan = leave_one_out(&ds, 0, 0).unwrap();
        let spec = EncoderSpec {
            architecture: Architecture::SmallCnn,
            embedding_dim: 8,
            widths: vec![4],
            input_shape: (8, 8, 3),
            seed: 0,
            projection_head: false,
        };
        let bundle = init_bundle(&spec, &ds.space, 7).unwrap();
        let before = bundle.param_fingerprint();
        let reports = probe_disentanglement(&bundle, &plan, &ds).unwrap();
        assert_eq!(reports.len(), 4);
        assert_eq!(bundle.param_fingerprint(), before);

        for r in &reports {
            match r.target {
                LabelKind::Domain => {
                    assert!((r.chance - 0.25).abs() < 1e-12);
                    assert!(
                        r.accuracy <= r.chance + 0.12,
                        "{}: domain probe beat chance on identical pixels: {}",
                        r.branch.label(),
                        r.accuracy
                    );
                }
                LabelKind::Class => {
                    assert!((r.chance - 0.25).abs() < 1e-12);
                    assert!(r.accuracy <= 1.0 && r.accuracy >= 0.0);
                }
            }
        }
    }
}
