//! Brute-force reference implementations of the contrastive losses.
//!
//! Everything here is written as explicit loops over anchors, positives, and
//! denominator terms, with no matrix math and no code shared with the
//! vectorized implementations in the parent module. The verification suite
//! and the acceptance tests compare the two paths on randomized batches.

use ndarray::Array2;

use crate::core::{DualEmbeddings, LabelSpace, LabelKind};

fn dot(z: &Array2<f64>, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for k in 0..z.ncols() {
        acc += z[[a, k]] * z[[b, k]];
    }
    acc
}

/// Double-loop supervised contrastive loss, mean over contributing anchors.
pub fn scl(z: &Array2<f64>, labels: &[usize], tau: f64) -> f64 {
    let n = z.nrows();
    let mut total = 0.0;
    let mut contributing = 0usize;

    for anchor in 0..n {
        let mut positives = Vec::new();
        for other in 0..n {
            if other != anchor && labels[other] == labels[anchor] {
                positives.push(other);
            }
        }
        if positives.is_empty() {
            continue;
        }
        contributing += 1;

        let mut max_term = f64::NEG_INFINITY;
        for other in 0..n {
            if other != anchor {
                let t = dot(z, anchor, other) / tau;
                if t > max_term {
                    max_term = t;
                }
            }
        }
        let mut denominator = 0.0;
        for other in 0..n {
            if other != anchor {
                denominator += (dot(z, anchor, other) / tau - max_term).exp();
            }
        }

        let mut anchor_sum = 0.0;
        for &p in &positives {
            let numerator = dot(z, anchor, p) / tau - max_term;
            anchor_sum += -(numerator - denominator.ln());
        }
        total += anchor_sum / positives.len() as f64;
    }

    if contributing == 0 {
        0.0
    } else {
        (total / contributing as f64).max(0.0)
    }
}

/// Double-loop combined-space loss: class rows then domain rows, labels
/// mapped into the disjoint combined encoding.
pub fn dscl_comb(d: &DualEmbeddings, space: &LabelSpace, tau: f64) -> f64 {
    let b = d.len();
    let dim = d.dim();
    let mut rows = Array2::zeros((2 * b, dim));
    let mut labels = vec![0usize; 2 * b];
    for i in 0..b {
        for k in 0..dim {
            rows[[i, k]] = d.z_class[[i, k]];
            rows[[b + i, k]] = d.z_domain[[i, k]];
        }
        labels[i] = space
            .combined_label(LabelKind::Class, d.class_labels[i])
            .expect("label in range");
        labels[b + i] = space
            .combined_label(LabelKind::Domain, d.domain_labels[i])
            .expect("label in range");
    }
    scl(&rows, &labels, tau)
}

/// One side of the independent-space loss: anchors and positives come from
/// `own` (same `labels` value), while every row of `extra` joins the
/// denominator as an additional negative.
fn one_sided(own: &Array2<f64>, labels: &[usize], extra: &Array2<f64>, tau: f64) -> f64 {
    let n = own.nrows();
    let m = extra.nrows();
    let mut total = 0.0;
    let mut contributing = 0usize;

    for anchor in 0..n {
        let mut positives = Vec::new();
        for other in 0..n {
            if other != anchor && labels[other] == labels[anchor] {
                positives.push(other);
            }
        }
        if positives.is_empty() {
            continue;
        }
        contributing += 1;

        let mut terms = Vec::new();
        for other in 0..n {
            if other != anchor {
                terms.push(dot(own, anchor, other) / tau);
            }
        }
        for ex in 0..m {
            let mut sim = 0.0;
            for k in 0..own.ncols() {
                sim += own[[anchor, k]] * extra[[ex, k]];
            }
            terms.push(sim / tau);
        }
        let mut max_term = f64::NEG_INFINITY;
        for &t in &terms {
            if t > max_term {
                max_term = t;
            }
        }
        let mut denominator = 0.0;
        for &t in &terms {
            denominator += (t - max_term).exp();
        }

        let mut anchor_sum = 0.0;
        for &p in &positives {
            let numerator = dot(own, anchor, p) / tau - max_term;
            anchor_sum += -(numerator - denominator.ln());
        }
        total += anchor_sum / positives.len() as f64;
    }

    if contributing == 0 {
        0.0
    } else {
        (total / contributing as f64).max(0.0)
    }
}

/// Double-loop independent-space loss: domain part plus class part.
pub fn dscl_ind(d: &DualEmbeddings, tau: f64) -> f64 {
    one_sided(&d.z_domain, &d.domain_labels, &d.z_class, tau)
        + one_sided(&d.z_class, &d.class_labels, &d.z_domain, tau)
}
