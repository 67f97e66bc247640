//! Core domain types: label spaces, examples, batches, and dual embeddings.
//!
//! Everything here is immutable after construction and shared by reference
//! across the rest of the crate.

use ndarray::{s, Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-norm tolerance accepted by constructors and loss preconditions.
///
/// Looser than the ±1e-6 the encoder normalization guarantees so that
/// finite-difference probes (step 1e-5) can perturb rows without tripping
/// the guard.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

/// Which kind of raw label a value is, class or domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Class,
    Domain,
}

/// The class space, the generated domain-label space, and their disjoint
/// combined encoding: classes map to `[0, K)`, domains to `[K, K+M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    num_classes: usize,
    num_domains: usize,
}

impl LabelSpace {
    pub fn new(num_classes: usize, num_domains: usize) -> Result<Self> {
        if num_classes == 0 || num_domains == 0 {
            return Err(Error::Config(format!(
                "label space needs at least one class and one domain, got K={num_classes}, M={num_domains}"
            )));
        }
        Ok(Self {
            num_classes,
            num_domains,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    /// Size of the combined label space, `K + M`.
    pub fn combined_size(&self) -> usize {
        self.num_classes + self.num_domains
    }

    /// Map a raw class or domain label into the combined encoding.
    pub fn combined_label(&self, kind: LabelKind, raw: usize) -> Result<usize> {
        match kind {
            LabelKind::Class => {
                if raw >= self.num_classes {
                    return Err(Error::Range(format!(
                        "class label {raw} out of range [0, {})",
                        self.num_classes
                    )));
                }
                Ok(raw)
            }
            LabelKind::Domain => {
                if raw >= self.num_domains {
                    return Err(Error::Range(format!(
                        "domain label {raw} out of range [0, {})",
                        self.num_domains
                    )));
                }
                Ok(self.num_classes + raw)
            }
        }
    }

    /// Invert [`combined_label`](Self::combined_label).
    pub fn decode_combined(&self, combined: usize) -> Result<(LabelKind, usize)> {
        if combined < self.num_classes {
            Ok((LabelKind::Class, combined))
        } else if combined < self.combined_size() {
            Ok((LabelKind::Domain, combined - self.num_classes))
        } else {
            Err(Error::Range(format!(
                "combined label {combined} out of range [0, {})",
                self.combined_size()
            )))
        }
    }
}

/// One image with its class label and generated domain label.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    /// Channels-last `[H, W, C]`, values in `[0, 1]`.
    pub image: Array3<f64>,
    pub class_label: usize,
    pub domain_label: usize,
    pub domain_name: String,
    pub example_id: String,
}

impl LabeledExample {
    pub fn new(
        image: Array3<f64>,
        class_label: usize,
        domain_label: usize,
        domain_name: impl Into<String>,
        example_id: impl Into<String>,
        space: &LabelSpace,
    ) -> Result<Self> {
        if class_label >= space.num_classes() {
            return Err(Error::Range(format!(
                "class label {class_label} out of range [0, {})",
                space.num_classes()
            )));
        }
        if domain_label >= space.num_domains() {
            return Err(Error::Range(format!(
                "domain label {domain_label} out of range [0, {})",
                space.num_domains()
            )));
        }
        Ok(Self {
            image,
            class_label,
            domain_label,
            domain_name: domain_name.into(),
            example_id: example_id.into(),
        })
    }
}

/// A two-view training batch: rows `i` and `i + N` are augmented views of the
/// same base sample and carry identical labels.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    /// `[2N, H, W, C]`, view-1 block stacked above view-2 block.
    pub images: Array4<f64>,
    pub class_labels: Vec<usize>,
    pub domain_labels: Vec<usize>,
}

impl AugmentedBatch {
    pub fn new(
        images: Array4<f64>,
        class_labels: Vec<usize>,
        domain_labels: Vec<usize>,
    ) -> Result<Self> {
        let rows = images.shape()[0];
        if rows == 0 || rows % 2 != 0 {
            return Err(Error::Shape(format!(
                "augmented batch must have an even, nonzero row count, got {rows}"
            )));
        }
        if class_labels.len() != rows || domain_labels.len() != rows {
            return Err(Error::Shape(format!(
                "label vectors ({}, {}) do not match image rows ({rows})",
                class_labels.len(),
                domain_labels.len()
            )));
        }
        let n = rows / 2;
        for i in 0..n {
            if class_labels[i] != class_labels[i + n] || domain_labels[i] != domain_labels[i + n] {
                return Err(Error::Contract(format!(
                    "view rows {i} and {} disagree on labels",
                    i + n
                )));
            }
        }
        Ok(Self {
            images,
            class_labels,
            domain_labels,
        })
    }

    /// Number of base samples `N`; the batch holds `2N` rows.
    pub fn num_pairs(&self) -> usize {
        self.images.shape()[0] / 2
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-batch class-branch and domain-branch embeddings with unit rows,
/// in row correspondence with the batch they came from.
#[derive(Debug, Clone)]
pub struct DualEmbeddings {
    /// Class-branch features, `[B, D]`, unit rows.
    pub z_class: Array2<f64>,
    /// Domain-branch features, `[B, D]`, unit rows.
    pub z_domain: Array2<f64>,
    pub class_labels: Vec<usize>,
    pub domain_labels: Vec<usize>,
}

impl DualEmbeddings {
    pub fn new(
        z_class: Array2<f64>,
        z_domain: Array2<f64>,
        class_labels: Vec<usize>,
        domain_labels: Vec<usize>,
    ) -> Result<Self> {
        if z_class.dim() != z_domain.dim() {
            return Err(Error::Shape(format!(
                "class features {:?} and domain features {:?} must share shape",
                z_class.dim(),
                z_domain.dim()
            )));
        }
        let rows = z_class.nrows();
        if class_labels.len() != rows || domain_labels.len() != rows {
            return Err(Error::Shape(format!(
                "label vectors ({}, {}) do not match embedding rows ({rows})",
                class_labels.len(),
                domain_labels.len()
            )));
        }
        for (name, z) in [("class", &z_class), ("domain", &z_domain)] {
            check_unit_rows(z, name)?;
        }
        Ok(Self {
            z_class,
            z_domain,
            class_labels,
            domain_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.z_class.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.z_class.ncols()
    }

    /// Stack both feature types into one matrix under the combined label
    /// encoding: class rows first with labels `[0, K)`, then domain rows with
    /// labels `[K, K+M)`. Cross-type rows can never share a label.
    pub fn concat_mixed(&self, space: &LabelSpace) -> Result<(Array2<f64>, Vec<usize>)> {
        let rows = self.len();
        let dim = self.dim();
        let mut stacked = Array2::zeros((2 * rows, dim));
        stacked.slice_mut(s![..rows, ..]).assign(&self.z_class);
        stacked.slice_mut(s![rows.., ..]).assign(&self.z_domain);

        let mut labels = Vec::with_capacity(2 * rows);
        for &c in &self.class_labels {
            labels.push(space.combined_label(LabelKind::Class, c)?);
        }
        for &d in &self.domain_labels {
            labels.push(space.combined_label(LabelKind::Domain, d)?);
        }
        Ok((stacked, labels))
    }
}

/// Error unless every row of `z` has unit Euclidean norm within
/// [`UNIT_NORM_TOLERANCE`].
pub fn check_unit_rows(z: &Array2<f64>, name: &str) -> Result<()> {
    for (i, row) in z.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Contract(format!(
                "{name} row {i} has norm {norm:.6}, expected 1 within {UNIT_NORM_TOLERANCE:e}"
            )));
        }
    }
    Ok(())
}
