//! Datasets, leave-one-domain-out splits, and two-view batching.
//!
//! A dataset is a flat list of labeled images plus the name tables that map
//! class and domain indices to human-readable names. Datasets come from the
//! synthetic generator ([`synthetic::generate_synthetic`]) or from an image
//! directory tree (`root/<domain>/<class>/*.png|jpg`), where indices follow
//! lexicographic name order.

pub mod augment;
pub mod synthetic;

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;

use crate::core::{AugmentedBatch, LabelSpace, LabeledExample};
use crate::seeding::rng_for;
use crate::{Error, Result};

pub use augment::AugmentConfig;
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Seed-stream tags; distinct per consumer so streams never collide.
const SPLIT_TAG: u64 = 0x53_50_4c_54;
const SHUFFLE_TAG: u64 = 0x53_48_46_4c;
const AUG_TAG: u64 = 0x41_55_47_4d;

/// A multi-domain image classification corpus held in memory.
#[derive(Debug, Clone)]
pub struct DGDataset {
    pub space: LabelSpace,
    /// Channels-last image shape shared by every example.
    pub image_shape: (usize, usize, usize),
    /// Domain names in index order.
    pub domain_names: Vec<String>,
    /// Class names in index order.
    pub class_names: Vec<String>,
    pub examples: Vec<LabeledExample>,
}

impl DGDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Resolve a domain name to its index.
    pub fn domain_index(&self, name: &str) -> Result<usize> {
        self.domain_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownName {
                kind: "domain",
                name: name.to_string(),
            })
    }

    /// Indices of every example in domain `d`.
    pub fn indices_of_domain(&self, d: usize) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, ex)| ex.domain_label == d)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stack the referenced examples into a `[B, H, W, C]` array.
    pub fn images_for(&self, indices: &[usize]) -> Array4<f64> {
        let (h, w, c) = self.image_shape;
        let mut out = Array4::zeros((indices.len(), h, w, c));
        for (row, &idx) in indices.iter().enumerate() {
            out.index_axis_mut(Axis(0), row)
                .assign(&self.examples[idx].image);
        }
        out
    }

    /// `(class_labels, domain_labels)` for the referenced examples.
    pub fn labels_for(&self, indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let classes = indices.iter().map(|&i| self.examples[i].class_label).collect();
        let domains = indices.iter().map(|&i| self.examples[i].domain_label).collect();
        (classes, domains)
    }
}

/// Index sets for one leave-one-domain-out round. All indices refer to the
/// dataset the plan was built from.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    pub target_domain: usize,
    /// 80% of every source domain.
    pub source_train: Vec<usize>,
    /// The held-out 20% of every source domain.
    pub source_val: Vec<usize>,
    /// The entire target domain; used for evaluation only.
    pub target_val: Vec<usize>,
}

/// Hold out `target` entirely; split every other domain 80/20 into train and
/// validation with a shuffle derived from `seed`.
pub fn leave_one_out(ds: &DGDataset, target: usize, seed: u64) -> Result<SplitPlan> {
    let m = ds.space.num_domains();
    if target >= m {
        return Err(Error::Range(format!(
            "target domain {target} out of range [0, {m})"
        )));
    }
    let mut source_train = Vec::new();
    let mut source_val = Vec::new();
    for d in 0..m {
        if d == target {
            continue;
        }
        let mut idxs = ds.indices_of_domain(d);
        if idxs.len() < 2 {
            return Err(Error::Contract(format!(
                "domain {} has {} examples; need at least 2 to split",
                ds.domain_names[d],
                idxs.len()
            )));
        }
        let mut rng = rng_for(seed, &[SPLIT_TAG, d as u64]);
        idxs.shuffle(&mut rng);
        let n_val = ((idxs.len() as f64) * 0.2).round() as usize;
        let n_val = n_val.clamp(1, idxs.len() - 1);
        source_val.extend_from_slice(&idxs[..n_val]);
        source_train.extend_from_slice(&idxs[n_val..]);
    }
    let target_val = ds.indices_of_domain(target);
    if target_val.is_empty() {
        return Err(Error::Contract(format!(
            "target domain {} has no examples",
            ds.domain_names[target]
        )));
    }
    source_train.sort_unstable();
    source_val.sort_unstable();
    Ok(SplitPlan {
        target_domain: target,
        source_train,
        source_val,
        target_val,
    })
}

/// Shuffle `indices` and cut them into two-view augmented batches of
/// `batch_size` base samples each. A trailing partial batch is dropped.
/// Batches depend only on `(seed, epoch)` and the augment config.
pub fn make_batches(
    ds: &DGDataset,
    indices: &[usize],
    aug: &AugmentConfig,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<AugmentedBatch>> {
    aug.validate()?;
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if batch_size > indices.len() {
        return Err(Error::Config(format!(
            "batch_size {batch_size} exceeds the {} available training examples",
            indices.len()
        )));
    }
    let (h, w, c) = ds.image_shape;
    let mut order = indices.to_vec();
    order.shuffle(&mut rng_for(seed, &[SHUFFLE_TAG, epoch]));

    let mut batches = Vec::with_capacity(order.len() / batch_size);
    for (bi, chunk) in order.chunks_exact(batch_size).enumerate() {
        let n = chunk.len();
        let mut images = Array4::zeros((2 * n, h, w, c));
        let mut class_labels = vec![0usize; 2 * n];
        let mut domain_labels = vec![0usize; 2 * n];
        for (row, &idx) in chunk.iter().enumerate() {
            let ex = &ds.examples[idx];
            for view in 0..2u64 {
                let mut rng = rng_for(
                    seed,
                    &[AUG_TAG, epoch, bi as u64, row as u64, view],
                );
                let img = augment::augment(&ex.image, aug, &mut rng);
                let out_row = view as usize * n + row;
                images.index_axis_mut(Axis(0), out_row).assign(&img);
                class_labels[out_row] = ex.class_label;
                domain_labels[out_row] = ex.domain_label;
            }
        }
        batches.push(AugmentedBatch::new(images, class_labels, domain_labels)?);
    }
    Ok(batches)
}

// ── Directory corpus ───────────────────────────────────────────────────────

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
    )
}

fn sorted_subdirs(path: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(path)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Load `root/<domain>/<class>/*.{png,jpg,jpeg}` into a dataset, resizing
/// every image to `image_size = (H, W)` RGB. Domain and class indices follow
/// lexicographic directory-name order; the class set is the union across
/// domains and every `(domain, class)` cell must be non-empty.
pub fn load_directory(root: &Path, image_size: (usize, usize)) -> Result<DGDataset> {
    let ingest = |msg: String| Error::Ingest {
        path: root.to_path_buf(),
        msg,
    };
    if !root.is_dir() {
        return Err(ingest("not a directory".into()));
    }
    let domain_names = sorted_subdirs(root)?;
    if domain_names.len() < 2 {
        return Err(ingest(format!(
            "found {} domain directories; need at least 2",
            domain_names.len()
        )));
    }
    let mut class_set = BTreeSet::new();
    for dom in &domain_names {
        for cls in sorted_subdirs(&root.join(dom))? {
            class_set.insert(cls);
        }
    }
    let class_names: Vec<String> = class_set.into_iter().collect();
    if class_names.len() < 2 {
        return Err(ingest(format!(
            "found {} class directories; need at least 2",
            class_names.len()
        )));
    }
    let space = LabelSpace::new(class_names.len(), domain_names.len())?;

    let (h, w) = image_size;
    let mut examples = Vec::new();
    for (d, dom) in domain_names.iter().enumerate() {
        for (k, cls) in class_names.iter().enumerate() {
            let cell = root.join(dom).join(cls);
            if !cell.is_dir() {
                return Err(ingest(format!("domain {dom} is missing class {cls}")));
            }
            let mut files: Vec<_> = std::fs::read_dir(&cell)?
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .map(|e| e.path())
                .filter(|p| p.is_file() && is_image_file(p))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(ingest(format!("cell {dom}/{cls} has no image files")));
            }
            for file in files {
                let decoded = image::open(&file).map_err(|e| Error::Ingest {
                    path: file.clone(),
                    msg: e.to_string(),
                })?;
                let resized = decoded
                    .resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle)
                    .to_rgb8();
                let mut img = Array3::zeros((h, w, 3));
                for (x, y, px) in resized.enumerate_pixels() {
                    for ch in 0..3 {
                        img[[y as usize, x as usize, ch]] = px.0[ch] as f64 / 255.0;
                    }
                }
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                examples.push(LabeledExample::new(
                    img,
                    k,
                    d,
                    dom.clone(),
                    format!("{dom}/{cls}/{stem}"),
                    &space,
                )?);
            }
        }
    }
    Ok(DGDataset {
        space,
        image_shape: (h, w, 3),
        domain_names,
        class_names,
        examples,
    })
}

/// Write a dataset as a `root/<domain>/<class>/NNNNN.png` tree (8-bit RGB).
pub fn save_as_directory(ds: &DGDataset, root: &Path) -> Result<()> {
    let (_, _, c) = ds.image_shape;
    if c != 3 {
        return Err(Error::Contract(format!(
            "directory export requires 3-channel images, got {c}"
        )));
    }
    let mut counters = vec![0usize; ds.space.num_classes() * ds.space.num_domains()];
    for ex in &ds.examples {
        let dir = root
            .join(&ds.domain_names[ex.domain_label])
            .join(&ds.class_names[ex.class_label]);
        std::fs::create_dir_all(&dir)?;
        let (h, w, _) = ds.image_shape;
        let mut buf = image::RgbImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = buf.get_pixel_mut(x as u32, y as u32);
                for ch in 0..3 {
                    px.0[ch] = (ex.image[[y, x, ch]].clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
        let counter = &mut counters[ex.domain_label * ds.space.num_classes() + ex.class_label];
        let path = dir.join(format!("{counter:05}.png"));
        *counter += 1;
        buf.save(&path).map_err(|e| Error::Ingest {
            path,
            msg: e.to_string(),
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> DGDataset {
        generate_synthetic(&SyntheticSpec {
            num_classes: 3,
            num_domains: 3,
            n_per_cell: 10,
            image_size: 8,
            nuisance_strength: 1.0,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn split_is_disjoint_and_covers_sources() {
        let ds = tiny_dataset();
        let plan = leave_one_out(&ds, 1, 0).unwrap();
        assert_eq!(plan.target_domain, 1);
        assert_eq!(plan.target_val.len(), 30);
        assert!(plan.target_val.iter().all(|&i| ds.examples[i].domain_label == 1));

        let train: BTreeSet<_> = plan.source_train.iter().collect();
        let val: BTreeSet<_> = plan.source_val.iter().collect();
        assert!(train.is_disjoint(&val));
        assert_eq!(train.len() + val.len(), 60);
        assert!(plan
            .source_train
            .iter()
            .chain(&plan.source_val)
            .all(|&i| ds.examples[i].domain_label != 1));
        // 80/20 per source domain: 24 train, 6 val each.
        for d in [0usize, 2] {
            let t = plan.source_train.iter().filter(|&&i| ds.examples[i].domain_label == d).count();
            let v = plan.source_val.iter().filter(|&&i| ds.examples[i].domain_label == d).count();
            assert_eq!((t, v), (24, 6));
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let ds = tiny_dataset();
        let a = leave_one_out(&ds, 0, 7).unwrap();
        let b = leave_one_out(&ds, 0, 7).unwrap();
        let c = leave_one_out(&ds, 0, 8).unwrap();
        assert_eq!(a.source_train, b.source_train);
        assert_eq!(a.source_val, b.source_val);
        assert_ne!(a.source_val, c.source_val);
    }

    #[test]
    fn split_rejects_bad_target() {
        let ds = tiny_dataset();
        assert!(matches!(leave_one_out(&ds, 3, 0), Err(Error::Range(_))));
    }

    #[test]
    fn batches_have_two_view_structure() {
        let ds = tiny_dataset();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        let aug = AugmentConfig::default();
        let batches = make_batches(&ds, &plan.source_train, &aug, 8, 3, 0).unwrap();
        assert_eq!(batches.len(), plan.source_train.len() / 8);
        for b in &batches {
            assert_eq!(b.images.dim(), (16, 8, 8, 3));
            assert_eq!(b.num_pairs(), 8);
            for i in 0..8 {
                assert_eq!(b.class_labels[i], b.class_labels[i + 8]);
                assert_eq!(b.domain_labels[i], b.domain_labels[i + 8]);
            }
            // The two views of a pair should differ (augmentation is active).
            let v1 = b.images.index_axis(Axis(0), 0);
            let v2 = b.images.index_axis(Axis(0), 8);
            assert_ne!(v1, v2);
        }
    }

    #[test]
    fn batches_are_deterministic_per_epoch() {
        let ds = tiny_dataset();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        let aug = AugmentConfig::default();
        let a = make_batches(&ds, &plan.source_train, &aug, 8, 3, 1).unwrap();
        let b = make_batches(&ds, &plan.source_train, &aug, 8, 3, 1).unwrap();
        let c = make_batches(&ds, &plan.source_train, &aug, 8, 3, 2).unwrap();
        assert_eq!(a[0].images, b[0].images);
        assert_eq!(a[0].class_labels, b[0].class_labels);
        assert_ne!(a[0].images, c[0].images);
    }

    #[test]
    fn batch_size_larger_than_pool_is_an_error() {
        let ds = tiny_dataset();
        let plan = leave_one_out(&ds, 2, 0).unwrap();
        let aug = AugmentConfig::default();
        let err = make_batches(&ds, &plan.source_train, &aug, 1000, 3, 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn directory_round_trip_preserves_structure() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_as_directory(&ds, dir.path()).unwrap();
        let loaded = load_directory(dir.path(), (8, 8)).unwrap();
        assert_eq!(loaded.domain_names, ds.domain_names);
        assert_eq!(loaded.class_names, ds.class_names);
        assert_eq!(loaded.len(), ds.len());
        assert_eq!(loaded.space, ds.space);
        // Pixels survive 8-bit quantization to within half a level.
        let a = &ds.examples[0];
        let b = loaded
            .examples
            .iter()
            .find(|ex| ex.class_label == a.class_label && ex.domain_label == a.domain_label)
            .unwrap();
        assert_eq!(b.image.dim(), (8, 8, 3));
    }

    #[test]
    fn directory_names_map_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        // Create in non-sorted order; indices must follow sorted order.
        for dom in ["zoo", "arc"] {
            for cls in ["wolf", "bee"] {
                std::fs::create_dir_all(root.join(dom).join(cls)).unwrap();
                let img = image::RgbImage::from_pixel(4, 4, image::Rgb([128, 64, 32]));
                img.save(root.join(dom).join(cls).join("a.png")).unwrap();
            }
        }
        let ds = load_directory(root, (4, 4)).unwrap();
        assert_eq!(ds.domain_names, vec!["arc", "zoo"]);
        assert_eq!(ds.class_names, vec!["bee", "wolf"]);
        assert_eq!(ds.domain_index("zoo").unwrap(), 1);
        assert!(matches!(
            ds.domain_index("missing"),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn missing_cell_is_an_ingest_error() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        save_as_directory(&ds, dir.path()).unwrap();
        let victim = dir
            .path()
            .join(&ds.domain_names[1])
            .join(&ds.class_names[0]);
        std::fs::remove_dir_all(&victim).unwrap();
        assert!(matches!(
            load_directory(dir.path(), (8, 8)),
            Err(Error::Ingest { .. })
        ));
    }
}
