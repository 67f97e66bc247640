//! Embedding export for external visualization (t-SNE and friends).
//!
//! Comma-delimited text, one header row, then one row per example per
//! branch, branch-major: all `g_v` rows, then all `g_s` rows. Values carry
//! nine significant digits; equal inputs produce byte-identical files.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::data::DGDataset;
use crate::networks::ModelBundle;
use crate::{Error, Result};

use super::embeddings_for;

/// Write embeddings of the referenced examples to `path`.
pub fn export_embeddings(
    bundle: &ModelBundle,
    ds: &DGDataset,
    indices: &[usize],
    path: &Path,
) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Contract("export over an empty index set".into()));
    }
    let dim = bundle.spec.embedding_dim;
    let (z_class, z_domain) = embeddings_for(bundle, ds, indices)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "example_id,branch,class_label,domain_label")?;
    for j in 0..dim {
        write!(out, ",e{j}")?;
    }
    writeln!(out)?;

    for (branch, z) in [("g_v", &z_class), ("g_s", &z_domain)] {
        for (row, &idx) in indices.iter().enumerate() {
            let ex = &ds.examples[idx];
            write!(
                out,
                "{},{},{},{}",
                ex.example_id, branch, ex.class_label, ex.domain_label
            )?;
            for j in 0..dim {
                write!(out, ",{:.8e}", z[[row, j]])?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Top eigenvector of symmetric `c` by fixed-count power iteration with a
/// deterministic start; the sign is fixed so the largest-magnitude entry is
/// positive.
fn top_eigenvector(c: &Array2<f64>) -> (f64, Array1<f64>) {
    let d = c.nrows();
    // Index ramp breaks symmetry without randomness.
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + 0.01 * i as f64);
    v /= v.dot(&v).sqrt().max(1e-12);
    for _ in 0..300 {
        let next = c.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm < 1e-12 {
            // c annihilates v: no variance left in this direction.
            return (0.0, v);
        }
        v = next / norm;
    }
    let lambda = v.dot(&c.dot(&v));
    let peak = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v[peak] < 0.0 {
        v *= -1.0;
    }
    (lambda, v)
}

/// Centered top-two principal coordinates of the rows of `z`.
fn plane_coordinates(z: &Array2<f64>) -> Array2<f64> {
    let n = z.nrows() as f64;
    let mean = z.mean_axis(Axis(0)).expect("nonempty");
    let centered = z - &mean.broadcast((z.nrows(), z.ncols())).expect("broadcast");
    let mut cov = centered.t().dot(&centered) / n;
    let (l1, v1) = top_eigenvector(&cov);
    // Deflate and repeat for the second direction.
    for i in 0..cov.nrows() {
        for j in 0..cov.ncols() {
            cov[[i, j]] -= l1 * v1[i] * v1[j];
        }
    }
    let (_, v2) = top_eigenvector(&cov);
    let x = centered.dot(&v1);
    let y = centered.dot(&v2);
    let mut out = Array2::zeros((z.nrows(), 2));
    out.column_mut(0).assign(&x);
    out.column_mut(1).assign(&y);
    out
}

/// Write ready-to-plot 2-D coordinates for the same rows as
/// [`export_embeddings`]: per branch, embeddings are centered and projected
/// onto their top two principal directions. Same header discipline and
/// branch-major order, with columns `x,y` instead of the raw embedding.
pub fn export_plot_data(
    bundle: &ModelBundle,
    ds: &DGDataset,
    indices: &[usize],
    path: &Path,
) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Contract("export over an empty index set".into()));
    }
    let (z_class, z_domain) = embeddings_for(bundle, ds, indices)?;

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "example_id,branch,class_label,domain_label,x,y")?;
    for (branch, z) in [("g_v", &z_class), ("g_s", &z_domain)] {
        let coords = plane_coordinates(z);
        for (row, &idx) in indices.iter().enumerate() {
            let ex = &ds.examples[idx];
            writeln!(
                out,
                "{},{},{},{},{:.8e},{:.8e}",
                ex.example_id,
                branch,
                ex.class_label,
                ex.domain_label,
                coords[[row, 0]],
                coords[[row, 1]]
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::networks::{init_bundle, Architecture, EncoderSpec};

    fn setup() -> (DGDataset, ModelBundle) {
        let ds = generate_synthetic(&SyntheticSpec {
            num_classes: 2,
            num_domains: 2,
            n_per_cell: 25,
            image_size: 8,
            nuisance_strength: 1.0,
            seed: 1,
        })
        .unwrap();
        let spec = EncoderSpec {
            architecture: Architecture::Mlp,
            embedding_dim: 4,
            widths: vec![8],
            input_shape: (8, 8, 3),
            seed: 0,
            projection_head: false,
        };
        let bundle = init_bundle(&spec, &ds.space, 3).unwrap();
        (ds, bundle)
    }

    #[test]
    fn export_shape_norms_and_reproducibility() {
        let (ds, bundle) = setup();
        let indices: Vec<usize> = (0..100).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.csv");
        export_embeddings(&bundle, &ds, &indices, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 200);
        assert!(lines[0].starts_with("example_id,branch,class_label,domain_label,e0"));

        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 4 + 4);
            let norm: f64 = fields[4..]
                .iter()
                .map(|v| v.parse::<f64>().unwrap().powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "row norm {norm}");
        }

        // Branch-major ordering.
        assert!(lines[1].contains(",g_v,"));
        assert!(lines[101].contains(",g_s,"));

        let second = dir.path().join("again.csv");
        export_embeddings(&bundle, &ds, &indices, &second).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&second).unwrap());
    }

    #[test]
    fn plane_coordinates_capture_rank_two_data_exactly() {
        // Rows vary along e0 (strongly) and e2 (weakly) only; two principal
        // directions must absorb every bit of centered variance.
        let n = 40;
        let mut z = Array2::zeros((n, 5));
        for i in 0..n {
            let a = (i as f64 * 0.37).sin() * 3.0;
            let b = (i as f64 * 0.61).cos();
            z[[i, 0]] = a;
            z[[i, 2]] = b;
        }
        let coords = plane_coordinates(&z);
        let mean = z.mean_axis(Axis(0)).unwrap();
        let total: f64 = z
            .axis_iter(Axis(0))
            .map(|row| (&row - &mean).mapv(|v| v * v).sum())
            .sum();
        let captured: f64 = coords.mapv(|v| v * v).sum();
        assert!(
            (total - captured).abs() < 1e-8 * total.max(1.0),
            "lost variance: total {total}, captured {captured}"
        );
        let var = |col: usize| coords.column(col).mapv(|v| v * v).sum();
        assert!(var(0) >= var(1));
    }

    #[test]
    fn plot_data_file_shape_and_determinism() {
        let (ds, bundle) = setup();
        let indices: Vec<usize> = (0..60).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.csv");
        export_plot_data(&bundle, &ds, &indices, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 120);
        assert_eq!(lines[0], "example_id,branch,class_label,domain_label,x,y");
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 6);
        }

        let again = dir.path().join("again.csv");
        export_plot_data(&bundle, &ds, &indices, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let (ds, bundle) = setup();
        let path = Path::new("/nonexistent-dir/embeddings.csv");
        assert!(matches!(
            export_embeddings(&bundle, &ds, &[0], path),
            Err(Error::Io(_))
        ));
    }
}
