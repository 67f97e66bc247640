//! Fast self-verification suite.
//!
//! Every check pits the production code against an independent route: the
//! double-loop loss oracle, central finite differences, decimal constants
//! frozen from exact arithmetic, or a structural property that must hold
//! bit-exactly. [`run_verification`] is deterministic, needs no files, and
//! finishes in seconds, so it can gate a build.

use ndarray::{array, Array2, Array4};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::core::{DualEmbeddings, LabelKind, LabelSpace};
use crate::losses::{
    ce_dis_with_grad, dscl_comb, dscl_comb_with_grad, dscl_ind, dscl_ind_with_grad, oracle,
    sup_contrastive, sup_contrastive_with_grad,
};
use crate::networks::{
    init_bundle, normalize_rows, Architecture, EncoderSpec, PairVisitor,
};
use crate::losses::cross_entropy_with_grad;
use crate::seeding::rng_for;
use crate::Result;

/// Central-difference step used by all gradient checks.
pub const FD_STEP: f64 = 1e-5;
/// Relative-error bound for gradient checks.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Bound for implementation-vs-oracle loss differences.
pub const ORACLE_TOLERANCE: f64 = 1e-6;

/// One verified property: the worst error measured against its bound.
/// `measured <= tolerance` (with a finite measurement) is a pass; a bound of
/// zero demands exactness.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.measured.is_finite() && self.measured <= self.tolerance
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<28} measured {:>12.3e}  tolerance {:>9.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

/// Outcome of the whole suite.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckReport>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for check in &self.checks {
            out.push_str(&check.to_string());
            out.push('\n');
        }
        let passed = self.checks.iter().filter(|c| c.passed()).count();
        out.push_str(&format!("{passed}/{} checks passed\n", self.checks.len()));
        out
    }
}

const VERIFY_SEED: u64 = 0xC0DD_6000;

fn unit_rows(rng: &mut impl Rng, rows: usize, dim: usize) -> Array2<f64> {
    let raw = Array2::from_shape_fn((rows, dim), |_| rng.gen_range(-1.0..1.0f64));
    normalize_rows(&raw)
}

fn random_labels(rng: &mut impl Rng, n: usize, num_labels: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..num_labels)).collect()
}

fn random_dual(rng: &mut impl Rng, b: usize, dim: usize, k: usize, m: usize) -> DualEmbeddings {
    DualEmbeddings::new(
        unit_rows(rng, b, dim),
        unit_rows(rng, b, dim),
        random_labels(rng, b, k),
        random_labels(rng, b, m),
    )
    .expect("random dual batch is well formed")
}

/// Worst per-entry relative error of `analytic` against a central difference
/// of `loss_at` around `point`. The denominator is floored at 1e-3, so
/// near-zero entries are judged on absolute error; differencing noise sits
/// orders of magnitude below the floor.
pub(crate) fn fd_max_rel_err(
    point: &Array2<f64>,
    analytic: &Array2<f64>,
    mut loss_at: impl FnMut(&Array2<f64>) -> Result<f64>,
) -> Result<f64> {
    assert_eq!(point.dim(), analytic.dim(), "gradient shape mismatch");
    let mut x = point.clone();
    let mut worst = 0.0f64;
    for i in 0..point.nrows() {
        for j in 0..point.ncols() {
            let orig = x[[i, j]];
            x[[i, j]] = orig + FD_STEP;
            let plus = loss_at(&x)?;
            x[[i, j]] = orig - FD_STEP;
            let minus = loss_at(&x)?;
            x[[i, j]] = orig;
            let fd = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[[i, j]];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn check_oracle_scl() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = rng.gen_range(4..=32);
        let dim = rng.gen_range(2..=16);
        let tau = rng.gen_range(0.05..1.0);
        let z = unit_rows(&mut rng, b, dim);
        let num_labels = rng.gen_range(2..=5);
        let labels = random_labels(&mut rng, b, num_labels);
        let fast = sup_contrastive(&z, &labels, tau)?;
        let slow = oracle::scl(&z, &labels, tau);
        worst = worst.max((fast - slow).abs());
    }
    Ok(CheckReport {
        name: "oracle equivalence: scl",
        measured: worst,
        tolerance: ORACLE_TOLERANCE,
    })
}

fn check_oracle_comb() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[2]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = rng.gen_range(4..=32);
        let dim = rng.gen_range(2..=16);
        let tau = rng.gen_range(0.05..1.0);
        let (k, m) = (rng.gen_range(2..=5), rng.gen_range(2..=4));
        let space = LabelSpace::new(k, m)?;
        let d = random_dual(&mut rng, b, dim, k, m);
        let fast = dscl_comb(&d, &space, tau)?;
        let slow = oracle::dscl_comb(&d, &space, tau);
        worst = worst.max((fast - slow).abs());
    }
    Ok(CheckReport {
        name: "oracle equivalence: dscl_comb",
        measured: worst,
        tolerance: ORACLE_TOLERANCE,
    })
}

fn check_oracle_ind() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[3]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let b = rng.gen_range(4..=32);
        let dim = rng.gen_range(2..=16);
        let tau = rng.gen_range(0.05..1.0);
        let (k, m) = (rng.gen_range(2..=5), rng.gen_range(2..=4));
        let d = random_dual(&mut rng, b, dim, k, m);
        let fast = dscl_ind(&d, tau)?;
        let slow = oracle::dscl_ind(&d, tau);
        worst = worst.max((fast - slow).abs());
    }
    Ok(CheckReport {
        name: "oracle equivalence: dscl_ind",
        measured: worst,
        tolerance: ORACLE_TOLERANCE,
    })
}

/// Hand-derived decimal constants, frozen from exact arithmetic.
fn check_closed_forms() -> Result<CheckReport> {
    let mut worst = 0.0f64;

    // Two orthogonal label pairs at tau 1: every anchor sees one positive at
    // similarity 1 and two negatives at 0, so the loss is ln(1 + 2/e).
    const FOUR_POINT: f64 = 0.5514447139320511;
    let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
    worst = worst.max((sup_contrastive(&z, &[0, 0, 1, 1], 1.0)? - FOUR_POINT).abs());

    // The same geometry through the combined mapping: class rows and domain
    // rows form the two orthogonal pairs.
    let toy = DualEmbeddings::new(
        array![[1.0, 0.0], [1.0, 0.0]],
        array![[0.0, 1.0], [0.0, 1.0]],
        vec![0, 0],
        vec![0, 0],
    )?;
    let space = LabelSpace::new(5, 4)?;
    worst = worst.max((dscl_comb(&toy, &space, 1.0)? - FOUR_POINT).abs());

    // Independent mapping on the toy batch: two symmetric one-sided terms.
    const FOUR_POINT_TWICE: f64 = 1.1028894278641022;
    worst = worst.max((dscl_ind(&toy, 1.0)? - FOUR_POINT_TWICE).abs());

    // Uniform logits over 7 classes and 4 domains: ln 7 + ln 4.
    const LN7_PLUS_LN4: f64 = 3.3322045101752039;
    let (ce, _, _) = ce_dis_with_grad(
        &Array2::zeros((3, 7)),
        &Array2::zeros((3, 4)),
        &[0, 3, 6],
        &[0, 1, 3],
    )?;
    worst = worst.max((ce - LN7_PLUS_LN4).abs());

    Ok(CheckReport {
        name: "closed-form fixtures",
        measured: worst,
        tolerance: 1e-9,
    })
}

fn check_grad_scl() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[4]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.gen_range(4..=10);
        let dim = rng.gen_range(2..=6);
        let tau = rng.gen_range(0.1..0.5);
        let z = unit_rows(&mut rng, b, dim);
        let num_labels = rng.gen_range(2..=3);
        let labels = random_labels(&mut rng, b, num_labels);
        let (_, grad) = sup_contrastive_with_grad(&z, &labels, tau)?;
        worst = worst.max(fd_max_rel_err(&z, &grad, |x| {
            sup_contrastive(x, &labels, tau)
        })?);
    }
    Ok(CheckReport {
        name: "gradient check: scl",
        measured: worst,
        tolerance: FD_TOLERANCE,
    })
}

fn check_grad_comb() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[5]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.gen_range(4..=8);
        let dim = rng.gen_range(2..=5);
        let tau = rng.gen_range(0.1..0.5);
        let (k, m) = (rng.gen_range(2..=4), rng.gen_range(2..=3));
        let space = LabelSpace::new(k, m)?;
        let d = random_dual(&mut rng, b, dim, k, m);
        let (_, g_class, g_domain) = dscl_comb_with_grad(&d, &space, tau)?;
        worst = worst.max(fd_max_rel_err(&d.z_class, &g_class, |x| {
            let mut probe = d.clone();
            probe.z_class = x.clone();
            dscl_comb(&probe, &space, tau)
        })?);
        worst = worst.max(fd_max_rel_err(&d.z_domain, &g_domain, |x| {
            let mut probe = d.clone();
            probe.z_domain = x.clone();
            dscl_comb(&probe, &space, tau)
        })?);
    }
    Ok(CheckReport {
        name: "gradient check: dscl_comb",
        measured: worst,
        tolerance: FD_TOLERANCE,
    })
}

fn check_grad_ind() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[6]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.gen_range(4..=8);
        let dim = rng.gen_range(2..=5);
        let tau = rng.gen_range(0.1..0.5);
        let (k, m) = (rng.gen_range(2..=4), rng.gen_range(2..=3));
        let d = random_dual(&mut rng, b, dim, k, m);
        let (_, g_class, g_domain) = dscl_ind_with_grad(&d, tau)?;
        worst = worst.max(fd_max_rel_err(&d.z_class, &g_class, |x| {
            let mut probe = d.clone();
            probe.z_class = x.clone();
            dscl_ind(&probe, tau)
        })?);
        worst = worst.max(fd_max_rel_err(&d.z_domain, &g_domain, |x| {
            let mut probe = d.clone();
            probe.z_domain = x.clone();
            dscl_ind(&probe, tau)
        })?);
    }
    Ok(CheckReport {
        name: "gradient check: dscl_ind",
        measured: worst,
        tolerance: FD_TOLERANCE,
    })
}

fn check_grad_ce() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[7]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.gen_range(2..=8);
        let (k, m) = (rng.gen_range(2..=6), rng.gen_range(2..=4));
        let class_logits = Array2::from_shape_fn((b, k), |_| rng.gen_range(-2.0..2.0f64));
        let domain_logits = Array2::from_shape_fn((b, m), |_| rng.gen_range(-2.0..2.0f64));
        let class_labels = random_labels(&mut rng, b, k);
        let domain_labels = random_labels(&mut rng, b, m);
        let (_, g_class, g_domain) =
            ce_dis_with_grad(&class_logits, &domain_logits, &class_labels, &domain_labels)?;
        worst = worst.max(fd_max_rel_err(&class_logits, &g_class, |x| {
            Ok(ce_dis_with_grad(x, &domain_logits, &class_labels, &domain_labels)?.0)
        })?);
        worst = worst.max(fd_max_rel_err(&domain_logits, &g_domain, |x| {
            Ok(ce_dis_with_grad(&class_logits, x, &class_labels, &domain_labels)?.0)
        })?);
    }
    Ok(CheckReport {
        name: "gradient check: ce_dis",
        measured: worst,
        tolerance: FD_TOLERANCE,
    })
}

fn check_permutation() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[8]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let b = rng.gen_range(4..=12);
        let dim = rng.gen_range(2..=8);
        let tau = rng.gen_range(0.1..1.0);
        let (k, m) = (3, 3);
        let space = LabelSpace::new(k, m)?;
        let d = random_dual(&mut rng, b, dim, k, m);
        let mut perm: Vec<usize> = (0..b).collect();
        perm.shuffle(&mut rng);
        let pick_rows = |z: &Array2<f64>| {
            Array2::from_shape_fn((b, dim), |(i, j)| z[[perm[i], j]])
        };
        let shuffled = DualEmbeddings::new(
            pick_rows(&d.z_class),
            pick_rows(&d.z_domain),
            perm.iter().map(|&i| d.class_labels[i]).collect(),
            perm.iter().map(|&i| d.domain_labels[i]).collect(),
        )?;
        worst = worst.max(
            (sup_contrastive(&d.z_class, &d.class_labels, tau)?
                - sup_contrastive(&shuffled.z_class, &shuffled.class_labels, tau)?)
            .abs(),
        );
        worst = worst
            .max((dscl_comb(&d, &space, tau)? - dscl_comb(&shuffled, &space, tau)?).abs());
        worst = worst.max((dscl_ind(&d, tau)? - dscl_ind(&shuffled, tau)?).abs());
    }
    Ok(CheckReport {
        name: "permutation invariance",
        measured: worst,
        tolerance: 1e-9,
    })
}

fn check_nonnegativity() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[9]);
    let mut most_negative = 0.0f64;
    for _ in 0..100 {
        let b = rng.gen_range(4..=16);
        let dim = rng.gen_range(2..=8);
        let tau = rng.gen_range(0.05..1.0);
        let (k, m) = (rng.gen_range(2..=5), rng.gen_range(2..=4));
        let space = LabelSpace::new(k, m)?;
        let d = random_dual(&mut rng, b, dim, k, m);
        for value in [
            sup_contrastive(&d.z_class, &d.class_labels, tau)?,
            dscl_comb(&d, &space, tau)?,
            dscl_ind(&d, tau)?,
        ] {
            most_negative = most_negative.max(-value);
        }
    }
    Ok(CheckReport {
        name: "nonnegativity",
        measured: most_negative,
        tolerance: 0.0,
    })
}

/// Anchors without positives drop out of the mean; a batch of singletons is
/// exactly zero, and a batch with two contributing anchors among singletons
/// matches the frozen two-anchor value.
fn check_skip_convention() -> Result<CheckReport> {
    let mut worst = 0.0f64;

    let z = array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    worst = worst.max(sup_contrastive(&z, &[0, 1, 2, 3], 0.3)?.abs());

    let d = DualEmbeddings::new(
        array![[1.0, 0.0], [0.0, 1.0]],
        array![[0.0, -1.0], [-1.0, 0.0]],
        vec![0, 1],
        vec![2, 3],
    )?;
    let space = LabelSpace::new(3, 4)?;
    worst = worst.max(dscl_comb(&d, &space, 0.7)?.abs());
    worst = worst.max(dscl_ind(&d, 0.7)?.abs());

    // Labels [0, 0, 1, 2] at tau 1: only the first two anchors contribute,
    // each with lse over sims (1, 0, -1) minus its positive, so the mean is
    // ln(e + 1 + 1/e) - 1.
    const TWO_ANCHOR: f64 = 0.4076059644443803;
    let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];
    worst = worst.max((sup_contrastive(&z, &[0, 0, 1, 2], 1.0)? - TWO_ANCHOR).abs());

    Ok(CheckReport {
        name: "empty-positive skip",
        measured: worst,
        tolerance: 1e-9,
    })
}

/// Class codes fill [0, K) and domain codes fill [K, K+M); the two ranges
/// never collide and decoding round-trips.
fn check_disjoint_encoding() -> Result<CheckReport> {
    let mut violations = 0usize;
    for (k, m) in [(5, 4), (2, 2), (10, 8), (1, 3)] {
        let space = LabelSpace::new(k, m)?;
        for c in 0..k {
            let code = space.combined_label(LabelKind::Class, c)?;
            if code != c || space.decode_combined(code)? != (LabelKind::Class, c) {
                violations += 1;
            }
        }
        for d in 0..m {
            let code = space.combined_label(LabelKind::Domain, d)?;
            if code != k + d || space.decode_combined(code)? != (LabelKind::Domain, d) {
                violations += 1;
            }
        }
        for c in 0..k {
            for d in 0..m {
                if space.combined_label(LabelKind::Class, c)?
                    == space.combined_label(LabelKind::Domain, d)?
                {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckReport {
        name: "disjoint combined encoding",
        measured: violations as f64,
        tolerance: 0.0,
    })
}

/// As the temperature grows, every similarity collapses and each anchor's
/// term tends to ln |A(i)|, the log count of its denominator candidates.
fn check_temperature_limit() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[10]);
    let tau = 1e6;
    let mut worst = 0.0f64;

    let z = unit_rows(&mut rng, 8, 4);
    let scl = sup_contrastive(&z, &[0; 8], tau)?;
    worst = worst.max((scl - (7.0f64).ln()).abs());

    let d = DualEmbeddings::new(
        unit_rows(&mut rng, 8, 4),
        unit_rows(&mut rng, 8, 4),
        vec![0; 8],
        vec![0; 8],
    )?;
    let space = LabelSpace::new(2, 2)?;
    let comb = dscl_comb(&d, &space, tau)?;
    worst = worst.max((comb - (15.0f64).ln()).abs());

    Ok(CheckReport {
        name: "high-temperature limit",
        measured: worst,
        tolerance: 1e-3,
    })
}

/// A class-branch objective must leave the domain branch untouched: after
/// backprop of the class cross-entropy alone, every g_s and f_s gradient is
/// exactly zero while the class branch receives signal.
fn check_branch_separation() -> Result<CheckReport> {
    let spec = EncoderSpec {
        architecture: Architecture::Mlp,
        embedding_dim: 8,
        widths: vec![10],
        input_shape: (4, 4, 3),
        seed: 0,
        projection_head: false,
    };
    let space = LabelSpace::new(3, 2)?;
    let mut bundle = init_bundle(&spec, &space, 11)?;
    let mut rng = rng_for(VERIFY_SEED, &[11]);
    let images = Array4::from_shape_fn((6, 4, 4, 3), |_| rng.gen_range(0.0..1.0f64));
    let labels = random_labels(&mut rng, 6, 3);

    bundle.zero_grad();
    let fwd = bundle.forward_training(&images)?;
    let logits = bundle.class_head.forward(&fwd.z_class);
    let (_, d_logits) = cross_entropy_with_grad(&logits, &labels)?;
    let d_z = bundle.class_head.backward(&fwd.z_class, &d_logits);
    bundle.class_encoder.backward(&fwd.class_cache, &d_z);

    struct Leak {
        domain_branch_max: f64,
        class_branch_max: f64,
    }
    impl PairVisitor for Leak {
        fn visit(&mut self, name: &str, _param: &mut [f64], grad: &[f64]) {
            let peak = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if name.starts_with("g_s.") || name.starts_with("f_s.") {
                self.domain_branch_max = self.domain_branch_max.max(peak);
            } else {
                self.class_branch_max = self.class_branch_max.max(peak);
            }
        }
    }
    let mut leak = Leak {
        domain_branch_max: 0.0,
        class_branch_max: 0.0,
    };
    bundle.visit_pairs(&mut leak);
    let measured = if leak.class_branch_max > 0.0 {
        leak.domain_branch_max
    } else {
        // No signal reached the class branch either: the probe is vacuous,
        // report it as a failure.
        f64::INFINITY
    };
    Ok(CheckReport {
        name: "branch separation",
        measured,
        tolerance: 0.0,
    })
}

fn check_normalize_idempotent() -> Result<CheckReport> {
    let mut rng = rng_for(VERIFY_SEED, &[12]);
    let x = Array2::from_shape_fn((10, 6), |_| rng.gen_range(-3.0..3.0f64));
    let once = normalize_rows(&x);
    let twice = normalize_rows(&once);
    let measured = once
        .iter()
        .zip(twice.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(CheckReport {
        name: "row normalization idempotent",
        measured,
        tolerance: 1e-12,
    })
}

/// Run every check. The order is fixed and the RNG streams are derived from
/// a constant, so two invocations produce identical reports.
pub fn run_verification() -> Result<VerifyReport> {
    let checks = vec![
        check_oracle_scl()?,
        check_oracle_comb()?,
        check_oracle_ind()?,
        check_closed_forms()?,
        check_grad_scl()?,
        check_grad_comb()?,
        check_grad_ind()?,
        check_grad_ce()?,
        check_permutation()?,
        check_nonnegativity()?,
        check_skip_convention()?,
        check_disjoint_encoding()?,
        check_temperature_limit()?,
        check_branch_separation()?,
        check_normalize_idempotent()?,
    ];
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;

    #[test]
    fn pristine_build_passes_every_check() {
        let report = run_verification().unwrap();
        assert_eq!(report.checks.len(), 15);
        for check in &report.checks {
            assert!(
                check.passed(),
                "{} failed: measured {} vs tolerance {}",
                check.name,
                check.measured,
                check.tolerance
            );
        }
        assert!(report.all_passed());
    }

    #[test]
    fn report_renders_one_line_per_check_plus_summary() {
        let report = run_verification().unwrap();
        let rendered = report.render();
        let lines: Vec<&str> = rendered.lines().collect();
        assert_eq!(lines.len(), report.checks.len() + 1);
        for (line, check) in lines.iter().zip(&report.checks) {
            assert!(line.contains(check.name));
            assert!(line.contains("PASS"));
        }
        assert_eq!(*lines.last().unwrap(), "15/15 checks passed");
    }

    #[test]
    fn verification_is_deterministic() {
        let a = run_verification().unwrap();
        let b = run_verification().unwrap();
        for (x, y) in a.checks.iter().zip(&b.checks) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.measured.to_bits(), y.measured.to_bits());
        }
    }

    /// Sign error injected into the log-sum-exp part of the gradient, the
    /// classic hand-derivation slip for this loss family. The finite
    /// difference check must flag it loudly.
    #[test]
    fn sabotaged_denominator_gradient_fails_the_fd_check() {
        let mut rng = rng_for(99, &[0]);
        let z = unit_rows(&mut rng, 6, 3);
        let labels = vec![0, 0, 1, 1, 2, 2];
        let tau = 0.4;

        // Buggy analytic gradient: per anchor the weight on row j should be
        // softmax_ij - pos_ij / |P(i)|; flip the softmax sign.
        let n = z.nrows();
        let logits = z.dot(&z.t()) / tau;
        let mut weights = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let mut max_logit = f64::NEG_INFINITY;
            for j in 0..n {
                if j != i {
                    max_logit = max_logit.max(logits[[i, j]]);
                }
            }
            let sum_exp: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (logits[[i, j]] - max_logit).exp())
                .sum();
            let lse = max_logit + sum_exp.ln();
            let pos: Vec<usize> = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let softmax = (logits[[i, j]] - lse).exp();
                let mut coeff = -softmax;
                if pos.contains(&j) {
                    coeff -= 1.0 / pos.len() as f64;
                }
                weights[[i, j]] = coeff / tau;
            }
        }
        let mut buggy = weights.dot(&z);
        buggy += &weights.t().dot(&z);
        buggy /= n as f64;

        let measured = fd_max_rel_err(&z, &buggy, |x| sup_contrastive(x, &labels, tau)).unwrap();
        assert!(
            measured > 0.5,
            "sabotage went undetected: measured {measured}"
        );
        let report = CheckReport {
            name: "gradient check: scl",
            measured,
            tolerance: FD_TOLERANCE,
        };
        assert!(!report.passed());
    }

    #[test]
    fn non_finite_measurement_never_passes() {
        let report = CheckReport {
            name: "x",
            measured: f64::NAN,
            tolerance: 1.0,
        };
        assert!(!report.passed());
    }
}
