//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `ACCEPTANCE_STRICT=1`, in which case any
//! failing criterion makes the exit status nonzero.

mod common;

use std::time::{Duration, Instant};

use brainscale::classify::*;
use brainscale::connectivity::*;
use brainscale::data::{Label, NetworkId};
use brainscale::embedding::*;
use brainscale::linalg::symmetric_eigen;
use brainscale::recurrence::*;
use brainscale::synth::*;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Outcome of one criterion: every sub-check with its verdict.
#[derive(Default)]
struct Report {
    checks: Vec<(bool, String)>,
    /// Printed with the result but not scored.
    notes: Vec<String>,
}

impl Report {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

fn signal(kind: SignalKind, n: usize, seed: u64) -> Vec<f64> {
    gen_signal(&GeneratorSpec::new(kind, n, seed)).unwrap().values
}

fn sine(n: usize, phase: f64) -> Vec<f64> {
    signal(
        SignalKind::Sine {
            amplitude: 1.0,
            period: 40.0,
            phase,
        },
        n,
        0,
    )
}

fn recurrence_core() -> Report {
    let mut rep = Report::default();
    let mut r = rng(1);
    let (mut sym_ok, mut trans_ok) = (true, true);
    let mut worst_scale = 0.0f64;
    for _ in 0..200 {
        let k = r.random_range(2..=200);
        let m = r.random_range(1..=10);
        // dyadic entries so that translation is exact in floating point
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| f64::from(r.random_range(-4096i32..4096)) / 64.0).collect())
            .collect();
        let shift = f64::from(r.random_range(-256i32..256)) / 16.0;
        let scale = r.random_range(0.01..100.0);
        let states = StateMatrix::from_rows(&rows).unwrap();
        let rm = recurrence_matrix(&states);
        let a = rm.as_matrix();
        sym_ok &= *a == a.transpose() && (0..k).all(|i| a[(i, i)] == 0.0);
        let moved: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|v| v + shift).collect()).collect();
        trans_ok &= recurrence_matrix(&StateMatrix::from_rows(&moved).unwrap()) == rm;
        let scaled: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|v| v * scale).collect()).collect();
        let b = recurrence_matrix(&StateMatrix::from_rows(&scaled).unwrap());
        for (x, y) in a.iter().zip(b.as_matrix().iter()) {
            if *y > 0.0 {
                worst_scale = worst_scale.max((x * scale - y).abs() / y);
            }
        }
    }
    rep.check(sym_ok, "200 matrices exactly symmetric with zero diagonal");
    rep.check(trans_ok, "translation leaves every distance bit-identical");
    rep.check(worst_scale <= 1e-12, format!("scaling max relative error {worst_scale:.2e} <= 1e-12"));
    rep
}

fn embedding_checks() -> Report {
    let mut rep = Report::default();
    let mut oracle_err = 0.0f64;
    let mut compare = |values: &[f64], curve: &CaoCurve, tau: usize, theiler: usize| {
        let (e1, e2) = common::brute_cao(values, tau, curve.d_max(), theiler);
        oracle_err = oracle_err.max(max_rel_diff(&curve.e1, &e1)).max(max_rel_diff(&curve.e2, &e2));
    };

    let s = sine(400, 0.0);
    let choice = choose_embedding(&s, TauMode::Auto, 20, 0.05).unwrap();
    let tau = choice.params.tau;
    compare(&s, &choice.curve, tau, default_theiler(tau));
    rep.check(
        choice.params.m == 2,
        format!("sine p=40 N=400: tau={tau} (1/e rule), chosen_m={} (want 2)", choice.params.m),
    );
    let fixed = choose_embedding(&s, TauMode::Fixed(10), 20, 0.05).unwrap();
    rep.note(format!("sine at tau=10 gives chosen_m={}", fixed.params.m));

    let noise = signal(SignalKind::GaussianNoise { sd: 1.0 }, 2000, 3);
    let tau = select_delay(&noise, default_max_lag(noise.len())).unwrap().tau;
    let curve = cao_curves(&noise, tau, 9, default_theiler(tau)).unwrap();
    compare(&noise, &curve, tau, default_theiler(tau));
    let e2_ok = curve.e2[..8].iter().all(|v| (0.9..=1.1).contains(v));
    let (lo, hi) = curve.e2[..8].iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    rep.check(e2_ok, format!("noise N=2000: E2(1..8) in [{lo:.3}, {hi:.3}] within [0.9, 1.1]"));

    let lorenz = signal(SignalKind::LorenzX { dt: 0.01 }, 5000, 0);
    let tau = select_delay(&lorenz, default_max_lag(lorenz.len())).unwrap().tau;
    let curve = cao_curves(&lorenz, tau, 6, default_theiler(tau)).unwrap();
    compare(&lorenz, &curve, tau, default_theiler(tau));
    let m = choose_dimension(&curve.e1, 0.05).m;
    rep.check((3..=4).contains(&m), format!("lorenz-x N=5000: tau={tau}, chosen_m={m} in [3, 4]"));

    rep.check(oracle_err <= 1e-9, format!("E1/E2 vs brute-force oracle max error {oracle_err:.2e} <= 1e-9"));
    rep
}

fn rqa_checks() -> Report {
    let mut rep = Report::default();
    let mut r = rng(3);
    let mut exact = true;
    for _ in 0..100 {
        let k = r.random_range(2..=50);
        let density = r.random_range(0.05..0.95);
        let grid: Vec<Vec<bool>> = (0..k).map(|_| (0..k).map(|_| r.random_bool(density)).collect()).collect();
        let br = BinaryRecurrence::from_bits(k, grid.iter().flatten().copied().collect()).unwrap();
        let f = rqa_measures(&br, 2, 2).unwrap();
        let diag = common::brute_diagonal_runs(&grid);
        let vert = common::brute_vertical_runs(&grid);
        if diag.is_empty() {
            exact &= f.no_recurrences;
        } else {
            exact &= f.det == common::determinism_from_runs(&diag, 2) && f.lam == common::determinism_from_runs(&vert, 2);
        }
    }
    rep.check(exact, "DET/LAM equal brute-force run enumeration on 100 random matrices (K <= 50)");

    let params = RqaParams::default();
    let mut worst = f64::INFINITY;
    let mut rr_ok = true;
    for seed in 0..100u64 {
        let s = sine(400, seed as f64 * 0.0628);
        let n = signal(SignalKind::GaussianNoise { sd: 1.0 }, 400, seed);
        let det = |values: &[f64]| {
            let tau = select_delay(values, default_max_lag(values.len())).unwrap().tau;
            series_rqa(values, EmbeddingParams::new(2, tau).unwrap(), None, params).unwrap()
        };
        let (a, b) = (det(&s), det(&n));
        rr_ok &= (a.features.rr - 0.1).abs() < 0.01 && (b.features.rr - 0.1).abs() < 0.01;
        worst = worst.min(a.features.det - b.features.det);
    }
    rep.check(rr_ok, "both series thresholded to RR = 0.1");
    rep.check(worst >= 0.2, format!("sine DET - noise DET >= 0.2 over 100 seeds (min {worst:.3})"));
    rep
}

fn partial_correlation_checks() -> Report {
    let mut rep = Report::default();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for n in 3..=10 {
        let mix = DMatrix::from_fn(n, n, |_, _| normal(&mut r) * 0.5) + DMatrix::identity(n, n);
        let x = DMatrix::from_fn(10_000, n, |_, _| normal(&mut r)) * mix;
        let cov = sample_covariance(&x).unwrap();
        let rho = partial_correlation(&precision_matrix(&cov, 0.0).unwrap()).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((rho[(i, j)] - common::residual_partial_correlation(&x, i, j)).abs());
            }
        }
    }
    rep.check(worst <= 1e-6, format!("precision route vs residual oracle, n = 3..10: max error {worst:.2e} <= 1e-6"));

    let mut x = DMatrix::zeros(50_000, 3);
    for t in 0..50_000 {
        let a = normal(&mut r);
        let b = 0.8 * a + 0.6 * normal(&mut r);
        let c = 0.8 * b + 0.6 * normal(&mut r);
        x.set_row(t, &nalgebra::RowDVector::from_row_slice(&[a, b, c]));
    }
    let rho = partial_correlation(&precision_matrix(&sample_covariance(&x).unwrap(), 0.0).unwrap()).unwrap();
    let marginal = common::marginal_correlation(&x, 0, 2);
    rep.check(
        rho[(0, 2)].abs() < 0.02 && marginal > 0.3,
        format!("chain X->Y->Z: |rho_XZ| = {:.4} < 0.02, marginal = {marginal:.3} > 0.3", rho[(0, 2)].abs()),
    );
    rep
}

fn eigen_checks() -> Report {
    let mut rep = Report::default();
    let mut r = rng(5);
    let (mut recon, mut trace_err_ok, mut sign_ok) = (0.0f64, true, true);
    for _ in 0..100 {
        let n = r.random_range(1..=34);
        let g = DMatrix::from_fn(n, n, |_, _| normal(&mut r));
        let a = (&g + g.transpose()) * 0.5;
        let eig = symmetric_eigen(&a).unwrap();
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(eig.values.clone()));
        let resid = &a - &eig.vectors * lambda * eig.vectors.transpose();
        recon = recon.max(resid.amax());
        trace_err_ok &= (eig.values.iter().sum::<f64>() - a.trace()).abs() <= 1e-8 * n as f64;
        let (f1, f2) = (eigen_features_of(&a).unwrap(), eigen_features_of(&a).unwrap());
        let top = f1.leading_vector.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        sign_ok &= f1.leading_vector == f2.leading_vector && top > 0.0;
    }
    rep.check(recon <= 1e-8, format!("max reconstruction residual {recon:.2e} <= 1e-8 (100 matrices up to 34x34)"));
    rep.check(trace_err_ok, "sum of eigenvalues equals trace within 1e-8 n");
    rep.check(sign_ok, "leading vectors identical across runs with positive largest entry");
    rep
}

fn cv(x: &[Vec<f64>], y: &[Label], seed: u64) -> MetricsReport {
    let params = CvParams {
        ensemble: EnsembleParams {
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    cross_validate(x, y, params).unwrap()
}

fn classifier_checks() -> Report {
    let mut rep = Report::default();
    let y: Vec<Label> = (0..100).map(|i| if i < 50 { Label::Class0 } else { Label::Class1 }).collect();
    let noise = |seed: u64| -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..100).map(|_| (0..10).map(|_| normal(&mut r)).collect()).collect()
    };

    let mut leaked = noise(10);
    for (row, l) in leaked.iter_mut().zip(&y) {
        row.push(f64::from(l.as_u8()));
    }
    let acc = cv(&leaked, &y, 42).accuracy;
    rep.check(acc == 1.0, format!("leakage feature accuracy {acc:.3} = 1.0"));

    let mut within = 0;
    for rep_seed in 0..20u64 {
        let mut shuffled = y.clone();
        shuffled.shuffle(&mut rng(1000 + rep_seed));
        let a = cv(&noise(rep_seed), &shuffled, rep_seed).accuracy;
        within += usize::from((0.35..=0.65).contains(&a));
    }
    rep.check(within >= 19, format!("permutation null: {within}/20 accuracies in [0.35, 0.65]"));

    let mut r = rng(6);
    let mut split_ok = true;
    for _ in 0..2000 {
        let n = r.random_range(2..=20);
        let d = r.random_range(1..=4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| f64::from(r.random_range(-5i32..5))).collect()).collect();
        let yy: Vec<Label> = (0..n).map(|_| if r.random_bool(0.5) { Label::Class1 } else { Label::Class0 }).collect();
        let min_leaf = r.random_range(1..=3);
        let idx: Vec<usize> = (0..n).collect();
        let got = best_split(&x, &yy, &idx, min_leaf).map(|s| (s.feature, s.threshold, s.gain));
        let want = common::exhaustive_split(&x, &yy, min_leaf);
        split_ok &= match (got, want) {
            (Some((f, t, g)), Some((f2, t2, g2))) => f == f2 && t == t2 && (g - g2).abs() < 1e-12,
            (None, None) => true,
            _ => false,
        };
    }
    rep.check(split_ok, "best split equals exhaustive enumeration on 2000 fixtures of <= 20 samples");

    let x = noise(11);
    let a = format!("{:?}", cv(&x, &y, 9));
    let b = format!("{:?}", cv(&x, &y, 9));
    rep.check(a.as_bytes() == b.as_bytes(), "same seed gives byte-identical reports");
    rep
}

fn end_to_end() -> Report {
    let mut rep = Report::default();
    let spec = TwoClassSpec::default();
    let cohort = gen_two_class_cohort(&spec).unwrap();
    let subjects = cohort.dataset.subjects();
    let graphs: Vec<BrainGraph> = subjects
        .iter()
        .map(|s| build_graph(s, NetworkId::DefaultMode, 0.1).unwrap())
        .collect();
    let x: Vec<Vec<f64>> = graphs.iter().map(|g| eigen_features(g).unwrap().leading_vector).collect();
    let y = cohort.dataset.labels();
    let report = cv(&x, &y, 42);
    rep.check(
        report.accuracy >= 0.9,
        format!("50+50 DMN cohort, leading eigenvector, 10-fold, B=400: accuracy {:.3} >= 0.90", report.accuracy),
    );

    let rankings: Vec<DegreeRanking> = graphs.iter().map(|g| degree_and_rank(g, 0.2, false).unwrap()).collect();
    let table = top_roi_frequency(&rankings, &y, 10, &graphs[0].roi_labels).unwrap();
    let (f0, f1) = (table.fraction(Label::Class0, cohort.hub), table.fraction(Label::Class1, cohort.hub));
    for class in [Label::Class0, Label::Class1] {
        let top: Vec<String> = table
            .rows
            .iter()
            .filter(|r| r.class == class)
            .take(3)
            .map(|r| format!("{} {:.2}", r.roi_label, r.fraction))
            .collect();
        rep.note(format!("top-10 frequency, class {class}: {}", top.join(", ")));
    }
    rep.check(
        (f0 - f1).abs() >= 0.5,
        format!("hub ROI {} top-10 fraction {f0:.2} vs {f1:.2}, difference >= 0.5", cohort.hub + 1),
    );
    rep
}

fn rendering_checks() -> Report {
    let mut rep = Report::default();
    let x = signal(SignalKind::LorenzX { dt: 0.01 }, 180, 2);
    let states = embed_series(&x, EmbeddingParams::new(3, 10).unwrap()).unwrap();
    let rm = recurrence_matrix(&states);
    rep.check(rm.k() == 160, format!("recurrence matrix is {0}x{0}", rm.k()));
    let big = resize_bilinear(rm.as_matrix(), 224).unwrap();
    rep.check(big == big.transpose(), "224x224 resize exactly symmetric");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rp.pgm");
    render_grayscale(&big, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let header = b"P5\n224 224\n255\n";
    rep.check(
        bytes.starts_with(header) && bytes.len() == header.len() + 224 * 224,
        "P5 PGM with header 224 224 255 and 224*224 pixel bytes",
    );

    let constant = resize_bilinear(&DMatrix::from_element(160, 160, 3.7), 224).unwrap();
    render_grayscale(&constant, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    rep.check(bytes[header.len()..].iter().all(|&p| p == 0), "constant input renders all-zero");
    rep
}

fn main() {
    type Criterion = (&'static str, fn() -> Report, Option<Duration>);
    let criteria: [Criterion; 8] = [
        ("recurrence core", recurrence_core, Some(Duration::from_secs(10))),
        ("embedding", embedding_checks, Some(Duration::from_secs(60))),
        ("RQA oracle equivalence", rqa_checks, None),
        ("partial correlation", partial_correlation_checks, None),
        ("eigen features", eigen_checks, None),
        ("classifier", classifier_checks, None),
        ("end-to-end synthetic cohort", end_to_end, Some(Duration::from_secs(300))),
        ("rendering", rendering_checks, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut rep = run();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            rep.check(elapsed < limit, format!("runtime {:.1} s < {} s", elapsed.as_secs_f64(), limit.as_secs()));
        }
        let verdict = if rep.passed() { "PASS" } else { "FAIL" };
        failed += usize::from(!rep.passed());
        println!("{verdict} {}: {name} ({:.1} s)", i + 1, elapsed.as_secs_f64());
        for (ok, what) in &rep.checks {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAILED" });
        }
        for note in &rep.notes {
            println!("    note: {note}");
        }
    }
    println!("acceptance: {}/8 criteria passed", 8 - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
