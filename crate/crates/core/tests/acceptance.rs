//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and seeds are fixed below.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use tailgraph::graphx::build_graph;
use tailgraph::inference::{
    coverage_study, ptc_test_all_pairs, CoverageConfig, CoverageSummary, CriticalMethod, MassChoice,
    PtcTestOptions, PtcTestReport,
};
use tailgraph::io::read_stats_table;
use tailgraph::project::{invert_ipm, project_onto_span, ptc, ptc_from_inverse, solve_b, Partition};
use tailgraph::rvsim::{ar1_matrix, construct, mix_seed, sample_noise, theoretical_ipm, theoretical_tpdm, NoiseSpec};
use tailgraph::tpdm::{estimate_tpdm, solve_delta, MarginMeta, Mass, RadiusMode, TpdmOptions};
use tailgraph::xlinear::softplus_inv;
use tailgraph::{IpMatrix, TailSample};

const ROOT_SEED: u64 = 20_261_014;

const TOL_INVERSE: f64 = 1e-10;
const TOL_WEIGHTS: f64 = 1e-10;
const TOL_DUAL_PATH: f64 = 1e-10;
const TOL_ORTHOGONAL: f64 = 1e-10;
const TOL_RECONSTRUCT: f64 = 1e-12;
const TOL_LINEAR: f64 = 1e-10;
const TOL_LSQ_ORACLE: f64 = 1e-9;
const COVERAGE_BAND: (f64, f64) = (0.92, 0.98);
const TOL_ESTIMATOR_GAP: f64 = 0.05;
const TOL_TPDM_MEDIAN: f64 = 0.15;
const DELTA_REFERENCE: f64 = 0.9352;
const TOL_DELTA: f64 = 5e-4;
const TOL_DELTA_MC: f64 = 3e-3;
const MAX_SIZE: f64 = 0.10;
const MIN_POWER: f64 = 0.80;
const KS_ALPHA: f64 = 0.01;

const PHI: f64 = 0.7;
const P: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn c1_inverse_ipm() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut corner = Vec::new();
    for phi in [0.3, 0.5, 0.7, 0.9] {
        let g = theoretical_ipm(&ar1_matrix(phi, P).unwrap()).unwrap();
        let q = invert_ipm(&g).unwrap();
        let s = 1.0 + phi * phi;
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            1.0, -phi, 0.0, 0.0,
            -phi, s, -phi, 0.0,
            0.0, -phi, s, -phi,
            0.0, 0.0, -phi, 1.0,
        ]);
        worst = worst.max(max_abs(&(q.entries() - expected)));
        corner.push(format!("{:.4}", q.get(0, 0)));
    }
    outcome(
        worst < TOL_INVERSE,
        format!(
            "max entry error {worst:.3e} (tol {TOL_INVERSE:e}); computed Q11 = [{}], expected 1",
            corner.join(", ")
        ),
    )
}

fn c2_optimal_weights() -> Outcome {
    let g = theoretical_ipm(&ar1_matrix(PHI, P).unwrap()).unwrap();
    let b = solve_b(&g, &Partition::single(P, 3).unwrap()).unwrap();
    let expected = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, PHI]);
    let err = max_abs(&(b - expected));
    outcome(err < TOL_WEIGHTS, format!("max weight error {err:.3e}"))
}

fn c3_dual_path() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ROOT_SEED, 3));
    let mut worst: f64 = 0.0;
    for s in 0..1000 {
        let p = 3 + s % 6;
        let b = uniform_matrix(&mut rng, p, p + 2);
        let m = &b * b.transpose() + DMatrix::identity(p, p) * 0.1;
        let g = IpMatrix::theoretical(m).unwrap();
        let q = invert_ipm(&g).unwrap();
        for i in 0..p {
            for j in i + 1..p {
                let d = (ptc(&g, i, j).unwrap() - ptc_from_inverse(&q, i, j).unwrap()).abs();
                worst = worst.max(d);
            }
        }
    }
    outcome(worst < TOL_DUAL_PATH, format!("1000 matrices, max gap {worst:.3e}"))
}

fn c4_projection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ROOT_SEED, 4));
    let (mut orth, mut recon, mut lin, mut lsq) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for s in 0..500 {
        let k = 1 + s % 4;
        let q = k + 1 + (s / 4) % 5;
        let a2 = uniform_matrix(&mut rng, k, q);
        let x = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
        let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));

        let px = project_onto_span(&x, &a2).unwrap();
        orth = orth.max((&a2 * &px.residual).amax());

        let inside = a2.transpose() * DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let pin = project_onto_span(&inside, &a2).unwrap();
        recon = recon.max((&pin.projection - &inside).amax());

        let py = project_onto_span(&y, &a2).unwrap();
        let pc = project_onto_span(&(&x * alpha + &y * beta), &a2).unwrap();
        lin = lin.max((&pc.projection - (&px.projection * alpha + &py.projection * beta)).amax());

        // Independent least squares: minimise |A2^T w - x| by SVD.
        let w = a2.transpose().svd(true, true).solve(&x, 1e-14).unwrap();
        lsq = lsq.max((a2.transpose() * w - &px.projection).amax());
    }
    let pass = orth < TOL_ORTHOGONAL && recon < TOL_RECONSTRUCT && lin < TOL_LINEAR && lsq < TOL_LSQ_ORACLE;
    outcome(
        pass,
        format!("orthogonality {orth:.2e}, reconstruction {recon:.2e}, linearity {lin:.2e}, lsq oracle {lsq:.2e}"),
    )
}

fn c5_coverage(study: &CoverageSummary) -> Outcome {
    let c = study.coverage;
    outcome(
        c >= COVERAGE_BAND.0 && c <= COVERAGE_BAND.1,
        format!(
            "coverage {c:.3} over {} replications ({} failed), band [{}, {}]",
            study.replications.len(),
            study.failed,
            COVERAGE_BAND.0,
            COVERAGE_BAND.1
        ),
    )
}

fn c6_estimator_gap(study: &CoverageSummary) -> Outcome {
    let n = study.replications.len() as f64;
    let gap = study.replications.iter().map(|r| (r.partition[1] - r.residual).abs()).sum::<f64>() / n;
    outcome(gap < TOL_ESTIMATOR_GAP, format!("mean |partition - residual| {gap:.4}"))
}

fn simulate_ar1(n: usize, seed: u64) -> TailSample {
    let a = ar1_matrix(PHI, P).unwrap();
    let z = sample_noise(P, n, NoiseSpec::centred_pareto().unwrap(), seed);
    TailSample::from_matrix(construct(&a, &z).unwrap(), MarginMeta::Raw).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn c7_tpdm_consistency() -> Outcome {
    let truth = theoretical_tpdm(&ar1_matrix(PHI, P).unwrap()).unwrap();
    let opts = TpdmOptions {
        q_radial: 0.98,
        mode: RadiusMode::Global,
        mass: Mass::Fixed(truth.trace()),
    };
    let med = |n: usize, stream: u64| {
        let errs: Vec<f64> = (0..100u64)
            .into_par_iter()
            .map(|s| {
                let sample = simulate_ar1(n, mix_seed(mix_seed(ROOT_SEED, stream), s));
                let est = estimate_tpdm(&sample, &opts).unwrap();
                max_abs(&(est.entries() - truth.entries()))
            })
            .collect();
        median(errs)
    };
    let large = med(100_000, 71);
    let small = med(10_000, 72);
    outcome(
        large < TOL_TPDM_MEDIAN && large < small,
        format!("median max error {large:.4} at n=1e5, {small:.4} at n=1e4 (mass = trace {:.6})", truth.trace()),
    )
}

fn c8_delta() -> Outcome {
    let delta = solve_delta().unwrap();
    // Stratified Monte Carlo: one uniform per stratum of width 1/n.
    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ROOT_SEED, 8));
    let mut sum = 0.0;
    for i in 0..n {
        let v: f64 = rng.sample(rand::distr::Open01);
        let u = (i as f64 + v) / n as f64;
        sum += softplus_inv(1.0 / (1.0 - u).sqrt() - delta).unwrap();
    }
    let mean = sum / n as f64;
    let pass = (delta - DELTA_REFERENCE).abs() < TOL_DELTA && mean.abs() < TOL_DELTA_MC;
    outcome(pass, format!("delta {delta:.10}, Monte Carlo mean {mean:.2e} (n = 1e6)"))
}

fn fixture(name: &str, cv: f64) -> BTreeSet<(usize, usize)> {
    let path = format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"));
    let table = read_stats_table(std::fs::File::open(path).unwrap()).unwrap();
    let report =
        PtcTestReport::from_t_matrix(table.names, &table.data, cv, CriticalMethod::Fixed(cv), 0.05).unwrap();
    build_graph(&report).edge_set().into_iter().map(|(i, j)| (i + 1, j + 1)).collect()
}

fn c9_fixtures() -> Outcome {
    let no2 = fixture("no2_stats.csv", 4.797);
    let danube = fixture("danube_stats.csv", 5.847);
    let no2_expected: BTreeSet<_> = [(1, 5), (2, 3), (2, 4), (4, 5)].into();
    let danube_expected: BTreeSet<_> =
        [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (8, 9), (9, 10)].into();
    outcome(
        no2 == no2_expected && danube == danube_expected,
        format!("5-station graph {no2:?}, 10-station graph {danube:?}"),
    )
}

fn c10_size_power() -> Outcome {
    let opts = PtcTestOptions {
        tpdm: TpdmOptions::global(),
        pred_quantile: None,
        res_quantile: 0.98,
        alpha: 0.05,
        critical: CriticalMethod::Bonferroni,
        mass: MassChoice::Trace,
    };
    let seeds = 200u64;
    let rejections: Vec<Vec<(usize, usize, bool)>> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let sample = simulate_ar1(10_000, mix_seed(mix_seed(ROOT_SEED, 10), s));
            let report = ptc_test_all_pairs(&sample, &opts).unwrap();
            report.records().map(|r| (r.i, r.j, r.reject)).collect()
        })
        .collect();
    let mut size: f64 = 0.0;
    let mut power: f64 = 1.0;
    for i in 0..P {
        for j in i + 1..P {
            let hits = rejections
                .iter()
                .filter(|rs| rs.iter().any(|&(a, b, rej)| a == i && b == j && rej))
                .count();
            let rate = hits as f64 / seeds as f64;
            if j - i >= 2 {
                size = size.max(rate);
            } else {
                power = power.min(rate);
            }
        }
    }
    outcome(
        size <= MAX_SIZE && power >= MIN_POWER,
        format!("worst lag>=2 rejection rate {size:.3}, worst adjacent rejection rate {power:.3} over {seeds} seeds"),
    )
}

/// Asymptotic Kolmogorov tail probability with the Stephens small-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j + 1) * (-2.0 * jf * jf * x * x).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

fn c11_null_distribution(study: &CoverageSummary) -> Outcome {
    let mut u: Vec<f64> = study
        .replications
        .iter()
        .map(|r| StudentsT::new(0.0, 1.0, (r.k - 1) as f64).unwrap().cdf(r.t_stat))
        .collect();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n as f64 - v).max(v - i as f64 / n as f64))
        .fold(0.0, f64::max);
    let p = ks_p_value(d, n);
    let mean_t = study.replications.iter().map(|r| r.t_stat).sum::<f64>() / n as f64;
    outcome(
        p > KS_ALPHA,
        format!("KS D = {d:.4}, p = {p:.4} over {n} statistics (mean t {mean_t:.3})"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {} [{secs:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    };
    report(1, "analytic inverse", &c1_inverse_ipm);
    report(2, "optimal weights", &c2_optimal_weights);
    report(3, "dual-path identity", &c3_dual_path);
    report(4, "projection properties", &c4_projection);

    let start = Instant::now();
    let study = coverage_study(&CoverageConfig::standard(mix_seed(ROOT_SEED, 5)).unwrap()).unwrap();
    println!("coverage study: {} replications in {:.1} s", study.replications.len(), start.elapsed().as_secs_f64());
    report(5, "interval coverage", &|| c5_coverage(&study));
    report(6, "estimator comparison", &|| c6_estimator_gap(&study));
    report(7, "tpdm consistency", &c7_tpdm_consistency);
    report(8, "shift reproduction", &c8_delta);
    report(9, "published-table graphs", &c9_fixtures);
    report(10, "size and power", &c10_size_power);
    report(11, "null t distribution", &|| c11_null_distribution(&study));

    if failed > 0 {
        println!("{failed} of 11 criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
