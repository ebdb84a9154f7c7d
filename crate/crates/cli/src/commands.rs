use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use tailgraph::graphx::{adjacency_json, build_graph_at, emit_dot};
use tailgraph::inference::{
    coverage_study, critical_value, ptc_test_all_pairs, CoverageConfig, CriticalMethod, MassChoice,
    PtcTestOptions, PtcTestReport,
};
use tailgraph::io::{read_stats_table, read_table, write_report_csv, write_table, MatrixDocument, Table};
use tailgraph::project::invert_ipm;
use tailgraph::rvsim::{ar1_matrix, construct, try_sample_noise, NoiseSpec};
use tailgraph::tpdm::{
    default_delta, default_names, estimate_tpdm, marginal_transform_with, Mass, MarginMeta, RadiusMode,
    TailSample, TpdmOptions,
};

use crate::output::{open, write_atomic, write_json, write_text};
use crate::{
    CoverageArgs, EstimationArgs, Failure, GraphArgs, MassArg, ModeArg, NoiseArg, PreprocessArgs,
    PtcTestArgs, SimulateArgs, TpdmArgs, EXIT_DATA,
};

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("tailgraph: seed {s}");
        s
    })
}

fn load_table(path: &Path) -> Result<Table, Failure> {
    read_table(open(path)?).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_csv(path: &Path, names: &[String], data: &DMatrix<f64>) -> Result<(), Failure> {
    write_atomic(path, |w| Ok(write_table(w, names, data)?))
}

fn tpdm_options(a: &EstimationArgs) -> TpdmOptions {
    TpdmOptions {
        q_radial: a.radial_quantile,
        mode: match a.mode {
            ModeArg::Pairwise => RadiusMode::Pairwise,
            ModeArg::Global => RadiusMode::Global,
        },
        mass: match a.mass {
            MassArg::Fixed2 => Mass::Fixed(2.0),
            MassArg::Estimate => Mass::Estimate,
        },
    }
}

fn noise(arg: NoiseArg) -> Result<NoiseSpec, Failure> {
    Ok(match arg {
        NoiseArg::ShiftedPareto => NoiseSpec::centred_pareto()?,
        NoiseArg::Frechet => NoiseSpec::Frechet,
    })
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let coef = match &a.coef {
        Some(path) => load_table(path)?.data,
        None => {
            if !(a.phi > 0.0 && a.phi < 1.0) {
                return Err(Failure::usage(format!("--phi {} must lie in (0, 1)", a.phi)));
            }
            if a.p == 0 {
                return Err(Failure::usage("--p must be at least 1"));
            }
            ar1_matrix(a.phi, a.p)?
        }
    };
    let seed = resolve_seed(a.seed);
    let z = try_sample_noise(coef.ncols(), a.n, noise(a.noise)?, seed)?;
    let x = construct(&coef, &z)?;
    write_csv(&a.output, &default_names(x.ncols()), &x)?;
    info!("wrote {} x {} sample to {}", x.nrows(), x.ncols(), a.output.display());
    Ok(())
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".delta.json");
    PathBuf::from(s)
}

pub fn preprocess(a: &PreprocessArgs) -> Result<(), Failure> {
    let table = load_table(&a.input)?;
    let delta = default_delta()?;
    let sample = marginal_transform_with(&table.data, table.names.clone(), delta)?;
    write_csv(&a.output, sample.names(), sample.data())?;
    let sidecar = a.sidecar.clone().unwrap_or_else(|| sidecar_path(&a.output));
    write_json(
        &sidecar,
        &json!({
            "delta": delta,
            "margin": "shifted-pareto",
            "transform": "1/sqrt(1 - rank/(n+1)) - delta",
            "n": sample.n(),
            "columns": sample.names(),
        }),
    )?;
    info!("delta = {delta}");
    Ok(())
}

fn load_sample(path: &Path) -> Result<TailSample, Failure> {
    let t = load_table(path)?;
    Ok(TailSample::new(t.data, t.names, MarginMeta::Raw)?)
}

pub fn tpdm(a: &TpdmArgs) -> Result<(), Failure> {
    let sample = load_sample(&a.input)?;
    let opts = tpdm_options(&a.estimation);
    let sigma = estimate_tpdm(&sample, &opts)?;
    let inverse = invert_ipm(&sigma);
    let mut doc = MatrixDocument::new(&sigma, sample.names())
        .with("options", opts)?
        .with("n", sample.n())?;
    doc = match &inverse {
        Ok(q) => doc.with("inverse", q.entries().row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())?,
        Err(e) => doc.with("inverse", serde_json::Value::Null)?.with("inverse_error", e.to_string())?,
    };
    write_json(&a.output, &doc)?;
    if let Some(path) = &a.csv {
        write_csv(path, sample.names(), sigma.entries())?;
    }
    let q = inverse?;
    if let Some(path) = &a.inverse_csv {
        write_csv(path, sample.names(), q.entries())?;
    }
    Ok(())
}

fn report_from_table(path: &Path, method: CriticalMethod, alpha: f64) -> Result<PtcTestReport, Failure> {
    let CriticalMethod::Fixed(cv) = method else {
        return Err(Failure::usage(
            "a table of statistics carries no degrees of freedom; use --critical fixed:<c>",
        ));
    };
    let table = read_stats_table(open(path)?).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(PtcTestReport::from_t_matrix(table.names, &table.data, cv, method, alpha)?)
}

fn write_graph(
    report: &PtcTestReport,
    cv: f64,
    dot: Option<&Path>,
    adjacency: Option<&Path>,
    width_scale: f64,
    dot_to_stdout: bool,
) -> Result<(), Failure> {
    let graph = build_graph_at(report, cv);
    let text = emit_dot(&graph, width_scale)?;
    match dot {
        Some(path) => write_text(path, &text)?,
        None if dot_to_stdout => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|()| out.flush())
                .map_err(|e| Failure { code: EXIT_DATA, message: format!("stdout: {e}") })?;
        }
        None => {}
    }
    if let Some(path) = adjacency {
        write_text(path, &adjacency_json(&graph)?)?;
    }
    info!("{} edges at critical value {cv}", graph.edges.len());
    Ok(())
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    #[serde(flatten)]
    report: &'a PtcTestReport,
    options: Option<PtcTestOptions>,
}

pub fn ptc_test(a: &PtcTestArgs) -> Result<(), Failure> {
    let t = &a.testing;
    let (report, options) = match (&a.stats, &a.input) {
        (Some(stats), _) => (report_from_table(stats, t.critical, t.alpha)?, None),
        (None, Some(input)) => {
            let sample = load_sample(input)?;
            let opts = PtcTestOptions {
                tpdm: tpdm_options(&a.estimation),
                pred_quantile: t.pred_quantile,
                res_quantile: t.res_quantile,
                alpha: t.alpha,
                critical: t.critical,
                mass: MassChoice::Trace,
            };
            (ptc_test_all_pairs(&sample, &opts)?, Some(opts))
        }
        (None, None) => return Err(Failure::usage("either --input or --stats is required")),
    };
    for (i, j, reason) in report.failures() {
        log::warn!("pair ({}, {}) not tested: {reason}", report.names[i], report.names[j]);
    }
    write_json(&a.report, &ReportDocument { report: &report, options })?;
    if let Some(path) = &a.report_csv {
        write_atomic(path, |w| Ok(write_report_csv(w, &report)?))?;
    }
    write_graph(&report, report.critical_value, a.dot.as_deref(), None, a.width_scale, false)
}

pub fn coverage(a: &CoverageArgs) -> Result<(), Failure> {
    if a.reps == 0 {
        return Err(Failure::usage("--reps must be at least 1"));
    }
    if !(a.phi > 0.0 && a.phi < 1.0) {
        return Err(Failure::usage(format!("--phi {} must lie in (0, 1)", a.phi)));
    }
    let seed = resolve_seed(a.seed);
    let tpdm = tpdm_options(&EstimationArgs {
        radial_quantile: a.radial_quantile,
        mode: a.mode,
        mass: a.mass,
    });
    let cfg = CoverageConfig {
        n: a.n,
        phi: a.phi,
        reps: a.reps,
        level: a.level,
        res_quantile: a.res_quantile,
        tpdm,
        ..CoverageConfig::standard(seed)?
    };
    let summary = coverage_study(&cfg)?;
    info!("coverage {:.4} over {} replications", summary.coverage, summary.replications.len());
    write_json(&a.output, &json!({ "seed": seed, "config": cfg, "summary": summary }))
}

fn load_report(path: &Path) -> Result<PtcTestReport, Failure> {
    serde_json::from_reader(std::io::BufReader::new(open(path)?)).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn graph(a: &GraphArgs) -> Result<(), Failure> {
    let report = match (&a.stats, &a.report) {
        (Some(stats), _) => {
            let method = a.critical.ok_or_else(|| Failure::usage("--stats requires --critical fixed:<c>"))?;
            report_from_table(stats, method, a.alpha)?
        }
        (None, Some(path)) => load_report(path)?,
        (None, None) => return Err(Failure::usage("either --report or --stats is required")),
    };
    let cv = match a.critical {
        None => report.critical_value,
        Some(CriticalMethod::Fixed(c)) => c,
        Some(method) => {
            let df = report.df.ok_or_else(|| {
                Failure::usage("the report has no degrees of freedom; use --critical fixed:<c>")
            })?;
            critical_value(method, a.alpha, report.outcomes.len(), df)?
        }
    };
    write_graph(&report, cv, a.dot.as_deref(), a.json.as_deref(), a.width_scale, true)
}
