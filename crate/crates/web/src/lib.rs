//! Browser bindings. Each exported function takes plain numbers or text and
//! returns a JSON string; the page in `www/` renders the result.

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use tailgraph::graphx::{build_graph_at, emit_dot, ExtremalGraph};
use tailgraph::inference::{ptc_test_all_pairs, CriticalMethod, MassChoice, PtcTestOptions, PtcTestReport};
use tailgraph::io::read_stats_table;
use tailgraph::project::{invert_ipm, ptc_matrix, solve_b, Partition};
use tailgraph::rvsim::{ar1_matrix, construct, theoretical_ipm, try_sample_noise, NoiseSpec};
use tailgraph::tpdm::{default_names, MarginMeta, TpdmOptions};
use tailgraph::TailSample;

const MAX_DIM: usize = 12;
const MAX_ROWS: usize = 200_000;

type Outcome = Result<String, String>;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_json(v: &impl Serialize) -> Outcome {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct GraphView {
    nodes: Vec<String>,
    /// `[i, j, t]` with 0-based indices and the signed statistic.
    edges: Vec<(usize, usize, f64)>,
    critical_value: f64,
    untested: usize,
    dot: String,
}

fn graph_view(g: &ExtremalGraph, width_scale: f64) -> Result<GraphView, String> {
    Ok(GraphView {
        nodes: g.nodes.clone(),
        edges: g.edges.iter().map(|e| (e.i, e.j, e.t_stat)).collect(),
        critical_value: g.critical_value,
        untested: g.failed.len(),
        dot: emit_dot(g, width_scale).map_err(err)?,
    })
}

#[derive(Serialize)]
struct Explorer {
    names: Vec<String>,
    gamma: Vec<Vec<f64>>,
    precision: Vec<Vec<f64>>,
    ptc: Vec<Vec<Option<f64>>>,
    /// Weights predicting the last variable from the others.
    weights: Vec<f64>,
}

/// Inner product matrix, its inverse, partial tail correlations and prediction
/// weights for the AR(1) coefficient matrix.
pub fn explore_ar1(phi: f64, p: usize) -> Outcome {
    if !(2..=MAX_DIM).contains(&p) {
        return Err(format!("dimension must be between 2 and {MAX_DIM}"));
    }
    let a = ar1_matrix(phi, p).map_err(err)?;
    let gamma = theoretical_ipm(&a).map_err(err)?;
    let q = invert_ipm(&gamma).map_err(err)?;
    let names = default_names(p);
    let ptc = ptc_matrix(&gamma, &names).map_err(err)?;
    let b = solve_b(&gamma, &Partition::single(p, p - 1).map_err(err)?).map_err(err)?;
    to_json(&Explorer {
        gamma: rows(gamma.entries()),
        precision: rows(q.entries()),
        ptc: ptc.values,
        weights: b.iter().copied().collect(),
        names,
    })
}

#[derive(Serialize)]
struct Simulation {
    n: usize,
    seed: u64,
    critical_value: f64,
    df: Option<usize>,
    /// `[i, j, t, reject]` for every tested pair.
    pairs: Vec<(usize, usize, f64, bool)>,
    graph: GraphView,
}

/// Simulate the AR(1) model and test every pair at the Bonferroni level.
pub fn simulate_and_test(phi: f64, p: usize, n: usize, seed: u64, alpha: f64) -> Outcome {
    if !(3..=MAX_DIM).contains(&p) {
        return Err(format!("dimension must be between 3 and {MAX_DIM}"));
    }
    if n > MAX_ROWS {
        return Err(format!("at most {MAX_ROWS} rows in the browser"));
    }
    let a = ar1_matrix(phi, p).map_err(err)?;
    let noise = NoiseSpec::centred_pareto().map_err(err)?;
    let z = try_sample_noise(p, n, noise, seed).map_err(err)?;
    let x = construct(&a, &z).map_err(err)?;
    let sample = TailSample::from_matrix(x, MarginMeta::Raw).map_err(err)?;
    let opts = PtcTestOptions {
        tpdm: TpdmOptions::global(),
        pred_quantile: None,
        res_quantile: 0.98,
        alpha,
        critical: CriticalMethod::Bonferroni,
        mass: MassChoice::Trace,
    };
    let report = ptc_test_all_pairs(&sample, &opts).map_err(err)?;
    let graph = build_graph_at(&report, report.critical_value);
    to_json(&Simulation {
        n,
        seed,
        critical_value: report.critical_value,
        df: report.df,
        pairs: report.records().map(|r| (r.i, r.j, r.t_stat, r.reject)).collect(),
        graph: graph_view(&graph, 5.0)?,
    })
}

/// Extremal graph from a CSV table of test statistics at critical value `cv`.
pub fn graph_from_stats(csv: &str, cv: f64, width_scale: f64) -> Outcome {
    let table = read_stats_table(csv.as_bytes()).map_err(err)?;
    let method = CriticalMethod::Fixed(cv);
    let report = PtcTestReport::from_t_matrix(table.names, &table.data, cv, method, 0.05).map_err(err)?;
    to_json(&graph_view(&build_graph_at(&report, cv), width_scale)?)
}

fn js(r: Outcome) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exploreAr1)]
pub fn explore_ar1_js(phi: f64, p: usize) -> Result<String, JsError> {
    js(explore_ar1(phi, p))
}

#[wasm_bindgen(js_name = simulateAndTest)]
pub fn simulate_and_test_js(phi: f64, p: usize, n: usize, seed: u64, alpha: f64) -> Result<String, JsError> {
    js(simulate_and_test(phi, p, n, seed, alpha))
}

#[wasm_bindgen(js_name = graphFromStats)]
pub fn graph_from_stats_js(csv: &str, cv: f64, width_scale: f64) -> Result<String, JsError> {
    js(graph_from_stats(csv, cv, width_scale))
}
