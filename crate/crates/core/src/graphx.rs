//! Extremal graphs from partial tail correlation tests, with DOT and JSON output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PtcTestReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Signed test statistic; the edge weight is its absolute value.
    pub t_stat: f64,
}

impl Edge {
    pub fn weight(&self) -> f64 {
        self.t_stat.abs()
    }
}

/// Undirected graph with an edge wherever `|t|` exceeds the critical value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub critical_value: f64,
    /// Pairs that could not be tested, with the reason.
    pub failed: Vec<(usize, usize, String)>,
}

impl ExtremalGraph {
    pub fn edge_set(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.iter().any(|e| (e.i, e.j) == key)
    }
}

/// Graph at the report's own critical value.
pub fn build_graph(report: &PtcTestReport) -> ExtremalGraph {
    build_graph_at(report, report.critical_value)
}

/// Graph at an arbitrary critical value.
pub fn build_graph_at(report: &PtcTestReport, critical_value: f64) -> ExtremalGraph {
    let mut edges: Vec<Edge> = report
        .records()
        .filter(|r| r.i != r.j && r.t_stat.abs() > critical_value)
        .map(|r| Edge {
            i: r.i.min(r.j),
            j: r.i.max(r.j),
            t_stat: r.t_stat,
        })
        .collect();
    edges.sort_by_key(|e| (e.i, e.j));
    let mut failed: Vec<(usize, usize, String)> = report
        .failures()
        .map(|(i, j, reason)| (i, j, reason.to_string()))
        .collect();
    failed.sort();
    ExtremalGraph {
        nodes: report.names.clone(),
        edges,
        critical_value,
        failed,
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

/// DOT rendering; pen widths are `width_scale * |t| / max |t|`, `weight` is
/// `|t|` and the signed statistic is kept in a `t` attribute.
pub fn emit_dot(graph: &ExtremalGraph, width_scale: f64) -> Result<String> {
    if !(width_scale > 0.0 && width_scale.is_finite()) {
        return Err(Error::Domain(format!("width scale {width_scale} must be positive")));
    }
    let max = graph.edges.iter().map(Edge::weight).fold(0.0, f64::max);
    let mut out = String::new();
    // writing into a String cannot fail
    let _ = writeln!(out, "// critical value {}", graph.critical_value);
    for (i, j, reason) in &graph.failed {
        let reason = reason.replace('\n', " ");
        let _ = writeln!(out, "// untested {} -- {}: {reason}", graph.nodes[*i], graph.nodes[*j]);
    }
    out.push_str("graph G {\n");
    for name in &graph.nodes {
        let _ = writeln!(out, "  {};", quote(name));
    }
    for e in &graph.edges {
        let width = if max > 0.0 { width_scale * e.weight() / max } else { width_scale };
        let _ = writeln!(
            out,
            "  {} -- {} [penwidth={:.4}, weight={}, t={}];",
            quote(&graph.nodes[e.i]),
            quote(&graph.nodes[e.j]),
            width,
            e.weight(),
            e.t_stat
        );
    }
    out.push_str("}\n");
    Ok(out)
}

/// Node and edge lists read back from DOT text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedDot {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, Option<f64>)>,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
}

#[derive(Debug, PartialEq)]
enum Token {
    Id(String),
    EdgeOp,
    Punct(char),
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().peekable(),
            src,
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>> {
        loop {
            let Some(&(pos, c)) = self.chars.peek() else {
                return Ok(None);
            };
            if c.is_whitespace() {
                self.chars.next();
            } else if self.src[pos..].starts_with("//") || c == '#' {
                for (_, c) in self.chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c == '"' {
                self.chars.next();
                let mut s = String::new();
                loop {
                    match self.chars.next() {
                        None => return Err(Error::Data("unterminated string in DOT".into())),
                        Some((_, '"')) => break,
                        Some((_, '\\')) => match self.chars.next() {
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, c)) => s.push(c),
                            None => return Err(Error::Data("dangling escape in DOT".into())),
                        },
                        Some((_, c)) => s.push(c),
                    }
                }
                return Ok(Some(Token::Id(s)));
            } else if self.src[pos..].starts_with("--") {
                self.chars.next();
                self.chars.next();
                return Ok(Some(Token::EdgeOp));
            } else if "{}[];=,".contains(c) {
                self.chars.next();
                return Ok(Some(Token::Punct(c)));
            } else if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' {
                let mut s = String::new();
                while let Some(&(_, c)) = self.chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' {
                        if c == '-' && self.src[self.chars.peek().unwrap().0..].starts_with("--") {
                            break;
                        }
                        s.push(c);
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                return Ok(Some(Token::Id(s)));
            } else {
                return Err(Error::Data(format!("unexpected character {c:?} in DOT")));
            }
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        while let Some(t) = self.next_token()? {
            out.push(t);
        }
        Ok(out)
    }
}

/// Parse the undirected subset of DOT written by [`emit_dot`].
pub fn parse_dot(text: &str) -> Result<ParsedDot> {
    let toks = Lexer::new(text).tokens()?;
    let bad = |what: &str| Error::Data(format!("malformed DOT: {what}"));
    let mut it = toks.into_iter().peekable();
    match it.next() {
        Some(Token::Id(k)) if k == "graph" => {}
        _ => return Err(bad("expected `graph`")),
    }
    if let Some(Token::Id(_)) = it.peek() {
        it.next();
    }
    if it.next() != Some(Token::Punct('{')) {
        return Err(bad("expected `{`"));
    }
    let mut parsed = ParsedDot::default();
    loop {
        let first = match it.next() {
            Some(Token::Punct('}')) => break,
            Some(Token::Punct(';')) => continue,
            Some(Token::Id(s)) => s,
            _ => return Err(bad("expected a statement")),
        };
        let second = if it.peek() == Some(&Token::EdgeOp) {
            it.next();
            match it.next() {
                Some(Token::Id(s)) => Some(s),
                _ => return Err(bad("expected edge target")),
            }
        } else {
            None
        };
        let mut weight = None;
        if it.peek() == Some(&Token::Punct('[')) {
            it.next();
            loop {
                match it.next() {
                    Some(Token::Punct(']')) => break,
                    Some(Token::Punct(',')) | Some(Token::Punct(';')) => {}
                    Some(Token::Id(key)) => {
                        if it.next() != Some(Token::Punct('=')) {
                            return Err(bad("expected `=` in attribute list"));
                        }
                        let Some(Token::Id(val)) = it.next() else {
                            return Err(bad("expected attribute value"));
                        };
                        if key == "weight" {
                            weight = Some(val.parse().map_err(|_| bad("non-numeric weight"))?);
                        }
                    }
                    _ => return Err(bad("unterminated attribute list")),
                }
            }
        }
        match second {
            Some(other) => parsed.edges.push((first, other, weight)),
            None => parsed.nodes.push(first),
        }
    }
    if it.next().is_some() {
        return Err(bad("trailing content after graph"));
    }
    Ok(parsed)
}

/// Adjacency view: node names and `[i, j, weight]` triples with 0-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub critical_value: f64,
}

impl From<&ExtremalGraph> for Adjacency {
    fn from(g: &ExtremalGraph) -> Self {
        Self {
            nodes: g.nodes.clone(),
            edges: g.edges.iter().map(|e| (e.i, e.j, e.weight())).collect(),
            critical_value: g.critical_value,
        }
    }
}

pub fn adjacency_json(graph: &ExtremalGraph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Adjacency::from(graph))?)
}
