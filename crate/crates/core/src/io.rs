//! Text formats for signals, labels and estimates.
//!
//! - signals: one value per line, or `node,value` lines (any order, every
//!   node exactly once);
//! - labels: `node,class_id` lines;
//! - labeled sets: one vertex id per line;
//! - estimates: CSV `node,value` or JSON `{schema, estimate, alpha, diagnostics}`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::MonteCarloResult;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn read(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid number `{}`", s.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("non-finite value `{}`", s.trim()) });
    }
    Ok(v)
}

fn parse_id(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid vertex id `{}`", s.trim()),
    })
}

/// Parses a signal of length `n`.
pub fn parse_signal(text: &str, n: usize) -> Result<Vec<f64>> {
    let lines: Vec<(usize, &str)> = content_lines(text)
        .filter(|(_, l)| !l.starts_with("node"))
        .collect();
    let indexed = lines.first().is_some_and(|(_, l)| l.contains(','));
    let values = if indexed {
        let mut values = vec![None; n];
        for (line, l) in lines {
            let (node, value) = l.split_once(',').ok_or_else(|| Error::Parse {
                line,
                message: "expected `node,value`".into(),
            })?;
            let node = parse_id(node, line)?;
            if node >= n {
                return Err(Error::VertexOutOfRange { vertex: node, n });
            }
            if values[node].replace(parse_f64(value, line)?).is_some() {
                return Err(Error::Parse { line, message: format!("node {node} given twice") });
            }
        }
        if let Some(missing) = values.iter().position(Option::is_none) {
            return Err(Error::InvalidParameter(format!("signal has no value for node {missing}")));
        }
        values.into_iter().map(Option::unwrap).collect()
    } else {
        lines
            .into_iter()
            .map(|(line, l)| parse_f64(l, line))
            .collect::<Result<Vec<_>>>()?
    };
    if values.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: values.len() });
    }
    Ok(values)
}

pub fn load_signal(path: impl AsRef<Path>, n: usize) -> Result<Vec<f64>> {
    parse_signal(&read(path)?, n)
}

/// `node,value` lines with shortest round-trip formatting.
pub fn signal_csv(values: &[f64]) -> String {
    let mut out = String::from("node,value\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:?}").unwrap();
    }
    out
}

/// Parses `node,class_id` lines into a class per vertex; every vertex of
/// `0..n` must be labeled.
pub fn parse_labels(text: &str, n: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; n];
    for (line, l) in content_lines(text) {
        if line == 1 && l.starts_with("node") {
            continue;
        }
        let (node, class) = l.split_once(',').ok_or_else(|| Error::Parse {
            line,
            message: "expected `node,class_id`".into(),
        })?;
        let node = parse_id(node, line)?;
        if node >= n {
            return Err(Error::VertexOutOfRange { vertex: node, n });
        }
        let class = class.trim().parse::<usize>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid class id `{}`", class.trim()),
        })?;
        if labels[node].replace(class).is_some() {
            return Err(Error::Parse { line, message: format!("node {node} labeled twice") });
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, c)| c.ok_or_else(|| Error::InvalidParameter(format!("node {v} has no label"))))
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>, n: usize) -> Result<Vec<usize>> {
    parse_labels(&read(path)?, n)
}

pub fn parse_vertex_list(text: &str, n: usize) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| {
            let v = parse_id(l, line)?;
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
            Ok(v)
        })
        .collect()
}

pub fn load_vertex_list(path: impl AsRef<Path>, n: usize) -> Result<Vec<usize>> {
    parse_vertex_list(&read(path)?, n)
}

#[derive(Serialize)]
struct EstimateDocument<'a> {
    schema: &'static str,
    method: &'a str,
    estimate: &'a [f64],
    alpha: Option<f64>,
    diagnostics: Option<&'a crate::estimators::Diagnostics>,
}

/// Renders an exact solution.
pub fn render_exact(x: &[f64], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => signal_csv(x),
        OutputFormat::Json => to_json(&EstimateDocument {
            schema: SCHEMA_VERSION,
            method: "exact",
            estimate: x,
            alpha: None,
            diagnostics: None,
        }),
    }
}

/// Renders a Monte Carlo estimate; CSV carries the diagnostics as `#` comments.
pub fn render_estimate(result: &MonteCarloResult, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => {
            let d = &result.diagnostics;
            let mut out = String::new();
            writeln!(out, "# alpha={:?} samples={} walk_steps={}", result.alpha, d.n_samples, d.walk_steps).unwrap();
            if d.alpha_fallback {
                writeln!(out, "# alpha_fallback: {}", d.note.as_deref().unwrap_or("")).unwrap();
            }
            out.push_str(&signal_csv(&result.estimate));
            out
        }
        OutputFormat::Json => to_json(&EstimateDocument {
            schema: SCHEMA_VERSION,
            method: "forest",
            estimate: &result.estimate,
            alpha: Some(result.alpha),
            diagnostics: Some(&result.diagnostics),
        }),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable document");
    s.push('\n');
    s
}

/// Formats an optional float, using `NA` for undefined values.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_formats() {
        assert_eq!(parse_signal("1\n2.5\n# c\n-3\n", 3).unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_signal("2,9\n0,1\n1,5\n", 3).unwrap(), vec![1.0, 5.0, 9.0]);
        let v = [0.1, 1e-300];
        assert_eq!(parse_signal(&signal_csv(&v), 2).unwrap(), v);
        assert!(matches!(parse_signal("1\n2\n", 3), Err(Error::LengthMismatch { .. })));
        assert!(parse_signal("0,1\n0,2\n", 2).is_err());
        assert!(parse_signal("0,1\n", 2).is_err());
        assert!(parse_signal("nan\n", 1).is_err());
    }

    #[test]
    fn labels_and_vertex_lists() {
        assert_eq!(parse_labels("node,class_id\n1,0\n0,2\n", 2).unwrap(), vec![2, 0]);
        assert!(parse_labels("0,0\n", 2).is_err());
        assert_eq!(parse_vertex_list("3\n1\n", 4).unwrap(), vec![3, 1]);
        assert!(parse_vertex_list("4\n", 4).is_err());
    }

    #[test]
    fn exact_json_is_versioned() {
        let doc = render_exact(&[5.0, 2.0, 1.0], OutputFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(v["schema"], "1");
        assert_eq!(v["estimate"][1], 2.0);
    }
}
