//! Text ingestion for citation-style datasets.
//!
//! Node file: one row per node, `id f_1 .. f_d label`. Edge file: one row per
//! edge, `src dst`. Tokens may be separated by whitespace and/or commas;
//! blank lines and lines starting with `#` are ignored. Node ids are opaque
//! tokens and are renumbered densely in file order. Label tokens are mapped
//! to class indices in sorted order (numerically when all labels are
//! integers).

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;

use super::{Adjacency, ClientSubgraph, GlobalGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Edges naming an id absent from the node file.
    pub unknown_endpoint_edges: usize,
    pub self_loops: usize,
}

#[derive(Debug, Clone)]
pub struct ParsedNodes {
    pub ids: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn parse_nodes<R: BufRead>(reader: R, path: &Path) -> Result<ParsedNodes> {
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim: Option<usize> = None;
    let mut seen = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if is_skippable(&line) {
            continue;
        }
        let toks: Vec<&str> = tokens(&line).collect();
        if toks.len() < 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected `id f_1 .. f_d label`, found {} tokens", toks.len()),
            ));
        }
        let d = toks.len() - 2;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {expected} features, found {d}"),
                ))
            }
            _ => {}
        }
        let id = toks[0].to_string();
        if let Some(first) = seen.insert(id.clone(), lineno) {
            return Err(Error::validation(format!(
                "{}: duplicate node id `{id}` on lines {first} and {lineno}",
                path.display()
            )));
        }
        for t in &toks[1..toks.len() - 1] {
            let v: f64 = t
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad feature value `{t}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite feature `{t}`")));
            }
            values.push(v);
        }
        ids.push(id);
        raw_labels.push(toks[toks.len() - 1].to_string());
    }

    let dim = dim.unwrap_or(0);
    let features = Array2::from_shape_vec((ids.len(), dim), values)
        .expect("row lengths checked while parsing");

    let label_names: Vec<String> = if raw_labels.iter().all(|l| l.parse::<u64>().is_ok()) {
        let set: BTreeSet<u64> = raw_labels.iter().map(|l| l.parse().unwrap()).collect();
        set.into_iter().map(|v| v.to_string()).collect()
    } else {
        let set: BTreeSet<&String> = raw_labels.iter().collect();
        set.into_iter().cloned().collect()
    };
    let label_index: HashMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .map(|l| {
            // Normalizes "007" to "7" for numeric labels.
            let key = l.parse::<u64>().map(|v| v.to_string()).unwrap_or_else(|_| l.clone());
            label_index[key.as_str()]
        })
        .collect();

    Ok(ParsedNodes {
        ids,
        features,
        labels,
        label_names,
    })
}

/// Parses `src dst` rows against the known id table. Returns dense edges
/// plus counts of dropped rows.
pub fn parse_edges<R: BufRead>(
    reader: R,
    path: &Path,
    ids: &HashMap<String, usize>,
) -> Result<(Vec<(usize, usize)>, LoadReport)> {
    let mut edges = Vec::new();
    let mut report = LoadReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if is_skippable(&line) {
            continue;
        }
        let toks: Vec<&str> = tokens(&line).collect();
        if toks.len() != 2 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected `src dst`, found {} tokens", toks.len()),
            ));
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&u), Some(&v)) if u == v => report.self_loops += 1,
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => report.unknown_endpoint_edges += 1,
        }
    }
    Ok((edges, report))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))
}

/// Loads a graph from a node file and an edge file. The adjacency is
/// symmetrized; edges with unknown endpoints and self-loops are dropped and
/// counted in the report.
pub fn load_graph(node_file: &Path, edge_file: &Path) -> Result<(GlobalGraph, LoadReport)> {
    let nodes = parse_nodes(open(node_file)?, node_file)?;
    let index: HashMap<String, usize> = nodes
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let (edges, report) = parse_edges(open(edge_file)?, edge_file, &index)?;
    if report.unknown_endpoint_edges > 0 {
        warn!(
            "{}: dropped {} edges with unknown endpoints",
            edge_file.display(),
            report.unknown_endpoint_edges
        );
    }
    if report.self_loops > 0 {
        warn!("{}: dropped {} self-loops", edge_file.display(), report.self_loops);
    }
    let n = nodes.ids.len();
    let num_classes = nodes.label_names.len();
    let graph = GlobalGraph::new(
        nodes.features,
        nodes.labels,
        num_classes,
        Adjacency::from_edges(n, edges),
    )?;
    Ok((graph, report))
}

/// Writes one `client_id node_id` row per membership.
pub fn write_partition_dump(path: &Path, parts: &[ClientSubgraph]) -> Result<()> {
    let ctx = || format!("writing {}", PathBuf::from(path).display());
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
    for part in parts {
        for &node in &part.node_ids {
            writeln!(out, "{} {}", part.client_id, node).map_err(|e| Error::io(ctx(), e))?;
        }
    }
    out.flush().map_err(|e| Error::io(ctx(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn p() -> PathBuf {
        PathBuf::from("mem")
    }

    #[test]
    fn parses_mixed_delimiters_and_string_labels() {
        let text = "# header\na, 1.0, 2.0, Theory\nb 3 4 Neural\n\nc\t5\t6\tTheory\n";
        let nodes = parse_nodes(Cursor::new(text), &p()).unwrap();
        assert_eq!(nodes.ids, vec!["a", "b", "c"]);
        assert_eq!(nodes.features.dim(), (3, 2));
        assert_eq!(nodes.label_names, vec!["Neural", "Theory"]);
        assert_eq!(nodes.labels, vec![1, 0, 1]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let text = "0 1 10\n1 1 2\n2 1 2\n";
        let nodes = parse_nodes(Cursor::new(text), &p()).unwrap();
        assert_eq!(nodes.label_names, vec!["2", "10"]);
        assert_eq!(nodes.labels, vec![1, 0, 0]);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = "0 1.0 2.0 0\n1 1.0 x 1\n";
        match parse_nodes(Cursor::new(text), &p()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let ragged = "0 1.0 2.0 0\n\n1 1.0 1\n";
        match parse_nodes(Cursor::new(ragged), &p()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_node_id_is_a_validation_error() {
        let text = "0 1.0 0\n0 2.0 1\n";
        assert!(matches!(
            parse_nodes(Cursor::new(text), &p()).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn edges_with_unknown_ids_and_loops_are_counted() {
        let ids: HashMap<String, usize> =
            [("0", 0), ("1", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let (edges, report) =
            parse_edges(Cursor::new("0 1\n0 9\n1 1\n"), &p(), &ids).unwrap();
        assert_eq!(edges, vec![(0, 1)]);
        assert_eq!(report.unknown_endpoint_edges, 1);
        assert_eq!(report.self_loops, 1);
    }
}
