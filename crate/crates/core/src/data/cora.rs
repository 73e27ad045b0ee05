use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Result, SamgcError};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Label strings of the Cora distribution, in class-index order.
pub const CORA_CLASSES: [&str; 7] = [
    "Case_Based",
    "Genetic_Algorithms",
    "Neural_Networks",
    "Probabilistic_Methods",
    "Reinforcement_Learning",
    "Rule_Learning",
    "Theory",
];

/// Node-labelled graph with one feature row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct CitationDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub graph: Graph,
    /// External paper id of each node, in node order.
    pub ids: Vec<String>,
    pub id_map: HashMap<String, usize>,
    pub class_names: Vec<String>,
}

impl CitationDataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Copy with every nonzero feature row scaled to sum 1.
    pub fn row_normalized(&self) -> CitationDataset {
        let mut out = self.clone();
        for r in 0..out.features.rows() {
            let row = out.features.row_mut(r);
            let s: f64 = row.iter().sum();
            if s != 0.0 {
                row.iter_mut().for_each(|x| *x /= s);
            }
        }
        out
    }
}

/// Bookkeeping from parsing the cites file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub cite_lines: usize,
    /// Citations naming a paper absent from the content file.
    pub dropped_cites: usize,
    pub self_cites: usize,
    pub undirected_edges: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SamgcError::io(path, e))
}

/// Loads the canonical two-file Cora distribution.
pub fn load_cora(content: &Path, cites: &Path) -> Result<(CitationDataset, LoadReport)> {
    parse_citation(&read(content)?, &read(cites)?, Some(&CORA_CLASSES))
}

/// Parses content and cites text. With `classes`, labels must come from that
/// list; without, classes are the sorted distinct labels seen.
pub fn parse_citation(
    content: &str,
    cites: &str,
    classes: Option<&[&str]>,
) -> Result<(CitationDataset, LoadReport)> {
    let mut ids = Vec::new();
    let mut id_map = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(SamgcError::Data(format!(
                "content line {lineno}: expected id, features and label, got {} fields",
                fields.len()
            )));
        }
        let c = fields.len() - 2;
        match width {
            None => width = Some(c),
            Some(w) if w != c => {
                return Err(SamgcError::Data(format!(
                    "content line {lineno}: {c} feature fields, earlier lines had {w}"
                )))
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(c);
        for f in &fields[1..=c] {
            row.push(match *f {
                "0" => 0.0,
                "1" => 1.0,
                other => {
                    return Err(SamgcError::Data(format!(
                        "content line {lineno}: feature field `{other}` is not 0 or 1"
                    )))
                }
            });
        }
        let id = fields[0].to_string();
        if id_map.insert(id.clone(), ids.len()).is_some() {
            return Err(SamgcError::Data(format!(
                "content line {lineno}: duplicate paper id {id}"
            )));
        }
        ids.push(id);
        rows.push(row);
        raw_labels.push((lineno, fields[c + 1].to_string()));
    }
    if ids.is_empty() {
        return Err(SamgcError::Data("content file has no nodes".into()));
    }

    let class_names: Vec<String> = match classes {
        Some(list) => list.iter().map(|s| s.to_string()).collect(),
        None => raw_labels
            .iter()
            .map(|(_, l)| l.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let lookup: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .map(|(lineno, l)| {
            lookup.get(l.as_str()).copied().ok_or_else(|| {
                SamgcError::Data(format!("content line {lineno}: unknown label `{l}`"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = LoadReport::default();
    let mut edges = Vec::new();
    for (i, line) in cites.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(SamgcError::Data(format!(
                "cites line {}: expected two paper ids, got {} fields",
                i + 1,
                fields.len()
            )));
        }
        report.cite_lines += 1;
        match (id_map.get(fields[0]), id_map.get(fields[1])) {
            (Some(&a), Some(&b)) if a == b => report.self_cites += 1,
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => report.dropped_cites += 1,
        }
    }
    let n = ids.len();
    let graph = Graph::from_edges(n, &edges)?;
    report.undirected_edges = graph.num_edges();
    let features = Tensor::new(n, width.unwrap_or(0), rows.concat())?;
    Ok((
        CitationDataset {
            features,
            labels,
            graph,
            ids,
            id_map,
            class_names,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTENT: &str = "p1\t1\t0\t1\tTheory\np2\t0\t1\t0\tRule_Learning\np3\t1\t1\t0\tTheory\n";

    #[test]
    fn miniature_fixture() {
        let (d, r) = parse_citation(CONTENT, "p1\tp2\np3\tp1\n", Some(&CORA_CLASSES)).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.num_features(), 3);
        assert_eq!(d.graph.num_edges(), 2);
        assert_eq!(d.labels, vec![6, 5, 6]);
        assert_eq!(d.id_map["p3"], 2);
        assert_eq!(d.features.row(2), &[1.0, 1.0, 0.0]);
        assert_eq!(r.dropped_cites, 0);
    }

    #[test]
    fn duplicate_and_reciprocal_cites_merge() {
        let (d, r) = parse_citation(CONTENT, "p1\tp2\np1\tp2\np2\tp1\n", None).unwrap();
        assert_eq!(d.graph.num_edges(), 1);
        assert_eq!(r.cite_lines, 3);
        assert_eq!(d.class_names, vec!["Rule_Learning", "Theory"]);
    }

    #[test]
    fn unknown_endpoints_are_dropped_and_counted() {
        let (d, r) = parse_citation(CONTENT, "p1\tp9\np2\tp3\nx\ty\n", None).unwrap();
        assert_eq!(r.dropped_cites, 2);
        assert_eq!(d.graph.edges(), vec![(1, 2)]);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let bad = "p1\t1\t0\t1\tTheory\np2\t0\t1\tTheory\n";
        let e = parse_citation(bad, "", None).unwrap_err();
        assert_eq!(e.kind(), "data");
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse_citation("p1\t1\t2\t1\tTheory\n", "", None).unwrap_err();
        assert!(e.to_string().contains("line 1"));
        let e = parse_citation(CONTENT, "p1\n", None).unwrap_err();
        assert!(e.to_string().contains("cites line 1"));
        let e = parse_citation("p1\t1\tAstrology\n", "", Some(&CORA_CLASSES)).unwrap_err();
        assert!(e.to_string().contains("unknown label"));
    }

    #[test]
    fn loading_is_order_stable() {
        let a = parse_citation(CONTENT, "p3\tp2\np1\tp2\n", None).unwrap();
        let b = parse_citation(CONTENT, "p3\tp2\np1\tp2\n", None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_normalisation() {
        let (d, _) = parse_citation(CONTENT, "", None).unwrap();
        let nd = d.row_normalized();
        assert_eq!(nd.features.row(0), &[0.5, 0.0, 0.5]);
    }
}
