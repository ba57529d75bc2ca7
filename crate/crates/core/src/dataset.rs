//! Dataset ingestion (JSON lines), binary bundles and canonical export.
//!
//! Each input line is one record:
//! `{"id": 0, "text": "...", "label": 1}` for a node,
//! `{"edge": [0, 4, 7], "weight": 1.0}` for a hyperedge and
//! `{"u": 0, "v": 4}` for a pairwise edge. Pairwise edges are turned into
//! hyperedges by maximal-clique reconstruction and appended after the
//! explicit hyperedges.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clique::reconstruct_from_graph;
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeLabels, PairwiseGraph};
use crate::text::{tokenize, TextCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperedgeRecord {
    pub edge: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub u: usize,
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Node(NodeRecord),
    Hyperedge(HyperedgeRecord),
    Pair(PairRecord),
}

/// A text-attributed hypergraph with optional node labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub hypergraph: Hypergraph,
    pub corpus: TextCorpus,
    pub labels: NodeLabels,
}

fn parse_line(line: &str, lineno: usize) -> Result<Record> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: if e.is_data() {
            "not a node, hyperedge or pairwise record".to_string()
        } else {
            e.to_string()
        },
    })
}

/// Parses JSON-lines records. Blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<(usize, Record)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, parse_line(&line, i + 1)?));
    }
    Ok(out)
}

impl Dataset {
    pub fn new(hypergraph: Hypergraph, corpus: TextCorpus, labels: NodeLabels) -> Result<Self> {
        corpus.check_aligned(&hypergraph)?;
        if labels.len() != hypergraph.num_nodes() {
            return Err(Error::InvariantViolation(format!(
                "{} labels for {} nodes",
                labels.len(),
                hypergraph.num_nodes()
            )));
        }
        Ok(Self {
            hypergraph,
            corpus,
            labels,
        })
    }

    /// Validates records and assembles a dataset. Node ids must be exactly
    /// `0..n`, each appearing once.
    pub fn from_records(records: &[(usize, Record)]) -> Result<Self> {
        let mut nodes: Vec<Option<&NodeRecord>> = Vec::new();
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        let mut pairs = Vec::new();
        for (line, rec) in records {
            match rec {
                Record::Node(n) => {
                    if n.id >= nodes.len() {
                        nodes.resize(n.id + 1, None);
                    }
                    if nodes[n.id].is_some() {
                        return Err(Error::Parse {
                            line: *line,
                            message: format!("duplicate node id {}", n.id),
                        });
                    }
                    nodes[n.id] = Some(n);
                }
                Record::Hyperedge(h) => {
                    edges.push(h.edge.clone());
                    weights.push(h.weight.unwrap_or(1.0));
                }
                Record::Pair(p) => pairs.push((p.u, p.v)),
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(missing) = nodes.iter().position(Option::is_none) {
            return Err(Error::InvariantViolation(format!("node id {missing} has no record")));
        }
        let n = nodes.len();
        if !pairs.is_empty() {
            let g = PairwiseGraph::new(n, &pairs).map_err(|e| Error::InvariantViolation(e.to_string()))?;
            for clique in reconstruct_from_graph(&g) {
                edges.push(clique);
                weights.push(1.0);
            }
        }
        let hg = Hypergraph::new(n, &edges, Some(weights)).map_err(|e| Error::InvariantViolation(e.to_string()))?;
        let texts = nodes.iter().map(|r| r.unwrap().text.clone()).collect();
        let labels = NodeLabels::from_labels(nodes.iter().map(|r| r.unwrap().label).collect());
        Self::new(hg, TextCorpus::new(texts), labels)
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        Self::from_records(&parse_records(reader)?)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Canonical JSON lines: nodes by id, then hyperedges in order with
    /// sorted members and explicit weights.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for v in 0..self.hypergraph.num_nodes() {
            let rec = NodeRecord {
                id: v,
                text: self.corpus.get(v).to_string(),
                label: self.labels.get(v),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        for (e, members) in self.hypergraph.hyperedges().into_iter().enumerate() {
            let rec = HyperedgeRecord {
                edge: members,
                weight: Some(self.hypergraph.weights()[e]),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn stats(&self) -> DatasetStats {
        let hg = &self.hypergraph;
        let tokens: usize = self.corpus.texts().iter().map(|t| tokenize(t).len()).sum();
        DatasetStats {
            num_nodes: hg.num_nodes(),
            num_hyperedges: hg.num_edges(),
            avg_hyperedge_size: hg.mean_edge_size(),
            avg_tokens: tokens as f64 / hg.num_nodes().max(1) as f64,
            num_classes: self.labels.num_classes(),
        }
    }

    pub fn write_bundle<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(BUNDLE_MAGIC)?;
        let n = self.hypergraph.num_nodes();
        put(w, n as u64)?;
        for v in 0..n {
            let t = self.corpus.get(v).as_bytes();
            put(w, t.len() as u64)?;
            w.write_all(t)?;
            w.write_all(&self.labels.get(v).map_or(-1i64, |c| c as i64).to_le_bytes())?;
        }
        put(w, self.labels.num_classes() as u64)?;
        put(w, self.hypergraph.num_edges() as u64)?;
        for e in 0..self.hypergraph.num_edges() {
            let m = self.hypergraph.members(e);
            put(w, m.len() as u64)?;
            for &v in m {
                put(w, v as u64)?;
            }
            w.write_all(&self.hypergraph.weights()[e].to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_bundle<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(Error::Format("not a dataset bundle".into()));
        }
        let n = get(r)? as usize;
        let mut texts = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let len = get(r)? as usize;
            let mut buf = Vec::new();
            r.take(len as u64).read_to_end(&mut buf)?;
            if buf.len() != len {
                return Err(Error::Format("truncated bundle".into()));
            }
            texts.push(String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))?);
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            let l = i64::from_le_bytes(b);
            labels.push(if l < 0 { None } else { Some(l as usize) });
        }
        let num_classes = get(r)? as usize;
        let m = get(r)? as usize;
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for _ in 0..m {
            let size = get(r)? as usize;
            if size > n {
                return Err(Error::Format(format!("hyperedge of size {size} in a {n}-node bundle")));
            }
            let members = (0..size).map(|_| get(r).map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
            edges.push(members);
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            weights.push(f64::from_le_bytes(b));
        }
        let hg = Hypergraph::new(n, &edges, Some(weights))?;
        Self::new(hg, TextCorpus::new(texts), NodeLabels::new(labels, num_classes)?)
    }

    pub fn save_bundle(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_bundle(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load_bundle(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_bundle(&mut bytes.as_slice())
    }

    /// Loads a bundle, or JSON lines when the file lacks the bundle magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BUNDLE_MAGIC) {
            Self::read_bundle(&mut bytes.as_slice())
        } else {
            Self::read_jsonl(bytes.as_slice())
        }
    }
}

const BUNDLE_MAGIC: &[u8; 8] = b"TAHGDS01";

fn put<W: Write>(w: &mut W, x: u64) -> Result<()> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn get<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_nodes: usize,
    pub num_hyperedges: usize,
    pub avg_hyperedge_size: f64,
    pub avg_tokens: f64,
    pub num_classes: usize,
}

fn short(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "|V|={} |E|={} avg|e|={} avg_tokens={} #class={}",
            self.num_nodes,
            self.num_hyperedges,
            short(self.avg_hyperedge_size),
            short(self.avg_tokens),
            self.num_classes
        )
    }
}

/// Hyperedge records for the maximal cliques of a pairwise graph given as
/// `{"u", "v"}` lines.
pub fn reconstruct_jsonl<R: BufRead>(reader: R) -> Result<String> {
    let mut pairs = Vec::new();
    let mut max_id = 0;
    let mut seen_any = false;
    for (line, rec) in parse_records(reader)? {
        match rec {
            Record::Pair(p) => {
                max_id = max_id.max(p.u).max(p.v);
                seen_any = true;
                pairs.push((p.u, p.v));
            }
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "expected a pairwise record".into(),
                })
            }
        }
    }
    if !seen_any {
        return Err(Error::EmptyDataset);
    }
    let g = PairwiseGraph::new(max_id + 1, &pairs)?;
    let mut out = String::new();
    for clique in reconstruct_from_graph(&g) {
        out.push_str(&serde_json::to_string(&HyperedgeRecord { edge: clique, weight: None }).expect("serializable"));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{"id": 1, "text": "beta gamma", "label": 0}
{"id": 0, "text": "Alpha", "label": 1}

{"id": 2, "text": "delta"}
{"edge": [2, 0, 1], "weight": 2.5}
{"edge": [1, 2]}
"#;

    #[test]
    fn ingest_and_stats() {
        let ds = Dataset::read_jsonl(SMALL.as_bytes()).unwrap();
        assert_eq!(ds.hypergraph.num_nodes(), 3);
        assert_eq!(ds.hypergraph.members(0), &[0, 1, 2]);
        assert_eq!(ds.hypergraph.weights(), &[2.5, 1.0]);
        assert_eq!(ds.corpus.get(0), "Alpha");
        assert_eq!(ds.labels.get(2), None);
        assert_eq!(ds.labels.num_classes(), 2);
        assert_eq!(ds.stats().to_string(), "|V|=3 |E|=2 avg|e|=2.5 avg_tokens=1.33 #class=2");
    }

    #[test]
    fn canonical_round_trip() {
        let ds = Dataset::read_jsonl(SMALL.as_bytes()).unwrap();
        let canon = ds.to_jsonl();
        let again = Dataset::read_jsonl(canon.as_bytes()).unwrap().to_jsonl();
        assert_eq!(canon, again);
        assert!(canon.starts_with("{\"id\":0,\"text\":\"Alpha\",\"label\":1}\n"));
    }

    #[test]
    fn bundle_round_trip() {
        let ds = Dataset::read_jsonl(SMALL.as_bytes()).unwrap();
        let mut buf = Vec::new();
        ds.write_bundle(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"TAHGDS01");
        let back = Dataset::read_bundle(&mut buf.as_slice()).unwrap();
        assert_eq!(back.to_jsonl(), ds.to_jsonl());
        assert!(Dataset::read_bundle(&mut &buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(Dataset::read_jsonl("".as_bytes()), Err(Error::EmptyDataset)));
        let bad = "{\"id\": 0, \"text\": \"a\"}\n{\"id\": \"x\"}\n";
        assert!(matches!(Dataset::read_jsonl(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let broken = "{\"id\": 0, \"text\": \"a\"}\n{oops\n";
        assert!(matches!(Dataset::read_jsonl(broken.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let gap = "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 2, \"text\": \"c\"}\n";
        assert!(matches!(Dataset::read_jsonl(gap.as_bytes()), Err(Error::InvariantViolation(_))));
        let dup = "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 0, \"text\": \"b\"}\n";
        assert!(matches!(Dataset::read_jsonl(dup.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let range = "{\"id\": 0, \"text\": \"a\"}\n{\"edge\": [0, 5]}\n";
        assert!(matches!(Dataset::read_jsonl(range.as_bytes()), Err(Error::InvariantViolation(_))));
        let empty_edge = "{\"id\": 0, \"text\": \"a\"}\n{\"edge\": []}\n";
        assert!(Dataset::read_jsonl(empty_edge.as_bytes()).is_err());
    }

    #[test]
    fn pairwise_records_become_cliques() {
        let text = "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 1, \"text\": \"b\"}\n{\"id\": 2, \"text\": \"c\"}\n{\"id\": 3, \"text\": \"d\"}\n{\"u\": 0, \"v\": 1}\n{\"u\": 1, \"v\": 2}\n{\"u\": 0, \"v\": 2}\n{\"u\": 2, \"v\": 3}\n";
        let ds = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(ds.hypergraph.hyperedges(), vec![vec![0, 1, 2], vec![2, 3]]);
        let pairs = "{\"u\": 0, \"v\": 1}\n{\"u\": 1, \"v\": 2}\n{\"u\": 0, \"v\": 2}\n";
        assert_eq!(reconstruct_jsonl(pairs.as_bytes()).unwrap(), "{\"edge\":[0,1,2]}\n");
    }

    #[test]
    fn citeseer_shaped_stats() {
        let mut s = String::new();
        for v in 0..1778 {
            s.push_str(&format!("{{\"id\": {v}, \"text\": \"paper {v}\", \"label\": {}}}\n", v % 6));
        }
        for e in 0..2118 {
            s.push_str(&format!("{{\"edge\": [{}, {}]}}\n", e % 1778, (e * 7 + 1) % 1778));
        }
        let ds = Dataset::read_jsonl(s.as_bytes()).unwrap();
        assert!(ds.stats().to_string().starts_with("|V|=1778 |E|=2118 avg|e|=2 "));
    }
}
