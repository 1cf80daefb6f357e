//! Text formats for graphs and labels.
//!
//! * Edge list: `src<TAB>dst[<TAB>relation]`, one edge per line.
//! * Node types: `node<TAB>type_name`, ids dense in `[0, n)`.
//! * Labels: `node<TAB>{0|1}`, ids in the multi-entity id space.
//!
//! Empty lines and lines starting with `#` are ignored everywhere.
//!
//! The single-entity graph is written as tab-separated records:
//!
//! ```text
//! # graphfraud single-entity graph
//! version     1
//! nodes       <n>
//! edge_types  <type_0>  <type_1> ...
//! counts      {0|1}
//! node        <single id>  <multi-entity id>
//! edge        <u>  <v>  <d-character bit string, dimension order>  [<shared count>]
//! ```
//!
//! Each undirected edge appears once with `u < v`. The bit string's `t`-th
//! character is `1` iff the endpoints share an entity of `edge_types[t]`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Csr, LabeledSet, MultiEntityGraph, SingleEntityGraph};
use crate::error::{Error, Result};

const SINGLE_FORMAT_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Yields `(line number, fields)` for every non-empty, non-comment line.
fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.split('\t').map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_id(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} `{field}`")))
}

/// Loads a multi-entity graph. Type ids follow first appearance in the
/// node-type file; `target_type` names the entity type to classify.
pub fn load_multi_entity_graph(
    edge_list_path: &Path,
    node_type_path: &Path,
    target_type: &str,
) -> Result<MultiEntityGraph> {
    let mut type_names: Vec<String> = Vec::new();
    let mut type_index: HashMap<String, usize> = HashMap::new();
    let mut assigned: Vec<Option<usize>> = Vec::new();
    for (line, fields) in records(node_type_path)? {
        if fields.len() != 2 {
            return Err(parse_err(node_type_path, line, "expected `node<TAB>type`"));
        }
        let node = parse_id(node_type_path, line, &fields[0], "node id")?;
        let name = fields[1].trim().to_owned();
        if name.is_empty() {
            return Err(parse_err(node_type_path, line, "empty type name"));
        }
        let t = *type_index.entry(name.clone()).or_insert_with(|| {
            type_names.push(name);
            type_names.len() - 1
        });
        if node >= assigned.len() {
            assigned.resize(node + 1, None);
        }
        if assigned[node].replace(t).is_some() {
            return Err(parse_err(node_type_path, line, format!("node {node} typed twice")));
        }
    }
    let node_type = assigned
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| Error::InvalidGraph(format!("node {i} has no type (ids must be dense)"))))
        .collect::<Result<Vec<_>>>()?;
    let target = *type_index
        .get(target_type)
        .ok_or_else(|| Error::Config(format!("target type `{target_type}` not present")))?;

    let mut edges = Vec::new();
    for (line, fields) in records(edge_list_path)? {
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(edge_list_path, line, "expected `src<TAB>dst[<TAB>relation]`"));
        }
        let u = parse_id(edge_list_path, line, &fields[0], "source id")?;
        let v = parse_id(edge_list_path, line, &fields[1], "destination id")?;
        let rel = match fields.get(2) {
            Some(f) => Some(parse_id(edge_list_path, line, f, "relation id")?),
            None => None,
        };
        if u >= node_type.len() || v >= node_type.len() {
            return Err(parse_err(
                edge_list_path,
                line,
                format!("edge ({u}, {v}) references an untyped node"),
            ));
        }
        edges.push((u, v, rel));
    }
    MultiEntityGraph::new(type_names, target, node_type, &edges)
}

/// Writes the edge list and node-type files of a multi-entity graph.
pub fn write_multi_entity_graph(g: &MultiEntityGraph, edge_list_path: &Path, node_type_path: &Path) -> Result<()> {
    let mut types = BufWriter::new(File::create(node_type_path)?);
    for (i, &t) in g.node_types().iter().enumerate() {
        writeln!(types, "{i}\t{}", g.type_names()[t])?;
    }
    types.flush()?;
    let mut edges = BufWriter::new(File::create(edge_list_path)?);
    let adj = g.adjacency();
    for u in 0..g.node_count() {
        if !g.is_target(u) {
            continue;
        }
        for e in adj.entry_range(u) {
            writeln!(edges, "{u}\t{}\t{}", adj.targets()[e], g.relation(e))?;
        }
    }
    edges.flush()?;
    Ok(())
}

/// Reads labels given in multi-entity ids and maps them onto single-entity
/// ids via `origin`.
pub fn load_labels(path: &Path, origin: &[usize]) -> Result<LabeledSet> {
    let index: HashMap<usize, usize> = origin.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let mut entries = Vec::new();
    for (line, fields) in records(path)? {
        if fields.len() != 2 {
            return Err(parse_err(path, line, "expected `node<TAB>label`"));
        }
        let node = parse_id(path, line, &fields[0], "node id")?;
        let label: u8 = match fields[1].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(path, line, format!("label `{other}` is not 0 or 1"))),
        };
        let local = *index
            .get(&node)
            .ok_or_else(|| parse_err(path, line, format!("node {node} is not a target entity")))?;
        entries.push((local, label));
    }
    LabeledSet::new(entries, origin.len())
}

/// Writes labels using multi-entity ids.
pub fn write_labels(path: &Path, labels: &LabeledSet, origin: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for &(node, y) in labels.entries() {
        writeln!(out, "{}\t{y}", origin[node])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_single_entity_graph(g: &SingleEntityGraph, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# graphfraud single-entity graph")?;
    writeln!(out, "version\t{SINGLE_FORMAT_VERSION}")?;
    writeln!(out, "nodes\t{}", g.node_count())?;
    write!(out, "edge_types")?;
    for t in g.edge_types() {
        write!(out, "\t{t}")?;
    }
    writeln!(out)?;
    writeln!(out, "counts\t{}", u8::from(g.shared_counts().is_some()))?;
    for (i, o) in g.origin().iter().enumerate() {
        writeln!(out, "node\t{i}\t{o}")?;
    }
    let d = g.edge_dim();
    let adj = g.adjacency();
    for u in 0..g.node_count() {
        for e in adj.entry_range(u) {
            let v = adj.targets()[e];
            if v < u {
                continue;
            }
            let bits: String = (0..d)
                .map(|t| if g.edge_features()[e] >> t & 1 == 1 { '1' } else { '0' })
                .collect();
            match g.shared_counts() {
                Some(c) => writeln!(out, "edge\t{u}\t{v}\t{bits}\t{}", c[e])?,
                None => writeln!(out, "edge\t{u}\t{v}\t{bits}")?,
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_single_entity_graph(path: &Path) -> Result<SingleEntityGraph> {
    let mut node_count = None;
    let mut edge_types: Option<Vec<String>> = None;
    let mut with_counts = false;
    let mut origin_pairs = Vec::new();
    let mut edges: Vec<(usize, usize, u64, u32)> = Vec::new();
    for (line, f) in records(path)? {
        match f[0].as_str() {
            "version" => {
                let v = f.get(1).map(|s| s.trim()).unwrap_or("");
                if v != SINGLE_FORMAT_VERSION.to_string() {
                    return Err(parse_err(path, line, format!("unsupported version `{v}`")));
                }
            }
            "nodes" => {
                let n = f.get(1).ok_or_else(|| parse_err(path, line, "missing node count"))?;
                node_count = Some(parse_id(path, line, n, "node count")?);
            }
            "edge_types" => edge_types = Some(f[1..].to_vec()),
            "counts" => with_counts = f.get(1).map(|s| s.trim()) == Some("1"),
            "node" if f.len() == 3 => {
                let i = parse_id(path, line, &f[1], "node id")?;
                let o = parse_id(path, line, &f[2], "origin id")?;
                origin_pairs.push((i, o));
            }
            "edge" if f.len() == 4 || f.len() == 5 => {
                let d = edge_types
                    .as_ref()
                    .ok_or_else(|| parse_err(path, line, "edge before edge_types header"))?
                    .len();
                let u = parse_id(path, line, &f[1], "node id")?;
                let v = parse_id(path, line, &f[2], "node id")?;
                if f[3].len() != d {
                    return Err(parse_err(path, line, format!("expected {d} feature bits")));
                }
                let mut bits = 0u64;
                for (t, c) in f[3].chars().enumerate() {
                    match c {
                        '1' => bits |= 1 << t,
                        '0' => {}
                        _ => return Err(parse_err(path, line, "feature bits must be 0/1")),
                    }
                }
                let count = match f.get(4) {
                    Some(c) => c
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(path, line, "invalid shared count"))?,
                    None => 0,
                };
                edges.push((u, v, bits, count));
            }
            _ => return Err(parse_err(path, line, "unrecognized record")),
        }
    }
    let n = node_count.ok_or_else(|| parse_err(path, 0, "missing `nodes` header"))?;
    let edge_types = edge_types.ok_or_else(|| parse_err(path, 0, "missing `edge_types` header"))?;
    let mut origin = vec![usize::MAX; n];
    for (i, o) in origin_pairs {
        if i >= n {
            return Err(Error::InvalidGraph(format!("node record {i} out of range")));
        }
        origin[i] = o;
    }
    if origin.contains(&usize::MAX) {
        return Err(Error::InvalidGraph("missing node records".into()));
    }
    if let Some(&(u, v, ..)) = edges.iter().find(|e| e.0 >= n || e.1 >= n || e.0 == e.1) {
        return Err(Error::InvalidGraph(format!("invalid edge ({u}, {v})")));
    }
    let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.0, e.1)).collect();
    let adjacency = Csr::from_undirected(n, &pairs);
    let mut features = vec![0u64; adjacency.nnz()];
    let mut counts = vec![0u32; adjacency.nnz()];
    for &(u, v, bits, c) in &edges {
        for (a, b) in [(u, v), (v, u)] {
            let e = adjacency.find_entry(a, b).unwrap();
            features[e] = bits;
            counts[e] = c;
        }
    }
    SingleEntityGraph::new(adjacency, features, edge_types, origin, with_counts.then_some(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{transform_to_single_entity, TransformConfig};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_dedups_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let types = write(dir.path(), "types.tsv", "0\tuser\n1\tuser\n2\tdevice\n");
        let edges = write(dir.path(), "edges.tsv", "# comment\n0\t2\n0\t2\n1\t2\n");
        let g = load_multi_entity_graph(&edges, &types, "user").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.adjacency().edge_count(), 2);

        let bad = write(dir.path(), "bad.tsv", "0\t2\n1\tx\n");
        match load_multi_entity_graph(&bad, &types, "user") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bip = write(dir.path(), "bip.tsv", "0\t1\n");
        assert!(matches!(
            load_multi_entity_graph(&bip, &types, "user"),
            Err(Error::NotBipartite(..))
        ));
    }

    #[test]
    fn single_entity_round_trip() {
        let types = vec!["user".into(), "device".into(), "ip".into()];
        let g = MultiEntityGraph::new(
            types,
            0,
            vec![1, 0, 0, 2, 0],
            &[(1, 0, None), (2, 0, None), (2, 3, None), (4, 3, None), (1, 3, None)],
        )
        .unwrap();
        let (s, _) = transform_to_single_entity(&g, &TransformConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("single.tsv");
        write_single_entity_graph(&s, &p).unwrap();
        let back = read_single_entity_graph(&p).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn labels_map_to_single_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "labels.tsv", "4\t1\n1\t0\n");
        let labels = load_labels(&p, &[1, 2, 4]).unwrap();
        assert_eq!(labels.entries(), &[(2, 1), (0, 0)]);
        let bad = write(dir.path(), "bad.tsv", "3\t1\n");
        assert!(load_labels(&bad, &[1, 2, 4]).is_err());
    }
}
