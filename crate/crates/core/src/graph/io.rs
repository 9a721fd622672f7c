//! Two-file TSV serialization: `nodes.tsv` and `edges.tsv`, plus
//! `aliases.tsv` recording which pair keys were merged into which node.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{EdgeType, NodeKey, PairKey, PropGraph, Provenance};
use crate::corpus::CorpusKind;
use crate::error::{Error, Result};

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes `nodes.tsv`, `edges.tsv` and `aliases.tsv` into `dir`. Node ids are
/// positions in sorted key order, so identical graphs give identical bytes.
pub fn write_graph(graph: &PropGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids: std::collections::HashMap<&NodeKey, usize> = graph.nodes().enumerate().map(|(i, k)| (k, i)).collect();

    let mut nodes = Vec::new();
    writeln!(nodes, "id\tkind\tkey\tprovenance").unwrap();
    for (i, k) in graph.nodes().enumerate() {
        let prov: Vec<String> = graph
            .provenance(k)
            .iter()
            .map(|p| format!("{}:{}:{}", p.corpus, p.doc_id, p.location))
            .collect();
        writeln!(nodes, "{i}\t{}\t{k}\t{}", k.kind(), prov.join(";")).unwrap();
    }

    let mut edges = Vec::new();
    writeln!(edges, "a\tb\tetype\tweight").unwrap();
    for e in graph.edges() {
        writeln!(
            edges,
            "{}\t{}\t{}\t{}",
            ids[&e.a],
            ids[&e.b],
            e.etype.as_str(),
            e.weight
        )
        .unwrap();
    }

    let mut aliases = Vec::new();
    for (from, to) in graph.aliases() {
        writeln!(aliases, "{}\t{}\t{}\t{}", from.subject, from.np, to.subject, to.np).unwrap();
    }

    write_file(&dir.join("nodes.tsv"), std::str::from_utf8(&nodes).unwrap())?;
    write_file(&dir.join("edges.tsv"), std::str::from_utf8(&edges).unwrap())?;
    write_file(&dir.join("aliases.tsv"), std::str::from_utf8(&aliases).unwrap())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_provenance(s: &str) -> Option<Provenance> {
    let (corpus, rest) = s.split_once(':')?;
    let (doc_id, location) = rest.rsplit_once(':').map(|(d, l)| {
        // locations of mentions contain one ':' themselves
        match d.rsplit_once(':') {
            Some((doc, sent)) if sent.starts_with('s') && l.contains('-') => (doc, format!("{sent}:{l}")),
            _ => (d, l.to_string()),
        }
    })?;
    Some(Provenance {
        corpus: CorpusKind::parse(corpus)?,
        doc_id: doc_id.to_string(),
        location,
    })
}

pub fn read_graph(dir: &Path) -> Result<PropGraph> {
    let nodes_path = dir.join("nodes.tsv");
    let origin = nodes_path.display().to_string();
    let mut keys = Vec::new();
    let mut g = PropGraph::new();
    for (i, line) in read(&nodes_path)?.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                &origin,
                i + 1,
                "columns",
                "expected id, kind, key, provenance",
            ));
        }
        let key: NodeKey = cols[2]
            .parse()
            .map_err(|e: String| Error::parse(&origin, i + 1, "key", e))?;
        g.add_node(key.clone(), None);
        for p in cols[3].split(';').filter(|p| !p.is_empty()) {
            let prov = parse_provenance(p).ok_or_else(|| Error::parse(&origin, i + 1, "provenance", p))?;
            g.add_node(key.clone(), Some(prov));
        }
        keys.push(key);
    }

    let edges_path = dir.join("edges.tsv");
    let origin = edges_path.display().to_string();
    for (i, line) in read(&edges_path)?.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |f: &str| Error::parse(&origin, i + 1, f, line);
        if cols.len() != 4 {
            return Err(bad("columns"));
        }
        let a: usize = cols[0].parse().map_err(|_| bad("a"))?;
        let b: usize = cols[1].parse().map_err(|_| bad("b"))?;
        let etype = EdgeType::parse(cols[2]).ok_or_else(|| bad("etype"))?;
        let weight: f64 = cols[3].parse().map_err(|_| bad("weight"))?;
        let (ka, kb) = (
            keys.get(a).ok_or_else(|| bad("a"))?,
            keys.get(b).ok_or_else(|| bad("b"))?,
        );
        g.add_edge(ka, kb, etype, weight);
    }

    let aliases_path = dir.join("aliases.tsv");
    if aliases_path.exists() {
        for line in read(&aliases_path)?.lines() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() == 4 {
                g.aliases.insert(
                    PairKey {
                        subject: cols[0].into(),
                        np: cols[1].into(),
                    },
                    PairKey {
                        subject: cols[2].into(),
                        np: cols[3].into(),
                    },
                );
            }
        }
    }
    Ok(g)
}
