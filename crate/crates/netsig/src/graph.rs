//! Immutable simple undirected graphs with optional node names and 2-D coordinates.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Simple undirected graph. No self-loops, no duplicate edges, nodes indexed
/// densely `0..n`. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(u32, u32)>,
    adj: Vec<Vec<u32>>,
    degrees: Vec<u32>,
    names: Option<Vec<String>>,
    coords: Option<Vec<[f64; 2]>>,
}

/// Outcome of parsing an edge-list file: the graph plus counts of dropped lines.
#[derive(Debug)]
pub struct EdgeListLoad {
    pub graph: Graph,
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

impl Graph {
    /// Build a graph from untagged edges. Rejects self-loops, duplicates and
    /// out-of-range endpoints; use [`load_edge_list`] for forgiving input.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Graph> {
        let mut adj = vec![Vec::new(); n];
        let mut normalized: Vec<(u32, u32)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::usage(format!("self-loop on node {a}")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::usage(format!("edge ({a},{b}) out of range for n={n}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            normalized.push((i, j));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::usage("duplicate edge"));
        }
        for &(i, j) in &normalized {
            adj[i as usize].push(j);
            adj[j as usize].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let degrees = adj.iter().map(|l| l.len() as u32).collect();
        Ok(Graph {
            n,
            edges: normalized,
            adj,
            degrees,
            names: None,
            coords: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as (i, j) pairs with i < j, lexicographically sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Degree vector k; sum(k) = 2E.
    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&(j as u32)).is_ok()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// Nodes with degree zero. They are kept in the graph; null-model fits
    /// decide how to treat them.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degrees[i] == 0).collect()
    }

    /// Display name of a node: its string id if present, its index otherwise.
    pub fn node_name(&self, i: usize) -> String {
        match &self.names {
            Some(names) => names[i].clone(),
            None => i.to_string(),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Graph> {
        if names.len() != self.n {
            return Err(Error::usage(format!(
                "expected {} names, got {}",
                self.n,
                names.len()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Graph> {
        if coords.len() != self.n {
            return Err(Error::usage(format!(
                "expected {} coordinate pairs, got {}",
                self.n,
                coords.len()
            )));
        }
        self.coords = Some(coords);
        Ok(self)
    }
}

/// Parse whitespace-separated edge pairs. Node ids may be integers or strings;
/// they are re-indexed densely in first-seen order. Blank lines and `#`
/// comments are skipped; duplicate edges and self-loops are dropped and
/// counted. A `# node: ID` comment (as written by [`write_edge_list`])
/// declares a node up front, which pins the node order and keeps isolated
/// nodes through a round trip.
pub fn load_edge_list(reader: impl BufRead) -> Result<EdgeListLoad> {
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut duplicate_edges = 0;
    let mut self_loops = 0;

    let intern = |tok: &str, names: &mut Vec<String>, index: &mut HashMap<String, u32>| {
        *index.entry(tok.to_string()).or_insert_with(|| {
            names.push(tok.to_string());
            (names.len() - 1) as u32
        })
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(id) = rest.trim().strip_prefix("node:") {
                let id = id.trim();
                if !id.is_empty() {
                    intern(id, &mut names, &mut index);
                }
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 2 tokens, found {}", tokens.len()),
            });
        }
        let a = intern(tokens[0], &mut names, &mut index);
        let b = intern(tokens[1], &mut names, &mut index);
        if a == b {
            self_loops += 1;
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if seen.insert(key) {
            edges.push(key);
        } else {
            duplicate_edges += 1;
        }
    }

    let n = names.len();
    let graph = Graph::new(n, edges)?.with_names(names)?;
    Ok(EdgeListLoad {
        graph,
        duplicate_edges,
        self_loops,
    })
}

/// Write a graph in the edge-list format accepted by [`load_edge_list`].
/// Every node is declared up front, so a round trip reproduces the node
/// count, node order and edge set exactly, isolated nodes included.
pub fn write_edge_list(g: &Graph, mut w: impl Write) -> std::io::Result<()> {
    for i in 0..g.node_count() {
        writeln!(w, "# node: {}", g.node_name(i))?;
    }
    for &(i, j) in g.edges() {
        writeln!(w, "{} {}", g.node_name(i as usize), g.node_name(j as usize))?;
    }
    Ok(())
}

/// Parse a coordinates CSV `id,x,y` (header optional) and return positions
/// aligned with the graph's node indices. Every node must appear exactly once.
pub fn load_coords_csv(text: &str, g: &Graph) -> Result<Vec<[f64; 2]>> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    let owned_names: Vec<String>;
    match g.names() {
        Some(names) => {
            for (i, name) in names.iter().enumerate() {
                by_name.insert(name.as_str(), i);
            }
        }
        None => {
            owned_names = (0..g.node_count()).map(|i| i.to_string()).collect();
            for (i, name) in owned_names.iter().enumerate() {
                by_name.insert(name.as_str(), i);
            }
        }
    }

    let mut coords = vec![None; g.node_count()];
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 comma-separated fields, found {}", fields.len()),
            });
        }
        let x = fields[1].parse::<f64>();
        let y = fields[2].parse::<f64>();
        let (x, y) = match (x, y) {
            (Ok(x), Ok(y)) => (x, y),
            _ if lineno == 0 => continue, // header row
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "x, y must be numeric".into(),
                })
            }
        };
        let Some(&idx) = by_name.get(fields[0]) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("unknown node id {:?}", fields[0]),
            });
        };
        if coords[idx].replace([x, y]).is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("duplicate coordinates for node {:?}", fields[0]),
            });
        }
    }
    coords
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::usage(format!("no coordinates for node {}", g.node_name(i)))))
        .collect()
}

/// Symmetric matrix of pairwise Euclidean distances, zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<S> {
    n: usize,
    d: Vec<S>,
}

impl<S: Scalar> DistanceMatrix<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.d[i * self.n + j]
    }

    pub fn max_distance(&self) -> S {
        self.d.iter().copied().fold(S::zero(), S::max)
    }
}

/// Pairwise Euclidean distances from the graph's coordinates.
pub fn distance_matrix<S: Scalar>(g: &Graph) -> Result<DistanceMatrix<S>> {
    let coords = g
        .coords()
        .ok_or_else(|| Error::usage("graph has no coordinates"))?;
    let n = g.node_count();
    let mut d = vec![S::zero(); n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let dist = S::cast((dx * dx + dy * dy).sqrt());
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    Ok(DistanceMatrix { n, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn load(text: &str) -> EdgeListLoad {
        load_edge_list(Cursor::new(text)).unwrap()
    }

    #[test]
    fn path_graph() {
        let out = load("0 1\n1 2\n");
        assert_eq!(out.graph.node_count(), 3);
        assert_eq!(out.graph.edge_count(), 2);
        assert_eq!(out.graph.degrees(), &[1, 2, 1]);
    }

    #[test]
    fn duplicates_and_self_loops_dropped() {
        let out = load("a b\nb a\na a\n");
        assert_eq!(out.graph.node_count(), 2);
        assert_eq!(out.graph.edge_count(), 1);
        assert_eq!(out.duplicate_edges, 1);
        assert_eq!(out.self_loops, 1);
    }

    #[test]
    fn karate_club_counts() {
        let out = load(crate::assets::KARATE_EDGES);
        assert_eq!(out.graph.node_count(), 34);
        assert_eq!(out.graph.edge_count(), 78);
        let degs = out.graph.degrees();
        assert_eq!(degs.iter().copied().max(), Some(17));
        assert_eq!(degs.iter().map(|&d| d as usize).sum::<usize>(), 156);
        // first-seen order puts node "1" at index 0
        assert_eq!(out.graph.degree(0), 16);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = load_edge_list(Cursor::new("0 1\n0 1 2\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let out = load("# a comment\n\n0 1\n");
        assert_eq!(out.graph.node_count(), 2);
        assert_eq!(out.graph.edge_count(), 1);
    }

    #[test]
    fn round_trip_preserves_isolated_nodes() {
        // node "c" appears only in a dropped self-loop and ends up isolated
        let out = load("a b\nc c\n");
        assert_eq!(out.graph.node_count(), 3);
        assert_eq!(out.graph.degree(2), 0);
        let mut buf = Vec::new();
        write_edge_list(&out.graph, &mut buf).unwrap();
        let back = load_edge_list(Cursor::new(buf)).unwrap().graph;
        assert_eq!(back.node_count(), 3);
        assert_eq!(back.edges(), out.graph.edges());
    }

    #[test]
    fn triangle_degrees() {
        let g = Graph::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(g.degrees(), &[2, 2, 2]);
        assert!(g.has_edge(0, 2));
        assert!(!g.has_edge(0, 0));
    }

    #[test]
    fn single_edge_on_three_nodes() {
        let g = Graph::new(3, [(0, 1)]).unwrap();
        assert_eq!(g.degrees(), &[1, 1, 0]);
        assert_eq!(g.isolated_nodes(), vec![2]);
    }

    #[test]
    fn distances() {
        let g = Graph::new(2, [(0, 1)])
            .unwrap()
            .with_coords(vec![[0.0, 0.0], [3.0, 4.0]])
            .unwrap();
        let d: DistanceMatrix<f64> = distance_matrix(&g).unwrap();
        assert!((d.get(0, 1) - 5.0).abs() < 1e-15);
        assert!((d.get(1, 0) - 5.0).abs() < 1e-15);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn identical_coords_give_zero_distance() {
        let g = Graph::new(2, [(0, 1)])
            .unwrap()
            .with_coords(vec![[1.0, 1.0], [1.0, 1.0]])
            .unwrap();
        let d: DistanceMatrix<f64> = distance_matrix(&g).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn missing_coords_is_usage_error() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert!(matches!(distance_matrix::<f64>(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn coords_csv_with_and_without_header() {
        let g = load("a b\n").graph;
        let with_header = "id,x,y\na,0.0,0.0\nb,1.0,0.0\n";
        let no_header = "a,0.0,0.0\nb,1.0,0.0\n";
        for text in [with_header, no_header] {
            let coords = load_coords_csv(text, &g).unwrap();
            assert_eq!(coords, vec![[0.0, 0.0], [1.0, 0.0]]);
        }
    }

    #[test]
    fn coords_csv_missing_node_fails() {
        let g = load("a b\n").graph;
        assert!(load_coords_csv("a,0,0\n", &g).is_err());
    }
}
