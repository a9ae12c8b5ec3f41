//! Unweighted, undirected network of minima: one node per minimum, one edge
//! per pair of minima linked by at least one transition state.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::landscape::LandscapeDatabase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaGraph {
    /// Minimum ids, ascending. Node `k` of `adjacency` is `nodes[k]`.
    pub nodes: Vec<usize>,
    /// Edges as `(a, b)` with `a < b`, sorted and deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// Neighbour positions (indices into `nodes`), ascending.
    pub adjacency: Vec<Vec<usize>>,
}

impl MinimaGraph {
    /// Graph on nodes `0..n` with the given edges. Self-loops and repeated
    /// edges are dropped.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut list: Vec<(usize, usize)> =
            edges.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
        list.sort_unstable();
        list.dedup();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &list {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nb in &mut adjacency {
            nb.sort_unstable();
        }
        Self { nodes: (0..n).collect(), edges: list, adjacency }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn degree(&self, k: usize) -> usize {
        self.adjacency[k].len()
    }

    /// Hop distances from node position `src`; `None` for unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components as sorted lists of node positions, ordered by
    /// their smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_nodes()];
        let mut out = Vec::new();
        for s in 0..self.n_nodes() {
            if seen[s] {
                continue;
            }
            let mut comp: Vec<usize> =
                self.bfs(s).iter().enumerate().filter_map(|(v, d)| d.map(|_| v)).collect();
            comp.sort_unstable();
            for &v in &comp {
                seen[v] = true;
            }
            out.push(comp);
        }
        out
    }

    /// DOT text with nodes in id order and a `degree` attribute per node.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph minima {\n");
        for (k, id) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "  {id} [degree={}];", self.degree(k));
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  {} -- {};", self.nodes[a], self.nodes[b]);
        }
        s.push_str("}\n");
        s
    }
}

pub fn build_graph(db: &LandscapeDatabase) -> MinimaGraph {
    MinimaGraph::from_edges(db.minima.len(), db.transition_states.iter().map(|t| t.min_pair))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub avg_degree: f64,
    /// Mean hop distance over connected pairs; `None` when no pair is connected.
    pub avg_shortest_path: Option<f64>,
    /// Longest hop distance over connected pairs; `None` when no pair is connected.
    pub diameter: Option<usize>,
    /// 3 × triangles / connected triples.
    pub global_clustering: f64,
    /// Mean of the local coefficients, nodes of degree < 2 counting zero.
    pub mean_local_clustering: f64,
    /// `degree_histogram[k]` = number of nodes of degree `k`.
    pub degree_histogram: Vec<usize>,
    pub n_components: usize,
}

pub fn graph_stats(g: &MinimaGraph) -> GraphStats {
    let n = g.n_nodes();
    let avg_degree = if n == 0 { 0.0 } else { 2.0 * g.edges.len() as f64 / n as f64 };

    let mut path_sum = 0usize;
    let mut pairs = 0usize;
    let mut diameter = 0usize;
    for s in 0..n {
        for d in g.bfs(s).into_iter().skip(s + 1).flatten() {
            path_sum += d;
            pairs += 1;
            diameter = diameter.max(d);
        }
    }

    let mut triangles_x3 = 0usize;
    let mut triples = 0usize;
    let mut local_sum = 0.0;
    for u in 0..n {
        let nb = &g.adjacency[u];
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if g.adjacency[a].binary_search(&b).is_ok() {
                    links += 1;
                }
            }
        }
        let possible = k * (k - 1) / 2;
        triangles_x3 += links;
        triples += possible;
        local_sum += links as f64 / possible as f64;
    }

    let max_deg = (0..n).map(|k| g.degree(k)).max().unwrap_or(0);
    let mut degree_histogram = vec![0; if n == 0 { 0 } else { max_deg + 1 }];
    for k in 0..n {
        degree_histogram[g.degree(k)] += 1;
    }

    GraphStats {
        n_nodes: n,
        n_edges: g.edges.len(),
        avg_degree,
        avg_shortest_path: (pairs > 0).then(|| path_sum as f64 / pairs as f64),
        diameter: (pairs > 0).then_some(diameter),
        global_clustering: if triples == 0 { 0.0 } else { triangles_x3 as f64 / triples as f64 },
        mean_local_clustering: if n == 0 { 0.0 } else { local_sum / n as f64 },
        degree_histogram,
        n_components: g.components().len(),
    }
}

pub fn export_dot(g: &MinimaGraph, path: &Path) -> Result<()> {
    fs::write(path, g.to_dot())?;
    Ok(())
}
