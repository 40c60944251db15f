//! Syndrome extraction and exact minimum-weight perfect-matching decoding.
//!
//! Anyons are paired over a sparse graph built by breadth-first search on the
//! plaquette-adjacency graph (two plaquettes are adjacent iff they share a
//! spin; every hop costs one flip). Each anyon is connected to at least its
//! `k` nearest neighbours, including the whole final distance shell so the
//! graph does not depend on traversal order. The pairing itself is an exact
//! blossom matching; if the sparse graph happens to admit no perfect
//! matching, `k` is doubled until the graph is complete.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::StabilizerCode;

pub mod blossom;

/// Plaquettes holding an anyon (odd number of flipped spins on the support).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syndrome {
    pub anyons: Vec<usize>,
}

/// One candidate pairing edge: node indices into `MatchGraph::nodes`, the
/// torus graph distance in flips, and one shortest spin path realizing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchEdge {
    pub i: usize,
    pub j: usize,
    pub weight: usize,
    pub path: Vec<usize>,
}

/// Sparse anyon-pairing graph. `nodes[i]` is the plaquette id of anyon `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<MatchEdge>,
}

/// Spin set whose flips annihilate all anyons of the decoded syndrome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub spins: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    /// Number of nearest anyons each anyon is connected to.
    pub k: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { k: 10 }
    }
}

pub fn extract_syndrome(code: &StabilizerCode, error: &[bool]) -> Syndrome {
    assert_eq!(error.len(), code.num_spins, "error vector length mismatch");
    let mut parity = vec![false; code.plaquettes.len()];
    for (spin, &flipped) in error.iter().enumerate() {
        if flipped {
            for &p in &code.spin_to_plaquettes[spin] {
                parity[p] = !parity[p];
            }
        }
    }
    let anyons = (0..parity.len()).filter(|&p| parity[p]).collect();
    Syndrome { anyons }
}

/// Adjacency lists of the plaquette graph: for each plaquette, the
/// `(neighbour, shared spin)` pairs in support order. Self-loops (a spin with
/// both endpoints on the same plaquette cannot occur on these codes) are
/// skipped defensively.
fn plaquette_adjacency(code: &StabilizerCode) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); code.plaquettes.len()];
    for (p, plaq) in code.plaquettes.iter().enumerate() {
        for &spin in &plaq.support {
            let [a, b] = code.spin_to_plaquettes[spin];
            let other = if a == p { b } else { a };
            if other != p {
                adj[p].push((other, spin));
            }
        }
    }
    adj
}

/// Breadth-first search from `source` until at least `k` target anyons have
/// been reached, finishing the whole distance shell of the k-th hit. Returns
/// `(target plaquette, distance, spin path)` for each anyon found.
fn bfs_targets(
    adj: &[Vec<(usize, usize)>],
    is_anyon: &[bool],
    source: usize,
    k: usize,
) -> Vec<(usize, usize, Vec<usize>)> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![(usize::MAX, usize::MAX); n]; // (plaquette, spin)
    dist[source] = 0;
    let mut frontier = vec![source];
    let mut found: Vec<usize> = Vec::new();
    let mut d = 0;
    while !frontier.is_empty() && found.len() < k {
        d += 1;
        let mut next = Vec::new();
        for &p in &frontier {
            for &(q, spin) in &adj[p] {
                if dist[q] == usize::MAX {
                    dist[q] = d;
                    parent[q] = (p, spin);
                    if is_anyon[q] {
                        found.push(q);
                    }
                    next.push(q);
                }
            }
        }
        frontier = next;
    }
    found
        .into_iter()
        .map(|t| {
            let mut path = Vec::with_capacity(dist[t]);
            let mut cur = t;
            while cur != source {
                let (prev, spin) = parent[cur];
                path.push(spin);
                cur = prev;
            }
            path.reverse();
            (t, dist[t], path)
        })
        .collect()
}

pub fn knn_graph(code: &StabilizerCode, syndrome: &Syndrome, k: usize) -> Result<MatchGraph> {
    if syndrome.anyons.len() % 2 != 0 {
        return Err(Error::OddSyndrome(syndrome.anyons.len()));
    }
    let nodes = syndrome.anyons.clone();
    let mut node_of = BTreeMap::new();
    for (i, &p) in nodes.iter().enumerate() {
        node_of.insert(p, i);
    }
    let mut is_anyon = vec![false; code.plaquettes.len()];
    for &p in &nodes {
        is_anyon[p] = true;
    }
    let adj = plaquette_adjacency(code);

    // Union of per-anyon findings, deduplicated on unordered node pairs. The
    // BTreeMap keeps the final edge list in lexicographic (i, j) order.
    let mut edges: BTreeMap<(usize, usize), (usize, Vec<usize>)> = BTreeMap::new();
    for (i, &p) in nodes.iter().enumerate() {
        for (target, weight, path) in bfs_targets(&adj, &is_anyon, p, k) {
            let j = node_of[&target];
            let key = (i.min(j), i.max(j));
            edges.entry(key).or_insert((weight, path));
        }
    }
    let edges = edges
        .into_iter()
        .map(|((i, j), (weight, path))| MatchEdge { i, j, weight, path })
        .collect();
    Ok(MatchGraph { nodes, edges })
}

/// Exact minimum-weight perfect matching. Returns matched node-index pairs
/// `(i, j)` with `i < j`, sorted, or an error if the graph has no perfect
/// matching.
pub fn mwpm(graph: &MatchGraph) -> Result<Vec<(usize, usize)>> {
    let n = graph.nodes.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n % 2 != 0 {
        return Err(Error::OddSyndrome(n));
    }
    // Minimum weight = maximum of (w_max + 1 − w); with all transformed
    // weights positive, a maximum-cardinality maximum-weight matching is a
    // minimum-weight perfect matching whenever one exists.
    let w_max = graph.edges.iter().map(|e| e.weight).max().unwrap_or(0) as i64;
    let edges: Vec<(usize, usize, i64)> = graph
        .edges
        .iter()
        .map(|e| (e.i, e.j, w_max + 1 - e.weight as i64))
        .collect();
    let mate = blossom::max_weight_matching(n, &edges, true);
    let mut pairs = Vec::with_capacity(n / 2);
    for (i, &m) in mate.iter().enumerate() {
        match m {
            None => return Err(Error::NoPerfectMatching),
            Some(j) if i < j => pairs.push((i, j)),
            Some(_) => {}
        }
    }
    Ok(pairs)
}

pub fn decode(code: &StabilizerCode, syndrome: &Syndrome, config: &DecoderConfig) -> Result<Correction> {
    if syndrome.anyons.is_empty() {
        return Ok(Correction { spins: Vec::new() });
    }
    let m = syndrome.anyons.len();
    let complete = m - 1;
    let mut k = config.k.max(1).min(complete.max(1));
    loop {
        let graph = knn_graph(code, syndrome, k)?;
        match mwpm(&graph) {
            Ok(pairs) => {
                let mut by_pair = BTreeMap::new();
                for e in &graph.edges {
                    by_pair.insert((e.i, e.j), &e.path);
                }
                let mut flip = vec![false; code.num_spins];
                for (i, j) in pairs {
                    for &spin in by_pair[&(i, j)] {
                        flip[spin] = !flip[spin];
                    }
                }
                let spins = (0..code.num_spins).filter(|&s| flip[s]).collect();
                return Ok(Correction { spins });
            }
            Err(Error::NoPerfectMatching) if k < complete => {
                k = (2 * k).min(complete);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Z-logical parities of a residual error: `z_i = (−1)^{|residual ∩ Z_i|}`.
pub fn logical_parities(code: &StabilizerCode, residual: &[bool]) -> (i32, i32) {
    assert_eq!(residual.len(), code.num_spins, "residual length mismatch");
    let parity = |support: &[usize]| -> i32 {
        let odd = support.iter().filter(|&&s| residual[s]).count() % 2 == 1;
        if odd {
            -1
        } else {
            1
        }
    };
    (parity(&code.logicals.z1), parity(&code.logicals.z2))
}
