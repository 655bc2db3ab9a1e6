//! Enumeration of the decorated graphs indexing the torus-fixed strata:
//! free trees up to isomorphism, moment-graph colorings up to tree
//! automorphism, bounded edge weightings, and exhaustive markings.
//!
//! Colorings are deduplicated up to `Aut(tree)` and carry the order `aut_c`
//! of their stabilizer; weightings and markings are enumerated exhaustively.
//! Dividing each term by `aut_c * prod w(e)` then reproduces the sum over
//! fully deduplicated decorated graphs weighted by `1/a_Gamma`, by
//! orbit-stabilizer.

use crate::cycles::{self, CurveClass, DivisorClass, MomentGraph};
use crate::error::Result;
use crate::fan::Fan;

/// A free tree on vertices `0..vertex_count`, stored by its edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Tree {
    fn single_edge() -> Tree {
        Tree {
            vertex_count: 2,
            edges: vec![(0, 1)],
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// AHU-style canonical form of the free tree: rooted at the center, or at
    /// a virtual root joining the two halves of a bicentral tree.
    pub fn canonical_code(&self) -> String {
        let adj = self.adjacency();
        let centers = centers(&adj);
        match centers.as_slice() {
            [c] => rooted_code(&adj, *c, usize::MAX),
            [c1, c2] => {
                let a = rooted_code(&adj, *c1, *c2);
                let b = rooted_code(&adj, *c2, *c1);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                format!("({lo}{hi})")
            }
            _ => unreachable!("a tree has one or two centers"),
        }
    }

    /// All automorphisms, as permutation vectors, by brute-force filtering.
    /// Trees here never exceed a handful of vertices.
    pub fn automorphisms(&self) -> Vec<Vec<usize>> {
        let mut edge_set: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        edge_set.sort_unstable();
        let mut out = Vec::new();
        let mut perm: Vec<usize> = (0..self.vertex_count).collect();
        permute(&mut perm, 0, &mut |p| {
            let mut mapped: Vec<(usize, usize)> = self
                .edges
                .iter()
                .map(|&(u, v)| {
                    let (a, b) = (p[u], p[v]);
                    (a.min(b), a.max(b))
                })
                .collect();
            mapped.sort_unstable();
            if mapped == edge_set {
                out.push(p.to_vec());
            }
        });
        out
    }

    /// BFS order from vertex 0 together with each vertex's parent; the
    /// colored prefix along this order stays connected.
    fn bfs_order(&self) -> Vec<(usize, Option<usize>)> {
        let adj = self.adjacency();
        let mut order = vec![(0, None)];
        let mut seen = vec![false; self.vertex_count];
        seen[0] = true;
        let mut head = 0;
        while head < order.len() {
            let (v, _) = order[head];
            head += 1;
            for &nb in &adj[v] {
                if !seen[nb] {
                    seen[nb] = true;
                    order.push((nb, Some(v)));
                }
            }
        }
        order
    }
}

fn permute<F: FnMut(&[usize])>(perm: &mut Vec<usize>, k: usize, f: &mut F) {
    if k == perm.len() {
        f(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, f);
        perm.swap(k, i);
    }
}

fn centers(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    if n == 1 {
        return vec![0];
    }
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut layer: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut remaining = n;
    while remaining > 2 {
        remaining -= layer.len();
        let mut next = Vec::new();
        for &v in &layer {
            degree[v] = 0;
            for &nb in &adj[v] {
                if degree[nb] > 0 {
                    degree[nb] -= 1;
                    if degree[nb] == 1 {
                        next.push(nb);
                    }
                }
            }
        }
        layer = next;
    }
    layer
}

fn rooted_code(adj: &[Vec<usize>], v: usize, parent: usize) -> String {
    let mut child_codes: Vec<String> = adj[v]
        .iter()
        .filter(|&&c| c != parent)
        .map(|&c| rooted_code(adj, c, v))
        .collect();
    child_codes.sort();
    format!("({})", child_codes.concat())
}

/// One representative per isomorphism class of trees with `1..=max_edges`
/// edges, in deterministic order (by edge count, then canonical code).
///
/// Generation extends each smaller tree by a leaf at every vertex and
/// deduplicates by canonical form; an independent Pruefer-sequence oracle
/// checks the counts in the tests.
pub fn free_trees(max_edges: usize) -> Vec<Tree> {
    assert!(max_edges >= 1);
    let mut out = Vec::new();
    let mut level = vec![Tree::single_edge()];
    out.extend(level.clone());
    for _ in 1..max_edges {
        let mut next: Vec<(String, Tree)> = Vec::new();
        for tree in &level {
            for attach in 0..tree.vertex_count {
                let mut edges = tree.edges.clone();
                edges.push((attach, tree.vertex_count));
                let cand = Tree {
                    vertex_count: tree.vertex_count + 1,
                    edges,
                };
                let code = cand.canonical_code();
                if !next.iter().any(|(c, _)| *c == code) {
                    next.push((code, cand));
                }
            }
        }
        next.sort_by(|a, b| a.0.cmp(&b.0));
        level = next.into_iter().map(|(_, t)| t).collect();
        out.extend(level.clone());
    }
    out
}

/// Valid colorings of a tree by maximal cones (adjacent vertices get
/// moment-graph-adjacent cones), one representative per orbit of
/// `Aut(tree)`, with the stabilizer order `aut_c`.
pub fn colorings(tree: &Tree, mg: &MomentGraph) -> Vec<(Vec<usize>, u64)> {
    let auts = tree.automorphisms();
    colorings_with_auts(tree, mg, &auts)
}

pub fn colorings_with_auts(
    tree: &Tree,
    mg: &MomentGraph,
    auts: &[Vec<usize>],
) -> Vec<(Vec<usize>, u64)> {
    let order = tree.bfs_order();
    let mut out = Vec::new();
    let mut coloring = vec![usize::MAX; tree.vertex_count];
    backtrack(tree, mg, &order, 0, &mut coloring, auts, &mut out);
    out
}

fn backtrack(
    tree: &Tree,
    mg: &MomentGraph,
    order: &[(usize, Option<usize>)],
    depth: usize,
    coloring: &mut Vec<usize>,
    auts: &[Vec<usize>],
    out: &mut Vec<(Vec<usize>, u64)>,
) {
    if depth == order.len() {
        // Keep only the lexicographically smallest coloring of its orbit.
        let mut aut_c = 0u64;
        for p in auts {
            let mapped: Vec<usize> = (0..coloring.len()).map(|v| coloring[p[v]]).collect();
            if mapped < *coloring {
                return;
            }
            if mapped == *coloring {
                aut_c += 1;
            }
        }
        out.push((coloring.clone(), aut_c));
        return;
    }
    let (v, parent) = order[depth];
    match parent {
        None => {
            for color in 0..mg.cone_count() {
                coloring[v] = color;
                backtrack(tree, mg, order, depth + 1, coloring, auts, out);
            }
        }
        Some(par) => {
            let pc = coloring[par];
            for color in 0..mg.cone_count() {
                if mg.are_adjacent(pc, color) {
                    coloring[v] = color;
                    backtrack(tree, mg, order, depth + 1, coloring, auts, out);
                }
            }
        }
    }
    coloring[v] = usize::MAX;
}

/// Every weight function `w` with `1 <= w(e) <= b_e` and
/// `sum_e w(e) * C_e = beta` exactly, where `b_e` is the largest weight the
/// remaining edges (at weight 1) leave room for against the nef generators.
pub fn edge_weightings(
    tree: &Tree,
    coloring: &[usize],
    beta: &CurveClass,
    nef: &[DivisorClass],
    mg: &MomentGraph,
) -> Result<Vec<Vec<u64>>> {
    let classes: Vec<&CurveClass> = tree
        .edges
        .iter()
        .map(|&(u, v)| mg.get(coloring[u], coloring[v]).map(|(_, c)| c))
        .collect::<Result<_>>()?;
    let pairings: Vec<Vec<i64>> = nef
        .iter()
        .map(|m| {
            classes
                .iter()
                .map(|c| cycles::pair(m, c))
                .collect::<Result<Vec<i64>>>()
        })
        .collect::<Result<_>>()?;
    let budget: Vec<i64> = nef
        .iter()
        .map(|m| cycles::pair(m, beta))
        .collect::<Result<_>>()?;

    let ne = tree.edges.len();
    let mut bounds = vec![0i64; ne];
    for e in 0..ne {
        let mut bound = i64::MAX;
        for (i, row) in pairings.iter().enumerate() {
            // Room left for this edge once every other edge takes weight 1.
            let avail = budget[i] - (row.iter().sum::<i64>() - row[e]);
            debug_assert!(row[e] >= 0, "wall classes are effective");
            if row[e] > 0 {
                bound = bound.min(avail.div_euclid(row[e]));
            } else if avail < 0 {
                bound = 0;
            }
        }
        if bound < 1 {
            return Ok(Vec::new());
        }
        debug_assert!(bound < i64::MAX, "some nef generator is positive on each wall");
        bounds[e] = bound;
    }

    let mut out = Vec::new();
    let mut w = vec![1u64; ne];
    loop {
        let matches = (0..beta.0.len()).all(|j| {
            let total: i64 = w
                .iter()
                .zip(&classes)
                .map(|(&wi, c)| wi as i64 * c.0[j])
                .sum();
            total == beta.0[j]
        });
        if matches {
            out.push(w.clone());
        }
        // Odometer over the bounded ranges.
        let mut i = 0;
        loop {
            if i == ne {
                return Ok(out);
            }
            if (w[i] as i64) < bounds[i] {
                w[i] += 1;
                break;
            }
            w[i] = 1;
            i += 1;
        }
    }
}

/// All `|V|^m` markings (the single empty marking when `m = 0`).
pub fn markings(vertex_count: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    loop {
        out.push(cur.clone());
        let mut i = 0;
        loop {
            if i == m {
                return out;
            }
            if cur[i] + 1 < vertex_count {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}

/// A decorated graph: one torus-fixed stratum of the moduli space.
#[derive(Debug, Clone)]
pub struct DecoratedGraph {
    pub tree: Tree,
    pub coloring: Vec<usize>,
    pub weights: Vec<u64>,
    pub marking: Vec<usize>,
    pub aut_c: u64,
}

/// The four nested loops: trees with at most `max_edges(beta)` edges, coloring
/// orbits, exhaustive weightings and markings.
pub fn decorated_graphs(
    fan: &Fan,
    beta: &CurveClass,
    m: usize,
) -> Result<Vec<DecoratedGraph>> {
    let nef = cycles::nef_generators(fan)?;
    let mg = cycles::moment_graph(fan);
    let p = cycles::max_edges(beta, &nef)?;
    let mut out = Vec::new();
    for tree in free_trees(p) {
        for (coloring, aut_c) in colorings(&tree, &mg) {
            for weights in edge_weightings(&tree, &coloring, beta, &nef, &mg)? {
                for marking in markings(tree.vertex_count, m) {
                    out.push(DecoratedGraph {
                        tree: tree.clone(),
                        coloring: coloring.clone(),
                        weights: weights.clone(),
                        marking,
                        aut_c,
                    });
                }
            }
        }
    }
    Ok(out)
}
