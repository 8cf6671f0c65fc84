//! HDBSCAN: core distances, mutual-reachability minimum spanning tree,
//! single-linkage hierarchy, condensed tree and excess-of-mass selection.
//!
//! Ties are broken by lower point index everywhere (Prim's vertex choice and
//! the edge sort), so results are deterministic for a given input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::Distances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbourhood size for core distances, counting the point itself.
    pub min_samples: usize,
}

/// Distance used in place of exact zeros when converting to `lambda = 1/d`.
const MIN_DISTANCE: f64 = 1e-12;

/// Distance to the `min_samples`-th nearest point, the point itself included.
pub fn core_distances<D: Distances>(d: &D, min_samples: usize) -> Vec<f64> {
    let n = d.len();
    let k = min_samples.clamp(1, n.max(1));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| d.dist(i, j)).collect();
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm on the complete mutual-reachability graph.
pub fn mutual_reachability_mst<D: Distances>(d: &D, core: &[f64]) -> Vec<Edge> {
    let n = d.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| {
                let mr = d.dist(current, j).max(core[current]).max(core[j]);
                (j, mr)
            })
            .collect();
        for (j, mr) in updates {
            if mr < best[j] {
                best[j] = mr;
                from[j] = current;
            }
        }
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&x, &y| best[x].total_cmp(&best[y]).then(x.cmp(&y)))
            .unwrap();
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next].min(next),
            b: from[next].max(next),
            weight: best[next],
        });
        current = next;
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage dendrogram; merge `k` creates node `n + k`.
fn single_linkage(n: usize, mut edges: Vec<Edge>) -> Vec<Merge> {
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    let mut uf = UnionFind::new(2 * n);
    let mut size = vec![1usize; 2 * n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (k, e) in edges.iter().enumerate() {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let node = n + k;
        let (left, right) = (ra.min(rb), ra.max(rb));
        size[node] = size[ra] + size[rb];
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        merges.push(Merge {
            left,
            right,
            distance: e.weight,
            size: size[node],
        });
    }
    merges
}

/// One edge of the condensed tree: `child` (a point `< n` or a cluster
/// label `>= n`) leaves `parent` at density `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub size: usize,
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let root = 2 * n - 2;
    let node_size = |x: usize| if x < n { 1 } else { merges[x - n].size };
    let leaves_under = |x: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            if y < n {
                out.push(y);
            } else {
                stack.push(merges[y - n].right);
                stack.push(merges[y - n].left);
            }
        }
        out
    };

    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut result = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let m = merges[node - n];
        let lambda = 1.0 / m.distance.max(MIN_DISTANCE);
        let parent = relabel[node];
        let (ls, rs) = (node_size(m.left), node_size(m.right));
        let big_left = ls >= min_cluster_size;
        let big_right = rs >= min_cluster_size;
        match (big_left, big_right) {
            (true, true) => {
                for (child, size) in [(m.left, ls), (m.right, rs)] {
                    relabel[child] = next_label;
                    result.push(CondensedEdge {
                        parent,
                        child: next_label,
                        lambda,
                        size,
                    });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                for child in [m.left, m.right] {
                    for p in leaves_under(child) {
                        result.push(CondensedEdge {
                            parent,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                }
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if big_left {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                relabel[keep] = parent;
                queue.push_back(keep);
                for p in leaves_under(drop) {
                    result.push(CondensedEdge {
                        parent,
                        child: p,
                        lambda,
                        size: 1,
                    });
                }
            }
        }
    }
    result
}

/// Excess-of-mass selection; the root is never selected.
fn select_clusters(n: usize, tree: &[CondensedEdge]) -> Vec<usize> {
    let Some(max_label) = tree.iter().map(|e| e.parent.max(e.child)).max() else {
        return Vec::new();
    };
    if max_label < n {
        return Vec::new();
    }
    let n_clusters = max_label - n + 1;
    let mut birth = vec![0.0; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree.iter().filter(|e| e.child >= n) {
        birth[e.child - n] = e.lambda;
        children[e.parent - n].push(e.child);
    }
    let mut stability = vec![0.0; n_clusters];
    for e in tree {
        stability[e.parent - n] += (e.lambda - birth[e.parent - n]) * e.size as f64;
    }
    let mut selected = vec![true; n_clusters];
    selected[0] = false;
    for c in (n + 1..=max_label).rev() {
        let sub: f64 = children[c - n].iter().map(|&ch| stability[ch - n]).sum();
        if sub > stability[c - n] {
            selected[c - n] = false;
            stability[c - n] = sub;
        } else {
            let mut stack = children[c - n].clone();
            while let Some(d) = stack.pop() {
                selected[d - n] = false;
                stack.extend(children[d - n].iter().copied());
            }
        }
    }
    (n + 1..=max_label).filter(|&c| selected[c - n]).collect()
}

/// Cluster label per point (`None` = noise); labels contiguous from 0 in
/// order of the selected condensed-tree clusters.
pub fn hdbscan<D: Distances>(d: &D, params: &HdbscanParams) -> Vec<Option<usize>> {
    let n = d.len();
    let mcs = params.min_cluster_size.max(2);
    if n < mcs || n < 2 {
        if n > 0 {
            log::warn!("{n} points is fewer than min_cluster_size {mcs}; all noise");
        }
        return vec![None; n];
    }
    let core = core_distances(d, params.min_samples);
    let mst = mutual_reachability_mst(d, &core);
    let merges = single_linkage(n, mst);
    let tree = condense(n, &merges, mcs);
    let chosen = select_clusters(n, &tree);

    let mut parent_of = vec![usize::MAX; n + tree.len() + 1];
    for e in &tree {
        if e.child < parent_of.len() {
            parent_of[e.child] = e.parent;
        }
    }
    let label_of = |c: usize| chosen.binary_search(&c).ok();
    (0..n)
        .map(|p| {
            let mut c = parent_of[p];
            while c != usize::MAX {
                if let Some(l) = label_of(c) {
                    return Some(l);
                }
                c = parent_of[c];
            }
            None
        })
        .collect()
}
