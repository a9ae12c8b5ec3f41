use serde::{Deserialize, Serialize};

use super::db::LandscapeDatabase;
use crate::error::{Error, Result};

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

fn partition_with<F: Fn(usize) -> bool>(db: &LandscapeDatabase, threshold: f64, active: F) -> Vec<Vec<usize>> {
    let n = db.minima.len();
    let mut uf = UnionFind::new(n);
    for ts in &db.transition_states {
        if ts.energy < threshold {
            uf.union(ts.min_pair.0, ts.min_pair.1);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for id in db.minima_by_energy() {
        if !active(id) {
            continue;
        }
        let r = uf.find(id);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(id);
    }
    groups
}

/// Minima grouped by mutual accessibility through transition states lying
/// strictly below `threshold`. Each set is ordered by (energy, id) and sets are
/// ordered by their lowest member.
pub fn superbasin_partition(db: &LandscapeDatabase, threshold: f64) -> Vec<Vec<usize>> {
    partition_with(db, threshold, |_| true)
}

/// Two components joined by one transition state during a sweep in
/// increasing energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub energy: f64,
    pub ts_id: usize,
    /// Lowest-energy minimum of each joined component.
    pub joined: (usize, usize),
}

/// Exact merge energies: Kruskal's sweep over transition states.
pub fn merge_events(db: &LandscapeDatabase) -> Vec<MergeEvent> {
    let mut order: Vec<usize> = (0..db.transition_states.len()).collect();
    order.sort_by(|&a, &b| {
        db.transition_states[a].energy.total_cmp(&db.transition_states[b].energy).then(a.cmp(&b))
    });
    let n = db.minima.len();
    let mut uf = UnionFind::new(n);
    let mut lowest: Vec<usize> = (0..n).collect();
    let better = |a: usize, b: usize| {
        if (db.minima[a].energy, a) <= (db.minima[b].energy, b) {
            a
        } else {
            b
        }
    };
    let mut out = Vec::new();
    for t in order {
        let ts = &db.transition_states[t];
        let (ra, rb) = (uf.find(ts.min_pair.0), uf.find(ts.min_pair.1));
        if ra == rb {
            continue;
        }
        let (la, lb) = (lowest[ra], lowest[rb]);
        uf.union(ra, rb);
        let r = uf.find(ra);
        lowest[r] = better(la, lb);
        out.push(MergeEvent { energy: ts.energy, ts_id: t, joined: (la.min(lb), la.max(lb)) });
    }
    out
}

/// Superbasin at one threshold level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Node ids follow the minimum ids, so leaves and nodes share one namespace.
    pub id: usize,
    pub level: usize,
    pub threshold: f64,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub min_id: usize,
    pub energy: f64,
    /// Node at the first level whose threshold exceeds the leaf energy.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisconnectivityTree {
    pub levels: Vec<f64>,
    pub nodes: Vec<TreeNode>,
    pub leaves: Vec<Leaf>,
    pub roots: Vec<usize>,
    /// More than one root: the database is not connected below the top level.
    pub is_forest: bool,
    pub merges: Vec<MergeEvent>,
}

/// Levels `e_min + k·delta_e` for k = 1, 2, … up to the first level above
/// `e_max`. At each level only minima below the threshold take part.
pub fn build_disconnectivity_tree(
    db: &LandscapeDatabase,
    e_min: f64,
    e_max: f64,
    delta_e: f64,
) -> Result<DisconnectivityTree> {
    if !(delta_e > 0.0) || !(e_max >= e_min) || !e_min.is_finite() || !e_max.is_finite() {
        return Err(Error::Precondition(format!(
            "need delta_e > 0 and e_max ≥ e_min, got delta_e={delta_e}, range [{e_min}, {e_max}]"
        )));
    }
    let n_levels = ((e_max - e_min) / delta_e).floor() as usize + 1;
    if n_levels > 100_000 {
        return Err(Error::Precondition(format!("{n_levels} levels requested; increase delta_e")));
    }
    let levels: Vec<f64> = (1..=n_levels).map(|k| e_min + k as f64 * delta_e).collect();
    let n_min = db.minima.len();
    let mut nodes: Vec<TreeNode> = Vec::new();
    // Node id of each minimum at the previous level.
    let mut prev_owner: Vec<Option<usize>> = vec![None; n_min];
    let mut leaf_parent: Vec<Option<usize>> = vec![None; n_min];
    for (level, &t) in levels.iter().enumerate() {
        let groups = partition_with(db, t, |id| db.minima[id].energy < t);
        let mut owner = vec![None; n_min];
        for members in groups {
            let id = n_min + nodes.len();
            for &m in &members {
                owner[m] = Some(id);
                if leaf_parent[m].is_none() {
                    leaf_parent[m] = Some(id);
                }
            }
            nodes.push(TreeNode { id, level, threshold: t, members, parent: None });
        }
        for m in 0..n_min {
            if let (Some(child), Some(parent)) = (prev_owner[m], owner[m]) {
                nodes[child - n_min].parent = Some(parent);
            }
        }
        prev_owner = owner;
    }
    let mut roots: Vec<usize> = nodes.iter().filter(|n| n.level + 1 == n_levels).map(|n| n.id).collect();
    // Minima above the top level are isolated roots of their own.
    roots.extend((0..n_min).filter(|&m| leaf_parent[m].is_none()));
    let leaves = (0..n_min)
        .map(|m| Leaf { min_id: m, energy: db.minima[m].energy, parent: leaf_parent[m] })
        .collect();
    Ok(DisconnectivityTree { levels, nodes, leaves, is_forest: roots.len() > 1, roots, merges: merge_events(db) })
}

impl DisconnectivityTree {
    /// Default range: lowest minimum to highest stationary point, 50 levels.
    pub fn default_range(db: &LandscapeDatabase) -> Option<(f64, f64, f64)> {
        let lo = db.minima.iter().map(|m| m.energy).fold(f64::INFINITY, f64::min);
        let hi = db
            .transition_states
            .iter()
            .map(|t| t.energy)
            .chain(db.minima.iter().map(|m| m.energy))
            .fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            return None;
        }
        let delta = if hi > lo { (hi - lo) / 50.0 } else { 1.0 };
        Some((lo, hi, delta))
    }

    /// `level parent_id child_id` lines, one per tree edge (leaf edges use the
    /// minimum id as child).
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            if let Some(p) = n.parent {
                s.push_str(&format!("{} {} {}\n", n.level + 1, p, n.id));
            }
        }
        for l in &self.leaves {
            if let Some(p) = l.parent {
                let level = self.nodes.iter().find(|n| n.id == p).map_or(0, |n| n.level);
                s.push_str(&format!("{} {} {}\n", level, p, l.min_id));
            }
        }
        s
    }

    /// `id energy` per leaf.
    pub fn leaf_table(&self) -> String {
        self.leaves.iter().map(|l| format!("{} {:.17e}\n", l.min_id, l.energy)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Metric, ParamVector};

    /// Minima A(0), B(0.5), C(0.9); TS AB at 1.0, BC at 2.0.
    pub(crate) fn toy() -> LandscapeDatabase {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        for (e, x) in [(0.0, 0.0), (0.5, 1.0), (0.9, 2.0)] {
            db.add_minimum(e, &ParamVector::from_element(1, x)).unwrap();
        }
        db.add_transition_state(1.0, &ParamVector::from_element(1, 0.5), -1.0, (0, 1)).unwrap();
        db.add_transition_state(2.0, &ParamVector::from_element(1, 1.5), -1.0, (1, 2)).unwrap();
        db
    }

    #[test]
    fn toy_partitions() {
        let db = toy();
        assert_eq!(superbasin_partition(&db, 0.5), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(superbasin_partition(&db, 1.5), vec![vec![0, 1], vec![2]]);
        assert_eq!(superbasin_partition(&db, 3.0), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn toy_merges_and_tree() {
        let db = toy();
        let m = merge_events(&db);
        assert_eq!(m.iter().map(|e| (e.energy, e.joined)).collect::<Vec<_>>(), vec![(1.0, (0, 1)), (2.0, (0, 2))]);
        let tree = build_disconnectivity_tree(&db, 0.0, 2.0, 0.25).unwrap();
        assert_eq!(tree.leaves.len(), 3);
        assert!(!tree.is_forest);
        // A and B first share a node at the level containing 1.0, C at 2.0.
        let first_common = |a: usize, b: usize| {
            tree.nodes.iter().find(|n| n.members.contains(&a) && n.members.contains(&b)).map(|n| n.threshold)
        };
        assert_eq!(first_common(0, 1), Some(1.25));
        assert_eq!(first_common(0, 2), Some(2.25));
        // Nesting: every node's members lie inside its parent's.
        for n in &tree.nodes {
            if let Some(p) = n.parent {
                let parent = &tree.nodes[p - db.minima.len()];
                assert!(n.members.iter().all(|m| parent.members.contains(m)));
            }
        }
        assert_eq!(tree.leaf_table().lines().count(), 3);
        assert!(tree.to_lines().lines().all(|l| l.split(' ').count() == 3));
    }

    #[test]
    fn single_minimum_and_forest() {
        let mut db = LandscapeDatabase::new(Metric::Euclidean);
        db.add_minimum(0.0, &ParamVector::zeros(1)).unwrap();
        let t = build_disconnectivity_tree(&db, 0.0, 1.0, 0.5).unwrap();
        assert!(t.merges.is_empty() && !t.is_forest);
        db.add_minimum(0.1, &ParamVector::from_element(1, 5.0)).unwrap();
        assert!(build_disconnectivity_tree(&db, 0.0, 1.0, 0.5).unwrap().is_forest);
        assert!(build_disconnectivity_tree(&db, 0.0, 1.0, 0.0).is_err());
    }
}
