//! Rooted tree structures on Whitney cubes: parents, shadows, the measured
//! expansion constant `K`, transfer boxes `B_t`, and the snake chain on a
//! regular partition of a square.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, DIM};
use crate::whitney::{WhitneyDecomposition, EXPANSION};

/// Parent/children arrays of a rooted tree plus a parents-first order.
#[derive(Clone, Debug, PartialEq)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    order: Vec<usize>,
}

impl RootedTree {
    /// Validates that `parent` describes a single rooted, connected, acyclic tree.
    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::Structure("empty tree".into()));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Structure(format!("expected one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::Structure(format!("parent {p} of node {i} out of range")));
                }
                children[p].push(i);
            }
        }
        let root = roots[0];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        while let Some(t) = queue.pop_front() {
            order.push(t);
            queue.extend(children[t].iter().copied());
        }
        if order.len() != n {
            return Err(Error::Structure(format!(
                "{} of {n} nodes unreachable from the root (cycle)",
                n - order.len()
            )));
        }
        Ok(Self {
            parent,
            children,
            root,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, t: usize) -> &[usize] {
        &self.children[t]
    }

    /// Breadth-first order; every parent precedes its children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Every node has at most one child.
    pub fn is_chain(&self) -> bool {
        self.children.iter().all(|c| c.len() <= 1)
    }

    /// Nodes from the root to `t`, inclusive.
    pub fn path_to(&self, t: usize) -> Vec<usize> {
        let mut path = vec![t];
        let mut cur = t;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// `s` is a descendant of `t` or equal to it.
    pub fn is_descendant(&self, s: usize, t: usize) -> bool {
        let mut cur = Some(s);
        while let Some(c) = cur {
            if c == t {
                return true;
            }
            cur = self.parent[c];
        }
        false
    }

    pub fn depth(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for &t in &self.order {
            if let Some(p) = self.parent[t] {
                depth[t] = depth[p] + 1;
            }
        }
        depth
    }
}

/// A tree-covering: rooted tree on cubes `Q_t` with expanded sets `U_t` and
/// pairwise disjoint transfer boxes `B_t` (absent at the root).
#[derive(Clone, Debug)]
pub struct TreeCovering {
    tree: RootedTree,
    cubes: Vec<Aabb>,
    levels: Vec<u32>,
    ell: Vec<f64>,
    expanded: Vec<Aabb>,
    transfer: Vec<Option<Aabb>>,
    k: f64,
    expansion_factor: f64,
    overlap: Option<usize>,
    decomposition: Option<Arc<WhitneyDecomposition>>,
}

impl TreeCovering {
    pub fn tree(&self) -> &RootedTree {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn root(&self) -> usize {
        self.tree.root()
    }

    pub fn parent(&self, t: usize) -> Option<usize> {
        self.tree.parent(t)
    }

    pub fn cube(&self, t: usize) -> &Aabb {
        &self.cubes[t]
    }

    /// Dyadic level of `Q_t` (all zero for the snake chain).
    pub fn level(&self, t: usize) -> u32 {
        self.levels[t]
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Side lengths in frame units (`2^-level` for Whitney trees, `L/m` for chains).
    pub fn ell(&self) -> &[f64] {
        &self.ell
    }

    pub fn expanded(&self, t: usize) -> &Aabb {
        &self.expanded[t]
    }

    pub fn transfer(&self, t: usize) -> Option<&Aabb> {
        self.transfer[t].as_ref()
    }

    /// Measured expansion constant.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn expansion_factor(&self) -> f64 {
        self.expansion_factor
    }

    /// Known overlap constant of the `U_t` (set for snake chains).
    pub fn overlap(&self) -> Option<usize> {
        self.overlap
    }

    pub fn decomposition(&self) -> Option<&WhitneyDecomposition> {
        self.decomposition.as_deref()
    }

    /// Smallest `c` with `hull(W_t) ⊆ c Q_t` for every node.
    pub fn containment_factors(&self) -> Vec<f64> {
        containment_factors(&self.tree, &self.cubes)
    }

    /// `max_t |U_t| / |B_t|`.
    pub fn volume_ratio(&self) -> f64 {
        (0..self.len())
            .filter_map(|t| self.transfer[t].map(|b| self.expanded[t].area() / b.area()))
            .fold(0.0, f64::max)
    }

    pub fn dump(&self) -> TreeDump {
        TreeDump {
            root: self.root(),
            parent: self.tree.parents().to_vec(),
            k: self.k,
            b: self
                .transfer
                .iter()
                .map(|b| {
                    b.map(|b| BoxRecord {
                        center: b.center(),
                        half_widths: b.half_widths(),
                    })
                })
                .collect(),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.dump())?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub center: Point,
    pub half_widths: [f64; 2],
}

/// JSON dump of a tree-covering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "B")]
    pub b: Vec<Option<BoxRecord>>,
}

fn containment_factors(tree: &RootedTree, cubes: &[Aabb]) -> Vec<f64> {
    let mut hull: Vec<Aabb> = cubes.to_vec();
    for &t in tree.order().iter().rev() {
        if let Some(p) = tree.parent(t) {
            let (h, hp) = (hull[t], hull[p]);
            hull[p] = Aabb::new(
                Point::new(hp.min.x.min(h.min.x), hp.min.y.min(h.min.y)),
                Point::new(hp.max.x.max(h.max.x), hp.max.y.max(h.max.y)),
            );
        }
    }
    (0..cubes.len())
        .map(|t| {
            let c = cubes[t].center();
            let [hx, hy] = cubes[t].half_widths();
            let h = hull[t];
            let fx = (c.x - h.min.x).max(h.max.x - c.x) / hx;
            let fy = (c.y - h.min.y).max(h.max.y - c.y) / hy;
            fx.max(fy)
        })
        .collect()
}

/// Shared face of two closed face-adjacent boxes, as a degenerate box.
fn shared_face(a: &Aabb, b: &Aabb) -> Aabb {
    Aabb::new(
        Point::new(a.min.x.max(b.min.x), a.min.y.max(b.min.y)),
        Point::new(a.max.x.min(b.max.x), a.max.y.min(b.max.y)),
    )
}

/// Transfer box on the face shared by `Q_t` and `Q_{t_p}`: half of the face
/// along it and `min(l_t, l_p) / 16` across it.
fn transfer_box(qt: &Aabb, qp: &Aabb) -> Aabb {
    let face = shared_face(qt, qp);
    let lt = qt.max.x - qt.min.x;
    let lp = qp.max.x - qp.min.x;
    let m = lt.min(lp);
    let c = face.center();
    let along = 0.25 * m;
    let across = m / 32.0;
    if face.max.x - face.min.x > face.max.y - face.min.y {
        Aabb::from_center(c, [along, across])
    } else {
        Aabb::from_center(c, [across, along])
    }
}

fn components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Breadth-first tree over the face-neighbor graph, rooted at the cube
/// containing `center`. Among candidate parents at the previous BFS depth
/// the larger cube wins, then the lexicographically smaller (level, index).
pub fn build_tree(dec: &Arc<WhitneyDecomposition>, center: Point) -> Result<TreeCovering> {
    let n = dec.len();
    let root = dec.locate(center).ok_or(Error::CenterNotCovered {
        x: center.x,
        y: center.y,
    })?;
    let adj = dec.face_neighbor_lists();
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(t) = queue.pop_front() {
        for &s in &adj[t] {
            if depth[s] == usize::MAX {
                depth[s] = depth[t] + 1;
                queue.push_back(s);
            }
        }
    }
    if depth.contains(&usize::MAX) {
        return Err(Error::Disconnected {
            component_sizes: components(adj),
        });
    }
    // Cube ids are sorted by (level, index), so the smallest id among the
    // candidates is the largest cube, ties broken lexicographically.
    let parent: Vec<Option<usize>> = (0..n)
        .map(|t| {
            (t != root).then(|| {
                adj[t]
                    .iter()
                    .copied()
                    .filter(|&s| depth[s] + 1 == depth[t])
                    .min()
                    .expect("BFS predecessor exists")
            })
        })
        .collect();
    let tree = RootedTree::from_parents(parent)?;
    let cubes: Vec<Aabb> = (0..n).map(|t| dec.bbox(t)).collect();
    let levels: Vec<u32> = dec.cubes().iter().map(|c| c.level).collect();
    let ell: Vec<f64> = dec.cubes().iter().map(|c| c.side_frame_units()).collect();
    let expanded: Vec<Aabb> = (0..n).map(|t| dec.expanded(t)).collect();
    let transfer: Vec<Option<Aabb>> = (0..n)
        .map(|t| tree.parent(t).map(|p| transfer_box(&cubes[t], &cubes[p])))
        .collect();
    let k = containment_factors(&tree, &cubes)
        .into_iter()
        .fold(1.0, f64::max);
    Ok(TreeCovering {
        tree,
        cubes,
        levels,
        ell,
        expanded,
        transfer,
        k,
        expansion_factor: EXPANSION,
        overlap: None,
        decomposition: Some(Arc::clone(dec)),
    })
}

/// Snake (boustrophedon) chain on the regular `m x m` partition of the
/// square `[0, side]^2`, rooted at cell (1, 1). `U_t` is the interior of
/// `Q_t ∪ Q_{t_p}` and `B_t` is `Q_{t_p}`.
pub fn build_cube_chain(m: usize, side: f64) -> Result<TreeCovering> {
    if m == 0 {
        return Err(Error::Parameter("m must be >= 1".into()));
    }
    if !(side > 0.0) {
        return Err(Error::Parameter(format!("side must be positive, got {side}")));
    }
    let cells = snake_order(m);
    let l = side / m as f64;
    let n = cells.len();
    let parent: Vec<Option<usize>> = (0..n).map(|k| k.checked_sub(1)).collect();
    let tree = RootedTree::from_parents(parent)?;
    let cubes: Vec<Aabb> = cells
        .iter()
        .map(|&[i, j]| {
            let min = Point::new((i - 1) as f64 * l, (j - 1) as f64 * l);
            Aabb::new(min, Point::new(min.x + l, min.y + l))
        })
        .collect();
    let expanded: Vec<Aabb> = (0..n)
        .map(|t| match tree.parent(t) {
            None => cubes[t],
            Some(p) => {
                let (a, b) = (cubes[t], cubes[p]);
                Aabb::new(
                    Point::new(a.min.x.min(b.min.x), a.min.y.min(b.min.y)),
                    Point::new(a.max.x.max(b.max.x), a.max.y.max(b.max.y)),
                )
            }
        })
        .collect();
    let transfer: Vec<Option<Aabb>> = (0..n).map(|t| tree.parent(t).map(|p| cubes[p])).collect();
    let k = containment_factors(&tree, &cubes)
        .into_iter()
        .fold(1.0, f64::max);
    Ok(TreeCovering {
        tree,
        cubes,
        levels: vec![0; n],
        ell: vec![l; n],
        expanded,
        transfer,
        k,
        expansion_factor: 2.0,
        overlap: Some(if n > 1 { 2 } else { 1 }),
        decomposition: None,
    })
}

/// Boustrophedon order of the 1-based multi-indices of an `m x m` grid:
/// rows in increasing `y`, alternating direction in `x`.
pub fn snake_order(m: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(m * m);
    for j in 1..=m {
        if j % 2 == 1 {
            out.extend((1..=m).map(|i| [i, j]));
        } else {
            out.extend((1..=m).rev().map(|i| [i, j]));
        }
    }
    out
}

/// Per-node chain and shadow counts by level.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowStats {
    /// `chain[t][i]` = #{r : root ≺ r ⪯ t, level(r) = i}.
    pub chain: Vec<Vec<u32>>,
    /// `shadow[t][i]` = #{r : r ⪰ t, level(r) = i}.
    pub shadow: Vec<Vec<u32>>,
    /// Number of cubes in the shadow of `t` (including `t`).
    pub shadow_size: Vec<usize>,
    /// Number of edges from the root to `t`.
    pub chain_depth: Vec<usize>,
    /// Level `k_t` of each node.
    pub levels: Vec<u32>,
}

/// Counts `P_i(t)` (root excluded) and `W_i(t)` by one root-to-leaf and one
/// leaf-to-root pass.
pub fn shadow_stats(tree: &RootedTree, levels: &[u32]) -> ShadowStats {
    let n = tree.len();
    let nl = levels.iter().copied().max().unwrap_or(0) as usize + 1;
    let mut chain = vec![vec![0u32; nl]; n];
    let mut depth = vec![0usize; n];
    for &t in tree.order() {
        if let Some(p) = tree.parent(t) {
            chain[t] = chain[p].clone();
            chain[t][levels[t] as usize] += 1;
            depth[t] = depth[p] + 1;
        }
    }
    let mut shadow = vec![vec![0u32; nl]; n];
    let mut size = vec![1usize; n];
    for &t in tree.order().iter().rev() {
        shadow[t][levels[t] as usize] += 1;
        if let Some(p) = tree.parent(t) {
            let (lo, hi) = if p < t {
                let (a, b) = shadow.split_at_mut(t);
                (&mut a[p], &b[0])
            } else {
                let (a, b) = shadow.split_at_mut(p);
                (&mut b[0], &a[t])
            };
            for (x, y) in lo.iter_mut().zip(hi) {
                *x += *y;
            }
            size[p] += size[t];
        }
    }
    ShadowStats {
        chain,
        shadow,
        shadow_size: size,
        chain_depth: depth,
        levels: levels.to_vec(),
    }
}

impl ShadowStats {
    /// `max_{t,i} P_i(t)`.
    pub fn max_chain_count(&self) -> u32 {
        self.chain
            .iter()
            .flat_map(|c| c.iter().copied())
            .max()
            .unwrap_or(0)
    }
}

/// Empirical constant of the shadow-growth bound
/// `W_i(t) <= C 2^{(i - k_t) lambda}`.
pub fn verify_shadow_lemma(stats: &ShadowStats, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut c: f64 = 0.0;
    for (t, row) in stats.shadow.iter().enumerate() {
        let k = stats.levels[t] as f64;
        for (i, &w) in row.iter().enumerate() {
            if w > 0 {
                c = c.max(w as f64 * 2f64.powf(-(i as f64 - k) * lambda));
            }
        }
    }
    Ok(c)
}

/// Ceiling of `K^n`, the a-priori bound on `P_i(t)`.
pub fn chain_bound(k: f64) -> f64 {
    k.ceil().powi(DIM as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_domain, Preset, PresetParams};
    use crate::whitney::whitney_decompose;

    fn square_tree(level: u32) -> TreeCovering {
        let dom = make_domain(Preset::UnitSquare, PresetParams::default()).unwrap();
        let dec = Arc::new(whitney_decompose(&dom, level).unwrap());
        build_tree(&dec, dom.center()).unwrap()
    }

    fn explicit_shadow(tree: &RootedTree, t: usize) -> Vec<usize> {
        (0..tree.len()).filter(|&s| tree.is_descendant(s, t)).collect()
    }

    #[test]
    fn tree_is_valid_with_face_parents() {
        let tc = square_tree(6);
        let dec = tc.decomposition().unwrap();
        assert_eq!(tc.tree().order().len(), tc.len());
        for t in 0..tc.len() {
            if let Some(p) = tc.parent(t) {
                assert!(dec.neighbors(t, true).unwrap().contains(&p));
            }
        }
        assert!(tc.k().is_finite() && tc.k() >= 1.0);
    }

    #[test]
    fn chain_counts_bounded_by_k() {
        let tc = square_tree(6);
        let st = shadow_stats(tc.tree(), tc.levels());
        assert!(st.max_chain_count() as f64 <= tc.k().powi(2));
        assert!(st.max_chain_count() as f64 <= chain_bound(tc.k()));
    }

    #[test]
    fn k_containment_holds_for_every_shadow() {
        let tc = square_tree(6);
        let k = tc.k();
        for t in 0..tc.len() {
            let kq = tc.cube(t).scaled(k);
            for s in explicit_shadow(tc.tree(), t) {
                assert!(kq.contains_box(tc.cube(s)), "node {t}, shadow member {s}");
            }
        }
    }

    #[test]
    fn transfer_boxes_disjoint_and_inside_overlap() {
        let tc = square_tree(6);
        for t in 0..tc.len() {
            let Some(b) = tc.transfer(t) else { continue };
            let p = tc.parent(t).unwrap();
            assert!(tc.expanded(t).contains_box(b));
            assert!(tc.expanded(p).contains_box(b));
            for s in (t + 1)..tc.len() {
                if let Some(b2) = tc.transfer(s) {
                    assert_eq!(b.intersection_area(b2), 0.0, "B_{t} meets B_{s}");
                }
            }
        }
        assert!(tc.volume_ratio().is_finite());
    }

    #[test]
    fn single_cube_tree() {
        // A triangle in which exactly one dyadic cube passes the Whitney test
        // at truncation level 4.
        let verts: Vec<Point> = (0..3)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 3.0 + 0.3;
                Point::new(1.15 * a.cos(), 1.15 * a.sin())
            })
            .collect();
        let tri = crate::geometry::PolygonalDomain::new("tri", verts).unwrap();
        let dec = Arc::new(whitney_decompose(&tri, 4).unwrap());
        assert_eq!(dec.len(), 1);
        let tc = build_tree(&dec, dec.bbox(0).center()).unwrap();
        assert_eq!(tc.len(), 1);
        assert_eq!(tc.k(), 1.0);
        assert!(tc.transfer(0).is_none());
    }

    #[test]
    fn hand_counted_chain_stats() {
        let tree = RootedTree::from_parents(vec![None, Some(0), Some(1)]).unwrap();
        let st = shadow_stats(&tree, &[2, 2, 2]);
        assert_eq!(st.chain[2][2], 2);
        assert_eq!(st.chain[0][2], 0);
        assert_eq!(st.shadow[0][2], 3);
        assert_eq!(st.shadow_size[0], 3);
        assert_eq!(st.chain_depth[2], 2);
    }

    #[test]
    fn shadow_totals_match_subtree_enumeration() {
        let tc = square_tree(5);
        let st = shadow_stats(tc.tree(), tc.levels());
        for t in 0..tc.len() {
            let explicit = explicit_shadow(tc.tree(), t);
            let total: u32 = st.shadow[t].iter().sum();
            assert_eq!(total as usize, explicit.len());
            assert_eq!(st.shadow_size[t], explicit.len());
            for (i, &w) in st.shadow[t].iter().enumerate() {
                let count = explicit.iter().filter(|&&s| tc.level(s) as usize == i).count();
                assert_eq!(w as usize, count);
            }
        }
        let root_total: u32 = st.shadow[tc.root()].iter().sum();
        assert_eq!(root_total as usize, tc.len());
    }

    #[test]
    fn shadow_lemma_single_node() {
        let tree = RootedTree::from_parents(vec![None]).unwrap();
        let st = shadow_stats(&tree, &[3]);
        assert_eq!(verify_shadow_lemma(&st, 1.1).unwrap(), 1.0);
        assert!(verify_shadow_lemma(&st, 0.0).is_err());
    }

    #[test]
    fn snake_three_by_three() {
        let order = snake_order(3);
        let expected = [
            [1, 1],
            [2, 1],
            [3, 1],
            [3, 2],
            [2, 2],
            [1, 2],
            [1, 3],
            [2, 3],
            [3, 3],
        ];
        assert_eq!(order, expected);
        let ch = build_cube_chain(3, 1.0).unwrap();
        let parents: Vec<Option<usize>> = ch.tree().parents().to_vec();
        assert_eq!(parents[0], None);
        for (k, p) in parents.iter().enumerate().skip(1) {
            assert_eq!(*p, Some(k - 1));
        }
    }

    #[test]
    fn snake_five_shares_edges() {
        let ch = build_cube_chain(5, 1.0).unwrap();
        assert_eq!(ch.len(), 25);
        assert!(ch.tree().is_chain());
        for t in 1..25 {
            let p = ch.parent(t).unwrap();
            let face = shared_face(ch.cube(t), ch.cube(p));
            let len = (face.max.x - face.min.x).max(face.max.y - face.min.y);
            assert!((len - 0.2).abs() < 1e-15);
            assert!((ch.expanded(t).area() / ch.transfer(t).unwrap().area() - 2.0).abs() < 1e-12);
        }
        assert_eq!(ch.overlap(), Some(2));
        assert_eq!(build_cube_chain(1, 1.0).unwrap().len(), 1);
        assert!(build_cube_chain(0, 1.0).is_err());
    }

    #[test]
    fn rejects_malformed_parent_arrays() {
        assert!(RootedTree::from_parents(vec![None, None]).is_err());
        assert!(RootedTree::from_parents(vec![None, Some(2), Some(1)]).is_err());
        assert!(RootedTree::from_parents(vec![Some(0)]).is_err());
    }

    #[test]
    fn dump_has_expected_keys() {
        let tc = square_tree(4);
        let s = serde_json::to_string(&tc.dump()).unwrap();
        for key in ["\"root\"", "\"parent\"", "\"K\"", "\"B\""] {
            assert!(s.contains(key));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn shadows_are_monotone(a in 0usize..1000, b in 0usize..1000) {
                let tc = square_tree(5);
                let n = tc.len();
                let (s, t) = (a % n, b % n);
                if tc.tree().is_descendant(s, t) {
                    let ws = explicit_shadow(tc.tree(), s);
                    let wt = explicit_shadow(tc.tree(), t);
                    prop_assert!(ws.iter().all(|x| wt.contains(x)));
                }
            }
        }
    }
}
