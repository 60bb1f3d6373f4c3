//! Directed graphs, reachability, the root-isolating network transformation,
//! subgraph matrices and switching schedules.
//!
//! Adjacency follows the convention `adj[i][j] == true` iff there is an arc
//! from node `j` to node `i` (node `i` receives information from `j`).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Unweighted digraph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct Digraph {
    n: usize,
    adj: Vec<Vec<bool>>,
}

impl Digraph {
    /// Graph with `n` nodes and no arcs.
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        Ok(Self {
            n,
            adj: vec![vec![false; n]; n],
        })
    }

    /// Build from a row-major boolean adjacency (`adj[i][j]`: arc j -> i).
    pub fn from_adjacency(adj: Vec<Vec<bool>>) -> Result<Self> {
        let n = adj.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        for (i, row) in adj.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGraph(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[i] {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
        }
        Ok(Self { n, adj })
    }

    /// Build from a list of arcs `(from, to)`.
    pub fn from_arcs(n: usize, arcs: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for &(from, to) in arcs {
            g.add_arc(from, to)?;
        }
        Ok(g)
    }

    /// Complete digraph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for i in 0..n {
            for j in 0..n {
                g.adj[i][j] = i != j;
            }
        }
        Ok(g)
    }

    pub fn add_arc(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::InvalidGraph(format!("self-loop at node {from}")));
        }
        self.adj[to][from] = true;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// True iff there is an arc `from -> to`.
    #[inline]
    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.adj[to][from]
    }

    /// Adjacency entry `a_ij` (arc j -> i).
    #[inline]
    pub fn a(&self, i: usize, j: usize) -> bool {
        self.adj[i][j]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adj
    }

    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.n {
            for i in 0..self.n {
                if self.adj[i][j] {
                    out.push((j, i));
                }
            }
        }
        out
    }

    pub fn arc_count(&self) -> usize {
        self.adj.iter().flatten().filter(|&&b| b).count()
    }

    /// In-neighbours of `i` (nodes `j` with an arc `j -> i`).
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    fn check_node(&self, k: usize) -> Result<()> {
        if k >= self.n {
            Err(Error::NodeOutOfRange { node: k, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Arc-wise OR.
    pub fn union(&self, other: &Digraph) -> Result<Digraph> {
        if self.n != other.n {
            return Err(Error::Dimension(format!(
                "union of graphs with {} and {} nodes",
                self.n, other.n
            )));
        }
        let adj = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.adj[i][j] || other.adj[i][j]).collect())
            .collect();
        Ok(Digraph { n: self.n, adj })
    }

    /// Laplacian `D - A` with in-degrees on the diagonal.
    pub fn laplacian(&self) -> Mat {
        laplacian_over(self, &(0..self.n).collect::<Vec<_>>())
    }

    pub fn is_strongly_connected(&self) -> bool {
        let r = reach_structure(self);
        r.ell.iter().all(|row| row.iter().all(|&b| b))
    }
}

impl TryFrom<Vec<Vec<u8>>> for Digraph {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        let adj = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| match v {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(Error::InvalidGraph(format!(
                            "adjacency entries must be 0 or 1, got {other}"
                        ))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Digraph::from_adjacency(adj)
    }
}

impl From<Digraph> for Vec<Vec<u8>> {
    fn from(g: Digraph) -> Self {
        g.adj
            .into_iter()
            .map(|row| row.into_iter().map(u8::from).collect())
            .collect()
    }
}

/// Reachability-with-identity matrix: `ell[i][k]` is set iff `i == k` or a
/// directed path from `k` to `i` exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachStructure {
    pub ell: Vec<Vec<bool>>,
}

impl ReachStructure {
    #[inline]
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        self.ell[to][from]
    }
}

/// Boolean structure of `I + A + A² + ... + A^{n-1}`.
///
/// Computed by repeated boolean products, which is exact because any path
/// between distinct nodes needs at most `n - 1` arcs.
pub fn reach_structure(g: &Digraph) -> ReachStructure {
    let n = g.n;
    let mut ell: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|k| i == k).collect()).collect();
    // power holds the boolean structure of A^p
    let mut power = ell.clone();
    for _ in 1..n {
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for m in g.in_neighbors(i) {
                for k in 0..n {
                    if power[m][k] {
                        next[i][k] = true;
                    }
                }
            }
        }
        let mut changed = false;
        for i in 0..n {
            for k in 0..n {
                if next[i][k] && !ell[i][k] {
                    ell[i][k] = true;
                    changed = true;
                }
            }
        }
        power = next;
        if !changed && power.iter().flatten().all(|&b| !b) {
            break;
        }
    }
    ReachStructure { ell }
}

/// `V_k = { i : ell[i][k] } ∪ {k}`, sorted ascending.
pub fn member_set(g: &Digraph, k: usize) -> Result<Vec<usize>> {
    g.check_node(k)?;
    Ok(members_from_reach(&reach_structure(g), k))
}

fn members_from_reach(r: &ReachStructure, k: usize) -> Vec<usize> {
    (0..r.ell.len()).filter(|&i| i == k || r.ell[i][k]).collect()
}

/// Graph after the root-isolating transformation with respect to `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformedGraph {
    pub root: usize,
    pub members: Vec<usize>,
    pub adj_t: Digraph,
    member_mask: Vec<bool>,
}

impl TransformedGraph {
    #[inline]
    pub fn is_member(&self, i: usize) -> bool {
        self.member_mask[i]
    }

    pub fn non_members(&self) -> Vec<usize> {
        (0..self.adj_t.n()).filter(|&i| !self.member_mask[i]).collect()
    }

    /// Transformed weight `α_ij(k)` (arc j -> i).
    #[inline]
    pub fn alpha(&self, i: usize, j: usize) -> bool {
        self.adj_t.a(i, j)
    }

    /// Same graph without any transformation (ablation mode): arcs are the
    /// raw ones but membership still reflects reachability from `root`.
    pub fn untransformed(g: &Digraph, root: usize) -> Result<Self> {
        let mut tg = transform(g, root)?;
        tg.adj_t = g.clone();
        Ok(tg)
    }
}

/// Apply `α_ij(k) = δ_ij α_ij` with
/// `δ_ij = ((1-ℓ_ik) ∧ (1-ℓ_jk)) ∨ (ℓ_ik ∧ ℓ_jk)`: keep arcs whose endpoints
/// are on the same side of the member/non-member cut, drop the rest.
pub fn transform(g: &Digraph, k: usize) -> Result<TransformedGraph> {
    g.check_node(k)?;
    let reach = reach_structure(g);
    Ok(transform_with_reach(g, &reach, k))
}

pub(crate) fn transform_with_reach(g: &Digraph, reach: &ReachStructure, k: usize) -> TransformedGraph {
    let n = g.n;
    let ell_k: Vec<bool> = (0..n).map(|i| i == k || reach.ell[i][k]).collect();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (li, lj) = (u8::from(ell_k[i]), u8::from(ell_k[j]));
            let delta = ((1 - li).min(1 - lj)).max(li.min(lj));
            adj[i][j] = delta == 1 && g.adj[i][j];
        }
    }
    TransformedGraph {
        root: k,
        members: members_from_reach(reach, k),
        adj_t: Digraph { n, adj },
        member_mask: ell_k,
    }
}

/// Laplacian of the subgraph induced on `nodes` (row/column order as given).
pub fn laplacian_over(g: &Digraph, nodes: &[usize]) -> Mat {
    let m = nodes.len();
    let mut l = Mat::zeros(m, m);
    for (r, &i) in nodes.iter().enumerate() {
        for (c, &j) in nodes.iter().enumerate() {
            if r != c && g.a(i, j) {
                l[(r, c)] = -1.0;
                l[(r, r)] += 1.0;
            }
        }
    }
    l
}

/// Matrices attached to one transformed subgraph.
#[derive(Debug, Clone)]
pub struct SubgraphMatrices {
    pub root: usize,
    /// Members other than the root, in ascending order; row order of the matrices.
    pub others: Vec<usize>,
    pub non_members: Vec<usize>,
    pub laplacian: Mat,
    pub b_star: Mat,
    pub h_matrix: Mat,
    pub pi: usize,
    pub complement_laplacian: Mat,
}

impl SubgraphMatrices {
    /// True when the member set is only the root (0×0 `H`).
    pub fn is_degenerate(&self) -> bool {
        self.pi == 0
    }
}

pub fn subgraph_matrices(tg: &TransformedGraph) -> SubgraphMatrices {
    let others: Vec<usize> = tg.members.iter().copied().filter(|&i| i != tg.root).collect();
    let non_members = tg.non_members();
    let laplacian = laplacian_over(&tg.adj_t, &others);
    let mut b_star = Mat::zeros(others.len(), others.len());
    for (r, &j) in others.iter().enumerate() {
        if tg.adj_t.a(j, tg.root) {
            b_star[(r, r)] = 1.0;
        }
    }
    let h_matrix = &laplacian + &b_star;
    let complement_laplacian = laplacian_over(&tg.adj_t, &non_members);
    SubgraphMatrices {
        root: tg.root,
        pi: others.len(),
        others,
        non_members,
        laplacian,
        b_star,
        h_matrix,
        complement_laplacian,
    }
}

/// Every node reachable from `root`.
pub fn has_spanning_tree(g: &Digraph, root: usize) -> bool {
    if root >= g.n {
        return false;
    }
    bfs_from(g, root).iter().all(|&b| b)
}

/// Nodes reachable from `src` (including `src`) by breadth-first search.
pub fn bfs_from(g: &Digraph, src: usize) -> Vec<bool> {
    let mut seen = vec![false; g.n];
    let mut queue = VecDeque::from([src]);
    seen[src] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..g.n {
            if g.adj[v][u] && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Periodic switching schedule: each period of length `period` is split
/// into `slots` equal slots; slot `s` uses `library[assignment[s]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDoc", into = "ScheduleDoc")]
pub struct SwitchingSchedule {
    period: f64,
    slots: usize,
    assignment: Vec<usize>,
    library: Vec<Digraph>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    period: f64,
    slots: usize,
    assignment: Vec<usize>,
    graphs: Vec<Digraph>,
}

impl TryFrom<ScheduleDoc> for SwitchingSchedule {
    type Error = Error;
    fn try_from(d: ScheduleDoc) -> Result<Self> {
        SwitchingSchedule::new(d.period, d.slots, d.assignment, d.graphs)
    }
}

impl From<SwitchingSchedule> for ScheduleDoc {
    fn from(s: SwitchingSchedule) -> Self {
        ScheduleDoc {
            period: s.period,
            slots: s.slots,
            assignment: s.assignment,
            graphs: s.library,
        }
    }
}

impl SwitchingSchedule {
    pub fn new(period: f64, slots: usize, assignment: Vec<usize>, library: Vec<Digraph>) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidSchedule(format!("period must be positive, got {period}")));
        }
        if slots == 0 {
            return Err(Error::InvalidSchedule("slot count must be positive".into()));
        }
        if assignment.len() != slots {
            return Err(Error::InvalidSchedule(format!(
                "assignment has {} entries for {slots} slots",
                assignment.len()
            )));
        }
        if library.is_empty() {
            return Err(Error::InvalidSchedule("graph library is empty".into()));
        }
        let n = library[0].n();
        if library.iter().any(|g| g.n() != n) {
            return Err(Error::InvalidSchedule("library graphs differ in node count".into()));
        }
        if let Some(&bad) = assignment.iter().find(|&&a| a >= library.len()) {
            return Err(Error::InvalidSchedule(format!(
                "assignment index {bad} outside library of {} graphs",
                library.len()
            )));
        }
        Ok(Self {
            period,
            slots,
            assignment,
            library,
        })
    }

    /// Schedule with a single slot and a fixed graph.
    pub fn fixed(g: Digraph, period: f64) -> Result<Self> {
        Self::new(period, 1, vec![0], vec![g])
    }

    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn slots(&self) -> usize {
        self.slots
    }
    pub fn dwell(&self) -> f64 {
        self.period / self.slots as f64
    }
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
    pub fn library(&self) -> &[Digraph] {
        &self.library
    }
    pub fn n(&self) -> usize {
        self.library[0].n()
    }

    /// Graph active in slot `s` of a period.
    pub fn slot_graph(&self, s: usize) -> &Digraph {
        &self.library[self.assignment[s % self.slots]]
    }

    /// Slot index (not graph index) at time `t`; right-open slots.
    pub fn slot_at(&self, t: f64) -> usize {
        let phase = t.rem_euclid(self.period) / self.dwell();
        // absorb round-off just below an integer boundary
        let s = (phase + 1e-9).floor() as usize;
        s % self.slots
    }

    /// Graph index `σ(t)`.
    pub fn sigma_at(&self, t: f64) -> usize {
        self.assignment[self.slot_at(t)]
    }

    /// Library indices actually used by the assignment, ascending, deduplicated.
    pub fn used_graphs(&self) -> Vec<usize> {
        let mut used = self.assignment.clone();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Arc-wise union of all graphs used by the schedule.
pub fn union_graph(s: &SwitchingSchedule) -> Digraph {
    let used = s.used_graphs();
    let mut acc = s.library[used[0]].clone();
    for &g in &used[1..] {
        acc = acc.union(&s.library[g]).expect("library graphs share node count");
    }
    acc
}

/// Outcome of checking the two switching assumptions on a schedule.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub union_strongly_connected: bool,
    /// `pair_graph[i][j]`: first used library graph containing a path i -> j.
    pub pair_graph: Vec<Vec<Option<usize>>>,
    pub missing_pairs: Vec<(usize, usize)>,
    pub dwell_consistent: bool,
    pub pass: bool,
}

pub fn validate_assumptions(s: &SwitchingSchedule) -> ValidationReport {
    let n = s.n();
    let union_strongly_connected = union_graph(s).is_strongly_connected();
    let used = s.used_graphs();
    let reaches: Vec<(usize, ReachStructure)> = used.iter().map(|&g| (g, reach_structure(&s.library[g]))).collect();
    let mut pair_graph = vec![vec![None; n]; n];
    let mut missing_pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            pair_graph[i][j] = reaches.iter().find(|(_, r)| r.reaches(i, j)).map(|(g, _)| *g);
            if pair_graph[i][j].is_none() {
                missing_pairs.push((i, j));
            }
        }
    }
    let dwell_consistent = {
        let tau = s.dwell();
        tau > 0.0 && ((tau * s.slots as f64) - s.period).abs() <= 1e-12 * s.period.max(1.0)
    };
    let pass = union_strongly_connected && missing_pairs.is_empty() && dwell_consistent;
    ValidationReport {
        union_strongly_connected,
        pair_graph,
        missing_pairs,
        dwell_consistent,
        pass,
    }
}

/// Shipped 4-node benchmark schedule.
///
/// Four 3-node directed chains (one node isolated in each slot):
/// `0→1→2`, `1→0→3`, `2→3→0`, `3→2→1`. No single graph is connected, the
/// union is strongly connected, and every ordered pair is joined by a path
/// inside exactly one graph. Dwell 0.4 s.
pub fn benchmark_schedule_4() -> SwitchingSchedule {
    let chains: [[usize; 3]; 4] = [[0, 1, 2], [1, 0, 3], [2, 3, 0], [3, 2, 1]];
    let library = chains
        .iter()
        .map(|c| Digraph::from_arcs(4, &[(c[0], c[1]), (c[1], c[2])]).expect("valid chain"))
        .collect();
    SwitchingSchedule::new(1.6, 4, vec![0, 1, 2, 3], library).expect("valid benchmark schedule")
}

/// Shipped 8-node benchmark schedule.
///
/// Eight 7-node directed chains; even slots run forward around the ring
/// starting at the slot index, odd slots run backward. The node left out of
/// each chain is isolated for that slot. Dwell 0.4 s.
pub fn benchmark_schedule_8() -> SwitchingSchedule {
    let n = 8;
    let library = (0..n)
        .map(|s| {
            let order: Vec<usize> = if s % 2 == 0 {
                (0..n - 1).map(|p| (s + p) % n).collect()
            } else {
                (0..n - 1).map(|p| (s + n - p) % n).collect()
            };
            let arcs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
            Digraph::from_arcs(n, &arcs).expect("valid chain")
        })
        .collect();
    SwitchingSchedule::new(3.2, 8, (0..n).collect(), library).expect("valid benchmark schedule")
}
