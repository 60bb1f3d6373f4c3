//! Local-observer dynamics over a switching network.
//!
//! Agent `i` keeps an estimate `x̂_{i,k}` of every decomposed block `k`. The
//! block it measures itself is corrected by its own output; every block is
//! pulled towards the neighbours' estimates over the graph transformed with
//! respect to that block's owner.
//!
//! Estimates are stored flat: agent `i`, block `k` occupies
//! `i * n + offsets[k] .. + v_k`.

use serde::Serialize;

use crate::digraph::{self, Digraph, ReachStructure, SubgraphMatrices, TransformedGraph};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::sysdecomp::{Decomposition, ObserverGains};

/// `𝕣_{i,k} = (1 − ℓ_ik) γ + ℓ_ik γ_ik`.
pub fn coupling_gain(ell_ik: bool, gamma: f64, gamma_ik: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(gamma_ik > 0.0) {
        return Err(Error::InvalidGain(format!(
            "coupling gains must be positive (γ = {gamma}, γ_ik = {gamma_ik})"
        )));
    }
    Ok(if ell_ik { gamma_ik } else { gamma })
}

/// Per-slot graph data shared by all agents: the slot's reachability and,
/// for every block owner `k`, the graph used for block-`k` consensus.
#[derive(Debug, Clone)]
pub struct SlotGraphs {
    pub reach: ReachStructure,
    pub per_block: Vec<TransformedGraph>,
    pub transformed: bool,
}

impl SlotGraphs {
    /// With `transformed == false` every block uses the raw arcs.
    pub fn new(g: &Digraph, transformed: bool) -> Self {
        let reach = digraph::reach_structure(g);
        let per_block = (0..g.n())
            .map(|k| {
                let mut tg = digraph::transform_with_reach(g, &reach, k);
                if !transformed {
                    tg.adj_t = g.clone();
                }
                tg
            })
            .collect();
        Self {
            reach,
            per_block,
            transformed,
        }
    }

    /// `ℓ_ik`: agent `i` is reachable from block owner `k`.
    #[inline]
    pub fn ell(&self, i: usize, k: usize) -> bool {
        i == k || self.reach.ell[i][k]
    }
}

/// Which lower-block error enters the off-diagonal error equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingIndex {
    /// `Σ_l Υ_kl e_{i,l}`: what differencing the observer against the plant gives.
    Consistent,
    /// `Σ_l Υ_kl e_{k,l}`, the literal index of the printed error equation.
    AsPrinted,
}

/// Fixed parameters of the observer network.
#[derive(Debug, Clone)]
pub struct ObserverModel {
    dec: Decomposition,
    h_blocks: Vec<Mat>,
    gamma: f64,
    // H_io C_io and H_io F_il, cached
    hc: Vec<Mat>,
    hf: Vec<Vec<Mat>>,
}

impl ObserverModel {
    pub fn new(dec: Decomposition, gains: &ObserverGains, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidGain(format!("γ must be positive, got {gamma}")));
        }
        if gains.h_blocks.len() != dec.blocks() {
            return Err(Error::Dimension("one observer gain per block required".into()));
        }
        for (i, h) in gains.h_blocks.iter().enumerate() {
            if h.nrows() != dec.indices[i] || h.ncols() != dec.blocks_c[i].nrows() {
                return Err(Error::Dimension(format!("H_{i} has shape {:?}", h.shape())));
            }
        }
        let hc = (0..dec.blocks())
            .map(|i| &gains.h_blocks[i] * &dec.blocks_c[i])
            .collect();
        let hf = (0..dec.blocks())
            .map(|i| dec.feedthrough[i].iter().map(|f| &gains.h_blocks[i] * f).collect())
            .collect();
        Ok(Self {
            dec,
            h_blocks: gains.h_blocks.clone(),
            gamma,
            hc,
            hf,
        })
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }
    pub fn h_blocks(&self) -> &[Mat] {
        &self.h_blocks
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn agents(&self) -> usize {
        self.dec.blocks()
    }
    pub fn n(&self) -> usize {
        self.dec.n()
    }
    /// Length of the flat estimate vector.
    pub fn state_len(&self) -> usize {
        self.agents() * self.n()
    }

    #[inline]
    fn at(&self, i: usize, k: usize) -> std::ops::Range<usize> {
        let base = i * self.n() + self.dec.offsets[k];
        base..base + self.dec.indices[k]
    }

    /// Slice of agent `i`'s estimate of block `k`.
    pub fn block<'a>(&self, est: &'a [f64], i: usize, k: usize) -> &'a [f64] {
        &est[self.at(i, k)]
    }

    fn check_inputs(&self, est: &[f64], gamma_ik: &Mat, outputs: &[Vector], slot: &SlotGraphs) -> Result<()> {
        let n_ag = self.agents();
        if est.len() != self.state_len() {
            return Err(Error::Dimension(format!(
                "estimate vector has {} entries, expected {}",
                est.len(),
                self.state_len()
            )));
        }
        if gamma_ik.shape() != (n_ag, n_ag) {
            return Err(Error::Dimension("γ_ik must be N×N".into()));
        }
        if outputs.len() != n_ag {
            return Err(Error::Dimension("one output per agent required".into()));
        }
        for (i, y) in outputs.iter().enumerate() {
            if y.len() != self.dec.blocks_c[i].nrows() {
                return Err(Error::Dimension(format!("y_{i} has {} entries", y.len())));
            }
        }
        if slot.per_block.len() != n_ag {
            return Err(Error::Dimension(format!(
                "slot carries graphs for {} blocks, expected {n_ag}",
                slot.per_block.len()
            )));
        }
        Ok(())
    }

    /// Consensus residual `Σ_j α_ij(k) (x̂_{j,k} − x̂_{i,k})` for one agent and block.
    pub fn consensus(&self, est: &[f64], slot: &SlotGraphs, i: usize, k: usize) -> Vector {
        let v = self.dec.indices[k];
        let mut acc = Vector::zeros(v);
        let own = self.block(est, i, k);
        for j in slot.per_block[k].adj_t.in_neighbors(i) {
            let other = self.block(est, j, k);
            for r in 0..v {
                acc[r] += other[r] - own[r];
            }
        }
        acc
    }

    /// Right-hand side of the observer network, written into `out`.
    pub fn rhs_into(
        &self,
        est: &[f64],
        gamma_ik: &Mat,
        outputs: &[Vector],
        slot: &SlotGraphs,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_inputs(est, gamma_ik, outputs, slot)?;
        let d = &self.dec;
        for i in 0..self.agents() {
            for k in 0..self.agents() {
                let v = d.indices[k];
                if v == 0 {
                    continue;
                }
                let xk = Vector::from_column_slice(self.block(est, i, k));
                let mut dx = &d.blocks_a[k] * &xk;
                for (l, u) in d.couplings[k].iter().enumerate() {
                    if d.indices[l] > 0 {
                        dx += u * Vector::from_column_slice(self.block(est, i, l));
                    }
                }
                let r = coupling_gain(slot.ell(i, k), self.gamma, gamma_ik[(i, k)])?;
                dx += self.consensus(est, slot, i, k) * r;
                if k == i {
                    let mut innov = &outputs[i] - &d.blocks_c[i] * &xk;
                    for (l, f) in d.feedthrough[i].iter().enumerate() {
                        if d.indices[l] > 0 {
                            innov -= f * Vector::from_column_slice(self.block(est, i, l));
                        }
                    }
                    dx += &self.h_blocks[i] * innov;
                }
                out[self.at(i, k)].copy_from_slice(dx.as_slice());
            }
        }
        Ok(())
    }

    pub fn rhs(&self, est: &[f64], gamma_ik: &Mat, outputs: &[Vector], slot: &SlotGraphs) -> Result<Vec<f64>> {
        let mut out = vec![0.0; est.len()];
        self.rhs_into(est, gamma_ik, outputs, slot, &mut out)?;
        Ok(out)
    }

    /// Adaptive-gain rates `γ̇_ik = |Σ_j α_ij(k)(x̂_{j,k} − x̂_{i,k})|²` where
    /// agent `i` is reachable from `k` in the current slot, zero elsewhere.
    pub fn adaptive_rate(&self, est: &[f64], slot: &SlotGraphs) -> Mat {
        let n_ag = self.agents();
        Mat::from_fn(n_ag, n_ag, |i, k| {
            if self.dec.indices[k] == 0 || !slot.ell(i, k) {
                0.0
            } else {
                self.consensus(est, slot, i, k).norm_squared()
            }
        })
    }

    /// Error dynamics evaluated directly on `e_{i,k} = x̂_{i,k} − x_{0,k}`.
    pub fn error_rhs(&self, err: &[f64], gamma_ik: &Mat, slot: &SlotGraphs, index: CouplingIndex) -> Result<Vec<f64>> {
        let d = &self.dec;
        let mut out = vec![0.0; err.len()];
        for i in 0..self.agents() {
            for k in 0..self.agents() {
                if d.indices[k] == 0 {
                    continue;
                }
                let ek = Vector::from_column_slice(self.block(err, i, k));
                let mut de = &d.blocks_a[k] * &ek;
                let lower_owner = match index {
                    CouplingIndex::Consistent => i,
                    CouplingIndex::AsPrinted if k == i => i,
                    CouplingIndex::AsPrinted => k,
                };
                for (l, u) in d.couplings[k].iter().enumerate() {
                    if d.indices[l] > 0 {
                        de += u * Vector::from_column_slice(self.block(err, lower_owner, l));
                    }
                }
                let r = coupling_gain(slot.ell(i, k), self.gamma, gamma_ik[(i, k)])?;
                de += self.consensus(err, slot, i, k) * r;
                if k == i {
                    de -= &self.hc[i] * &ek;
                    for (l, hf) in self.hf[i].iter().enumerate() {
                        if d.indices[l] > 0 {
                            de -= hf * Vector::from_column_slice(self.block(err, i, l));
                        }
                    }
                }
                out[self.at(i, k)].copy_from_slice(de.as_slice());
            }
        }
        Ok(out)
    }

    /// Max difference between the two readings of the off-diagonal error
    /// equation at one error state.
    pub fn coupling_index_discrepancy(&self, err: &[f64], gamma_ik: &Mat, slot: &SlotGraphs) -> Result<f64> {
        let a = self.error_rhs(err, gamma_ik, slot, CouplingIndex::Consistent)?;
        let b = self.error_rhs(err, gamma_ik, slot, CouplingIndex::AsPrinted)?;
        Ok(a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())))
    }

    /// Flat estimate vector in which every agent holds the true `x = Tχ`.
    pub fn exact_estimates(&self, chi: &Vector) -> Vec<f64> {
        let x = self.dec.to_blocks(chi);
        let mut est = Vec::with_capacity(self.state_len());
        for _ in 0..self.agents() {
            est.extend_from_slice(x.as_slice());
        }
        est
    }

    /// Flat error vector `x̂ − 1 ⊗ Tχ`.
    pub fn errors(&self, est: &[f64], chi: &Vector) -> Vec<f64> {
        let x = self.dec.to_blocks(chi);
        let n = self.n();
        est.iter().enumerate().map(|(p, v)| v - x[p % n]).collect()
    }
}

/// Observer model plus its current state.
#[derive(Debug, Clone)]
pub struct ObserverNetwork {
    pub model: ObserverModel,
    pub estimates: Vec<f64>,
    pub gamma_ik: Mat,
    pub adaptive: bool,
}

impl ObserverNetwork {
    pub fn new(model: ObserverModel, estimates: Vec<f64>, gamma_ik: Mat, adaptive: bool) -> Result<Self> {
        if estimates.len() != model.state_len() {
            return Err(Error::Dimension("estimate vector length".into()));
        }
        let n_ag = model.agents();
        if gamma_ik.shape() != (n_ag, n_ag) {
            return Err(Error::Dimension("γ_ik must be N×N".into()));
        }
        if let Some(bad) = gamma_ik.iter().find(|g| !(**g > 0.0)) {
            return Err(Error::InvalidGain(format!("γ_ik must be positive, got {bad}")));
        }
        Ok(Self {
            model,
            estimates,
            gamma_ik,
            adaptive,
        })
    }

    pub fn observer_rhs(&self, outputs: &[Vector], slot: &SlotGraphs) -> Result<Vec<f64>> {
        self.model.rhs(&self.estimates, &self.gamma_ik, outputs, slot)
    }

    pub fn adaptive_rate(&self, slot: &SlotGraphs) -> Mat {
        if self.adaptive {
            self.model.adaptive_rate(&self.estimates, slot)
        } else {
            let n = self.model.agents();
            Mat::zeros(n, n)
        }
    }

    pub fn error_snapshot(&self, chi: &Vector) -> ErrorSnapshot {
        ErrorSnapshot::new(&self.model, &self.estimates, chi)
    }
}

/// Per-agent, per-block estimation errors.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorSnapshot {
    /// `e[i][k]` = `x̂_{i,k} − x_{0,k}`.
    pub e: Vec<Vec<Vec<f64>>>,
    /// `|e_i|` with `e_i` stacking all blocks of agent `i`.
    pub norms: Vec<f64>,
}

impl ErrorSnapshot {
    pub fn new(model: &ObserverModel, est: &[f64], chi: &Vector) -> Self {
        let flat = model.errors(est, chi);
        let n_ag = model.agents();
        let e: Vec<Vec<Vec<f64>>> = (0..n_ag)
            .map(|i| (0..n_ag).map(|k| model.block(&flat, i, k).to_vec()).collect())
            .collect();
        let n = model.n();
        let norms = (0..n_ag)
            .map(|i| flat[i * n..(i + 1) * n].iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Self { e, norms }
    }

    pub fn max_norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }
}

/// Block-`i` errors grouped by membership in the slot's subgraph rooted at `i`.
#[derive(Debug, Clone)]
pub struct ReorganizedState {
    pub root: usize,
    /// `1_π ⊗ e_{i,i}`.
    pub eps_ii: Vector,
    /// `e_{j,i}` for members `j ≠ i`, stacked in ascending order.
    pub eps_star: Vector,
    /// `e_{k,i}` for non-members `k`.
    pub eps_diamond: Vector,
    /// `ξ_{j,i} = Σ_l α_jl(i)(x̂_{j,i} − x̂_{l,i})` for members `j ≠ i`.
    pub xi_star: Vector,
}

impl ReorganizedState {
    /// `|ξ − (H ⊗ I) ε_⋆ + (B ⊗ I) ε_ii|`.
    pub fn identity_residual(&self, mats: &SubgraphMatrices, v: usize) -> f64 {
        if mats.pi == 0 {
            return 0.0;
        }
        let eye = Mat::identity(v, v);
        let h = mats.h_matrix.kronecker(&eye);
        let b = mats.b_star.kronecker(&eye);
        (&self.xi_star - h * &self.eps_star + b * &self.eps_ii).norm()
    }
}

/// Group block-`i` errors by membership in `tg` (rooted at `i`).
pub fn reorganize(
    model: &ObserverModel,
    err: &ErrorSnapshot,
    tg: &TransformedGraph,
    mats: &SubgraphMatrices,
    est: &[f64],
) -> Result<ReorganizedState> {
    let i = tg.root;
    if mats.root != i {
        return Err(Error::Dimension("subgraph matrices belong to another root".into()));
    }
    let v = model.decomposition().indices[i];
    let stack = |nodes: &[usize]| {
        let mut out = Vec::with_capacity(nodes.len() * v);
        for &j in nodes {
            out.extend_from_slice(&err.e[j][i]);
        }
        Vector::from_vec(out)
    };
    let mut eps_ii = Vec::with_capacity(mats.pi * v);
    for _ in 0..mats.pi {
        eps_ii.extend_from_slice(&err.e[i][i]);
    }
    let mut xi = Vec::with_capacity(mats.pi * v);
    for &j in &mats.others {
        let own = model.block(est, j, i);
        let mut acc = vec![0.0; v];
        for l in tg.adj_t.in_neighbors(j) {
            let other = model.block(est, l, i);
            for r in 0..v {
                acc[r] += own[r] - other[r];
            }
        }
        xi.extend(acc);
    }
    Ok(ReorganizedState {
        root: i,
        eps_ii: Vector::from_vec(eps_ii),
        eps_star: stack(&mats.others),
        eps_diamond: stack(&mats.non_members),
        xi_star: Vector::from_vec(xi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdecomp::{self, Plant};

    fn two_agent_model() -> ObserverModel {
        // block 1 = x1 (seen by agent 0), block 2 = x2 (seen by agent 1), x2 driven by x1
        let a = Mat::from_row_slice(2, 2, &[-0.5, 0.0, 1.0, 0.2]);
        let c0 = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let c1 = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        let plant = Plant::new(a, vec![c0, c1]).unwrap();
        let dec = sysdecomp::decompose(&plant).unwrap();
        let gains = sysdecomp::design_gains(&dec, None).unwrap();
        ObserverModel::new(dec, &gains, 100.0).unwrap()
    }

    #[test]
    fn coupling_gain_cases() {
        assert_eq!(coupling_gain(false, 100.0, 10.0).unwrap(), 100.0);
        assert_eq!(coupling_gain(true, 100.0, 10.0).unwrap(), 10.0);
        assert_eq!(coupling_gain(true, 7.0, 7.0).unwrap(), 7.0);
        assert!(coupling_gain(true, 0.0, 1.0).is_err());
        assert!(coupling_gain(true, 1.0, -1.0).is_err());
    }

    #[test]
    fn exact_estimates_track_plant() {
        let m = two_agent_model();
        let chi = Vector::from_vec(vec![0.3, -1.2]);
        let est = m.exact_estimates(&chi);
        let g = Digraph::from_arcs(2, &[(0, 1)]).unwrap();
        let slot = SlotGraphs::new(&g, true);
        let outputs: Vec<Vector> = (0..2)
            .map(|i| {
                &m.decomposition().blocks_c[i] * m.decomposition().to_blocks(&chi).rows(m.decomposition().offsets[i], 1)
            })
            .collect();
        let gam = Mat::from_element(2, 2, 10.0);
        let d = m.rhs(&est, &gam, &outputs, &slot).unwrap();
        let x = m.decomposition().to_blocks(&chi);
        let xdot = m.decomposition().assembled_a() * &x;
        for i in 0..2 {
            for p in 0..2 {
                assert!((d[i * 2 + p] - xdot[p]).abs() < 1e-12);
            }
        }
        assert!(m.adaptive_rate(&est, &slot).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn single_agent_is_luenberger() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.1]);
        let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let plant = Plant::new(a.clone(), vec![c.clone()]).unwrap();
        let dec = sysdecomp::decompose(&plant).unwrap();
        let gains = sysdecomp::design_gains(&dec, None).unwrap();
        let m = ObserverModel::new(dec.clone(), &gains, 1.0).unwrap();
        let slot = SlotGraphs::new(&Digraph::empty(1).unwrap(), true);
        let est = vec![0.4, -0.7];
        let y = Vector::from_vec(vec![1.5]);
        let d = m
            .rhs(&est, &Mat::from_element(1, 1, 1.0), std::slice::from_ref(&y), &slot)
            .unwrap();
        let xh = Vector::from_vec(est.clone());
        let want = &dec.blocks_a[0] * &xh + &gains.h_blocks[0] * (y - &dec.blocks_c[0] * &xh);
        for p in 0..2 {
            assert!((d[p] - want[p]).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_rate_matches_hand_value() {
        let m = two_agent_model();
        // arc 0 -> 1: agent 1 listens to agent 0
        let g = Digraph::from_arcs(2, &[(0, 1)]).unwrap();
        let slot = SlotGraphs::new(&g, true);
        let est = vec![1.0, 2.0, 4.0, -1.0];
        let rate = m.adaptive_rate(&est, &slot);
        // agent 1, block 0: (1.0 - 4.0)^2
        assert!((rate[(1, 0)] - 9.0).abs() < 1e-12);
        // agent 0 is not reachable from 1
        assert_eq!(rate[(0, 1)], 0.0);
        assert_eq!(rate[(0, 0)], 0.0);
        assert!(rate.iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn snapshot_offsets() {
        let m = two_agent_model();
        let chi = Vector::from_vec(vec![0.1, 0.2]);
        let mut est = m.exact_estimates(&chi);
        est[3] += 1.0;
        let snap = ErrorSnapshot::new(&m, &est, &chi);
        assert!((snap.norms[1] - 1.0).abs() < 1e-12);
        assert_eq!(snap.norms[0], 0.0);
    }

    #[test]
    fn lonely_root_reorganizes_to_empty_star() {
        let m = two_agent_model();
        let g = Digraph::empty(2).unwrap();
        let tg = digraph::transform(&g, 0).unwrap();
        let mats = digraph::subgraph_matrices(&tg);
        let chi = Vector::from_vec(vec![0.0, 0.0]);
        let est = vec![1.0, 2.0, 3.0, 4.0];
        let snap = ErrorSnapshot::new(&m, &est, &chi);
        let r = reorganize(&m, &snap, &tg, &mats, &est).unwrap();
        assert_eq!(r.eps_star.len(), 0);
        assert_eq!(r.xi_star.len(), 0);
        assert_eq!(r.eps_diamond.len(), 1);
    }
}
