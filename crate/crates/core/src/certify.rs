//! Sufficient-condition certificate for omniscience under switching.
//!
//! For each block `i` and each graph the schedule uses, the certificate
//! builds the diagonal scaling `Q` of the member-subgraph matrix `𝓗`, a
//! positive definite `P_iu` for the non-member Laplacian, and the closed-loop
//! Lyapunov matrix `P_io`. It then checks the two gain inequalities
//!
//! ```text
//! γ̲_i² > λ̄(Ξ_i1) + ¼ λ̄²(Ξ_i2) + ℘
//! ℘    > λ̄_i λ̄(Ξ_i◇) / λ̲(P_iu) · m(Tᶜ_{k,i}) / m(T_{k,i})
//! ```
//!
//! `λ̄` of a non-symmetric matrix means the largest eigenvalue of its
//! symmetric part, the bound that enters quadratic forms.

use serde::Serialize;

use crate::digraph::{self, Digraph, SwitchingSchedule};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::par::*;
use crate::sysdecomp::{Decomposition, ObserverGains};

/// Tolerance used when re-checking semidefiniteness.
pub const PSD_TOL: f64 = 1e-8;

/// Default relative margin on `Q𝓗 + 𝓗ᵀQ ≻ 2I`.
pub const Q_MARGIN: f64 = 0.1;

/// Margin applied by [`suggest_gains`] on the squared-gain inequality.
pub const GAIN_MARGIN: f64 = 0.1;

/// Which block matrix enters `Ξ_i◇ = 2 P_iu ⊗ A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiamondBlock {
    /// `A_io`, dimensionally consistent with block `i`.
    #[default]
    Own,
    /// `A_1o` for every block, as literally written in the theorem.
    First,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertifyOptions {
    pub q_margin: f64,
    pub diamond: DiamondBlock,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            q_margin: Q_MARGIN,
            diamond: DiamondBlock::Own,
        }
    }
}

fn is_m_matrix(h: &Mat) -> bool {
    let n = h.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && h[(i, j)] > 0.0 {
                return false;
            }
        }
    }
    linalg::eigenvalues(h).iter().all(|z| z.re > 1e-12)
}

/// Positive diagonal `Q` with `λ̲(Q𝓗 + 𝓗ᵀQ) = 2(1 + margin)`.
pub fn solve_diag_q(h: &Mat) -> Result<Mat> {
    solve_diag_q_with(h, Q_MARGIN)
}

pub fn solve_diag_q_with(h: &Mat, margin: f64) -> Result<Mat> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dimension("𝓗 must be square".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if !is_m_matrix(h) {
        return Err(Error::NotMMatrix("𝓗 is not a nonsingular M-matrix".into()));
    }
    let ones = Vector::from_element(n, 1.0);
    let lu = h.clone().lu();
    let w = lu
        .solve(&ones)
        .ok_or_else(|| Error::NotMMatrix("𝓗 is singular".into()))?;
    let v = h
        .transpose()
        .lu()
        .solve(&ones)
        .ok_or_else(|| Error::NotMMatrix("𝓗 is singular".into()))?;
    if w.iter().chain(v.iter()).any(|x| !(*x > 0.0)) {
        return Err(Error::NotMMatrix("𝓗⁻¹·1 is not entrywise positive".into()));
    }
    let q0 = Mat::from_diagonal(&v.component_div(&w));
    let lo = linalg::lambda_min_sym(&(&q0 * h * 2.0));
    if !(lo > 0.0) {
        return Err(Error::Numerical(format!("diagonal scaling failed, λ̲ = {lo}")));
    }
    Ok(q0 * (2.0 * (1.0 + margin) / lo))
}

fn marginal_residual(p: &Mat, l: &Mat) -> f64 {
    linalg::lambda_min_sym(&(p * l * 2.0))
}

fn accept_marginal(p: &Mat, l: &Mat) -> bool {
    linalg::lambda_min_sym(p) > 0.0 && marginal_residual(p, l) >= -PSD_TOL * (1.0 + linalg::max_abs(p))
}

/// Symmetric positive definite `P` with `P𝓛 + 𝓛ᵀP ⪰ 0` for a digraph
/// Laplacian `𝓛`.
///
/// Tries `I`, then the diagonal left null vector when `𝓛` is irreducible,
/// then the general construction `P = S⁻ᵀ diag(I, P₂) S⁻¹` where `S` splits
/// space into ker 𝓛 and range 𝓛 and `P₂` is a Lyapunov solution for the
/// nonsingular part.
pub fn solve_marginal_p(l: &Mat) -> Result<Mat> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension("𝓛 must be square".into()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let eye = Mat::identity(n, n);
    if accept_marginal(&eye, l) {
        return Ok(eye);
    }

    let svd = l.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let tol = 1e-10 * smax.max(1.0);
    // left null space: columns of U with zero singular value
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let null_idx: Vec<usize> = (0..n).filter(|&k| sv[k] <= tol).collect();

    if null_idx.len() == 1 {
        let mut w: Vec<f64> = u.column(null_idx[0]).iter().copied().collect();
        if w.iter().sum::<f64>() < 0.0 {
            w.iter_mut().for_each(|x| *x = -*x);
        }
        if w.iter().all(|&x| x > 1e-12) {
            let p = Mat::from_diagonal(&Vector::from_vec(w));
            let p = &p / linalg::max_abs(&p);
            if accept_marginal(&p, l) {
                return Ok(p);
            }
        }
    }

    // right kernel basis from V, range basis from U
    let kernel: Vec<usize> = (0..n).filter(|&k| sv[k] <= tol).collect();
    let range: Vec<usize> = (0..n).filter(|&k| sv[k] > tol).collect();
    let mut s = Mat::zeros(n, n);
    for (c, &k) in kernel.iter().enumerate() {
        s.set_column(c, &v_t.row(k).transpose());
    }
    for (c, &k) in range.iter().enumerate() {
        s.set_column(kernel.len() + c, &u.column(k));
    }
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Infeasible("zero eigenvalue of 𝓛 is defective; no marginal Lyapunov matrix".into()))?;
    let block = &s_inv * l * &s;
    let z = kernel.len();
    let r = range.len();
    if linalg::max_abs(&block.view((0, 0), (z, n)).into_owned()) > 1e-8 * smax.max(1.0)
        || linalg::max_abs(&block.view((z, 0), (r, z)).into_owned()) > 1e-8 * smax.max(1.0)
    {
        return Err(Error::Infeasible(
            "kernel and range of 𝓛 are not complementary invariant subspaces".into(),
        ));
    }
    let l2 = block.view((z, z), (r, r)).into_owned();
    let p2 = linalg::lyapunov(&(-&l2), &Mat::identity(r, r))
        .map_err(|e| Error::Infeasible(format!("nonsingular part of 𝓛: {e}")))?;
    if !(linalg::lambda_min_sym(&p2) > 0.0) {
        return Err(Error::Infeasible("nonsingular part of 𝓛 is not positive stable".into()));
    }
    let mut d = Mat::identity(n, n);
    d.view_mut((z, z), (r, r)).copy_from(&p2);
    let p = linalg::sym_part(&(s_inv.transpose() * d * &s_inv));
    let p = &p / linalg::max_abs(&p);
    if accept_marginal(&p, l) {
        Ok(p)
    } else {
        Err(Error::Infeasible(format!(
            "construction left λ̲(P𝓛 + 𝓛ᵀP) = {:.3e}",
            marginal_residual(&p, l)
        )))
    }
}

/// Symmetric `P` with `P·acl + aclᵀ·P = −2·rate·I`.
pub fn solve_p_io(acl: &Mat, rate: f64) -> Result<Mat> {
    let abscissa = linalg::spectral_abscissa(acl);
    if acl.nrows() > 0 && !(abscissa < 0.0) {
        return Err(Error::NotHurwitz(abscissa));
    }
    if !(rate > 0.0) {
        return Err(Error::InvalidGain(format!("rate must be positive, got {rate}")));
    }
    let n = acl.nrows();
    linalg::lyapunov(acl, &(Mat::identity(n, n) * (2.0 * rate)))
}

/// Time per period each agent spends inside `𝒱_i` (and outside it).
#[derive(Debug, Clone, Serialize)]
pub struct DwellMeasures {
    pub block: usize,
    /// `m(T_{k,i})` indexed by agent `k`.
    pub inside: Vec<f64>,
    /// `m(Tᶜ_{k,i})` indexed by agent `k`.
    pub outside: Vec<f64>,
}

pub fn dwell_measures(s: &SwitchingSchedule, i: usize) -> Result<DwellMeasures> {
    let n = s.n();
    if i >= n {
        return Err(Error::NodeOutOfRange { node: i, n });
    }
    let tau = s.dwell();
    let mut inside = vec![0.0; n];
    for slot in 0..s.slots() {
        for k in digraph::member_set(s.slot_graph(slot), i)? {
            inside[k] += tau;
        }
    }
    let outside = inside.iter().map(|m| (s.period() - m).max(0.0)).collect();
    Ok(DwellMeasures {
        block: i,
        inside,
        outside,
    })
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Matrices for one block under one library graph.
#[derive(Debug, Clone, Serialize)]
pub struct SlotCertificate {
    pub graph: usize,
    pub pi: usize,
    pub q_matrix: Vec<f64>,
    /// `λ̲(Q𝓗 + 𝓗ᵀQ)` re-evaluated independently (should exceed 2).
    pub q_check: Option<f64>,
    pub p_iu: Vec<Vec<f64>>,
    /// `λ̲(P_iu𝓛 + 𝓛ᵀP_iu)` re-evaluated (should be ≥ −tol).
    pub p_iu_check: Option<f64>,
    pub p_iu_min: Option<f64>,
    pub xi1_bar: Option<f64>,
    pub xi2_bar: Option<f64>,
    pub xi_diamond_bar: Option<f64>,
    pub q_bar: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairCheck {
    pub agent: usize,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub block: usize,
    pub slots: Vec<SlotCertificate>,
    pub p_io: Vec<Vec<f64>>,
    /// Residual of the `P_io` equation, re-evaluated.
    pub p_io_residual: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    pub xi1_bar: f64,
    pub xi2_bar: f64,
    pub xi_diamond_bar: f64,
    pub lambda_bar_i: f64,
    pub p_iu_min: f64,
    pub measures: DwellMeasures,
    pub gain_lhs: f64,
    pub gain_rhs: f64,
    pub gain_margin: f64,
    pub gain_pass: bool,
    pub dwell: Vec<PairCheck>,
    pub dwell_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub wp: f64,
    pub diamond: DiamondBlock,
    pub blocks: Vec<BlockReport>,
    /// Smallest `℘` for which the second inequality could hold with these
    /// gains (`inf` when no `℘` works).
    pub wp_lower_bound: f64,
    pub gain_pass: bool,
    pub dwell_pass: bool,
    pub pass: bool,
}

/// Gain-independent certificate pieces for one block.
#[derive(Debug, Clone)]
struct BlockGeometry {
    slots: Vec<SlotCertificate>,
    xi1_bar: f64,
    xi2_bar: f64,
    xi_diamond_bar: f64,
    p_iu_min: f64,
    q_bar: f64,
    /// `λ̄(P_io)` at unit rate; `P_io` is linear in its rate.
    p_io_unit: Mat,
    measures: DwellMeasures,
}

fn fold_max(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    it.flatten().reduce(f64::max)
}

fn slot_certificate(
    g: &Digraph,
    graph: usize,
    i: usize,
    a_io: &Mat,
    a_diamond: &Mat,
    hc: &Mat,
    opts: &CertifyOptions,
) -> Result<SlotCertificate> {
    let tg = digraph::transform(g, i)?;
    let mats = digraph::subgraph_matrices(&tg);
    let (q, q_check, xi1, xi2, q_bar) = if mats.pi > 0 {
        let q = solve_diag_q_with(&mats.h_matrix, opts.q_margin)?;
        let check = linalg::lambda_min_sym(&(&q * &mats.h_matrix * 2.0));
        let xi1 = linalg::lambda_max_sym(&q.kronecker(a_io));
        let xi2 = linalg::lambda_max_sym(&(&q * &mats.b_star).kronecker(hc));
        let qbar = linalg::lambda_max_sym(&q);
        (
            q.diagonal().iter().copied().collect(),
            Some(check),
            Some(xi1),
            Some(xi2),
            Some(qbar),
        )
    } else {
        (Vec::new(), None, None, None, None)
    };
    let lc = &mats.complement_laplacian;
    let (p_iu, p_check, p_min, xid) = if lc.nrows() > 0 {
        let p = solve_marginal_p(lc)?;
        let check = linalg::lambda_min_sym(&(&p * lc * 2.0));
        let pmin = linalg::lambda_min_sym(&p);
        let xid = linalg::lambda_max_sym(&(&p * 2.0).kronecker(a_diamond));
        (rows(&p), Some(check), Some(pmin), Some(xid))
    } else {
        (Vec::new(), None, None, None)
    };
    Ok(SlotCertificate {
        graph,
        pi: mats.pi,
        q_matrix: q,
        q_check,
        p_iu,
        p_iu_check: p_check,
        p_iu_min: p_min,
        xi1_bar: xi1,
        xi2_bar: xi2,
        xi_diamond_bar: xid,
        q_bar,
    })
}

fn block_geometry(
    dec: &Decomposition,
    gains: &ObserverGains,
    s: &SwitchingSchedule,
    i: usize,
    opts: &CertifyOptions,
) -> Result<BlockGeometry> {
    let a_io = &dec.blocks_a[i];
    let a_diamond = match opts.diamond {
        DiamondBlock::Own => a_io.clone(),
        DiamondBlock::First => dec.blocks_a[0].clone(),
    };
    let hc = &gains.h_blocks[i] * &dec.blocks_c[i];
    let acl = a_io - &hc;
    let p_io_unit = solve_p_io(&acl, 1.0)?;
    let slots = s
        .used_graphs()
        .into_iter()
        .map(|gid| slot_certificate(&s.library()[gid], gid, i, a_io, &a_diamond, &hc, opts))
        .collect::<Result<Vec<_>>>()?;
    let measures = dwell_measures(s, i)?;
    if a_io.nrows() == 0 {
        // no state to estimate: nothing to bound
        return Ok(BlockGeometry {
            slots,
            xi1_bar: 0.0,
            xi2_bar: 0.0,
            xi_diamond_bar: 0.0,
            p_iu_min: 1.0,
            q_bar: 0.0,
            p_io_unit,
            measures,
        });
    }
    Ok(BlockGeometry {
        xi1_bar: fold_max(slots.iter().map(|c| c.xi1_bar)).unwrap_or(0.0),
        xi2_bar: fold_max(slots.iter().map(|c| c.xi2_bar)).unwrap_or(0.0),
        xi_diamond_bar: fold_max(slots.iter().map(|c| c.xi_diamond_bar)).unwrap_or(0.0),
        q_bar: fold_max(slots.iter().map(|c| c.q_bar)).unwrap_or(0.0),
        p_iu_min: slots.iter().filter_map(|c| c.p_iu_min).reduce(f64::min).unwrap_or(1.0),
        slots,
        p_io_unit,
        measures,
    })
}

fn geometry(
    dec: &Decomposition,
    gains: &ObserverGains,
    s: &SwitchingSchedule,
    opts: &CertifyOptions,
) -> Result<Vec<BlockGeometry>> {
    let n = dec.blocks();
    if s.n() != n {
        return Err(Error::Dimension(format!(
            "schedule has {} agents, plant has {n}",
            s.n()
        )));
    }
    if gains.h_blocks.len() != n {
        return Err(Error::Dimension("one observer gain per block required".into()));
    }
    let geo: Vec<Result<BlockGeometry>> = (0..n)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&i| block_geometry(dec, gains, s, i, opts))
        .collect();
    let geo = geo.into_iter().collect::<Result<Vec<_>>>()?;
    for g in &geo {
        if let Some(k) = g.measures.inside.iter().position(|&m| m <= 0.0) {
            return Err(Error::StructuralFailure {
                agent: k,
                block: g.measures.block,
            });
        }
    }
    Ok(geo)
}

/// `max_k m(Tᶜ)/m(T) · λ̄(Ξ◇)/λ̲(P_iu)`; the second inequality reads
/// `℘ > factor · λ̄_i`.
fn diamond_factor(g: &BlockGeometry) -> f64 {
    let ratio = g
        .measures
        .inside
        .iter()
        .zip(&g.measures.outside)
        .map(|(i, o)| o / i)
        .fold(0.0_f64, f64::max);
    if ratio == 0.0 {
        0.0
    } else {
        g.xi_diamond_bar / g.p_iu_min * ratio
    }
}

/// Smallest `℘` satisfying the second inequality for block `g` when its
/// largest coupling gain is `gamma_upper`; `inf` when none exists.
///
/// `λ̄_i = max(λ̄(P_io), q̄)` and `P_io` scales with `γ̄_i + ℘`, so the
/// inequality is `℘ > K·max((γ̄+℘)p, q̄)`, solvable iff `K·p < 1`.
fn wp_bound_block(g: &BlockGeometry, gamma_upper: f64) -> f64 {
    let k = diamond_factor(g);
    if k <= 0.0 {
        return 0.0;
    }
    if g.p_io_unit.nrows() == 0 {
        return 0.0;
    }
    let p = linalg::lambda_max_sym(&g.p_io_unit);
    if k * p >= 1.0 {
        return f64::INFINITY;
    }
    (k * p * gamma_upper / (1.0 - k * p)).max(k * g.q_bar)
}

fn gamma_column(coupling: &Mat, i: usize) -> (f64, f64) {
    let col = coupling.column(i);
    (col.min(), col.max())
}

/// Evaluate both inequalities.
///
/// `coupling[(j, i)]` is `γ_{j,i}`, the gain agent `j` uses on block `i`
/// inside the subgraph rooted at `i`.
pub fn check_theorem1(
    dec: &Decomposition,
    gains: &ObserverGains,
    coupling: &Mat,
    s: &SwitchingSchedule,
    wp: f64,
) -> Result<ConditionReport> {
    check_theorem1_with(dec, gains, coupling, s, wp, &CertifyOptions::default())
}

pub fn check_theorem1_with(
    dec: &Decomposition,
    gains: &ObserverGains,
    coupling: &Mat,
    s: &SwitchingSchedule,
    wp: f64,
    opts: &CertifyOptions,
) -> Result<ConditionReport> {
    if !(wp > 0.0) {
        return Err(Error::InvalidGain(format!("℘ must be positive, got {wp}")));
    }
    let n = dec.blocks();
    if coupling.shape() != (n, n) {
        return Err(Error::Dimension("coupling gains must be N×N".into()));
    }
    if coupling.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidGain("coupling gains must be positive".into()));
    }
    let geo = geometry(dec, gains, s, opts)?;
    let mut blocks = Vec::with_capacity(n);
    let mut wp_lower: f64 = 0.0;
    for (i, g) in geo.into_iter().enumerate() {
        let (lo, hi) = gamma_column(coupling, i);
        let p_io = &g.p_io_unit * (hi + wp);
        let acl = &dec.blocks_a[i] - &gains.h_blocks[i] * &dec.blocks_c[i];
        let v = acl.nrows();
        let p_io_residual = if v > 0 {
            linalg::max_abs(&(&p_io * &acl + acl.transpose() * &p_io + Mat::identity(v, v) * (2.0 * (hi + wp))))
        } else {
            0.0
        };
        let lambda_bar_i = if v > 0 {
            linalg::lambda_max_sym(&p_io).max(g.q_bar)
        } else {
            0.0
        };
        let gain_lhs = lo * lo;
        let gain_rhs = g.xi1_bar + 0.25 * g.xi2_bar * g.xi2_bar + wp;
        let scale = lambda_bar_i * g.xi_diamond_bar / g.p_iu_min;
        let dwell: Vec<PairCheck> = (0..n)
            .map(|k| {
                let ratio = g.measures.outside[k] / g.measures.inside[k];
                let rhs = if ratio == 0.0 { 0.0 } else { scale * ratio };
                PairCheck {
                    agent: k,
                    rhs,
                    margin: wp - rhs,
                    pass: wp > rhs,
                }
            })
            .collect();
        wp_lower = wp_lower.max(wp_bound_block(&g, hi));
        let dwell_pass = dwell.iter().all(|c| c.pass);
        blocks.push(BlockReport {
            block: i,
            p_io: rows(&p_io),
            p_io_residual,
            gamma_lower: lo,
            gamma_upper: hi,
            xi1_bar: g.xi1_bar,
            xi2_bar: g.xi2_bar,
            xi_diamond_bar: g.xi_diamond_bar,
            lambda_bar_i,
            p_iu_min: g.p_iu_min,
            gain_lhs,
            gain_rhs,
            gain_margin: gain_lhs - gain_rhs,
            gain_pass: v == 0 || gain_lhs > gain_rhs,
            dwell,
            dwell_pass,
            measures: g.measures,
            slots: g.slots,
        });
    }
    let gain_pass = blocks.iter().all(|b| b.gain_pass);
    let dwell_pass = blocks.iter().all(|b| b.dwell_pass);
    Ok(ConditionReport {
        wp,
        diamond: opts.diamond,
        blocks,
        wp_lower_bound: wp_lower,
        gain_pass,
        dwell_pass,
        pass: gain_pass && dwell_pass,
    })
}

/// Certified gain table and the `℘` it was computed for.
#[derive(Debug, Clone, Serialize)]
pub struct GainSuggestion {
    pub wp: f64,
    /// `γ̲_i` per block.
    pub per_block: Vec<f64>,
    /// Smallest `℘` the second inequality admits with these gains.
    pub wp_lower_bound: f64,
    pub dwell_feasible: bool,
    #[serde(skip)]
    pub table: Mat,
}

/// Smallest uniform `γ̲_i` per block meeting the first inequality with a
/// 10% margin on the squared gain.
pub fn suggest_gains(
    dec: &Decomposition,
    gains: &ObserverGains,
    s: &SwitchingSchedule,
    wp: f64,
) -> Result<GainSuggestion> {
    suggest_gains_with(dec, gains, s, wp, &CertifyOptions::default())
}

pub fn suggest_gains_with(
    dec: &Decomposition,
    gains: &ObserverGains,
    s: &SwitchingSchedule,
    wp: f64,
    opts: &CertifyOptions,
) -> Result<GainSuggestion> {
    if !(wp > 0.0) {
        return Err(Error::InvalidGain(format!("℘ must be positive, got {wp}")));
    }
    let geo = geometry(dec, gains, s, opts)?;
    let n = dec.blocks();
    let mut per_block = Vec::with_capacity(n);
    let mut wp_lower: f64 = 0.0;
    for g in &geo {
        let need = (1.0 + GAIN_MARGIN) * (g.xi1_bar + 0.25 * g.xi2_bar * g.xi2_bar + wp);
        let gamma = bisect_gain(need.max(0.0));
        per_block.push(gamma);
        wp_lower = wp_lower.max(wp_bound_block(g, gamma));
    }
    let table = Mat::from_fn(n, n, |_, i| per_block[i]);
    Ok(GainSuggestion {
        wp,
        per_block,
        wp_lower_bound: wp_lower,
        dwell_feasible: wp > wp_lower,
        table,
    })
}

/// Smallest `γ` with `γ² ≥ need`, by monotone bisection on `γ ↦ γ²`.
fn bisect_gain(need: f64) -> f64 {
    const FLOOR: f64 = 1e-3;
    if need <= FLOOR * FLOOR {
        return FLOOR;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi * hi < need {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid >= need {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// `℘` choice from the fixed-point rule: starting at `℘ = 1`, repeatedly
/// suggest gains for `℘` and move `℘` to 1.5× the resulting lower bound.
#[derive(Debug, Clone, Serialize)]
pub struct WpChoice {
    pub wp: f64,
    pub lower_bound: f64,
    pub feasible: bool,
    pub iterations: usize,
}

pub fn choose_wp(dec: &Decomposition, gains: &ObserverGains, s: &SwitchingSchedule) -> Result<WpChoice> {
    let mut wp = 1.0;
    for it in 1..=100 {
        let sug = suggest_gains(dec, gains, s, wp)?;
        let bound = sug.wp_lower_bound;
        if !bound.is_finite() {
            return Ok(WpChoice {
                wp,
                lower_bound: bound,
                feasible: false,
                iterations: it,
            });
        }
        let next = if bound > 0.0 { 1.5 * bound } else { 1.0 };
        if (next - wp).abs() <= 1e-9 * wp.max(1.0) || (wp > bound && next <= wp) {
            return Ok(WpChoice {
                wp,
                lower_bound: bound,
                feasible: wp > bound,
                iterations: it,
            });
        }
        wp = next;
    }
    let bound = suggest_gains(dec, gains, s, wp)?.wp_lower_bound;
    Ok(WpChoice {
        wp,
        lower_bound: bound,
        feasible: wp > bound,
        iterations: 100,
    })
}
