//! Truncated CTMC for the two-node unreliable M/M/1 tandem.
//!
//! States are `(i, n1, n2)` with `i = 0` operational and `i = 1` under repair;
//! both queues are capped at `K`. Transitions follow the balance equations of
//! the infinite chain:
//!
//! * arrival `lambda` in either phase (lost when `n1 = K`);
//! * node-1 completion `mu1` moves a packet to node 2 (blocked when `n2 = K`);
//! * node-2 completion `mu2`;
//! * breakdown `alpha` from every operational state, repair `gamma` back.
//!
//! Nothing is served during repair. The stationary vector is obtained by a
//! sparse LU solve of `Q^T pi = 0` with one equation replaced by a pin on
//! state `(0,0,0)`, followed by renormalization.

use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::Solve;
use faer::Mat;

use crate::analytic_mm1::Mm1TandemParams;
use crate::error::{Error, Result};

pub const DEFAULT_CAP_TOL: f64 = 1e-9;
pub const HARD_CAP_LIMIT: usize = 512;
const FIRST_CAP: usize = 8;
const RESIDUAL_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct State {
    pub repair: bool,
    pub n1: usize,
    pub n2: usize,
}

/// Generator in compressed-row form, diagonal included.
#[derive(Debug, Clone)]
pub struct Generator {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub rates: Vec<f64>,
}

impl Generator {
    pub fn n_states(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[s]..self.row_ptr[s + 1];
        self.cols[r.clone()].iter().copied().zip(self.rates[r].iter().copied())
    }

    pub fn outflow(&self, s: usize) -> f64 {
        self.row(s).filter(|&(c, _)| c != s).map(|(_, r)| r).sum()
    }

    /// `max_j |(pi Q)_j|`.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut acc = vec![0.0; self.n_states()];
        for (s, &p) in pi.iter().enumerate() {
            for (c, r) in self.row(s) {
                acc[c] += p * r;
            }
        }
        acc.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedChain {
    pub params: Mm1TandemParams,
    pub cap: usize,
    pub generator: Generator,
}

impl TruncatedChain {
    pub fn n_states(&self) -> usize {
        2 * (self.cap + 1) * (self.cap + 1)
    }

    pub fn index(&self, repair: bool, n1: usize, n2: usize) -> usize {
        state_index(self.cap, repair, n1, n2)
    }

    pub fn state(&self, idx: usize) -> State {
        let side = self.cap + 1;
        State {
            repair: idx >= side * side,
            n1: (idx / side) % side,
            n2: idx % side,
        }
    }
}

fn state_index(cap: usize, repair: bool, n1: usize, n2: usize) -> usize {
    let side = cap + 1;
    ((repair as usize) * side + n1) * side + n2
}

pub fn build(params: &Mm1TandemParams, cap: usize) -> Result<TruncatedChain> {
    params.validate()?;
    if cap < 1 {
        return Err(Error::InvalidParams("truncation cap must be >= 1".into()));
    }
    let Mm1TandemParams {
        lambda,
        mu1,
        mu2,
        alpha,
        gamma,
    } = *params;
    let side = cap + 1;
    let n = 2 * side * side;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(5 * n);
    let mut rates = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
    for repair in [false, true] {
        for n1 in 0..side {
            for n2 in 0..side {
                let s = state_index(cap, repair, n1, n2);
                row.clear();
                if n1 < cap {
                    row.push((state_index(cap, repair, n1 + 1, n2), lambda));
                }
                if repair {
                    row.push((state_index(cap, false, n1, n2), gamma));
                } else {
                    if n1 > 0 && n2 < cap {
                        row.push((state_index(cap, false, n1 - 1, n2 + 1), mu1));
                    }
                    if n2 > 0 {
                        row.push((state_index(cap, false, n1, n2 - 1), mu2));
                    }
                    if alpha > 0.0 {
                        row.push((state_index(cap, true, n1, n2), alpha));
                    }
                }
                let out: f64 = row.iter().map(|&(_, r)| r).sum();
                row.push((s, -out));
                row.sort_by_key(|&(c, _)| c);
                for &(c, r) in &row {
                    cols.push(c);
                    rates.push(r);
                }
                row_ptr.push(cols.len());
            }
        }
    }
    Ok(TruncatedChain {
        params: *params,
        cap,
        generator: Generator { row_ptr, cols, rates },
    })
}

/// Stationary law of a truncated chain.
#[derive(Debug, Clone)]
pub struct StationaryDist {
    pub cap: usize,
    pub probs: Vec<f64>,
    pub residual: f64,
}

impl StationaryDist {
    pub fn q(&self, repair: bool, n1: usize, n2: usize) -> f64 {
        self.probs[state_index(self.cap, repair, n1, n2)]
    }

    pub fn phase_mass(&self, repair: bool) -> f64 {
        let side = self.cap + 1;
        let start = (repair as usize) * side * side;
        self.probs[start..start + side * side].iter().sum()
    }

    /// Mass on states where either queue sits at the cap.
    pub fn boundary_mass(&self) -> f64 {
        let k = self.cap;
        let mut m = 0.0;
        for repair in [false, true] {
            for j in 0..=k {
                m += self.q(repair, k, j);
                if j < k {
                    m += self.q(repair, j, k);
                }
            }
        }
        m
    }

    /// `sum_{n,k} q_i(n,k) z1^n z2^k` over the truncated support.
    pub fn pgf_eval(&self, repair: bool, z1: f64, z2: f64) -> f64 {
        let side = self.cap + 1;
        let mut total = 0.0;
        let mut p1 = 1.0;
        for n1 in 0..side {
            // Horner in z2 for the inner sum
            let mut inner = 0.0;
            for n2 in (0..side).rev() {
                inner = inner * z2 + self.q(repair, n1, n2);
            }
            total += p1 * inner;
            p1 *= z1;
        }
        total
    }

    /// Marginal law of the node-2 queue length, both phases pooled.
    pub fn node2_marginal(&self) -> Vec<f64> {
        let side = self.cap + 1;
        let mut out = vec![0.0; side];
        for repair in [false, true] {
            for n1 in 0..side {
                for (n2, o) in out.iter_mut().enumerate() {
                    *o += self.q(repair, n1, n2);
                }
            }
        }
        out
    }

    /// Node-2 marginal restricted to one phase (`sum_n q_i(n, k)`).
    pub fn node2_marginal_in_phase(&self, repair: bool) -> Vec<f64> {
        let side = self.cap + 1;
        (0..side).map(|n2| (0..side).map(|n1| self.q(repair, n1, n2)).sum()).collect()
    }

    /// Mean number of packets in the network.
    pub fn mean_total(&self) -> f64 {
        let side = self.cap + 1;
        let mut m = 0.0;
        for repair in [false, true] {
            for n1 in 0..side {
                for n2 in 0..side {
                    m += (n1 + n2) as f64 * self.q(repair, n1, n2);
                }
            }
        }
        m
    }
}

pub fn stationary(chain: &TruncatedChain) -> Result<StationaryDist> {
    let n = chain.n_states();
    let g = &chain.generator;
    let pin = chain.index(false, 0, 0);
    // A = Q^T with the pinned row replaced by e_pin.
    let mut triplets = Vec::with_capacity(g.cols.len());
    for s in 0..n {
        for (c, r) in g.row(s) {
            if c != pin {
                triplets.push(Triplet::new(c, s, r));
            }
        }
    }
    triplets.push(Triplet::new(pin, pin, 1.0));
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Solve(format!("assembling {n}x{n} system: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Solve(format!("sparse LU of {n}x{n} system failed: {e:?}")))?;
    let mut rhs = Mat::<f64>::zeros(n, 1);
    rhs[(pin, 0)] = 1.0;
    let x = lu.solve(&rhs);

    let raw: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let total: f64 = raw.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Solve(format!("ill-conditioned solve: unnormalized mass {total:e}")));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min) / total;
    if min < -1e-12 {
        return Err(Error::Solve(format!("ill-conditioned solve: negative mass {min:e}")));
    }
    let probs: Vec<f64> = raw.iter().map(|v| (v / total).max(0.0)).collect();
    let residual = g.residual(&probs);
    if residual >= RESIDUAL_LIMIT {
        return Err(Error::Solve(format!(
            "ill-conditioned solve: residual |pi Q|_inf = {residual:e} (limit {RESIDUAL_LIMIT:e}), K = {}",
            chain.cap
        )));
    }
    Ok(StationaryDist {
        cap: chain.cap,
        probs,
        residual,
    })
}

/// Smallest cap on the doubling schedule 8, 16, ..., 512 whose boundary mass
/// is below `tol`. Requires the stability condition of the closed form.
pub fn choose_cap(params: &Mm1TandemParams, tol: f64) -> Result<(usize, StationaryDist)> {
    choose_cap_within(params, tol, HARD_CAP_LIMIT)
}

pub fn choose_cap_within(params: &Mm1TandemParams, tol: f64, limit: usize) -> Result<(usize, StationaryDist)> {
    params.validate()?;
    if !params.is_stable() {
        return Err(Error::Unstable {
            slack: params.stability_slack(),
        });
    }
    let mut cap = FIRST_CAP.min(limit.max(1));
    loop {
        let dist = stationary(&build(params, cap)?)?;
        let boundary_mass = dist.boundary_mass();
        if boundary_mass < tol {
            return Ok((cap, dist));
        }
        if cap >= limit {
            return Err(Error::OracleUnavailable { cap, boundary_mass });
        }
        cap = (cap * 2).min(limit);
    }
}
