//! Entropic Gromov-Wasserstein matching between centroids and symbol
//! embeddings, plus the optional Procrustes alignment of the two spaces.
//!
//! The solver minimizes
//!
//! ```text
//! sum_ijkl (S_ik - S'_jl)^2  G_ij G_kl  -  eps H(G)
//! s.t. G 1 = p,  G^T 1 = q,  G >= 0
//! ```
//!
//! by alternating a loss-matrix update
//! `L <- S^2 p 1^T + 1 q^T S'^2 - 2 S G S'` (squares elementwise) with
//! Sinkhorn scalings `a <- p / Kb`, `b <- q / K^T a`, `K = exp(-L/eps)`,
//! and `G <- diag(a) K diag(b)`. Scalings switch to log-domain potentials
//! whenever `(max L - min L)/eps` would underflow `exp`.

use nalgebra::DMatrix;

use crate::corpus::UnigramDistribution;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, squared_distance, EmbeddingMatrix, RoleTag};

/// Outer-loop fixed-point tolerance on `max |G_next - G|`.
const OUTER_TOL: f64 = 1e-9;
/// Residual at which a projection counts as feasible (the published
/// contract is 1e-6; this keeps a 5x margin).
const FEAS_TOL: f64 = 2e-7;
/// Absolute cap on scaling pairs per projection.
const HARD_PAIR_CAP: usize = 2_000_000;

/// Pairwise squared-distance matrices of the two vector sets.
#[derive(Debug, Clone)]
pub struct DistancePair {
    /// `n x n` squared distances among centroids.
    pub s: EmbeddingMatrix,
    /// `m x m` squared distances among embeddings.
    pub s_prime: EmbeddingMatrix,
}

/// The transport plan with its marginals and solve metadata.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub gamma: EmbeddingMatrix,
    pub p: UnigramDistribution,
    pub q: UnigramDistribution,
    pub epsilon: f64,
    pub iterations_run: usize,
    /// Unregularized GW cost after each outer iteration.
    pub objective_trace: Vec<f64>,
}

impl CouplingMatrix {
    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn m(&self) -> usize {
        self.gamma.dim()
    }

    /// Largest deviation of the row/column sums from `p`/`q`.
    pub fn marginal_residual(&self) -> f64 {
        let (n, m) = (self.n(), self.m());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row_sum: f64 = self.gamma.row(i).iter().sum();
            worst = worst.max((row_sum - self.p.weight(i)).abs());
        }
        for j in 0..m {
            let col_sum: f64 = (0..n).map(|i| self.gamma.get(i, j)).sum();
            worst = worst.max((col_sum - self.q.weight(j)).abs());
        }
        worst
    }

    /// Sum of row entropies of the plan, `-sum_ij G_ij ln G_ij`.
    pub fn entropy(&self) -> f64 {
        self.gamma
            .data()
            .iter()
            .filter(|&&g| g > 0.0)
            .map(|&g| -g * g.ln())
            .sum()
    }
}

/// Orthogonal map between the two spaces; the projected centroid is
/// `c_hat = A^T c`.
#[derive(Debug, Clone)]
pub struct AlignmentMap {
    pub a: EmbeddingMatrix,
}

impl AlignmentMap {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// Applies `A^T` to one vector.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|r| (0..d).map(|k| self.a.get(k, r) * v[k]).sum())
            .collect()
    }

    /// Applies `A^T` to every row.
    pub fn project_matrix(&self, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if m.dim() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "cannot project dim {} through a {}x{} map",
                m.dim(),
                self.dim(),
                self.dim()
            )));
        }
        let rows = m.iter_rows().map(|r| self.project(r)).collect();
        EmbeddingMatrix::from_rows(rows, m.role())
    }
}

/// Centers rows on their mean and scales each to unit norm. Rows that are
/// exactly the mean stay zero.
pub fn preprocess(vectors: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if vectors.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "preprocess needs at least 2 rows".into(),
        ));
    }
    let mean = vectors.mean_row();
    let mut out = vectors.clone();
    for i in 0..out.nrows() {
        let row = out.row_mut(i);
        for (x, m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
        let len = norm(row);
        if len > 0.0 {
            for x in row.iter_mut() {
                *x /= len;
            }
        }
    }
    Ok(out)
}

/// Squared Euclidean distance matrices for both vector sets.
pub fn distance_matrices(
    centroids: &EmbeddingMatrix,
    embeddings: &EmbeddingMatrix,
) -> DistancePair {
    DistancePair {
        s: self_distances(centroids),
        s_prime: self_distances(embeddings),
    }
}

fn self_distances(vectors: &EmbeddingMatrix) -> EmbeddingMatrix {
    let n = vectors.nrows();
    let mut out = EmbeddingMatrix::zeros(n, n, RoleTag::Frames);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(vectors.row(i), vectors.row(j));
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    out
}

struct Workspace {
    n: usize,
    m: usize,
    s: Vec<f64>,        // n x n
    sp: Vec<f64>,       // m x m
    row_term: Vec<f64>, // (S^2 p)_i
    col_term: Vec<f64>, // (S'^2 q)_j
    s_sq: Vec<f64>,
    sp_sq: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Workspace {
    /// `B = S G S'` with S' symmetric; `n x m`.
    fn cross_product(&self, gamma: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        // M = S G
        let mut mid = vec![0.0; n * m];
        for i in 0..n {
            for k in 0..n {
                let s_ik = self.s[i * n + k];
                if s_ik == 0.0 {
                    continue;
                }
                let src = &gamma[k * m..(k + 1) * m];
                let dst = &mut mid[i * m..(i + 1) * m];
                for (d, g) in dst.iter_mut().zip(src) {
                    *d += s_ik * g;
                }
            }
        }
        // B = M S'
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for l in 0..m {
                let m_il = mid[i * m + l];
                if m_il == 0.0 {
                    continue;
                }
                let src = &self.sp[l * m..(l + 1) * m];
                let dst = &mut out[i * m..(i + 1) * m];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += m_il * s;
                }
            }
        }
        out
    }

    /// Unregularized GW cost of a plan, using its actual marginals.
    fn cost(&self, gamma: &[f64], cross: &[f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let mut mu = vec![0.0; n];
        let mut nu = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                let g = gamma[i * m + j];
                mu[i] += g;
                nu[j] += g;
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..n {
                total += self.s_sq[i * n + k] * mu[i] * mu[k];
            }
        }
        for j in 0..m {
            for l in 0..m {
                total += self.sp_sq[j * m + l] * nu[j] * nu[l];
            }
        }
        for (g, b) in gamma.iter().zip(cross) {
            total -= 2.0 * g * b;
        }
        total
    }

    fn loss_matrix(&self, cross: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut l = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                l[i * m + j] = self.row_term[i] + self.col_term[j] - 2.0 * cross[i * m + j];
            }
        }
        l
    }
}

/// Solves the entropically regularized GW problem.
///
/// The plan starts at the product coupling `p q^T`, so the solve is
/// deterministic; `_seed` is reserved for optional random restarts and is
/// not consumed on the default path. The outer loop stops early once the
/// plan is stationary (`max |G_next - G| < 1e-9`).
pub fn entropic_gw(
    dp: &DistancePair,
    p: &UnigramDistribution,
    q: &UnigramDistribution,
    epsilon: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    _seed: u64,
) -> Result<CouplingMatrix> {
    let n = p.len();
    let m = q.len();
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if dp.s.nrows() != n || dp.s.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "S is {}x{} but p has {n} entries",
            dp.s.nrows(),
            dp.s.dim()
        )));
    }
    if dp.s_prime.nrows() != m || dp.s_prime.dim() != m {
        return Err(Error::InvalidArgument(format!(
            "S' is {}x{} but q has {m} entries",
            dp.s_prime.nrows(),
            dp.s_prime.dim()
        )));
    }
    if outer_iterations == 0 || inner_iterations == 0 {
        return Err(Error::InvalidArgument(
            "iteration budgets must be at least 1".into(),
        ));
    }

    let s = dp.s.data().to_vec();
    let sp = dp.s_prime.data().to_vec();
    let s_sq: Vec<f64> = s.iter().map(|v| v * v).collect();
    let sp_sq: Vec<f64> = sp.iter().map(|v| v * v).collect();
    let pv = p.weights().to_vec();
    let qv = q.weights().to_vec();
    let row_term: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|k| s_sq[i * n + k] * pv[k]).sum())
        .collect();
    let col_term: Vec<f64> = (0..m)
        .map(|j| (0..m).map(|l| sp_sq[j * m + l] * qv[l]).sum())
        .collect();
    let ws = Workspace {
        n,
        m,
        s,
        sp,
        row_term,
        col_term,
        s_sq,
        sp_sq,
        p: pv,
        q: qv,
    };

    // Max-entropy start: the product coupling. The scaling potentials
    // persist across outer iterations (the iteration block carries a and b
    // forward; each outer step refines them against the new loss matrix).
    let mut gamma: Vec<f64> = (0..n * m)
        .map(|idx| ws.p[idx / m] * ws.q[idx % m])
        .collect();
    let mut cross = ws.cross_product(&gamma);
    let mut scaling = Scaling::fresh(&ws);
    let mut trace = Vec::new();
    let mut iterations_run = 0;

    for t in 0..outer_iterations {
        let loss = ws.loss_matrix(&cross);
        scaling.project(&ws, &loss, epsilon, inner_iterations, t)?;
        let next = scaling.plan(&ws, &loss, epsilon, t)?;
        let next_cross = ws.cross_product(&next);
        trace.push(ws.cost(&next, &next_cross));
        let delta = gamma
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        gamma = next;
        cross = next_cross;
        iterations_run = t + 1;
        if delta < OUTER_TOL {
            break;
        }
    }

    // Every projection ends feasible, so this is a backstop contract check.
    let residual = marginal_residual_of(&gamma, &ws);
    if residual > 1e-6 || gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            iteration: iterations_run,
            message: format!("coupling infeasible, marginal residual {residual}"),
        });
    }

    Ok(CouplingMatrix {
        gamma: EmbeddingMatrix::new(n, m, gamma, RoleTag::Frames)?,
        p: p.clone(),
        q: q.clone(),
        epsilon,
        iterations_run,
        objective_trace: trace,
    })
}

fn marginal_residual_of(gamma: &[f64], ws: &Workspace) -> f64 {
    let (n, m) = (ws.n, ws.m);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row: f64 = gamma[i * m..(i + 1) * m].iter().sum();
        worst = worst.max((row - ws.p[i]).abs());
    }
    for j in 0..m {
        let col: f64 = (0..n).map(|i| gamma[i * m + j]).sum();
        worst = worst.max((col - ws.q[j]).abs());
    }
    worst
}

/// Dual scaling potentials `(phi, psi)` of the Sinkhorn projection, carried
/// across outer iterations; the plan is `G_ij = exp((phi_i + psi_j -
/// L_ij)/eps)`. Zero-mass rows/columns are pinned at `-inf` and their plan
/// entries stay exactly zero.
struct Scaling {
    phi: Vec<f64>,
    psi: Vec<f64>,
}

impl Scaling {
    fn fresh(ws: &Workspace) -> Self {
        let phi =
            ws.p.iter()
                .map(|&x| if x > 0.0 { 0.0 } else { f64::NEG_INFINITY })
                .collect();
        let psi =
            ws.q.iter()
                .map(|&x| if x > 0.0 { 0.0 } else { f64::NEG_INFINITY })
                .collect();
        Self { phi, psi }
    }

    /// Projects the current potentials onto `loss` until the plan is
    /// marginally feasible (columns are exact after each psi-update; rows
    /// must agree within [`FEAS_TOL`]). `min_pairs` scaling pairs run first;
    /// if the residual is still out of tolerance the budget grows, because a
    /// partially projected plan would poison the next loss matrix. Uses
    /// plain matrix scaling on the absorbed kernel when its exponent range
    /// is safe, log-sum-exp updates otherwise.
    fn project(
        &mut self,
        ws: &Workspace,
        loss: &[f64],
        epsilon: f64,
        min_pairs: usize,
        outer_index: usize,
    ) -> Result<()> {
        if loss.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: outer_index,
                message: "non-finite loss matrix".into(),
            });
        }
        let mut budget = min_pairs.max(1);
        let mut spent = 0usize;
        loop {
            let chunk = budget - spent;
            if !self.try_plain(ws, loss, epsilon, chunk) {
                self.project_log(ws, loss, epsilon, chunk);
            }
            spent = budget;
            let residual = self.row_residual(ws, loss, epsilon);
            if residual < FEAS_TOL {
                return Ok(());
            }
            if spent >= HARD_PAIR_CAP {
                // Feasible within the published contract still counts.
                if residual <= 1e-6 {
                    return Ok(());
                }
                return Err(Error::Numerical {
                    iteration: outer_index,
                    message: format!(
                        "scaling stalled after {spent} update pairs, residual {residual}"
                    ),
                });
            }
            budget = (budget.saturating_mul(4)).min(HARD_PAIR_CAP);
        }
    }

    /// Max row-sum deviation of the implied plan from `p`, computed in the
    /// log domain so it is safe for any potential state.
    fn row_residual(&self, ws: &Workspace, loss: &[f64], epsilon: f64) -> f64 {
        let (n, m) = (ws.n, ws.m);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if self.phi[i] == f64::NEG_INFINITY {
                continue;
            }
            let mut max = f64::NEG_INFINITY;
            for j in 0..m {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                let t = (self.phi[i] + self.psi[j] - loss[i * m + j]) / epsilon;
                if t > max {
                    max = t;
                }
            }
            if max == f64::NEG_INFINITY {
                worst = worst.max(ws.p[i]);
                continue;
            }
            let mut sum = 0.0;
            for j in 0..m {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                sum += ((self.phi[i] + self.psi[j] - loss[i * m + j]) / epsilon - max).exp();
            }
            let row_sum = (max + sum.ln()).exp();
            worst = worst.max((row_sum - ws.p[i]).abs());
        }
        worst
    }

    /// Absorbed-kernel fast path: with `Lt_ij = L_ij - phi_i - psi_j`,
    /// iterate `u <- p / (E v)`, `v <- q / (E^T u)` on `E = exp(-(Lt -
    /// s)/eps)` and fold `u`, `v`, `s` back into the potentials. Shifting by
    /// the support minimum keeps entries in `[0, 1]`; entries that underflow
    /// to zero are negligible in the plan anyway. Returns false (leaving the
    /// potentials untouched) when a scaling degenerates (a needed row or
    /// column of the kernel vanishes), which sends this projection chunk to
    /// the log path.
    fn try_plain(&mut self, ws: &Workspace, loss: &[f64], epsilon: f64, budget: usize) -> bool {
        let (n, m) = (ws.n, ws.m);
        let mut lo = f64::INFINITY;
        for i in 0..n {
            if self.phi[i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..m {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                let lt = loss[i * m + j] - self.phi[i] - self.psi[j];
                lo = lo.min(lt);
            }
        }
        if !lo.is_finite() {
            return false;
        }
        let mut kernel = vec![0.0; n * m];
        for i in 0..n {
            if self.phi[i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..m {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                kernel[i * m + j] =
                    (-(loss[i * m + j] - self.phi[i] - self.psi[j] - lo) / epsilon).exp();
            }
        }
        let mut u: Vec<f64> =
            ws.p.iter()
                .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
                .collect();
        let mut v: Vec<f64> =
            ws.q.iter()
                .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
                .collect();
        let rows_live: Vec<usize> = (0..n).filter(|&i| ws.p[i] > 0.0).collect();
        let cols_live: Vec<usize> = (0..m).filter(|&j| ws.q[j] > 0.0).collect();
        let mut ev = vec![0.0; n];
        let apply_rows = |v: &[f64], ev: &mut Vec<f64>| {
            for i in 0..n {
                ev[i] = dot(&kernel[i * m..(i + 1) * m], v);
            }
        };
        apply_rows(&v, &mut ev);

        // Near-tied assignment margins make the scaling tail converge at a
        // linear rate close to 1. The iterates then move along one dominant
        // eigendirection, so a geometric (Aitken) extrapolation of the log
        // scalings jumps most of that tail: snapshot every SNAP pairs,
        // estimate the contraction from two successive snapshot deltas, and
        // extend the last delta by rho/(1-rho).
        const SNAP: usize = 256;
        let mut snapshot: Option<Vec<f64>> = None;
        let mut prev_delta_norm: Option<f64> = None;
        let log_state = |u: &[f64], v: &[f64]| -> Vec<f64> {
            rows_live
                .iter()
                .map(|&i| u[i].ln())
                .chain(cols_live.iter().map(|&j| v[j].ln()))
                .collect()
        };

        for pair in 0..budget {
            for i in 0..n {
                if ws.p[i] > 0.0 {
                    u[i] = ws.p[i] / ev[i];
                    if !u[i].is_finite() {
                        return false;
                    }
                }
            }
            for j in 0..m {
                if ws.q[j] > 0.0 {
                    let etu: f64 = (0..n).map(|i| kernel[i * m + j] * u[i]).sum();
                    v[j] = ws.q[j] / etu;
                    if !v[j].is_finite() {
                        return false;
                    }
                }
            }
            apply_rows(&v, &mut ev);
            let row_residual = rows_live
                .iter()
                .map(|&i| (u[i] * ev[i] - ws.p[i]).abs())
                .fold(0.0f64, f64::max);
            if row_residual < FEAS_TOL {
                break;
            }

            if (pair + 1) % SNAP == 0 {
                let current = log_state(&u, &v);
                if let Some(prev) = snapshot.take() {
                    let delta: Vec<f64> = current.iter().zip(&prev).map(|(c, p)| c - p).collect();
                    let delta_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
                    if let Some(pn) = prev_delta_norm {
                        let rho = delta_norm / pn;
                        if pn > 0.0 && delta_norm > 0.0 && (0.5..0.999_95).contains(&rho) {
                            let factor = (rho / (1.0 - rho)).min(1e7);
                            let nr = rows_live.len();
                            for (idx, &i) in rows_live.iter().enumerate() {
                                let step = (delta[idx] * factor).clamp(-300.0, 300.0);
                                u[i] *= step.exp();
                            }
                            for (idx, &j) in cols_live.iter().enumerate() {
                                let step = (delta[nr + idx] * factor).clamp(-300.0, 300.0);
                                v[j] *= step.exp();
                            }
                            apply_rows(&v, &mut ev);
                            prev_delta_norm = None;
                            continue;
                        }
                    }
                    prev_delta_norm = Some(delta_norm);
                    snapshot = Some(current);
                } else {
                    snapshot = Some(current);
                }
            }
        }
        for i in 0..n {
            if ws.p[i] > 0.0 {
                // ln u can be -inf only if u hit zero, caught above.
                self.phi[i] += epsilon * u[i].ln() + lo;
            }
        }
        for j in 0..m {
            if ws.q[j] > 0.0 {
                self.psi[j] += epsilon * v[j].ln();
            }
        }
        true
    }

    fn project_log(&mut self, ws: &Workspace, loss: &[f64], epsilon: f64, budget: usize) {
        let (n, m) = (ws.n, ws.m);
        let log_p: Vec<f64> =
            ws.p.iter()
                .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
                .collect();
        let log_q: Vec<f64> =
            ws.q.iter()
                .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
                .collect();

        let lse_row = |i: usize, psi: &[f64]| -> f64 {
            let mut max = f64::NEG_INFINITY;
            for j in 0..m {
                if psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                let t = (psi[j] - loss[i * m + j]) / epsilon;
                if t > max {
                    max = t;
                }
            }
            if max == f64::NEG_INFINITY {
                return max;
            }
            let mut sum = 0.0;
            for j in 0..m {
                if psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                sum += ((psi[j] - loss[i * m + j]) / epsilon - max).exp();
            }
            max + sum.ln()
        };
        let lse_col = |j: usize, phi: &[f64]| -> f64 {
            let mut max = f64::NEG_INFINITY;
            for i in 0..n {
                if phi[i] == f64::NEG_INFINITY {
                    continue;
                }
                let t = (phi[i] - loss[i * m + j]) / epsilon;
                if t > max {
                    max = t;
                }
            }
            if max == f64::NEG_INFINITY {
                return max;
            }
            let mut sum = 0.0;
            for i in 0..n {
                if phi[i] == f64::NEG_INFINITY {
                    continue;
                }
                sum += ((phi[i] - loss[i * m + j]) / epsilon - max).exp();
            }
            max + sum.ln()
        };

        for _ in 0..budget {
            for i in 0..n {
                if log_p[i].is_infinite() {
                    continue;
                }
                self.phi[i] = epsilon * (log_p[i] - lse_row(i, &self.psi));
            }
            for j in 0..m {
                if log_q[j].is_infinite() {
                    continue;
                }
                self.psi[j] = epsilon * (log_q[j] - lse_col(j, &self.phi));
            }
            // Columns are exact after the psi-update; track rows.
            let mut row_residual: f64 = 0.0;
            for i in 0..n {
                if log_p[i].is_infinite() {
                    continue;
                }
                let row_sum = (self.phi[i] / epsilon + lse_row(i, &self.psi)).exp();
                row_residual = row_residual.max((row_sum - ws.p[i]).abs());
            }
            if row_residual < FEAS_TOL {
                break;
            }
        }
    }

    /// Materializes the plan for the current potentials.
    fn plan(
        &self,
        ws: &Workspace,
        loss: &[f64],
        epsilon: f64,
        outer_index: usize,
    ) -> Result<Vec<f64>> {
        let (n, m) = (ws.n, ws.m);
        let mut gamma = vec![0.0; n * m];
        for i in 0..n {
            if self.phi[i] == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..m {
                if self.psi[j] == f64::NEG_INFINITY {
                    continue;
                }
                let g = ((self.phi[i] + self.psi[j] - loss[i * m + j]) / epsilon).exp();
                if !g.is_finite() {
                    return Err(Error::Numerical {
                        iteration: outer_index,
                        message: "overflow reconstructing the plan".into(),
                    });
                }
                gamma[i * m + j] = g;
            }
        }
        Ok(gamma)
    }
}

/// Per-centroid matched symbol: `argmax_j G_ij`, ties toward the lowest `j`.
pub fn extract_matching(coupling: &CouplingMatrix) -> Vec<usize> {
    coupling
        .gamma
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Orthogonal alignment from the SVD of the coupling-weighted
/// cross-covariance: with centroids and embeddings as columns of `C`, `Y`,
/// the SVD `C G Y^T = U Sigma V^T` yields `A = U V^T`, and `A^T c` maps a
/// centroid into the embedding space.
pub fn procrustes(
    centroids: &EmbeddingMatrix,
    embeddings: &EmbeddingMatrix,
    coupling: &CouplingMatrix,
) -> Result<AlignmentMap> {
    let d = centroids.dim();
    if embeddings.dim() != d {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: centroids {d}, embeddings {}",
            embeddings.dim()
        )));
    }
    let n = coupling.n();
    let m = coupling.m();
    if centroids.nrows() != n || embeddings.nrows() != m {
        return Err(Error::InvalidArgument(format!(
            "coupling is {n}x{m} but inputs are {}x{}",
            centroids.nrows(),
            embeddings.nrows()
        )));
    }

    // Z = G Y (n x d), then M = C Z = sum_i c_i z_i^T (d x d).
    let mut z = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..m {
            let g = coupling.gamma.get(i, j);
            if g == 0.0 {
                continue;
            }
            for (zv, y) in z[i * d..(i + 1) * d].iter_mut().zip(embeddings.row(j)) {
                *zv += g * y;
            }
        }
    }
    let mut cross = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let c = centroids.row(i);
        for r in 0..d {
            for s in 0..d {
                cross[(r, s)] += c[r] * z[i * d + s];
            }
        }
    }

    let svd = cross.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u requested");
    let v_t = svd.v_t.as_ref().expect("svd with v_t requested");
    let a = u * v_t;
    let mut data = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            data.push(a[(r, c)]);
        }
    }
    Ok(AlignmentMap {
        a: EmbeddingMatrix::new(d, d, data, RoleTag::Frames)?,
    })
}
