//! TMLE update engines: the one-step logistic fluctuation along the clever
//! covariate, and the score-preserving multi-dimensional update that walks
//! the universal least-favorable submodel in small normalized steps.

use crate::data::Dataset;
use crate::glm::{OutcomeFit, OutcomeModel, PropensityModel};
use crate::num::{expit, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum TargetingError {
    #[error("clever covariate is identically zero (no treated observations); fluctuation coefficient is unidentified")]
    DegenerateTreatment,
    #[error("one-dimensional Newton did not converge in {iters} iterations (gradient trace tail: {grad_trace:?})")]
    NewtonNonConvergence { iters: usize, grad_trace: Vec<f64> },
    #[error("score-preserving update hit max_iters = {max_iters} with max |score| = {max_score} > tol = {tol}; delta may be too large or tol too tight")]
    MaxIters {
        max_iters: usize,
        max_score: f64,
        tol: f64,
        /// Tail of the per-iteration max |score| trace.
        score_trace: Vec<f64>,
    },
}

/// How the per-component stopping tolerance is chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TolMode {
    /// 1 / (sqrt(n) * ln n): solved-score error stays asymptotically
    /// negligible relative to sampling error.
    Scaled,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TargetingConfig<S: Scalar> {
    /// Step size of each normalized submodel step.
    pub delta: S,
    pub tol_mode: TolMode,
    /// Used when `tol_mode` is Fixed.
    pub tol_fixed: S,
    pub max_iters: usize,
    /// Record the full per-iteration score vectors (for trace dumps).
    pub record_trace: bool,
}

impl<S: Scalar> Default for TargetingConfig<S> {
    fn default() -> Self {
        Self {
            delta: S::cast(0.001),
            tol_mode: TolMode::Scaled,
            tol_fixed: S::cast(1e-4),
            max_iters: 100_000,
            record_trace: false,
        }
    }
}

impl<S: Scalar> TargetingConfig<S> {
    pub fn tol_for(&self, n: usize) -> S {
        match self.tol_mode {
            TolMode::Scaled => {
                let nf = n as f64;
                S::cast(1.0 / (nf.sqrt() * nf.ln()))
            }
            TolMode::Fixed => self.tol_fixed,
        }
    }
}

/// Result of a score-preserving run: accumulated fluctuation, final scores,
/// and optional traces.
#[derive(Debug, Clone)]
pub struct TargetingState<S: Scalar> {
    pub epsilon_accum: Vec<S>,
    pub score_means: Vec<S>,
    pub tol: S,
    pub iterations: usize,
    /// Per-iteration max |score mean| (always recorded; one entry per step
    /// evaluated, including the converged final evaluation).
    pub max_score_trace: Vec<S>,
    /// Full score vectors per iteration when requested.
    pub full_trace: Option<Vec<Vec<S>>>,
}

impl<S: Scalar> TargetingState<S> {
    pub fn max_score(&self) -> S {
        self.score_means
            .iter()
            .fold(S::zero(), |acc, s| acc.max(s.abs()))
    }
}

/// The TMLE fluctuation covariate A / g(W); zero for untreated rows.
pub fn clever_covariate<S: Scalar>(a: u8, g_hat: S) -> S {
    if a == 1 {
        S::one() / g_hat
    } else {
        S::zero()
    }
}

fn clever_covariates<S: Scalar>(g: &PropensityModel<S>, data: &Dataset<S>) -> (Vec<S>, Vec<S>) {
    let h_obs: Vec<S> = data
        .a()
        .iter()
        .enumerate()
        .map(|(i, &a)| clever_covariate(a, g.g(i)))
        .collect();
    let h_a1: Vec<S> = (0..data.n()).map(|i| S::one() / g.g(i)).collect();
    (h_obs, h_a1)
}

/// Observed-path fluctuation covariate for active column j at row i is
/// Phi_j(W_i), or A_i * Phi_j(W_i) for a treated-only initial fit.
fn column_rows_for_scores<S: Scalar>(
    model: &OutcomeModel<S>,
    data: &Dataset<S>,
    j: usize,
) -> Vec<u32> {
    match model.fit_population {
        OutcomeFit::All => model.design.cols[j].rows.clone(),
        OutcomeFit::TreatedOnly => model.design.cols[j]
            .rows
            .iter()
            .copied()
            .filter(|&i| data.a()[i as usize] == 1)
            .collect(),
    }
}

/// Stacked empirical score means of the (d~+1)-dimensional submodel:
/// component 0 is the clever-covariate score, the rest are the relaxed-fit
/// basis scores over the active set, all evaluated at the current offsets.
pub fn sp_score_vector<S: Scalar>(
    model: &OutcomeModel<S>,
    g: &PropensityModel<S>,
    data: &Dataset<S>,
) -> Vec<S> {
    let n = S::cast(data.n() as f64);
    let (h_obs, _) = clever_covariates(g, data);
    let resid: Vec<S> = (0..data.n())
        .map(|i| S::cast(data.y()[i] as f64) - model.prob_obs(i))
        .collect();
    let mut out = Vec::with_capacity(model.active_set.len() + 1);
    let mut s0 = S::zero();
    for i in 0..data.n() {
        s0 += h_obs[i] * resid[i];
    }
    out.push(s0 / n);
    for &j in &model.active_set {
        let mut s = S::zero();
        for &i in &column_rows_for_scores(model, data, j) {
            s += resid[i as usize];
        }
        out.push(s / n);
    }
    out
}

/// One-step vanilla TMLE (logistic fluctuation along the clever covariate).
/// Mutates the model's targeting offsets; returns the fitted epsilon and the
/// Newton iteration count.
pub fn tmle_vanilla<S: Scalar>(
    model: &mut OutcomeModel<S>,
    g: &PropensityModel<S>,
    data: &Dataset<S>,
) -> Result<(S, usize), TargetingError> {
    let n = data.n();
    let n_s = S::cast(n as f64);
    let (h_obs, h_a1) = clever_covariates(g, data);
    if h_obs.iter().all(|&h| h == S::zero()) {
        return Err(TargetingError::DegenerateTreatment);
    }
    let mut eps = S::zero();
    let mut grad_trace = Vec::new();
    let tol = S::cast(1e-10);
    let mut converged = false;
    let mut iters = 0usize;
    for it in 0..100 {
        let mut grad = S::zero();
        let mut info = S::zero();
        // indexes four parallel per-observation slices
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let p = clamp01(expit(
                model.base_logit[i] + model.targeting_offset[i] + eps * h_obs[i],
            ));
            grad += h_obs[i] * (S::cast(data.y()[i] as f64) - p);
            info += h_obs[i] * h_obs[i] * p * (S::one() - p);
        }
        grad = grad / n_s;
        info = info / n_s;
        grad_trace.push(grad.to_f64_lossy());
        if grad.abs() <= tol {
            converged = true;
            iters = it;
            break;
        }
        if info <= S::zero() {
            return Err(TargetingError::DegenerateTreatment);
        }
        eps += grad / info;
    }
    if !converged {
        return Err(TargetingError::NewtonNonConvergence {
            iters: 100,
            grad_trace: grad_trace.into_iter().rev().take(5).collect(),
        });
    }
    for i in 0..n {
        model.targeting_offset[i] += eps * h_obs[i];
        model.targeting_offset_a1[i] += eps * h_a1[i];
    }
    Ok((eps, iters))
}

fn clamp01<S: Scalar>(p: S) -> S {
    let lo = S::cast(crate::glm::PROB_CLAMP);
    let hi = S::one() - lo;
    p.max(lo).min(hi)
}

/// Score-preserving TMLE: iterates normalized steps of Euclidean length
/// `delta` along the stacked score direction until every component's
/// empirical mean is within tolerance.
pub fn sp_tmle<S: Scalar>(
    model: &mut OutcomeModel<S>,
    g: &PropensityModel<S>,
    data: &Dataset<S>,
    config: &TargetingConfig<S>,
) -> Result<TargetingState<S>, TargetingError> {
    let n = data.n();
    let tol = config.tol_for(n);
    let (h_obs, h_a1) = clever_covariates(g, data);
    if h_obs.iter().all(|&h| h == S::zero()) {
        return Err(TargetingError::DegenerateTreatment);
    }
    let k = model.active_set.len() + 1;
    let score_rows: Vec<Vec<u32>> = model
        .active_set
        .iter()
        .map(|&j| column_rows_for_scores(model, data, j))
        .collect();
    let mut epsilon_accum = vec![S::zero(); k];
    let mut max_trace = Vec::new();
    let mut full_trace = config.record_trace.then(Vec::new);
    let mut iterations = 0usize;
    loop {
        let s = sp_score_vector(model, g, data);
        let max_abs = s.iter().fold(S::zero(), |acc, v| acc.max(v.abs()));
        max_trace.push(max_abs);
        if let Some(t) = full_trace.as_mut() {
            t.push(s.clone());
        }
        if max_abs <= tol {
            return Ok(TargetingState {
                epsilon_accum,
                score_means: s,
                tol,
                iterations,
                max_score_trace: max_trace,
                full_trace,
            });
        }
        if iterations >= config.max_iters {
            return Err(TargetingError::MaxIters {
                max_iters: config.max_iters,
                max_score: max_abs.to_f64_lossy(),
                tol: tol.to_f64_lossy(),
                score_trace: max_trace
                    .iter()
                    .rev()
                    .take(10)
                    .map(|v| v.to_f64_lossy())
                    .collect(),
            });
        }
        let norm = s.iter().map(|v| *v * *v).sum::<S>().sqrt();
        let scale = config.delta / norm;
        // epsilon_0 moves the clever-covariate direction on both paths
        let eps0 = s[0] * scale;
        for i in 0..n {
            model.targeting_offset[i] += eps0 * h_obs[i];
            model.targeting_offset_a1[i] += eps0 * h_a1[i];
        }
        epsilon_accum[0] += eps0;
        // basis components shift the offset by eps_j on the column's rows
        for (m, rows) in score_rows.iter().enumerate() {
            let eps_j = s[m + 1] * scale;
            epsilon_accum[m + 1] += eps_j;
            if eps_j == S::zero() {
                continue;
            }
            for &i in rows {
                model.targeting_offset[i as usize] += eps_j;
            }
            // the A = 1 evaluation path carries Phi_j(W) regardless of A
            for &i in &model.design.cols[model.active_set[m]].rows {
                model.targeting_offset_a1[i as usize] += eps_j;
            }
        }
        iterations += 1;
    }
}

/// Plug-in estimate: the average A = 1 prediction over the sample.
pub fn plug_in_psi<S: Scalar>(model: &OutcomeModel<S>, data: &Dataset<S>) -> S {
    let n = S::cast(data.n() as f64);
    (0..data.n()).map(|i| model.prob_a1(i)).sum::<S>() / n
}

/// Compares the analytic submodel scores at the current offsets against
/// central finite differences of the empirical log-likelihood along each
/// fluctuation component. Returns the max absolute discrepancy.
pub fn verify_submodel_scores<S: Scalar>(
    model: &OutcomeModel<S>,
    g: &PropensityModel<S>,
    data: &Dataset<S>,
    epsilon_probe: S,
) -> S {
    let n = data.n();
    let n_s = S::cast(n as f64);
    let (h_obs, _) = clever_covariates(g, data);
    // mean Bernoulli log-likelihood with a bump t along covariate values c
    let loglik = |c: &dyn Fn(usize) -> S, t: S| -> S {
        let mut acc = S::zero();
        for i in 0..n {
            let p = clamp01(expit(
                model.base_logit[i] + model.targeting_offset[i] + t * c(i),
            ));
            acc += if data.y()[i] == 1 {
                p.ln()
            } else {
                (S::one() - p).ln()
            };
        }
        acc / n_s
    };
    let analytic = |c: &dyn Fn(usize) -> S| -> S {
        let mut acc = S::zero();
        for i in 0..n {
            acc += c(i) * (S::cast(data.y()[i] as f64) - model.prob_obs(i));
        }
        acc / n_s
    };
    let mut worst = S::zero();
    let two = S::cast(2.0);
    let mut check = |c: &dyn Fn(usize) -> S| {
        let numeric =
            (loglik(c, epsilon_probe) - loglik(c, -epsilon_probe)) / (two * epsilon_probe);
        let d = (numeric - analytic(c)).abs();
        if d > worst {
            worst = d;
        }
    };
    check(&|i| h_obs[i]);
    for &j in &model.active_set {
        let rows = column_rows_for_scores(model, data, j);
        let mut member = vec![false; n];
        for &i in &rows {
            member[i as usize] = true;
        }
        check(&move |i| if member[i] { S::one() } else { S::zero() });
    }
    worst
}
