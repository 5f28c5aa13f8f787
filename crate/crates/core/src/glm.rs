//! Logistic regression machinery: penalized (lasso) fit over the spline
//! design, cross-validated penalty selection, and the unpenalized relaxed
//! refit whose first-order conditions are the solved score equations.

use crate::basis::{build_basis, design_matrix, BasisExpansion, DesignMatrix, SparseCol};
use crate::data::Dataset;
use crate::linalg::{cholesky, cholesky_solve, independent_columns};
use crate::num::{expit, logit, Scalar};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Probability clamp applied before any logit transform or Bernoulli loss.
pub const PROB_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GlmError {
    #[error(
        "lasso did not converge after {cycles} cycles (last max coefficient change {last_change})"
    )]
    LassoNonConvergence {
        cycles: usize,
        last_change: f64,
        /// Last iterate, for diagnosis.
        beta: Vec<f64>,
    },
    #[error("cross-validation fold {fold} has constant response in training; reduce cv_folds")]
    FoldConstantResponse { fold: usize },
    #[error("need at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },
    #[error("relaxed refit Newton did not converge after {iters} iterations (gradient trace tail: {grad_trace:?})")]
    NewtonNonConvergence { iters: usize, grad_trace: Vec<f64> },
    #[error("design has no usable columns")]
    EmptyDesign,
}

/// Which observations the outcome regression is fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFit {
    All,
    TreatedOnly,
}

impl OutcomeFit {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(OutcomeFit::All),
            "treated_only" => Some(OutcomeFit::TreatedOnly),
            _ => None,
        }
    }
}

/// Solver configuration shared by the outcome and propensity pipelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitConfig<S: Scalar> {
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: S,
    pub cv_folds: usize,
    pub g_trunc_lower: S,
    pub g_trunc_upper: S,
    pub outcome_fit: OutcomeFit,
    pub max_cycles: usize,
    /// Convergence threshold on the max coefficient change per full cycle,
    /// applied at the lambda point whose fit is returned.
    pub coef_tol: S,
    /// Looser threshold for warm-up path points and cross-validation fold
    /// paths, whose coefficients only seed warm starts / held-out losses.
    pub path_coef_tol: S,
    /// Fold paths stop after this many consecutive grid points of rising
    /// held-out loss (the minimum is already behind them).
    pub cv_rise_patience: usize,
    /// First-order-condition threshold for the relaxed refit.
    pub score_tol: S,
}

impl<S: Scalar> Default for FitConfig<S> {
    fn default() -> Self {
        Self {
            lambda_grid_size: 100,
            lambda_min_ratio: S::cast(1e-4),
            cv_folds: 10,
            g_trunc_lower: S::cast(0.01),
            g_trunc_upper: S::cast(0.99),
            outcome_fit: OutcomeFit::All,
            max_cycles: 10_000,
            coef_tol: S::cast(1e-7),
            path_coef_tol: S::cast(1e-4),
            cv_rise_patience: 8,
            score_tol: S::cast(1e-8),
        }
    }
}

fn clamp_prob<S: Scalar>(p: S) -> S {
    let lo = S::cast(PROB_CLAMP);
    let hi = S::one() - lo;
    if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    }
}

fn clamped_mean<S: Scalar>(y: &[u8]) -> S {
    let m = S::cast(y.iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64);
    let lo = S::cast(1e-6);
    let hi = S::one() - lo;
    m.max(lo).min(hi)
}

fn is_constant(y: &[u8]) -> bool {
    y.iter().all(|&v| v == y[0])
}

fn soft<S: Scalar>(z: S, t: S) -> S {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        S::zero()
    }
}

/// Mean negative Bernoulli log-likelihood of probabilities `p` against `y`.
fn mean_nll<S: Scalar>(eta: &[S], y: &[u8]) -> S {
    let mut acc = S::zero();
    for (e, &yi) in eta.iter().zip(y) {
        let p = clamp_prob(expit(*e));
        acc += if yi == 1 {
            -p.ln()
        } else {
            -(S::one() - p).ln()
        };
    }
    acc / S::cast(eta.len() as f64)
}

// ---------------------------------------------------------------------------
// Lasso by cyclic coordinate descent on the IRLS quadratic approximation.
// Each cycle refreshes weights and working residuals from the current linear
// predictor, then sweeps the requested column set once.
// ---------------------------------------------------------------------------

struct LassoState<S: Scalar> {
    beta: Vec<S>,
    eta: Vec<S>,
    cycles: usize,
}

impl<S: Scalar> LassoState<S> {
    fn new(n: usize, p: usize) -> Self {
        Self {
            beta: vec![S::zero(); p],
            eta: vec![S::zero(); n],
            cycles: 0,
        }
    }
}

/// IRLS weights and working residuals at the current linear predictor.
/// Fitted values outside [thr, 1-thr] are flattened to exactly 0/1 with a
/// floored weight. Separated coordinates then have zero residual and stop
/// moving, instead of diverging one step per sweep forever.
fn irls_quadratic<S: Scalar>(eta: &[S], y: &[u8]) -> (Vec<S>, Vec<S>) {
    let thr = S::cast(1e-5);
    let mut w = Vec::with_capacity(y.len());
    let mut r = Vec::with_capacity(y.len());
    for (e, &yi) in eta.iter().zip(y) {
        let p = expit(*e);
        let (p, wi) = if p < thr {
            (S::zero(), thr)
        } else if p > S::one() - thr {
            (S::one(), thr)
        } else {
            (p, p * (S::one() - p))
        };
        w.push(wi);
        r.push(S::cast(yi as f64) - p);
    }
    (w, r)
}

/// One coordinate-descent sweep over `col_set` at fixed weights `w` and
/// working residuals `r`. Returns the max absolute coefficient change.
/// `sum_w` caches per-column weight totals for the lifetime of the quadratic
/// (a negative entry means "not computed yet").
#[allow(clippy::too_many_arguments)]
fn lasso_cycle<S: Scalar>(
    cols: &[SparseCol],
    penalized: &[bool],
    lambda: S,
    col_set: &[usize],
    state: &mut LassoState<S>,
    w: &[S],
    r: &mut [S],
    sum_w: &mut [S],
) -> S {
    let n = S::cast(w.len() as f64);
    let mut max_change = S::zero();
    for &j in col_set {
        let col = &cols[j];
        if col.rows.is_empty() {
            continue;
        }
        let mut sum_r = S::zero();
        if sum_w[j] < S::zero() {
            let mut sw = S::zero();
            for &i in &col.rows {
                let i = i as usize;
                sum_r += r[i];
                sw += w[i];
            }
            sum_w[j] = sw;
        } else {
            for &i in &col.rows {
                sum_r += r[i as usize];
            }
        }
        let denom = sum_w[j] / n;
        if denom <= S::zero() {
            continue;
        }
        let num = sum_r / n + state.beta[j] * denom;
        let new = if penalized[j] {
            soft(num, lambda) / denom
        } else {
            num / denom
        };
        let delta = new - state.beta[j];
        if delta != S::zero() {
            state.beta[j] = new;
            for &i in &col.rows {
                let i = i as usize;
                state.eta[i] += delta;
                r[i] -= delta * w[i];
            }
            if delta.abs() > max_change {
                max_change = delta.abs();
            }
        }
    }
    state.cycles += 1;
    max_change
}

/// Fits the lasso at a fixed lambda, warm-starting from `state`.
///
/// Structure follows the reweighted-least-squares scheme: each full cycle
/// re-linearizes at the current eta, and the active set is then iterated to
/// convergence on that fixed quadratic before the next full cycle.
/// Convergence requires a freshly re-linearized full cycle whose max
/// coefficient change falls below `coef_tol`.
fn lasso_fit_point<S: Scalar>(
    cols: &[SparseCol],
    y: &[u8],
    penalized: &[bool],
    lambda: S,
    state: &mut LassoState<S>,
    max_cycles: usize,
    coef_tol: S,
) -> Result<(), GlmError> {
    let all: Vec<usize> = (0..cols.len()).collect();
    let start = state.cycles;
    loop {
        // full cycle on a freshly re-linearized quadratic: convergence check
        // plus active-set refresh
        let (w, mut r) = irls_quadratic(&state.eta, y);
        let mut sum_w = vec![-S::one(); cols.len()];
        let ch = lasso_cycle(cols, penalized, lambda, &all, state, &w, &mut r, &mut sum_w);
        if ch < coef_tol {
            return Ok(());
        }
        if state.cycles - start >= max_cycles {
            return Err(GlmError::LassoNonConvergence {
                cycles: state.cycles - start,
                last_change: ch.to_f64_lossy(),
                beta: state.beta.iter().map(|b| b.to_f64_lossy()).collect(),
            });
        }
        // converge the active set on this fixed quadratic
        loop {
            let active: Vec<usize> = (0..cols.len())
                .filter(|&j| !penalized[j] || state.beta[j] != S::zero())
                .collect();
            let ch = lasso_cycle(
                cols, penalized, lambda, &active, state, &w, &mut r, &mut sum_w,
            );
            if ch < coef_tol || state.cycles - start >= max_cycles {
                break;
            }
        }
    }
}

fn penalized_mask(design: &DesignMatrix) -> Vec<bool> {
    // kept column 0 always contains the intercept representative
    let mut mask = vec![true; design.n_cols()];
    if !mask.is_empty() {
        mask[0] = false;
    }
    mask
}

/// Penalized logistic fit at a fixed lambda over the deduplicated design.
/// Minimizes mean negative log-likelihood + lambda * l1 on penalized columns.
pub fn fit_logistic_lasso<S: Scalar>(
    design: &DesignMatrix,
    y: &[u8],
    lambda: S,
    config: &FitConfig<S>,
) -> Result<Vec<S>, GlmError> {
    if design.n_cols() == 0 {
        return Err(GlmError::EmptyDesign);
    }
    let penalized = penalized_mask(design);
    if is_constant(y) {
        let mut beta = vec![S::zero(); design.n_cols()];
        beta[0] = logit(clamped_mean(y)).expect("clamped mean is interior");
        return Ok(beta);
    }
    let mut state = LassoState::new(y.len(), design.n_cols());
    lasso_fit_point(
        &design.cols,
        y,
        &penalized,
        lambda,
        &mut state,
        config.max_cycles,
        config.coef_tol,
    )?;
    Ok(state.beta)
}

/// Smallest lambda zeroing every penalized coefficient, computed from the
/// score at the intercept-only fit.
pub fn lambda_max<S: Scalar>(cols: &[SparseCol], y: &[u8], penalized: &[bool]) -> S {
    let n = S::cast(y.len() as f64);
    let pbar = clamped_mean(y);
    let mut lam = S::zero();
    for (j, col) in cols.iter().enumerate() {
        if !penalized[j] {
            continue;
        }
        let mut s = S::zero();
        for &i in &col.rows {
            s += S::cast(y[i as usize] as f64) - pbar;
        }
        let v = (s / n).abs();
        if v > lam {
            lam = v;
        }
    }
    lam
}

/// Descending log-spaced grid from lambda_max down to
/// lambda_max * lambda_min_ratio.
pub fn lambda_grid<S: Scalar>(lam_max: S, size: usize, min_ratio: S) -> Vec<S> {
    assert!(size >= 2);
    let lmax = lam_max.to_f64_lossy().ln();
    let lmin = (lam_max * min_ratio).to_f64_lossy().ln();
    (0..size)
        .map(|k| {
            let t = k as f64 / (size - 1) as f64;
            S::cast((lmax + t * (lmin - lmax)).exp())
        })
        .collect()
}

/// Maximum absolute KKT violation of the lasso solution, and the maximum
/// deviation from stationarity (|score| - lambda) on the active set.
pub fn lasso_kkt_gaps<S: Scalar>(
    cols: &[SparseCol],
    y: &[u8],
    beta: &[S],
    lambda: S,
    penalized: &[bool],
    eta: &[S],
) -> (S, S) {
    let n = S::cast(y.len() as f64);
    let mut worst_violation = S::zero();
    let mut worst_active_gap = S::zero();
    for (j, col) in cols.iter().enumerate() {
        if !penalized[j] || col.rows.is_empty() {
            continue;
        }
        let mut s = S::zero();
        for &i in &col.rows {
            let i = i as usize;
            s += S::cast(y[i] as f64) - clamp_prob(expit(eta[i]));
        }
        let score = (s / n).abs();
        if score > lambda && score - lambda > worst_violation {
            worst_violation = score - lambda;
        }
        if beta[j] != S::zero() {
            let gap = (score - lambda).abs();
            if gap > worst_active_gap {
                worst_active_gap = gap;
            }
        }
    }
    (worst_violation, worst_active_gap)
}

// ---------------------------------------------------------------------------
// Cross-validated lambda selection
// ---------------------------------------------------------------------------

/// Seeded, deterministic fold assignment: shuffled indices dealt round-robin.
pub fn cv_fold_assignment(n: usize, n_folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut fold = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos % n_folds;
    }
    fold
}

struct FoldProblem {
    train_cols: Vec<SparseCol>,
    train_y: Vec<u8>,
    test_cols: Vec<SparseCol>,
    test_y: Vec<u8>,
}

fn split_fold(cols: &[SparseCol], y: &[u8], fold: &[usize], f: usize) -> FoldProblem {
    let n = y.len();
    let mut train_of = vec![u32::MAX; n];
    let mut test_of = vec![u32::MAX; n];
    let mut train_y = Vec::new();
    let mut test_y = Vec::new();
    for i in 0..n {
        if fold[i] == f {
            test_of[i] = test_y.len() as u32;
            test_y.push(y[i]);
        } else {
            train_of[i] = train_y.len() as u32;
            train_y.push(y[i]);
        }
    }
    let remap = |map: &[u32]| -> Vec<SparseCol> {
        cols.iter()
            .map(|c| SparseCol {
                rows: c
                    .rows
                    .iter()
                    .filter_map(|&i| {
                        let m = map[i as usize];
                        (m != u32::MAX).then_some(m)
                    })
                    .collect(),
            })
            .collect()
    };
    FoldProblem {
        train_cols: remap(&train_of),
        train_y,
        test_cols: remap(&test_of),
        test_y,
    }
}

/// Result of the CV sweep: the selected lambda, its grid index, the grid,
/// and the mean held-out loss per grid point.
#[derive(Debug, Clone)]
pub struct CvSelection<S: Scalar> {
    pub lambda: S,
    pub index: usize,
    pub grid: Vec<S>,
    pub mean_losses: Vec<S>,
}

/// Selects lambda by k-fold CV minimizing held-out negative log-likelihood.
/// Ties resolve to the largest lambda. Fold assignment is seeded.
pub fn select_lambda_cv<S: Scalar>(
    design: &DesignMatrix,
    y: &[u8],
    config: &FitConfig<S>,
    seed: u64,
) -> Result<CvSelection<S>, GlmError> {
    let n = y.len();
    if n < 2 * config.cv_folds {
        return Err(GlmError::TooFewObservations {
            n,
            min: 2 * config.cv_folds,
        });
    }
    let penalized = penalized_mask(design);
    let lam_max = lambda_max(&design.cols, y, &penalized);
    let grid = lambda_grid(lam_max, config.lambda_grid_size, config.lambda_min_ratio);
    let fold = cv_fold_assignment(n, config.cv_folds, seed);
    let mut loss_sums = vec![S::zero(); grid.len()];
    for f in 0..config.cv_folds {
        let prob = split_fold(&design.cols, y, &fold, f);
        if is_constant(&prob.train_y) {
            return Err(GlmError::FoldConstantResponse { fold: f });
        }
        let mut state = LassoState::new(prob.train_y.len(), design.n_cols());
        let null_dev = {
            let pbar = clamped_mean(&prob.train_y);
            let eta0 = vec![logit(pbar).expect("interior"); prob.train_y.len()];
            mean_nll(&eta0, &prob.train_y)
        };
        let mut prev_loss = S::infinity();
        let mut rises = 0usize;
        for (k, &lam) in grid.iter().enumerate() {
            // The bottom of the grid can sit past saturation, where the
            // coordinate updates limit-cycle instead of converging; truncate
            // this fold's path there and leave the remaining points
            // unselectable.
            let fitted = lasso_fit_point(
                &prob.train_cols,
                &prob.train_y,
                &penalized,
                lam,
                &mut state,
                config.max_cycles,
                config.path_coef_tol,
            );
            match fitted {
                Ok(()) => {}
                Err(GlmError::LassoNonConvergence { .. }) => {
                    for slot in loss_sums.iter_mut().skip(k) {
                        *slot = S::infinity();
                    }
                    break;
                }
                Err(e) => return Err(e),
            }
            // held-out loss
            let mut eta_test = vec![S::zero(); prob.test_y.len()];
            for (j, col) in prob.test_cols.iter().enumerate() {
                let b = state.beta[j];
                if b != S::zero() {
                    for &i in &col.rows {
                        eta_test[i as usize] += b;
                    }
                }
            }
            let mut s = S::zero();
            for (e, &yi) in eta_test.iter().zip(&prob.test_y) {
                let p = clamp_prob(expit(*e));
                s += if yi == 1 {
                    -p.ln()
                } else {
                    -(S::one() - p).ln()
                };
            }
            loss_sums[k] += s;
            // past the held-out minimum: stop once the loss has risen for
            // `cv_rise_patience` consecutive points
            if s > prev_loss {
                rises += 1;
                if rises >= config.cv_rise_patience {
                    for slot in loss_sums.iter_mut().skip(k + 1) {
                        *slot = S::infinity();
                    }
                    break;
                }
            } else {
                rises = 0;
            }
            prev_loss = s;
            // saturated training fit: stop, as smaller lambdas only interpolate
            let dev_ratio = S::one() - mean_nll(&state.eta, &prob.train_y) / null_dev;
            if dev_ratio > S::cast(0.999) {
                for slot in loss_sums.iter_mut().skip(k + 1) {
                    *slot = S::infinity();
                }
                break;
            }
        }
    }
    let n_s = S::cast(n as f64);
    let mean_losses: Vec<S> = loss_sums.iter().map(|&s| s / n_s).collect();
    let mut best = 0usize;
    for (k, &l) in mean_losses.iter().enumerate() {
        if l < mean_losses[best] {
            best = k;
        }
    }
    Ok(CvSelection {
        lambda: grid[best],
        index: best,
        grid,
        mean_losses,
    })
}

// ---------------------------------------------------------------------------
// Relaxed (unpenalized) refit by damped Newton
// ---------------------------------------------------------------------------

/// Unpenalized logistic MLE on a column subset.
#[derive(Debug, Clone)]
pub struct RelaxedFit<S: Scalar> {
    /// Kept columns (subset of the requested active set, fixed order).
    pub kept: Vec<usize>,
    /// Coefficients aligned with `kept`.
    pub beta: Vec<S>,
    /// Columns dropped by pivoted elimination as linearly dependent.
    pub dropped: Vec<usize>,
    /// True when a ridge-stabilized fallback was needed (separation).
    pub ridged: bool,
    /// Max absolute mean score over kept columns at the returned solution.
    pub max_score: S,
    /// Linear predictor on the fitting rows.
    pub eta: Vec<S>,
}

/// Success: (beta over kept columns, linear predictor, max |mean score|,
/// per-iteration gradient-norm trace); failure carries the trace and the
/// last linear predictor for the separation diagnostics.
type NewtonResult<S> = Result<(Vec<S>, Vec<S>, S, Vec<f64>), (Vec<f64>, Vec<S>)>;

fn newton_logistic<S: Scalar>(
    cols: &[SparseCol],
    kept: &[usize],
    y: &[u8],
    ridge: S,
    score_tol: S,
    max_iters: usize,
) -> NewtonResult<S> {
    let n = y.len();
    let n_s = S::cast(n as f64);
    let p = kept.len();
    // row -> positions among kept columns, for the weighted Gram accumulation
    let mut rows_active: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (m, &j) in kept.iter().enumerate() {
        for &i in &cols[j].rows {
            rows_active[i as usize].push(m as u32);
        }
    }
    let mut beta = vec![S::zero(); p];
    let mut eta = vec![S::zero(); n];
    let mut grad_trace: Vec<f64> = Vec::new();
    for _ in 0..max_iters {
        let probs: Vec<S> = eta.iter().map(|&e| clamp_prob(expit(e))).collect();
        // gradient of (mean loglik - ridge/2 * |beta|^2)
        let mut grad = vec![S::zero(); p];
        for (m, &j) in kept.iter().enumerate() {
            let mut s = S::zero();
            for &i in &cols[j].rows {
                let i = i as usize;
                s += S::cast(y[i] as f64) - probs[i];
            }
            grad[m] = s / n_s - ridge * beta[m];
        }
        let gmax = grad.iter().fold(S::zero(), |acc, g| acc.max(g.abs()));
        grad_trace.push(gmax.to_f64_lossy());
        if gmax <= score_tol {
            return Ok((beta, eta, gmax, grad_trace));
        }
        // Hessian (1/n) X'WX + ridge I via per-row accumulation
        let mut h = vec![S::zero(); p * p];
        for i in 0..n {
            let w = (probs[i] * (S::one() - probs[i])).max(S::cast(1e-12));
            let act = &rows_active[i];
            for (u, &a) in act.iter().enumerate() {
                let a = a as usize;
                for &b in &act[u..] {
                    let b = b as usize;
                    h[a * p + b] += w;
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                let v = h[a * p + b] / n_s;
                h[a * p + b] = v;
                h[b * p + a] = v;
            }
            h[a * p + a] = h[a * p + a] / n_s + ridge;
        }
        // solve, escalating jitter if the Hessian is numerically singular
        let mut jitter = S::zero();
        let delta = loop {
            let mut hj = h.clone();
            if jitter > S::zero() {
                for a in 0..p {
                    hj[a * p + a] += jitter;
                }
            }
            if let Some(l) = cholesky(&hj, p) {
                break cholesky_solve(&l, p, &grad);
            }
            jitter = if jitter == S::zero() {
                S::cast(1e-10)
            } else {
                jitter * S::cast(10.0)
            };
            if jitter > S::cast(1e-2) {
                return Err((grad_trace, eta));
            }
        };
        // damped step: halve until the penalized objective does not worsen
        let obj = |eta_v: &[S], beta_v: &[S]| -> S {
            let mut pen = S::zero();
            for b in beta_v {
                pen += *b * *b;
            }
            -mean_nll(eta_v, y) - ridge * pen / S::cast(2.0)
        };
        let base = obj(&eta, &beta);
        let mut t = S::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand_beta: Vec<S> = beta.iter().zip(&delta).map(|(b, d)| *b + t * *d).collect();
            let mut cand_eta = vec![S::zero(); n];
            for (m, &j) in kept.iter().enumerate() {
                let b = cand_beta[m];
                if b != S::zero() {
                    for &i in &cols[j].rows {
                        cand_eta[i as usize] += b;
                    }
                }
            }
            if obj(&cand_eta, &cand_beta) >= base {
                beta = cand_beta;
                eta = cand_eta;
                accepted = true;
                break;
            }
            t = t / S::cast(2.0);
        }
        if !accepted {
            // stuck: gradient above tolerance but no ascent direction usable
            return Err((grad_trace, eta));
        }
    }
    Err((grad_trace, eta))
}

/// Unpenalized logistic refit on `active_set` columns. Rank-deficient
/// columns are dropped by pivoted elimination in fixed column order.
/// On detected separation the fit falls back to a ridge penalty of 1e-6
/// and flags the result.
pub fn relaxed_refit<S: Scalar>(
    cols: &[SparseCol],
    y: &[u8],
    active_set: &[usize],
    config: &FitConfig<S>,
) -> Result<RelaxedFit<S>, GlmError> {
    let n = y.len();
    let n_s = S::cast(n as f64);
    if is_constant(y) {
        // degenerate-response rule: intercept-only clamped fit
        let kept = vec![active_set[0]];
        let b0 = logit(clamped_mean(y)).expect("clamped mean is interior");
        return Ok(RelaxedFit {
            kept,
            beta: vec![b0],
            dropped: active_set[1..].to_vec(),
            ridged: false,
            max_score: S::zero(),
            eta: vec![b0; n],
        });
    }
    // Gram of the active columns (intersection counts) for rank detection.
    let p0 = active_set.len();
    let mut rows_active: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (m, &j) in active_set.iter().enumerate() {
        for &i in &cols[j].rows {
            rows_active[i as usize].push(m as u32);
        }
    }
    let mut gram = vec![S::zero(); p0 * p0];
    for acts in &rows_active {
        for (u, &a) in acts.iter().enumerate() {
            let a = a as usize;
            for &b in &acts[u..] {
                let b = b as usize;
                gram[a * p0 + b] += S::one();
            }
        }
    }
    for a in 0..p0 {
        for b in (a + 1)..p0 {
            gram[b * p0 + a] = gram[a * p0 + b];
        }
        gram[a * p0 + a] = gram[a * p0 + a] / n_s;
        for b in (a + 1)..p0 {
            gram[a * p0 + b] = gram[a * p0 + b] / n_s;
            gram[b * p0 + a] = gram[b * p0 + a] / n_s;
        }
    }
    let keep_mask = independent_columns(&gram, p0, S::cast(1e-9));
    let kept: Vec<usize> = active_set
        .iter()
        .zip(&keep_mask)
        .filter_map(|(&j, &k)| k.then_some(j))
        .collect();
    let dropped: Vec<usize> = active_set
        .iter()
        .zip(&keep_mask)
        .filter_map(|(&j, &k)| (!k).then_some(j))
        .collect();
    if kept.is_empty() {
        return Err(GlmError::EmptyDesign);
    }
    match newton_logistic(cols, &kept, y, S::zero(), config.score_tol, 200) {
        Ok((beta, eta, max_score, _)) => Ok(RelaxedFit {
            kept,
            beta,
            dropped,
            ridged: false,
            max_score,
            eta,
        }),
        Err((grad_trace, eta)) => {
            let separated = eta.iter().any(|e| e.abs() > S::cast(30.0));
            if separated {
                let (beta, eta, _, _) =
                    newton_logistic(cols, &kept, y, S::cast(1e-6), S::cast(1e-9), 500).map_err(
                        |(gt, _)| GlmError::NewtonNonConvergence {
                            iters: 500,
                            grad_trace: gt.into_iter().rev().take(5).collect(),
                        },
                    )?;
                // report the unpenalized score at the ridge solution
                let mut max_score = S::zero();
                for &j in &kept {
                    let mut s = S::zero();
                    for &i in &cols[j].rows {
                        let i = i as usize;
                        s += S::cast(y[i] as f64) - clamp_prob(expit(eta[i]));
                    }
                    max_score = max_score.max((s / n_s).abs());
                }
                Ok(RelaxedFit {
                    kept,
                    beta,
                    dropped,
                    ridged: true,
                    max_score,
                    eta,
                })
            } else {
                Err(GlmError::NewtonNonConvergence {
                    iters: 200,
                    grad_trace: grad_trace.into_iter().rev().take(5).collect(),
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fitted-model pipelines
// ---------------------------------------------------------------------------

/// Outcome regression state: lasso and relaxed coefficients over the shared
/// deduplicated design, plus per-observation targeting offsets (logit scale).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OutcomeModel<S: Scalar> {
    pub basis: BasisExpansion<S>,
    pub design: DesignMatrix,
    pub lasso_beta: Vec<S>,
    pub selected_lambda: S,
    /// Deduplicated column indices retained by the relaxed refit.
    pub active_set: Vec<usize>,
    /// Relaxed coefficients aligned with `active_set`.
    pub beta: Vec<S>,
    /// Relaxed-fit linear predictor per observation (pre-targeting).
    pub base_logit: Vec<S>,
    /// Accumulated targeting offsets on the observed-treatment path.
    pub targeting_offset: Vec<S>,
    /// Accumulated targeting offsets on the A = 1 path.
    pub targeting_offset_a1: Vec<S>,
    pub ridged: bool,
    pub fit_population: OutcomeFit,
    pub max_relaxed_score: S,
}

impl<S: Scalar> OutcomeModel<S> {
    /// Targeted probability on the observed-treatment path for row i.
    pub fn prob_obs(&self, i: usize) -> S {
        clamp_prob(expit(self.base_logit[i] + self.targeting_offset[i]))
    }

    /// Targeted probability on the A = 1 path for row i.
    pub fn prob_a1(&self, i: usize) -> S {
        clamp_prob(expit(self.base_logit[i] + self.targeting_offset_a1[i]))
    }

    pub fn n(&self) -> usize {
        self.base_logit.len()
    }

    /// Untargeted lasso (HAL) probabilities, one per observation.
    pub fn hal_probs(&self) -> Vec<S> {
        self.design
            .linear_predictor(&self.lasso_beta)
            .into_iter()
            .map(|e| clamp_prob(expit(e)))
            .collect()
    }
}

/// Fitted, truncated propensity model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PropensityModel<S: Scalar> {
    pub basis: BasisExpansion<S>,
    pub beta: Vec<S>,
    pub selected_lambda: S,
    pub truncation: (S, S),
    /// Truncated fitted probabilities on the training rows.
    pub g_hat: Vec<S>,
}

impl<S: Scalar> PropensityModel<S> {
    pub fn g(&self, i: usize) -> S {
        self.g_hat[i]
    }
}

fn subset_rows(cols: &[SparseCol], mask: &[bool]) -> (Vec<SparseCol>, Vec<u32>) {
    let mut map = vec![u32::MAX; mask.len()];
    let mut kept_rows = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            map[i] = kept_rows.len() as u32;
            kept_rows.push(i as u32);
        }
    }
    let sub = cols
        .iter()
        .map(|c| SparseCol {
            rows: c
                .rows
                .iter()
                .filter_map(|&i| {
                    let m = map[i as usize];
                    (m != u32::MAX).then_some(m)
                })
                .collect(),
        })
        .collect();
    (sub, kept_rows)
}

/// Shared basis/design plus both fitted models; the four estimators in the
/// harness all start from this one fit.
pub struct FittedModels<S: Scalar> {
    pub outcome: OutcomeModel<S>,
    pub propensity: PropensityModel<S>,
}

/// Runs the full pipeline on one dataset: build basis, deduplicate the
/// design, CV the penalty, lasso-fit, and (outcome only) relaxed-refit.
pub fn fit_models<S: Scalar>(
    data: &Dataset<S>,
    config: &FitConfig<S>,
    cv_seed_outcome: u64,
    cv_seed_propensity: u64,
) -> Result<FittedModels<S>, GlmError> {
    let n = data.n();
    if n < 20 {
        return Err(GlmError::TooFewObservations { n, min: 20 });
    }
    let basis = build_basis(data);
    let design = design_matrix(&basis, data);

    let outcome = fit_outcome_on(&basis, &design, data, config, cv_seed_outcome)?;
    let propensity = fit_propensity_on(&basis, &design, data, config, cv_seed_propensity)?;
    Ok(FittedModels {
        outcome,
        propensity,
    })
}

pub fn fit_outcome_model<S: Scalar>(
    data: &Dataset<S>,
    config: &FitConfig<S>,
    cv_seed: u64,
) -> Result<OutcomeModel<S>, GlmError> {
    let n = data.n();
    if n < 20 {
        return Err(GlmError::TooFewObservations { n, min: 20 });
    }
    let basis = build_basis(data);
    let design = design_matrix(&basis, data);
    fit_outcome_on(&basis, &design, data, config, cv_seed)
}

pub fn fit_propensity_model<S: Scalar>(
    data: &Dataset<S>,
    config: &FitConfig<S>,
    cv_seed: u64,
) -> Result<PropensityModel<S>, GlmError> {
    let n = data.n();
    if n < 20 {
        return Err(GlmError::TooFewObservations { n, min: 20 });
    }
    let basis = build_basis(data);
    let design = design_matrix(&basis, data);
    fit_propensity_on(&basis, &design, data, config, cv_seed)
}

fn fit_outcome_on<S: Scalar>(
    basis: &BasisExpansion<S>,
    design: &DesignMatrix,
    data: &Dataset<S>,
    config: &FitConfig<S>,
    cv_seed: u64,
) -> Result<OutcomeModel<S>, GlmError> {
    let n = data.n();
    let y = data.y();
    let (fit_cols, fit_y): (Vec<SparseCol>, Vec<u8>) = match config.outcome_fit {
        OutcomeFit::All => (design.cols.clone(), y.to_vec()),
        OutcomeFit::TreatedOnly => {
            let mask: Vec<bool> = data.a().iter().map(|&a| a == 1).collect();
            let (sub, kept_rows) = subset_rows(&design.cols, &mask);
            let suby: Vec<u8> = kept_rows.iter().map(|&i| y[i as usize]).collect();
            if suby.len() < 20 {
                return Err(GlmError::TooFewObservations {
                    n: suby.len(),
                    min: 20,
                });
            }
            (sub, suby)
        }
    };
    let fit_design = DesignMatrix {
        n_rows: fit_y.len(),
        cols: fit_cols,
        col_map: design.col_map.clone(),
        representatives: design.representatives.clone(),
    };
    // constant outcome: intercept-only model at the clamped mean, no CV
    if is_constant(&fit_y) {
        let pbar = clamped_mean::<S>(&fit_y);
        let eta0 = logit(pbar).expect("clamped mean is interior");
        let resid = (S::cast(fit_y[0] as f64) - pbar).abs();
        let mut lasso_beta = vec![S::zero(); design.n_cols()];
        lasso_beta[0] = eta0;
        return Ok(OutcomeModel {
            basis: basis.clone(),
            design: design.clone(),
            lasso_beta: lasso_beta.clone(),
            selected_lambda: S::zero(),
            active_set: vec![0],
            beta: vec![eta0],
            base_logit: vec![eta0; n],
            targeting_offset: vec![S::zero(); n],
            targeting_offset_a1: vec![S::zero(); n],
            ridged: false,
            fit_population: config.outcome_fit,
            max_relaxed_score: resid,
        });
    }
    let sel = select_lambda_cv(&fit_design, &fit_y, config, cv_seed)?;
    let lasso_beta = fit_path_to(&fit_design, &fit_y, config, sel.index, &sel.grid)?;
    let mut active: Vec<usize> = vec![0];
    for (j, &b) in lasso_beta.iter().enumerate() {
        if j != 0 && b != S::zero() {
            active.push(j);
        }
    }
    let relaxed = relaxed_refit(&fit_design.cols, &fit_y, &active, config)?;
    // relaxed eta on all observations (basis is over W only, so the linear
    // predictor is the same regardless of the fitting population)
    let mut base_logit = vec![S::zero(); n];
    for (m, &j) in relaxed.kept.iter().enumerate() {
        let b = relaxed.beta[m];
        if b != S::zero() {
            for &i in &design.cols[j].rows {
                base_logit[i as usize] += b;
            }
        }
    }
    Ok(OutcomeModel {
        basis: basis.clone(),
        design: design.clone(),
        lasso_beta,
        selected_lambda: sel.lambda,
        active_set: relaxed.kept,
        beta: relaxed.beta,
        base_logit,
        targeting_offset: vec![S::zero(); n],
        targeting_offset_a1: vec![S::zero(); n],
        ridged: relaxed.ridged,
        fit_population: config.outcome_fit,
        max_relaxed_score: relaxed.max_score,
    })
}

fn fit_propensity_on<S: Scalar>(
    basis: &BasisExpansion<S>,
    design: &DesignMatrix,
    data: &Dataset<S>,
    config: &FitConfig<S>,
    cv_seed: u64,
) -> Result<PropensityModel<S>, GlmError> {
    let a = data.a();
    // constant treatment: intercept-only fit, no CV to run
    if is_constant(a) {
        let beta = fit_logistic_lasso(design, a, S::zero(), config)?;
        let eta = design.linear_predictor(&beta);
        let g_hat = eta
            .into_iter()
            .map(|e| expit(e).max(config.g_trunc_lower).min(config.g_trunc_upper))
            .collect();
        return Ok(PropensityModel {
            basis: basis.clone(),
            beta,
            selected_lambda: S::zero(),
            truncation: (config.g_trunc_lower, config.g_trunc_upper),
            g_hat,
        });
    }
    let sel = select_lambda_cv(design, a, config, cv_seed)?;
    let beta = fit_path_to(design, a, config, sel.index, &sel.grid)?;
    let eta = design.linear_predictor(&beta);
    let g_hat = eta
        .into_iter()
        .map(|e| expit(e).max(config.g_trunc_lower).min(config.g_trunc_upper))
        .collect();
    Ok(PropensityModel {
        basis: basis.clone(),
        beta,
        selected_lambda: sel.lambda,
        truncation: (config.g_trunc_lower, config.g_trunc_upper),
        g_hat,
    })
}

/// Warm-started path fit on the full data down to grid index `index`.
fn fit_path_to<S: Scalar>(
    design: &DesignMatrix,
    y: &[u8],
    config: &FitConfig<S>,
    index: usize,
    grid: &[S],
) -> Result<Vec<S>, GlmError> {
    let penalized = penalized_mask(design);
    if is_constant(y) {
        let mut beta = vec![S::zero(); design.n_cols()];
        beta[0] = logit(clamped_mean(y)).expect("clamped mean is interior");
        return Ok(beta);
    }
    let mut state = LassoState::new(y.len(), design.n_cols());
    // warm-up points only seed the next fit; the returned point gets the
    // full convergence criterion
    for (k, &lam) in grid[..=index].iter().enumerate() {
        let tol = if k == index {
            config.coef_tol
        } else {
            config.path_coef_tol
        };
        lasso_fit_point(
            &design.cols,
            y,
            &penalized,
            lam,
            &mut state,
            config.max_cycles,
            tol,
        )?;
    }
    Ok(state.beta)
}
