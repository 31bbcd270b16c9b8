//! Objective evaluation, mixed-norm proximal operators, and the three
//! coefficient solvers: accelerated proximal gradient, the alternating
//! subproblem scheme, and a slow subgradient baseline used as an oracle.
//!
//! The objective over the coefficient matrix C (rows = dictionary atoms,
//! columns = particles) is
//!
//!   F(C) = 1/2 ||X - A C||_F^2 + lambda1 ||C||_{p,q} + lambda2 Tr(C L C^T)
//!
//! with the mixed norm grouping rows: (1,1) is the entrywise l1 norm and
//! (2,1) the sum of row l2 norms.

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, SmttError};
use crate::graph::GraphLaplacian;

/// Supported (p, q) mixed-norm exponent pairs. Only these two admit
/// closed-form proximal operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormPair {
    /// p = q = 1: entrywise l1.
    L11,
    /// p = 2, q = 1: sum of row l2 norms (row-group sparsity).
    L21,
}

impl NormPair {
    pub fn from_pq(p: u32, q: u32) -> Result<Self> {
        match (p, q) {
            (1, 1) => Ok(NormPair::L11),
            (2, 1) => Ok(NormPair::L21),
            _ => Err(SmttError::Parameter(format!(
                "unsupported mixed-norm exponents (p, q) = ({p}, {q}); only (1,1) and (2,1) have closed-form proximal operators"
            ))),
        }
    }
}

/// Solver parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Sparsity weight lambda1 >= 0.
    pub lambda1: f64,
    /// Graph-smoothness weight lambda2 >= 0.
    pub lambda2: f64,
    /// Mixed-norm exponents.
    pub norm: NormPair,
    /// Coupling penalty mu > 0 (alternating scheme only).
    pub mu: f64,
    /// Fixed step size; `None` selects backtracking from a power-iteration
    /// Lipschitz estimate.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Relative objective-change stopping threshold, > 0.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda1: 0.01,
            lambda2: 0.1,
            norm: NormPair::L21,
            mu: 1.0,
            step: None,
            max_iter: 300,
            tol: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(SmttError::Parameter(
                "lambda1 and lambda2 must be nonnegative".into(),
            ));
        }
        if !(self.mu > 0.0) {
            return Err(SmttError::Parameter("mu must be positive".into()));
        }
        if let Some(s) = self.step {
            if !(s > 0.0) {
                return Err(SmttError::Parameter("step must be positive".into()));
            }
        }
        if self.max_iter < 1 {
            return Err(SmttError::Parameter("max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SmttError::Parameter("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Coefficient matrix C partitioned into the appearance block Z (first m
/// rows) and the sparse-error block E (remaining rows).
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    c: Array2<f64>,
    m: usize,
}

impl CoefficientMatrix {
    pub fn new(c: Array2<f64>, m_appearance: usize) -> Result<Self> {
        if m_appearance > c.nrows() {
            return Err(SmttError::Shape(format!(
                "appearance row count {} exceeds total rows {}",
                m_appearance,
                c.nrows()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(SmttError::NonFinite("coefficient matrix".into()));
        }
        Ok(CoefficientMatrix { c, m: m_appearance })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.c
    }

    pub fn appearance_rows(&self) -> usize {
        self.m
    }

    pub fn error_rows(&self) -> usize {
        self.c.nrows() - self.m
    }

    /// Appearance block Z (m x n view).
    pub fn appearance(&self) -> ArrayView2<'_, f64> {
        self.c.slice(ndarray::s![..self.m, ..])
    }

    /// Sparse-error block E (d x n view).
    pub fn error_part(&self) -> ArrayView2<'_, f64> {
        self.c.slice(ndarray::s![self.m.., ..])
    }
}

/// Per-solve diagnostics. `objective_history[k]` is the full objective after
/// k proximal/gradient steps; entry 0 is the objective at the zero start.
/// For the subgradient and alternating solvers the history records the
/// best-so-far objective, which is nonincreasing by construction.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final normalized splitting gap ||C - Z||_F / (1 + ||C||_F); only the
    /// alternating scheme has one.
    pub final_coupling: Option<f64>,
}

/// Mixed norm per the row-grouped convention (see module docs).
pub fn mixed_norm(c: ArrayView2<'_, f64>, norm: NormPair) -> f64 {
    match norm {
        NormPair::L11 => c.iter().map(|v| v.abs()).sum(),
        NormPair::L21 => c
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum(),
    }
}

/// Proximal operator of tau * ||.||_{p,q}: entrywise soft-thresholding for
/// (1,1), per-row group shrinkage for (2,1).
pub fn prox_mixed_norm(v: ArrayView2<'_, f64>, tau: f64, norm: NormPair) -> Result<Array2<f64>> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(SmttError::Parameter(format!(
            "prox threshold must be nonnegative and finite, got {tau}"
        )));
    }
    let mut out = v.to_owned();
    match norm {
        NormPair::L11 => {
            out.mapv_inplace(|x| x.signum() * (x.abs() - tau).max(0.0));
        }
        NormPair::L21 => {
            for mut row in out.rows_mut() {
                let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                let scale = if nrm > tau { 1.0 - tau / nrm } else { 0.0 };
                row.mapv_inplace(|x| x * scale);
            }
        }
    }
    Ok(out)
}

fn check_shapes(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
) -> Result<()> {
    if a.nrows() != x.nrows() || a.ncols() != c.nrows() || c.ncols() != x.ncols() {
        return Err(SmttError::Shape(format!(
            "X is {}x{}, A is {}x{}, C is {}x{}",
            x.nrows(),
            x.ncols(),
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if l.n() != x.ncols() {
        return Err(SmttError::Shape(format!(
            "Laplacian is {0}x{0} but X has {1} columns",
            l.n(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Full objective F(C); see module docs for the scaling convention.
pub fn objective(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    cfg: &SolverConfig,
) -> Result<f64> {
    check_shapes(x, a, c, l)?;
    let resid = &x.to_owned() - &a.dot(&c);
    let fid = 0.5 * resid.iter().map(|v| v * v).sum::<f64>();
    let graph = crate::graph::penalty_trace(c, l)?;
    Ok(fid + cfg.lambda1 * mixed_norm(c, cfg.norm) + cfg.lambda2 * graph)
}

/// Gradient of the smooth part: A^T (A C - X) + 2 lambda2 C L, plus
/// mu (C - Z) when the alternating scheme supplies its auxiliary variable.
pub fn smooth_gradient(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    c: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    cfg: &SolverConfig,
    z_aux: Option<ArrayView2<'_, f64>>,
) -> Result<Array2<f64>> {
    check_shapes(x, a, c, l)?;
    let mut g = a.t().dot(&(&a.dot(&c) - &x));
    if cfg.lambda2 != 0.0 {
        g = g + 2.0 * cfg.lambda2 * c.dot(l.matrix());
    }
    if let Some(z) = z_aux {
        if z.dim() != c.dim() {
            return Err(SmttError::Shape("auxiliary Z shape differs from C".into()));
        }
        g = g + cfg.mu * (&c.to_owned() - &z);
    }
    Ok(g)
}

/// Shared precomputations for the iterative solvers.
struct Workspace {
    ata: Array2<f64>,
    atx: Array2<f64>,
    x_sq_half: f64,
}

impl Workspace {
    fn new(x: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Self {
        Workspace {
            ata: a.t().dot(&a),
            atx: a.t().dot(&x),
            x_sq_half: 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// 1/2 ||X - A C||^2 + lambda2 Tr(C L C^T), via the precomputed Gram
    /// matrix.
    fn smooth(&self, c: &Array2<f64>, l: &GraphLaplacian, lambda2: f64) -> f64 {
        let atac = self.ata.dot(c);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for ((q, ci), t) in atac.iter().zip(c.iter()).zip(self.atx.iter()) {
            quad += q * ci;
            lin += t * ci;
        }
        let mut f = 0.5 * quad - lin + self.x_sq_half;
        if lambda2 != 0.0 {
            let cl = c.dot(l.matrix());
            f += lambda2 * cl.iter().zip(c.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        f
    }

    fn grad(&self, c: &Array2<f64>, l: &GraphLaplacian, lambda2: f64) -> Array2<f64> {
        let mut g = self.ata.dot(c) - &self.atx;
        if lambda2 != 0.0 {
            g = g + 2.0 * lambda2 * c.dot(l.matrix());
        }
        g
    }
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric PSD
/// matrix.
fn spectral_norm_sym(mat: &Array2<f64>) -> f64 {
    let n = mat.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += mat[[i, j]] * v[j];
            }
            w[i] = acc;
        }
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        lambda = nrm / v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nrm;
        }
    }
    lambda
}

/// Upper bound on the Lipschitz constant of the smooth gradient:
/// ||A^T A||_2 + 2 lambda2 ||L||_2.
fn lipschitz_bound(ws: &Workspace, l: &GraphLaplacian, lambda2: f64) -> f64 {
    let s1 = spectral_norm_sym(&ws.ata);
    let s2 = if lambda2 != 0.0 {
        spectral_norm_sym(l.matrix())
    } else {
        0.0
    };
    (s1 + 2.0 * lambda2 * s2).max(1e-12)
}

fn frob_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Accelerated proximal gradient with Nesterov momentum (k-1)/(k+2),
/// backtracking line search, and objective-increase restart. Starts at C = 0.
pub fn apg_solve(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    cfg: &SolverConfig,
    m_appearance: usize,
) -> Result<(CoefficientMatrix, SolveReport)> {
    cfg.validate()?;
    let c0 = Array2::zeros((a.ncols(), x.ncols()));
    check_shapes(x, a, c0.view(), l)?;
    let ws = Workspace::new(x, a);

    let mut eta = match cfg.step {
        Some(s) => s,
        None => 1.0 / lipschitz_bound(&ws, l, cfg.lambda2),
    };

    let mut c_cur = c0;
    let mut y = c_cur.clone();
    let mut obj_prev = ws.smooth(&c_cur, l, cfg.lambda2); // lambda1 term is 0 at C = 0
    let mut history = vec![obj_prev];
    let mut momentum_k: usize = 1;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        // one proximal-gradient step from `point`, with backtracking unless
        // a fixed step was configured
        let step_from = |point: &Array2<f64>, eta: &mut f64| -> Result<(Array2<f64>, f64)> {
            let g = ws.grad(point, l, cfg.lambda2);
            let f_pt = ws.smooth(point, l, cfg.lambda2);
            loop {
                let cand = prox_mixed_norm(
                    (point - &(*eta * &g)).view(),
                    *eta * cfg.lambda1,
                    cfg.norm,
                )?;
                if cfg.step.is_some() {
                    let f_cand = ws.smooth(&cand, l, cfg.lambda2);
                    return Ok((cand, f_cand));
                }
                let diff = &cand - point;
                let quad = f_pt + inner(&g, &diff) + frob_sq(&diff) / (2.0 * *eta);
                let f_cand = ws.smooth(&cand, l, cfg.lambda2);
                if f_cand <= quad + 1e-12 * quad.abs().max(1.0) {
                    return Ok((cand, f_cand));
                }
                *eta *= 0.5;
                if *eta < 1e-20 {
                    return Err(SmttError::Numerical {
                        iteration: iter,
                        message: "backtracking step size underflow".into(),
                    });
                }
            }
        };

        let (mut cand, mut f_cand) = step_from(&y, &mut eta)?;
        let mut obj_cand = f_cand + cfg.lambda1 * mixed_norm(cand.view(), cfg.norm);

        // momentum overshoot: restart and retake a plain proximal step from
        // the last iterate, which the sufficient-decrease condition makes
        // nonincreasing
        if obj_cand > obj_prev + 1e-12 * obj_prev.abs().max(1.0) && momentum_k > 1 {
            momentum_k = 1;
            let (c2, f2) = step_from(&c_cur, &mut eta)?;
            cand = c2;
            f_cand = f2;
            obj_cand = f_cand + cfg.lambda1 * mixed_norm(cand.view(), cfg.norm);
        }

        if !obj_cand.is_finite() {
            return Err(SmttError::Numerical {
                iteration: iter,
                message: "objective diverged".into(),
            });
        }

        history.push(obj_cand);
        iterations = iter;

        let rel = (obj_prev - obj_cand).abs() / obj_prev.abs().max(1.0);
        let beta = (momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0);
        y = &cand + &(beta * (&cand - &c_cur));
        c_cur = cand;
        obj_prev = obj_cand;
        momentum_k += 1;

        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok((
        CoefficientMatrix::new(c_cur, m_appearance)?,
        SolveReport {
            objective_history: history,
            iterations,
            converged,
            final_coupling: None,
        },
    ))
}

/// Alternating subproblem scheme: gradient steps on C with the auxiliary Z
/// fixed, then a mixed-norm prox update of Z, until C and Z agree. The
/// coupling weight mu grows geometrically so the pair is driven together and
/// the limit minimizes the original objective.
pub fn alternating_solve(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    cfg: &SolverConfig,
    m_appearance: usize,
) -> Result<(CoefficientMatrix, SolveReport)> {
    cfg.validate()?;
    let mut c = Array2::<f64>::zeros((a.ncols(), x.ncols()));
    check_shapes(x, a, c.view(), l)?;
    let ws = Workspace::new(x, a);
    let base_lip = lipschitz_bound(&ws, l, cfg.lambda2);

    const MAX_INNER_STEPS: usize = 200;
    const MU_GROWTH: f64 = 1.5;

    let mut z = c.clone();
    let mut mu = cfg.mu;
    let mut best = ws.smooth(&c, l, cfg.lambda2);
    let mut best_c = c.clone();
    let mut history = vec![best];
    let mut converged = false;
    let mut iterations = 0;
    let mut last_coupling = 0.0;

    for outer in 1..=cfg.max_iter {
        // Solve the quadratic C-subproblem by gradient descent until its
        // step sizes stall relative to the iterate scale.
        let eta = 1.0 / (base_lip + mu);
        for _ in 0..MAX_INNER_STEPS {
            let mut g = ws.grad(&c, l, cfg.lambda2);
            g = g + mu * (&c - &z);
            let step_sq = g.iter().map(|v| v * v).sum::<f64>() * eta * eta;
            c = c - eta * &g;
            if step_sq.sqrt() < 0.1 * cfg.tol * (1.0 + frob_sq(&c).sqrt()) {
                break;
            }
        }
        z = prox_mixed_norm(c.view(), cfg.lambda1 / mu, cfg.norm)?;

        let obj_c = ws.smooth(&c, l, cfg.lambda2) + cfg.lambda1 * mixed_norm(c.view(), cfg.norm);
        let obj_z = ws.smooth(&z, l, cfg.lambda2) + cfg.lambda1 * mixed_norm(z.view(), cfg.norm);
        let obj = obj_c.min(obj_z);
        if !obj.is_finite() {
            return Err(SmttError::Numerical {
                iteration: outer,
                message: "objective diverged".into(),
            });
        }
        let prev_best = best;
        if obj < best {
            best = obj;
            best_c = if obj_z < obj_c { z.clone() } else { c.clone() };
        }
        history.push(best);
        iterations = outer;

        let coupling = frob_sq(&(&c - &z)).sqrt() / (1.0 + frob_sq(&c).sqrt());
        last_coupling = coupling;
        let rel = (prev_best - best).abs() / prev_best.abs().max(1.0);
        if coupling < cfg.tol && rel < cfg.tol {
            converged = true;
            break;
        }
        // Growing mu only while the splitting gap is live keeps the inner
        // step size from collapsing once C and Z already agree (in
        // particular when lambda1 = 0, where they agree from the start).
        if coupling >= cfg.tol {
            mu = (mu * MU_GROWTH).min(1e12);
        }
    }

    Ok((
        CoefficientMatrix::new(best_c, m_appearance)?,
        SolveReport {
            objective_history: history,
            iterations,
            converged,
            final_coupling: Some(last_coupling),
        },
    ))
}

/// Plain subgradient descent with diminishing steps eta_0 / sqrt(k), tracking
/// the best iterate. Slow; used as an optimizer-independent oracle.
pub fn subgradient_solve(
    x: ArrayView2<'_, f64>,
    a: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    cfg: &SolverConfig,
    m_appearance: usize,
) -> Result<(CoefficientMatrix, SolveReport)> {
    cfg.validate()?;
    let mut c = Array2::<f64>::zeros((a.ncols(), x.ncols()));
    check_shapes(x, a, c.view(), l)?;
    let ws = Workspace::new(x, a);
    let eta0 = cfg
        .step
        .unwrap_or_else(|| 1.0 / lipschitz_bound(&ws, l, cfg.lambda2));

    let full_obj = |c: &Array2<f64>| {
        ws.smooth(c, l, cfg.lambda2) + cfg.lambda1 * mixed_norm(c.view(), cfg.norm)
    };

    let mut best = full_obj(&c);
    let mut best_c = c.clone();
    let mut history = vec![best];
    let mut converged = false;

    for k in 1..=cfg.max_iter {
        let mut g = ws.grad(&c, l, cfg.lambda2);
        // subgradient of lambda1 ||.||_{p,q}; zero entries/rows contribute 0
        match cfg.norm {
            NormPair::L11 => {
                for (gi, ci) in g.iter_mut().zip(c.iter()) {
                    *gi += cfg.lambda1 * ci.signum();
                }
            }
            NormPair::L21 => {
                for (mut gr, cr) in g.rows_mut().into_iter().zip(c.rows()) {
                    let nrm = cr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if nrm > 0.0 {
                        for (gi, ci) in gr.iter_mut().zip(cr.iter()) {
                            *gi += cfg.lambda1 * ci / nrm;
                        }
                    }
                }
            }
        }
        let eta = eta0 / (k as f64).sqrt();
        c = c - eta * &g;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(SmttError::Numerical {
                iteration: k,
                message: "iterate diverged".into(),
            });
        }
        let obj = full_obj(&c);
        let prev_best = best;
        if obj < best {
            best = obj;
            best_c = c.clone();
        }
        history.push(best);
        converged = (prev_best - best).abs() / prev_best.abs().max(1.0) < cfg.tol;
    }

    let iterations = cfg.max_iter;
    Ok((
        CoefficientMatrix::new(best_c, m_appearance)?,
        SolveReport {
            objective_history: history,
            iterations,
            converged,
            final_coupling: None,
        },
    ))
}
