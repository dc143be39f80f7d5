//! Anderson mixing: residual window, the sum-to-one constrained
//! least-squares coefficient solve, and a generic accelerated fixed-point
//! driver.

use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Default relative Tikhonov regularization for the coefficient solve.
pub const DEFAULT_LAMBDA_REL: f64 = 1e-8;
/// The regularization ladder escalates by this factor on solve failure.
const LAMBDA_ESCALATION: f64 = 100.0;
/// Largest relative regularization tried before falling back to a plain step.
const LAMBDA_REL_MAX: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct WindowEntry {
    pub iterate: Vec<f64>,
    pub image: Vec<f64>,
    /// image - iterate.
    pub residual: Vec<f64>,
}

/// Ring buffer of the last `capacity` (iterate, image, residual) triples,
/// oldest first. Capacity is m+1 for memory parameter m.
#[derive(Debug, Clone)]
pub struct AndersonWindow {
    capacity: usize,
    entries: VecDeque<WindowEntry>,
}

impl AndersonWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    /// Store an (iterate, image) pair, computing its residual; evicts the
    /// oldest entry when full.
    pub fn push(&mut self, iterate: Vec<f64>, image: Vec<f64>) -> Result<()> {
        if iterate.len() != image.len() {
            return Err(Error::DimensionMismatch(format!(
                "iterate has length {}, image has length {}",
                iterate.len(),
                image.len()
            )));
        }
        if let Some(front) = self.entries.front() {
            if front.iterate.len() != iterate.len() {
                return Err(Error::DimensionMismatch(format!(
                    "window holds vectors of length {}, got {}",
                    front.iterate.len(),
                    iterate.len()
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        let residual = image
            .iter()
            .zip(&iterate)
            .map(|(t, v)| t - v)
            .collect();
        self.entries.push_back(WindowEntry {
            iterate,
            image,
            residual,
        });
        Ok(())
    }

    fn residual_columns(&self) -> Vec<&[f64]> {
        self.entries.iter().map(|e| e.residual.as_slice()).collect()
    }
}

/// Result of the constrained coefficient solve.
#[derive(Debug, Clone)]
pub struct AlphaSolution {
    /// Mixing coefficients, oldest entry first; sum to 1 unless `fallback`.
    pub alpha: Vec<f64>,
    /// Unregularized combined residual norm ||Delta alpha||_2.
    pub residual_norm: f64,
    /// Absolute Tikhonov lambda that produced `alpha`.
    pub regularization_used: f64,
    /// True when the solve degraded to a plain step on the newest iterate.
    pub fallback: bool,
}

/// Minimize ||Delta alpha||_2^2 + lambda ||alpha||_2^2 subject to
/// sum(alpha) = 1, on the Gram system G = Delta^T Delta.
///
/// lambda = lambda_rel * trace(G) / k, escalating by x100 up to 1e-2
/// relative; if every rung fails the solution falls back to
/// alpha = (0,..,0,1), i.e. an unaccelerated step.
pub fn solve_alpha(columns: &[&[f64]], lambda_rel: f64) -> AlphaSolution {
    let k = columns.len();
    assert!(k >= 1, "need at least one residual column");
    if k == 1 {
        // The constraint pins alpha = [1] exactly.
        let norm = l2_norm(columns[0]);
        return AlphaSolution {
            alpha: vec![1.0],
            residual_norm: norm,
            regularization_used: lambda_rel * norm * norm,
            fallback: false,
        };
    }

    let mut gram = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let d = dot(columns[i], columns[j]);
            gram[i][j] = d;
            gram[j][i] = d;
        }
    }
    let trace: f64 = (0..k).map(|i| gram[i][i]).sum();

    let mut rel = lambda_rel.max(0.0);
    let mut lambda = rel * trace / k as f64;
    loop {
        if let Some(alpha) = try_solve(&gram, lambda) {
            let residual_norm = combined_residual_norm(columns, &alpha);
            if residual_norm.is_finite() {
                return AlphaSolution {
                    alpha,
                    residual_norm,
                    regularization_used: lambda,
                    fallback: false,
                };
            }
        }
        if rel >= LAMBDA_REL_MAX || trace == 0.0 {
            break;
        }
        rel = (rel * LAMBDA_ESCALATION).clamp(f64::MIN_POSITIVE, LAMBDA_REL_MAX);
        lambda = rel * trace / k as f64;
    }

    let mut alpha = vec![0.0; k];
    alpha[k - 1] = 1.0;
    AlphaSolution {
        residual_norm: l2_norm(columns[k - 1]),
        alpha,
        regularization_used: lambda,
        fallback: true,
    }
}

/// Solve (G + lambda I) x = 1 by equilibrated Cholesky with one step of
/// iterative refinement, then normalize to the constraint. The diagonal
/// scaling keeps badly scaled residual columns from degrading the solve.
fn try_solve(gram: &[Vec<f64>], lambda: f64) -> Option<Vec<f64>> {
    let k = gram.len();
    let mut b = gram.to_vec();
    for i in 0..k {
        b[i][i] += lambda;
    }
    let mut scale = vec![0.0; k];
    for i in 0..k {
        if !(b[i][i] > 0.0) || !b[i][i].is_finite() {
            return None;
        }
        scale[i] = b[i][i].sqrt();
    }
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = b[i][j] / (scale[i] * scale[j]);
        }
    }
    cholesky_factor(&mut m)?;

    let solve = |rhs: &[f64]| -> Vec<f64> {
        let scaled: Vec<f64> = rhs.iter().zip(&scale).map(|(r, d)| r / d).collect();
        let y = cholesky_apply(&m, &scaled);
        y.iter().zip(&scale).map(|(v, d)| v / d).collect()
    };

    let ones = vec![1.0; k];
    let mut x = solve(&ones);
    // One refinement pass against the unscaled system.
    let mut residual = vec![0.0; k];
    for i in 0..k {
        let mut r = 1.0;
        for j in 0..k {
            r -= b[i][j] * x[j];
        }
        residual[i] = r;
    }
    let correction = solve(&residual);
    for (xi, c) in x.iter_mut().zip(&correction) {
        *xi += c;
    }

    let sum: f64 = x.iter().sum();
    if !sum.is_finite() || sum.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let alpha: Vec<f64> = x.iter().map(|v| v / sum).collect();
    if alpha.iter().all(|v| v.is_finite()) {
        Some(alpha)
    } else {
        None
    }
}

/// In-place lower Cholesky factorization. Returns None on a non-positive or
/// non-finite pivot.
fn cholesky_factor(a: &mut [Vec<f64>]) -> Option<()> {
    let k = a.len();
    for j in 0..k {
        let mut diag = a[j][j];
        for p in 0..j {
            diag -= a[j][p] * a[j][p];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        a[j][j] = diag;
        for i in (j + 1)..k {
            let mut v = a[i][j];
            for p in 0..j {
                v -= a[i][p] * a[j][p];
            }
            a[i][j] = v / diag;
        }
    }
    Some(())
}

/// Forward/back substitution against a factored matrix.
fn cholesky_apply(a: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let k = a.len();
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut v = rhs[i];
        for p in 0..i {
            v -= a[i][p] * y[p];
        }
        y[i] = v / a[i][i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut v = y[i];
        for p in (i + 1)..k {
            v -= a[p][i] * x[p];
        }
        x[i] = v / a[i][i];
    }
    x
}

/// Independent oracle for `solve_alpha`: solves the dense (k+1)x(k+1) KKT
/// system [[G + lambda I, 1], [1^T, 0]] [alpha; nu] = [0; 1] at the given
/// absolute lambda.
pub fn solve_alpha_bruteforce(columns: &[&[f64]], lambda: f64) -> Result<Vec<f64>> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "need at least one residual column".into(),
        ));
    }
    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            kkt[(i, j)] = dot(columns[i], columns[j]);
        }
        kkt[(i, i)] += lambda;
        kkt[(i, k)] = 1.0;
        kkt[(k, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular KKT system".into()))?;
    let alpha: Vec<f64> = sol.as_slice()[..k].to_vec();
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite KKT solution".into()));
    }
    Ok(alpha)
}

/// The accelerated update: the alpha-weighted sum of the stored operator
/// images (not the iterates).
pub fn anderson_combine(window: &AndersonWindow, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != window.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has length {}, window holds {} entries",
            alpha.len(),
            window.len()
        )));
    }
    let dim = window
        .entries
        .front()
        .map(|e| e.image.len())
        .unwrap_or(0);
    let mut out = vec![0.0; dim];
    for (entry, &a) in window.entries.iter().zip(alpha) {
        for (o, &t) in out.iter_mut().zip(&entry.image) {
            *o += a * t;
        }
    }
    Ok(out)
}

/// One accelerated fixed-point run: all iterates plus the coefficient solve
/// taken at each accelerated step.
#[derive(Debug, Clone)]
pub struct FixedPointRun {
    /// v_0 .. v_num_iters.
    pub iterates: Vec<Vec<f64>>,
    /// One entry per accelerated step (steps producing v_2 onward).
    pub alpha_history: Vec<AlphaSolution>,
}

/// Anderson-accelerated iteration of an arbitrary operator.
///
/// The first step is a plain application; afterwards each step pushes
/// (v_k, op(v_k)) into a window of capacity m+1, solves for the mixing
/// coefficients, and combines the stored images. m = 0 degenerates to plain
/// fixed-point iteration bit-for-bit.
pub fn accelerate_fixed_point<F>(
    mut operator: F,
    v0: &[f64],
    m: usize,
    num_iters: usize,
    lambda_rel: f64,
) -> Result<FixedPointRun>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if num_iters < 1 {
        return Err(Error::InvalidArgument("num_iters must be at least 1".into()));
    }
    let mut window = AndersonWindow::new(m + 1);
    let mut iterates = Vec::with_capacity(num_iters + 1);
    let mut alpha_history = Vec::new();
    iterates.push(v0.to_vec());

    let image0 = operator(v0)?;
    check_finite(&image0, 1)?;
    window.push(v0.to_vec(), image0.clone())?;
    iterates.push(image0);

    for k in 1..num_iters {
        let current = iterates[k].clone();
        let image = operator(&current)?;
        check_finite(&image, k + 1)?;
        window.push(current, image)?;
        let solution = solve_alpha(&window.residual_columns(), lambda_rel);
        let next = anderson_combine(&window, &solution.alpha)?;
        check_finite(&next, k + 1)?;
        alpha_history.push(solution);
        iterates.push(next);
    }

    Ok(FixedPointRun {
        iterates,
        alpha_history,
    })
}

fn check_finite(v: &[f64], iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate { iteration })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn combined_residual_norm(columns: &[&[f64]], alpha: &[f64]) -> f64 {
    let dim = columns[0].len();
    let mut acc = vec![0.0; dim];
    for (col, &a) in columns.iter().zip(alpha) {
        for (s, &c) in acc.iter_mut().zip(*col) {
            *s += a * c;
        }
    }
    l2_norm(&acc)
}
