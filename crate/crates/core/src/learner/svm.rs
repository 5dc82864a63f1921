use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_matrix, LearnerError};
use crate::cohort::BinaryLabel;

/// Solver settings.
///
/// The dual is solved by coordinate descent over a seeded permutation of the
/// samples each epoch. The bias is learned as the weight of a constant unit
/// feature, so it is regularized along with `w`. Convergence is declared when
/// the projected-gradient violation drops below `tol`, or after `max_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub tol: f64,
    pub max_epochs: usize,
    /// Scale each sample's C by `n / (2 n_class)`.
    pub class_weighting: bool,
    /// Seed of the per-epoch coordinate permutations.
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_epochs: 10_000,
            class_weighting: false,
            seed: 0,
        }
    }
}

/// Dense linear kernel matrix of a row set.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Self { n, k }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }
}

/// A training problem over a subset of the Gram rows.
pub struct SvmProblem<'a> {
    gram: &'a Gram,
    idx: Vec<usize>,
    y: Vec<f64>,
    /// `y_s y_t (K_st + 1)`, row-major over the subset.
    q: Vec<f64>,
}

/// Dual solution; `alpha[t]` belongs to Gram row `idx[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Epochs run.
    pub iterations: usize,
    /// Projected-gradient violation at exit.
    pub violation: f64,
    /// Primal minus dual objective at exit.
    pub gap: f64,
    pub dual_objective: f64,
}

impl<'a> SvmProblem<'a> {
    pub fn new(gram: &'a Gram, idx: Vec<usize>, labels: &[BinaryLabel]) -> Result<Self, LearnerError> {
        if idx.len() != labels.len() {
            return Err(LearnerError::LengthMismatch(labels.len(), idx.len()));
        }
        let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            return Err(LearnerError::SingleClassTraining);
        }
        let n = idx.len();
        let mut q = vec![0.0; n * n];
        for s in 0..n {
            for t in 0..n {
                q[s * n + t] = y[s] * y[t] * (gram.get(idx[s], idx[t]) + 1.0);
            }
        }
        Ok(Self { gram, idx, y, q })
    }

    pub fn solve(&self, c: f64, opts: &SvmOptions) -> DualSolution {
        self.solve_from(c, opts, None)
    }

    /// Like [`solve`](Self::solve), starting from `init` (clipped to the box)
    /// instead of zero. Used to warm-start along an increasing C path.
    pub fn solve_from(&self, c: f64, opts: &SvmOptions, init: Option<&[f64]>) -> DualSolution {
        let n = self.idx.len();
        let y = &self.y;
        let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
        let cap: Vec<f64> = y
            .iter()
            .map(|&v| {
                if opts.class_weighting {
                    let n_cls = if v > 0.0 { n_pos } else { n as f64 - n_pos };
                    c * n as f64 / (2.0 * n_cls)
                } else {
                    c
                }
            })
            .collect();
        let diag: Vec<f64> = (0..n).map(|t| self.q[t * n + t]).collect();
        let mut alpha: Vec<f64> = match init {
            Some(a) => a.iter().zip(&cap).map(|(v, ct)| v.clamp(0.0, *ct)).collect(),
            None => vec![0.0; n],
        };
        // grad[t] = (Q alpha)_t - 1
        let mut grad = vec![-1.0_f64; n];
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (g, qv) in grad.iter_mut().zip(&self.q[j * n..(j + 1) * n]) {
                    *g += a * qv;
                }
            }
        }
        let mut last_obj = dual_objective(&alpha, &grad);
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut epochs = 0;
        let mut violation = f64::INFINITY;
        while epochs < opts.max_epochs {
            order.shuffle(&mut rng);
            let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
            for &i in &order {
                let g = grad[i];
                let pg = if alpha[i] <= 0.0 {
                    g.min(0.0)
                } else if alpha[i] >= cap[i] {
                    g.max(0.0)
                } else {
                    g
                };
                pg_max = pg_max.max(pg);
                pg_min = pg_min.min(pg);
                if pg == 0.0 {
                    continue;
                }
                let new = (alpha[i] - g / diag[i]).clamp(0.0, cap[i]);
                let delta = new - alpha[i];
                if delta == 0.0 {
                    continue;
                }
                alpha[i] = new;
                for (g, qv) in grad.iter_mut().zip(&self.q[i * n..(i + 1) * n]) {
                    *g += delta * qv;
                }
            }
            epochs += 1;
            violation = (pg_max - pg_min).max(0.0);
            if cfg!(debug_assertions) {
                let obj = dual_objective(&alpha, &grad);
                debug_assert!(
                    obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                    "dual objective rose: {last_obj} -> {obj}"
                );
                last_obj = obj;
            }
            if violation < opts.tol {
                break;
            }
        }
        let bias: f64 = alpha.iter().zip(y).map(|(a, yy)| a * yy).sum();
        // With f_t = y_t (grad_t + 1): primal = a'Qa/2 + sum c_t max(0, -grad_t).
        let quad: f64 = alpha.iter().zip(&grad).map(|(a, g)| a * (g + 1.0)).sum();
        let primal = 0.5 * quad + cap.iter().zip(&grad).map(|(ct, g)| ct * (-g).max(0.0)).sum::<f64>();
        let dual_objective = dual_objective(&alpha, &grad);
        DualSolution {
            gap: (primal + dual_objective).max(0.0),
            dual_objective,
            alpha,
            bias,
            iterations: epochs,
            violation,
        }
    }

    /// `sum_t alpha_t y_t K(idx_t, row) + b` for any Gram row.
    pub fn decision(&self, sol: &DualSolution, row: usize) -> f64 {
        self.idx
            .iter()
            .zip(&sol.alpha)
            .zip(&self.y)
            .filter(|((_, &a), _)| a != 0.0)
            .map(|((&i, &a), &yy)| a * yy * self.gram.get(i, row))
            .sum::<f64>()
            + sol.bias
    }

    /// Primal weights from the rows that built the Gram matrix.
    pub fn weights(&self, sol: &DualSolution, x: &[Vec<f64>]) -> Vec<f64> {
        let d = x.first().map_or(0, Vec::len);
        let mut w = vec![0.0; d];
        for ((&i, &a), &yy) in self.idx.iter().zip(&sol.alpha).zip(&self.y) {
            if a != 0.0 {
                for (wk, xk) in w.iter_mut().zip(&x[i]) {
                    *wk += a * yy * xk;
                }
            }
        }
        w
    }
}

/// `a'Qa/2 - sum a` in minimization form.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// A fitted hyperplane in the (standardized) training space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub duality_gap: f64,
}

impl LinearSvm {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// `(|w|^2 + b^2)/2 + sum_i c_i hinge(y_i f(x_i))`.
    pub fn primal_objective(&self, x: &[Vec<f64>], y: &[BinaryLabel], c: f64, opts: &SvmOptions) -> f64 {
        let n = y.len() as f64;
        let n_pos = y.iter().filter(|&&l| l == BinaryLabel::High).count() as f64;
        let reg = 0.5 * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let loss: f64 = x
            .iter()
            .zip(y)
            .map(|(r, &l)| {
                let ci = if opts.class_weighting {
                    let n_cls = if l == BinaryLabel::High { n_pos } else { n - n_pos };
                    c * n / (2.0 * n_cls)
                } else {
                    c
                };
                ci * (1.0 - l.sign() * self.decision(r)).max(0.0)
            })
            .sum();
        reg + loss
    }
}

/// Trains on an already standardized matrix.
pub fn train_linear_svm(
    x: &[Vec<f64>],
    y: &[BinaryLabel],
    c: f64,
    opts: &SvmOptions,
) -> Result<LinearSvm, LearnerError> {
    if x.len() != y.len() {
        return Err(LearnerError::LengthMismatch(y.len(), x.len()));
    }
    check_matrix(x)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(LearnerError::InvalidGrid(format!("c must be positive, got {c}")));
    }
    let gram = Gram::new(x);
    let problem = SvmProblem::new(&gram, (0..x.len()).collect(), y)?;
    let sol = problem.solve(c, opts);
    Ok(LinearSvm {
        weights: problem.weights(&sol, x),
        bias: sol.bias,
        iterations: sol.iterations,
        duality_gap: sol.gap,
    })
}
