//! Regularized logistic regression on standardized inputs.
//!
//! Minimizes `mean NLL + R(w) / (C n)` with `R = ||w||^2 / 2` (L2) or
//! `R = ||w||_1` (L1); the intercept is not penalized. L2 uses L-BFGS with
//! Armijo backtracking, L1 uses the orthant-wise variant (OWL-QN).

use serde::{Deserialize, Serialize};

use super::Penalty;

const MEMORY: usize = 10;
const MAX_ITER: usize = 10_000;
const REL_TOL: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn linear(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..self.weights.len() {
            z += self.weights[j] * (row[j] - self.mean[j]) / self.scale[j];
        }
        z
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear(row))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Standardized design: row-major, zero mean and unit variance per column.
/// Constant columns get scale 1 and become all zeros.
pub struct Design {
    pub x: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Design {
    pub fn standardize(raw: &[f64], n: usize, p: usize) -> Design {
        let mut mean = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                mean[j] += raw[i * p + j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for i in 0..n {
            for j in 0..p {
                let d = raw[i * p + j] - mean[j];
                var[j] += d * d;
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        let mut x = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                x[i * p + j] = (raw[i * p + j] - mean[j]) / scale[j];
            }
        }
        Design { x, n, p, mean, scale }
    }
}

/// The smooth part of the objective and its gradient at `theta = [w, b]`.
/// `l2` is the coefficient on `||w||^2 / 2` (zero for L1 fits).
pub fn smooth_loss_grad(d: &Design, y: &[f64], theta: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    let (p, n) = (d.p, d.n);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for i in 0..n {
        let row = &d.x[i * p..(i + 1) * p];
        let mut z = theta[p];
        for j in 0..p {
            z += row[j] * theta[j];
        }
        loss += softplus(z) - y[i] * z;
        let r = sigmoid(z) - y[i];
        for j in 0..p {
            grad[j] += r * row[j];
        }
        grad[p] += r;
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    if l2 > 0.0 {
        for j in 0..p {
            loss += 0.5 * l2 * theta[j] * theta[j];
            grad[j] += l2 * theta[j];
        }
    }
    loss
}

fn l1_norm(theta: &[f64], p: usize) -> f64 {
    theta[..p].iter().map(|w| w.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Memory {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if dot(&s, &y) <= 1e-12 {
            return;
        }
        if self.s.len() == MEMORY {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
    }

    /// Two-loop recursion: approximately `H^{-1} g`.
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            q.iter_mut().zip(&self.y[i]).for_each(|(qv, yv)| *qv -= alpha[i] * yv);
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let beta = rho * dot(&self.y[i], &q);
            q.iter_mut().zip(&self.s[i]).for_each(|(qv, sv)| *qv += (alpha[i] - beta) * sv);
        }
        q
    }
}

/// Orthant-wise pseudo-gradient of `smooth + lambda ||w||_1`.
fn pseudo_gradient(theta: &[f64], g: &[f64], lambda: f64, p: usize) -> Vec<f64> {
    let mut pg = g.to_vec();
    for j in 0..p {
        pg[j] = if theta[j] > 0.0 {
            g[j] + lambda
        } else if theta[j] < 0.0 {
            g[j] - lambda
        } else if g[j] + lambda < 0.0 {
            g[j] + lambda
        } else if g[j] - lambda > 0.0 {
            g[j] - lambda
        } else {
            0.0
        };
    }
    pg
}

/// Fits on a standardized design. Returns `theta = [w, b]`, the iteration
/// count, and the objective after every accepted step.
pub fn optimize(d: &Design, y: &[f64], c: f64, penalty: Penalty) -> (Vec<f64>, usize, Vec<f64>) {
    let p = d.p;
    let lambda = 1.0 / (c * d.n as f64);
    let (l2, l1) = match penalty {
        Penalty::L2 => (lambda, 0.0),
        Penalty::L1 => (0.0, lambda),
    };
    let objective = |theta: &[f64], grad: &mut [f64]| smooth_loss_grad(d, y, theta, l2, grad) + l1 * l1_norm(theta, p);

    let mut theta = vec![0.0; p + 1];
    let mut grad = vec![0.0; p + 1];
    let mut f = objective(&theta, &mut grad);
    let mut trace = vec![f];
    let mut mem = Memory { s: Vec::new(), y: Vec::new() };
    let mut iterations = 0;
    let mut new_grad = vec![0.0; p + 1];

    while iterations < MAX_ITER {
        iterations += 1;
        let steer = if l1 > 0.0 { pseudo_gradient(&theta, &grad, l1, p) } else { grad.clone() };
        if steer.iter().all(|g| g.abs() < 1e-14) {
            break;
        }
        let mut dir: Vec<f64> = mem.apply(&steer).iter().map(|v| -v).collect();
        if l1 > 0.0 {
            for j in 0..=p {
                if dir[j] * steer[j] >= 0.0 {
                    dir[j] = 0.0;
                }
            }
        }
        let mut slope = dot(&dir, &steer);
        if slope >= 0.0 || !slope.is_finite() {
            mem = Memory { s: Vec::new(), y: Vec::new() };
            dir = steer.iter().map(|v| -v).collect();
            slope = dot(&dir, &steer);
        }
        let orthant: Vec<f64> = (0..p)
            .map(|j| if theta[j] != 0.0 { theta[j].signum() } else { -steer[j].signum() })
            .collect();

        let mut step = if mem.s.is_empty() { 1.0 / dot(&steer, &steer).sqrt().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, dv)| t + step * dv).collect();
            if l1 > 0.0 {
                for j in 0..p {
                    if cand[j] * orthant[j] <= 0.0 {
                        cand[j] = 0.0;
                    }
                }
            }
            let f_new = objective(&cand, &mut new_grad);
            let decrease = if l1 > 0.0 {
                ARMIJO * cand.iter().zip(&theta).zip(&steer).map(|((a, b), g)| (a - b) * g).sum::<f64>()
            } else {
                ARMIJO * step * slope
            };
            if f_new.is_finite() && f_new <= f + decrease {
                accepted = Some((cand, f_new));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, f_new)) = accepted else { break };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let done = (f - f_new).abs() / f.abs().max(f_new.abs()).max(1.0) < REL_TOL;
        // gradients are of the smooth part only, also for L1
        mem.push(s, yv);
        grad.copy_from_slice(&new_grad);
        theta = cand;
        f = f_new;
        trace.push(f);
        if done {
            break;
        }
    }
    (theta, iterations, trace)
}

pub fn fit(raw: &[f64], n: usize, p: usize, labels: &[bool], c: f64, penalty: Penalty) -> LogisticModel {
    let design = Design::standardize(raw, n, p);
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let (theta, iterations, _) = optimize(&design, &y, c, penalty);
    LogisticModel {
        weights: theta[..p].to_vec(),
        intercept: theta[p],
        mean: design.mean,
        scale: design.scale,
        iterations,
    }
}
