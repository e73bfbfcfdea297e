//! Margin functions whose positive roots are the next dual scalings.
//!
//! For row `i` with capacities `eta_ij`, weights `w_j` and mass `u_i`, the
//! row margin function is
//!
//! ```text
//! g(x) = sum_j eta_ij / (1 + x * w_j)  -  sum_j eta_ij  +  u_i
//! ```
//!
//! which is strictly decreasing in `x > 0` whenever some `eta_ij * w_j > 0`,
//! runs from `u_i > 0` at `x -> 0` down to `u_i - sum_j eta_ij < 0`, and so
//! has a unique positive root. Column margin functions have the same shape
//! with the roles of the two sides swapped.

use cot_core::ProblemInstance;

/// `exp(-cost(i, j) / epsilon)`.
pub fn kernel_entry(instance: &ProblemInstance, i: usize, j: usize, epsilon: f64) -> f64 {
    (-instance.cost().value(i, j) / epsilon).exp()
}

/// One line (row or column) of the problem, reduced to the data the margin
/// function needs. `weights` and `caps` are parallel; entries with zero
/// capacity never contribute.
pub(crate) struct MarginFn<'a> {
    pub weights: &'a [f64],
    pub caps: &'a [f64],
    pub cap_total: f64,
    pub mass: f64,
}

impl MarginFn<'_> {
    pub fn value(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (&eta, &w) in self.caps.iter().zip(self.weights) {
            if eta == 0.0 {
                continue;
            }
            // x * w may overflow to infinity; the term then correctly
            // vanishes (the cell is saturated at its capacity)
            acc += eta / (1.0 + x * w);
        }
        acc - self.cap_total + self.mass
    }

    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut slope = 0.0;
        for (&eta, &w) in self.caps.iter().zip(self.weights) {
            if eta == 0.0 {
                continue;
            }
            if w == 0.0 {
                // dead cell: the term sits at its full capacity, slope zero
                acc += eta;
                continue;
            }
            let d = 1.0 + x * w;
            if d.is_finite() {
                acc += eta / d;
                slope -= eta * w / (d * d);
            }
            // d infinite: both the term and its slope are zero
        }
        (acc - self.cap_total + self.mass, slope)
    }

    /// True when every cell with capacity has a vanished weight, so the
    /// margin function is the constant `mass` and has no root.
    pub fn is_flat(&self) -> bool {
        self.caps
            .iter()
            .zip(self.weights)
            .all(|(&eta, &w)| eta == 0.0 || w == 0.0)
    }
}

/// Weights for row `i`: `w_j = psi_j * exp((alpha_i + beta_j - C_ij) / epsilon)`.
pub(crate) fn row_weights(
    instance: &ProblemInstance,
    i: usize,
    psi: &[f64],
    alpha_i: f64,
    beta: &[f64],
    epsilon: f64,
    out: &mut [f64],
) {
    let cost = instance.cost();
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = psi[j] * ((alpha_i + beta[j] - cost.value(i, j)) / epsilon).exp();
    }
}

/// Weights for column `j`: `w_i = phi_i * exp((alpha_i + beta_j - C_ij) / epsilon)`.
pub(crate) fn col_weights(
    instance: &ProblemInstance,
    j: usize,
    phi: &[f64],
    alpha: &[f64],
    beta_j: f64,
    epsilon: f64,
    out: &mut [f64],
) {
    let cost = instance.cost();
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = phi[i] * ((alpha[i] + beta_j - cost.value(i, j)) / epsilon).exp();
    }
}

pub(crate) fn fill_row_caps(instance: &ProblemInstance, i: usize, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = instance.upper(i, j);
        total += *slot;
    }
    total
}

pub(crate) fn fill_col_caps(instance: &ProblemInstance, j: usize, out: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = instance.upper(i, j);
        total += *slot;
    }
    total
}

fn row_margin_parts(
    instance: &ProblemInstance,
    i: usize,
    psi: &[f64],
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let m = instance.m();
    let zeros = vec![0.0; m];
    let mut weights = vec![0.0; m];
    row_weights(instance, i, psi, 0.0, &zeros, epsilon, &mut weights);
    let mut caps = vec![0.0; m];
    let cap_total = fill_row_caps(instance, i, &mut caps);
    (weights, caps, cap_total)
}

fn col_margin_parts(
    instance: &ProblemInstance,
    j: usize,
    phi: &[f64],
    epsilon: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = instance.n();
    let zeros = vec![0.0; n];
    let mut weights = vec![0.0; n];
    col_weights(instance, j, phi, &zeros, 0.0, epsilon, &mut weights);
    let mut caps = vec![0.0; n];
    let cap_total = fill_col_caps(instance, j, &mut caps);
    (weights, caps, cap_total)
}

/// Row margin function value at `phi_i`, with the column scalings given
/// explicitly and no absorbed offsets.
pub fn g_eval(
    instance: &ProblemInstance,
    i: usize,
    phi_i: f64,
    psi: &[f64],
    epsilon: f64,
) -> f64 {
    let (weights, caps, cap_total) = row_margin_parts(instance, i, psi, epsilon);
    let mf = MarginFn { weights: &weights, caps: &caps, cap_total, mass: instance.u()[i] };
    mf.value(phi_i)
}

/// Derivative of the row margin function at `phi_i`.
pub fn g_derivative(
    instance: &ProblemInstance,
    i: usize,
    phi_i: f64,
    psi: &[f64],
    epsilon: f64,
) -> f64 {
    let (weights, caps, cap_total) = row_margin_parts(instance, i, psi, epsilon);
    let mf = MarginFn { weights: &weights, caps: &caps, cap_total, mass: instance.u()[i] };
    mf.value_and_derivative(phi_i).1
}

/// Column margin function value at `psi_j`.
pub fn f_eval(
    instance: &ProblemInstance,
    j: usize,
    psi_j: f64,
    phi: &[f64],
    epsilon: f64,
) -> f64 {
    let (weights, caps, cap_total) = col_margin_parts(instance, j, phi, epsilon);
    let mf = MarginFn { weights: &weights, caps: &caps, cap_total, mass: instance.v()[j] };
    mf.value(psi_j)
}

/// Derivative of the column margin function at `psi_j`.
pub fn f_derivative(
    instance: &ProblemInstance,
    j: usize,
    psi_j: f64,
    phi: &[f64],
    epsilon: f64,
) -> f64 {
    let (weights, caps, cap_total) = col_margin_parts(instance, j, phi, epsilon);
    let mf = MarginFn { weights: &weights, caps: &caps, cap_total, mass: instance.v()[j] };
    mf.value_and_derivative(psi_j).1
}
