//! Deterministic generators for the four benchmark families.
//!
//! Marginals are i.i.d. uniform (0, 1] draws, normalized to unit mass. Costs
//! are squared distances on regular grids with spacing `1/size` per axis.
//! Capacities come in two shapes: a uniform cap `lambda / N^2` over all
//! cells (`N` = flattened instance size), and the marginal-proportional
//! bound `2 u v^T + delta P` with `P` an i.i.d. uniform noise matrix.
//!
//! Everything is seeded through [`SplitMix64`] streams (stream 0: `u`,
//! stream 1: `v`, stream 2: noise), so a `(family, size, parameter, seed)`
//! tuple names one reproducible instance.

mod rng;

pub use rng::SplitMix64;

use cot_core::{
    validate_feasibility, BoundSpec, CapacityBounds, CostSpec, DenseMatrix, Marginals,
    ProblemInstance, Violation,
};

/// Benchmark family. `Uniform*` takes `lambda`, `Marginal*` takes `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Uniform1d,
    Marginal1d,
    Uniform2d,
    Marginal2d,
}

impl Family {
    pub fn is_two_dimensional(self) -> bool {
        matches!(self, Family::Uniform2d | Family::Marginal2d)
    }

    /// The family parameter this family actually reads.
    pub fn parameter_name(self) -> &'static str {
        match self {
            Family::Uniform1d | Family::Uniform2d => "lambda",
            Family::Marginal1d | Family::Marginal2d => "delta",
        }
    }
}

/// A fully specified generation request. `size` is the number of grid
/// points for 1-D families and the points per axis for 2-D families (so the
/// instance has `size^2` rows there).
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub family: Family,
    pub size: usize,
    pub lambda: f64,
    pub delta: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn uniform_1d(size: usize, lambda: f64, seed: u64) -> Self {
        Self { family: Family::Uniform1d, size, lambda, delta: 0.0, seed }
    }

    pub fn marginal_1d(size: usize, delta: f64, seed: u64) -> Self {
        Self { family: Family::Marginal1d, size, lambda: 0.0, delta, seed }
    }

    pub fn uniform_2d(side: usize, lambda: f64, seed: u64) -> Self {
        Self { family: Family::Uniform2d, size: side, lambda, delta: 0.0, seed }
    }

    pub fn marginal_2d(side: usize, delta: f64, seed: u64) -> Self {
        Self { family: Family::Marginal2d, size: side, lambda: 0.0, delta, seed }
    }

    /// Flattened instance size (rows = columns).
    pub fn flat_size(&self) -> usize {
        if self.family.is_two_dimensional() {
            self.size * self.size
        } else {
            self.size
        }
    }
}

/// A generated instance plus how many marginal resamples feasibility cost.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: ProblemInstance,
    pub retries: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("size must be at least 1")]
    EmptySize,

    #[error("{name} must be positive for this family: got {value}")]
    NonpositiveParameter { name: &'static str, value: f64 },

    #[error("no feasible instance after {retries} marginal resamples (last seed {last_seed})")]
    RetriesExhausted { retries: u32, last_seed: u64 },

    #[error("generated instance unexpectedly infeasible ({} violations)", .0.len())]
    Infeasible(Vec<Violation>),

    #[error(transparent)]
    Core(#[from] cot_core::CoreError),
}

/// Marginal draws are capped at this many feasibility resamples.
pub const MAX_RETRIES: u32 = 100;

/// `u` (length `n`, stream 0) and `v` (length `m`, stream 1): i.i.d.
/// uniform (0, 1] draws normalized to unit mass. The largest entry absorbs
/// the rounding residue so the sums re-check exactly.
pub fn gen_marginals(n: usize, m: usize, seed: u64) -> Marginals {
    let u = unit_mass_draws(n, SplitMix64::stream(seed, 0));
    let v = unit_mass_draws(m, SplitMix64::stream(seed, 1));
    Marginals::new(u, v).expect("normalized draws form valid marginals")
}

fn unit_mass_draws(len: usize, mut rng: SplitMix64) -> Vec<f64> {
    let mut x: Vec<f64> = (0..len).map(|_| rng.next_unit()).collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    // push the rounding residue into the largest entry
    let resum: f64 = x.iter().sum();
    let imax =
        x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    x[imax] += 1.0 - resum;
    x
}

/// Squared-distance cost on `size` points spaced `1/size` apart.
pub fn grid_cost_1d(size: usize) -> CostSpec {
    CostSpec::Grid1d { h: 1.0 / size as f64 }
}

/// Squared-distance cost on a `side x side` grid, spacing `1/side` per axis,
/// flattened row-major.
pub fn grid_cost_2d(side: usize) -> CostSpec {
    let h = 1.0 / side as f64;
    CostSpec::Grid2d { side, h_x: h, h_y: h }
}

/// Uniform capacity `lambda / N^2` per cell, `N` the flattened size. At
/// `lambda = N^2` every cell may hold all mass and the constraint is
/// redundant.
pub fn uniform_capacity(flat_size: usize, lambda: f64) -> BoundSpec {
    let n = flat_size as f64;
    BoundSpec::Uniform { value: lambda / (n * n) }
}

/// Marginal-proportional capacity `2 u v^T + delta P`, `P` i.i.d. uniform
/// (0, 1] from stream 2. With `delta = 0` the bound stays rank-one and
/// needs no `N x M` storage.
pub fn marginal_capacity(marginals: &Marginals, delta: f64, seed: u64) -> BoundSpec {
    let n = marginals.u().len();
    let m = marginals.v().len();
    let noise = if delta > 0.0 {
        let mut rng = SplitMix64::stream(seed, 2);
        let mut p = DenseMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                p.set(i, j, rng.next_unit());
            }
        }
        Some(p)
    } else {
        None
    };
    BoundSpec::RankOnePlusDense {
        a: marginals.u().to_vec(),
        b: marginals.v().to_vec(),
        scale: 2.0,
        noise,
        noise_scale: delta,
    }
}

/// Generates one instance. Uniform-capacity families resample the marginals
/// with an incremented seed until the instance passes feasibility
/// validation, up to [`MAX_RETRIES`]; the marginal-capacity bound dominates
/// `u v^T`, so those families are feasible on the first draw.
pub fn gen_instance(spec: &GenSpec) -> Result<Generated, GenError> {
    if spec.size == 0 {
        return Err(GenError::EmptySize);
    }
    let flat = spec.flat_size();
    let cost = if spec.family.is_two_dimensional() {
        grid_cost_2d(spec.size)
    } else {
        grid_cost_1d(spec.size)
    };

    match spec.family {
        Family::Uniform1d | Family::Uniform2d => {
            if spec.lambda <= 0.0 {
                return Err(GenError::NonpositiveParameter {
                    name: "lambda",
                    value: spec.lambda,
                });
            }
            let bounds = uniform_capacity(flat, spec.lambda);
            for attempt in 0..=MAX_RETRIES {
                let seed = spec.seed.wrapping_add(attempt as u64);
                let marginals = gen_marginals(flat, flat, seed);
                let instance = ProblemInstance::new(
                    flat,
                    flat,
                    cost.clone(),
                    marginals,
                    CapacityBounds::upper_only(bounds.clone()),
                )?;
                if validate_feasibility(&instance).is_empty() {
                    return Ok(Generated { instance, retries: attempt });
                }
            }
            Err(GenError::RetriesExhausted {
                retries: MAX_RETRIES,
                last_seed: spec.seed.wrapping_add(MAX_RETRIES as u64),
            })
        }
        Family::Marginal1d | Family::Marginal2d => {
            if spec.delta < 0.0 {
                return Err(GenError::NonpositiveParameter { name: "delta", value: spec.delta });
            }
            let marginals = gen_marginals(flat, flat, spec.seed);
            let bounds = marginal_capacity(&marginals, spec.delta, spec.seed);
            let instance = ProblemInstance::new(
                flat,
                flat,
                cost,
                marginals,
                CapacityBounds::upper_only(bounds),
            )?;
            let violations = validate_feasibility(&instance);
            if !violations.is_empty() {
                return Err(GenError::Infeasible(violations));
            }
            Ok(Generated { instance, retries: 0 })
        }
    }
}
