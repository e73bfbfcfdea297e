use serde::{Deserialize, Serialize};

use crate::matrix::DenseMatrix;
use crate::{tolerances, CoreError, Result};

/// Source and target mass vectors. Both are probability vectors: entries
/// nonnegative, each summing to 1 within [`tolerances::FEASIBILITY`].
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Marginals {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        for vec in [&u, &v] {
            let mut total = 0.0;
            for (index, &value) in vec.iter().enumerate() {
                if !value.is_finite() {
                    return Err(CoreError::NonFinite { context: "marginal entry" });
                }
                if value < 0.0 {
                    return Err(CoreError::NegativeMass { index, value });
                }
                total += value;
            }
            if (total - 1.0).abs() > tolerances::FEASIBILITY {
                return Err(CoreError::MassNotNormalized {
                    total,
                    tol: tolerances::FEASIBILITY,
                });
            }
        }
        Ok(Self { u, v })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }
}

/// Ground cost, either stored densely or defined implicitly by a grid so
/// large instances never materialize an `n x m` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CostSpec {
    /// Explicit `n x m` cost matrix.
    Dense { matrix: DenseMatrix },
    /// Squared distance on a regular 1-D grid: `cost(i, j) = (h (i - j))^2`.
    Grid1d { h: f64 },
    /// Squared distance on a regular `side x side` grid, flattened row-major
    /// (`i = i1 * side + i2`): `cost = (h_x (i1 - j1))^2 + (h_y (i2 - j2))^2`.
    Grid2d { side: usize, h_x: f64, h_y: f64 },
}

impl CostSpec {
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            CostSpec::Dense { matrix } => matrix.get(i, j),
            CostSpec::Grid1d { h } => {
                let d = h * (i as f64 - j as f64);
                d * d
            }
            CostSpec::Grid2d { side, h_x, h_y } => {
                let dx = h_x * ((i / side) as f64 - (j / side) as f64);
                let dy = h_y * ((i % side) as f64 - (j % side) as f64);
                dx * dx + dy * dy
            }
        }
    }

    /// Largest absolute cost over an `n x m` instance; used to scale pivot
    /// tolerances.
    pub fn max_abs(&self, n: usize, m: usize) -> f64 {
        match self {
            CostSpec::Dense { matrix } => matrix.iter().fold(0.0, |a, c| a.max(c.abs())),
            _ => {
                // Grid costs peak at a corner pair.
                let corners = [(0, m - 1), (n - 1, 0), (0, 0), (n - 1, m - 1)];
                corners.iter().fold(0.0, |a, &(i, j)| a.max(self.value(i, j)))
            }
        }
    }

    /// Cost multiplied by `factor >= 0`. Grid forms scale their spacing by
    /// `sqrt(factor)` so the representation stays implicit.
    pub(crate) fn scaled(&self, factor: f64) -> CostSpec {
        match self {
            CostSpec::Dense { matrix } => CostSpec::Dense { matrix: matrix.map(|c| factor * c) },
            CostSpec::Grid1d { h } => CostSpec::Grid1d { h: h * factor.sqrt() },
            CostSpec::Grid2d { side, h_x, h_y } => CostSpec::Grid2d {
                side: *side,
                h_x: h_x * factor.sqrt(),
                h_y: h_y * factor.sqrt(),
            },
        }
    }
}

/// One side of the entrywise plan bounds. Uniform and rank-one forms stay
/// `O(n + m)` in memory; `value` is the only way solvers read entries, so
/// implicit forms never densify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BoundSpec {
    Dense {
        matrix: DenseMatrix,
    },
    Uniform {
        value: f64,
    },
    /// `scale * a_i * b_j + noise_scale * noise_ij` (noise omitted => 0).
    RankOnePlusDense {
        a: Vec<f64>,
        b: Vec<f64>,
        scale: f64,
        #[serde(default)]
        noise: Option<DenseMatrix>,
        #[serde(default)]
        noise_scale: f64,
    },
}

impl BoundSpec {
    pub fn zero() -> Self {
        BoundSpec::Uniform { value: 0.0 }
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            BoundSpec::Dense { matrix } => matrix.get(i, j),
            BoundSpec::Uniform { value } => *value,
            BoundSpec::RankOnePlusDense { a, b, scale, noise, noise_scale } => {
                let base = scale * a[i] * b[j];
                match noise {
                    Some(p) => base + noise_scale * p.get(i, j),
                    None => base,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            BoundSpec::Uniform { value } => *value == 0.0,
            BoundSpec::Dense { matrix } => matrix.iter().all(|x| x == 0.0),
            BoundSpec::RankOnePlusDense { a, b, scale, noise, noise_scale } => {
                let rank_one_zero =
                    *scale == 0.0 || a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0);
                let noise_zero = *noise_scale == 0.0
                    || noise.as_ref().map_or(true, |p| p.iter().all(|x| x == 0.0));
                rank_one_zero && noise_zero
            }
        }
    }

    /// Row sums over an `n x m` instance. `O(n + m)` for implicit forms
    /// without noise, `O(n m)` otherwise.
    pub fn row_sums(&self, n: usize, m: usize) -> Vec<f64> {
        match self {
            BoundSpec::Uniform { value } => vec![value * m as f64; n],
            BoundSpec::Dense { matrix } => (0..n).map(|i| matrix.row(i).iter().sum()).collect(),
            BoundSpec::RankOnePlusDense { a, b, scale, noise, noise_scale } => {
                let b_total: f64 = b.iter().sum();
                let mut sums: Vec<f64> = a.iter().map(|&ai| scale * ai * b_total).collect();
                if let Some(p) = noise {
                    for (i, s) in sums.iter_mut().enumerate() {
                        *s += noise_scale * p.row(i).iter().sum::<f64>();
                    }
                }
                sums
            }
        }
    }

    /// Column sums over an `n x m` instance.
    pub fn col_sums(&self, n: usize, m: usize) -> Vec<f64> {
        match self {
            BoundSpec::Uniform { value } => vec![value * n as f64; m],
            BoundSpec::Dense { matrix } => {
                let mut sums = vec![0.0; m];
                for i in 0..n {
                    for (j, s) in sums.iter_mut().enumerate() {
                        *s += matrix.get(i, j);
                    }
                }
                sums
            }
            BoundSpec::RankOnePlusDense { a, b, scale, noise, noise_scale } => {
                let a_total: f64 = a.iter().sum();
                let mut sums: Vec<f64> = b.iter().map(|&bj| scale * a_total * bj).collect();
                if let Some(p) = noise {
                    for i in 0..n {
                        for (j, s) in sums.iter_mut().enumerate() {
                            *s += noise_scale * p.get(i, j);
                        }
                    }
                }
                sums
            }
        }
    }

    /// Total mass of the bound over an `n x m` instance.
    pub fn total(&self, n: usize, m: usize) -> f64 {
        self.row_sums(n, m).iter().sum()
    }

    fn check_shape(&self, n: usize, m: usize, context: &'static str) -> Result<()> {
        match self {
            BoundSpec::Dense { matrix } => {
                if matrix.rows() != n || matrix.cols() != m {
                    return Err(CoreError::DimensionMismatch {
                        context,
                        expected: n * m,
                        got: matrix.rows() * matrix.cols(),
                    });
                }
                if matrix.iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::NonFinite { context });
                }
            }
            BoundSpec::Uniform { value } => {
                if !value.is_finite() {
                    return Err(CoreError::NonFinite { context });
                }
            }
            BoundSpec::RankOnePlusDense { a, b, scale, noise, noise_scale } => {
                if a.len() != n {
                    return Err(CoreError::DimensionMismatch { context, expected: n, got: a.len() });
                }
                if b.len() != m {
                    return Err(CoreError::DimensionMismatch { context, expected: m, got: b.len() });
                }
                if let Some(p) = noise {
                    if p.rows() != n || p.cols() != m {
                        return Err(CoreError::DimensionMismatch {
                            context,
                            expected: n * m,
                            got: p.rows() * p.cols(),
                        });
                    }
                    if p.iter().any(|x| !x.is_finite()) {
                        return Err(CoreError::NonFinite { context });
                    }
                }
                if !scale.is_finite()
                    || !noise_scale.is_finite()
                    || a.iter().chain(b.iter()).any(|x| !x.is_finite())
                {
                    return Err(CoreError::NonFinite { context });
                }
            }
        }
        Ok(())
    }
}

/// Entrywise plan bounds `lower <= gamma <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityBounds {
    lower: BoundSpec,
    upper: BoundSpec,
}

impl CapacityBounds {
    pub fn new(lower: BoundSpec, upper: BoundSpec) -> Self {
        Self { lower, upper }
    }

    /// Upper bound only; lower bound identically zero.
    pub fn upper_only(upper: BoundSpec) -> Self {
        Self { lower: BoundSpec::zero(), upper }
    }

    pub fn lower(&self) -> &BoundSpec {
        &self.lower
    }

    pub fn upper(&self) -> &BoundSpec {
        &self.upper
    }
}

/// A complete problem instance. Construction checks shapes and finiteness;
/// feasibility of the bounds against the marginals is a separate, data-level
/// question answered by [`crate::validate_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct ProblemInstance {
    n: usize,
    m: usize,
    cost: CostSpec,
    marginals: Marginals,
    bounds: CapacityBounds,
}

impl ProblemInstance {
    pub fn new(
        n: usize,
        m: usize,
        cost: CostSpec,
        marginals: Marginals,
        bounds: CapacityBounds,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(CoreError::DimensionMismatch {
                context: "instance size",
                expected: 1,
                got: 0,
            });
        }
        if marginals.u().len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "u length",
                expected: n,
                got: marginals.u().len(),
            });
        }
        if marginals.v().len() != m {
            return Err(CoreError::DimensionMismatch {
                context: "v length",
                expected: m,
                got: marginals.v().len(),
            });
        }
        match &cost {
            CostSpec::Dense { matrix } => {
                if matrix.rows() != n || matrix.cols() != m {
                    return Err(CoreError::DimensionMismatch {
                        context: "cost matrix shape",
                        expected: n * m,
                        got: matrix.rows() * matrix.cols(),
                    });
                }
                if matrix.iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::NonFinite { context: "cost matrix" });
                }
            }
            CostSpec::Grid1d { h } => {
                if !h.is_finite() {
                    return Err(CoreError::NonFinite { context: "grid spacing" });
                }
            }
            CostSpec::Grid2d { side, h_x, h_y } => {
                if !h_x.is_finite() || !h_y.is_finite() {
                    return Err(CoreError::NonFinite { context: "grid spacing" });
                }
                if side * side != n || n != m {
                    return Err(CoreError::DimensionMismatch {
                        context: "2-D grid size (side^2 must equal n = m)",
                        expected: side * side,
                        got: n,
                    });
                }
            }
        }
        bounds.lower.check_shape(n, m, "lower bound shape")?;
        bounds.upper.check_shape(n, m, "upper bound shape")?;
        Ok(Self { n, m, cost, marginals, bounds })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn marginals(&self) -> &Marginals {
        &self.marginals
    }

    pub fn bounds(&self) -> &CapacityBounds {
        &self.bounds
    }

    pub fn u(&self) -> &[f64] {
        self.marginals.u()
    }

    pub fn v(&self) -> &[f64] {
        self.marginals.v()
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.bounds.lower().value(i, j)
    }

    #[inline]
    pub fn upper(&self, i: usize, j: usize) -> f64 {
        self.bounds.upper().value(i, j)
    }

    /// Serializes to the documented JSON interchange form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    /// Parses the documented JSON interchange form, re-running all
    /// construction checks.
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub(crate) fn rebuild(
        &self,
        cost: CostSpec,
        marginals: Marginals,
        bounds: CapacityBounds,
    ) -> Result<Self> {
        ProblemInstance::new(self.n, self.m, cost, marginals, bounds)
    }
}

/// On-disk form: flat fields, bounds under `lower`/`upper`.
#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    n: usize,
    m: usize,
    cost: CostSpec,
    u: Vec<f64>,
    v: Vec<f64>,
    lower: BoundSpec,
    upper: BoundSpec,
}

impl TryFrom<InstanceRepr> for ProblemInstance {
    type Error = CoreError;

    fn try_from(r: InstanceRepr) -> Result<Self> {
        let marginals = Marginals::new(r.u, r.v)?;
        ProblemInstance::new(r.n, r.m, r.cost, marginals, CapacityBounds::new(r.lower, r.upper))
    }
}

impl From<ProblemInstance> for InstanceRepr {
    fn from(p: ProblemInstance) -> Self {
        InstanceRepr {
            n: p.n,
            m: p.m,
            cost: p.cost,
            u: p.marginals.u.clone(),
            v: p.marginals.v,
            lower: p.bounds.lower,
            upper: p.bounds.upper,
        }
    }
}
