//! Discretized model of the partially ordered Banach algebra `C([0,T], R)`.
//!
//! Continuous functions on `[0, T]` are represented by their values on a
//! uniform grid. The pointwise order, the sup norm and the pointwise product
//! of the continuous space carry over node by node, which is all the
//! iteration engines and certificate verifiers need.
//!
//! A note on order/norm compatibility: in the continuum space, compatibility
//! of the order with the norm (monotone sequences with a convergent
//! subsequence converge as a whole) is a real assumption. On a finite grid it
//! holds trivially, because sup-norm convergence is already pointwise
//! convergence at every node. It is therefore modeled as a documented fact
//! and exercised by tests, not enforced at runtime.

use std::fmt;

use thiserror::Error;

/// Uniform grid over `[0, t_end]` with nodes `t_i = i * h`, `h = t_end / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Grid {
    t_end: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(t_end: f64, n_points: usize) -> Result<Self, SpaceError> {
        if !t_end.is_finite() || t_end <= 0.0 {
            return Err(SpaceError::InvalidGrid {
                reason: format!("t_end must be positive and finite, got {t_end}"),
            });
        }
        if n_points < 2 {
            return Err(SpaceError::InvalidGrid {
                reason: format!("need at least 2 nodes, got {n_points}"),
            });
        }
        Ok(Grid { t_end, n_points })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Mesh width `h`.
    pub fn step(&self) -> f64 {
        self.t_end / (self.n_points - 1) as f64
    }

    /// Node `t_i = i * h`; exact at both endpoints.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_points);
        if i == self.n_points - 1 {
            self.t_end
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.node(i))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[0, {}] with {} nodes", self.t_end, self.n_points)
    }
}

/// Outcome of comparing two grid functions under the pointwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OrderRel {
    Equal,
    LessOrEqual,
    GreaterOrEqual,
    Incomparable,
}

impl OrderRel {
    /// True for `Equal` and `LessOrEqual`: the first argument does not exceed the second.
    pub fn is_nondecreasing_step(&self) -> bool {
        matches!(self, OrderRel::Equal | OrderRel::LessOrEqual)
    }

    /// True for `Equal` and `GreaterOrEqual`.
    pub fn is_nonincreasing_step(&self) -> bool {
        matches!(self, OrderRel::Equal | OrderRel::GreaterOrEqual)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OrderRel::Equal => "eq",
            OrderRel::LessOrEqual => "le",
            OrderRel::GreaterOrEqual => "ge",
            OrderRel::Incomparable => "incomparable",
        }
    }
}

impl fmt::Display for OrderRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A real-valued function sampled on a [`Grid`]. Immutable value type: every
/// operation returns a fresh function, which keeps iteration traces and order
/// arguments auditable.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpaceError> {
        if values.len() != grid.n_points() {
            return Err(SpaceError::LengthMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFinite { index });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self, SpaceError> {
        Self::new(grid, vec![value; grid.n_points()])
    }

    /// Sample a closed-form function of `t` on the grid.
    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, SpaceError> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("grid has at least 2 nodes")
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<(), SpaceError> {
        if self.grid != other.grid {
            return Err(SpaceError::GridMismatch {
                left: self.grid,
                right: other.grid,
            });
        }
        Ok(())
    }

    /// Exact pointwise comparison, no tolerance.
    pub fn order_cmp(&self, other: &GridFunction) -> Result<OrderRel, SpaceError> {
        self.order_cmp_slack(other, 0.0)
    }

    /// Pointwise comparison with slack: `f_i <= g_i + eps` counts as satisfied.
    /// With `eps = 0` this is the exact order predicate.
    pub fn order_cmp_slack(&self, other: &GridFunction, eps: f64) -> Result<OrderRel, SpaceError> {
        self.check_same_grid(other)?;
        debug_assert!(eps >= 0.0);
        let mut le = true;
        let mut ge = true;
        for (a, b) in self.values.iter().zip(&other.values) {
            if *a > *b + eps {
                le = false;
            }
            if *b > *a + eps {
                ge = false;
            }
            if !le && !ge {
                return Ok(OrderRel::Incomparable);
            }
        }
        Ok(match (le, ge) {
            (true, true) => OrderRel::Equal,
            (true, false) => OrderRel::LessOrEqual,
            (false, true) => OrderRel::GreaterOrEqual,
            (false, false) => unreachable!(),
        })
    }

    fn zip_with(
        &self,
        other: &GridFunction,
        op: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction, SpaceError> {
        self.check_same_grid(other)?;
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| op(*a, *b))
            .collect();
        GridFunction::new(self.grid, values)
    }

    /// Pointwise product, the algebra multiplication of the carrier space.
    pub fn mul_pointwise(&self, other: &GridFunction) -> Result<GridFunction, SpaceError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction, SpaceError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction, SpaceError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Sup-norm distance; shorthand for `self.sub(other)?.sup_norm()`.
    pub fn distance(&self, other: &GridFunction) -> Result<f64, SpaceError> {
        self.check_same_grid(other)?;
        let mut m: f64 = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            m = m.max((a - b).abs());
        }
        Ok(m)
    }
}

/// A nonempty, pairwise comparable family of grid functions on one grid.
/// Comparability is validated at construction, so a value of this type always
/// satisfies the chain property.
#[derive(Debug, Clone)]
pub struct ChainSample {
    elements: Vec<GridFunction>,
}

impl ChainSample {
    pub fn new(elements: Vec<GridFunction>) -> Result<Self, SpaceError> {
        if elements.is_empty() {
            return Err(SpaceError::EmptyChain);
        }
        for i in 1..elements.len() {
            elements[0].check_same_grid(&elements[i])?;
        }
        for i in 0..elements.len() {
            for j in (i + 1)..elements.len() {
                if elements[i].order_cmp(&elements[j])? == OrderRel::Incomparable {
                    return Err(SpaceError::NotAChain { first: i, second: j });
                }
            }
        }
        Ok(ChainSample { elements })
    }

    pub fn elements(&self) -> &[GridFunction] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `max_{f,g} ||f - g||`; for a chain this is attained by the order extremes.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.elements.len() {
            for j in (i + 1)..self.elements.len() {
                d = d.max(
                    self.elements[i]
                        .distance(&self.elements[j])
                        .expect("chain elements share a grid"),
                );
            }
        }
        d
    }
}

/// Validates the chain property and returns the diameter in one step.
/// Comparability violations name the offending pair of indices.
pub fn chain_diameter(elements: &[GridFunction]) -> Result<f64, SpaceError> {
    Ok(ChainSample::new(elements.to_vec())?.diameter())
}

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("grid mismatch: left is {left}, right is {right}")]
    GridMismatch { left: Grid, right: Grid },
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },
    #[error("value vector has length {got}, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },
    #[error("chain elements {first} and {second} are incomparable")]
    NotAChain { first: usize, second: usize },
    #[error("a chain must contain at least one element")]
    EmptyChain,
}
