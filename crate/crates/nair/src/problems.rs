//! Desk-scale test systems: structured upwind transport discretizations in
//! one to three dimensions, variable velocity fields, material
//! discontinuities, near-triangular perturbations, and seeded random
//! triangular matrices.
//!
//! Transport systems discretize `b . grad(u) + c u = q` on the unit
//! square/cube with inflow value `g`, using first-order upwind finite
//! differences on a uniform cell grid: each advective term contributes
//! `|b_d|/h` to the diagonal and `-|b_d|/h` at the upwind neighbor, with
//! inflow ghost values folded into the right-hand side. For componentwise
//! nonnegative velocities the lexicographic cell order is a flow order and
//! the assembled matrix is lower triangular in it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::graph::{scc, topological_order};
use crate::sparse::{norm2, SparseMatrix};
use crate::Result;

/// Named non-constant velocity fields on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowField {
    /// `(cos^2(pi y), cos^2(pi x))`
    B1,
    /// `(sin^2(pi y), sin^2(pi x))`
    B2,
    /// `(y^4, cos^2(pi x / 2))`
    B3,
}

impl FlowField {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "b1" => Ok(Self::B1),
            "b2" => Ok(Self::B2),
            "b3" => Ok(Self::B3),
            other => Err(Error::InvalidParameter {
                name: "velocity",
                details: format!("unknown field `{other}` (expected b1, b2, or b3)"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::B1 => "b1",
            Self::B2 => "b2",
            Self::B3 => "b3",
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Self::B1 => {
                let (cy, cx) = ((std::f64::consts::PI * y).cos(), (std::f64::consts::PI * x).cos());
                (cy * cy, cx * cx)
            }
            Self::B2 => {
                let (sy, sx) = ((std::f64::consts::PI * y).sin(), (std::f64::consts::PI * x).sin());
                (sy * sy, sx * sx)
            }
            Self::B3 => {
                let c = (std::f64::consts::PI * x / 2.0).cos();
                (y * y * y * y, c * c)
            }
        }
    }
}

/// Velocity specification for a transport problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Velocity {
    /// 1D constant speed.
    Constant1(f64),
    /// 2D constant direction `(cos(theta), sin(theta))`.
    Constant2 { theta: f64 },
    /// 3D constant direction
    /// `(sin(t1) cos(t2), sin(t1) sin(t2), cos(t1) cos(t2))`.
    Constant3 { theta1: f64, theta2: f64 },
    /// Named 2D field.
    Named(FlowField),
}

impl Velocity {
    fn dim(&self) -> usize {
        match self {
            Self::Constant1(_) => 1,
            Self::Constant2 { .. } | Self::Named(_) => 2,
            Self::Constant3 { .. } => 3,
        }
    }

    /// Velocity components at a point.
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        match self {
            Self::Constant1(b) => vec![*b],
            Self::Constant2 { theta } => vec![theta.cos(), theta.sin()],
            Self::Constant3 { theta1, theta2 } => vec![
                theta1.sin() * theta2.cos(),
                theta1.sin() * theta2.sin(),
                theta1.cos() * theta2.cos(),
            ],
            Self::Named(field) => {
                let (bx, by) = field.eval(point[0], point[1]);
                vec![bx, by]
            }
        }
    }
}

/// Evaluates a velocity field by name: `b1`, `b2`, `b3`, `constant:<theta>`,
/// or `constant:<theta1>:<theta2>` for 3D.
pub fn velocity_field(name: &str, point: &[f64]) -> Result<Vec<f64>> {
    if let Some(rest) = name.strip_prefix("constant:") {
        let angles: Vec<&str> = rest.split(':').collect();
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::InvalidParameter {
                name: "velocity",
                details: format!("bad angle `{s}`"),
            })
        };
        return match angles.as_slice() {
            [t] => Ok(Velocity::Constant2 { theta: parse(t)? }.eval(point)),
            [t1, t2] => Ok(Velocity::Constant3 { theta1: parse(t1)?, theta2: parse(t2)? }.eval(point)),
            _ => Err(Error::InvalidParameter {
                name: "velocity",
                details: format!("bad constant field `{name}`"),
            }),
        };
    }
    Ok(Velocity::Named(FlowField::parse(name)?).eval(point))
}

/// Reaction coefficient field `c(x)`.
#[derive(Debug, Clone, Copy)]
pub enum CoefficientField {
    /// `1e4` inside the centered block of side 0.5, `1e-4` outside.
    Inset,
    /// Same piecewise-constant layout as `Inset`; the block-source domain
    /// differs from the inset domain only through its source term.
    BlockSource,
    Constant(f64),
    Custom(fn(&[f64]) -> f64),
}

impl CoefficientField {
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Self::Inset | Self::BlockSource => inset_c(point),
            Self::Constant(v) => *v,
            Self::Custom(f) => f(point),
        }
    }
}

/// Source field `q(x)`.
#[derive(Debug, Clone, Copy)]
pub enum SourceField {
    Zero,
    /// `1` inside the centered block of side 0.5, `0` outside.
    BlockSource,
    Custom(fn(&[f64]) -> f64),
}

impl SourceField {
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::BlockSource => block_source_q(point),
            Self::Custom(f) => f(point),
        }
    }
}

/// `true` if the point lies in the centered axis-aligned block of side 0.5
/// (closed interval on the block boundary).
fn in_center_block(point: &[f64]) -> bool {
    point.iter().all(|&x| (0.25..=0.75).contains(&x))
}

/// Material coefficient of the inset domain: `1e4` inside the centered
/// square/cube of side 0.5, `1e-4` outside.
pub fn inset_c(point: &[f64]) -> f64 {
    if in_center_block(point) {
        1e4
    } else {
        1e-4
    }
}

/// Interior source of the block-source domain: `1` inside the centered
/// block, `0` outside.
pub fn block_source_q(point: &[f64]) -> f64 {
    if in_center_block(point) {
        1.0
    } else {
        0.0
    }
}

/// Specification of an upwind transport discretization.
#[derive(Debug, Clone, Copy)]
pub struct TransportSpec {
    pub dim: usize,
    pub cells_per_axis: usize,
    pub velocity: Velocity,
    pub c_field: CoefficientField,
    pub q_field: SourceField,
    /// Inflow boundary value `g`.
    pub inflow: f64,
}

impl TransportSpec {
    /// 1D chain with unit speed, zero reaction, zero source.
    pub fn chain_1d(cells: usize) -> Self {
        Self {
            dim: 1,
            cells_per_axis: cells,
            velocity: Velocity::Constant1(1.0),
            c_field: CoefficientField::Constant(0.0),
            q_field: SourceField::Zero,
            inflow: 1.0,
        }
    }

    /// 2D inset domain with constant flow direction `theta`.
    pub fn inset_2d(cells: usize, theta: f64) -> Self {
        Self {
            dim: 2,
            cells_per_axis: cells,
            velocity: Velocity::Constant2 { theta },
            c_field: CoefficientField::Inset,
            q_field: SourceField::Zero,
            inflow: 1.0,
        }
    }

    /// 2D block-source domain with constant flow direction `theta`.
    pub fn block_source_2d(cells: usize, theta: f64) -> Self {
        Self {
            dim: 2,
            cells_per_axis: cells,
            velocity: Velocity::Constant2 { theta },
            c_field: CoefficientField::BlockSource,
            q_field: SourceField::BlockSource,
            inflow: 1.0,
        }
    }

    /// 2D inset domain with a named velocity field.
    pub fn named_2d(cells: usize, field: FlowField) -> Self {
        Self {
            dim: 2,
            cells_per_axis: cells,
            velocity: Velocity::Named(field),
            c_field: CoefficientField::Inset,
            q_field: SourceField::Zero,
            inflow: 1.0,
        }
    }

    /// 3D inset domain with constant flow angles.
    pub fn inset_3d(cells: usize, theta1: f64, theta2: f64) -> Self {
        Self {
            dim: 3,
            cells_per_axis: cells,
            velocity: Velocity::Constant3 { theta1, theta2 },
            c_field: CoefficientField::Inset,
            q_field: SourceField::Zero,
            inflow: 1.0,
        }
    }

    pub fn unknowns(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidParameter {
                name: "dim",
                details: format!("{} not in 1..=3", self.dim),
            });
        }
        if self.cells_per_axis < 2 {
            return Err(Error::InvalidParameter {
                name: "cells_per_axis",
                details: format!("{} < 2", self.cells_per_axis),
            });
        }
        if self.velocity.dim() != self.dim {
            return Err(Error::InvalidParameter {
                name: "velocity",
                details: format!(
                    "velocity is {}-dimensional but dim = {}",
                    self.velocity.dim(),
                    self.dim
                ),
            });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let vel = match self.velocity {
            Velocity::Constant1(b) => format!("b={b}"),
            Velocity::Constant2 { theta } => format!("theta={theta}"),
            Velocity::Constant3 { theta1, theta2 } => format!("theta1={theta1},theta2={theta2}"),
            Velocity::Named(f) => f.name().to_string(),
        };
        let c = match self.c_field {
            CoefficientField::Inset => "inset".to_string(),
            CoefficientField::BlockSource => "block-source".to_string(),
            CoefficientField::Constant(v) => format!("{v}"),
            CoefficientField::Custom(_) => "custom".to_string(),
        };
        let q = match self.q_field {
            SourceField::Zero => "0",
            SourceField::BlockSource => "block-source",
            SourceField::Custom(_) => "custom",
        };
        format!(
            "transport{}d n={} ({} dofs), velocity {vel}, c={c}, q={q}, g={}",
            self.dim,
            self.cells_per_axis,
            self.unknowns(),
            self.inflow
        )
    }
}

/// A generated linear system plus metadata.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub x_exact: Option<Vec<f64>>,
    pub description: String,
    /// Permutation certifying triangularity (`perm[new] = old`), when known.
    pub flow_order: Option<Vec<usize>>,
}

/// Assembles the upwind transport system for a spec.
pub fn gen_transport(spec: &TransportSpec) -> Result<GeneratedProblem> {
    spec.validate()?;
    let m = spec.cells_per_axis;
    let dim = spec.dim;
    let n = spec.unknowns();
    let h = 1.0 / m as f64;
    let strides: [usize; 3] = [1, m, m * m];

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(n * (dim + 1));
    let mut rhs = vec![0.0; n];
    let mut all_nonneg = true;

    let mut cell = [0usize; 3];
    for idx in 0..n {
        let mut rem = idx;
        for d in 0..dim {
            cell[d] = rem % m;
            rem /= m;
        }
        let center: Vec<f64> = (0..dim).map(|d| (cell[d] as f64 + 0.5) * h).collect();
        let velocity = spec.velocity.eval(&center);

        // (column, weight) for interior upwind neighbors; folded inflow
        // weights go to the rhs but still enter the diagonal.
        let mut offs: Vec<(usize, f64)> = Vec::with_capacity(dim);
        let mut folded = 0.0f64;
        for d in 0..dim {
            let bd = velocity[d];
            if bd == 0.0 {
                continue;
            }
            if bd < 0.0 {
                all_nonneg = false;
            }
            let w = bd.abs() / h;
            if bd > 0.0 {
                if cell[d] == 0 {
                    folded += w;
                } else {
                    offs.push((idx - strides[d], w));
                }
            } else if cell[d] + 1 == m {
                folded += w;
            } else {
                offs.push((idx + strides[d], w));
            }
        }
        // Accumulate the advective diagonal in increasing column order of
        // the neighbors so interior row sums telescope to exactly zero.
        offs.sort_unstable_by_key(|&(c, _)| c);
        let mut diag = 0.0;
        for &(_, w) in &offs {
            diag += w;
        }
        diag += folded;
        rhs[idx] += folded * spec.inflow;

        diag += spec.c_field.eval(&center);
        rhs[idx] += spec.q_field.eval(&center);

        for &(col, w) in &offs {
            triplets.push((idx, col, -w));
        }
        if diag != 0.0 {
            triplets.push((idx, idx, diag));
        }
    }

    let a = SparseMatrix::from_triplets(n, n, &triplets)?;

    let flow_order = if all_nonneg {
        Some((0..n).collect())
    } else {
        let decomposition = scc(&a)?;
        if decomposition.is_triangular() {
            Some(topological_order(&a)?)
        } else {
            let nontrivial = decomposition
                .components()
                .iter()
                .filter(|c| c.len() > 1)
                .count();
            return Err(Error::CyclicFlow {
                count: nontrivial,
                largest: decomposition.largest(),
            });
        }
    };

    let x_exact = exact_ones_solution(&a, &rhs);
    Ok(GeneratedProblem {
        a,
        b: rhs,
        x_exact,
        description: spec.describe(),
        flow_order,
    })
}

/// Detects the manufactured solution `u = 1` (holds when `g = 1` and
/// `q = c` pointwise).
fn exact_ones_solution(a: &SparseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let ones = vec![1.0; a.ncols()];
    let ax = a.spmv(&ones).ok()?;
    let mut err = 0.0f64;
    for (av, bv) in ax.iter().zip(b) {
        err += (av - bv) * (av - bv);
    }
    let scale = norm2(b).max(1.0);
    if err.sqrt() <= 1e-12 * scale {
        Some(ones)
    } else {
        None
    }
}

/// Transport operator plus `epsilon` times the standard `2*dim + 1`-point
/// Laplacian (scaled by `1/h^2`); `epsilon = 0` returns the triangular
/// problem unchanged.
pub fn gen_near_triangular(spec: &TransportSpec, epsilon: f64) -> Result<GeneratedProblem> {
    if epsilon < 0.0 {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            details: format!("{epsilon} < 0"),
        });
    }
    let base = gen_transport(spec)?;
    if epsilon == 0.0 {
        return Ok(base);
    }
    let m = spec.cells_per_axis;
    let dim = spec.dim;
    let n = spec.unknowns();
    let h = 1.0 / m as f64;
    let inv_h2 = 1.0 / (h * h);
    let strides: [usize; 3] = [1, m, m * m];

    let mut triplets = Vec::with_capacity(n * (2 * dim + 1));
    let mut cell = [0usize; 3];
    for idx in 0..n {
        let mut rem = idx;
        for d in 0..dim {
            cell[d] = rem % m;
            rem /= m;
        }
        triplets.push((idx, idx, 2.0 * dim as f64 * inv_h2));
        for d in 0..dim {
            if cell[d] > 0 {
                triplets.push((idx, idx - strides[d], -inv_h2));
            }
            if cell[d] + 1 < m {
                triplets.push((idx, idx + strides[d], -inv_h2));
            }
        }
    }
    let laplacian = SparseMatrix::from_triplets(n, n, &triplets)?;
    let a = base.a.add_scaled(epsilon, &laplacian)?;
    Ok(GeneratedProblem {
        a,
        b: base.b,
        x_exact: None,
        description: format!("{} + {epsilon} * laplacian", base.description),
        flow_order: None,
    })
}

/// Seeded random unit-diagonal lower-triangular matrix. Below-diagonal
/// entries appear with probability `density`; magnitudes are drawn
/// `uniform(0,1) * exp(-decay * (i - j))` with random sign. The right-hand
/// side is `A * ones`, so the exact solution is the vector of ones.
pub fn gen_random_triangular(n: usize, density: f64, decay: f64, seed: u64) -> Result<GeneratedProblem> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParameter {
            name: "density",
            details: format!("{density} not in (0, 1]"),
        });
    }
    if decay <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "decay",
            details: format!("{decay} <= 0"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    for i in 0..n {
        triplets.push((i, i, 1.0));
        for j in 0..i {
            if rng.gen::<f64>() < density {
                let magnitude = rng.gen::<f64>() * (-decay * (i - j) as f64).exp();
                let sign = if rng.gen::<bool>() { -1.0 } else { 1.0 };
                triplets.push((i, j, sign * magnitude));
            }
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &triplets)?;
    let ones = vec![1.0; n];
    let b = a.spmv(&ones)?;
    Ok(GeneratedProblem {
        a,
        b,
        x_exact: Some(ones),
        description: format!("random triangular n={n} density={density} decay={decay} seed={seed}"),
        flow_order: Some((0..n).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::scc;

    #[test]
    fn chain_1d_forced_stencil() {
        let spec = TransportSpec::chain_1d(4);
        let p = gen_transport(&spec).unwrap();
        let h = 0.25;
        for i in 0..4 {
            assert_eq!(p.a.get(i, i), 1.0 / h);
            if i > 0 {
                assert_eq!(p.a.get(i, i - 1), -1.0 / h);
            }
        }
        assert_eq!(p.b[0], 1.0 / h);
        assert_eq!(&p.b[1..], &[0.0, 0.0, 0.0]);
        assert!(p.flow_order.is_some());
    }

    #[test]
    fn reaction_dominates_diagonal() {
        let mut spec = TransportSpec::chain_1d(8);
        spec.c_field = CoefficientField::Constant(1e6);
        let p = gen_transport(&spec).unwrap();
        // h = 1/8, so the advective diagonal is 8 and the reaction is 1e6
        let ratio = p.a.get(3, 3) / p.a.get(3, 2).abs();
        assert!(ratio > 1e5, "dominance ratio {ratio}");
    }

    #[test]
    fn inset_2d_is_triangular() {
        let p = gen_transport(&TransportSpec::inset_2d(16, 3.0 * std::f64::consts::PI / 16.0)).unwrap();
        let d = scc(&p.a).unwrap();
        assert!(d.is_triangular());
        assert!(p.a.is_lower_triangular_pattern());
    }

    #[test]
    fn named_fields_are_triangular_in_lexicographic_order() {
        for field in [FlowField::B1, FlowField::B2, FlowField::B3] {
            let p = gen_transport(&TransportSpec::named_2d(9, field)).unwrap();
            assert!(p.a.is_lower_triangular_pattern(), "{:?}", field);
            assert_eq!(p.flow_order, Some((0..81).collect()));
        }
    }

    #[test]
    fn transport_3d_is_triangular() {
        let theta = 3.0 * std::f64::consts::PI / 16.0;
        let p = gen_transport(&TransportSpec::inset_3d(5, theta, theta)).unwrap();
        assert_eq!(p.a.nrows(), 125);
        assert!(p.a.is_lower_triangular_pattern());
    }

    #[test]
    fn interior_advective_row_sums_vanish_exactly() {
        let mut spec = TransportSpec::inset_2d(12, 1.1);
        spec.c_field = CoefficientField::Constant(0.0);
        let p = gen_transport(&spec).unwrap();
        let ones = vec![1.0; 144];
        let sums = p.a.spmv(&ones).unwrap();
        for j in 1..12 {
            for i in 1..12 {
                let idx = j * 12 + i;
                assert_eq!(sums[idx], 0.0, "row {idx} sum {}", sums[idx]);
            }
        }
    }

    #[test]
    fn manufactured_solution_of_ones() {
        fn q_equals_c(p: &[f64]) -> f64 {
            inset_c(p)
        }
        let mut spec = TransportSpec::inset_2d(10, 0.7);
        spec.q_field = SourceField::Custom(q_equals_c);
        let p = gen_transport(&spec).unwrap();
        let x = p.x_exact.expect("u = 1 should be detected");
        let r: Vec<f64> = p
            .a
            .spmv(&x)
            .unwrap()
            .iter()
            .zip(&p.b)
            .map(|(a, b)| a - b)
            .collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&p.b).max(1.0));
    }

    #[test]
    fn velocity_field_values() {
        let b1 = velocity_field("b1", &[0.0, 0.0]).unwrap();
        assert!((b1[0] - 1.0).abs() <= 1e-15 && (b1[1] - 1.0).abs() <= 1e-15);

        let b2 = velocity_field("b2", &[0.0, 0.0]).unwrap();
        assert!(b2[0].abs() <= 1e-15 && b2[1].abs() <= 1e-15);

        let theta = 3.0 * std::f64::consts::PI / 16.0;
        let c = velocity_field(&format!("constant:{theta}"), &[0.3, 0.4]).unwrap();
        assert_eq!(c, vec![theta.cos(), theta.sin()]);

        assert!(velocity_field("b9", &[0.0, 0.0]).is_err());
    }

    #[test]
    fn inset_and_block_source_fields() {
        assert_eq!(inset_c(&[0.5, 0.5]), 1e4);
        assert_eq!(inset_c(&[0.01, 0.01]), 1e-4);
        // block boundary is inside by the closed-interval convention
        assert_eq!(inset_c(&[0.25, 0.5]), 1e4);
        assert_eq!(block_source_q(&[0.5, 0.5, 0.5]), 1.0);
        assert_eq!(block_source_q(&[0.9, 0.5, 0.5]), 0.0);
    }

    #[test]
    fn near_triangular_zero_epsilon_is_identity() {
        let spec = TransportSpec::inset_2d(8, 0.9);
        let base = gen_transport(&spec).unwrap();
        let same = gen_near_triangular(&spec, 0.0).unwrap();
        assert_eq!(base.a, same.a);
        assert_eq!(base.b, same.b);
        assert!(scc(&same.a).unwrap().is_triangular());
    }

    #[test]
    fn near_triangular_positive_epsilon_has_cycles() {
        let spec = TransportSpec::inset_2d(8, 0.9);
        let p = gen_near_triangular(&spec, 1e-3 / 8.0).unwrap();
        let d = scc(&p.a).unwrap();
        assert!(!d.is_triangular());
        assert!(p.flow_order.is_none());
    }

    #[test]
    fn random_triangular_reproducible() {
        let a = gen_random_triangular(40, 0.3, 0.5, 7).unwrap();
        let b = gen_random_triangular(40, 0.3, 0.5, 7).unwrap();
        assert_eq!(a.a, b.a);
        for (x, y) in a.b.iter().zip(&b.b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = gen_random_triangular(40, 0.3, 0.5, 8).unwrap();
        assert_ne!(a.a, c.a);
    }

    #[test]
    fn random_triangular_edge_cases() {
        let empty = gen_random_triangular(5, 0.0, 1.0, 1).unwrap();
        assert_eq!(empty.a, SparseMatrix::identity(5));

        let tiny = gen_random_triangular(1, 0.5, 1.0, 1).unwrap();
        assert_eq!(tiny.a, SparseMatrix::identity(1));
        assert!(tiny.a.is_lower_triangular_pattern());
    }
}
