//! Finite-difference operators for `-div(c(x) ∇·)` with homogeneous
//! Dirichlet data.
//!
//! Coefficients are sampled at every grid node (boundary nodes included) and
//! averaged arithmetically onto the faces between neighbouring nodes. A scalar
//! or diagonal tensor coefficient gives the flux-form `2·dim + 1` point
//! stencil, which is symmetric and an M-matrix. A spatially constant full
//! tensor adds the central four-point cross-derivative stencil for each pair
//! of axes; that operator is still symmetric positive definite but loses the
//! M-matrix sign pattern, so variable off-diagonal tensors are not offered.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, MAX_DIM};
use crate::math;
use crate::sparse::{conjugate_gradient, CgOptions, CgStats, CsrMatrix};

pub type Point = [f64; MAX_DIM];
pub type Tensor = [[f64; MAX_DIM]; MAX_DIM];

/// Evaluation rule of a coefficient field.
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    /// `a ≡ value`.
    ScalarConstant(f64),
    /// `low` and `high` alternating over a `tiles`-per-axis checkerboard.
    ScalarCheckerboard { low: f64, high: f64, tiles: usize },
    /// Arbitrary scalar field.
    ScalarFn(fn(&Point) -> f64),
    /// `M = diag(d)`, constant.
    DiagonalConstant([f64; MAX_DIM]),
    /// `M = diag(d(x))`.
    DiagonalFn(fn(&Point) -> [f64; MAX_DIM]),
    /// Spatially constant full tensor.
    FullConstant(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Scalar,
    Matrix,
}

/// A coefficient `a(x)` or `M(x)` with its ellipticity floor `alpha` and
/// upper bound `beta`.
#[derive(Debug, Clone, Copy)]
pub struct CoefficientField {
    pub sampler: Sampler,
    pub alpha: f64,
    pub beta: f64,
}

impl CoefficientField {
    pub fn scalar_constant(value: f64) -> Self {
        CoefficientField {
            sampler: Sampler::ScalarConstant(value),
            alpha: value,
            beta: value,
        }
    }

    pub fn checkerboard(alpha: f64, beta: f64, tiles: usize) -> Self {
        CoefficientField {
            sampler: Sampler::ScalarCheckerboard {
                low: alpha,
                high: beta,
                tiles: tiles.max(1),
            },
            alpha,
            beta,
        }
    }

    pub fn identity() -> Self {
        CoefficientField {
            sampler: Sampler::DiagonalConstant([1.0; MAX_DIM]),
            alpha: 1.0,
            beta: 1.0,
        }
    }

    /// `M = diag(1, β, …, β)`.
    pub fn anisotropic(beta: f64) -> Self {
        CoefficientField {
            sampler: Sampler::DiagonalConstant([1.0, beta, beta]),
            alpha: 1.0_f64.min(beta),
            beta: 1.0_f64.max(beta),
        }
    }

    pub fn full_constant(m: Tensor, alpha: f64, beta: f64) -> Self {
        CoefficientField {
            sampler: Sampler::FullConstant(m),
            alpha,
            beta,
        }
    }

    pub fn kind(&self) -> CoefficientKind {
        match self.sampler {
            Sampler::ScalarConstant(_) | Sampler::ScalarCheckerboard { .. } | Sampler::ScalarFn(_) => {
                CoefficientKind::Scalar
            }
            _ => CoefficientKind::Matrix,
        }
    }

    /// True when the tensor is diagonal everywhere (scalar fields included).
    pub fn is_diagonal(&self) -> bool {
        match self.sampler {
            Sampler::FullConstant(m) => (0..MAX_DIM)
                .all(|i| (0..MAX_DIM).all(|j| i == j || m[i][j] == 0.0)),
            _ => true,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self.sampler {
            Sampler::FullConstant(m) => {
                (0..MAX_DIM).all(|i| (0..MAX_DIM).all(|j| m[i][j] == m[j][i]))
            }
            _ => true,
        }
    }

    /// Full tensor at a point; scalar fields give `a(x)·I`.
    pub fn tensor_at(&self, x: &Point, grid: &Grid) -> Tensor {
        let mut t = [[0.0; MAX_DIM]; MAX_DIM];
        match self.sampler {
            Sampler::FullConstant(m) => return m,
            Sampler::DiagonalConstant(d) => {
                for k in 0..MAX_DIM {
                    t[k][k] = d[k];
                }
            }
            Sampler::DiagonalFn(f) => {
                let d = f(x);
                for k in 0..MAX_DIM {
                    t[k][k] = d[k];
                }
            }
            _ => {
                let a = self.scalar_at(x, grid);
                for k in 0..MAX_DIM {
                    t[k][k] = a;
                }
            }
        }
        t
    }

    fn scalar_at(&self, x: &Point, grid: &Grid) -> f64 {
        match self.sampler {
            Sampler::ScalarConstant(v) => v,
            Sampler::ScalarFn(f) => f(x),
            Sampler::ScalarCheckerboard { low, high, tiles } => {
                let mut parity = 0usize;
                for k in 0..grid.dim() {
                    let t = math::floor(x[k] / grid.side_lengths()[k] * tiles as f64 + 1e-9);
                    parity += (t.max(0.0) as usize).min(tiles - 1);
                }
                if parity.is_multiple_of(2) {
                    low
                } else {
                    high
                }
            }
            _ => unreachable!("scalar_at on a tensor sampler"),
        }
    }

    /// Diagonal entries at a point.
    fn diagonal_at(&self, x: &Point, grid: &Grid) -> [f64; MAX_DIM] {
        let t = self.tensor_at(x, grid);
        [t[0][0], t[1][1], t[2][2]]
    }

    /// Checks the ellipticity bounds at every node of `grid`, boundary nodes
    /// included. The error names the first offending node in full-grid
    /// row-major numbering.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta >= self.alpha) {
            return Err(Error::Coefficient {
                node: 0,
                reason: format!("need 0 < alpha <= beta, got alpha={} beta={}", self.alpha, self.beta),
            });
        }
        let dim = grid.dim();
        let tol = 1e-12 * self.beta.max(1.0);
        for (node, full) in FullNodes::new(grid).enumerate() {
            let x = grid.node_coords(&full);
            match self.kind() {
                CoefficientKind::Scalar => {
                    let a = self.scalar_at(&x, grid);
                    if !(a >= self.alpha - tol && a <= self.beta + tol) {
                        return Err(Error::Coefficient {
                            node,
                            reason: format!("a = {a} outside [{}, {}]", self.alpha, self.beta),
                        });
                    }
                }
                CoefficientKind::Matrix => {
                    let m = self.tensor_at(&x, grid);
                    let mut rng = ChaCha8Rng::seed_from_u64(node as u64);
                    let mut probes: Vec<Point> = (0..dim)
                        .map(|k| {
                            let mut e = [0.0; MAX_DIM];
                            e[k] = 1.0;
                            e
                        })
                        .collect();
                    for _ in 0..10 {
                        let mut xi = [0.0; MAX_DIM];
                        let mut norm = 0.0;
                        while norm < 1e-6 {
                            for v in xi.iter_mut().take(dim) {
                                *v = rng.random_range(-1.0..1.0);
                            }
                            norm = math::sqrt(xi.iter().map(|v| v * v).sum());
                        }
                        xi.iter_mut().for_each(|v| *v /= norm);
                        probes.push(xi);
                    }
                    for xi in &probes {
                        let mut mxi = [0.0; MAX_DIM];
                        for i in 0..dim {
                            for j in 0..dim {
                                mxi[i] += m[i][j] * xi[j];
                            }
                        }
                        let quad: f64 = (0..dim).map(|i| mxi[i] * xi[i]).sum();
                        let len = math::sqrt((0..dim).map(|i| mxi[i] * mxi[i]).sum());
                        if quad < self.alpha - tol {
                            return Err(Error::Coefficient {
                                node,
                                reason: format!("ξ·Mξ = {quad} < alpha = {}", self.alpha),
                            });
                        }
                        if len > self.beta + tol {
                            return Err(Error::Coefficient {
                                node,
                                reason: format!("|Mξ| = {len} > beta = {}", self.beta),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Iterates full-grid multi-indices `0..=cells[k]` in row-major order.
struct FullNodes {
    dim: usize,
    extent: [usize; MAX_DIM],
    current: Option<[usize; MAX_DIM]>,
}

impl FullNodes {
    fn new(grid: &Grid) -> Self {
        let mut extent = [1; MAX_DIM];
        for k in 0..grid.dim() {
            extent[k] = grid.cells()[k] + 1;
        }
        FullNodes {
            dim: grid.dim(),
            extent,
            current: Some([0; MAX_DIM]),
        }
    }
}

impl Iterator for FullNodes {
    type Item = [usize; MAX_DIM];

    fn next(&mut self) -> Option<Self::Item> {
        let out = self.current?;
        let mut next = out;
        let mut k = self.dim;
        loop {
            if k == 0 {
                self.current = None;
                break;
            }
            k -= 1;
            next[k] += 1;
            if next[k] < self.extent[k] {
                self.current = Some(next);
                break;
            }
            next[k] = 0;
        }
        Some(out)
    }
}

/// Sparse SPD matrix for `-div(c ∇·)` on the interior nodes of a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    matrix: CsrMatrix,
    symmetric: bool,
    m_matrix: bool,
    alpha: f64,
}

pub fn assemble(grid: &Grid, coeff: &CoefficientField) -> Result<DiscreteOperator> {
    coeff.validate(grid)?;
    let dim = grid.dim();
    let n = grid.len();

    // nodal diagonal samples over the full grid, indexed by full multi-index
    let mut full_extent = [1usize; MAX_DIM];
    for k in 0..dim {
        full_extent[k] = grid.cells()[k] + 1;
    }
    let full_index = |p: &[usize; MAX_DIM]| -> usize {
        let mut idx = 0;
        for k in 0..dim {
            idx = idx * full_extent[k] + p[k];
        }
        idx
    };
    let samples: Vec<[f64; MAX_DIM]> = FullNodes::new(grid)
        .map(|p| coeff.diagonal_at(&grid.node_coords(&p), grid))
        .collect();

    let cross = match coeff.sampler {
        Sampler::FullConstant(m) if !coeff.is_diagonal() => Some(m),
        _ => None,
    };

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let interior = grid.multi_index(i);
        let mut p = [0usize; MAX_DIM];
        for k in 0..dim {
            p[k] = interior[k] + 1;
        }
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * dim + 1);
        let mut diag = 0.0;
        let here = samples[full_index(&p)];
        for k in 0..dim {
            let h2 = grid.spacing(k) * grid.spacing(k);
            let mut lower = p;
            lower[k] -= 1;
            let mut upper = p;
            upper[k] += 1;
            let c_lo = 0.5 * (here[k] + samples[full_index(&lower)][k]);
            let c_hi = 0.5 * (here[k] + samples[full_index(&upper)][k]);
            diag += (c_lo + c_hi) / h2;
            if interior[k] > 0 {
                row.push((i - grid.stride(k), -c_lo / h2));
            }
            if interior[k] + 1 < grid.interior_count(k) {
                row.push((i + grid.stride(k), -c_hi / h2));
            }
        }
        row.push((i, diag));

        if let Some(m) = cross {
            for k in 0..dim {
                for l in (k + 1)..dim {
                    let s = m[k][l] + m[l][k];
                    if s == 0.0 {
                        continue;
                    }
                    let w = s / (4.0 * grid.spacing(k) * grid.spacing(l));
                    for (dk, dl, sign) in [(1i64, 1i64, -1.0), (-1, -1, -1.0), (1, -1, 1.0), (-1, 1, 1.0)] {
                        let qk = interior[k] as i64 + dk;
                        let ql = interior[l] as i64 + dl;
                        if qk < 0
                            || ql < 0
                            || qk >= grid.interior_count(k) as i64
                            || ql >= grid.interior_count(l) as i64
                        {
                            continue;
                        }
                        let mut q = interior;
                        q[k] = qk as usize;
                        q[l] = ql as usize;
                        row.push((grid.linear_index(&q), sign * w));
                    }
                }
            }
        }
        rows.push(row);
    }

    Ok(DiscreteOperator {
        grid: *grid,
        matrix: CsrMatrix::from_rows(rows),
        symmetric: coeff.is_symmetric(),
        m_matrix: coeff.is_diagonal(),
        alpha: coeff.alpha,
    })
}

/// Operator of `-Δ` (unit coefficient).
pub fn unit_laplacian(grid: &Grid) -> DiscreteOperator {
    assemble(grid, &CoefficientField::scalar_constant(1.0)).expect("unit coefficient is valid")
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Off-diagonal entries are nonpositive and rows are weakly diagonally
    /// dominant, so the discrete maximum principle holds.
    pub fn has_m_matrix_property(&self) -> bool {
        self.m_matrix
    }

    /// Ellipticity floor of the coefficient the operator was built from.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check_grid(field)?;
        Ok(ScalarField::from_vec_unchecked(
            self.grid,
            self.matrix.mul_vec(field.values()),
        ))
    }

    /// `∫ c ∇v·∇v ≈ (Π h_k) · vᵀ A v`.
    pub fn energy(&self, field: &ScalarField) -> Result<f64> {
        self.check_grid(field)?;
        Ok(self.matrix.quadratic_form(field.values()) * self.grid.cell_volume())
    }

    /// `∫ c ∇u·∇v`.
    pub fn bilinear(&self, u: &ScalarField, v: &ScalarField) -> Result<f64> {
        self.apply(u)?.inner(v)
    }

    /// Solves `A x = rhs` to relative residual `tol` by preconditioned CG.
    pub fn solve_spd(&self, rhs: &ScalarField, tol: f64) -> Result<ScalarField> {
        self.solve_spd_from(rhs, &ScalarField::zeros(self.grid), tol)
            .map(|(x, _)| x)
    }

    pub fn solve_spd_from(
        &self,
        rhs: &ScalarField,
        initial: &ScalarField,
        tol: f64,
    ) -> Result<(ScalarField, CgStats)> {
        self.check_grid(rhs)?;
        self.check_grid(initial)?;
        if !(tol > 0.0) {
            return Err(Error::domain("solver tolerance must be positive"));
        }
        let mut x = initial.values().to_vec();
        let stats = conjugate_gradient(
            &self.matrix,
            rhs.values(),
            &mut x,
            CgOptions {
                rel_tol: tol,
                max_iter: None,
            },
        )?;
        Ok((ScalarField::from_vec_unchecked(self.grid, x), stats))
    }

    /// Smallest Ritz value of a 30-step Lanczos run; positive for an SPD
    /// operator.
    pub fn definiteness_probe(&self) -> f64 {
        self.matrix.smallest_ritz_value(30)
    }

    fn check_grid(&self, field: &ScalarField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: field.len(),
            });
        }
        Ok(())
    }
}
