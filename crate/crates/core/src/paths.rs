//! Discretised Brownian paths and principal-component bases.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Equally spaced grid `t_k = k T / d`, `k = 1..=d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                reason: "need at least one time step".into(),
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T",
                reason: format!("horizon must be positive, got {horizon}"),
            });
        }
        Ok(TimeGrid { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_1, ..., t_d`.
    pub fn times(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| k as f64 * self.dt()).collect()
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn is_symmetric(&self) -> bool {
        let scale = self.frobenius().max(1.0);
        (0..self.n).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= 1e-12 * scale)
        })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// `Σ_ij = min(t_i, t_j)` over `t_1..t_d`.
pub fn bm_covariance(grid: &TimeGrid) -> Matrix {
    let t = grid.times();
    let mut m = Matrix::zeros(t.len());
    for i in 0..t.len() {
        for j in 0..t.len() {
            m[(i, j)] = t[i].min(t[j]);
        }
    }
    m
}

/// Eigen-decomposition `Σ = V Λ Vᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// Eigenvectors stored as columns.
    pub vectors: Matrix,
    pub values: Vec<f64>,
    /// Cumulative explained variance fractions.
    pub explained: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V Λ^{1/2}`.
    pub fn loading(&self) -> Matrix {
        let n = self.dim();
        let mut l = self.vectors.clone();
        for j in 0..n {
            let s = self.values[j].sqrt();
            for i in 0..n {
                l[(i, j)] *= s;
            }
        }
        l
    }

    pub fn reconstruct(&self) -> Matrix {
        let l = self.loading();
        l.mul(&l.transpose())
    }

    /// Fraction of total variance carried by each component.
    pub fn fractions(&self) -> Vec<f64> {
        let total: f64 = self.values.iter().sum();
        self.values.iter().map(|v| v / total).collect()
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-solver for symmetric positive-definite matrices.
///
/// Each eigenvector's largest-magnitude entry is made positive so the basis
/// is reproducible.
pub fn eigendecompose(sigma: &Matrix) -> Result<PcaBasis> {
    let n = sigma.size();
    if n == 0 || !sigma.is_symmetric() {
        return Err(Error::NotPositiveDefinite);
    }
    let mut a = sigma.clone();
    let mut v = Matrix::identity(n);
    let tol = 1e-12 * sigma.frobenius().max(f64::MIN_POSITIVE);
    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence(sweeps));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    if values.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut vectors = Matrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let mut big = 0.0f64;
        for i in 0..n {
            if v[(i, src)].abs() > big.abs() {
                big = v[(i, src)];
            }
        }
        let sign = if big < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[(i, src)];
        }
    }
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    let explained = values
        .iter()
        .map(|l| {
            acc += l;
            (acc / total).min(1.0)
        })
        .collect();
    Ok(PcaBasis {
        vectors,
        values,
        explained,
    })
}

/// Continuous-limit eigenvalue `((i - 1/2) π)^-2` of Brownian motion on `[0, 1]`.
pub fn kl_eigenvalue(i: usize) -> f64 {
    assert!(i >= 1, "eigenvalue index starts at 1");
    let x = (i as f64 - 0.5) * PI;
    1.0 / (x * x)
}

/// Basis of the equicorrelation matrix with unit diagonal and `rho` elsewhere.
pub fn correlation_pca(assets: usize, rho: f64) -> Result<PcaBasis> {
    eigendecompose(&equicorrelation(assets, rho)?)
}

pub fn equicorrelation(assets: usize, rho: f64) -> Result<Matrix> {
    let lower = if assets > 1 {
        -1.0 / (assets as f64 - 1.0)
    } else {
        f64::NEG_INFINITY
    };
    if assets == 0 || !(rho < 1.0 && rho > lower) {
        return Err(Error::NotPositiveDefinite);
    }
    let mut m = Matrix::identity(assets);
    for i in 0..assets {
        for j in 0..assets {
            if i != j {
                m[(i, j)] = rho;
            }
        }
    }
    Ok(m)
}

/// Lower Cholesky factor.
pub fn cholesky(sigma: &Matrix) -> Result<Matrix> {
    let n = sigma.size();
    let mut l = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructionKind {
    RandomWalk,
    Pca,
}

impl std::str::FromStr for ConstructionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-walk" | "rw" => Ok(ConstructionKind::RandomWalk),
            "pca" => Ok(ConstructionKind::Pca),
            other => Err(Error::Config(format!("unknown construction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Map {
    /// Cumulative sums scaled by `sqrt(dt)`.
    CumSum(f64),
    Dense(Matrix),
}

/// Linear map from standard normals to a Gaussian vector with covariance `Σ`.
///
/// The random-walk kind is the sequential (lower-triangular) factor: cumulative
/// sums for a Brownian path, the Cholesky factor for correlated assets.
#[derive(Debug, Clone)]
pub struct Construction {
    kind: ConstructionKind,
    basis: Option<PcaBasis>,
    map: Map,
    dim: usize,
}

impl Construction {
    pub fn random_walk(grid: &TimeGrid) -> Self {
        Construction {
            kind: ConstructionKind::RandomWalk,
            basis: None,
            map: Map::CumSum(grid.dt().sqrt()),
            dim: grid.steps(),
        }
    }

    pub fn pca(sigma: &Matrix) -> Result<Self> {
        let basis = eigendecompose(sigma)?;
        Ok(Self::from_basis(basis))
    }

    pub fn from_basis(basis: PcaBasis) -> Self {
        let dim = basis.dim();
        Construction {
            kind: ConstructionKind::Pca,
            map: Map::Dense(basis.loading()),
            basis: Some(basis),
            dim,
        }
    }

    pub fn cholesky(sigma: &Matrix) -> Result<Self> {
        Ok(Construction {
            kind: ConstructionKind::RandomWalk,
            basis: None,
            map: Map::Dense(cholesky(sigma)?),
            dim: sigma.size(),
        })
    }

    /// Brownian path construction of the requested kind on `grid`.
    pub fn for_grid(kind: ConstructionKind, grid: &TimeGrid) -> Result<Self> {
        match kind {
            ConstructionKind::RandomWalk => Ok(Self::random_walk(grid)),
            ConstructionKind::Pca => Self::pca(&bm_covariance(grid)),
        }
    }

    pub fn kind(&self) -> ConstructionKind {
        self.kind
    }

    pub fn basis(&self) -> Option<&PcaBasis> {
        self.basis.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Maps `z` into `out`; both must have length `dim`.
    #[inline]
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        match &self.map {
            Map::CumSum(scale) => {
                let mut acc = 0.0;
                for (o, &zi) in out.iter_mut().zip(z) {
                    acc += scale * zi;
                    *o = acc;
                }
            }
            Map::Dense(m) => m.mul_vec(z, out),
        }
    }
}

/// Brownian values `W(t_1..t_d)` for the normal vector `z`.
pub fn build_bm_path(z: &[f64], construction: &Construction, grid: &TimeGrid) -> Result<Vec<f64>> {
    let d = grid.steps();
    if z.len() != d || construction.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: if z.len() != d { z.len() } else { construction.dim() },
        });
    }
    let mut out = vec![0.0; d];
    construction.apply(z, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize) -> TimeGrid {
        TimeGrid::new(d, 1.0).unwrap()
    }

    #[test]
    fn covariance_small_cases() {
        assert_eq!(bm_covariance(&grid(1)), Matrix::identity(1));
        let m = bm_covariance(&grid(2));
        assert_eq!(m, Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 1.0]]).unwrap());
    }

    #[test]
    fn eigen_of_diagonal_and_identity() {
        let b = eigendecompose(&Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap())
            .unwrap();
        assert_eq!(b.values, vec![2.0, 1.0]);
        assert_eq!(b.vectors, Matrix::identity(2));
        let b = eigendecompose(&Matrix::identity(5)).unwrap();
        assert!(b.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!((b.explained[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bm_basis_invariants() {
        for d in [4, 16, 64] {
            let sigma = bm_covariance(&grid(d));
            let b = eigendecompose(&sigma).unwrap();
            let vtv = b.vectors.transpose().mul(&b.vectors);
            for i in 0..d {
                for j in 0..d {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[(i, j)] - e).abs() < 1e-10);
                }
            }
            assert!(b.values.windows(2).all(|w| w[0] >= w[1]));
            assert!(b.values[d - 1] > 0.0);
            let mut diff = b.reconstruct();
            for i in 0..d {
                for j in 0..d {
                    diff[(i, j)] -= sigma[(i, j)];
                }
            }
            assert!(diff.frobenius() / sigma.frobenius() < 1e-8);
            assert!(b.explained.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn not_spd_rejected() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(eigendecompose(&m).unwrap_err(), Error::NotPositiveDefinite);
        let m = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(eigendecompose(&m).is_err());
    }

    #[test]
    fn kl_values() {
        assert!((kl_eigenvalue(1) - 0.405_284_7).abs() < 1e-6);
        assert!((kl_eigenvalue(2) - 0.045_031_6).abs() < 1e-6);
        assert!((2.0 * kl_eigenvalue(1) - 0.8106).abs() < 1e-4);
    }

    #[test]
    fn kl_approximates_discrete_spectrum() {
        let b = eigendecompose(&bm_covariance(&grid(64))).unwrap();
        // Matrix eigenvalues approximate the operator ones scaled by 1/dt.
        let dt = 1.0 / 64.0;
        for i in 1..=3 {
            let rel = (b.values[i - 1] * dt - kl_eigenvalue(i)).abs() / kl_eigenvalue(i);
            assert!(rel < 0.02, "i={i} rel={rel}");
        }
    }

    #[test]
    fn equicorrelation_spectrum() {
        let b = correlation_pca(2, 0.3).unwrap();
        assert!((b.values[0] - 1.3).abs() < 1e-12 && (b.values[1] - 0.7).abs() < 1e-12);
        let b = correlation_pca(4, 0.3).unwrap();
        assert!((b.values[0] - 1.9).abs() < 1e-12);
        assert!(b.values[1..].iter().all(|l| (l - 0.7).abs() < 1e-12));
        let b = correlation_pca(3, 0.0).unwrap();
        assert_eq!(b.vectors, Matrix::identity(3));
        assert!(correlation_pca(3, -0.6).is_err());
        assert!(correlation_pca(3, 1.0).is_err());
    }

    #[test]
    fn path_examples() {
        let g = grid(2);
        let rw = Construction::random_walk(&g);
        let w = build_bm_path(&[1.0, 1.0], &rw, &g).unwrap();
        let s = 0.5f64.sqrt();
        assert!((w[0] - s).abs() < 1e-15 && (w[1] - 2.0 * s).abs() < 1e-15);
        let g = grid(16);
        let pca = Construction::for_grid(ConstructionKind::Pca, &g).unwrap();
        assert!(build_bm_path(&[0.0; 16], &pca, &g).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(
            build_bm_path(&[0.0; 3], &pca, &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_walk_is_the_cholesky_factor() {
        let g = grid(8);
        let sigma = bm_covariance(&g);
        let chol = Construction::cholesky(&sigma).unwrap();
        let rw = Construction::random_walk(&g);
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let (mut a, mut b) = (vec![0.0; 8], vec![0.0; 8]);
        chol.apply(&z, &mut a);
        rw.apply(&z, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
