//! Spectral infrastructure on S²: Gauss–Legendre × uniform quadrature grid,
//! real spherical-harmonic transforms, variable-coefficient Laplace–Beltrami
//! Galerkin assembly with a dense generalized eigensolver, and the
//! translational / rescaling / deformational split of functions on a leaf.
//!
//! Basis conventions: real spherical harmonics without the Condon–Shortley
//! phase, orthonormal for the round measure dΩ. The Cartesian coordinate
//! functions on the unit sphere are x = √(4π/3)·Y₁¹, y = √(4π/3)·Y₁⁻¹,
//! z = √(4π/3)·Y₁⁰.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::surface_geometry::SurfaceGeometry;
use crate::{Error, Result};

pub const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Number of basis functions at band limit `l_max`.
pub fn basis_size(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Packed index of the real harmonic (l, m), m ∈ [−l, l].
pub fn lm_index(l: usize, m: isize) -> usize {
    debug_assert!(m.unsigned_abs() <= l);
    l * l + (l as isize + m) as usize
}

/// Inverse of [`lm_index`].
pub fn index_lm(a: usize) -> (usize, isize) {
    let l = (a as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= a { l + 1 } else { l };
    (l, a as isize - l as isize * l as isize - l as isize)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
///
/// Newton iteration on Pₙ from the Chebyshev initial guess; exact for
/// polynomials of degree ≤ 2n−1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // p, dp: Legendre Pₙ and its derivative at x.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Fully normalized associated Legendre values P̄ₗᵐ(cos θ) and their
/// θ-derivatives for all 0 ≤ m ≤ l ≤ l_max, normalized so that
/// ∫₀^π P̄ₗᵐ(cos θ)² sin θ dθ = 1.
struct LegendreTable {
    l_max: usize,
    p: Vec<f64>,
    dp: Vec<f64>,
}

impl LegendreTable {
    fn idx(&self, l: usize, m: usize) -> usize {
        l * (self.l_max + 1) + m
    }

    fn new(l_max: usize, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let stride = l_max + 1;
        let idx = |l: usize, m: usize| l * stride + m;
        let mut p = vec![0.0; (l_max + 1) * stride];
        let mut dp = vec![0.0; (l_max + 1) * stride];
        // Diagonal P̄ₘᵐ, then super-diagonal, then three-term recurrence in l.
        let mut pmm = (0.5f64).sqrt();
        for m in 0..=l_max {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            }
            p[idx(m, m)] = pmm;
            if m + 1 <= l_max {
                p[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * c * pmm;
            }
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                p[idx(l, m)] = a * (c * p[idx(l - 1, m)] - b * p[idx(l - 2, m)]);
            }
        }
        // dP̄ₗᵐ/dθ = (l cos θ P̄ₗᵐ − dₗᵐ P̄ₗ₋₁ᵐ)/sin θ, dₗᵐ = √((l²−m²)(2l+1)/(2l−1)).
        // Gauss nodes are interior, so sin θ > 0 here.
        for m in 0..=l_max {
            for l in m..=l_max {
                let lf = l as f64;
                let mf = m as f64;
                let below = if l > m { p[idx(l - 1, m)] } else { 0.0 };
                let d = ((lf * lf - mf * mf) * (2.0 * lf + 1.0) / (2.0 * lf - 1.0).max(1.0)).sqrt();
                dp[idx(l, m)] = (lf * c * p[idx(l, m)] - d * below) / s;
            }
        }
        LegendreTable { l_max, p, dp }
    }

    /// Values only, safe at the poles (no derivative division).
    fn values_only(l_max: usize, theta: f64) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        let stride = l_max + 1;
        let mut p = vec![0.0; (l_max + 1) * stride];
        let mut pmm = (0.5f64).sqrt();
        for m in 0..=l_max {
            if m > 0 {
                pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
            }
            p[m * stride + m] = pmm;
            if m + 1 <= l_max {
                p[(m + 1) * stride + m] = ((2 * m + 3) as f64).sqrt() * c * pmm;
            }
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                p[l * stride + m] = a * (c * p[(l - 1) * stride + m] - b * p[(l - 2) * stride + m]);
            }
        }
        p
    }
}

const INV_SQRT_PI: f64 = 0.5641895835477563; // 1/√π
const INV_SQRT_2PI: f64 = 0.3989422804014327; // 1/√(2π)

/// Evaluate all basis functions at an arbitrary point (θ, φ).
pub fn eval_basis_at(l_max: usize, theta: f64, phi: f64) -> DVector<f64> {
    let p = LegendreTable::values_only(l_max, theta);
    let stride = l_max + 1;
    let mut out = DVector::zeros(basis_size(l_max));
    for l in 0..=l_max {
        out[lm_index(l, 0)] = p[l * stride] * INV_SQRT_2PI;
        for m in 1..=l {
            let plm = p[l * stride + m];
            let (sin_m, cos_m) = (m as f64 * phi).sin_cos();
            out[lm_index(l, m as isize)] = plm * cos_m * INV_SQRT_PI;
            out[lm_index(l, -(m as isize))] = plm * sin_m * INV_SQRT_PI;
        }
    }
    out
}

/// Quadrature grid and basis tables at a fixed band limit.
///
/// Nodes are Gauss–Legendre colatitudes × uniform longitudes
/// (N_θ = l_max+1, N_φ = 2·l_max+1), ordered point p = i_θ·N_φ + i_φ.
/// Products of harmonics up to total degree 2·l_max integrate exactly.
pub struct SphereGrid {
    pub l_max: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    thetas: Vec<f64>,
    phis: Vec<f64>,
    /// Per-point quadrature weight for the round measure dΩ; sums to 4π.
    weights: Vec<f64>,
    y: DMatrix<f64>,
    y_th: DMatrix<f64>,
    y_ph: DMatrix<f64>,
    second: OnceLock<SecondDerivs>,
}

struct SecondDerivs {
    y_tt: DMatrix<f64>,
    y_tp: DMatrix<f64>,
    y_pp: DMatrix<f64>,
    y_ttt: DMatrix<f64>,
}

static GRID_CACHE: OnceLock<Mutex<HashMap<usize, Arc<SphereGrid>>>> = OnceLock::new();

impl SphereGrid {
    /// Shared grid at the given band limit (grids are immutable and cached).
    pub fn get(l_max: usize) -> Arc<SphereGrid> {
        let cache = GRID_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap();
        map.entry(l_max).or_insert_with(|| Arc::new(SphereGrid::build(l_max))).clone()
    }

    fn build(l_max: usize) -> SphereGrid {
        let n_theta = l_max + 1;
        let n_phi = 2 * l_max + 1;
        let n_points = n_theta * n_phi;
        let nb = basis_size(l_max);
        let (x, wx) = gauss_legendre(n_theta);

        let mut thetas = vec![0.0; n_points];
        let mut phis = vec![0.0; n_points];
        let mut weights = vec![0.0; n_points];
        let mut y = DMatrix::zeros(n_points, nb);
        let mut y_th = DMatrix::zeros(n_points, nb);
        let mut y_ph = DMatrix::zeros(n_points, nb);

        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        for it in 0..n_theta {
            let theta = x[it].acos();
            let tab = LegendreTable::new(l_max, theta);
            for ip in 0..n_phi {
                let p = it * n_phi + ip;
                let phi = ip as f64 * dphi;
                thetas[p] = theta;
                phis[p] = phi;
                weights[p] = wx[it] * dphi;
                for l in 0..=l_max {
                    let a0 = lm_index(l, 0);
                    y[(p, a0)] = tab.p[tab.idx(l, 0)] * INV_SQRT_2PI;
                    y_th[(p, a0)] = tab.dp[tab.idx(l, 0)] * INV_SQRT_2PI;
                    for m in 1..=l {
                        let (sin_m, cos_m) = (m as f64 * phi).sin_cos();
                        let plm = tab.p[tab.idx(l, m)];
                        let dplm = tab.dp[tab.idx(l, m)];
                        let ac = lm_index(l, m as isize);
                        let asn = lm_index(l, -(m as isize));
                        y[(p, ac)] = plm * cos_m * INV_SQRT_PI;
                        y[(p, asn)] = plm * sin_m * INV_SQRT_PI;
                        y_th[(p, ac)] = dplm * cos_m * INV_SQRT_PI;
                        y_th[(p, asn)] = dplm * sin_m * INV_SQRT_PI;
                        let mf = m as f64;
                        y_ph[(p, ac)] = -mf * plm * sin_m * INV_SQRT_PI;
                        y_ph[(p, asn)] = mf * plm * cos_m * INV_SQRT_PI;
                    }
                }
            }
        }
        SphereGrid { l_max, n_theta, n_phi, thetas, phis, weights, y, y_th, y_ph, second: OnceLock::new() }
    }

    pub fn n_points(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn n_basis(&self) -> usize {
        basis_size(self.l_max)
    }

    pub fn theta(&self, p: usize) -> f64 {
        self.thetas[p]
    }

    pub fn phi(&self, p: usize) -> f64 {
        self.phis[p]
    }

    /// Round-measure quadrature weights (Σ = 4π).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn basis_dtheta(&self) -> &DMatrix<f64> {
        &self.y_th
    }

    pub fn basis_dphi(&self) -> &DMatrix<f64> {
        &self.y_ph
    }

    /// Higher-derivative basis tables (θθ, θφ, φφ, θθθ), built on first use.
    fn second(&self) -> &SecondDerivs {
        self.second.get_or_init(|| {
            let np = self.n_points();
            let nb = self.n_basis();
            let mut y_tt = DMatrix::zeros(np, nb);
            let mut y_tp = DMatrix::zeros(np, nb);
            let mut y_pp = DMatrix::zeros(np, nb);
            let mut y_ttt = DMatrix::zeros(np, nb);
            for p in 0..np {
                let theta = self.thetas[p];
                let (s, c) = theta.sin_cos();
                let cot = c / s;
                for a in 0..nb {
                    let (l, m) = index_lm(a);
                    let ll1 = (l * (l + 1)) as f64;
                    let m2 = (m * m) as f64;
                    // From the associated Legendre ODE:
                    // ∂θθY = −cot θ ∂θY − (l(l+1) − m²/sin²θ) Y.
                    y_tt[(p, a)] = -cot * self.y_th[(p, a)] - (ll1 - m2 / (s * s)) * self.y[(p, a)];
                    y_pp[(p, a)] = -m2 * self.y[(p, a)];
                    // ∂φ maps Y_{l,m} to −m·Y_{l,−m}; ∂θφ does the same to ∂θY.
                    let partner = lm_index(l, -m);
                    y_tp[(p, a)] = -(m as f64) * self.y_th[(p, partner)];
                }
                // One more θ-derivative of the ODE:
                // ∂θθθY = (1/s² − λ + m²/s²)∂θY − cot θ ∂θθY − 2m²(c/s³)Y.
                for a in 0..nb {
                    let (l, m) = index_lm(a);
                    let ll1 = (l * (l + 1)) as f64;
                    let m2 = (m * m) as f64;
                    y_ttt[(p, a)] = (1.0 / (s * s) - ll1 + m2 / (s * s)) * self.y_th[(p, a)]
                        - cot * y_tt[(p, a)]
                        - 2.0 * m2 * c / (s * s * s) * self.y[(p, a)];
                }
            }
            SecondDerivs { y_tt, y_tp, y_pp, y_ttt }
        })
    }

    pub fn basis_dtheta2(&self) -> &DMatrix<f64> {
        &self.second().y_tt
    }

    pub fn basis_dthetadphi(&self) -> &DMatrix<f64> {
        &self.second().y_tp
    }

    pub fn basis_dphi2(&self) -> &DMatrix<f64> {
        &self.second().y_pp
    }

    pub fn basis_dtheta3(&self) -> &DMatrix<f64> {
        &self.second().y_ttt
    }
}

/// Coefficient-space azimuthal derivative: ∂φ maps Y_{l,m} ↦ −m·Y_{l,−m},
/// so φ-derivatives of any order need no extra basis tables.
pub fn dphi_coeffs(l_max: usize, c: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(c.len());
    for l in 0..=l_max {
        for m in -(l as isize)..=(l as isize) {
            out[lm_index(l, -m)] += -(m as f64) * c[lm_index(l, m)];
        }
    }
    out
}

/// aᵀ · diag(w) · b for point-indexed basis matrices (hot path of every
/// Galerkin assembly). Runtime-dispatched dgemm via `matrixmultiply`.
pub fn weighted_gram(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(w.len(), n);
    assert_eq!(b.nrows(), n);
    let (ka, kb) = (a.ncols(), b.ncols());
    let mut bw = b.clone();
    for j in 0..kb {
        let mut col = bw.column_mut(j);
        for (i, wi) in w.iter().enumerate() {
            col[i] *= wi;
        }
    }
    let mut c = DMatrix::<f64>::zeros(ka, kb);
    unsafe {
        matrixmultiply::dgemm(
            ka,
            n,
            kb,
            1.0,
            a.as_slice().as_ptr(),
            n as isize,
            1,
            bw.as_slice().as_ptr(),
            1,
            n as isize,
            0.0,
            c.as_mut_slice().as_mut_ptr(),
            1,
            ka as isize,
        );
    }
    c
}

/// Scalar function sampled on a [`SphereGrid`].
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    values: DVector<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Arc<SphereGrid>, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::analysis(
                "sphere_spectral",
                "from_values",
                format!("expected {} node values, got {}", grid.n_points(), values.len()),
            ));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = DVector::from_fn(grid.n_points(), |p, _| f(grid.theta(p), grid.phi(p)));
        ScalarField { grid, values }
    }

    pub fn constant(grid: Arc<SphereGrid>, c: f64) -> Self {
        let values = DVector::from_element(grid.n_points(), c);
        ScalarField { grid, values }
    }

    /// Synthesize node values from spectral coefficients.
    pub fn from_coeffs(grid: Arc<SphereGrid>, coeffs: &DVector<f64>) -> Result<Self> {
        if coeffs.len() != grid.n_basis() {
            return Err(Error::analysis(
                "sphere_spectral",
                "synthesize",
                format!("expected {} coefficients, got {}", grid.n_basis(), coeffs.len()),
            ));
        }
        let values = grid.basis() * coeffs;
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Spectral coefficients of the band-limited projection (round measure).
    pub fn analyze(&self) -> DVector<f64> {
        let w = self.grid.weights();
        let mut wv = self.values.clone();
        for (i, wi) in w.iter().enumerate() {
            wv[i] *= wi;
        }
        self.grid.basis().tr_mul(&wv)
    }

    /// ∂θ of the band-limited projection.
    pub fn d_theta(&self) -> ScalarField {
        let c = self.analyze();
        ScalarField { grid: self.grid.clone(), values: self.grid.basis_dtheta() * &c }
    }

    /// ∂φ of the band-limited projection.
    pub fn d_phi(&self) -> ScalarField {
        let c = self.analyze();
        ScalarField { grid: self.grid.clone(), values: self.grid.basis_dphi() * &c }
    }

    /// ∫ f dΩ against the round measure.
    pub fn integral_round(&self) -> f64 {
        self.grid.weights().iter().zip(self.values.iter()).map(|(w, v)| w * v).sum()
    }

    /// Grid-sup norm (documented as the max over quadrature nodes).
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.map(f) }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid.l_max, other.grid.l_max, "mixed-grid field arithmetic");
        ScalarField { grid: self.grid.clone(), values: self.values.zip_map(&other.values, f) }
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a - b)
    }
}

/// Eigenpairs of a generalized symmetric problem A·v = λ·M·v, sorted
/// ascending, eigenvectors M-orthonormal (columns, coefficient space).
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Solve A·v = λ·M·v by Cholesky reduction to a dense symmetric problem.
pub fn generalized_eigen(a: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<EigenPairs> {
    let chol = Cholesky::new(mass.clone()).ok_or_else(|| {
        Error::analysis("sphere_spectral", "generalized_eigen", "mass matrix not positive definite")
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::analysis("sphere_spectral", "generalized_eigen", "singular Cholesky factor"))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::analysis("sphere_spectral", "generalized_eigen", "singular Cholesky factor"))?;
    let sym = (&z + z.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut q = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        q.set_column(dst, &eig.eigenvectors.column(src));
    }
    // Back-transform: v = L⁻ᵀ q.
    let lt = l.transpose();
    let vectors = lt
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::analysis("sphere_spectral", "generalized_eigen", "singular Cholesky factor"))?;
    Ok(EigenPairs { values, vectors })
}

/// Galerkin mass/stiffness of the Laplace–Beltrami operator on a leaf, with
/// its generalized eigendecomposition computed on demand.
pub struct SpectralSystem {
    grid: Arc<SphereGrid>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// Per-node leaf measure weights dμ (quadrature weight included); Σ = |M|.
    pub measure: Vec<f64>,
    pub area: f64,
    eigen: OnceLock<EigenPairs>,
}

impl SpectralSystem {
    /// Assemble from per-node inverse surface metric and measure weights.
    pub fn from_samples(
        grid: Arc<SphereGrid>,
        ginv_tt: &[f64],
        ginv_tp: &[f64],
        ginv_pp: &[f64],
        measure: Vec<f64>,
    ) -> Result<Self> {
        let np = grid.n_points();
        if [ginv_tt.len(), ginv_tp.len(), ginv_pp.len(), measure.len()] != [np; 4] {
            return Err(Error::analysis("sphere_spectral", "assemble_laplace", "node array size mismatch"));
        }
        let mass = weighted_gram(grid.basis(), &measure, grid.basis());

        let (wtt, wtp, wpp): (Vec<f64>, Vec<f64>, Vec<f64>) = {
            let mut a = vec![0.0; np];
            let mut b = vec![0.0; np];
            let mut c = vec![0.0; np];
            for p in 0..np {
                a[p] = measure[p] * ginv_tt[p];
                b[p] = measure[p] * ginv_tp[p];
                c[p] = measure[p] * ginv_pp[p];
            }
            (a, b, c)
        };
        // ⟨∇Y_a, ∇Y_b⟩ = Σ dμ (g^θθ ∂θ∂θ + g^θφ(∂θ∂φ + ∂φ∂θ) + g^φφ ∂φ∂φ).
        let nb = grid.n_basis();
        let mut x1 = DMatrix::zeros(np, nb);
        let mut x2 = DMatrix::zeros(np, nb);
        for j in 0..nb {
            for p in 0..np {
                x1[(p, j)] = wtt[p] * grid.basis_dtheta()[(p, j)] + wtp[p] * grid.basis_dphi()[(p, j)];
                x2[(p, j)] = wtp[p] * grid.basis_dtheta()[(p, j)] + wpp[p] * grid.basis_dphi()[(p, j)];
            }
        }
        let ones = vec![1.0; np];
        let mut stiffness = weighted_gram(grid.basis_dtheta(), &ones, &x1);
        stiffness += weighted_gram(grid.basis_dphi(), &ones, &x2);
        let st = stiffness.transpose();
        stiffness = (&stiffness + st) * 0.5;

        let area = measure.iter().sum();
        Ok(SpectralSystem { grid, mass, stiffness, measure, area, eigen: OnceLock::new() })
    }

    /// Assemble the Laplace–Beltrami Galerkin system for a leaf geometry.
    pub fn assemble_laplace(geom: &SurfaceGeometry) -> Result<Self> {
        SpectralSystem::from_samples(
            geom.grid().clone(),
            &geom.ginv_tt,
            &geom.ginv_tp,
            &geom.ginv_pp,
            geom.dmu.clone(),
        )
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    /// Eigenpairs of −Δ_g: stiffness·v = λ·mass·v, ascending.
    pub fn eigen(&self) -> Result<&EigenPairs> {
        if self.eigen.get().is_none() {
            let pairs = generalized_eigen(&self.stiffness, &self.mass)?;
            let _ = self.eigen.set(pairs);
        }
        Ok(self.eigen.get().unwrap())
    }

    /// Leaf L²(dμ) inner product of node-value vectors.
    pub fn dot_mu(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.measure.iter().enumerate().map(|(p, w)| w * a[p] * b[p]).sum()
    }

    /// Node values of the eigenfunction with the given index.
    pub fn eigenfunction(&self, i: usize) -> Result<ScalarField> {
        let pairs = self.eigen()?;
        let vals = self.grid.basis() * pairs.vectors.column(i);
        ScalarField::from_values(self.grid.clone(), vals)
    }

    /// Indices of eigenvalues in the translational window |λ − 2/σ²| ≤ 1/σ².
    /// Falls back to the 3 closest to 2/σ² when the window captures ≠ 3,
    /// reporting `weird = true`.
    pub fn translational_cluster(&self, sigma: f64) -> Result<(Vec<usize>, bool)> {
        let pairs = self.eigen()?;
        let target = 2.0 / (sigma * sigma);
        let half_width = 1.0 / (sigma * sigma);
        let in_window: Vec<usize> = pairs
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| (v - target).abs() <= half_width)
            .map(|(i, _)| i)
            .collect();
        if in_window.len() == 3 {
            return Ok((in_window, false));
        }
        let mut order: Vec<usize> = (0..pairs.values.len()).collect();
        order.sort_by(|&i, &j| {
            let di = (pairs.values[i] - target).abs();
            let dj = (pairs.values[j] - target).abs();
            di.partial_cmp(&dj).unwrap()
        });
        let mut nearest = order[..3.min(order.len())].to_vec();
        nearest.sort_unstable();
        Ok((nearest, true))
    }
}

/// Rescaling / translational / deformational decomposition of a field.
pub struct PartSplit {
    /// Rescaling part f̄ = ∫f dμ / |M|.
    pub mean: f64,
    /// Translational part f^t (projection onto the l=1-like cluster).
    pub trans: ScalarField,
    /// Deformational remainder f^d = f − f̄ − f^t.
    pub deform: ScalarField,
    /// Eigenvalues of the cluster used for the projection.
    pub cluster: Vec<f64>,
    /// True when the window |λ−2/σ²| ≤ 1/σ² did not capture exactly 3 modes.
    pub weird_window: bool,
}

/// Split `f` against the eigenstructure of `sys` at mean-curvature radius σ.
pub fn split_parts(f: &ScalarField, sys: &SpectralSystem, sigma: f64) -> Result<PartSplit> {
    let (cluster_idx, weird_window) = sys.translational_cluster(sigma)?;
    let pairs = sys.eigen()?;
    let mean = sys.measure.iter().zip(f.values().iter()).map(|(w, v)| w * v).sum::<f64>() / sys.area;

    let mut trans_vals = DVector::zeros(f.values().len());
    let mut cluster = Vec::with_capacity(cluster_idx.len());
    for &i in &cluster_idx {
        let phi_vals = sys.grid.basis() * pairs.vectors.column(i);
        let c = sys.dot_mu(f.values(), &phi_vals);
        trans_vals += phi_vals * c;
        cluster.push(pairs.values[i]);
    }
    let deform_vals = f.values() - &trans_vals - DVector::from_element(f.values().len(), mean);
    Ok(PartSplit {
        mean,
        trans: ScalarField::from_values(sys.grid.clone(), trans_vals)?,
        deform: ScalarField::from_values(sys.grid.clone(), deform_vals)?,
        cluster,
        weird_window,
    })
}

/// L^p norm against the leaf measure; `p = ∞` is the grid-sup.
pub fn lp_norm(values: impl Iterator<Item = f64>, measure: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0f64, |acc, v| acc.max(v.abs()))
    } else {
        let s: f64 = values.zip(measure.iter()).map(|(v, w)| w * v.abs().powf(p)).sum();
        s.powf(1.0 / p)
    }
}

/// Weighted surface Sobolev norm ‖f‖_{W^{k,p}} = Σ_{j≤k} R_A^j ‖∇^j f‖_{L^p(dμ)}
/// with covariant derivatives of the induced metric; k ≤ 2.
pub fn sobolev_norm(f: &ScalarField, k: usize, p: f64, geom: &SurfaceGeometry) -> Result<f64> {
    if k > 2 {
        return Err(Error::analysis("sphere_spectral", "sobolev_norm", format!("order {k} > 2 unsupported")));
    }
    if p < 1.0 || p.is_nan() {
        return Err(Error::analysis("sphere_spectral", "sobolev_norm", format!("invalid exponent {p}")));
    }
    let r_a = geom.area_radius;
    let mut total = lp_norm(f.values().iter().copied(), &geom.dmu, p);
    if k >= 1 {
        let c = f.analyze();
        let ft = f.grid().basis_dtheta() * &c;
        let fp = f.grid().basis_dphi() * &c;
        let np = f.grid().n_points();
        let grad = (0..np).map(|i| {
            (geom.ginv_tt[i] * ft[i] * ft[i]
                + 2.0 * geom.ginv_tp[i] * ft[i] * fp[i]
                + geom.ginv_pp[i] * fp[i] * fp[i])
                .max(0.0)
                .sqrt()
        });
        total += r_a * lp_norm(grad, &geom.dmu, p);
        if k >= 2 {
            let ftt = f.grid().basis_dtheta2() * &c;
            let ftp = f.grid().basis_dthetadphi() * &c;
            let fpp = f.grid().basis_dphi2() * &c;
            let hess = (0..np).map(|i| {
                // Hess_IJ = ∂I∂J f − Γ^K_IJ ∂K f, |Hess|² = g^{IK}g^{JL} H_IJ H_KL.
                let h_tt = ftt[i] - geom.gamma_t_tt[i] * ft[i] - geom.gamma_p_tt[i] * fp[i];
                let h_tp = ftp[i] - geom.gamma_t_tp[i] * ft[i] - geom.gamma_p_tp[i] * fp[i];
                let h_pp = fpp[i] - geom.gamma_t_pp[i] * ft[i] - geom.gamma_p_pp[i] * fp[i];
                let (att, atp, app) = (geom.ginv_tt[i], geom.ginv_tp[i], geom.ginv_pp[i]);
                // |Hess|² = tr((g⁻¹ H)²) for symmetric H.
                let m11 = att * h_tt + atp * h_tp;
                let m12 = att * h_tp + atp * h_pp;
                let m21 = atp * h_tt + app * h_tp;
                let m22 = atp * h_tp + app * h_pp;
                let sq = m11 * m11 + 2.0 * m12 * m21 + m22 * m22;
                sq.max(0.0).sqrt()
            });
            total += r_a * r_a * lp_norm(hess, &geom.dmu, p);
        }
    }
    Ok(total)
}

/// ∫ over the hemisphere {x·ê ≥ 0} of the band-limited projection of `f`
/// against the round measure, via exact zonal moments of the indicator.
pub fn hemisphere_integral(f: &ScalarField, axis: usize, positive: bool) -> f64 {
    let l_max = f.grid().l_max;
    let coeffs = f.analyze();
    // Direction of the hemisphere pole.
    let (theta, phi) = match (axis, positive) {
        (0, true) => (std::f64::consts::FRAC_PI_2, 0.0),
        (0, false) => (std::f64::consts::FRAC_PI_2, std::f64::consts::PI),
        (1, true) => (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
        (1, false) => (std::f64::consts::FRAC_PI_2, 1.5 * std::f64::consts::PI),
        (2, true) => (0.0, 0.0),
        (2, false) => (std::f64::consts::PI, 0.0),
        _ => panic!("axis out of range"),
    };
    let y_at_pole = eval_basis_at(l_max, theta, phi);

    // I_l = ∫₀¹ P_l(t) dt; Funk–Hecke gives ⟨Y_lm, 1_hemi⟩ = 2π I_l Y_lm(ê).
    let mut p0_prev = 1.0; // P_0(0)
    let mut p0 = 0.0; // P_1(0)
    let mut total = 0.0;
    for l in 0..=l_max {
        let i_l = match l {
            0 => 1.0,
            _ => {
                // P_{l+1}(0) from P_{l-1}(0), P_l(0).
                let p0_next = -(l as f64) / (l as f64 + 1.0) * p0_prev;
                let i = (p0_prev - p0_next) / (2 * l + 1) as f64;
                p0_prev = p0;
                p0 = p0_next;
                i
            }
        };
        if i_l == 0.0 {
            continue;
        }
        let lam = 2.0 * std::f64::consts::PI * i_l;
        for m in -(l as isize)..=(l as isize) {
            let a = lm_index(l, m);
            total += lam * coeffs[a] * y_at_pole[a];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn round_system(l_max: usize, radius: f64) -> SpectralSystem {
        let grid = SphereGrid::get(l_max);
        let np = grid.n_points();
        let r2 = radius * radius;
        let mut gtt = vec![0.0; np];
        let mut gtp = vec![0.0; np];
        let mut gpp = vec![0.0; np];
        let mut measure = vec![0.0; np];
        for p in 0..np {
            let s = grid.theta(p).sin();
            gtt[p] = 1.0 / r2;
            gtp[p] = 0.0;
            gpp[p] = 1.0 / (r2 * s * s);
            measure[p] = grid.weights()[p] * r2;
        }
        SpectralSystem::from_samples(grid, &gtt, &gtp, &gpp, measure).unwrap()
    }

    #[test]
    fn gauss_legendre_exactness() {
        let n = 9;
        let (x, w) = gauss_legendre(n);
        for k in 0..(2 * n) {
            let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(quad, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn weights_sum_to_four_pi() {
        for l_max in [4, 11, 24] {
            let grid = SphereGrid::get(l_max);
            let total: f64 = grid.weights().iter().sum();
            assert_abs_diff_eq!(total, FOUR_PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn basis_orthonormal_on_round_sphere() {
        let grid = SphereGrid::get(12);
        let gram = weighted_gram(grid.basis(), grid.weights(), grid.basis());
        for i in 0..grid.n_basis() {
            for j in 0..grid.n_basis() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn weighted_gram_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(40, 9, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(40, 13, |_, _| rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.1..2.0)).collect();
        let fast = weighted_gram(&a, &w, &b);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
        let slow = a.transpose() * diag * &b;
        assert!((fast - slow).abs().max() < 1e-13);
    }

    #[test]
    fn analyze_constant() {
        let grid = SphereGrid::get(8);
        let f = ScalarField::constant(grid, 1.0);
        let c = f.analyze();
        assert_abs_diff_eq!(c[0], FOUR_PI.sqrt(), epsilon = 1e-12);
        for a in 1..c.len() {
            assert!(c[a].abs() < 1e-12);
        }
    }

    #[test]
    fn analyze_y10_samples() {
        let grid = SphereGrid::get(8);
        // Y₁⁰ = √(3/4π) cos θ.
        let f = ScalarField::from_fn(grid, |t, _| (3.0 / FOUR_PI).sqrt() * t.cos());
        let c = f.analyze();
        for a in 0..c.len() {
            let expect = if a == lm_index(1, 0) { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(c[a], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn roundtrip_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let grid = SphereGrid::get(24);
        let coeffs = DVector::from_fn(grid.n_basis(), |_, _| rng.random_range(-1.0..1.0));
        let f = ScalarField::from_coeffs(grid, &coeffs).unwrap();
        let back = f.analyze();
        assert!((back - coeffs).abs().max() < 1e-10);
    }

    #[test]
    fn parseval_on_round_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = SphereGrid::get(10);
        let coeffs = DVector::from_fn(grid.n_basis(), |_, _| rng.random_range(-1.0..1.0));
        let f = ScalarField::from_coeffs(grid.clone(), &coeffs).unwrap();
        let l2sq: f64 = grid.weights().iter().zip(f.values().iter()).map(|(w, v)| w * v * v).sum();
        assert_abs_diff_eq!(l2sq, coeffs.norm_squared(), epsilon = 1e-10);
    }

    #[test]
    fn spectral_derivatives_match_analytic() {
        let grid = SphereGrid::get(16);
        // f = sin θ cos φ (the Cartesian x on the unit sphere).
        let f = ScalarField::from_fn(grid.clone(), |t, p| t.sin() * p.cos());
        let ft = f.d_theta();
        let fp = f.d_phi();
        for pnt in 0..grid.n_points() {
            let (t, p) = (grid.theta(pnt), grid.phi(pnt));
            assert_abs_diff_eq!(ft.values()[pnt], t.cos() * p.cos(), epsilon = 1e-10);
            assert_abs_diff_eq!(fp.values()[pnt], -t.sin() * p.sin(), epsilon = 1e-10);
        }
    }

    #[test]
    fn second_derivatives_match_analytic() {
        let grid = SphereGrid::get(16);
        let f = ScalarField::from_fn(grid.clone(), |t, p| t.sin() * t.sin() * (2.0 * p).cos());
        let c = f.analyze();
        let ftt = grid.basis_dtheta2() * &c;
        let ftp = grid.basis_dthetadphi() * &c;
        let fpp = grid.basis_dphi2() * &c;
        for pnt in 0..grid.n_points() {
            let (t, p) = (grid.theta(pnt), grid.phi(pnt));
            let (s2, c2) = ((2.0 * p).sin(), (2.0 * p).cos());
            assert_abs_diff_eq!(ftt[pnt], 2.0 * (2.0 * t).cos() * c2, epsilon = 1e-9);
            assert_abs_diff_eq!(ftp[pnt], -2.0 * (2.0 * t).sin() * s2, epsilon = 1e-9);
            assert_abs_diff_eq!(fpp[pnt], -4.0 * t.sin() * t.sin() * c2, epsilon = 1e-9);
        }
    }

    #[test]
    fn eval_basis_at_matches_grid() {
        let grid = SphereGrid::get(6);
        for &pnt in &[0, 5, grid.n_points() - 1] {
            let row = eval_basis_at(6, grid.theta(pnt), grid.phi(pnt));
            for a in 0..grid.n_basis() {
                assert_abs_diff_eq!(row[a], grid.basis()[(pnt, a)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn round_sphere_eigenvalues() {
        let sigma = 3.0;
        let sys = round_system(12, sigma);
        let pairs = sys.eigen().unwrap();
        assert!(pairs.values[0].abs() < 1e-10, "constant eigenvalue {}", pairs.values[0]);
        let mut idx = 0;
        for l in 0..=6usize {
            for _ in 0..(2 * l + 1) {
                let expect = (l * (l + 1)) as f64 / (sigma * sigma);
                let got = pairs.values[idx];
                if l > 0 {
                    assert!(
                        (got - expect).abs() <= 1e-8 * expect,
                        "l={l}: eigenvalue {got} vs {expect}"
                    );
                }
                idx += 1;
            }
        }
    }

    #[test]
    fn split_parts_examples() {
        let sigma = 5.0;
        let sys = round_system(10, sigma);
        let grid = sys.grid().clone();

        let f = ScalarField::constant(grid.clone(), 2.5);
        let split = split_parts(&f, &sys, sigma).unwrap();
        assert_abs_diff_eq!(split.mean, 2.5, epsilon = 1e-12);
        assert!(split.trans.sup() < 1e-10);
        assert!(split.deform.sup() < 1e-10);
        assert!(!split.weird_window);

        // ν¹ = sin θ cos φ is an l=1 eigenfunction (λ = 2/σ²).
        let nu1 = ScalarField::from_fn(grid.clone(), |t, p| t.sin() * p.cos());
        let split = split_parts(&nu1, &sys, sigma).unwrap();
        assert!(split.mean.abs() < 1e-12);
        assert!(split.trans.sub(&nu1).sup() < 1e-9);
        assert!(split.deform.sup() < 1e-9);

        // ν¹ + Y₃₀: the translational part recovers ν¹, the rest is deform.
        let y30 = ScalarField::from_coeffs(grid.clone(), &{
            let mut c = DVector::zeros(grid.n_basis());
            c[lm_index(3, 0)] = 1.0;
            c
        })
        .unwrap();
        let f = nu1.add(&y30);
        let split = split_parts(&f, &sys, sigma).unwrap();
        assert!(split.trans.sub(&nu1).sup() < 1e-9);
        assert!(split.deform.sub(&y30).sup() < 1e-9);

        // Projection idempotence and the exact reassembly f = mean+trans+deform.
        let again = split_parts(&split.trans, &sys, sigma).unwrap();
        assert!(again.trans.sub(&split.trans).sup() < 1e-10);
        let reassembled = split.trans.add(&split.deform).map(|v| v + split.mean);
        assert!(reassembled.sub(&f).sup() < 1e-9);
    }

    #[test]
    fn cluster_window_on_round_sphere() {
        let sigma = 7.0;
        let sys = round_system(10, sigma);
        let (cluster, weird) = sys.translational_cluster(sigma).unwrap();
        assert_eq!(cluster.len(), 3);
        assert!(!weird);
        let pairs = sys.eigen().unwrap();
        for &i in &cluster {
            assert_abs_diff_eq!(pairs.values[i], 2.0 / (sigma * sigma), epsilon = 1e-10);
        }
    }

    #[test]
    fn hemisphere_closed_forms() {
        let grid = SphereGrid::get(12);
        // ∫_{z≥0} cos θ dΩ = π; ∫_{z≥0} 1 dΩ = 2π; x-hemisphere of x is also π.
        let z = ScalarField::from_fn(grid.clone(), |t, _| t.cos());
        assert_abs_diff_eq!(hemisphere_integral(&z, 2, true), std::f64::consts::PI, epsilon = 1e-10);
        assert_abs_diff_eq!(hemisphere_integral(&z, 2, false), -std::f64::consts::PI, epsilon = 1e-10);
        let one = ScalarField::constant(grid.clone(), 1.0);
        assert_abs_diff_eq!(hemisphere_integral(&one, 0, true), 2.0 * std::f64::consts::PI, epsilon = 1e-10);
        let x = ScalarField::from_fn(grid, |t, p| t.sin() * p.cos());
        assert_abs_diff_eq!(hemisphere_integral(&x, 0, true), std::f64::consts::PI, epsilon = 1e-10);
        assert_abs_diff_eq!(hemisphere_integral(&x, 1, true), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn generalized_eigen_small_case() {
        // A = diag(1, 4), M = diag(1, 2): eigenvalues {1, 2}.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let pairs = generalized_eigen(&a, &m).unwrap();
        assert_abs_diff_eq!(pairs.values[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pairs.values[1], 2.0, epsilon = 1e-14);
        // M-orthonormality.
        let v = &pairs.vectors;
        let gram = v.transpose() * m * v;
        assert!((gram - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }
}
