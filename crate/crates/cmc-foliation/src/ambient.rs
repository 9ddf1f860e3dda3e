//! Ambient 3-metrics in Cartesian exterior coordinates: analytic 2-jets,
//! Christoffel symbols and curvature, decay diagnostics, and initial-data
//! sets (g, K, J, ρ) for the momentum computations.
//!
//! All second derivatives are supplied analytically per family so curvature
//! stays smooth under Newton iteration; finite differences appear only in
//! test oracles.

use crate::{Error, Result};

pub type Point = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
/// dg[k][i][j] = ∂ₖ g_ij.
pub type Mat3Jet = [Mat3; 3];
/// d2g[k][l][i][j] = ∂ₖ∂ₗ g_ij.
pub type Mat3Jet2 = [[Mat3; 3]; 3];

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn mat3_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn mat3_inv(m: &Mat3) -> Option<Mat3> {
    let det = mat3_det(m);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // Cofactor expansion; (i,j) entry of the inverse is C_ji/det.
            let r = [(j + 1) % 3, (j + 2) % 3];
            let c = [(i + 1) % 3, (i + 2) % 3];
            out[i][j] = inv_det * (m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]);
        }
    }
    Some(out)
}

/// Analytic 2-jet of a metric at a point.
#[derive(Clone, Copy, Debug)]
pub struct MetricJet {
    pub g: Mat3,
    pub dg: Mat3Jet,
    pub d2g: Mat3Jet2,
}

impl MetricJet {
    pub fn euclidean() -> Self {
        let mut g = [[0.0; 3]; 3];
        for (i, row) in g.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        MetricJet { g, dg: [[[0.0; 3]; 3]; 3], d2g: [[[[0.0; 3]; 3]; 3]; 3] }
    }

    pub fn inverse(&self) -> Result<Mat3> {
        mat3_inv(&self.g).ok_or_else(|| Error::analysis("ambient", "eval_metric", "singular metric"))
    }
}

/// Christoffel symbols and curvature of the ambient metric at a point.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureSample {
    /// christoffel[k][i][j] = Γᵏ_ij.
    pub christoffel: [Mat3; 3],
    pub ric: Mat3,
    pub scal: f64,
}

/// Catalog of analytic ambient metrics.
#[derive(Clone, Debug)]
pub enum AmbientMetric {
    Euclidean,
    /// Isotropic spatial Schwarzschild g = (1 + m/2|x−c|)⁴ δ.
    Schwarzschild { mass: f64, center: Point },
    /// Schwarzschild (centered) plus h_ij = A·|x|^{−τ}·sin(ω x₁)·δ_ij.
    Perturbed { mass: f64, amplitude: f64, tau: f64, omega: f64 },
}

impl AmbientMetric {
    pub fn id(&self) -> &'static str {
        match self {
            AmbientMetric::Euclidean => "euclidean",
            AmbientMetric::Schwarzschild { .. } => "schwarzschild",
            AmbientMetric::Perturbed { .. } => "perturbed",
        }
    }

    /// Inner exclusion radius (isotropic horizon for the Schwarzschild families).
    pub fn r_min(&self) -> f64 {
        match self {
            AmbientMetric::Euclidean => 0.0,
            AmbientMetric::Schwarzschild { mass, .. } => 0.5 * mass.abs(),
            AmbientMetric::Perturbed { mass, .. } => (0.5 * mass.abs()).max(1e-6),
        }
    }

    fn check_domain(&self, x: &Point) -> Result<f64> {
        let s = match self {
            AmbientMetric::Schwarzschild { center, .. } => norm(&sub(x, center)),
            _ => norm(x),
        };
        let r_min = self.r_min();
        if s <= r_min || (s == 0.0 && !matches!(self, AmbientMetric::Euclidean)) {
            return Err(Error::analysis(
                "ambient",
                "eval_metric",
                format!("point at radius {s:.6} inside excluded ball (r_min = {r_min:.6}) of {}", self.id()),
            ));
        }
        Ok(s)
    }

    /// Analytic metric 2-jet at `x`.
    pub fn jet(&self, x: &Point) -> Result<MetricJet> {
        self.check_domain(x)?;
        match *self {
            AmbientMetric::Euclidean => Ok(MetricJet::euclidean()),
            AmbientMetric::Schwarzschild { mass, center } => Ok(schwarzschild_jet(mass, &sub(x, &center))),
            AmbientMetric::Perturbed { mass, amplitude, tau, omega } => {
                let mut jet = schwarzschild_jet(mass, x);
                add_perturbation(&mut jet, x, amplitude, tau, omega);
                Ok(jet)
            }
        }
    }

    /// Christoffel symbols, Ricci tensor and scalar curvature at `x`.
    pub fn curvature(&self, x: &Point) -> Result<CurvatureSample> {
        let jet = self.jet(x)?;
        curvature_from_jet(&jet).ok_or_else(|| Error::analysis("ambient", "curvature", "singular metric"))
    }

    /// Decay table: per radius, the sampled sup over a coarse direction set of
    /// r^{1/2+ε}|g−δ|, r^{3/2+ε}|Γ̄|, r^{5/2+ε}|Ric̄|, r^{3+ε}|Sc̄|.
    pub fn decay_report(&self, radii: &[f64], eps: f64) -> Result<DecayReport> {
        let dirs = coarse_directions();
        let mut rows = Vec::with_capacity(radii.len());
        for &r in radii {
            let (mut g_dev, mut gam, mut ric, mut scal) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for d in &dirs {
                let x = [r * d[0], r * d[1], r * d[2]];
                let jet = self.jet(&x)?;
                let cur = self.curvature(&x)?;
                let mut gd = 0.0;
                let mut cs = 0.0;
                let mut rc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        gd += (jet.g[i][j] - delta).powi(2);
                        rc += cur.ric[i][j].powi(2);
                        for k in 0..3 {
                            cs += cur.christoffel[k][i][j].powi(2);
                        }
                    }
                }
                g_dev = g_dev.max(gd.sqrt());
                gam = gam.max(cs.sqrt());
                ric = ric.max(rc.sqrt());
                scal = scal.max(cur.scal.abs());
            }
            rows.push(DecayRow {
                r,
                g_dev: r.powf(0.5 + eps) * g_dev,
                gamma: r.powf(1.5 + eps) * gam,
                ric: r.powf(2.5 + eps) * ric,
                scal: r.powf(3.0 + eps) * scal,
            });
        }
        let ok = |get: fn(&DecayRow) -> f64| -> bool {
            rows.windows(2).all(|w| get(&w[1]) <= get(&w[0]) * 1.02 + 1e-12)
        };
        Ok(DecayReport {
            eps,
            g_ok: ok(|r| r.g_dev),
            gamma_ok: ok(|r| r.gamma),
            ric_ok: ok(|r| r.ric),
            scal_ok: ok(|r| r.scal),
            rows,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecayRow {
    pub r: f64,
    pub g_dev: f64,
    pub gamma: f64,
    pub ric: f64,
    pub scal: f64,
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub eps: f64,
    pub rows: Vec<DecayRow>,
    pub g_ok: bool,
    pub gamma_ok: bool,
    pub ric_ok: bool,
    pub scal_ok: bool,
}

/// 26 directions: faces, edges, corners of the cube, normalized.
fn coarse_directions() -> Vec<Point> {
    let mut dirs = Vec::with_capacity(26);
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                let v = [a as f64, b as f64, c as f64];
                let n = norm(&v);
                dirs.push([v[0] / n, v[1] / n, v[2] / n]);
            }
        }
    }
    dirs
}

fn schwarzschild_jet(m: f64, y: &Point) -> MetricJet {
    let s = norm(y);
    let phi = 1.0 + 0.5 * m / s;
    let s3 = s * s * s;
    let s5 = s3 * s * s;
    // φ_k = −(m/2) y_k / s³;  φ_kl = −(m/2)(δ_kl/s³ − 3 y_k y_l / s⁵).
    let mut dphi = [0.0; 3];
    for k in 0..3 {
        dphi[k] = -0.5 * m * y[k] / s3;
    }
    let mut jet = MetricJet::euclidean();
    let p2 = phi * phi;
    let p3 = p2 * phi;
    let p4 = p3 * phi;
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            jet.g[i][j] = p4 * delta;
            for k in 0..3 {
                jet.dg[k][i][j] = 4.0 * p3 * dphi[k] * delta;
                for l in 0..3 {
                    let dkl = if k == l { 1.0 } else { 0.0 };
                    let d2phi = -0.5 * m * (dkl / s3 - 3.0 * y[k] * y[l] / s5);
                    jet.d2g[k][l][i][j] =
                        (12.0 * p2 * dphi[k] * dphi[l] + 4.0 * p3 * d2phi) * delta;
                }
            }
        }
    }
    jet
}

fn add_perturbation(jet: &mut MetricJet, x: &Point, a: f64, tau: f64, omega: f64) {
    let r = norm(x);
    let nu = [x[0] / r, x[1] / r, x[2] / r];
    let (sn, cs) = (omega * x[0]).sin_cos();
    let f = r.powf(-tau);
    let fp = -tau * r.powf(-tau - 1.0);
    let fpp = tau * (tau + 1.0) * r.powf(-tau - 2.0);
    // u = A f(r) sin(ω x₁).
    let u = a * f * sn;
    let mut du = [0.0; 3];
    for k in 0..3 {
        du[k] = a * (fp * nu[k] * sn + if k == 0 { f * omega * cs } else { 0.0 });
    }
    let mut d2u = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            let dkl = if k == l { 1.0 } else { 0.0 };
            let dnu = (dkl - nu[k] * nu[l]) / r;
            let mut v = fpp * nu[k] * nu[l] * sn + fp * dnu * sn;
            if l == 0 {
                v += fp * nu[k] * omega * cs;
            }
            if k == 0 {
                v += fp * nu[l] * omega * cs;
            }
            if k == 0 && l == 0 {
                v -= f * omega * omega * sn;
            }
            d2u[k][l] = a * v;
        }
    }
    for i in 0..3 {
        jet.g[i][i] += u;
        for k in 0..3 {
            jet.dg[k][i][i] += du[k];
            for l in 0..3 {
                jet.d2g[k][l][i][i] += d2u[k][l];
            }
        }
    }
}

/// Γᵏ_ij, Ric_ij, Sc from an analytic jet.
pub fn curvature_from_jet(jet: &MetricJet) -> Option<CurvatureSample> {
    let ginv = mat3_inv(&jet.g)?;
    let mut gamma = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += ginv[k][l] * (jet.dg[i][l][j] + jet.dg[j][l][i] - jet.dg[l][i][j]);
                }
                gamma[k][i][j] = 0.5 * s;
            }
        }
    }
    // ∂_m g^{kl} = −g^{kp} (∂_m g_pq) g^{ql}.
    let mut dginv = [[[0.0; 3]; 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for l in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s -= ginv[k][p] * jet.dg[m][p][q] * ginv[q][l];
                    }
                }
                dginv[m][k][l] = s;
            }
        }
    }
    // ∂_m Γᵏ_ij.
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += dginv[m][k][l] * (jet.dg[i][l][j] + jet.dg[j][l][i] - jet.dg[l][i][j])
                            + ginv[k][l]
                                * (jet.d2g[m][i][l][j] + jet.d2g[m][j][l][i] - jet.d2g[m][l][i][j]);
                    }
                    dgamma[m][k][i][j] = 0.5 * s;
                }
            }
        }
    }
    // Ric_ij = ∂_k Γᵏ_ij − ∂_i Γᵏ_kj + Γᵏ_kl Γˡ_ij − Γᵏ_il Γˡ_kj.
    let mut ric = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += dgamma[k][k][i][j] - dgamma[i][k][k][j];
                for l in 0..3 {
                    s += gamma[k][k][l] * gamma[l][i][j] - gamma[k][i][l] * gamma[l][k][j];
                }
            }
            ric[i][j] = s;
        }
    }
    let mut scal = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            scal += ginv[i][j] * ric[i][j];
        }
    }
    Some(CurvatureSample { christoffel: gamma, ric, scal })
}

/// Extrinsic-curvature families with analytic 1-jets.
#[derive(Clone, Debug)]
pub enum ExtrinsicData {
    /// K ≡ 0.
    TimeSymmetric,
    /// K_ij = ∂_i W_j + ∂_j W_i with W_j = a_j/|x| (flat-background toy data).
    LinearizedFlow { a: Point },
    /// Bowen–York transverse-traceless data with linear momentum parameter P.
    BowenYork { p: Point },
}

impl ExtrinsicData {
    /// (K_ij, ∂ₗK_ij) at `x`; dk[l][i][j] = ∂ₗ K_ij.
    pub fn k_jet(&self, x: &Point) -> (Mat3, Mat3Jet) {
        match self {
            ExtrinsicData::TimeSymmetric => ([[0.0; 3]; 3], [[[0.0; 3]; 3]; 3]),
            ExtrinsicData::LinearizedFlow { a } => {
                let r = norm(x);
                let r3 = r * r * r;
                let r5 = r3 * r * r;
                let mut k = [[0.0; 3]; 3];
                let mut dk = [[[0.0; 3]; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] = -(a[j] * x[i] + a[i] * x[j]) / r3;
                        for l in 0..3 {
                            let dli = if l == i { 1.0 } else { 0.0 };
                            let dlj = if l == j { 1.0 } else { 0.0 };
                            dk[l][i][j] = -(a[j] * (dli / r3 - 3.0 * x[i] * x[l] / r5)
                                + a[i] * (dlj / r3 - 3.0 * x[j] * x[l] / r5));
                        }
                    }
                }
                (k, dk)
            }
            ExtrinsicData::BowenYork { p } => {
                let r = norm(x);
                let nu = [x[0] / r, x[1] / r, x[2] / r];
                let pn = dot(p, &nu);
                let c = 1.5 / (r * r);
                let mut k = [[0.0; 3]; 3];
                let mut t = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        t[i][j] = p[i] * nu[j] + p[j] * nu[i] - (delta - nu[i] * nu[j]) * pn;
                        k[i][j] = c * t[i][j];
                    }
                }
                let mut dk = [[[0.0; 3]; 3]; 3];
                for l in 0..3 {
                    // ∂ₗ ν_i = (δₗᵢ − νₗνᵢ)/r;  ∂ₗ(P·ν) = (Pₗ − (P·ν)νₗ)/r.
                    let dpn = (p[l] - pn * nu[l]) / r;
                    for i in 0..3 {
                        for j in 0..3 {
                            let delta = if i == j { 1.0 } else { 0.0 };
                            let dnui = (if l == i { 1.0 } else { 0.0 } - nu[l] * nu[i]) / r;
                            let dnuj = (if l == j { 1.0 } else { 0.0 } - nu[l] * nu[j]) / r;
                            let dt = p[i] * dnuj + p[j] * dnui
                                - (delta - nu[i] * nu[j]) * dpn
                                + (dnui * nu[j] + nu[i] * dnuj) * pn;
                            dk[l][i][j] = -2.0 * nu[l] / r * k[i][j] + c * dt;
                        }
                    }
                }
                (k, dk)
            }
        }
    }

    /// Closed-form momentum density J_i = div(H̄ḡ − K)_i on the flat background
    /// each family is constructed over.
    pub fn momentum_density(&self, x: &Point) -> Point {
        match self {
            ExtrinsicData::TimeSymmetric | ExtrinsicData::BowenYork { .. } => [0.0; 3],
            ExtrinsicData::LinearizedFlow { a } => {
                let r = norm(x);
                let r3 = r * r * r;
                let r5 = r3 * r * r;
                let ax = dot(a, x);
                [
                    -a[0] / r3 + 3.0 * ax * x[0] / r5,
                    -a[1] / r3 + 3.0 * ax * x[1] / r5,
                    -a[2] / r3 + 3.0 * ax * x[2] / r5,
                ]
            }
        }
    }

    /// Closed-form energy density ρ = ½(Sc̄ − |K|² + H̄²) on the flat background.
    pub fn energy_density(&self, x: &Point) -> f64 {
        match self {
            ExtrinsicData::TimeSymmetric => 0.0,
            ExtrinsicData::LinearizedFlow { a } => {
                let r2 = dot(x, x);
                let ax = dot(a, x);
                (ax * ax - dot(a, a) * r2) / (r2 * r2 * r2)
            }
            ExtrinsicData::BowenYork { p } => {
                let r2 = dot(x, x);
                let nu = [x[0] / r2.sqrt(), x[1] / r2.sqrt(), x[2] / r2.sqrt()];
                let pn = dot(p, &nu);
                -(9.0 / (4.0 * r2 * r2)) * (dot(p, p) + 2.0 * pn * pn)
            }
        }
    }
}

/// Initial-data set (ḡ, K, J, ρ) pairing a catalog metric with extrinsic data.
#[derive(Clone, Debug)]
pub struct InitialDataSet {
    pub metric: AmbientMetric,
    pub extrinsic: ExtrinsicData,
}

/// Residuals of the constraint equations at a point; the energy residual is
/// reported under both printed sign conventions for the H̄² term.
#[derive(Clone, Copy, Debug)]
pub struct ConstraintResidual {
    /// ρ − ½(Sc̄ − |K|² + H̄²).
    pub rho_textbook: f64,
    /// ρ − ½(Sc̄ − |K|² − H̄²).
    pub rho_printed: f64,
    /// J − div(H̄ḡ − K), covariant divergence.
    pub momentum: Point,
}

/// Evaluate both constraint residuals of `data` at `x`.
pub fn constraint_residual(data: &InitialDataSet, x: &Point) -> Result<ConstraintResidual> {
    let jet = data.metric.jet(x)?;
    let cur = data.metric.curvature(x)?;
    let ginv = jet.inverse()?;
    let (k, dk) = data.extrinsic.k_jet(x);

    // H̄ = g^{ij}K_ij and its gradient ∂ₗH̄.
    let mut hbar = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            hbar += ginv[i][j] * k[i][j];
        }
    }
    let mut dginv = [[[0.0; 3]; 3]; 3];
    for m in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s -= ginv[i][p] * jet.dg[m][p][q] * ginv[q][j];
                    }
                }
                dginv[m][i][j] = s;
            }
        }
    }
    let mut dhbar = [0.0; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                dhbar[l] += dginv[l][i][j] * k[i][j] + ginv[i][j] * dk[l][i][j];
            }
        }
    }
    // (div K)_i = g^{jl}(∂_j K_{li} − Γᵖ_{jl}K_{pi} − Γᵖ_{ji}K_{lp}).
    let mut div_k = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                let mut v = dk[j][l][i];
                for p in 0..3 {
                    v -= cur.christoffel[p][j][l] * k[p][i] + cur.christoffel[p][j][i] * k[l][p];
                }
                div_k[i] += ginv[j][l] * v;
            }
        }
    }
    // |K|² = g^{ia}g^{jb} K_ij K_ab.
    let mut ksq = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    ksq += ginv[i][a] * ginv[j][b] * k[i][j] * k[a][b];
                }
            }
        }
    }

    let rho = data.extrinsic.energy_density(x);
    let j_data = data.extrinsic.momentum_density(x);
    let mut momentum = [0.0; 3];
    for i in 0..3 {
        momentum[i] = j_data[i] - (dhbar[i] - div_k[i]);
    }
    Ok(ConstraintResidual {
        rho_textbook: rho - 0.5 * (cur.scal - ksq + hbar * hbar),
        rho_printed: rho - 0.5 * (cur.scal - ksq - hbar * hbar),
        momentum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<AmbientMetric> {
        vec![
            AmbientMetric::Euclidean,
            AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] },
            AmbientMetric::Schwarzschild { mass: 1.0, center: [1.0, 2.0, 3.0] },
            AmbientMetric::Perturbed { mass: 1.0, amplitude: 0.1, tau: 1.0, omega: 1.0 },
        ]
    }

    fn random_point(rng: &mut ChaCha8Rng) -> Point {
        // Radii in [6, 40], uniform directions: inside every catalog domain.
        let r = rng.random_range(6.0..40.0);
        let z: f64 = rng.random_range(-1.0..1.0);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        [r * s * phi.cos(), r * s * phi.sin(), r * z]
    }

    #[test]
    fn euclidean_is_trivial() {
        let m = AmbientMetric::Euclidean;
        let jet = m.jet(&[0.3, -2.0, 5.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(jet.g[i][j], if i == j { 1.0 } else { 0.0 });
                for k in 0..3 {
                    assert_eq!(jet.dg[k][i][j], 0.0);
                }
            }
        }
        let cur = m.curvature(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(cur.scal, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cur.ric[i][j], 0.0);
            }
        }
    }

    #[test]
    fn schwarzschild_value_at_radius_ten() {
        let m = AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] };
        let jet = m.jet(&[10.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(jet.g[i][i], 1.21550625, epsilon = 1e-12);
        }
        assert_eq!(jet.g[0][1], 0.0);
    }

    #[test]
    fn jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        for metric in catalog() {
            for _ in 0..25 {
                let x = random_point(&mut rng);
                let jet = metric.jet(&x).unwrap();
                let scale = 1.0f64;
                for k in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    let jp = metric.jet(&xp).unwrap();
                    let jm = metric.jet(&xm).unwrap();
                    for i in 0..3 {
                        for j in 0..3 {
                            let fd = (jp.g[i][j] - jm.g[i][j]) / (2.0 * h);
                            assert!(
                                (fd - jet.dg[k][i][j]).abs() <= 1e-6 * scale,
                                "{}: dg[{k}][{i}][{j}] fd {fd} vs {}",
                                metric.id(),
                                jet.dg[k][i][j]
                            );
                            for l in 0..3 {
                                let fd2 = (jp.dg[l][i][j] - jm.dg[l][i][j]) / (2.0 * h);
                                assert!(
                                    (fd2 - jet.d2g[k][l][i][j]).abs() <= 1e-6 * scale,
                                    "{}: d2g[{k}][{l}][{i}][{j}]",
                                    metric.id()
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn schwarzschild_scalar_curvature_vanishes() {
        let m = AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] };
        for r in [2.5, 10.0, 100.0] {
            for dir in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.6, 0.48, 0.64]] {
                let x = [r * dir[0], r * dir[1], r * dir[2]];
                let cur = m.curvature(&x).unwrap();
                assert!(cur.scal.abs() < 1e-10, "Sc = {} at r = {r}", cur.scal);
            }
        }
    }

    #[test]
    fn schwarzschild_radial_ricci_closed_form() {
        // Ric(∂_r, ∂_r)/|∂_r|² in coordinate terms: −2m/(r³φ) + m²/(r⁴φ²).
        let m = 1.0;
        let metric = AmbientMetric::Schwarzschild { mass: m, center: [0.0; 3] };
        for r in [5.0f64, 10.0, 50.0] {
            let x = [r, 0.0, 0.0];
            let cur = metric.curvature(&x).unwrap();
            let phi = 1.0 + 0.5 * m / r;
            let expect = -2.0 * m / (r * r * r * phi) + m * m / (r * r * r * r * phi * phi);
            assert_abs_diff_eq!(cur.ric[0][0], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn translation_covariance_is_exact() {
        let c = [1.0, 2.0, 3.0];
        let centered = AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] };
        let moved = AmbientMetric::Schwarzschild { mass: 1.0, center: c };
        let x = [7.0, -4.0, 2.0];
        let a = moved.jet(&x).unwrap();
        let b = centered.jet(&sub(&x, &c)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.g[i][j], b.g[i][j]);
                for k in 0..3 {
                    assert_eq!(a.dg[k][i][j], b.dg[k][i][j]);
                }
            }
        }
    }

    #[test]
    fn domain_error_inside_excluded_ball() {
        let m = AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] };
        assert!(m.jet(&[0.3, 0.0, 0.0]).is_err());
        assert!(m.jet(&[0.8, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn decay_report_flags() {
        let radii = [10.0, 20.0, 40.0, 80.0];
        let euclid = AmbientMetric::Euclidean.decay_report(&radii, 0.4).unwrap();
        assert!(euclid.g_ok && euclid.gamma_ok && euclid.ric_ok && euclid.scal_ok);
        for row in &euclid.rows {
            assert_eq!(row.g_dev, 0.0);
        }

        let schw =
            AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] }.decay_report(&radii, 0.4).unwrap();
        assert!(schw.g_ok, "|g−δ| weighted column should decrease: {:?}", schw.rows);
        // |g−δ| ≈ 2m/r entrywise, Frobenius √3·2m/r, weighted ≈ √3·2m·r^{−0.1}.
        for row in &schw.rows {
            let expect = 3.0f64.sqrt() * 2.0 * row.r.powf(-0.1);
            assert!((row.g_dev - expect).abs() < 0.1 * expect, "row {row:?} vs {expect}");
        }

        let good = AmbientMetric::Perturbed { mass: 1.0, amplitude: 0.1, tau: 1.0, omega: 1.0 }
            .decay_report(&radii, 0.4)
            .unwrap();
        assert!(good.g_ok);
        let bad = AmbientMetric::Perturbed { mass: 1.0, amplitude: 0.1, tau: 0.3, omega: 1.0 }
            .decay_report(&radii, 0.4)
            .unwrap();
        assert!(!bad.g_ok, "τ=0.3 must violate the ε=0.4 decay class: {:?}", bad.rows);
    }

    #[test]
    fn k_jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let families = [
            ExtrinsicData::LinearizedFlow { a: [0.7, -0.2, 0.4] },
            ExtrinsicData::BowenYork { p: [0.3, 0.8, -0.5] },
        ];
        let h = 1e-5;
        for fam in &families {
            for _ in 0..20 {
                let x = random_point(&mut rng);
                let (_, dk) = fam.k_jet(&x);
                for l in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[l] += h;
                    xm[l] -= h;
                    let (kp, _) = fam.k_jet(&xp);
                    let (km, _) = fam.k_jet(&xm);
                    for i in 0..3 {
                        for j in 0..3 {
                            let fd = (kp[i][j] - km[i][j]) / (2.0 * h);
                            assert!(
                                (fd - dk[l][i][j]).abs() < 1e-8,
                                "dk[{l}][{i}][{j}]: fd {fd} vs {}",
                                dk[l][i][j]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constraint_residuals_vanish_on_flat_toy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = InitialDataSet {
            metric: AmbientMetric::Euclidean,
            extrinsic: ExtrinsicData::LinearizedFlow { a: [0.4, -1.1, 0.25] },
        };
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let res = constraint_residual(&data, &x).unwrap();
            for c in res.momentum {
                assert!(c.abs() < 1e-14, "momentum residual {c}");
            }
            assert!(res.rho_textbook.abs() < 1e-14, "rho residual {}", res.rho_textbook);
        }
    }

    #[test]
    fn bowen_york_is_transverse_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = InitialDataSet {
            metric: AmbientMetric::Euclidean,
            extrinsic: ExtrinsicData::BowenYork { p: [0.0, 0.0, 1.0] },
        };
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let (k, _) = data.extrinsic.k_jet(&x);
            let tr = k[0][0] + k[1][1] + k[2][2];
            assert!(tr.abs() < 1e-14, "tr K = {tr}");
            let res = constraint_residual(&data, &x).unwrap();
            for c in res.momentum {
                assert!(c.abs() < 1e-14, "div K residual {c}");
            }
            assert!(res.rho_textbook.abs() < 1e-14);
        }
    }

    #[test]
    fn time_symmetric_vacuum_residuals() {
        let data = InitialDataSet {
            metric: AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] },
            extrinsic: ExtrinsicData::TimeSymmetric,
        };
        let res = constraint_residual(&data, &[12.0, 3.0, -4.0]).unwrap();
        assert!(res.rho_textbook.abs() < 1e-12);
        assert!(res.rho_printed.abs() < 1e-12);
        for c in res.momentum {
            assert_eq!(c, 0.0);
        }
    }
}
