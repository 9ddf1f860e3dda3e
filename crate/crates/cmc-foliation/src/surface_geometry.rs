//! Embedded graph spheres X(ω) = c + (r₀ + f(ω))·ω, their induced metric,
//! second fundamental form, mean/Gauss curvature, and regularity diagnostics.
//!
//! Sign convention: k_IJ = ḡ(ν, ∇̄_{∂_I X} ∂_J X) with outward unit normal ν,
//! so the Euclidean round sphere of radius r has H = g^{IJ}k_IJ = −2/r.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ambient::{self, AmbientMetric, Mat3, Point};
use crate::sphere_spectral::{dphi_coeffs, lp_norm, ScalarField, SphereGrid, FOUR_PI};
use crate::{Error, Result};

/// Radial graph sphere. The spectral coefficients of the radial field are the
/// canonical representation (node values are synthesized from them), which
/// keeps serialization round-trips bit-exact.
#[derive(Clone)]
pub struct EmbeddedSphere {
    pub center: Point,
    pub base_radius: f64,
    coeffs: DVector<f64>,
    radial: ScalarField,
}

#[derive(Serialize, Deserialize)]
struct SphereRepr {
    center: [f64; 3],
    base_radius: f64,
    l_max: usize,
    coeffs: Vec<f64>,
}

impl EmbeddedSphere {
    pub fn new(grid: Arc<SphereGrid>, center: Point, base_radius: f64, coeffs: DVector<f64>) -> Result<Self> {
        let radial = ScalarField::from_coeffs(grid, &coeffs)?;
        let min_r = base_radius + radial.values().min();
        if !(min_r > 0.0) {
            return Err(Error::solver(
                "surface_geometry",
                "embedded_sphere",
                format!("degenerate radial graph: min radius {min_r:.6} ≤ 0"),
            ));
        }
        Ok(EmbeddedSphere { center, base_radius, coeffs, radial })
    }

    pub fn round(grid: Arc<SphereGrid>, center: Point, radius: f64) -> Result<Self> {
        let n = grid.n_basis();
        EmbeddedSphere::new(grid, center, radius, DVector::zeros(n))
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.radial.grid()
    }

    pub fn l_max(&self) -> usize {
        self.grid().l_max
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn radial(&self) -> &ScalarField {
        &self.radial
    }

    /// Same center/base, new radial coefficients.
    pub fn with_coeffs(&self, coeffs: DVector<f64>) -> Result<Self> {
        EmbeddedSphere::new(self.grid().clone(), self.center, self.base_radius, coeffs)
    }

    /// Embedding position of node `p`.
    pub fn position(&self, p: usize) -> Point {
        let grid = self.grid();
        let (t, ph) = (grid.theta(p), grid.phi(p));
        let r = self.base_radius + self.radial.values()[p];
        let (st, ct) = t.sin_cos();
        let (sp, cp) = ph.sin_cos();
        [
            self.center[0] + r * st * cp,
            self.center[1] + r * st * sp,
            self.center[2] + r * ct,
        ]
    }

    /// Radial field value at an arbitrary direction (synthesized from the
    /// band-limited coefficients, not restricted to grid nodes).
    pub fn radial_at(&self, theta: f64, phi: f64) -> f64 {
        let basis = crate::sphere_spectral::eval_basis_at(self.l_max(), theta, phi);
        basis.dot(&self.coeffs)
    }

    pub fn to_json(&self) -> String {
        let repr = SphereRepr {
            center: self.center,
            base_radius: self.base_radius,
            l_max: self.l_max(),
            coeffs: self.coeffs.iter().copied().collect(),
        };
        serde_json::to_string(&repr).expect("sphere serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: SphereRepr = serde_json::from_str(s)
            .map_err(|e| Error::config("surface_geometry", "from_json", format!("bad sphere JSON: {e}")))?;
        let grid = SphereGrid::get(repr.l_max);
        if repr.coeffs.len() != grid.n_basis() {
            return Err(Error::config(
                "surface_geometry",
                "from_json",
                format!("coefficient count {} does not match l_max {}", repr.coeffs.len(), repr.l_max),
            ));
        }
        EmbeddedSphere::new(grid, repr.center, repr.base_radius, DVector::from_vec(repr.coeffs))
    }
}

/// Per-node geometric data of an embedded sphere in an ambient metric.
///
/// Index convention for surface tensors: 0 = θ, 1 = φ; `_tt/_tp/_pp` suffixes
/// name the components, `gamma_t_pp` is Γ^θ_φφ etc.
pub struct SurfaceGeometry {
    grid: Arc<SphereGrid>,
    pub position: Vec<Point>,
    pub x_theta: Vec<Point>,
    pub x_phi: Vec<Point>,
    pub normal: Vec<Point>,
    /// Ambient metric and inverse at the nodes.
    pub g_amb: Vec<Mat3>,
    pub ginv_amb: Vec<Mat3>,
    pub ric_amb: Vec<Mat3>,
    /// Induced metric, inverse, measure weights (Σ dμ = area).
    pub g_tt: Vec<f64>,
    pub g_tp: Vec<f64>,
    pub g_pp: Vec<f64>,
    pub ginv_tt: Vec<f64>,
    pub ginv_tp: Vec<f64>,
    pub ginv_pp: Vec<f64>,
    pub dmu: Vec<f64>,
    /// Second fundamental form and mean curvature (H = −2/r round Euclidean).
    pub k_tt: Vec<f64>,
    pub k_tp: Vec<f64>,
    pub k_pp: Vec<f64>,
    pub h: Vec<f64>,
    /// |k|² = k_IJ k_KL g^{IK} g^{JL}.
    pub k_sq: Vec<f64>,
    /// Ambient Ric̄(ν,ν) and Sc̄ at the nodes.
    pub ric_nn: Vec<f64>,
    pub scal_amb: Vec<f64>,
    /// Surface Christoffel symbols Γ^K_IJ of the induced metric.
    pub gamma_t_tt: Vec<f64>,
    pub gamma_t_tp: Vec<f64>,
    pub gamma_t_pp: Vec<f64>,
    pub gamma_p_tt: Vec<f64>,
    pub gamma_p_tp: Vec<f64>,
    pub gamma_p_pp: Vec<f64>,
    /// First derivatives ∂_K g_IJ (analytic chain rule); order E=g_tt, F=g_tp, G=g_pp.
    pub dg_t: [Vec<f64>; 3],
    pub dg_p: [Vec<f64>; 3],
    /// Second derivatives used by the Brioschi formula: ∂φφE, ∂θθG, ∂θφF.
    pub d2e_pp: Vec<f64>,
    pub d2g_tt: Vec<f64>,
    pub d2f_tp: Vec<f64>,
    pub area: f64,
    pub area_radius: f64,
}

impl SurfaceGeometry {
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    /// ∫ f dμ against the induced measure.
    pub fn integral(&self, values: &DVector<f64>) -> f64 {
        self.dmu.iter().zip(values.iter()).map(|(w, v)| w * v).sum()
    }

    pub fn mean_curvature(&self) -> ScalarField {
        ScalarField::from_values(self.grid.clone(), DVector::from_vec(self.h.clone()))
            .expect("node count matches by construction")
    }

    /// Area-weighted mean of H and the mean-curvature radius σ = −2/H̄.
    pub fn mean_curvature_radius(&self) -> f64 {
        let hbar = self.dmu.iter().zip(self.h.iter()).map(|(w, h)| w * h).sum::<f64>() / self.area;
        -2.0 / hbar
    }

    /// Pointwise |k̊| of the trace-free part k̊ = k − (H/2)g, contracted as
    /// tr((g⁻¹k̊)²). Forming k̊ first (rather than |k|² − H²/2) keeps the
    /// umbilic cancellation at roundoff instead of √roundoff.
    pub fn tracefree_norm(&self, p: usize) -> f64 {
        let half_h = 0.5 * self.h[p];
        let ktt = self.k_tt[p] - half_h * self.g_tt[p];
        let ktp = self.k_tp[p] - half_h * self.g_tp[p];
        let kpp = self.k_pp[p] - half_h * self.g_pp[p];
        let (itt, itp, ipp) = (self.ginv_tt[p], self.ginv_tp[p], self.ginv_pp[p]);
        let m11 = itt * ktt + itp * ktp;
        let m12 = itt * ktp + itp * kpp;
        let m21 = itp * ktt + ipp * ktp;
        let m22 = itp * ktp + ipp * kpp;
        (m11 * m11 + 2.0 * m12 * m21 + m22 * m22).max(0.0).sqrt()
    }

    /// Hawking mass m_H = √(|M|/16π)·(1 − (1/16π)∮H²dμ).
    pub fn hawking_mass(&self) -> f64 {
        let h2: f64 = self.dmu.iter().zip(self.h.iter()).map(|(w, h)| w * h * h).sum();
        (self.area / (16.0 * std::f64::consts::PI)).sqrt() * (1.0 - h2 / (16.0 * std::f64::consts::PI))
    }

    /// Gauss curvature via the Gauss equation:
    /// 2K = Sc̄ − 2Ric̄(ν,ν) + H²/2 − |k̊|², with |k̊|² = |k|² − H²/2.
    pub fn gauss_curvature(&self) -> ScalarField {
        let vals = DVector::from_fn(self.n_points(), |p, _| {
            0.5 * (self.scal_amb[p] - 2.0 * self.ric_nn[p] + self.h[p] * self.h[p] - self.k_sq[p])
        });
        ScalarField::from_values(self.grid.clone(), vals).expect("size matches")
    }

    /// Intrinsic Gauss curvature by the Brioschi formula from the analytic
    /// 2-jet of the induced metric. Independent of the ambient-curvature
    /// route in [`SurfaceGeometry::gauss_curvature`].
    pub fn gauss_curvature_intrinsic(&self) -> ScalarField {
        let e_t = &self.dg_t[0];
        let e_p = &self.dg_p[0];
        let f_t = &self.dg_t[1];
        let f_p = &self.dg_p[1];
        let g_t = &self.dg_t[2];
        let g_p = &self.dg_p[2];
        let vals = DVector::from_fn(self.n_points(), |p, _| {
            let (e, f, g) = (self.g_tt[p], self.g_tp[p], self.g_pp[p]);
            let det = e * g - f * f;
            let m1 = [
                [
                    -0.5 * self.d2e_pp[p] + self.d2f_tp[p] - 0.5 * self.d2g_tt[p],
                    0.5 * e_t[p],
                    f_t[p] - 0.5 * e_p[p],
                ],
                [f_p[p] - 0.5 * g_t[p], e, f],
                [0.5 * g_p[p], f, g],
            ];
            let m2 = [
                [0.0, 0.5 * e_p[p], 0.5 * g_t[p]],
                [0.5 * e_p[p], e, f],
                [0.5 * g_t[p], f, g],
            ];
            (ambient::mat3_det(&m1) - ambient::mat3_det(&m2)) / (det * det)
        });
        ScalarField::from_values(self.grid.clone(), vals).expect("size")
    }

    /// ‖Ric̄‖_{L^p(M)} of the ambient Ricci tensor restricted to the surface.
    pub fn ricci_lp(&self, p: f64) -> f64 {
        let vals = (0..self.n_points()).map(|i| {
            let ric = &self.ric_amb[i];
            let gi = &self.ginv_amb[i];
            let mut sq = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            sq += gi[a][c] * gi[b][d] * ric[a][b] * ric[c][d];
                        }
                    }
                }
            }
            sq.max(0.0).sqrt()
        });
        lp_norm(vals, &self.dmu, p)
    }
}

/// Regularity diagnostics of a single sphere.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub l2_tracefree: f64,
    pub l4_tracefree: f64,
    pub linf_tracefree: f64,
    /// |σ − R_A| with σ = −2/H̄ (area-mean H).
    pub radius_gap: f64,
    pub hawking: f64,
    pub ricci_lp: f64,
    /// |1 − R_A²/σ²| − 2|m_H|/R_A; vanishes up to quadrature error.
    pub identity_residual: f64,
    pub sigma: f64,
    pub area_radius: f64,
}

/// Induced geometry of `sphere` in `metric`.
pub fn geometry(metric: &AmbientMetric, sphere: &EmbeddedSphere) -> Result<SurfaceGeometry> {
    let grid = sphere.grid().clone();
    let np = grid.n_points();
    let c = sphere.coeffs();
    let f = sphere.radial().values().clone();
    let f_t = grid.basis_dtheta() * c;
    let f_p = grid.basis_dphi() * c;
    let f_tt = grid.basis_dtheta2() * c;
    let f_tp = grid.basis_dthetadphi() * c;
    let f_pp = grid.basis_dphi2() * c;
    // Third derivatives: φ-derivatives act in coefficient space.
    let c_p = dphi_coeffs(grid.l_max, c);
    let c_pp = dphi_coeffs(grid.l_max, &c_p);
    let c_ppp = dphi_coeffs(grid.l_max, &c_pp);
    let f_ttt = grid.basis_dtheta3() * c;
    let f_ttp = grid.basis_dtheta2() * &c_p;
    let f_tpp = grid.basis_dtheta() * &c_pp;
    let f_ppp = grid.basis() * &c_ppp;

    let mut out = SurfaceGeometry {
        grid: grid.clone(),
        position: vec![[0.0; 3]; np],
        x_theta: vec![[0.0; 3]; np],
        x_phi: vec![[0.0; 3]; np],
        normal: vec![[0.0; 3]; np],
        g_amb: vec![[[0.0; 3]; 3]; np],
        ginv_amb: vec![[[0.0; 3]; 3]; np],
        ric_amb: vec![[[0.0; 3]; 3]; np],
        g_tt: vec![0.0; np],
        g_tp: vec![0.0; np],
        g_pp: vec![0.0; np],
        ginv_tt: vec![0.0; np],
        ginv_tp: vec![0.0; np],
        ginv_pp: vec![0.0; np],
        dmu: vec![0.0; np],
        k_tt: vec![0.0; np],
        k_tp: vec![0.0; np],
        k_pp: vec![0.0; np],
        h: vec![0.0; np],
        k_sq: vec![0.0; np],
        ric_nn: vec![0.0; np],
        scal_amb: vec![0.0; np],
        gamma_t_tt: vec![0.0; np],
        gamma_t_tp: vec![0.0; np],
        gamma_t_pp: vec![0.0; np],
        gamma_p_tt: vec![0.0; np],
        gamma_p_tp: vec![0.0; np],
        gamma_p_pp: vec![0.0; np],
        dg_t: [vec![0.0; np], vec![0.0; np], vec![0.0; np]],
        dg_p: [vec![0.0; np], vec![0.0; np], vec![0.0; np]],
        d2e_pp: vec![0.0; np],
        d2g_tt: vec![0.0; np],
        d2f_tp: vec![0.0; np],
        area: 0.0,
        area_radius: 0.0,
    };

    for p in 0..np {
        let (theta, phi) = (grid.theta(p), grid.phi(p));
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let omega = [st * cp, st * sp, ct];
        let omega_t = [ct * cp, ct * sp, -st];
        let omega_p = [-st * sp, st * cp, 0.0];
        let omega_tt = [-omega[0], -omega[1], -omega[2]];
        let omega_tp = [-ct * sp, ct * cp, 0.0];
        let omega_pp = [-st * cp, -st * sp, 0.0];

        let r = sphere.base_radius + f[p];
        let x = [
            sphere.center[0] + r * omega[0],
            sphere.center[1] + r * omega[1],
            sphere.center[2] + r * omega[2],
        ];
        let mut xt = [0.0; 3];
        let mut xp = [0.0; 3];
        let mut xtt = [0.0; 3];
        let mut xtp = [0.0; 3];
        let mut xpp = [0.0; 3];
        for i in 0..3 {
            xt[i] = f_t[p] * omega[i] + r * omega_t[i];
            xp[i] = f_p[p] * omega[i] + r * omega_p[i];
            xtt[i] = f_tt[p] * omega[i] + 2.0 * f_t[p] * omega_t[i] + r * omega_tt[i];
            xtp[i] = f_tp[p] * omega[i] + f_t[p] * omega_p[i] + f_p[p] * omega_t[i] + r * omega_tp[i];
            xpp[i] = f_pp[p] * omega[i] + 2.0 * f_p[p] * omega_p[i] + r * omega_pp[i];
        }

        let jet = metric.jet(&x)?;
        let cur = ambient::curvature_from_jet(&jet)
            .ok_or_else(|| Error::analysis("surface_geometry", "geometry", "singular ambient metric"))?;
        let ginv = jet.inverse()?;

        let quad = |a: &Point, b: &Point| -> f64 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += jet.g[i][j] * a[i] * b[j];
                }
            }
            s
        };
        let e = quad(&xt, &xt);
        let ff = quad(&xt, &xp);
        let g2 = quad(&xp, &xp);
        let det = e * g2 - ff * ff;
        if !(det > 0.0) || !(e > 0.0) {
            return Err(Error::analysis(
                "surface_geometry",
                "geometry",
                format!("degenerate tangent plane at node {p} (det = {det:.3e})"),
            ));
        }

        // Outward unit normal: raise the coordinate conormal ε_ijk X_θ^j X_φ^k.
        let n_cov = [
            xt[1] * xp[2] - xt[2] * xp[1],
            xt[2] * xp[0] - xt[0] * xp[2],
            xt[0] * xp[1] - xt[1] * xp[0],
        ];
        let mut nu = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                nu[i] += ginv[i][j] * n_cov[j];
            }
        }
        let len = quad(&nu, &nu).sqrt();
        let orient = if ambient::dot(&nu, &omega) >= 0.0 { 1.0 } else { -1.0 };
        for v in &mut nu {
            *v *= orient / len;
        }

        // k_IJ = ḡ(ν, ∂_I∂_J X + Γ̄(∂_I X, ∂_J X)).
        let second = |dd: &Point, a: &Point, b: &Point| -> f64 {
            let mut vec = *dd;
            for kk in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        vec[kk] += cur.christoffel[kk][i][j] * a[i] * b[j];
                    }
                }
            }
            quad(&nu, &vec)
        };
        let k_tt = second(&xtt, &xt, &xt);
        let k_tp = second(&xtp, &xt, &xp);
        let k_pp = second(&xpp, &xp, &xp);

        let itt = g2 / det;
        let itp = -ff / det;
        let ipp = e / det;
        let h = itt * k_tt + 2.0 * itp * k_tp + ipp * k_pp;
        // |k|² = tr((g⁻¹ k)²).
        let m11 = itt * k_tt + itp * k_tp;
        let m12 = itt * k_tp + itp * k_pp;
        let m21 = itp * k_tt + ipp * k_tp;
        let m22 = itp * k_tp + ipp * k_pp;
        let k_sq = m11 * m11 + 2.0 * m12 * m21 + m22 * m22;

        let mut ric_nn = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                ric_nn += cur.ric[i][j] * nu[i] * nu[j];
            }
        }

        // ∂_K g_IJ = (∂_c ḡ_ab) X_K^c X_I^a X_J^b + ḡ(X_IK, X_J) + ḡ(X_I, X_JK).
        let tangents = [xt, xp];
        let seconds = [[xtt, xtp], [xtp, xpp]];
        let mut dg2 = [[[0.0f64; 2]; 2]; 2]; // [K][I][J]
        for kk in 0..2 {
            for ii in 0..2 {
                for jj in 0..2 {
                    let mut s = 0.0;
                    for cc in 0..3 {
                        for a in 0..3 {
                            for b in 0..3 {
                                s += jet.dg[cc][a][b] * tangents[kk][cc] * tangents[ii][a] * tangents[jj][b];
                            }
                        }
                    }
                    s += quad(&seconds[ii][kk], &tangents[jj]) + quad(&tangents[ii], &seconds[jj][kk]);
                    dg2[kk][ii][jj] = s;
                }
            }
        }
        // Second derivatives ∂_L ∂_K g_IJ of the induced metric, needed by the
        // intrinsic (Brioschi) curvature route.  Chart components of surface
        // tensors are not smooth functions on the sphere (they pick up cone
        // factors like sin 2θ at the poles), so spectral differentiation of the
        // sampled g_IJ is invalid; everything must come from embedding jets.
        let omega_ttt = [-omega_t[0], -omega_t[1], -omega_t[2]];
        let omega_ttp = [-omega_p[0], -omega_p[1], -omega_p[2]];
        let omega_tpp = [-ct * cp, -ct * sp, 0.0];
        let omega_ppp = [-omega_p[0], -omega_p[1], -omega_p[2]];
        let mut x3 = [[0.0f64; 3]; 4]; // index = number of φ's among (I,J,K)
        for i in 0..3 {
            x3[0][i] = f_ttt[p] * omega[i]
                + 3.0 * f_tt[p] * omega_t[i]
                + 3.0 * f_t[p] * omega_tt[i]
                + r * omega_ttt[i];
            x3[1][i] = f_ttp[p] * omega[i]
                + f_tt[p] * omega_p[i]
                + 2.0 * f_tp[p] * omega_t[i]
                + 2.0 * f_t[p] * omega_tp[i]
                + f_p[p] * omega_tt[i]
                + r * omega_ttp[i];
            x3[2][i] = f_tpp[p] * omega[i]
                + 2.0 * f_tp[p] * omega_p[i]
                + f_pp[p] * omega_t[i]
                + f_t[p] * omega_pp[i]
                + 2.0 * f_p[p] * omega_tp[i]
                + r * omega_tpp[i];
            x3[3][i] = f_ppp[p] * omega[i]
                + 3.0 * f_pp[p] * omega_p[i]
                + 3.0 * f_p[p] * omega_pp[i]
                + r * omega_ppp[i];
        }
        let third = |i: usize, j: usize, k: usize| -> &Point { &x3[i + j + k] };
        let ddg = |ll: usize, kk: usize, ii: usize, jj: usize| -> f64 {
            let mut s = 0.0;
            for d in 0..3 {
                for cc in 0..3 {
                    for a in 0..3 {
                        for b in 0..3 {
                            s += jet.d2g[d][cc][a][b]
                                * tangents[ll][d]
                                * tangents[kk][cc]
                                * tangents[ii][a]
                                * tangents[jj][b];
                        }
                    }
                }
            }
            for cc in 0..3 {
                for a in 0..3 {
                    for b in 0..3 {
                        let dgc = jet.dg[cc][a][b];
                        s += dgc
                            * (seconds[kk][ll][cc] * tangents[ii][a] * tangents[jj][b]
                                + tangents[kk][cc] * seconds[ii][ll][a] * tangents[jj][b]
                                + tangents[kk][cc] * tangents[ii][a] * seconds[jj][ll][b]
                                + tangents[ll][cc]
                                    * (seconds[ii][kk][a] * tangents[jj][b]
                                        + tangents[ii][a] * seconds[jj][kk][b]));
                    }
                }
            }
            s + quad(third(ii, kk, ll), &tangents[jj])
                + quad(&seconds[ii][kk], &seconds[jj][ll])
                + quad(&seconds[ii][ll], &seconds[jj][kk])
                + quad(&tangents[ii], third(jj, kk, ll))
        };
        out.d2e_pp[p] = ddg(1, 1, 0, 0);
        out.d2g_tt[p] = ddg(0, 0, 1, 1);
        out.d2f_tp[p] = ddg(0, 1, 0, 1);

        let ginv2 = [[itt, itp], [itp, ipp]];
        let mut gamma2 = [[[0.0f64; 2]; 2]; 2]; // [K][I][J]
        for kk in 0..2 {
            for ii in 0..2 {
                for jj in 0..2 {
                    let mut s = 0.0;
                    for ll in 0..2 {
                        s += ginv2[kk][ll] * (dg2[ii][ll][jj] + dg2[jj][ll][ii] - dg2[ll][ii][jj]);
                    }
                    gamma2[kk][ii][jj] = 0.5 * s;
                }
            }
        }

        out.position[p] = x;
        out.x_theta[p] = xt;
        out.x_phi[p] = xp;
        out.normal[p] = nu;
        out.g_amb[p] = jet.g;
        out.ginv_amb[p] = ginv;
        out.ric_amb[p] = cur.ric;
        out.g_tt[p] = e;
        out.g_tp[p] = ff;
        out.g_pp[p] = g2;
        out.ginv_tt[p] = itt;
        out.ginv_tp[p] = itp;
        out.ginv_pp[p] = ipp;
        out.dmu[p] = grid.weights()[p] * det.sqrt() / st;
        out.k_tt[p] = k_tt;
        out.k_tp[p] = k_tp;
        out.k_pp[p] = k_pp;
        out.h[p] = h;
        out.k_sq[p] = k_sq;
        out.ric_nn[p] = ric_nn;
        out.scal_amb[p] = cur.scal;
        out.gamma_t_tt[p] = gamma2[0][0][0];
        out.gamma_t_tp[p] = gamma2[0][0][1];
        out.gamma_t_pp[p] = gamma2[0][1][1];
        out.gamma_p_tt[p] = gamma2[1][0][0];
        out.gamma_p_tp[p] = gamma2[1][0][1];
        out.gamma_p_pp[p] = gamma2[1][1][1];
        out.dg_t[0][p] = dg2[0][0][0];
        out.dg_t[1][p] = dg2[0][0][1];
        out.dg_t[2][p] = dg2[0][1][1];
        out.dg_p[0][p] = dg2[1][0][0];
        out.dg_p[1][p] = dg2[1][0][1];
        out.dg_p[2][p] = dg2[1][1][1];
    }
    out.area = out.dmu.iter().sum();
    out.area_radius = (out.area / FOUR_PI).sqrt();
    Ok(out)
}

/// Regularity diagnostics for `sphere` in `metric` with Ricci exponent `p`.
pub fn regularity_report(metric: &AmbientMetric, sphere: &EmbeddedSphere, p: f64) -> Result<RegularityReport> {
    let geom = geometry(metric, sphere)?;
    let tracefree: Vec<f64> = (0..geom.n_points()).map(|i| geom.tracefree_norm(i)).collect();
    let sigma = geom.mean_curvature_radius();
    let hawking = geom.hawking_mass();
    let r_a = geom.area_radius;
    let identity = (1.0 - r_a * r_a / (sigma * sigma)).abs() - 2.0 * hawking.abs() / r_a;
    Ok(RegularityReport {
        l2_tracefree: lp_norm(tracefree.iter().copied(), &geom.dmu, 2.0),
        l4_tracefree: lp_norm(tracefree.iter().copied(), &geom.dmu, 4.0),
        linf_tracefree: lp_norm(tracefree.iter().copied(), &geom.dmu, f64::INFINITY),
        radius_gap: (sigma - r_a).abs(),
        hawking,
        ricci_lp: geom.ricci_lp(p),
        identity_residual: identity,
        sigma,
        area_radius: r_a,
    })
}
