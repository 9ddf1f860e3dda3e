//! Newton solution of the constant-mean-curvature equation H ≡ −2/σ,
//! continuation in σ, lapse computation, and stability diagnostics.
//!
//! The mean-curvature map f ↦ H(graph f) is linearized by the stability
//! operator J f = Δ_g f + (|k|² + Ric̄(ν,ν)) f (pure normal-graph
//! linearization; the radial-vs-normal discrepancy enters at second order and
//! is absorbed by the iteration). Newton updates solve J δf = target − H in
//! the Galerkin sense on the harmonic basis; the degree-0 and degree-1
//! components of δf are retained — they move the leaf radius and center.
//!
//! Convergence is judged on the band-limited part of H − target (the degrees
//! the basis resolves). For analytic metrics whose restriction to the leaf is
//! resolved by the basis the raw node residual agrees with the band-limited
//! one to spectral accuracy; for under-resolved oscillatory perturbations the
//! raw residual honestly floors at the truncation level and is reported
//! separately as `residual_raw`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ambient::AmbientMetric;
use crate::sphere_spectral::{
    generalized_eigen, lm_index, split_parts, weighted_gram, EigenPairs, PartSplit, ScalarField,
    SpectralSystem, SphereGrid,
};
use crate::surface_geometry::{geometry, EmbeddedSphere, SurfaceGeometry};
use crate::{Error, Result};

/// Relative eigenvalue threshold below which a mode counts as numerically null.
const NULL_MODE_REL: f64 = 1e-12;
/// Relative right-hand-side component allowed on a numerically null mode.
const NULL_FORCING_REL: f64 = 1e-8;

/// Galerkin matrix of the stability operator J = Δ + (|k|² + Ric̄(ν,ν)) on a
/// leaf, kept as −J so the quadratic form is bounded below ~ −2/σ².
pub struct StabilityOperator {
    sys: SpectralSystem,
    /// Per-node potential |k|² + Ric̄(ν,ν).
    pub potential: Vec<f64>,
    /// Matrix of −J: stiffness − ∫ V Y_a Y_b dμ. Symmetric.
    pub neg_j: DMatrix<f64>,
    eigen: OnceLock<EigenPairs>,
}

/// Assemble the stability operator from a leaf geometry (the geometry already
/// carries the ambient curvature samples).
pub fn assemble_stability(geom: &SurfaceGeometry) -> Result<StabilityOperator> {
    let sys = SpectralSystem::assemble_laplace(geom)?;
    let np = geom.n_points();
    let mut potential = vec![0.0; np];
    let mut vw = vec![0.0; np];
    for p in 0..np {
        potential[p] = geom.k_sq[p] + geom.ric_nn[p];
        vw[p] = potential[p] * geom.dmu[p];
    }
    let grid = geom.grid();
    let pot_mass = weighted_gram(grid.basis(), &vw, grid.basis());
    let neg_j = &sys.stiffness - pot_mass;
    Ok(StabilityOperator { sys, potential, neg_j, eigen: OnceLock::new() })
}

impl StabilityOperator {
    /// Mass/stiffness system of the same leaf (Laplace eigenstructure on demand).
    pub fn sys(&self) -> &SpectralSystem {
        &self.sys
    }

    /// Generalized eigenpairs of −J with respect to the mass matrix, ascending.
    pub fn eigen(&self) -> Result<&EigenPairs> {
        if self.eigen.get().is_none() {
            let pairs = generalized_eigen(&self.neg_j, &self.sys.mass)?;
            let _ = self.eigen.set(pairs);
        }
        Ok(self.eigen.get().unwrap())
    }

    /// Coefficients of the Galerkin solution of J x = rhs.
    ///
    /// Modes with |λ| below `NULL_MODE_REL`·max|λ| are inverted as zero when the
    /// right-hand side carries no significant component on them (exact kernels,
    /// e.g. flat translations); a significant component on a null mode means J
    /// cannot produce the required update and the leaf is near-critical.
    ///
    /// `cancellation_scale` is the magnitude of the quantities whose difference
    /// produced `rhs` (e.g. |H| for a Newton residual): components below the
    /// roundoff of that cancellation never count as genuine forcing.
    pub fn solve(&self, rhs: &ScalarField, cancellation_scale: f64) -> Result<DVector<f64>> {
        let pairs = self.eigen()?;
        let grid = self.sys.grid();
        let wv = DVector::from_fn(rhs.values().len(), |p, _| self.sys.measure[p] * rhs.values()[p]);
        let r = grid.basis().tr_mul(&wv);
        // Components in the mass-orthonormal eigenbasis.
        let rho = pairs.vectors.tr_mul(&r);
        let lam_max = pairs.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let thresh = lam_max * NULL_MODE_REL;
        let rnorm = rho.norm();
        let noise_floor = 32.0 * f64::EPSILON * cancellation_scale * self.sys.area.sqrt();
        let mut alpha = DVector::zeros(rho.len());
        for i in 0..rho.len() {
            let lam = pairs.values[i];
            if lam.abs() <= thresh {
                if rho[i].abs() > (rnorm * NULL_FORCING_REL).max(noise_floor) {
                    return Err(Error::solver(
                        "cmc_solver",
                        "solve_cmc",
                        format!(
                            "near-critical leaf: J has a null mode (λ = {lam:.3e}, |λ|_max = {lam_max:.3e}) \
                             carrying forcing {:.3e} of {:.3e}",
                            rho[i].abs(),
                            rnorm
                        ),
                    ));
                }
            } else {
                alpha[i] = -rho[i] / lam;
            }
        }
        Ok(&pairs.vectors * alpha)
    }

    /// Smallest eigenvalue of −J restricted to mean-value-free functions.
    ///
    /// With the generalized eigenpairs (λ_i, v_i) and β_i = ⟨1, v_i⟩_μ, the
    /// constrained minimum is the smallest root of Σ β_i²/(λ_i − μ) = 0, which
    /// lies in (λ₀, λ₁); solved by bisection.
    pub fn lambda_min_meanfree(&self) -> Result<f64> {
        let pairs = self.eigen()?;
        let nb = pairs.values.len();
        if nb < 2 {
            return Err(Error::analysis("cmc_solver", "instability_margin", "basis too small"));
        }
        let mut e0 = DVector::zeros(nb);
        e0[0] = crate::sphere_spectral::FOUR_PI.sqrt();
        let beta = pairs.vectors.tr_mul(&(&self.sys.mass * e0));
        let total: f64 = beta.iter().map(|b| b * b).sum();
        let (l0, l1) = (pairs.values[0], pairs.values[1]);
        if beta[0] * beta[0] <= total * 1e-24 {
            // The constraint does not touch the bottom mode.
            return Ok(l0);
        }
        if l1 - l0 <= (l0.abs() + l1.abs() + 1e-300) * 1e-15 {
            return Ok(l1);
        }
        let secular = |mu: f64| -> f64 {
            (0..nb).map(|i| beta[i] * beta[i] / (pairs.values[i] - mu)).sum()
        };
        let (mut a, mut b) = (l0, l1);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if secular(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Mean curvature of the sphere as a field on its grid (H < 0 for convex
/// outward-oriented spheres).
pub fn mean_curvature_map(metric: &AmbientMetric, sphere: &EmbeddedSphere) -> Result<ScalarField> {
    let geom = geometry(metric, sphere)?;
    ScalarField::from_values(sphere.grid().clone(), DVector::from_row_slice(&geom.h))
}

/// Pointwise action J f = Δ_g f + (|k|² + Ric̄(ν,ν)) f on a band-limited field.
///
/// Valid because f is a genuine scalar on S² (spectral derivatives apply);
/// the surface metric data come from the analytic jets stored in `geom`.
pub fn apply_stability(geom: &SurfaceGeometry, f: &ScalarField) -> Result<ScalarField> {
    let grid = geom.grid();
    let c = f.analyze();
    let ft = grid.basis_dtheta() * &c;
    let fp = grid.basis_dphi() * &c;
    let ftt = grid.basis_dtheta2() * &c;
    let ftp = grid.basis_dthetadphi() * &c;
    let fpp = grid.basis_dphi2() * &c;
    let np = geom.n_points();
    let mut out = DVector::zeros(np);
    for p in 0..np {
        let ct = |dd: f64, gt: f64, gp: f64| dd - gt * ft[p] - gp * fp[p];
        let lap = geom.ginv_tt[p] * ct(ftt[p], geom.gamma_t_tt[p], geom.gamma_p_tt[p])
            + 2.0 * geom.ginv_tp[p] * ct(ftp[p], geom.gamma_t_tp[p], geom.gamma_p_tp[p])
            + geom.ginv_pp[p] * ct(fpp[p], geom.gamma_t_pp[p], geom.gamma_p_pp[p]);
        out[p] = lap + (geom.k_sq[p] + geom.ric_nn[p]) * f.values()[p];
    }
    ScalarField::from_values(grid.clone(), out)
}

/// Newton options for a single CMC solve.
#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Residual tolerance is `tol_factor / σ² + tol_abs`.
    pub tol_factor: f64,
    /// Absolute tolerance floor, for metrics whose angular content is not
    /// band-limited at the working resolution: aliasing between the analytic
    /// Jacobian and the discrete mean-curvature map stalls the iteration at a
    /// σ-independent residual level, and a pure `tol_factor / σ²` target is
    /// then unreachable for large σ.
    pub tol_abs: f64,
    pub max_iters: usize,
    /// Line-search halvings before the Jacobian is reassembled / the solve fails.
    pub max_halvings: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol_factor: 1e-9, tol_abs: 0.0, max_iters: 30, max_halvings: 6 }
    }
}

/// A solved CMC leaf with its diagnostics.
pub struct LeafSolution {
    pub sphere: EmbeddedSphere,
    pub geom: SurfaceGeometry,
    /// Mean-curvature radius −2/H̄ of the solved leaf.
    pub sigma: f64,
    pub newton_iters: usize,
    /// Band-limited ‖H + 2/σ‖_{L∞} (the discrete residual driven to tolerance).
    pub residual: f64,
    /// Raw node sup of |H + 2/σ|, including unresolved metric frequencies.
    pub residual_raw: f64,
    /// Smallest eigenvalue of −J on mean-value-free functions.
    pub lambda_min: f64,
    /// Lapse u = J⁻¹(2/σ²).
    pub lapse: ScalarField,
    pub lapse_mean: f64,
    pub lapse_trans_sup: f64,
    pub lapse_deform_l2: f64,
    /// Laplace eigenvalues of the translational cluster.
    pub cluster: Vec<f64>,
    /// True when the window |λ − 2/σ²| ≤ 1/σ² did not capture exactly 3 modes.
    pub weird_window: bool,
    /// Mass-orthonormal translational eigenfields of −Δ on the leaf.
    pub trans_modes: Vec<ScalarField>,
}

/// Flat, serializable per-leaf record (one JSON-lines row).
#[derive(Serialize)]
pub struct LeafRecord {
    pub sigma: f64,
    pub area_radius: f64,
    pub hawking: f64,
    pub lambda_min: f64,
    pub lapse_mean: f64,
    pub lapse_trans_sup: f64,
    pub residual: f64,
    pub residual_raw: f64,
    pub newton_iters: usize,
    pub center: [f64; 3],
    pub base_radius: f64,
    pub l_max: usize,
    pub coeffs: Vec<f64>,
    pub weird_window: bool,
}

impl LeafSolution {
    pub fn record(&self) -> LeafRecord {
        LeafRecord {
            sigma: self.sigma,
            area_radius: self.geom.area_radius,
            hawking: self.geom.hawking_mass(),
            lambda_min: self.lambda_min,
            lapse_mean: self.lapse_mean,
            lapse_trans_sup: self.lapse_trans_sup,
            residual: self.residual,
            residual_raw: self.residual_raw,
            newton_iters: self.newton_iters,
            center: self.sphere.center,
            base_radius: self.sphere.base_radius,
            l_max: self.sphere.l_max(),
            coeffs: self.sphere.coeffs().iter().copied().collect(),
            weird_window: self.weird_window,
        }
    }

    /// Stability margin λ_min − (−c σ^{−exponent}); positive ⇔ the leaf has
    /// c·σ^{−exponent}-controlled instability.
    pub fn instability_margin(&self, c: f64, exponent: f64) -> f64 {
        self.lambda_min + c * self.sigma.powf(-exponent)
    }
}

/// Stability margin of a leaf against the threshold −c·σ^{−exponent}.
pub fn instability_margin(leaf: &LeafSolution, c: f64, exponent: f64) -> f64 {
    leaf.instability_margin(c, exponent)
}

struct ResidualEval {
    h: DVector<f64>,
    /// Band-limited sup of |H − target|.
    bl_sup: f64,
    raw_sup: f64,
}

fn eval_residual(geom: &SurfaceGeometry, grid: &SphereGrid, target: f64) -> ResidualEval {
    let np = geom.n_points();
    let h = DVector::from_fn(np, |p, _| geom.h[p]);
    let dev = DVector::from_fn(np, |p, _| geom.h[p] - target);
    let raw_sup = dev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // Band-limited part: round-sphere analysis/synthesis of the deviation.
    let coeffs = grid.basis().tr_mul(&DVector::from_fn(np, |p, _| grid.weights()[p] * dev[p]));
    let bl = grid.basis() * coeffs;
    let bl_sup = bl.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ResidualEval { h, bl_sup, raw_sup }
}

/// Radii of `sphere`'s surface along the grid directions taken from `origin`
/// (ray–surface intersection; the surface must stay a graph over `origin`).
fn ray_radii(sphere: &EmbeddedSphere, origin: &[f64; 3], grid: &SphereGrid) -> Result<Vec<f64>> {
    let np = grid.n_points();
    let mut out = vec![0.0; np];
    for p in 0..np {
        let (st, ct) = grid.theta(p).sin_cos();
        let (sp, cp) = grid.phi(p).sin_cos();
        let dir = [st * cp, st * sp, ct];
        let mut t = sphere.base_radius;
        let mut converged = false;
        for _ in 0..80 {
            let y = [
                origin[0] + t * dir[0] - sphere.center[0],
                origin[1] + t * dir[1] - sphere.center[1],
                origin[2] + t * dir[2] - sphere.center[2],
            ];
            let s = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            if s <= 0.0 {
                break;
            }
            let theta = (y[2] / s).clamp(-1.0, 1.0).acos();
            let phi = y[1].atan2(y[0]);
            let g = s - sphere.base_radius - sphere.radial_at(theta, phi);
            if g.abs() <= 1e-13 * sphere.base_radius {
                converged = true;
                break;
            }
            t -= g;
            if !(t > 0.0) {
                break;
            }
        }
        if !converged {
            return Err(Error::analysis(
                "cmc_solver",
                "reparametrize",
                format!("ray–surface intersection failed at node {p}"),
            ));
        }
        out[p] = t;
    }
    Ok(out)
}

/// Re-express the surface as a radial graph about a center shifted so the
/// degree-1 coefficients (approximately) vanish. Pure reparametrization up to
/// re-sampling at the grid band limit.
fn recenter(sphere: &EmbeddedSphere) -> Result<EmbeddedSphere> {
    let grid = sphere.grid().clone();
    let k = (3.0 / crate::sphere_spectral::FOUR_PI).sqrt();
    let c = sphere.coeffs();
    let d = [
        k * c[lm_index(1, 1)],
        k * c[lm_index(1, -1)],
        k * c[lm_index(1, 0)],
    ];
    let new_center = [
        sphere.center[0] + d[0],
        sphere.center[1] + d[1],
        sphere.center[2] + d[2],
    ];
    let radii = ray_radii(sphere, &new_center, &grid)?;
    let vals = DVector::from_fn(radii.len(), |p, _| radii[p] - sphere.base_radius);
    let field = ScalarField::from_values(grid.clone(), vals)?;
    EmbeddedSphere::new(grid, new_center, sphere.base_radius, field.analyze())
}

fn l1_coeff_norm(sphere: &EmbeddedSphere) -> f64 {
    let c = sphere.coeffs();
    (c[lm_index(1, -1)].powi(2) + c[lm_index(1, 0)].powi(2) + c[lm_index(1, 1)].powi(2)).sqrt()
}

/// Solve for the CMC leaf with H ≡ −2/σ_target from `guess`, default options.
pub fn solve_cmc(
    metric: &AmbientMetric,
    sigma_target: f64,
    guess: &EmbeddedSphere,
) -> Result<LeafSolution> {
    solve_cmc_with(metric, sigma_target, guess, &SolveOptions::default())
}

/// Solve for the CMC leaf with explicit options.
pub fn solve_cmc_with(
    metric: &AmbientMetric,
    sigma_target: f64,
    guess: &EmbeddedSphere,
    opts: &SolveOptions,
) -> Result<LeafSolution> {
    solve_cmc_core(metric, sigma_target, guess, opts, None).map(|(leaf, _)| leaf)
}

/// Core Newton solve; optionally seeded with a frozen Jacobian from a nearby
/// leaf. Returns the leaf and the stability operator assembled at the solution.
pub(crate) fn solve_cmc_core(
    metric: &AmbientMetric,
    sigma_target: f64,
    guess: &EmbeddedSphere,
    opts: &SolveOptions,
    init_jacobian: Option<StabilityOperator>,
) -> Result<(LeafSolution, StabilityOperator)> {
    if !(sigma_target > 0.0) {
        return Err(Error::config("cmc_solver", "solve_cmc", "σ_target must be positive"));
    }
    let grid = guess.grid().clone();
    let target = -2.0 / sigma_target;
    let tol = opts.tol_factor / (sigma_target * sigma_target) + opts.tol_abs;

    let mut sphere = guess.clone();
    let mut geom = geometry(metric, &sphere)?;
    let mut res = eval_residual(&geom, &grid, target);
    // Pre-scale the guess to the target mean-curvature radius (exact for flat
    // round spheres, a strong start elsewhere); keep it only if it helps.
    let sigma_guess = geom.mean_curvature_radius();
    if sigma_guess > 0.0 && (sigma_guess / sigma_target - 1.0).abs() > 1e-3 {
        let s = sigma_target / sigma_guess;
        if let Ok(scaled) = EmbeddedSphere::new(
            grid.clone(),
            sphere.center,
            sphere.base_radius * s,
            sphere.coeffs() * s,
        ) {
            if let Ok(sg) = geometry(metric, &scaled) {
                let sres = eval_residual(&sg, &grid, target);
                if sres.bl_sup < res.bl_sup {
                    sphere = scaled;
                    geom = sg;
                    res = sres;
                }
            }
        }
    }
    let mut jac = init_jacobian;
    let mut jac_fresh = false; // assembled at the current iterate
    let mut iters = 0usize;
    let mut history = vec![res.bl_sup];

    // Outer loop: Newton to tolerance, then recenter (pure reparametrization)
    // and re-polish until the degree-1 coefficients are negligible.
    for _round in 0..4 {
        while res.bl_sup > tol {
            if iters >= opts.max_iters {
                let tail: Vec<String> = history.iter().rev().take(6).rev().map(|r| format!("{r:.3e}")).collect();
                return Err(Error::solver(
                    "cmc_solver",
                    "solve_cmc",
                    format!(
                        "no convergence after {} iterations at σ = {sigma_target:.6} \
                         (band-limited residual history ... {}; tol = {tol:.3e})",
                        opts.max_iters,
                        tail.join(", ")
                    ),
                ));
            }
            if jac.is_none() {
                jac = Some(assemble_stability(&geom)?);
                jac_fresh = true;
            }
            let rhs = ScalarField::from_values(
                grid.clone(),
                DVector::from_fn(res.h.len(), |p, _| target - res.h[p]),
            )?;
            let delta = jac.as_ref().unwrap().solve(&rhs, target.abs())?;

            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let trial_coeffs = sphere.coeffs() + &delta * alpha;
                if let Ok(trial) = sphere.with_coeffs(trial_coeffs) {
                    if let Ok(tg) = geometry(metric, &trial) {
                        let tr = eval_residual(&tg, &grid, target);
                        if tr.bl_sup < res.bl_sup {
                            sphere = trial;
                            geom = tg;
                            res = tr;
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            iters += 1;
            if accepted {
                let rate = res.bl_sup / history.last().unwrap();
                history.push(res.bl_sup);
                // Slow linear contraction means the frozen Jacobian is stale;
                // force a fresh assembly at the new iterate (true Newton).
                if rate > 0.25 && !jac_fresh {
                    jac = None;
                }
                jac_fresh = false;
                continue;
            }
            if !jac_fresh {
                // Stalled on an old Jacobian: reassemble at the current iterate.
                jac = Some(assemble_stability(&geom)?);
                jac_fresh = true;
                continue;
            }
            let tail: Vec<String> = history.iter().rev().take(6).rev().map(|r| format!("{r:.3e}")).collect();
            return Err(Error::solver(
                "cmc_solver",
                "solve_cmc",
                format!(
                    "line search stalled at σ = {sigma_target:.6} after {iters} iterations \
                     (band-limited residual history ... {}; tol = {tol:.3e})",
                    tail.join(", ")
                ),
            ));
        }
        if l1_coeff_norm(&sphere) <= 1e-9 * sigma_target {
            break;
        }
        sphere = recenter(&sphere)?;
        geom = geometry(metric, &sphere)?;
        res = eval_residual(&geom, &grid, target);
        jac_fresh = false;
    }

    let sigma = geom.mean_curvature_radius();
    if !(sigma > 0.0) {
        return Err(Error::solver(
            "cmc_solver",
            "solve_cmc",
            format!("solved surface has non-positive mean-curvature radius {sigma:.3e}"),
        ));
    }

    // Diagnostics at the solution.
    let stab = if jac_fresh {
        jac.take().unwrap()
    } else {
        assemble_stability(&geom)?
    };
    let lambda_min = stab.lambda_min_meanfree()?;
    let (lapse, split) = lapse_from(&stab, sigma)?;
    let (cluster_idx, _) = stab.sys().translational_cluster(sigma)?;
    let mut trans_modes = Vec::with_capacity(cluster_idx.len());
    for &i in &cluster_idx {
        trans_modes.push(stab.sys().eigenfunction(i)?);
    }
    let deform_l2 = {
        let v = split.deform.values();
        stab.sys().dot_mu(v, v).sqrt()
    };
    let leaf = LeafSolution {
        sigma,
        newton_iters: iters,
        residual: res.bl_sup,
        residual_raw: res.raw_sup,
        lambda_min,
        lapse,
        lapse_mean: split.mean,
        lapse_trans_sup: split.trans.sup(),
        lapse_deform_l2: deform_l2,
        cluster: split.cluster,
        weird_window: split.weird_window,
        trans_modes,
        sphere,
        geom,
    };
    Ok((leaf, stab))
}

fn lapse_from(stab: &StabilityOperator, sigma: f64) -> Result<(ScalarField, PartSplit)> {
    let grid = stab.sys().grid().clone();
    let rhs = ScalarField::constant(grid.clone(), 2.0 / (sigma * sigma));
    let coeffs = stab.solve(&rhs, 2.0 / (sigma * sigma)).map_err(|e| {
        Error::solver("cmc_solver", "solve_lapse", format!("J singular for the lapse equation: {e}"))
    })?;
    let u = ScalarField::from_coeffs(grid, &coeffs)?;
    let split = split_parts(&u, stab.sys(), sigma)?;
    Ok((u, split))
}

/// Lapse u = J⁻¹(2/σ²) of the leaf through `sphere`, with its part split.
pub fn solve_lapse(metric: &AmbientMetric, sphere: &EmbeddedSphere) -> Result<(ScalarField, PartSplit)> {
    let geom = geometry(metric, sphere)?;
    let stab = assemble_stability(&geom)?;
    lapse_from(&stab, geom.mean_curvature_radius())
}

/// Continuation policy for [`trace_foliation`].
#[derive(Clone, Debug)]
pub struct TracePolicy {
    /// Round-guess center for the first leaf.
    pub center: [f64; 3],
    /// Initial step as a fraction of σ.
    pub init_step_frac: f64,
    /// Step caps as fractions of σ.
    pub step_min_frac: f64,
    pub step_max_frac: f64,
    /// Consecutive Newton failures tolerated (each halves the step).
    pub max_halvings: usize,
    /// A solve with at most this many iterations counts as easy.
    pub easy_iters: usize,
    /// Consecutive easy solves before the step doubles.
    pub grow_after: usize,
    pub solve: SolveOptions,
}

impl Default for TracePolicy {
    fn default() -> Self {
        TracePolicy {
            center: [0.0; 3],
            init_step_frac: 0.05,
            step_min_frac: 0.01,
            step_max_frac: 0.25,
            max_halvings: 6,
            easy_iters: 6,
            grow_after: 2,
            solve: SolveOptions::default(),
        }
    }
}

/// A σ-ascending family of CMC leaves.
pub struct Foliation {
    pub leaves: Vec<LeafSolution>,
    /// Populated when continuation aborted early; leaves hold the partial trace.
    pub aborted: Option<String>,
}

impl Foliation {
    /// Minimum radial separation between consecutive leaves (rays from the
    /// inner leaf's center); positive ⇔ pairwise disjoint.
    pub fn min_separation(&self) -> Result<f64> {
        let mut min_gap = f64::INFINITY;
        for w in self.leaves.windows(2) {
            let (inner, outer) = (&w[0], &w[1]);
            let grid = inner.sphere.grid();
            let outer_radii = ray_radii(&outer.sphere, &inner.sphere.center, grid)?;
            for p in 0..grid.n_points() {
                let inner_r = inner.sphere.base_radius + inner.sphere.radial().values()[p];
                min_gap = min_gap.min(outer_radii[p] - inner_r);
            }
        }
        Ok(min_gap)
    }

    /// One JSON object per leaf, one per line.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for leaf in &self.leaves {
            let line = serde_json::to_string(&leaf.record())
                .map_err(|e| Error::analysis("cmc_solver", "write_jsonl", e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::analysis("cmc_solver", "write_jsonl", e.to_string()))?;
        }
        Ok(())
    }

    /// Deterministic CSV body (σ, R_A, m_H, λ_min, ū, ‖u^t‖_∞, residual, iters).
    pub fn csv_body(&self) -> String {
        let mut s = String::from("sigma,area_radius,hawking,lambda_min,lapse_mean,lapse_trans_sup,residual,newton_iters\n");
        for leaf in &self.leaves {
            let r = leaf.record();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.sigma, r.area_radius, r.hawking, r.lambda_min, r.lapse_mean, r.lapse_trans_sup, r.residual, r.newton_iters
            ));
        }
        s
    }
}

/// Trace the CMC foliation over [σ_min, σ_max] by adaptive continuation.
pub fn trace_foliation(
    metric: &AmbientMetric,
    sigma_min: f64,
    sigma_max: f64,
    policy: &TracePolicy,
    grid: std::sync::Arc<SphereGrid>,
) -> Result<Foliation> {
    if !(sigma_min > 0.0 && sigma_max > sigma_min) {
        return Err(Error::config(
            "cmc_solver",
            "trace_foliation",
            format!("need 0 < σ_min < σ_max, got [{sigma_min}, {sigma_max}]"),
        ));
    }
    let guess = EmbeddedSphere::round(grid, policy.center, sigma_min)?;
    let (first, mut stab) = solve_cmc_core(metric, sigma_min, &guess, &policy.solve, None)?;
    let mut leaves = vec![first];
    let mut sigma_prev = sigma_min;
    let mut step = sigma_min * policy.init_step_frac;
    let mut easy_streak = 0usize;
    let mut failures = 0usize;
    let mut aborted = None;

    while sigma_prev < sigma_max * (1.0 - 1e-12) {
        if failures == 0 {
            step = step.clamp(sigma_prev * policy.step_min_frac, sigma_prev * policy.step_max_frac);
        }
        let sigma_next = (sigma_prev + step).min(sigma_max);
        let prev = leaves.last().unwrap();
        let scale = sigma_next / sigma_prev;
        let guess = match EmbeddedSphere::new(
            prev.sphere.grid().clone(),
            prev.sphere.center,
            prev.sphere.base_radius * scale,
            prev.sphere.coeffs() * scale,
        ) {
            Ok(g) => g,
            Err(e) => {
                aborted = Some(format!("guess construction failed at σ = {sigma_next:.6}: {e}"));
                break;
            }
        };
        match solve_cmc_core(metric, sigma_next, &guess, &policy.solve, Some(stab)) {
            Ok((leaf, new_stab)) => {
                stab = new_stab;
                if leaf.newton_iters <= policy.easy_iters {
                    easy_streak += 1;
                    if easy_streak >= policy.grow_after {
                        step *= 2.0;
                        easy_streak = 0;
                    }
                } else {
                    easy_streak = 0;
                }
                failures = 0;
                sigma_prev = sigma_next;
                leaves.push(leaf);
            }
            Err(e) => {
                failures += 1;
                easy_streak = 0;
                if failures > policy.max_halvings {
                    aborted = Some(format!("σ = {sigma_next:.6} failed after {} step halvings: {e}", policy.max_halvings));
                    break;
                }
                step *= 0.5;
                // Newton failure consumed the frozen Jacobian; reassemble from
                // the last good leaf.
                stab = assemble_stability(&leaves.last().unwrap().geom)?;
            }
        }
    }
    Ok(Foliation { leaves, aborted })
}
