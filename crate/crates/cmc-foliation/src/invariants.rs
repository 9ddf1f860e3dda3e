//! Mass and momentum functionals: Hawking mass, ADM mass by metric-derivative
//! and curvature fluxes, the extrapolated Hawking-mass limit, ADM and CMC
//! linear momentum, and the σ-derivative property residuals of a traced
//! foliation.
//!
//! Extrapolated limits assume the model m(s) = m + b/s + c/s² + … and use a
//! Neville tableau in 1/s over a geometric ladder of samples (ratio ≈ 2 per
//! rung), so each added rung cancels one more term of the expansion. The
//! reported uncertainty is the spread of the last two tableau diagonals.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::ambient::{AmbientMetric, InitialDataSet, Point};
use crate::cmc_solver::{Foliation, LeafSolution};
use crate::sphere_spectral::{ScalarField, SphereGrid, FOUR_PI};
use crate::surface_geometry::{geometry, EmbeddedSphere, SurfaceGeometry};
use crate::{Error, Result};

/// Hawking mass m_H = √(|M|/16π)·(1 − (1/16π)∮H² dμ) of an evaluated surface.
pub fn hawking_mass(geom: &SurfaceGeometry) -> f64 {
    geom.hawking_mass()
}

/// ADM mass by the metric-derivative flux
/// (1/16π) Σ_j ∮_{S_r} (∂_j ḡ_ij − ∂_i ḡ_jj) ν^i dμ
/// over the coordinate sphere of radius `r`.
///
/// The co-normal is the coordinate radial direction x_i/r with its index
/// raised by ḡ⁻¹, and dμ is the induced measure. The two non-flat factors
/// cancel exactly for conformally flat metrics, which keeps the finite-radius
/// value stable across conventions (any other pairing differs only at the
/// order at which the flux itself converges).
pub fn adm_mass_flux(metric: &AmbientMetric, r: f64, grid: Arc<SphereGrid>) -> Result<f64> {
    let sphere = EmbeddedSphere::round(grid, [0.0; 3], r)?;
    let geom = geometry(metric, &sphere)?;
    let mut flux = 0.0;
    for p in 0..geom.n_points() {
        let x = geom.position[p];
        let jet = metric.jet(&x)?;
        let ginv = &geom.ginv_amb[p];
        let mut v = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                v[i] += jet.dg[j][i][j] - jet.dg[i][j][j];
            }
        }
        let mut contracted = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                contracted += v[i] * ginv[i][j] * x[j] / r;
            }
        }
        flux += contracted * geom.dmu[p];
    }
    Ok(flux / (16.0 * PI))
}

/// ADM mass by the curvature flux −r/(8π) ∮_{S_r} (Ric̄(ν,ν) − Sc̄/2) dμ on
/// the coordinate sphere of radius `r` (ν the outward ḡ-unit normal).
pub fn adm_mass_ricci(metric: &AmbientMetric, r: f64, grid: Arc<SphereGrid>) -> Result<f64> {
    let sphere = EmbeddedSphere::round(grid, [0.0; 3], r)?;
    let geom = geometry(metric, &sphere)?;
    let mut total = 0.0;
    for p in 0..geom.n_points() {
        total += (geom.ric_nn[p] - 0.5 * geom.scal_amb[p]) * geom.dmu[p];
    }
    Ok(-r / (8.0 * PI) * total)
}

/// Neville tableau extrapolating samples (t_k, v_k), coarse t first, to t = 0.
/// Returns the diagonal sequence (value after 1, 2, … points).
fn neville_diagonal(points: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    let mut tableau = vec![vec![0.0; n]; n];
    let mut diag = Vec::with_capacity(n);
    for i in 0..n {
        tableau[i][0] = points[i].1;
        for j in 1..=i {
            let ti = points[i].0;
            let tij = points[i - j].0;
            tableau[i][j] = (tij * tableau[i][j - 1] - ti * tableau[i - 1][j - 1]) / (tij - ti);
        }
        diag.push(tableau[i][i]);
    }
    diag
}

/// Extrapolate (s, value) samples to s → ∞: pick a halving ladder from the
/// outermost sample inward (at most 6 rungs), run Neville in 1/s, report the
/// last diagonal with the spread of the final two diagonals as uncertainty.
fn richardson_limit(samples: &[(f64, f64)], operation: &'static str) -> Result<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 * b.0.abs());
    let n = sorted.len();
    if n < 4 || sorted[n - 1].0 < 4.0 * sorted[0].0 {
        return Err(Error::analysis(
            "invariants",
            operation,
            format!(
                "extrapolation needs ≥ 4 samples spanning a factor ≥ 4, got {n} over [{:.4}, {:.4}]",
                sorted.first().map(|s| s.0).unwrap_or(f64::NAN),
                sorted.last().map(|s| s.0).unwrap_or(f64::NAN),
            ),
        ));
    }
    let mut rungs = vec![sorted[n - 1]];
    let mut target = sorted[n - 1].0 / 2.0;
    for &(s, v) in sorted[..n - 1].iter().rev() {
        if s <= target * 1.05 {
            rungs.push((s, v));
            target = s / 2.0;
            if rungs.len() == 6 {
                break;
            }
        }
    }
    if rungs.len() < 6 && rungs.last().unwrap().0 > 1.4 * sorted[0].0 {
        rungs.push(sorted[0]);
    }
    rungs.reverse(); // coarse (small s, large t) first
    let points: Vec<(f64, f64)> = rungs.iter().map(|&(s, v)| (1.0 / s, v)).collect();
    let diag = neville_diagonal(&points);
    let value = *diag.last().unwrap();
    let uncertainty = (value - diag[diag.len() - 2]).abs();
    Ok((value, uncertainty))
}

/// Richardson-extrapolated limit of the per-leaf Hawking mass; the second
/// component is the spread of the last two extrapolants.
pub fn hawking_limit_mass(fol: &Foliation) -> Result<(f64, f64)> {
    let samples: Vec<(f64, f64)> =
        fol.leaves.iter().map(|l| (l.sigma, l.geom.hawking_mass())).collect();
    richardson_limit(&samples, "hawking_limit_mass")
}

/// ADM linear momentum p_i = (8π)⁻¹ ∮_{S_r} (H̄ ν_i − K(ν, e_i)) dμ with
/// H̄ = tr_ḡ K on the coordinate sphere of radius `r`; ν is the outward
/// ḡ-unit normal (lowered with ḡ in the first term) and dμ the induced
/// measure.
pub fn adm_linear_momentum(data: &InitialDataSet, r: f64, grid: Arc<SphereGrid>) -> Result<[f64; 3]> {
    let sphere = EmbeddedSphere::round(grid, [0.0; 3], r)?;
    let geom = geometry(&data.metric, &sphere)?;
    let mut p = [0.0; 3];
    for q in 0..geom.n_points() {
        let x = geom.position[q];
        let (k, _) = data.extrinsic.k_jet(&x);
        let nu = geom.normal[q];
        let g = &geom.g_amb[q];
        let ginv = &geom.ginv_amb[q];
        let mut hbar = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                hbar += ginv[i][j] * k[i][j];
            }
        }
        for i in 0..3 {
            let mut nu_low = 0.0;
            let mut k_nu = 0.0;
            for j in 0..3 {
                nu_low += g[i][j] * nu[j];
                k_nu += k[i][j] * nu[j];
            }
            p[i] += (hbar * nu_low - k_nu) * geom.dmu[q];
        }
    }
    for pi in &mut p {
        *pi /= 8.0 * PI;
    }
    Ok(p)
}

/// CMC linear momentum of one leaf.
#[derive(Clone)]
pub struct CmcMomentum {
    pub sigma: f64,
    /// (3/(4πσ³)) ∮ p̃_σ x̄_i dμ — the characterization's vector extraction.
    pub vector: [f64; 3],
    /// Coefficients ⟨p̃_σ, φ_a⟩ on the L²-orthonormal translational modes.
    pub coeffs: Vec<f64>,
    /// The momentum function p̃_σ itself.
    pub field: ScalarField,
}

/// Per-leaf CMC linear momentum
/// p̃_σ = (σ²/6)·trans(σ·div_σ(K(ν,·)) − σ·J(ν) + tr_σ K),
/// with div_σ and tr_σ the two-dimensional operators of the leaf. The
/// divergence is evaluated weakly — integrated by parts against each
/// translational eigenfunction — so continuous K suffices. The vector uses
/// the ambient Cartesian chart for x̄; pass constructed chart coordinates
/// through [`cmc_linear_momentum_with_chart`] when available.
pub fn cmc_linear_momentum(leaf: &LeafSolution, data: &InitialDataSet) -> Result<CmcMomentum> {
    cmc_linear_momentum_with_chart(leaf, data, &leaf.geom.position)
}

/// [`cmc_linear_momentum`] with explicit coordinates x̄ per node for the
/// vector extraction (e.g. from the constructed asymptotically flat chart).
pub fn cmc_linear_momentum_with_chart(
    leaf: &LeafSolution,
    data: &InitialDataSet,
    xbar: &[Point],
) -> Result<CmcMomentum> {
    if leaf.trans_modes.is_empty() {
        return Err(Error::analysis(
            "invariants",
            "cmc_linear_momentum",
            "translational eigenvalue cluster missing on this leaf",
        ));
    }
    let geom = &leaf.geom;
    let np = geom.n_points();
    if xbar.len() != np {
        return Err(Error::analysis(
            "invariants",
            "cmc_linear_momentum",
            format!("chart supplies {} samples for a leaf with {} nodes", xbar.len(), np),
        ));
    }
    let sigma = leaf.sigma;

    // Pointwise pieces: the tangential one-form V_I = K(X_I, ν), and the
    // zeroth-order part −σ·J(ν) + tr_σ K with tr_σ K = g^{IJ} K(X_I, X_J).
    let mut v_t = vec![0.0; np];
    let mut v_p = vec![0.0; np];
    let mut rest = vec![0.0; np];
    for p in 0..np {
        let x = geom.position[p];
        let (k, _) = data.extrinsic.k_jet(&x);
        let nu = geom.normal[p];
        let xt = geom.x_theta[p];
        let xp = geom.x_phi[p];
        let kv = |a: &Point, b: &Point| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += k[i][j] * a[i] * b[j];
                }
            }
            s
        };
        v_t[p] = kv(&xt, &nu);
        v_p[p] = kv(&xp, &nu);
        let tr = geom.ginv_tt[p] * kv(&xt, &xt)
            + 2.0 * geom.ginv_tp[p] * kv(&xt, &xp)
            + geom.ginv_pp[p] * kv(&xp, &xp);
        let jm = data.extrinsic.momentum_density(&x);
        let jn = jm[0] * nu[0] + jm[1] * nu[1] + jm[2] * nu[2];
        rest[p] = -sigma * jn + tr;
    }

    // ⟨F, φ_a⟩ with ∮ div(V) φ dμ = −∮ g^{IJ} V_I ∂_J φ dμ.
    let mut coeffs = Vec::with_capacity(leaf.trans_modes.len());
    for phi in &leaf.trans_modes {
        let pt = phi.d_theta();
        let pp = phi.d_phi();
        let mut c = 0.0;
        for p in 0..np {
            let grad_t = geom.ginv_tt[p] * pt.values()[p] + geom.ginv_tp[p] * pp.values()[p];
            let grad_p = geom.ginv_tp[p] * pt.values()[p] + geom.ginv_pp[p] * pp.values()[p];
            let weak_div = -(v_t[p] * grad_t + v_p[p] * grad_p);
            c += (sigma * weak_div + rest[p] * phi.values()[p]) * geom.dmu[p];
        }
        coeffs.push(c * sigma * sigma / 6.0);
    }

    // Synthesize p̃_σ and extract the vector via (3/(4πσ³)) ∮ p̃_σ x̄_i dμ.
    let mut values = DVector::zeros(np);
    for (c, phi) in coeffs.iter().zip(&leaf.trans_modes) {
        values.axpy(*c, phi.values(), 1.0);
    }
    let field = ScalarField::from_values(leaf.sphere.grid().clone(), values)?;
    let mut vector = [0.0; 3];
    for p in 0..np {
        let w = field.values()[p] * geom.dmu[p];
        for i in 0..3 {
            vector[i] += w * xbar[p][i];
        }
    }
    let norm = 3.0 / (FOUR_PI * sigma.powi(3));
    for v in &mut vector {
        *v *= norm;
    }
    Ok(CmcMomentum { sigma, vector, coeffs, field })
}

/// One mass sample; `at` is σ for Hawking rows, the coordinate radius r for
/// ADM rows.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MassSample {
    pub at: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MassLimit {
    pub value: f64,
    pub uncertainty: f64,
}

/// Hawking, ADM-flux and ADM-Ricci mass tables with extrapolated limits.
#[derive(Clone, Debug, Serialize)]
pub struct MassReport {
    pub hawking: Vec<MassSample>,
    pub adm_flux: Vec<MassSample>,
    pub adm_ricci: Vec<MassSample>,
    pub hawking_limit: MassLimit,
    pub flux_limit: MassLimit,
    pub ricci_limit: MassLimit,
    /// Pairwise agreement of the three limits within 3·max(uncertainty).
    pub concordant: bool,
}

impl MassReport {
    /// Deterministic CSV body (σ or r, value, method).
    pub fn csv_body(&self) -> String {
        let mut s = String::from("at,value,method\n");
        for (rows, method) in [
            (&self.hawking, "hawking"),
            (&self.adm_flux, "adm_flux"),
            (&self.adm_ricci, "adm_ricci"),
        ] {
            for row in rows {
                s.push_str(&format!("{},{},{method}\n", row.at, row.value));
            }
        }
        s
    }
}

/// Evaluate all three mass characterizations: per-leaf Hawking masses from
/// `fol`, ADM fluxes at the given coordinate `radii`, and the extrapolated
/// limits of each family.
pub fn mass_report(
    metric: &AmbientMetric,
    fol: &Foliation,
    radii: &[f64],
    grid: Arc<SphereGrid>,
) -> Result<MassReport> {
    let hawking: Vec<MassSample> =
        fol.leaves.iter().map(|l| MassSample { at: l.sigma, value: l.geom.hawking_mass() }).collect();
    let mut adm_flux = Vec::with_capacity(radii.len());
    let mut adm_ricci = Vec::with_capacity(radii.len());
    for &r in radii {
        adm_flux.push(MassSample { at: r, value: adm_mass_flux(metric, r, grid.clone())? });
        adm_ricci.push(MassSample { at: r, value: adm_mass_ricci(metric, r, grid.clone())? });
    }
    let (hv, hu) = hawking_limit_mass(fol)?;
    let to_pairs = |v: &[MassSample]| v.iter().map(|s| (s.at, s.value)).collect::<Vec<_>>();
    let (fv, fu) = richardson_limit(&to_pairs(&adm_flux), "mass_report")?;
    let (rv, ru) = richardson_limit(&to_pairs(&adm_ricci), "mass_report")?;
    let hawking_limit = MassLimit { value: hv, uncertainty: hu };
    let flux_limit = MassLimit { value: fv, uncertainty: fu };
    let ricci_limit = MassLimit { value: rv, uncertainty: ru };
    let limits = [hawking_limit, flux_limit, ricci_limit];
    let scale = limits.iter().map(|l| l.value.abs()).fold(1.0, f64::max);
    let concordant = limits.iter().enumerate().all(|(i, a)| {
        limits[i + 1..].iter().all(|b| {
            let tol = 3.0 * a.uncertainty.max(b.uncertainty).max(1e-12 * scale);
            (a.value - b.value).abs() <= tol
        })
    });
    Ok(MassReport { hawking, adm_flux, adm_ricci, hawking_limit, flux_limit, ricci_limit, concordant })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentumRow {
    pub sigma: f64,
    pub cmc: [f64; 3],
    pub adm: [f64; 3],
    /// ‖cmc − adm‖₂.
    pub gap: f64,
}

/// Per-leaf CMC momentum vectors against a reference ADM flux value.
#[derive(Clone, Debug, Serialize)]
pub struct MomentumReport {
    /// Radius of the reference ADM flux sphere.
    pub adm_radius: f64,
    pub adm: [f64; 3],
    pub rows: Vec<MomentumRow>,
}

impl MomentumReport {
    /// Deterministic CSV body (σ, p₁..₃, adm₁..₃, gap).
    pub fn csv_body(&self) -> String {
        let mut s = String::from("sigma,p1,p2,p3,adm1,adm2,adm3,gap\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.sigma,
                row.cmc[0],
                row.cmc[1],
                row.cmc[2],
                row.adm[0],
                row.adm[1],
                row.adm[2],
                row.gap
            ));
        }
        s
    }
}

/// CMC momentum on every leaf of `fol` compared against the ADM flux at
/// radius `r`.
pub fn momentum_report(data: &InitialDataSet, fol: &Foliation, r: f64) -> Result<MomentumReport> {
    let first = fol
        .leaves
        .first()
        .ok_or_else(|| Error::analysis("invariants", "momentum_report", "foliation has no leaves"))?;
    let adm = adm_linear_momentum(data, r, first.sphere.grid().clone())?;
    let mut rows = Vec::with_capacity(fol.leaves.len());
    for leaf in &fol.leaves {
        let cmc = cmc_linear_momentum(leaf, data)?;
        let gap = (0..3).map(|i| (cmc.vector[i] - adm[i]).powi(2)).sum::<f64>().sqrt();
        rows.push(MomentumRow { sigma: leaf.sigma, cmc: cmc.vector, adm, gap });
    }
    Ok(MomentumReport { adm_radius: r, adm, rows })
}

/// Property residuals of one interior leaf (σ-derivatives by non-uniform
/// 3-point central differences on the traced grid).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PropertyRow {
    pub sigma: f64,
    /// Max over the translational cluster of |∮ K φ dμ| normalized by
    /// √(π/3)·|m_H|/σ²·‖φ‖_{L²}; `None` when |m_H| is too small to divide by
    /// (reported as n/a).
    pub a1: Option<f64>,
    /// The same statistic under the proof's √(16π/3) normalization (= a1/4).
    pub a1_proof: Option<f64>,
    /// |∂_σ|M_σ| − (2/σ)|M|(1 − m_H/σ)| / σ, the property as printed. On a
    /// Schwarzschild foliation this evaluates to ≈ 16π·m/σ — the mean lapse
    /// is 1 + m/σ + O(σ^{-3/2}), not 1 − m/σ — so it certifies the property
    /// only through its σ → ∞ decay, not by being small at desk scale.
    pub a2: f64,
    /// |∂_σ|M_σ| − (2/σ)|M|·ū| / σ: residual of the exact first-variation
    /// identity ∂_σ|M| = (2/σ)|M|ū, which the finite differences must
    /// reproduce to quadrature accuracy.
    pub a2_variation: f64,
    /// |∂_σ m_H|·σ.
    pub a3: f64,
    /// ||M| − 4πσ²(1 − 2m_H/σ)| / σ^{1/2}.
    pub lemma44_area: f64,
    /// |∂_σ m_H − 2(1 + m_H/σ − ū)|.
    pub lemma44_dm: f64,
}

/// Foliation-property residuals over the interior leaves.
#[derive(Clone, Debug, Serialize)]
pub struct PropertyResiduals {
    pub rows: Vec<PropertyRow>,
    /// Maxima over rows; `a1_max` is `None` when every row is n/a.
    pub a1_max: Option<f64>,
    pub a2_max: f64,
    pub a3_max: f64,
    /// a1_max < 1 certifies the eigenfunction property with margin
    /// η = 1 − a1_max.
    pub a1_certified: bool,
}

impl PropertyResiduals {
    /// Deterministic CSV body (σ, a1, a2, a3, lemma44_area, lemma44_dm); a1
    /// is `na` on leaves whose Hawking mass is too small to normalize.
    pub fn csv_body(&self) -> String {
        let mut s = String::from("sigma,a1,a2,a3,lemma44_area,lemma44_dm\n");
        for row in &self.rows {
            let a1 = row.a1.map_or_else(|| "na".to_string(), |v| v.to_string());
            s.push_str(&format!(
                "{},{a1},{},{},{},{}\n",
                row.sigma, row.a2, row.a3, row.lemma44_area, row.lemma44_dm
            ));
        }
        s
    }
}

/// Non-uniform 3-point central derivative at s0.
pub(crate) fn central_derivative(sm: f64, s0: f64, sp: f64, fm: f64, f0: f64, fp: f64) -> f64 {
    let h1 = s0 - sm;
    let h2 = sp - s0;
    -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp
}

/// Eigenfunction statistic of one leaf: max over the translational cluster of
/// |∮ K φ dμ| against the √(π/3)|m_H|/σ² normalizer (‖φ‖_{L²} = 1 by
/// construction). The printed property quantifies over eigenvalues in
/// (0, 3/σ²]; for a near-round leaf only the translational cluster lies in
/// that window.
fn a1_statistic(leaf: &LeafSolution, mh: f64) -> Result<(Option<f64>, Option<f64>)> {
    if mh.abs() <= 1e-8 * leaf.sigma {
        return Ok((None, None));
    }
    if leaf.trans_modes.is_empty() {
        return Err(Error::analysis(
            "invariants",
            "foliation_properties",
            "translational eigenvalue cluster missing on a leaf",
        ));
    }
    let gauss = leaf.geom.gauss_curvature();
    let mut worst = 0.0f64;
    for phi in &leaf.trans_modes {
        let mut integral = 0.0;
        for p in 0..leaf.geom.n_points() {
            integral += gauss.values()[p] * phi.values()[p] * leaf.geom.dmu[p];
        }
        worst = worst.max(integral.abs());
    }
    let display = worst * leaf.sigma * leaf.sigma / ((PI / 3.0).sqrt() * mh.abs());
    Ok((Some(display), Some(display / 4.0)))
}

/// Property residuals across a traced foliation; needs ≥ 3 leaves for the
/// central σ-differences.
pub fn foliation_properties(fol: &Foliation) -> Result<PropertyResiduals> {
    let n = fol.leaves.len();
    if n < 3 {
        return Err(Error::analysis(
            "invariants",
            "foliation_properties",
            format!("central σ-differences need ≥ 3 leaves, got {n}"),
        ));
    }
    let sigma: Vec<f64> = fol.leaves.iter().map(|l| l.sigma).collect();
    let area: Vec<f64> = fol.leaves.iter().map(|l| l.geom.area).collect();
    let mh: Vec<f64> = fol.leaves.iter().map(|l| l.geom.hawking_mass()).collect();
    let mut rows = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let leaf = &fol.leaves[k];
        let s = sigma[k];
        let d_area = central_derivative(sigma[k - 1], s, sigma[k + 1], area[k - 1], area[k], area[k + 1]);
        let d_mh = central_derivative(sigma[k - 1], s, sigma[k + 1], mh[k - 1], mh[k], mh[k + 1]);
        let ubar = leaf.lapse_mean;
        let (a1, a1_proof) = a1_statistic(leaf, mh[k])?;
        rows.push(PropertyRow {
            sigma: s,
            a1,
            a1_proof,
            a2: (d_area - 2.0 / s * area[k] * (1.0 - mh[k] / s)).abs() / s,
            a2_variation: (d_area - 2.0 / s * area[k] * ubar).abs() / s,
            a3: d_mh.abs() * s,
            lemma44_area: (area[k] - FOUR_PI * s * s * (1.0 - 2.0 * mh[k] / s)).abs() / s.sqrt(),
            lemma44_dm: (d_mh - 2.0 * (1.0 + mh[k] / s - ubar)).abs(),
        });
    }
    let a1_max = rows
        .iter()
        .filter_map(|r| r.a1)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let a2_max = rows.iter().map(|r| r.a2).fold(0.0, f64::max);
    let a3_max = rows.iter().map(|r| r.a3).fold(0.0, f64::max);
    let a1_certified = a1_max.is_some_and(|v| v < 1.0);
    Ok(PropertyResiduals { rows, a1_max, a2_max, a3_max, a1_certified })
}
