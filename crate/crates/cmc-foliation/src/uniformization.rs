//! Conformal uniformization of sphere metrics g = e^{2w}·g_std: the Gauss
//! curvature map, Möbius balancing of the conformal gauge, recovery of the
//! factor from near-constant curvature, and the planar bubble family.
//!
//! Every orientation-preserving conformal automorphism of S² factors as a
//! boost toward a point b of the open unit ball followed by a rotation, so the
//! [`MobiusMap`] family is closed under composition and inversion. Balancing
//! picks the boost that splits the measure of e^{2w} evenly across all three
//! coordinate hemispheres, which fixes the gauge left undetermined by the
//! curvature (the kernel of the linearized problem below).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::sphere_spectral::{
    eval_basis_at, gauss_legendre, index_lm, weighted_gram, ScalarField, SphereGrid,
};
use crate::{Error, Result};

/// Hemisphere-measure imbalance accepted as balanced, relative to μ(S²).
const BALANCE_TOL_REL: f64 = 1e-8;
/// Margin keeping the balancing measure away from the degenerate ends (0, 8π).
const MEASURE_DELTA: f64 = 1e-3;
/// Trust region of the curvature solver: ‖K − 1‖_{L²} beyond this is rejected.
const TRUST_RADIUS: f64 = 0.5;
/// L² residual at which the curvature Newton iteration stops.
const CURVATURE_TOL: f64 = 1e-11;
/// Stagnation below this residual counts as converged: roundoff through the
/// spectral Laplacian (multiplier ≈ 600 at the default band limit) floors the
/// achievable residual near 1e-10, still well inside every stated tolerance.
const CURVATURE_FLOOR: f64 = 1e-9;

/// Gauss–Legendre nodes per half-interval of cos θ in hemisphere quadrature.
const N_U_HALF: usize = 24;
/// Gauss–Legendre nodes across the full cos θ range.
const N_U_FULL: usize = 32;
/// Uniform longitude nodes for full-circle hemisphere quadrature.
const N_PHI_TRAP: usize = 64;
/// Gauss–Legendre nodes per half-circle of longitude.
const N_PHI_HALF: usize = 24;

fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Conformal automorphism of S²: p ↦ φ_b(R·p), where R is a rotation and φ_b
/// the boost toward b ∈ B³,
///
///   φ_b(p) = [(1 − |b|²)·p + 2(1 + b·p)·b] / (1 + 2 b·p + |b|²),
///
/// which pulls the round metric back to e^{2w_b}·g_std with the closed-form
/// factor w_b(p) = ln((1 − |b|²)/(1 + 2 b·p + |b|²)).
#[derive(Clone, Copy, Debug)]
pub struct MobiusMap {
    pub b: [f64; 3],
    pub rot: [[f64; 3]; 3],
}

impl MobiusMap {
    pub fn identity() -> Self {
        MobiusMap { b: [0.0; 3], rot: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Pure boost toward `b`; rejects parameters outside the open unit ball.
    pub fn boost(b: [f64; 3]) -> Result<Self> {
        if !(norm3(b) < 1.0) {
            return Err(Error::config(
                "uniformization",
                "mobius_apply",
                format!("boost parameter |b| = {:.6} must lie inside the open unit ball", norm3(b)),
            ));
        }
        Ok(MobiusMap { b, ..MobiusMap::identity() })
    }

    fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (0..3).map(|j| self.rot[i][j] * p[j]).sum())
    }

    /// Image of a point of S².
    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotate(p);
        let beta = self.b[0] * self.b[0] + self.b[1] * self.b[1] + self.b[2] * self.b[2];
        let s = self.b[0] * q[0] + self.b[1] * q[1] + self.b[2] * q[2];
        let den = 1.0 + 2.0 * s + beta;
        std::array::from_fn(|i| ((1.0 - beta) * q[i] + 2.0 * (1.0 + s) * self.b[i]) / den)
    }

    /// Conformal factor of the pullback of g_std: map*g_std = e^{2·factor}·g_std.
    /// Rotations are isometries, so only the boost contributes, at the rotated
    /// point.
    pub fn factor_at(&self, p: [f64; 3]) -> f64 {
        let q = self.rotate(p);
        let beta = self.b[0] * self.b[0] + self.b[1] * self.b[1] + self.b[2] * self.b[2];
        let s = self.b[0] * q[0] + self.b[1] * q[1] + self.b[2] * q[2];
        ((1.0 - beta) / (1.0 + 2.0 * s + beta)).ln()
    }

    /// Group inverse: (φ_b ∘ R)⁻¹ = φ_{−Rᵀb} ∘ Rᵀ, by equivariance of the
    /// boost family under rotations.
    pub fn inverse(&self) -> MobiusMap {
        let rt: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| self.rot[j][i]));
        let b: [f64; 3] = std::array::from_fn(|i| -(0..3).map(|j| rt[i][j] * self.b[j]).sum::<f64>());
        MobiusMap { b, rot: rt }
    }
}

/// Conformal factor w of a sphere metric g = e^{2w}·g_std.
#[derive(Clone)]
pub struct ConformalFactor {
    pub w: ScalarField,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    l_max: usize,
    coeffs: Vec<f64>,
}

impl ConformalFactor {
    pub fn new(w: ScalarField) -> Result<Self> {
        let f = ConformalFactor { w };
        let mu = f.measure();
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::analysis(
                "uniformization",
                "conformal_factor",
                format!("total measure {mu:.6e} is not a positive finite number"),
            ));
        }
        Ok(f)
    }

    /// Total measure ∫ e^{2w} dμ_std.
    pub fn measure(&self) -> f64 {
        self.w.map(|v| (2.0 * v).exp()).integral_round()
    }

    /// ∫ K e^{2w} dμ_std; equals 4π for every smooth factor (Gauss–Bonnet).
    pub fn gauss_bonnet(&self) -> f64 {
        let k = gauss_curvature_conformal(&self.w);
        k.zip(&self.w, |kv, wv| kv * (2.0 * wv).exp()).integral_round()
    }

    pub fn to_json(&self) -> String {
        let repr = FieldRepr {
            l_max: self.w.grid().l_max,
            coeffs: self.w.analyze().iter().copied().collect(),
        };
        serde_json::to_string(&repr).expect("factor serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        ConformalFactor::new(scalar_field_from_json(s)?)
    }
}

/// Serialize a field as its band-limited coefficient list.
pub fn scalar_field_to_json(f: &ScalarField) -> String {
    let repr =
        FieldRepr { l_max: f.grid().l_max, coeffs: f.analyze().iter().copied().collect() };
    serde_json::to_string(&repr).expect("field serialization cannot fail")
}

pub fn scalar_field_from_json(s: &str) -> Result<ScalarField> {
    let repr: FieldRepr = serde_json::from_str(s)
        .map_err(|e| Error::config("uniformization", "from_json", format!("bad field JSON: {e}")))?;
    let grid = SphereGrid::get(repr.l_max);
    if repr.coeffs.len() != grid.n_basis() {
        return Err(Error::config(
            "uniformization",
            "from_json",
            format!("coefficient count {} does not match l_max {}", repr.coeffs.len(), repr.l_max),
        ));
    }
    ScalarField::from_coeffs(grid, &DVector::from_vec(repr.coeffs))
}

/// Spectral Laplace–Beltrami of the band-limited projection on the unit round
/// sphere: coefficient-wise multiplication by −l(l+1).
fn laplace_std(f: &ScalarField) -> ScalarField {
    let mut c = f.analyze();
    for a in 0..c.len() {
        let (l, _) = index_lm(a);
        c[a] *= -((l * (l + 1)) as f64);
    }
    ScalarField::from_coeffs(f.grid().clone(), &c).expect("coefficient count matches grid")
}

/// Gauss curvature of g = e^{2w}·g_std: K = e^{−2w}(1 − Δ_std w).
pub fn gauss_curvature_conformal(w: &ScalarField) -> ScalarField {
    let lap = laplace_std(w);
    w.zip(&lap, |wv, lv| (-2.0 * wv).exp() * (1.0 - lv))
}

/// ‖f‖_{L²(dμ_std)} of the band-limited projection (coefficient 2-norm).
pub fn l2_norm(f: &ScalarField) -> f64 {
    f.analyze().norm()
}

/// Sobolev H² norm via the spectral multiplier (1 + λ_l + λ_l²)^{1/2},
/// λ_l = l(l+1).
pub fn h2_norm(f: &ScalarField) -> f64 {
    let c = f.analyze();
    let mut sum = 0.0;
    for a in 0..c.len() {
        let (l, _) = index_lm(a);
        let lam = (l * (l + 1)) as f64;
        sum += (1.0 + lam + lam * lam) * c[a] * c[a];
    }
    sum.sqrt()
}

/// Pull a conformal factor back along a Möbius map: the factor of
/// map*(e^{2w}·g_std) is w∘map + w_map. The two terms are combined pointwise
/// before the single band-limited projection, so near-cancelling pairs (for
/// example a bubble against its inverse boost) do not lose accuracy to
/// truncation.
pub fn mobius_apply(w: &ScalarField, map: &MobiusMap) -> Result<ConformalFactor> {
    if !(norm3(map.b) < 1.0) {
        return Err(Error::config(
            "uniformization",
            "mobius_apply",
            format!("boost parameter |b| = {:.6} must lie inside the open unit ball", norm3(map.b)),
        ));
    }
    let grid = w.grid().clone();
    let l_max = grid.l_max;
    let coeffs = w.analyze();
    let field = ScalarField::from_fn(grid, |theta, phi| {
        let p = unit_vector(theta, phi);
        let q = map.apply_point(p);
        let (qt, qp) = (q[2].clamp(-1.0, 1.0).acos(), q[1].atan2(q[0]));
        eval_basis_at(l_max, qt, qp).dot(&coeffs) + map.factor_at(p)
    });
    ConformalFactor::new(field)
}

/// One quadrature node of a hemisphere rule: colatitude, longitude, and a
/// weight already signed by which half of the axis the node lies in.
type HemiNode = (f64, f64, f64);

/// Product quadrature rules for the three signed hemisphere measures. The
/// integrand e^{2w} is analytic, never band-limited, so each hemisphere gets
/// its own rule with the discontinuity of sign(x_i) on a coordinate line:
/// Gauss–Legendre across cos θ, and either uniform longitudes (axis 3, where
/// the split is a latitude) or Gauss–Legendre on half-circles (axes 1 and 2,
/// where the split is a meridian). Convergence is geometric in the node count.
fn hemisphere_rules() -> [Vec<HemiNode>; 3] {
    let (gl_half, glw_half) = gauss_legendre(N_U_HALF);
    let (gl_full, glw_full) = gauss_legendre(N_U_FULL);
    let (gl_phi, glw_phi) = gauss_legendre(N_PHI_HALF);

    // Axis 3: u = cos θ over [0, 1] (+) and [−1, 0] (−), trapezoid in φ.
    let dphi = 2.0 * PI / N_PHI_TRAP as f64;
    let mut axis3 = Vec::with_capacity(2 * N_U_HALF * N_PHI_TRAP);
    for (sign, (lo, hi)) in [(1.0, (0.0, 1.0)), (-1.0, (-1.0, 0.0))] {
        for i in 0..N_U_HALF {
            let u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl_half[i];
            let wu = 0.5 * (hi - lo) * glw_half[i];
            let theta = u.acos();
            for k in 0..N_PHI_TRAP {
                axis3.push((theta, dphi * k as f64, sign * wu * dphi));
            }
        }
    }

    // Axes 1 and 2: full colatitude range, longitude split at a meridian.
    let meridian = |phi0: f64| -> Vec<HemiNode> {
        let mut rule = Vec::with_capacity(2 * N_U_FULL * N_PHI_HALF);
        for (sign, centre) in [(1.0, phi0), (-1.0, phi0 + PI)] {
            for i in 0..N_U_FULL {
                let theta = gl_full[i].acos();
                for j in 0..N_PHI_HALF {
                    let phi = centre + 0.5 * PI * gl_phi[j];
                    rule.push((theta, phi, sign * glw_full[i] * 0.5 * PI * glw_phi[j]));
                }
            }
        }
        rule
    };
    // x₁ > 0 ⇔ φ ∈ (−π/2, π/2); x₂ > 0 ⇔ φ ∈ (0, π).
    [meridian(0.0), meridian(0.5 * PI), axis3]
}

/// Signed hemisphere gaps μ({x_i > 0}) − μ({x_i < 0}) of e^{2·factor}, plus
/// the total measure (from the axis-3 rule, whose |weights| tile the sphere).
fn hemisphere_gaps(rules: &[Vec<HemiNode>; 3], factor: &dyn Fn(f64, f64) -> f64) -> ([f64; 3], f64) {
    let mut gaps = [0.0; 3];
    let mut total = 0.0;
    for (axis, rule) in rules.iter().enumerate() {
        for &(theta, phi, wq) in rule {
            let v = (2.0 * factor(theta, phi)).exp();
            gaps[axis] += wq * v;
            if axis == 2 {
                total += wq.abs() * v;
            }
        }
    }
    (gaps, total)
}

/// Möbius-balance a conformal factor: find the boost b for which every
/// coordinate hemisphere carries half the measure of the pulled-back factor
/// w∘φ_b + w_b, and return the map together with the balanced factor.
///
/// The three residuals are driven to |gap| ≤ 1e-8·μ(S²) by a damped Newton
/// iteration with a finite-difference Jacobian; the factor is evaluated
/// pointwise (never projected) inside the iteration.
pub fn balance(w: &ScalarField) -> Result<(MobiusMap, ConformalFactor)> {
    let l_max = w.grid().l_max;
    let coeffs = w.analyze();
    let rules = hemisphere_rules();

    let gaps_at = |b: [f64; 3]| -> ([f64; 3], f64) {
        let map = MobiusMap { b, ..MobiusMap::identity() };
        let factor = |theta: f64, phi: f64| -> f64 {
            let p = unit_vector(theta, phi);
            let q = map.apply_point(p);
            let (qt, qp) = (q[2].clamp(-1.0, 1.0).acos(), q[1].atan2(q[0]));
            eval_basis_at(l_max, qt, qp).dot(&coeffs) + map.factor_at(p)
        };
        hemisphere_gaps(&rules, &factor)
    };

    let mut b = [0.0; 3];
    let (mut gaps, total) = gaps_at(b);
    if !(total > MEASURE_DELTA && total < 8.0 * PI - MEASURE_DELTA) {
        return Err(Error::config(
            "uniformization",
            "balance",
            format!("total measure {total:.6e} outside the balanceable range ({MEASURE_DELTA:e}, 8π − {MEASURE_DELTA:e})"),
        ));
    }
    let tol = BALANCE_TOL_REL * total;

    for _iter in 0..50 {
        let res = Vector3::from_row_slice(&gaps);
        if res.norm() <= tol {
            let map = MobiusMap { b, ..MobiusMap::identity() };
            let factor = mobius_apply(w, &map)?;
            return Ok((map, factor));
        }
        // Central-difference Jacobian of the gaps in b.
        let h = 1e-6;
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let mut bp = b;
            let mut bm = b;
            bp[j] += h;
            bm[j] -= h;
            let (gp, _) = gaps_at(bp);
            let (gm, _) = gaps_at(bm);
            for i in 0..3 {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let step = jac.lu().solve(&(-res)).ok_or_else(|| {
            Error::solver("uniformization", "balance", "hemisphere Jacobian is singular")
        })?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let mut trial: [f64; 3] = std::array::from_fn(|i| b[i] + alpha * step[i]);
            let n = norm3(trial);
            if n >= 0.995 {
                let s = 0.985 / n;
                for t in &mut trial {
                    *t *= s;
                }
            }
            let (tg, _) = gaps_at(trial);
            if Vector3::from_row_slice(&tg).norm() < res.norm() {
                b = trial;
                gaps = tg;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::solver(
                "uniformization",
                "balance",
                format!(
                    "hemisphere balancing stalled at |b| = {:.4} with residual {:.3e} (tol {:.3e})",
                    norm3(b),
                    res.norm(),
                    tol
                ),
            ));
        }
    }
    Err(Error::solver(
        "uniformization",
        "balance",
        format!(
            "hemisphere balancing did not converge after 50 iterations (residual {:.3e}, tol {:.3e})",
            Vector3::from_row_slice(&gaps).norm(),
            tol
        ),
    ))
}

/// Recover the balanced conformal factor whose Gauss curvature matches
/// `k_target`: Newton iteration on w ↦ e^{−2w}(1 − Δw) − K with the
/// linearized operator v ↦ −e^{−2w}Δv − 2K(w)·v assembled in the spectral
/// basis. The operator's kernel at the round solution is the l = 1 triple, so
/// those components are projected out of every update and the gauge is
/// re-fixed by balancing each iteration.
pub fn recover_conformal_factor(k_target: &ScalarField) -> Result<ConformalFactor> {
    let grid = k_target.grid().clone();
    let nb = grid.n_basis();
    let dev = l2_norm(&k_target.map(|v| v - 1.0));
    if dev > TRUST_RADIUS {
        return Err(Error::analysis(
            "uniformization",
            "recover_conformal_factor",
            format!("‖K − 1‖_L² = {dev:.4} exceeds the solver trust region {TRUST_RADIUS}"),
        ));
    }

    let keep: Vec<usize> = (0..nb).filter(|a| !matches!(index_lm(*a).0, 1)).collect();
    let lam: Vec<f64> = (0..nb).map(|a| (index_lm(a).0 * (index_lm(a).0 + 1)) as f64).collect();
    let basis = grid.basis();
    let wq = grid.weights();
    let np = grid.n_points();

    let mut w = ScalarField::constant(grid.clone(), 0.0);
    let mut res_l2 = f64::INFINITY;
    for iter in 0..30 {
        let k_cur = gauss_curvature_conformal(&w);
        let r = k_cur.sub(k_target);
        let new_res = l2_norm(&r);
        if new_res <= CURVATURE_TOL {
            return ConformalFactor::new(w);
        }
        if new_res > 0.5 * res_l2 && iter > 2 {
            if new_res <= CURVATURE_FLOOR {
                return ConformalFactor::new(w);
            }
            return Err(Error::analysis(
                "uniformization",
                "recover_conformal_factor",
                format!("residual stagnation at iteration {iter}: {new_res:.3e} after {res_l2:.3e}"),
            ));
        }
        res_l2 = new_res;

        // A_ab = λ_b·⟨Y_a, e^{−2w} Y_b⟩ − 2·⟨Y_a, K(w) Y_b⟩ on the round grid.
        let mut wexp = vec![0.0; np];
        let mut wk = vec![0.0; np];
        for p in 0..np {
            wexp[p] = (-2.0 * w.values()[p]).exp() * wq[p];
            wk[p] = k_cur.values()[p] * wq[p];
        }
        let g_exp = weighted_gram(basis, &wexp, basis);
        let g_k = weighted_gram(basis, &wk, basis);
        let mut a = DMatrix::zeros(nb, nb);
        for j in 0..nb {
            for i in 0..nb {
                a[(i, j)] = lam[j] * g_exp[(i, j)] - 2.0 * g_k[(i, j)];
            }
        }
        let a_red = a.select_rows(keep.iter()).select_columns(keep.iter());
        let rhs_full = r.analyze();
        let rhs_red = DVector::from_iterator(keep.len(), keep.iter().map(|&i| -rhs_full[i]));
        let v_red = a_red.lu().solve(&rhs_red).ok_or_else(|| {
            Error::analysis(
                "uniformization",
                "recover_conformal_factor",
                "linearized curvature operator is near-singular",
            )
        })?;
        let mut v = DVector::zeros(nb);
        for (slot, &idx) in keep.iter().enumerate() {
            v[idx] = v_red[slot];
        }
        let updated = w.add(&ScalarField::from_coeffs(grid.clone(), &v)?);
        let (_, balanced) = balance(&updated)?;
        w = balanced.w;
    }
    Err(Error::analysis(
        "uniformization",
        "recover_conformal_factor",
        format!("no convergence after 30 iterations (residual {res_l2:.3e})"),
    ))
}

/// Planar bubble factor w̃(x) = ln(2λ/(λ² + |x − x₀|²)): the conformal factors
/// of curvature-1 metrics e^{2w̃}·δ on ℝ² with total measure 4π, satisfying
/// −Δw̃ = e^{2w̃} exactly.
#[derive(Clone, Copy, Debug)]
pub struct BubbleFactor {
    pub lambda: f64,
    pub x0: [f64; 2],
}

impl BubbleFactor {
    pub fn new(lambda: f64, x0: [f64; 2]) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::config(
                "uniformization",
                "bubble_transfer",
                format!("bubble scale λ = {lambda:.6e} must be positive"),
            ));
        }
        Ok(BubbleFactor { lambda, x0 })
    }

    /// The planar factor at x ∈ ℝ².
    pub fn planar(&self, x: [f64; 2]) -> f64 {
        let dx = [x[0] - self.x0[0], x[1] - self.x0[1]];
        (2.0 * self.lambda / (self.lambda * self.lambda + dx[0] * dx[0] + dx[1] * dx[1])).ln()
    }
}

/// Transfer a planar bubble to an S² conformal factor through stereographic
/// projection x = cot(θ/2)·(cos φ, sin φ). Writing t = tan(θ/2),
///
///   w = w̃(x) − ln(2/(1 + |x|²))
///     = ln λ + ln((t² + 1) / (t²(λ² + |x₀|²) − 2t·(x̂·x₀) + 1)),
///
/// a form that is smooth through the projection pole (w → ln λ as θ → 0).
/// The round bubble (λ = 1, x₀ = 0) is the zero factor.
pub fn bubble_transfer(grid: Arc<SphereGrid>, lambda: f64, x0: [f64; 2]) -> Result<ConformalFactor> {
    let bubble = BubbleFactor::new(lambda, x0)?;
    let field = ScalarField::from_fn(grid, |theta, phi| {
        let t = (0.5 * theta).tan();
        let (sp, cp) = phi.sin_cos();
        let dot = cp * bubble.x0[0] + sp * bubble.x0[1];
        let r0 = bubble.x0[0] * bubble.x0[0] + bubble.x0[1] * bubble.x0[1];
        let den = t * t * (bubble.lambda * bubble.lambda + r0) - 2.0 * t * dot + 1.0;
        bubble.lambda.ln() + ((t * t + 1.0) / den).ln()
    });
    ConformalFactor::new(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere_spectral::FOUR_PI;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<SphereGrid> {
        SphereGrid::get(24)
    }

    /// Y₂₀ = √(5/16π)·(3cos²θ − 1), the orthonormal convention of `analyze`.
    fn y20(g: Arc<SphereGrid>) -> ScalarField {
        ScalarField::from_fn(g, |theta, _| {
            (5.0 / (16.0 * PI)).sqrt() * (3.0 * theta.cos() * theta.cos() - 1.0)
        })
    }

    fn y10(g: Arc<SphereGrid>) -> ScalarField {
        ScalarField::from_fn(g, |theta, _| (3.0 / FOUR_PI).sqrt() * theta.cos())
    }

    #[test]
    fn zero_factor_has_unit_curvature() {
        let k = gauss_curvature_conformal(&ScalarField::constant(grid(), 0.0));
        assert!(k.map(|v| v - 1.0).sup() < 1e-12);
    }

    #[test]
    fn y20_curvature_linearization() {
        // K(ε·Y₂₀) = 1 + ε(λ₂ − 2)Y₂₀ + O(ε²) with λ₂ = 6: slope 4·Y₂₀.
        let eps = 1e-5;
        let w = y20(grid()).scale(eps);
        let k = gauss_curvature_conformal(&w);
        let slope = k.map(|v| (v - 1.0) / eps);
        let err = slope.sub(&y20(grid()).scale(4.0)).sup();
        assert!(err < 2e-4, "linearization error {err:.3e}");
        // Halving ε halves the quadratic remainder.
        let k2 = gauss_curvature_conformal(&y20(grid()).scale(eps / 2.0));
        let err2 = k2.map(|v| (v - 1.0) / (eps / 2.0)).sub(&y20(grid()).scale(4.0)).sup();
        assert!(err2 < 0.65 * err, "remainder not O(ε): {err:.3e} → {err2:.3e}");
    }

    #[test]
    fn mobius_factor_has_unit_curvature() {
        // The boost factor w_b uniformizes the round metric: K ≡ 1 exactly.
        let map = MobiusMap::boost([0.3, 0.0, 0.0]).unwrap();
        let wb = mobius_apply(&ScalarField::constant(grid(), 0.0), &map).unwrap();
        let k = gauss_curvature_conformal(&wb.w);
        assert!(k.map(|v| v - 1.0).sup() < 1e-9);
        assert!((wb.measure() - FOUR_PI).abs() < 1e-8, "measure {:.12}", wb.measure());
        assert!((wb.gauss_bonnet() - FOUR_PI).abs() < 1e-8);
    }

    #[test]
    fn mobius_identity_is_noop() {
        let w = y20(grid()).scale(0.2);
        let out = mobius_apply(&w, &MobiusMap::identity()).unwrap();
        assert!(out.w.sub(&w).sup() < 1e-12);
    }

    #[test]
    fn mobius_boost_outside_ball_rejected() {
        assert!(MobiusMap::boost([0.8, 0.6, 0.1]).is_err());
        let bad = MobiusMap { b: [1.2, 0.0, 0.0], ..MobiusMap::identity() };
        let err = mobius_apply(&ScalarField::constant(grid(), 0.0), &bad).err().unwrap();
        assert_eq!(err.kind, crate::ErrorKind::Config);
    }

    #[test]
    fn mobius_group_inverse_roundtrip() {
        // A boost composed with a rotation, undone by the conjugate inverse
        // b′ = −Rᵀb: the factor returns to within double-projection error.
        let (s, c) = 0.7f64.sin_cos();
        let map = MobiusMap {
            b: [0.25, -0.1, 0.2],
            rot: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        };
        let mut coeffs = DVector::zeros(grid().n_basis());
        coeffs[crate::sphere_spectral::lm_index(2, 0)] = 0.1;
        coeffs[crate::sphere_spectral::lm_index(3, 2)] = 0.05;
        coeffs[crate::sphere_spectral::lm_index(4, -1)] = 0.02;
        let w = ScalarField::from_coeffs(grid(), &coeffs).unwrap();
        let pulled = mobius_apply(&w, &map).unwrap();
        let back = mobius_apply(&pulled.w, &map.inverse()).unwrap();
        assert!(back.w.sub(&w).sup() < 1e-8, "roundtrip error {:.3e}", back.w.sub(&w).sup());
        // Measure is preserved along the way.
        assert!((pulled.measure() - ConformalFactor::new(w).unwrap().measure()).abs() < 1e-8);
    }

    #[test]
    fn balance_round_is_identity_and_idempotent() {
        let (map, factor) = balance(&ScalarField::constant(grid(), 0.0)).unwrap();
        assert!(norm3(map.b) < 1e-10, "spurious boost {:?}", map.b);
        assert!(factor.w.sup() < 1e-10);
        // Balancing a balanced factor stays at the identity.
        let (again, _) = balance(&factor.w).unwrap();
        assert!(norm3(again.b) < 1e-8);
    }

    #[test]
    fn balance_recovers_distorting_boost() {
        // w carries the distortion of φ_{0.4e₁}; the balancing boost must be
        // the inverse, −0.4e₁, and the balanced factor the zero factor.
        let distort = MobiusMap::boost([0.4, 0.0, 0.0]).unwrap();
        let w = mobius_apply(&ScalarField::constant(grid(), 0.0), &distort).unwrap();
        let (map, factor) = balance(&w.w).unwrap();
        let target = [-0.4, 0.0, 0.0];
        let err = norm3(std::array::from_fn(|i| map.b[i] - target[i]));
        assert!(err < 1e-6, "recovered boost {:?}", map.b);
        assert!(factor.w.sup() < 1e-6, "balanced factor sup {:.3e}", factor.w.sup());
    }

    #[test]
    fn balance_kills_degree_one_asymmetry() {
        let w = y10(grid()).scale(0.05);
        let (_, factor) = balance(&w).unwrap();
        let before = l2_norm(&w);
        let after = l2_norm(&factor.w);
        assert!(after <= 1.5 * before, "balanced norm grew: {before:.3e} → {after:.3e}");
        // The l = 1 content cancels at linear order, leaving O(‖w‖²).
        let c = factor.w.analyze();
        let l1 = (c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
        assert!(l1 < 0.01, "residual degree-1 coefficient {l1:.3e}");
    }

    #[test]
    fn bubble_round_is_zero_factor() {
        let f = bubble_transfer(grid(), 1.0, [0.0, 0.0]).unwrap();
        assert!(f.w.sup() < 1e-12);
        assert!(BubbleFactor::new(0.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn bubble_satisfies_liouville_and_curvature() {
        // −Δw̃ = e^{2w̃} on planar samples (five-point stencil), K ≡ 1 and
        // measure 4π after the stereographic transfer.
        let bubble = BubbleFactor::new(1.5, [0.3, -0.2]).unwrap();
        for x in [[0.5, -0.3], [2.0, 1.0], [-0.7, 0.1]] {
            let h = 1e-3;
            let lap = (bubble.planar([x[0] + h, x[1]])
                + bubble.planar([x[0] - h, x[1]])
                + bubble.planar([x[0], x[1] + h])
                + bubble.planar([x[0], x[1] - h])
                - 4.0 * bubble.planar(x))
                / (h * h);
            let rhs = (2.0 * bubble.planar(x)).exp();
            assert!((lap + rhs).abs() < 1e-5, "Liouville residual {:.3e} at {x:?}", lap + rhs);
        }
        for (lambda, x0) in [(1.5, [0.3, -0.2]), (2.0, [0.0, 0.0])] {
            let f = bubble_transfer(grid(), lambda, x0).unwrap();
            let k = gauss_curvature_conformal(&f.w);
            assert!(k.map(|v| v - 1.0).sup() < 1e-8, "bubble ({lambda}, {x0:?}) curvature");
            assert!((f.measure() - FOUR_PI).abs() < 1e-8, "bubble ({lambda}, {x0:?}) measure");
        }
    }

    #[test]
    fn bubble_balances_to_round() {
        // Bubbles are Möbius images of the round factor, so balancing must
        // flatten even a strongly concentrated one.
        let f = bubble_transfer(grid(), 3.0, [1.0, 0.0]).unwrap();
        let (map, factor) = balance(&f.w).unwrap();
        assert!(factor.w.sup() < 1e-6, "balanced bubble sup {:.3e}", factor.w.sup());
        assert!(norm3(map.b) > 0.5, "bubble boost unexpectedly small: {:?}", map.b);
    }

    #[test]
    fn recover_unit_curvature_is_zero() {
        let w = recover_conformal_factor(&ScalarField::constant(grid(), 1.0)).unwrap();
        assert!(w.w.sup() < 1e-10);
    }

    #[test]
    fn recover_y20_target() {
        // K = 1 + 0.2·Y₂₀: the linearization (−Δ−2)w = K − 1 gives
        // w = 0.2/(λ₂−2)·Y₂₀ = 0.05·Y₂₀, corrected at O(0.2²).
        let k_target = y20(grid()).scale(0.2).map(|v| v + 1.0);
        let rec = recover_conformal_factor(&k_target).unwrap();
        let residual = gauss_curvature_conformal(&rec.w).sub(&k_target).sup();
        assert!(residual < 1e-9, "curvature residual {residual:.3e}");
        let dev = l2_norm(&rec.w.sub(&y20(grid()).scale(0.05)));
        assert!(dev < 0.014, "second-order deviation {dev:.3e}");
        let c = rec.w.analyze();
        let l1 = (c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
        assert!(l1 < 1e-9, "degree-1 content {l1:.3e}");
        assert!((rec.gauss_bonnet() - FOUR_PI).abs() < 1e-8);
    }

    #[test]
    fn recover_roundtrips_balanced_factor() {
        // recover ∘ gauss_curvature = identity on balanced small factors.
        let mut coeffs = DVector::zeros(grid().n_basis());
        coeffs[crate::sphere_spectral::lm_index(2, 0)] = 0.015;
        coeffs[crate::sphere_spectral::lm_index(3, 1)] = 0.008;
        coeffs[crate::sphere_spectral::lm_index(4, 2)] = 0.004;
        let raw = ScalarField::from_coeffs(grid(), &coeffs).unwrap();
        let (_, balanced) = balance(&raw).unwrap();
        assert!(h2_norm(&balanced.w) < 0.2, "fixture outside the roundtrip regime");
        let k = gauss_curvature_conformal(&balanced.w);
        let rec = recover_conformal_factor(&k).unwrap();
        let err = h2_norm(&rec.w.sub(&balanced.w));
        assert!(err < 1e-8, "roundtrip H² error {err:.3e}");
    }

    #[test]
    fn recover_rejects_far_targets() {
        let k = y20(grid()).scale(0.8).map(|v| v + 1.0);
        let err = recover_conformal_factor(&k).err().unwrap();
        assert_eq!(err.kind, crate::ErrorKind::Analysis);
        assert!(err.message.contains("trust region"), "unexpected message: {}", err.message);
    }

    #[test]
    fn linear_estimate_constant_over_random_fields() {
        // ‖w‖_{H²} ≤ C·‖K − 1‖_{L²} over seeded random balanced factors, with
        // the single fitted C bounded by 1.5× the exact constant of the
        // linearization: the H²/L² norm of (−Δ−2)⁻¹ off its kernel, attained
        // at l = 2 with value √(1+λ₂+λ₂²)/(λ₂−2) = √43/4 ≈ 1.6394.
        let kappa = 43.0f64.sqrt() / 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut ratios = Vec::new();
        for draw in 0..10 {
            let mut coeffs = DVector::zeros(grid().n_basis());
            for l in [0usize, 2, 3, 4, 5, 6] {
                for m in -(l as isize)..=(l as isize) {
                    let lam = (l * (l + 1)) as f64;
                    coeffs[crate::sphere_spectral::lm_index(l, m)] =
                        rng.random_range(-1.0..1.0) / (1.0 + lam);
                }
            }
            let raw = ScalarField::from_coeffs(grid(), &coeffs).unwrap();
            let target = 0.03 + 0.007 * draw as f64;
            let kdev = l2_norm(&gauss_curvature_conformal(&raw).map(|v| v - 1.0));
            let (_, balanced) = balance(&raw.scale(target / kdev)).unwrap();
            let k = gauss_curvature_conformal(&balanced.w);
            let dev = l2_norm(&k.map(|v| v - 1.0));
            assert!(dev <= 0.12, "draw {draw} left the small-curvature regime: {dev:.3e}");
            let rec = recover_conformal_factor(&k).unwrap();
            assert!(h2_norm(&rec.w.sub(&balanced.w)) < 1e-7, "draw {draw} roundtrip");
            ratios.push(h2_norm(&rec.w) / dev);
        }
        let fitted = ratios.iter().fold(0.0f64, |a, &r| a.max(r));
        for (i, r) in ratios.iter().enumerate() {
            assert!(*r <= fitted + 1e-12, "draw {i} violates the fitted constant");
        }
        assert!(fitted <= 1.5 * kappa, "fitted C = {fitted:.4} above 1.5·κ = {:.4}", 1.5 * kappa);
        assert!(fitted >= 0.3, "fitted C = {fitted:.4} implausibly small");
    }

    #[test]
    fn factor_json_roundtrip() {
        let f = ConformalFactor::new(y20(grid()).scale(0.1)).unwrap();
        let s = f.to_json();
        let back = ConformalFactor::from_json(&s).unwrap();
        assert!(back.w.sub(&f.w).sup() < 1e-12);
        assert!(ConformalFactor::from_json("{\"l_max\": 4, \"coeffs\": [1.0]}").is_err());
    }
}
