//! The ten acceptance gates of the toolkit, exercised in one pass over shared
//! artifacts and reported one line each:
//!
//!   ACCEPTANCE n: PASS/FAIL — details
//!
//! Gate 5 is expected red and documented in the README: both halves of the
//! Hawking-mass identity are asymptotic statements whose fixed desk-scale
//! tolerances sit below the exact O(1) (area) and O(σ⁻²) (derivative) remainder
//! terms that a correct implementation must produce. The numbers printed here
//! are the measured remainders.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmc_foliation::ambient::{AmbientMetric, ExtrinsicData, InitialDataSet};
use cmc_foliation::cmc_solver::{
    apply_stability, assemble_stability, mean_curvature_map, solve_cmc, trace_foliation,
    Foliation, LeafSolution, TracePolicy,
};
use cmc_foliation::coordinate_builder::{
    build_chart, center_curve, eigenframe, flatness_verify, Chart, ChartSample, EigenFrame,
};
use cmc_foliation::invariants::{
    adm_linear_momentum, adm_mass_flux, adm_mass_ricci, cmc_linear_momentum, foliation_properties,
    hawking_limit_mass,
};
use cmc_foliation::sphere_spectral::{lm_index, split_parts, ScalarField, SphereGrid, FOUR_PI};
use cmc_foliation::surface_geometry::{geometry, EmbeddedSphere};
use cmc_foliation::uniformization::{
    balance, bubble_transfer, gauss_curvature_conformal, h2_norm, l2_norm,
    recover_conformal_factor, ConformalFactor,
};

const L_MAX: usize = 24;

struct Gate {
    n: usize,
    pass: bool,
    details: String,
}

fn grid() -> Arc<SphereGrid> {
    SphereGrid::get(L_MAX)
}

fn schwarzschild() -> AmbientMetric {
    AmbientMetric::Schwarzschild { mass: 1.0, center: [0.0; 3] }
}

fn solve_leaf(metric: &AmbientMetric, sigma: f64) -> LeafSolution {
    let guess = EmbeddedSphere::round(grid(), [0.0; 3], 0.95 * sigma).unwrap();
    solve_cmc(metric, sigma, &guess).unwrap()
}

fn kring_sup(leaf: &LeafSolution) -> f64 {
    (0..leaf.geom.n_points()).map(|p| leaf.geom.tracefree_norm(p)).fold(0.0f64, f64::max)
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Chart over the traced Schwarzschild foliation, restricted to σ ≥ σ_lo.
fn traced_chart(fol: &Foliation, sigma_lo: f64) -> Chart {
    let mut frames: Vec<EigenFrame> = Vec::with_capacity(fol.leaves.len());
    for leaf in &fol.leaves {
        frames.push(eigenframe(leaf, frames.last()).unwrap());
    }
    let centers = center_curve(fol, &frames).unwrap();
    let chart = build_chart(fol, &frames, &centers).unwrap();
    let keep: Vec<usize> =
        (0..chart.sigmas.len()).filter(|&k| chart.sigmas[k] >= sigma_lo).collect();
    let np = chart.n_per_leaf;
    Chart {
        sigmas: keep.iter().map(|&k| chart.sigmas[k]).collect(),
        n_per_leaf: np,
        samples: keep.iter().flat_map(|&k| chart.samples[k * np..(k + 1) * np].to_vec()).collect(),
    }
}

/// Analytic chart of the decay-τ counterexample family: round spheres in the
/// metric's own Cartesian coordinates, where ḡ(x̄) is exact.
fn counterexample_chart(metric: &AmbientMetric) -> Chart {
    let g = grid();
    let np = g.n_points();
    let sigmas = [25.0, 35.0, 50.0, 70.0, 100.0, 140.0, 200.0];
    let mut samples = Vec::with_capacity(sigmas.len() * np);
    for &s in &sigmas {
        for p in 0..np {
            let (theta, phi) = (g.theta(p), g.phi(p));
            let nu = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
            let xbar = [s * nu[0], s * nu[1], s * nu[2]];
            let gbar = metric.jet(&xbar).unwrap().g;
            samples.push(ChartSample { sigma: s, theta, phi, xbar, gbar });
        }
    }
    Chart { sigmas: sigmas.to_vec(), n_per_leaf: np, samples }
}

fn random_small_factor(rng: &mut ChaCha8Rng, target_kdev: f64) -> ConformalFactor {
    let mut coeffs = DVector::zeros(grid().n_basis());
    for l in [0usize, 2, 3, 4, 5, 6] {
        for m in -(l as isize)..=(l as isize) {
            let lam = (l * (l + 1)) as f64;
            coeffs[lm_index(l, m)] = rng.random_range(-1.0..1.0) / (1.0 + lam);
        }
    }
    let raw = ScalarField::from_coeffs(grid(), &coeffs).unwrap();
    let kdev = l2_norm(&gauss_curvature_conformal(&raw).map(|v| v - 1.0));
    let (_, balanced) = balance(&raw.scale(target_kdev / kdev)).unwrap();
    balanced
}

#[test]
fn acceptance_criteria() {
    let mut gates: Vec<Gate> = Vec::new();
    let mut gate = |n: usize, pass: bool, details: String| {
        gates.push(Gate { n, pass, details });
    };
    let metric = schwarzschild();

    // ---- 1. Schwarzschild exactness over the traced foliation ------------
    let t0 = Instant::now();
    let fol = trace_foliation(&metric, 20.0, 200.0, &TracePolicy::default(), grid()).unwrap();
    let trace_secs = t0.elapsed().as_secs_f64();
    let mh_dev = fol
        .leaves
        .iter()
        .map(|l| (l.geom.hawking_mass() - 1.0).abs())
        .fold(0.0f64, f64::max);
    let kring_max = fol.leaves.iter().map(kring_sup).fold(0.0f64, f64::max);
    gate(
        1,
        fol.aborted.is_none() && mh_dev <= 1e-7 && kring_max <= 1e-7 && trace_secs <= 60.0,
        format!(
            "{} leaves σ ∈ [20, 200]; max |m_H − 1| = {mh_dev:.2e}, max ‖k̊‖_∞ = {kring_max:.2e}, trace {trace_secs:.1} s",
            fol.leaves.len()
        ),
    );

    // ---- 2. Mass concordance ---------------------------------------------
    let flux100 = adm_mass_flux(&metric, 100.0, grid()).unwrap();
    let ricci100 = adm_mass_ricci(&metric, 100.0, grid()).unwrap();
    let (hlim, hunc) = hawking_limit_mass(&fol).unwrap();
    let gap = |r: f64| {
        (adm_mass_flux(&metric, r, grid()).unwrap() - adm_mass_ricci(&metric, r, grid()).unwrap())
            .abs()
    };
    let (g100, g200, g400) = (gap(100.0), gap(200.0), gap(400.0));
    let halving = |a: f64, b: f64| (0.40..=0.60).contains(&(b / a));
    gate(
        2,
        (flux100 - 1.0).abs() <= 0.02
            && (ricci100 - 1.0).abs() <= 0.02
            && (hlim - 1.0).abs() <= 0.02
            && halving(g100, g200)
            && halving(g200, g400),
        format!(
            "flux(100) = {flux100:.5}, ricci(100) = {ricci100:.5}, hawking_limit = {hlim:.6} ± {hunc:.1e}; \
             flux–ricci gaps {g100:.2e} → {g200:.2e} → {g400:.2e} (ratios {:.3}, {:.3})",
            g200 / g100,
            g400 / g200
        ),
    );

    // ---- 3. Stability spectrum at σ = 50 -----------------------------------
    let leaf50 = solve_leaf(&metric, 50.0);
    let stab = assemble_stability(&leaf50.geom).unwrap();
    let mut eigs: Vec<f64> = stab.eigen().unwrap().values.iter().copied().collect();
    eigs.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    let target = 6.0 / 50.0f64.powi(3);
    let trans_ok = eigs[..3].iter().all(|l| (l - target).abs() <= 0.10 * target);
    let window = leaf50.cluster.len() == 3
        && !leaf50.weird_window
        && leaf50.cluster.iter().all(|l| (l - 2.0 / 2500.0).abs() <= 1.0 / 2500.0);
    gate(
        3,
        trans_ok && window,
        format!(
            "three −J eigenvalues nearest 0: {:.5e}, {:.5e}, {:.5e} (target 6m/σ³ = {target:.5e} ± 10%); \
             Laplace window holds {} modes",
            eigs[0],
            eigs[1],
            eigs[2],
            leaf50.cluster.len()
        ),
    );

    // ---- 4. Lapse asymptotics ----------------------------------------------
    let leaf100 = solve_leaf(&metric, 100.0);
    let leaf200 = solve_leaf(&metric, 200.0);
    let mut lapse_ok = true;
    let mut lapse_details = Vec::new();
    for leaf in [&leaf50, &leaf100, &leaf200] {
        let s = leaf.sigma;
        let dev = (leaf.lapse_mean - 1.0 - 1.0 / s).abs();
        lapse_ok &= dev <= 0.2 / s && leaf.lapse_trans_sup <= 1e-4;
        lapse_details.push(format!(
            "σ = {s:.0}: ū = {:.7} (|ū−1−m/σ| = {dev:.1e} ≤ {:.1e}), ‖u^t‖_∞ = {:.1e}",
            leaf.lapse_mean,
            0.2 / s,
            leaf.lapse_trans_sup
        ));
    }
    gate(4, lapse_ok, lapse_details.join("; "));

    // ---- 5. Hawking-mass identities (expected red: asymptotic remainders) --
    let props = foliation_properties(&fol).unwrap();
    let area_max = props.rows.iter().map(|r| r.lemma44_area).fold(0.0f64, f64::max);
    let dm_max = props.rows.iter().map(|r| r.lemma44_dm).fold(0.0f64, f64::max);
    let dm_pass_from = props
        .rows
        .iter()
        .filter(|r| r.lemma44_dm > 1e-3)
        .map(|r| r.sigma)
        .fold(0.0f64, f64::max);
    gate(
        5,
        area_max <= 1e-3 && dm_max <= 1e-3,
        format!(
            "max ||M|−4πσ²(1−2m_H/σ)|/σ^½ = {area_max:.3} (tol 1e-3; the exact remainder is \
             −8πm²(1+5m/2σ)/σ^½ ≈ {:.2} at σ = 20) and max |∂_σm_H − 2(1+m_H/σ−ū)| = {dm_max:.1e} \
             (tol 1e-3; ≤ tol only for σ > {dm_pass_from:.0})",
            8.0 * std::f64::consts::PI * (1.0 + 5.0 / 40.0) / 20.0f64.sqrt()
        ),
    );

    // ---- 6. Perturbation robustness -----------------------------------------
    let perturbed =
        AmbientMetric::Perturbed { mass: 1.0, amplitude: 0.1, tau: 1.0, omega: 1.0 };
    let pfol = trace_foliation(&perturbed, 25.0, 150.0, &TracePolicy::default(), grid()).unwrap();
    let (plim, punc) = hawking_limit_mass(&pfol).unwrap();
    let lx: Vec<f64> = pfol.leaves.iter().map(|l| l.sigma.ln()).collect();
    let ly: Vec<f64> = pfol.leaves.iter().map(|l| kring_sup(l).ln()).collect();
    let slope = ls_slope(&lx, &ly);
    gate(
        6,
        pfol.aborted.is_none() && (plim - 1.0).abs() <= 0.02 && slope <= -1.3,
        format!(
            "{} leaves σ ∈ [25, 150] without Newton failure; m_H limit {plim:.4} ± {punc:.1e}; \
             ‖k̊‖_∞ log-log slope {slope:.2}",
            pfol.leaves.len()
        ),
    );

    // ---- 7. Momentum agreement ----------------------------------------------
    let amp = 0.02;
    let data = InitialDataSet {
        metric: metric.clone(),
        extrinsic: ExtrinsicData::LinearizedFlow { a: [0.0, 0.0, amp] },
    };
    let p_cmc = cmc_linear_momentum(&leaf100, &data).unwrap().vector;
    let p_adm = adm_linear_momentum(&data, 400.0, grid()).unwrap();
    let adm_norm = p_adm.iter().map(|v| v * v).sum::<f64>().sqrt();
    let gap_p = (0..3).map(|i| (p_cmc[i] - p_adm[i]).powi(2)).sum::<f64>().sqrt();
    let data2 = InitialDataSet {
        metric: metric.clone(),
        extrinsic: ExtrinsicData::LinearizedFlow { a: [0.0, 0.0, 2.0 * amp] },
    };
    let p2 = cmc_linear_momentum(&leaf100, &data2).unwrap().vector;
    let lin_err = (0..3)
        .map(|i| (p2[i] - 2.0 * p_cmc[i]).abs())
        .fold(0.0f64, f64::max)
        / p_cmc.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    gate(
        7,
        gap_p <= 0.05 * adm_norm && lin_err <= 1e-9,
        format!(
            "p_cmc(σ=100) = [{:.6e}, {:.6e}, {:.6e}], p_adm(r=400) = [., ., {:.6e}]; \
             |Δ| = {gap_p:.2e} ≤ {:.2e}; doubling the amplitude is linear to {lin_err:.1e}",
            p_cmc[0], p_cmc[1], p_cmc[2], p_adm[2], 0.05 * adm_norm
        ),
    );

    // ---- 8. Chart decay, both directions -------------------------------------
    let chart = traced_chart(&fol, 25.0);
    let report = flatness_verify(&chart, 0.0).unwrap();
    let fitted = report.decay_constant;
    let tau03 = AmbientMetric::Perturbed { mass: 0.5, amplitude: 0.1, tau: 0.3, omega: 0.05 };
    let counter = flatness_verify(&counterexample_chart(&tau03), 0.4).unwrap();
    gate(
        8,
        report.passed && (fitted - 2.0).abs() <= 1.0 && !counter.passed,
        format!(
            "σ^½·sup|ḡ−δ| nonincreasing over [25, 200]: {}; fitted C = {fitted:.3} (2m = 2 ± 50%); \
             τ = 0.3 family fails ε = 0.4: {}",
            report.passed, !counter.passed
        ),
    );

    // ---- 9. Uniformization -----------------------------------------------------
    let y20 = ScalarField::from_fn(grid(), |theta, _| {
        (5.0 / (16.0 * std::f64::consts::PI)).sqrt() * (3.0 * theta.cos() * theta.cos() - 1.0)
    });
    let k_target = y20.scale(0.2).map(|v| v + 1.0);
    let rec = recover_conformal_factor(&k_target).unwrap();
    let residual = gauss_curvature_conformal(&rec.w).sub(&k_target).sup();

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let mut ratios = Vec::new();
    for draw in 0..10 {
        let balanced = random_small_factor(&mut rng, 0.03 + 0.007 * draw as f64);
        let k = gauss_curvature_conformal(&balanced.w);
        let rec_draw = recover_conformal_factor(&k).unwrap();
        ratios.push(h2_norm(&rec_draw.w) / l2_norm(&k.map(|v| v - 1.0)));
    }
    let fitted_c = ratios.iter().fold(0.0f64, |a, &r| a.max(r));
    let violations = ratios.iter().filter(|r| **r > fitted_c * (1.0 + 1e-12)).count();

    let mut bubble_sup = 0.0f64;
    for (lambda, x0) in [(1.5, [0.3, -0.2]), (2.0, [0.0, 0.0]), (2.0, [-0.5, 0.4]), (3.0, [1.0, 0.0])]
    {
        let f = bubble_transfer(grid(), lambda, x0).unwrap();
        let (_, flat) = balance(&f.w).unwrap();
        bubble_sup = bubble_sup.max(flat.w.sup());
    }
    gate(
        9,
        residual <= 1e-9 && violations == 0 && fitted_c <= 2.46 && bubble_sup <= 1e-6,
        format!(
            "K = 1+0.2Y₂₀ curvature residual {residual:.2e}; fitted C = {fitted_c:.3} over 10 draws, \
             {violations} violations; worst balanced bubble ‖w‖_∞ = {bubble_sup:.2e}"
        ),
    );

    // ---- 10. Property suites ------------------------------------------------
    // Jacobian ↔ finite differences on a Schwarzschild sphere (t = 1e-4).
    let sphere30 = EmbeddedSphere::round(grid(), [0.0; 3], 28.0).unwrap();
    let geom30 = geometry(&metric, &sphere30).unwrap();
    let h0 = mean_curvature_map(&metric, &sphere30).unwrap();
    let mut fd_worst = 0.0f64;
    let mut rng10 = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..3 {
        let mut c = DVector::zeros(grid().n_basis());
        for l in 0..=8usize {
            for m in -(l as isize)..=(l as isize) {
                c[lm_index(l, m)] = rng10.random_range(-1.0..1.0);
            }
        }
        let delta = ScalarField::from_coeffs(grid(), &c).unwrap();
        let c = c / delta.sup();
        let delta = ScalarField::from_coeffs(grid(), &c).unwrap();
        // Radial motion δ moves the surface normally at speed ḡ(ω, ν)·δ.
        let wdelta = ScalarField::from_values(
            grid(),
            DVector::from_fn(grid().n_points(), |p, _| {
                let (st, ct) = grid().theta(p).sin_cos();
                let (sp, cp) = grid().phi(p).sin_cos();
                let omega = [st * cp, st * sp, ct];
                let mut w = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        w += geom30.g_amb[p][i][j] * omega[i] * geom30.normal[p][j];
                    }
                }
                w * delta.values()[p]
            }),
        )
        .unwrap();
        let jd = apply_stability(&geom30, &wdelta).unwrap();
        let t = 1e-4;
        let pert = sphere30.with_coeffs(sphere30.coeffs() + &c * t).unwrap();
        let fd = mean_curvature_map(&metric, &pert).unwrap().sub(&h0).scale(1.0 / t);
        let num = fd.sub(&jd).values().norm();
        fd_worst = fd_worst.max(num / jd.values().norm());
    }
    let fd_ok = fd_worst <= 5e-4;

    // Gauss–Bonnet on every uniformization surface touched above.
    let mut gb_worst = 0.0f64;
    for f in [
        &rec,
        &bubble_transfer(grid(), 1.5, [0.3, -0.2]).unwrap(),
        &bubble_transfer(grid(), 2.0, [-0.5, 0.4]).unwrap(),
        &random_small_factor(&mut rng, 0.05),
    ] {
        gb_worst = gb_worst.max((f.gauss_bonnet() - FOUR_PI).abs());
    }
    let gb_ok = gb_worst <= 1e-8;

    // split_parts is a projection: applying it twice changes nothing.
    let sys = assemble_stability(&leaf50.geom).unwrap();
    let split = split_parts(&leaf50.lapse, sys.sys(), leaf50.sigma).unwrap();
    let again = split_parts(&split.trans, sys.sys(), leaf50.sigma).unwrap();
    let idem = again.trans.sub(&split.trans).sup().max(again.mean.abs())
        + split_parts(&split.deform, sys.sys(), leaf50.sigma).unwrap().trans.sup();
    let idem_ok = idem <= 1e-9;

    // Quadrature exactness: orthonormality and a polynomial moment.
    let y53 = ScalarField::from_coeffs(grid(), &{
        let mut c = DVector::zeros(grid().n_basis());
        c[lm_index(5, 3)] = 1.0;
        c
    })
    .unwrap();
    let y12 = ScalarField::from_coeffs(grid(), &{
        let mut c = DVector::zeros(grid().n_basis());
        c[lm_index(12, -7)] = 1.0;
        c
    })
    .unwrap();
    let quad = (y53.zip(&y53, |a, b| a * b).integral_round() - 1.0).abs()
        + y53.zip(&y12, |a, b| a * b).integral_round().abs()
        + (ScalarField::from_fn(grid(), |t, _| t.cos().powi(2)).integral_round()
            - FOUR_PI / 3.0)
            .abs();
    let quad_ok = quad <= 1e-11;

    // Config determinism: an identical tiny run twice, byte-identical bodies.
    let det = {
        let run = || {
            let f = trace_foliation(
                &AmbientMetric::Euclidean,
                5.0,
                21.0,
                &TracePolicy::default(),
                SphereGrid::get(8),
            )
            .unwrap();
            f.csv_body()
        };
        run() == run()
    };
    gate(
        10,
        fd_ok && gb_ok && idem_ok && quad_ok && det,
        format!(
            "FD Jacobian worst rel {fd_worst:.2e} (≤ 5e-4): {fd_ok}; Gauss–Bonnet worst \
             {gb_worst:.2e} (≤ 1e-8): {gb_ok}; split idempotence {idem:.2e}: {idem_ok}; \
             quadrature exactness {quad:.2e}: {quad_ok}; determinism: {det}"
        ),
    );

    // ---- verdict ---------------------------------------------------------
    let mut failed = Vec::new();
    for g in &gates {
        println!("ACCEPTANCE {}: {} — {}", g.n, if g.pass { "PASS" } else { "FAIL" }, g.details);
        if !g.pass {
            failed.push(g.n);
        }
    }
    assert!(
        failed.is_empty(),
        "acceptance criteria failed: {failed:?} — per-criterion lines above; \
         expected-red items and their measured remainders are documented in README.md"
    );
}
