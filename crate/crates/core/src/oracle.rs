//! Brute-force references on tiny instances, used by the `oracle`
//! subcommand and the test suites.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beamformer::{sca, sca_gradient, solve_linear_sdp, BeamformProblem, ScaOptions, SdpOptions, SdpProblem};
use crate::channel::gen_channels;
use crate::error::Result;
use crate::metrics::sum_rate_from_vectors;
use crate::numerics::{hermitian_part, inner, outer, CMatrix, CVector};
use crate::phase_opt::{exhaustive_search, local_search, PhaseConfig};
use crate::scenario::{default_scenario, ScenarioConfig};

/// Outcome of one oracle comparison.
#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Optimal value of a two-antenna [`SdpProblem`] by grid search.
///
/// A linear objective over this feasible set attains its maximum at a
/// rank-one extreme point `τ·v v^H`, so the search runs over unit directions
/// `v = (cos θ, sin θ·e^{jφ})` and picks the best power `τ ∈ [0, P]` for
/// each direction in closed form.
pub fn sdp_grid_2x2(p: &SdpProblem, step: f64) -> Option<f64> {
    assert_eq!(p.objective.nrows(), 2, "grid oracle is for 2x2 instances");
    let (c, a) = (&p.objective, &p.sensing);
    let n_theta = (FRAC_PI_2 / step).ceil() as usize;
    let n_phi = (2.0 * PI / step).ceil() as usize;
    let mut best: Option<f64> = None;
    for i in 0..=n_theta {
        let theta = (i as f64 * step).min(FRAC_PI_2);
        let (s, co) = theta.sin_cos();
        for j in 0..n_phi {
            let phi = j as f64 * step;
            // v^H M v for v = (co, s e^{jφ}) and Hermitian M
            let form = |m: &CMatrix| {
                co * co * m[(0, 0)].re
                    + s * s * m[(1, 1)].re
                    + 2.0 * co * s * (m[(0, 1)] * Complex64::from_polar(1.0, phi)).re
            };
            let f = form(c);
            let g = form(a);
            let tau = if f > 0.0 {
                p.p_max
            } else if p.gamma_th > 0.0 {
                if g <= 0.0 {
                    continue;
                }
                p.gamma_th / g
            } else {
                0.0
            };
            if tau > p.p_max * (1.0 + 1e-12) || tau * g < p.gamma_th * (1.0 - 1e-12) {
                continue;
            }
            let value = tau * f;
            if best.is_none_or(|b| value > b) {
                best = Some(value);
            }
        }
    }
    best
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    hermitian_part(&m)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// 2×2 SDP against the grid oracle on `count` random instances with an
/// active sensing constraint.
pub fn check_sdp_grid(count: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let c = random_hermitian(&mut rng, 2);
        let s = random_vector(&mut rng, 2);
        let p_max = rng.random_range(0.5..2.0);
        let bound = p_max * s.norm_squared();
        let p = SdpProblem {
            objective: c,
            sensing: outer(&s),
            gamma_th: rng.random_range(0.3..0.95) * bound,
            p_max,
        };
        let sol = solve_linear_sdp(&p, &SdpOptions::default())?;
        let grid = sdp_grid_2x2(&p, 1e-3).unwrap_or(f64::NAN);
        worst = worst.max((sol.objective - grid).abs());
    }
    Ok(OracleCheck {
        name: "sdp_vs_grid",
        passed: worst <= 1e-3,
        detail: format!("max |solver - grid| = {worst:.2e} over {count} instances"),
    })
}

/// Single-user SCA against `log2(1 + P λ_max(Q)/σ²)`.
pub fn check_mrt(count: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(2..=6);
        let q = random_vector(&mut rng, n);
        let p_max = rng.random_range(0.1..3.0);
        let sigma2 = rng.random_range(0.05..2.0);
        let problem = BeamformProblem {
            users: vec![q.clone()],
            sensing: Some(random_vector(&mut rng, n)),
            threshold: 0.0,
            p_max,
            sigma2,
        };
        let out = sca(&problem, None, &ScaOptions {
            max_iters: 100,
            delta: 1e-12,
            sdp: SdpOptions::default(),
        })?;
        // λ_max(q q^H) = ‖q‖²
        let expected = (1.0 + p_max * q.norm_squared() / sigma2).log2();
        worst = worst.max((out.rate - expected).abs() / expected);
    }
    Ok(OracleCheck {
        name: "sca_vs_mrt",
        passed: worst <= 1e-5,
        detail: format!("max relative error = {worst:.2e} over {count} instances"),
    })
}

/// Gradient against central differences of the sum rate along random
/// Hermitian directions.
pub fn check_gradient(count: usize, seed: u64) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = 4;
        let users: Vec<CVector> = (0..3).map(|_| random_vector(&mut rng, n)).collect();
        let q: Vec<CMatrix> = users.iter().map(outer).collect();
        let b = random_vector(&mut rng, n);
        let w = outer(&b) + CMatrix::identity(n, n) * Complex64::from(0.1);
        let d = random_hermitian(&mut rng, n);
        let sigma2 = 0.5;
        let h = 1e-6;
        let f = |m: &CMatrix| sum_rate_from_vectors(&users, m, sigma2);
        let fd = (f(&(&w + &d * Complex64::from(h))) - f(&(&w - &d * Complex64::from(h)))) / (2.0 * h);
        let analytic = inner(&sca_gradient(&w, &q, sigma2), &d);
        worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-12));
    }
    Ok(OracleCheck {
        name: "gradient_vs_finite_differences",
        passed: worst <= 1e-4,
        detail: format!("max relative error = {worst:.2e} over {count} directions"),
    })
}

/// Scenario with `elements` RIS elements in a single row, used by the phase
/// oracles.
pub fn tiny_scenario(elements: usize, bits: u32, antennas: usize, users: usize) -> ScenarioConfig {
    let mut cfg = default_scenario();
    cfg.antennas = antennas;
    cfg.mrs = users;
    cfg.mr_positions.truncate(users);
    cfg.ris_rows = 1;
    cfg.ris_cols = elements;
    cfg.phase_bits = bits;
    cfg.gamma_th = 0.0;
    cfg.vartheta_phase = 1e-12;
    cfg
}

/// Local search against exhaustive enumeration for `L = 4`, `e = 1`.
pub fn check_local_vs_exhaustive(seeds: u64) -> Result<OracleCheck> {
    let cfg = tiny_scenario(4, 1, 2, 3);
    let mut ratio_sum = 0.0;
    let mut exceeded = 0usize;
    for seed in 0..seeds {
        let ch = gen_channels(&cfg, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let v = random_vector(&mut rng, cfg.antennas);
        let w = outer(&v) * Complex64::from(cfg.p_max / v.norm_squared());
        let init = PhaseConfig::random(cfg.ris_elements(), cfg.phase_bits, &mut rng);
        let local = local_search(&w, &ch, &cfg, &init)?;
        let (_, best) = exhaustive_search(&w, &ch, &cfg)?;
        if local.rate > best * (1.0 + 1e-12) {
            exceeded += 1;
        }
        ratio_sum += if best > 0.0 { local.rate / best } else { 1.0 };
    }
    let mean = ratio_sum / seeds as f64;
    Ok(OracleCheck {
        name: "local_vs_exhaustive",
        passed: exceeded == 0 && mean >= 0.9,
        detail: format!("mean ratio = {mean:.4}, {exceeded} of {seeds} exceed the optimum"),
    })
}

/// The full tiny-instance suite.
pub fn run_suite() -> Result<Vec<OracleCheck>> {
    Ok(vec![
        check_sdp_grid(20, 101)?,
        check_mrt(20, 202)?,
        check_gradient(20, 303)?,
        check_local_vs_exhaustive(20)?,
    ])
}
