//! Transmit-covariance design for a fixed RIS phase configuration.
//!
//! The rank-one constraint `W = w w^H` is relaxed to `W ⪰ 0`. The concave
//! sum-rate objective is then maximized by successive linearization: each
//! iteration maximizes `Tr(∇R(W_i) W)` over the feasible set with a dense
//! log-barrier interior-point solver and moves from `W_i` towards that
//! maximizer with an exact line search, so every iterate stays feasible and
//! the rate never decreases. A beamforming vector is recovered at the end by
//! eigenvector extraction plus Gaussian randomization.

use std::f64::consts::LN_2;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{cscg, ChannelRealization};
use crate::error::{Error, Result};
use crate::metrics::{sensing_vector, EffectiveChannel};
use crate::numerics::{
    cholesky_lower, ensure_hermitian, ensure_psd, frobenius_norm, hermitian_eig, hermitian_part,
    inner, outer, quadratic_form, solve_hermitian_positive, trace, CMatrix, CVector,
};
use crate::phase_opt::PhaseConfig;
use crate::scenario::{target_steering, ScenarioConfig};

/// Objective magnitude, relative to `‖C‖_F·P_max`, below which the duality
/// gap target becomes absolute.
const GAP_FLOOR: f64 = 1e-3;

/// Relative slack allowed on the power and sensing constraints of a returned
/// covariance.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Hermitian PSD transmit covariance with `Tr(W) ≤ P_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance {
    pub matrix: CMatrix,
}

impl TransmitCovariance {
    pub fn new(matrix: CMatrix, p_max: f64) -> Result<Self> {
        ensure_psd(&matrix)?;
        let power = trace(&matrix).re;
        if power > p_max * (1.0 + FEASIBILITY_TOL) {
            return Err(Error::InvalidConfig(format!(
                "covariance power {power:.3e} exceeds budget {p_max:.3e}"
            )));
        }
        Ok(TransmitCovariance { matrix })
    }

    pub fn from_beam(w: &CVector) -> Self {
        TransmitCovariance { matrix: outer(w) }
    }

    pub fn power(&self) -> f64 {
        trace(&self.matrix).re
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `max Tr(C W)  s.t.  Tr(A W) ≥ γ,  Tr(W) ≤ P,  W ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub objective: CMatrix,
    pub sensing: CMatrix,
    pub gamma_th: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Cap on Newton steps summed over all barrier stages.
    pub max_newton_steps: usize,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    pub initial_t: f64,
    pub t_growth: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_newton_steps: 200,
            gap_tol: 1e-8,
            initial_t: 1.0,
            t_growth: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub covariance: CMatrix,
    pub objective: f64,
    /// Upper bound on the distance to the optimal value.
    pub gap: f64,
    pub newton_steps: usize,
}

/// `P_max · λ_max(A)`: the largest beampattern gain reachable within the
/// power budget. The sensing constraint is satisfiable iff this is ≥ `γ_th`.
pub fn feasibility_bound(sensing: &CMatrix, p_max: f64) -> Result<f64> {
    Ok(p_max * hermitian_eig(sensing)?.max_value().max(0.0))
}

/// Gradient of `Σ_k log2(Tr(W Q_k) + σ²)` at `W`.
pub fn sca_gradient(w: &CMatrix, q: &[CMatrix], sigma2: f64) -> CMatrix {
    let n = w.nrows();
    let mut grad = CMatrix::zeros(n, n);
    for qk in q {
        let denom = (inner(w, qk) + sigma2) * LN_2;
        grad += qk * Complex64::from(1.0 / denom);
    }
    hermitian_part(&grad)
}

/// Same gradient with `Q_k = q_k q_k^H` given by its factor.
pub fn sca_gradient_from_vectors(w: &CMatrix, q: &[CVector], sigma2: f64) -> CMatrix {
    let n = w.nrows();
    let mut grad = CMatrix::zeros(n, n);
    for qk in q {
        let denom = (quadratic_form(w, qk) + sigma2) * LN_2;
        grad += outer(qk) * Complex64::from(1.0 / denom);
    }
    grad
}

/// Solves an [`SdpProblem`] with a primal log-barrier method.
///
/// Inputs are normalized first (`X = W/P`, `A/λ_max(A)`, `C/‖C‖_F`). Newton
/// steps are taken in the coordinates `X = L (I + Y) L^H` where `L` is the
/// Cholesky factor of the current iterate: there the log-det Hessian is the
/// identity and the two linear constraints add a rank-two term, so each step
/// needs only a 2×2 positive definite solve.
pub fn solve_linear_sdp(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    ensure_hermitian(&p.objective)?;
    ensure_hermitian(&p.sensing)?;
    let n = p.objective.nrows();
    let eig_a = hermitian_eig(&p.sensing)?;
    let lam = eig_a.max_value().max(0.0);
    let bound = p.p_max * lam;
    if p.gamma_th > bound {
        return Err(Error::Infeasible {
            bound,
            threshold: p.gamma_th,
        });
    }

    let active = p.gamma_th > 0.0;
    let gamma_s = if active { p.gamma_th / bound } else { 0.0 };
    if active && gamma_s >= 1.0 - 1e-12 {
        // only the dominant direction at full power is feasible
        let v = eig_a.vector(0);
        let w = outer(&v) * Complex64::from(p.p_max);
        return Ok(SdpSolution {
            objective: inner(&p.objective, &w),
            covariance: w,
            gap: 0.0,
            newton_steps: 0,
        });
    }

    let a_s = if active {
        &p.sensing * Complex64::from(1.0 / lam)
    } else {
        CMatrix::zeros(n, n)
    };
    let c_norm = frobenius_norm(&p.objective);
    let c_s = if c_norm > 0.0 {
        &p.objective * Complex64::from(1.0 / c_norm)
    } else {
        CMatrix::zeros(n, n)
    };
    let scale = if c_norm > 0.0 { c_norm * p.p_max } else { 0.0 };

    let mut x = initial_point(&a_s, gamma_s, active, n, &eig_a);
    let barrier_terms = (n + 1 + usize::from(active)) as f64;
    let mut t = opts.initial_t;
    let mut steps = 0usize;
    let identity = CMatrix::identity(n, n);

    loop {
        // centering
        loop {
            if steps >= opts.max_newton_steps {
                return Err(Error::NoConvergence { iterations: steps });
            }
            steps += 1;
            let l = cholesky_lower(&x).map_err(|_| Error::NoConvergence { iterations: steps })?;
            let lh = l.adjoint();
            let ct = hermitian_part(&(&lh * &c_s * &l));
            let tt = hermitian_part(&(&lh * &l));
            let s_p = 1.0 - trace(&x).re;
            let mut grad = &tt * Complex64::from(1.0 / s_p) - &identity - &ct * Complex64::from(t);

            let (y, at, s_a) = if active {
                let at = hermitian_part(&(&lh * &a_s * &l));
                let s_a = inner(&a_s, &x) - gamma_s;
                grad -= &at * Complex64::from(1.0 / s_a);
                let aa = inner(&at, &at) / (s_a * s_a);
                let pp = inner(&tt, &tt) / (s_p * s_p);
                let ap = inner(&at, &tt) / (s_a * s_p);
                let m = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::from(1.0 + aa),
                        Complex64::from(ap),
                        Complex64::from(ap),
                        Complex64::from(1.0 + pp),
                    ],
                );
                let rhs = CVector::from_vec(vec![
                    Complex64::from(-inner(&at, &grad) / s_a),
                    Complex64::from(-inner(&tt, &grad) / s_p),
                ]);
                let sol = solve_hermitian_positive(&m, &rhs)?;
                let y = -&grad
                    - &at * Complex64::from(sol[0].re / s_a)
                    - &tt * Complex64::from(sol[1].re / s_p);
                (hermitian_part(&y), Some(at), s_a)
            } else {
                let coef = -inner(&tt, &grad) / s_p / (1.0 + inner(&tt, &tt) / (s_p * s_p));
                let y = -&grad - &tt * Complex64::from(coef / s_p);
                (hermitian_part(&y), None, 1.0)
            };

            let decrement2 = -inner(&grad, &y);
            if decrement2 <= 1e-10 {
                break;
            }

            let mu = hermitian_eig(&y)?.values;
            let d_obj = inner(&ct, &y);
            let d_tr = inner(&tt, &y);
            let d_a = at.as_ref().map_or(0.0, |at| inner(at, &y));
            let mut alpha_max = f64::INFINITY;
            if let Some(&lo) = mu.last() {
                if lo < 0.0 {
                    alpha_max = alpha_max.min(-1.0 / lo);
                }
            }
            if d_tr > 0.0 {
                alpha_max = alpha_max.min(s_p / d_tr);
            }
            if active && d_a < 0.0 {
                alpha_max = alpha_max.min(-s_a / d_a);
            }
            let mut alpha = (0.99 * alpha_max).min(1.0);
            let delta_f = |alpha: f64| -> f64 {
                let mut df = -t * alpha * d_obj - (-alpha * d_tr / s_p).ln_1p();
                if active {
                    df -= (alpha * d_a / s_a).ln_1p();
                }
                df - mu.iter().map(|m| (alpha * m).ln_1p()).sum::<f64>()
            };
            while delta_f(alpha) > -0.25 * alpha * decrement2 {
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
            if alpha < 1e-14 {
                break;
            }
            let step = &l * &y * &lh;
            x = hermitian_part(&(&x + step * Complex64::from(alpha)));
        }

        // gap and objective in units of ‖C‖_F·P_max
        let objective_s = inner(&c_s, &x);
        let gap_s = barrier_terms / t;
        if scale == 0.0 || gap_s <= opts.gap_tol * (GAP_FLOOR + objective_s.abs()) {
            let gap = gap_s * scale;
            let covariance = &x * Complex64::from(p.p_max);
            return Ok(SdpSolution {
                objective: inner(&p.objective, &covariance),
                covariance,
                gap,
                newton_steps: steps,
            });
        }
        t *= opts.t_growth;
    }
}

/// Strictly feasible start for the normalized problem.
fn initial_point(
    a_s: &CMatrix,
    gamma_s: f64,
    active: bool,
    n: usize,
    eig_a: &crate::numerics::HermitianEigen,
) -> CMatrix {
    let identity = CMatrix::identity(n, n) * Complex64::from(1.0 / n as f64);
    if !active {
        return identity * Complex64::from(0.9);
    }
    let rho = 0.9f64.max(0.5 * (1.0 + gamma_s));
    let mean_eig = trace(a_s).re / n as f64;
    let beta_min = if mean_eig >= 1.0 {
        0.0
    } else {
        ((gamma_s / rho - mean_eig) / (1.0 - mean_eig)).max(0.0)
    };
    let beta = 0.5 * (beta_min + 1.0);
    let v = eig_a.vector(0);
    (outer(&v) * Complex64::from(beta) + identity * Complex64::from(1.0 - beta))
        * Complex64::from(rho)
}

/// The fixed-phase beamforming problem in factored form.
#[derive(Debug, Clone)]
pub struct BeamformProblem {
    /// `q_k` with `Q_k = q_k q_k^H`.
    pub users: Vec<CVector>,
    /// `s` with `A = s s^H`; `None` drops the sensing constraint.
    pub sensing: Option<CVector>,
    /// Sensing threshold, absolute units.
    pub threshold: f64,
    pub p_max: f64,
    pub sigma2: f64,
}

impl BeamformProblem {
    /// Problem for phase `phase` on channel `ch` with the scenario's target.
    pub fn for_phase(phase: &PhaseConfig, ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<Self> {
        let eff = EffectiveChannel::new(ch, phase);
        let a = target_steering(cfg)?;
        Ok(BeamformProblem {
            users: eff.user_vectors(),
            sensing: Some(sensing_vector(&a, phase, &ch.h_bi)),
            threshold: cfg.gain_threshold(),
            p_max: cfg.p_max,
            sigma2: cfg.sigma2,
        })
    }

    pub fn antennas(&self) -> usize {
        self.users
            .first()
            .map(|q| q.len())
            .or_else(|| self.sensing.as_ref().map(|s| s.len()))
            .unwrap_or(0)
    }

    pub fn user_covariances(&self) -> Vec<CMatrix> {
        self.users.iter().map(outer).collect()
    }

    pub fn sensing_matrix(&self) -> CMatrix {
        let n = self.antennas();
        self.sensing.as_ref().map_or_else(|| CMatrix::zeros(n, n), outer)
    }

    fn effective_threshold(&self) -> f64 {
        if self.sensing.is_some() {
            self.threshold
        } else {
            0.0
        }
    }

    pub fn sdp(&self, objective: CMatrix) -> SdpProblem {
        SdpProblem {
            objective,
            sensing: self.sensing_matrix(),
            gamma_th: self.effective_threshold(),
            p_max: self.p_max,
        }
    }

    pub fn rate(&self, w: &CMatrix) -> f64 {
        crate::metrics::sum_rate_from_vectors(&self.users, w, self.sigma2)
    }

    pub fn rate_vec(&self, w: &CVector) -> f64 {
        self.rate(&outer(w))
    }

    pub fn user_rates(&self, w: &CMatrix) -> Vec<f64> {
        crate::metrics::user_rates_from_vectors(&self.users, w, self.sigma2)
    }

    pub fn gain(&self, w: &CMatrix) -> f64 {
        self.sensing.as_ref().map_or(0.0, |s| quadratic_form(w, s).max(0.0))
    }

    pub fn gain_vec(&self, w: &CVector) -> f64 {
        self.sensing.as_ref().map_or(0.0, |s| s.dotc(w).norm_sqr())
    }

    pub fn feasibility_bound(&self) -> f64 {
        self.sensing.as_ref().map_or(f64::INFINITY, |s| self.p_max * s.norm_squared())
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility_bound() >= self.effective_threshold()
    }

    pub fn meets_threshold(&self, gain: f64) -> bool {
        gain >= self.effective_threshold() * (1.0 - FEASIBILITY_TOL)
    }

    fn ensure_feasible(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::Infeasible {
                bound: self.feasibility_bound(),
                threshold: self.threshold,
            })
        }
    }

    /// Feasible starting covariance: full power along the sensing direction
    /// blended as far towards `P I/N` as the threshold allows.
    pub fn default_init(&self) -> Result<CMatrix> {
        self.ensure_feasible()?;
        let n = self.antennas();
        let uniform = CMatrix::identity(n, n) * Complex64::from(self.p_max / n as f64);
        let Some(s) = self.sensing.as_ref().filter(|_| self.threshold > 0.0) else {
            return Ok(uniform);
        };
        let s_norm2 = s.norm_squared();
        let v = s / Complex64::from(s_norm2.sqrt());
        let peak = outer(&v) * Complex64::from(self.p_max);
        let peak_gain = self.p_max * s_norm2;
        let uniform_gain = self.p_max * s_norm2 / n as f64;
        let tau = if uniform_gain >= self.threshold {
            1.0
        } else {
            ((peak_gain - self.threshold) / (peak_gain - uniform_gain)).clamp(0.0, 1.0)
        };
        Ok(peak * Complex64::from(1.0 - tau) + uniform * Complex64::from(tau))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScaOptions {
    pub max_iters: usize,
    pub delta: f64,
    pub sdp: SdpOptions,
}

impl ScaOptions {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        ScaOptions {
            max_iters: cfg.max_inner,
            delta: cfg.delta_sca,
            sdp: SdpOptions::default(),
        }
    }
}

/// One SCA iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaStep {
    pub iter: usize,
    pub rate: f64,
    pub gain: f64,
    pub trace: f64,
    /// Linearization gap `Tr(∇R (S − W))`, an upper bound on the remaining
    /// improvement of the relaxed problem.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub covariance: TransmitCovariance,
    pub rate: f64,
    pub inner_iters: usize,
    /// False when `max_iters` was reached before the rate settled.
    pub converged: bool,
    /// Iterate 0 is the starting point.
    pub history: Vec<ScaStep>,
}

impl ScaOutcome {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "rate", "gain", "trace_W", "gap"])?;
        for s in &self.history {
            w.write_record([
                s.iter.to_string(),
                format!("{:e}", s.rate),
                format!("{:e}", s.gain),
                format!("{:e}", s.trace),
                format!("{:e}", s.gap),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<sca trace>", e))?;
        Ok(())
    }
}

/// Maximizes the relaxed sum rate from `init` (or [`BeamformProblem::default_init`]).
pub fn sca(problem: &BeamformProblem, init: Option<&CMatrix>, opts: &ScaOptions) -> Result<ScaOutcome> {
    problem.ensure_feasible()?;
    let mut w = match init {
        Some(w) => w.clone(),
        None => problem.default_init()?,
    };
    let q_mats = problem.user_covariances();
    let mut rate = problem.rate(&w);
    let mut history = vec![ScaStep {
        iter: 0,
        rate,
        gain: problem.gain(&w),
        trace: trace(&w).re,
        gap: f64::NAN,
    }];
    let mut converged = false;
    let mut iters = 0;

    while iters < opts.max_iters {
        iters += 1;
        let grad = sca_gradient(&w, &q_mats, problem.sigma2);
        let target = solve_linear_sdp(&problem.sdp(grad.clone()), &opts.sdp)?.covariance;
        let direction = &target - &w;
        let lin_gap = inner(&grad, &direction);

        let now: Vec<f64> = problem.users.iter().map(|q| quadratic_form(&w, q)).collect();
        let there: Vec<f64> = problem.users.iter().map(|q| quadratic_form(&target, q)).collect();
        let tau = line_search(&now, &there, problem.sigma2);
        let candidate = hermitian_part(&(&w + &direction * Complex64::from(tau)));
        let new_rate = problem.rate(&candidate);

        let improved = new_rate >= rate;
        if improved {
            w = candidate;
        }
        let step_rate = if improved { new_rate } else { rate };
        history.push(ScaStep {
            iter: iters,
            rate: step_rate,
            gain: problem.gain(&w),
            trace: trace(&w).re,
            gap: lin_gap,
        });
        let gain_in_rate = step_rate - rate;
        rate = step_rate;
        if gain_in_rate <= opts.delta {
            converged = true;
            break;
        }
    }

    Ok(ScaOutcome {
        covariance: TransmitCovariance { matrix: w },
        rate,
        inner_iters: iters,
        converged,
        history,
    })
}

/// Maximizes `Σ_k log(σ² + a_k + τ (b_k − a_k))` over `τ ∈ [0, 1]`.
fn line_search(from: &[f64], to: &[f64], sigma2: f64) -> f64 {
    let slope = |tau: f64| -> f64 {
        from.iter()
            .zip(to)
            .map(|(a, b)| (b - a) / (sigma2 + a + tau * (b - a)))
            .sum()
    };
    if slope(1.0) >= 0.0 {
        return 1.0;
    }
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Relaxed beamforming for a fixed phase configuration.
pub fn beamform_sca(
    phase: &PhaseConfig,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    w_init: Option<&TransmitCovariance>,
) -> Result<ScaOutcome> {
    let problem = BeamformProblem::for_phase(phase, ch, cfg)?;
    sca(&problem, w_init.map(|w| &w.matrix), &ScaOptions::from_config(cfg))
}

#[derive(Debug, Clone)]
pub struct RankOne {
    pub w: CVector,
    pub rate: f64,
    pub gain: f64,
    /// 0 for the dominant eigenvector, `i` for the `i`-th random draw.
    pub candidate: usize,
}

/// Recovers a beamforming vector from a relaxed covariance.
///
/// Candidate 0 is `√λ1 v1`; if it misses the sensing threshold it is retried
/// at full power. Each of the `randomizations` further candidates is drawn
/// from `CN(0, W)` and scaled to full power. The feasible candidate with the
/// highest rate wins, earlier candidates winning ties.
pub fn extract_rank_one(
    w: &TransmitCovariance,
    problem: &BeamformProblem,
    randomizations: usize,
    seed: u64,
) -> Result<RankOne> {
    let eig = hermitian_eig(&w.matrix)?;
    let n = w.dim();
    let mut best: Option<RankOne> = None;
    let consider = |cand: CVector, idx: usize, best: &mut Option<RankOne>| {
        let gain = problem.gain_vec(&cand);
        if !problem.meets_threshold(gain) {
            return false;
        }
        let rate = problem.rate_vec(&cand);
        if best.as_ref().is_none_or(|b| rate > b.rate) {
            *best = Some(RankOne {
                w: cand,
                rate,
                gain,
                candidate: idx,
            });
        }
        true
    };

    let full_power = |v: CVector| -> CVector {
        let norm2 = v.norm_squared();
        if norm2 > 0.0 {
            v * Complex64::from((problem.p_max / norm2).sqrt())
        } else {
            v
        }
    };

    if n > 0 {
        let lead = eig.vector(0) * Complex64::from(eig.max_value().max(0.0).sqrt());
        if !consider(lead.clone(), 0, &mut best) {
            consider(full_power(lead), 0, &mut best);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots: Vec<f64> = eig.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    for i in 1..=randomizations {
        let z = CVector::from_fn(n, |_, _| cscg(&mut rng));
        let mut xi = CVector::zeros(n);
        for (j, r) in roots.iter().enumerate() {
            xi += eig.vectors.column(j) * (z[j] * *r);
        }
        consider(full_power(xi), i, &mut best);
    }

    best.ok_or(Error::NoFeasibleRankOne)
}

/// Relaxed covariance together with the beamforming vector recovered from it.
#[derive(Debug, Clone)]
pub struct Polished {
    pub covariance: CMatrix,
    pub rate: f64,
    /// `None` when no candidate met the sensing threshold.
    pub beam: Option<RankOne>,
    pub extra_iters: usize,
}

/// Recovers a beamforming vector from `w`. A candidate that beats the
/// relaxed rate shows `w` stopped short of the relaxed optimum; SCA is then
/// restarted from that candidate, and the relaxed solution is replaced by it
/// outright if the restart still falls behind.
pub fn polish_with_rank_one(
    problem: &BeamformProblem,
    w: CMatrix,
    opts: &ScaOptions,
    randomizations: usize,
    seed: u64,
) -> Result<Polished> {
    let try_extract = |m: &CMatrix| -> Result<Option<RankOne>> {
        match extract_rank_one(&TransmitCovariance { matrix: m.clone() }, problem, randomizations, seed) {
            Ok(r) => Ok(Some(r)),
            Err(Error::NoFeasibleRankOne) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let rate = problem.rate(&w);
    let Some(first) = try_extract(&w)? else {
        return Ok(Polished {
            covariance: w,
            rate,
            beam: None,
            extra_iters: 0,
        });
    };
    if first.rate <= rate {
        return Ok(Polished {
            covariance: w,
            rate,
            beam: Some(first),
            extra_iters: 0,
        });
    }

    let restart = sca(problem, Some(&outer(&first.w)), opts)?;
    let mut best = first;
    if let Some(second) = try_extract(&restart.covariance.matrix)? {
        if second.rate > best.rate {
            best = second;
        }
    }
    let (covariance, rate) = if best.rate > restart.rate {
        (outer(&best.w), best.rate)
    } else {
        (restart.covariance.matrix, restart.rate)
    };
    Ok(Polished {
        covariance,
        rate,
        beam: Some(best),
        extra_iters: restart.inner_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{diag, ONE};
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rand_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let m = CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &m * m.adjoint()
    }

    #[test]
    fn bound_cases() {
        assert!((feasibility_bound(&CMatrix::identity(3, 3), 2.0).unwrap() - 2.0).abs() < 1e-12);
        let a = CVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        assert!((feasibility_bound(&outer(&a), 1.7).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn bound_dominates_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_psd(&mut rng, 3);
        let bound = feasibility_bound(&a, 1.0).unwrap();
        let mut best = 0.0f64;
        for _ in 0..100_000 {
            let v = rand_vec(&mut rng, 3);
            let v = &v / Complex64::from(v.norm());
            best = best.max(quadratic_form(&a, &v));
        }
        assert!(best <= bound * (1.0 + 1e-12));
        assert!(best >= 0.95 * bound);
    }

    #[test]
    fn gradient_at_zero_and_zero_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q: Vec<CMatrix> = (0..3).map(|_| rand_psd(&mut rng, 4)).collect();
        let g = sca_gradient(&CMatrix::zeros(4, 4), &q, 0.5);
        let mut expected = CMatrix::zeros(4, 4);
        for qk in &q {
            expected += qk * Complex64::from(1.0 / (0.5 * LN_2));
        }
        assert!(frobenius_norm(&(g - expected)) < 1e-12);
        let z = sca_gradient(&CMatrix::identity(4, 4), &[CMatrix::zeros(4, 4)], 1.0);
        assert_eq!(frobenius_norm(&z), 0.0);
    }

    #[test]
    fn sdp_axis_aligned() {
        let p = SdpProblem {
            objective: diag(&[ONE, c(0.0, 0.0)]),
            sensing: CMatrix::identity(2, 2),
            gamma_th: 0.0,
            p_max: 3.0,
        };
        let sol = solve_linear_sdp(&p, &SdpOptions::default()).unwrap();
        assert!((sol.objective - 3.0).abs() <= 1e-6 * 3.0);
        assert!((sol.covariance[(0, 0)].re - 3.0).abs() < 1e-6);
        assert!(sol.covariance[(1, 1)].re.abs() < 1e-6);
    }

    #[test]
    fn sdp_constraint_saturating() {
        let p = SdpProblem {
            objective: CMatrix::identity(2, 2),
            sensing: CMatrix::identity(2, 2),
            gamma_th: 2.0,
            p_max: 2.0,
        };
        let sol = solve_linear_sdp(&p, &SdpOptions::default()).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-6);
        assert!((trace(&sol.covariance).re - 2.0).abs() < 1e-6);
    }

    #[test]
    fn sdp_infeasible_is_reported() {
        let p = SdpProblem {
            objective: CMatrix::identity(2, 2),
            sensing: diag(&[ONE, c(0.5, 0.0)]),
            gamma_th: 2.5,
            p_max: 2.0,
        };
        match solve_linear_sdp(&p, &SdpOptions::default()) {
            Err(Error::Infeasible { bound, .. }) => assert!((bound - 2.0).abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn sdp_solution_is_feasible_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = 6;
            let c_mat = hermitian_part(&CMatrix::from_fn(n, n, |_, _| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }));
            let s = rand_vec(&mut rng, n);
            let a = outer(&s);
            let bound = 2.0 * s.norm_squared();
            let gamma = rng.random_range(0.0..0.9) * bound;
            let p = SdpProblem {
                objective: c_mat,
                sensing: a.clone(),
                gamma_th: gamma,
                p_max: 2.0,
            };
            let sol = solve_linear_sdp(&p, &SdpOptions::default()).unwrap();
            let w = &sol.covariance;
            assert!(trace(w).re <= 2.0 * (1.0 + 1e-8));
            assert!(inner(&a, w) >= gamma * (1.0 - 1e-8));
            ensure_psd(w).unwrap();
        }
    }

    #[test]
    fn sca_k1_matches_mrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let q = rand_vec(&mut rng, 4);
            let problem = BeamformProblem {
                users: vec![q.clone()],
                sensing: Some(rand_vec(&mut rng, 4)),
                threshold: 0.0,
                p_max: 1.5,
                sigma2: 0.3,
            };
            let out = sca(&problem, None, &ScaOptions {
                max_iters: 50,
                delta: 1e-10,
                sdp: SdpOptions::default(),
            })
            .unwrap();
            let expected = (1.0 + 1.5 * q.norm_squared() / 0.3).log2();
            assert!((out.rate - expected).abs() <= 1e-5 * expected);
        }
    }

    #[test]
    fn sca_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let users: Vec<CVector> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
            let s = rand_vec(&mut rng, 4);
            let threshold = 0.4 * 1.0 * s.norm_squared();
            let problem = BeamformProblem {
                users,
                sensing: Some(s),
                threshold,
                p_max: 1.0,
                sigma2: 0.2,
            };
            let out = sca(&problem, None, &ScaOptions {
                max_iters: 30,
                delta: 1e-9,
                sdp: SdpOptions::default(),
            })
            .unwrap();
            for pair in out.history.windows(2) {
                assert!(pair[1].rate >= pair[0].rate - 1e-9);
            }
            let w = &out.covariance.matrix;
            assert!(trace(w).re <= (1.0 + 1e-8));
            assert!(problem.gain(w) >= threshold * (1.0 - 1e-8));
        }
    }

    #[test]
    fn sca_reports_infeasible() {
        let problem = BeamformProblem {
            users: vec![CVector::from_element(2, ONE)],
            sensing: Some(CVector::from_element(2, c(0.1, 0.0))),
            threshold: 1.0,
            p_max: 1.0,
            sigma2: 1.0,
        };
        assert!(matches!(
            sca(&problem, None, &ScaOptions {
                max_iters: 5,
                delta: 1e-6,
                sdp: SdpOptions::default()
            }),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn sca_zero_channels() {
        let problem = BeamformProblem {
            users: vec![CVector::zeros(3); 2],
            sensing: Some(CVector::zeros(3)),
            threshold: 0.0,
            p_max: 1.0,
            sigma2: 1.0,
        };
        let out = sca(&problem, None, &ScaOptions {
            max_iters: 5,
            delta: 1e-6,
            sdp: SdpOptions::default(),
        })
        .unwrap();
        assert_eq!(out.rate, 0.0);
        assert!(out.converged);
    }

    #[test]
    fn extraction_of_rank_one_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = rand_vec(&mut rng, 4);
        let problem = BeamformProblem {
            users: (0..3).map(|_| rand_vec(&mut rng, 4)).collect(),
            sensing: None,
            threshold: 0.0,
            p_max: 10.0,
            sigma2: 1.0,
        };
        let w = TransmitCovariance::from_beam(&v);
        let r = extract_rank_one(&w, &problem, 0, 1).unwrap();
        assert!((r.rate - problem.rate(&w.matrix)).abs() < 1e-9 * (1.0 + r.rate));
        assert!((r.w.norm_squared() - v.norm_squared()).abs() < 1e-9 * v.norm_squared());
    }

    #[test]
    fn extraction_tie_uses_eig_convention() {
        let p = 3.0;
        let w = TransmitCovariance {
            matrix: CMatrix::identity(2, 2) * Complex64::from(p / 2.0),
        };
        let problem = BeamformProblem {
            users: vec![CVector::from_element(2, ONE)],
            sensing: None,
            threshold: 0.0,
            p_max: p,
            sigma2: 1.0,
        };
        let r = extract_rank_one(&w, &problem, 0, 0).unwrap();
        assert!((r.w.norm_squared() - p / 2.0).abs() < 1e-12);
        let eig = hermitian_eig(&w.matrix).unwrap();
        let expected = eig.vector(0) * Complex64::from((p / 2.0).sqrt());
        assert!((r.w - expected).norm() < 1e-12);
    }

    #[test]
    fn randomization_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..10 {
            let problem = BeamformProblem {
                users: (0..3).map(|_| rand_vec(&mut rng, 4)).collect(),
                sensing: None,
                threshold: 0.0,
                p_max: 1.0,
                sigma2: 1.0,
            };
            let m = rand_psd(&mut rng, 4);
            let m = &m * Complex64::from(1.0 / trace(&m).re);
            let w = TransmitCovariance { matrix: m };
            let lead = extract_rank_one(&w, &problem, 0, seed).unwrap();
            let best = extract_rank_one(&w, &problem, 100, seed).unwrap();
            assert!(best.rate >= lead.rate);
        }
    }

    #[test]
    fn extraction_reports_missing_feasible_candidate() {
        let problem = BeamformProblem {
            users: vec![CVector::from_element(2, ONE)],
            sensing: Some(CVector::from_vec(vec![ONE, c(0.0, 0.0)])),
            threshold: 1.0,
            p_max: 1.0,
            sigma2: 1.0,
        };
        // all power on the antenna the sensing direction cannot see
        let w = TransmitCovariance {
            matrix: diag(&[c(0.0, 0.0), ONE]),
        };
        assert!(matches!(
            extract_rank_one(&w, &problem, 0, 0),
            Err(Error::NoFeasibleRankOne)
        ));
    }

    #[test]
    fn polishing_keeps_relaxation_dominant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let opts = ScaOptions {
            max_iters: 3,
            delta: 1e-2,
            sdp: SdpOptions::default(),
        };
        for seed in 0..10 {
            let s = rand_vec(&mut rng, 4);
            let problem = BeamformProblem {
                users: (0..4).map(|_| rand_vec(&mut rng, 4)).collect(),
                threshold: 0.3 * s.norm_squared(),
                sensing: Some(s),
                p_max: 1.0,
                sigma2: 0.5,
            };
            let out = sca(&problem, None, &opts).unwrap();
            let p = polish_with_rank_one(&problem, out.covariance.matrix, &opts, 50, seed).unwrap();
            let beam = p.beam.unwrap();
            assert!(p.rate >= out.rate - 1e-12);
            assert!(p.rate >= beam.rate - 1e-9);
            assert!((problem.rate(&p.covariance) - p.rate).abs() < 1e-12 * (1.0 + p.rate));
            assert!(problem.gain(&p.covariance) >= problem.threshold * (1.0 - 1e-8));
        }
    }

    #[test]
    fn default_init_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for frac in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let s = rand_vec(&mut rng, 4);
            let threshold = frac * 2.0 * s.norm_squared();
            let problem = BeamformProblem {
                users: vec![rand_vec(&mut rng, 4)],
                sensing: Some(s),
                threshold,
                p_max: 2.0,
                sigma2: 1.0,
            };
            let w = problem.default_init().unwrap();
            assert!(trace(&w).re <= 2.0 * (1.0 + 1e-12));
            assert!(problem.gain(&w) >= threshold * (1.0 - 1e-10));
            ensure_psd(&w).unwrap();
        }
    }

    #[test]
    fn trace_csv_has_header() {
        let problem = BeamformProblem {
            users: vec![CVector::from_element(2, ONE)],
            sensing: None,
            threshold: 0.0,
            p_max: 1.0,
            sigma2: 1.0,
        };
        let out = sca(&problem, None, &ScaOptions {
            max_iters: 3,
            delta: 1e-9,
            sdp: SdpOptions::default(),
        })
        .unwrap();
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,rate,gain,trace_W,gap\n"));
        assert_eq!(text.lines().count(), 1 + out.history.len());
    }
}
