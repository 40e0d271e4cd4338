//! Alternating optimization of the transmit covariance and the RIS phases,
//! plus the three comparison schemes.

use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::{polish_with_rank_one, sca, BeamformProblem, ScaOptions};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, outer, CMatrix, CVector};
use crate::phase_opt::{local_search_with, PhaseConfig, PhaseObjective};
use crate::scenario::{target_steering, ScenarioConfig};

/// Random phase draws tried before a run is declared infeasible.
pub const MAX_REDRAWS: usize = 100;
/// Gaussian candidates used when recovering a beamforming vector.
pub const RANDOMIZATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    WithoutRis,
    Rps,
    Apt,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::WithoutRis, Scheme::Rps, Scheme::Apt];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::WithoutRis => "without_ris",
            Scheme::Rps => "rps",
            Scheme::Apt => "apt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }

    pub fn run(self, ch: &ChannelRealization, cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
        match self {
            Scheme::Proposed => alternate(ch, cfg, seed),
            Scheme::WithoutRis => run_without_ris(ch, cfg, seed),
            Scheme::Rps => run_rps(ch, cfg, seed),
            Scheme::Apt => run_apt(ch, cfg, seed),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of one scheme on one channel realization.
///
/// `gain` is normalized by the scenario's sensing reference, like the
/// threshold it is compared against.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheme: Scheme,
    /// Sum rate at the relaxed covariance.
    pub rate_relaxed: f64,
    /// Sum rate of the recovered beamforming vector; 0 if none was feasible.
    pub rate_extracted: f64,
    pub gain: f64,
    pub feasible: bool,
    pub extraction_feasible: bool,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub phase_sweeps_total: usize,
    pub wall_time: f64,
    pub seed: u64,
    /// Phase draws rejected before a feasible one was found.
    pub redraws: usize,
    pub converged: bool,
    /// Per-MR rates at the relaxed covariance.
    pub user_rates: Vec<f64>,
    /// Per-MR rates of the recovered beamforming vector.
    pub user_rates_extracted: Vec<f64>,
    /// Rate after the initialization and after every half-step.
    pub history: Vec<f64>,
    pub phase: Option<PhaseConfig>,
    pub covariance: Option<CMatrix>,
    pub beam: Option<CVector>,
}

impl RunResult {
    fn infeasible(scheme: Scheme, seed: u64, redraws: usize, users: usize, started: Instant) -> Self {
        RunResult {
            scheme,
            rate_relaxed: 0.0,
            rate_extracted: 0.0,
            gain: 0.0,
            feasible: false,
            extraction_feasible: false,
            outer_iters: 0,
            inner_iters_total: 0,
            phase_sweeps_total: 0,
            wall_time: started.elapsed().as_secs_f64(),
            seed,
            redraws,
            converged: true,
            user_rates: vec![0.0; users],
            user_rates_extracted: vec![0.0; users],
            history: Vec::new(),
            phase: None,
            covariance: None,
            beam: None,
        }
    }
}

fn algorithm_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// First phase draw (out of [`MAX_REDRAWS`]) accepted by `accept`.
fn draw_phase<F>(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, mut accept: F) -> Result<Option<(PhaseConfig, usize)>>
where
    F: FnMut(&PhaseConfig) -> Result<bool>,
{
    for attempt in 0..MAX_REDRAWS {
        let p = PhaseConfig::random(cfg.ris_elements(), cfg.phase_bits, rng);
        if accept(&p)? {
            return Ok(Some((p, attempt)));
        }
    }
    Ok(None)
}

struct Extraction {
    covariance: CMatrix,
    rate: f64,
    rate_extracted: f64,
    feasible: bool,
    beam: Option<CVector>,
    user_rates: Vec<f64>,
    extra_iters: usize,
}

fn extract(w: CMatrix, problem: &BeamformProblem, opts: &ScaOptions, seed: u64) -> Result<Extraction> {
    let p = polish_with_rank_one(problem, w, opts, RANDOMIZATIONS, seed)?;
    let (rate_extracted, user_rates, beam) = match p.beam {
        Some(r) => (r.rate, problem.user_rates(&outer(&r.w)), Some(r.w)),
        None => (0.0, vec![0.0; problem.users.len()], None),
    };
    Ok(Extraction {
        covariance: p.covariance,
        rate: p.rate,
        rate_extracted,
        feasible: beam.is_some(),
        beam,
        user_rates,
        extra_iters: p.extra_iters,
    })
}

/// Proposed scheme with a seeded random initial phase configuration.
pub fn alternate(ch: &ChannelRealization, cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    alternate_from(ch, cfg, seed, None)
}

/// Proposed scheme. With `init = None` the initial phases are drawn from the
/// algorithm RNG, redrawing until the sensing threshold is reachable.
pub fn alternate_from(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    seed: u64,
    init: Option<&PhaseConfig>,
) -> Result<RunResult> {
    let started = Instant::now();
    let a = target_steering(cfg)?;
    let (mut phase, redraws) = match init {
        Some(p) => {
            if !BeamformProblem::for_phase(p, ch, cfg)?.is_feasible() {
                return Ok(RunResult::infeasible(Scheme::Proposed, seed, 0, cfg.mrs, started));
            }
            (p.clone(), 0)
        }
        None => {
            let mut rng = algorithm_rng(seed);
            match draw_phase(&mut rng, cfg, |p| Ok(BeamformProblem::for_phase(p, ch, cfg)?.is_feasible()))? {
                Some(found) => found,
                None => {
                    return Ok(RunResult::infeasible(Scheme::Proposed, seed, MAX_REDRAWS, cfg.mrs, started))
                }
            }
        }
    };

    let opts = ScaOptions::from_config(cfg);
    let stop = cfg.vartheta_phase.min(cfg.theta_outer);
    let mut problem = BeamformProblem::for_phase(&phase, ch, cfg)?;
    let mut w = problem.default_init()?;
    let mut rate = problem.rate(&w);
    let mut history = vec![rate];
    let mut inner_total = 0;
    let mut sweeps_total = 0;
    let mut outer = 0;
    let mut converged = false;

    while outer < cfg.max_outer {
        outer += 1;
        let start_rate = rate;

        let bf = match sca(&problem, Some(&w), &opts) {
            Ok(bf) => bf,
            Err(Error::NoConvergence { iterations }) => {
                log::warn!("seed {seed}: SDP stalled after {iterations} Newton steps, keeping incumbent");
                break;
            }
            Err(e) => return Err(e),
        };
        inner_total += bf.inner_iters;
        w = bf.covariance.matrix;
        rate = bf.rate;
        history.push(rate);

        let obj = PhaseObjective::new(&w, ch, &a, cfg.sigma2, cfg.gain_threshold());
        let ps = local_search_with(&obj, &phase, cfg.vartheta_phase, cfg.max_inner);
        sweeps_total += ps.sweeps;
        phase = ps.phase;
        problem = BeamformProblem::for_phase(&phase, ch, cfg)?;
        rate = problem.rate(&w);
        history.push(rate);

        if (rate - start_rate).abs() < stop {
            converged = true;
            break;
        }
    }

    let ext = extract(w, &problem, &opts, seed)?;
    if ext.rate != rate {
        history.push(ext.rate);
    }
    Ok(RunResult {
        scheme: Scheme::Proposed,
        rate_relaxed: ext.rate,
        rate_extracted: ext.rate_extracted,
        gain: cfg.normalized_gain(problem.gain(&ext.covariance)),
        feasible: true,
        extraction_feasible: ext.feasible,
        outer_iters: outer,
        inner_iters_total: inner_total + ext.extra_iters,
        phase_sweeps_total: sweeps_total,
        wall_time: started.elapsed().as_secs_f64(),
        seed,
        redraws,
        converged,
        user_rates: problem.user_rates(&ext.covariance),
        user_rates_extracted: ext.user_rates,
        history,
        phase: Some(phase),
        covariance: Some(ext.covariance),
        beam: ext.beam,
    })
}

/// Beamforming over the direct BS→MR links only. There is no RIS path to
/// the target, so no sensing constraint is imposed and the gain is 0.
pub fn run_without_ris(ch: &ChannelRealization, cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let problem = BeamformProblem {
        users: ch.h_direct.iter().map(|h| h.map(|z| z.conj())).collect(),
        sensing: None,
        threshold: 0.0,
        p_max: cfg.p_max,
        sigma2: cfg.sigma2,
    };
    let (w, inner, converged, mut history) = solve_fixed(&problem, cfg, seed)?;
    let ext = extract(w, &problem, &ScaOptions::from_config(cfg), seed)?;
    if history.last() != Some(&ext.rate) {
        history.push(ext.rate);
    }
    Ok(RunResult {
        scheme: Scheme::WithoutRis,
        rate_relaxed: ext.rate,
        rate_extracted: ext.rate_extracted,
        gain: 0.0,
        feasible: true,
        extraction_feasible: ext.feasible,
        outer_iters: 1,
        inner_iters_total: inner + ext.extra_iters,
        phase_sweeps_total: 0,
        wall_time: started.elapsed().as_secs_f64(),
        seed,
        redraws: 0,
        converged,
        user_rates: problem.user_rates(&ext.covariance),
        user_rates_extracted: ext.user_rates,
        history,
        phase: None,
        covariance: Some(ext.covariance),
        beam: ext.beam,
    })
}

fn solve_fixed(problem: &BeamformProblem, cfg: &ScenarioConfig, seed: u64) -> Result<(CMatrix, usize, bool, Vec<f64>)> {
    let w0 = problem.default_init()?;
    match sca(problem, Some(&w0), &ScaOptions::from_config(cfg)) {
        Ok(out) => {
            let history = out.history.iter().map(|s| s.rate).collect();
            Ok((out.covariance.matrix, out.inner_iters, out.converged, history))
        }
        Err(Error::NoConvergence { iterations }) => {
            log::warn!("seed {seed}: SDP stalled after {iterations} Newton steps, keeping start point");
            let r = problem.rate(&w0);
            Ok((w0, 0, false, vec![r]))
        }
        Err(e) => Err(e),
    }
}

/// Random phases held fixed, beamforming optimized. Uses the same first
/// draw as [`alternate`] for the same seed.
pub fn run_rps(ch: &ChannelRealization, cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let phase = rps_phase(cfg, seed);
    let problem = BeamformProblem::for_phase(&phase, ch, cfg)?;
    if !problem.is_feasible() {
        return Ok(RunResult::infeasible(Scheme::Rps, seed, 0, cfg.mrs, started));
    }
    let (w, inner, converged, mut history) = solve_fixed(&problem, cfg, seed)?;
    let ext = extract(w, &problem, &ScaOptions::from_config(cfg), seed)?;
    if history.last() != Some(&ext.rate) {
        history.push(ext.rate);
    }
    Ok(RunResult {
        scheme: Scheme::Rps,
        rate_relaxed: ext.rate,
        rate_extracted: ext.rate_extracted,
        gain: cfg.normalized_gain(problem.gain(&ext.covariance)),
        feasible: true,
        extraction_feasible: ext.feasible,
        outer_iters: 1,
        inner_iters_total: inner + ext.extra_iters,
        phase_sweeps_total: 0,
        wall_time: started.elapsed().as_secs_f64(),
        seed,
        redraws: 0,
        converged,
        user_rates: problem.user_rates(&ext.covariance),
        user_rates_extracted: ext.user_rates,
        history,
        phase: Some(phase),
        covariance: Some(ext.covariance),
        beam: ext.beam,
    })
}

/// The phase configuration [`run_rps`] uses for `seed`.
pub fn rps_phase(cfg: &ScenarioConfig, seed: u64) -> PhaseConfig {
    PhaseConfig::random(cfg.ris_elements(), cfg.phase_bits, &mut algorithm_rng(seed))
}

/// Equal power per antenna, co-phased with the dominant eigenvector of the
/// aggregate cascaded channel.
pub fn apt_beam(problem: &BeamformProblem) -> Result<CVector> {
    let n = problem.antennas();
    let mut agg = CMatrix::zeros(n, n);
    for q in &problem.users {
        agg += outer(q);
    }
    let v = hermitian_eig(&agg)?.vector(0);
    let amp = (problem.p_max / n as f64).sqrt();
    Ok(v.map(|z| {
        if z.norm() > 0.0 {
            Complex64::from_polar(amp, z.arg())
        } else {
            Complex64::from(amp)
        }
    }))
}

/// Fixed equal-power beam with phase search over the RIS.
pub fn run_apt(ch: &ChannelRealization, cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    let started = Instant::now();
    let a = target_steering(cfg)?;
    let mut rng = algorithm_rng(seed);
    let mut beam = CVector::zeros(cfg.antennas);
    let found = draw_phase(&mut rng, cfg, |p| {
        let problem = BeamformProblem::for_phase(p, ch, cfg)?;
        beam = apt_beam(&problem)?;
        Ok(problem.meets_threshold(problem.gain_vec(&beam)))
    })?;
    let Some((init, redraws)) = found else {
        return Ok(RunResult::infeasible(Scheme::Apt, seed, MAX_REDRAWS, cfg.mrs, started));
    };

    let w = outer(&beam);
    let obj = PhaseObjective::new(&w, ch, &a, cfg.sigma2, cfg.gain_threshold());
    let start_rate = obj.rate(&init);
    let ps = local_search_with(&obj, &init, cfg.vartheta_phase, cfg.max_inner);
    let problem = BeamformProblem::for_phase(&ps.phase, ch, cfg)?;
    let rate = problem.rate(&w);
    Ok(RunResult {
        scheme: Scheme::Apt,
        rate_relaxed: rate,
        rate_extracted: rate,
        gain: cfg.normalized_gain(problem.gain(&w)),
        feasible: true,
        extraction_feasible: true,
        outer_iters: 1,
        inner_iters_total: 0,
        phase_sweeps_total: ps.sweeps,
        wall_time: started.elapsed().as_secs_f64(),
        seed,
        redraws,
        converged: !ps.capped,
        user_rates: problem.user_rates(&w),
        user_rates_extracted: problem.user_rates(&w),
        history: vec![start_rate, rate],
        phase: Some(ps.phase),
        covariance: Some(w),
        beam: Some(beam),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::SdpOptions;
    use crate::channel::gen_channels;
    use crate::numerics::trace;
    use crate::scenario::default_scenario;

    fn small_config() -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.antennas = 4;
        cfg.mrs = 3;
        cfg.mr_positions.truncate(3);
        cfg.ris_rows = 2;
        cfg.ris_cols = 4;
        cfg.phase_bits = 2;
        cfg
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()).unwrap(), s);
        }
        assert_eq!(Scheme::parse("Without-RIS").unwrap(), Scheme::WithoutRis);
        assert!(Scheme::parse("magic").is_err());
    }

    #[test]
    fn single_element_single_user_matches_two_case_oracle() {
        let mut cfg = default_scenario();
        cfg.antennas = 3;
        cfg.mrs = 1;
        cfg.mr_positions.truncate(1);
        cfg.ris_rows = 1;
        cfg.ris_cols = 1;
        cfg.phase_bits = 1;
        cfg.gamma_th = 0.0;
        cfg.delta_sca = 1e-12;
        for seed in 0..5 {
            let ch = gen_channels(&cfg, seed);
            let r = alternate(&ch, &cfg, seed).unwrap();
            // with one element both phases give the same cascaded channel norm
            let best = [0u32, 1]
                .iter()
                .map(|&m| {
                    let p = PhaseConfig::new(vec![m], 1).unwrap();
                    let eff = crate::metrics::EffectiveChannel::new(&ch, &p);
                    let q = &eff.user_vectors()[0];
                    (1.0 + cfg.p_max * q.norm_squared() / cfg.sigma2).log2()
                })
                .fold(0.0f64, f64::max);
            assert!((r.rate_relaxed - best).abs() <= 1e-5 * best, "{} vs {}", r.rate_relaxed, best);
        }
    }

    #[test]
    fn zero_channels_converge_immediately() {
        let mut cfg = small_config();
        cfg.gamma_th = 0.0;
        let ch = ChannelRealization::zeros(cfg.ris_elements(), cfg.antennas, cfg.mrs);
        let r = alternate(&ch, &cfg, 1).unwrap();
        assert_eq!(r.rate_relaxed, 0.0);
        assert_eq!(r.outer_iters, 1);
        assert!(r.converged);
    }

    #[test]
    fn unreachable_threshold_is_reported() {
        let mut cfg = small_config();
        cfg.gamma_th = 1e12;
        let ch = gen_channels(&cfg, 2);
        for scheme in [Scheme::Proposed, Scheme::Rps, Scheme::Apt] {
            let r = scheme.run(&ch, &cfg, 2).unwrap();
            assert!(!r.feasible);
            assert_eq!(r.rate_relaxed, 0.0);
            assert_eq!(r.rate_extracted, 0.0);
        }
    }

    #[test]
    fn alternation_is_monotone_and_feasible() {
        let cfg = small_config();
        for seed in 0..5 {
            let ch = gen_channels(&cfg, seed);
            let r = alternate(&ch, &cfg, seed).unwrap();
            assert!(r.feasible);
            for pair in r.history.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9, "{:?}", r.history);
            }
            let w = r.covariance.unwrap();
            assert!(trace(&w).re <= cfg.p_max * (1.0 + 1e-8));
            assert!(r.gain >= cfg.gamma_th * (1.0 - 1e-8));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small_config();
        let ch = gen_channels(&cfg, 3);
        for scheme in Scheme::ALL {
            let a = scheme.run(&ch, &cfg, 3).unwrap();
            let b = scheme.run(&ch, &cfg, 3).unwrap();
            assert_eq!(a.rate_relaxed, b.rate_relaxed);
            assert_eq!(a.rate_extracted, b.rate_extracted);
            assert_eq!(a.phase, b.phase);
            assert_eq!(a.history, b.history);
        }
    }

    #[test]
    fn without_ris_single_user_is_mrt() {
        let mut cfg = small_config();
        cfg.mrs = 1;
        cfg.mr_positions.truncate(1);
        cfg.delta_sca = 1e-12;
        for seed in 0..5 {
            let ch = gen_channels(&cfg, seed);
            let r = run_without_ris(&ch, &cfg, seed).unwrap();
            let expected = (1.0 + cfg.p_max * ch.h_direct[0].norm_squared() / cfg.sigma2).log2();
            assert!((r.rate_relaxed - expected).abs() <= 1e-5 * expected);
        }
        let ch = ChannelRealization::zeros(cfg.ris_elements(), cfg.antennas, cfg.mrs);
        assert_eq!(run_without_ris(&ch, &cfg, 0).unwrap().rate_relaxed, 0.0);
    }

    #[test]
    fn without_ris_ignores_the_surface() {
        let mut cfg = small_config();
        let ch = gen_channels(&cfg, 4);
        let base = run_without_ris(&ch, &cfg, 4).unwrap().rate_relaxed;
        let mut other = ch.clone();
        other.h_bi *= Complex64::new(0.0, 3.0);
        assert_eq!(run_without_ris(&other, &cfg, 4).unwrap().rate_relaxed, base);
        cfg.phase_bits = 4;
        assert_eq!(run_without_ris(&ch, &cfg, 4).unwrap().rate_relaxed, base);
    }

    #[test]
    fn proposed_dominates_rps_from_same_start() {
        let cfg = small_config();
        for seed in 0..5 {
            let ch = gen_channels(&cfg, seed);
            let rps = run_rps(&ch, &cfg, seed).unwrap();
            let prop = alternate_from(&ch, &cfg, seed, rps.phase.as_ref()).unwrap();
            assert!(prop.rate_relaxed >= rps.rate_relaxed - 1e-9);
        }
    }

    #[test]
    fn apt_beam_uses_full_power_and_is_dominated() {
        let mut cfg = small_config();
        cfg.gamma_th = 0.0;
        for seed in 0..5 {
            let ch = gen_channels(&cfg, seed);
            let apt = run_apt(&ch, &cfg, seed).unwrap();
            let beam = apt.beam.as_ref().unwrap();
            assert!((beam.norm_squared() - cfg.p_max).abs() <= 1e-12 * cfg.p_max);
            for z in beam.iter() {
                assert!((z.norm_sqr() - cfg.p_max / cfg.antennas as f64).abs() < 1e-12 * cfg.p_max);
            }
            let problem = BeamformProblem::for_phase(apt.phase.as_ref().unwrap(), &ch, &cfg).unwrap();
            let opts = ScaOptions {
                max_iters: 100,
                delta: 1e-9,
                sdp: SdpOptions::default(),
            };
            let relaxed = sca(&problem, Some(&outer(beam)), &opts).unwrap();
            assert!(relaxed.rate >= apt.rate_relaxed - 1e-9);
        }
    }

    #[test]
    fn apt_single_antenna_is_full_power_scalar() {
        let mut cfg = small_config();
        cfg.gamma_th = 0.0;
        cfg.antennas = 1;
        let ch = gen_channels(&cfg, 5);
        let r = run_apt(&ch, &cfg, 5).unwrap();
        let b = r.beam.unwrap();
        assert!((b[0].norm() - cfg.p_max.sqrt()).abs() < 1e-12);
    }
}
