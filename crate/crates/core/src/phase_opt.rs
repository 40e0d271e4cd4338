//! Discrete RIS phase selection for a fixed transmit covariance.
//!
//! Every rate and gain here is a Hermitian quadratic form in the phase vector
//! `u` (`u[l] = e^{-jφ_l}`): `Tr(W Q_k) = u^H G_k W G_k^H u` and the
//! beampattern gain is `u^H G_s W G_s^H u` with `G_s = diag(conj(a)) H_bi`.
//! Changing one element of `u` therefore updates each form in O(L).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::metrics::{cascade, rate_from_snr};
use crate::numerics::{diag, quadratic_form, CMatrix, CVector};
use crate::scenario::{target_steering, ScenarioConfig};

/// Largest `L·e` accepted by [`exhaustive_search`].
pub const EXHAUSTIVE_BIT_LIMIT: usize = 20;

/// Per-element phase indices `m[l] ∈ {0, …, 2^e − 1}`; `φ_l = 2π m[l] / 2^e`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub levels: Vec<u32>,
    pub bits: u32,
}

impl PhaseConfig {
    pub fn new(levels: Vec<u32>, bits: u32) -> Result<Self> {
        let p = PhaseConfig { levels, bits };
        if bits == 0 || bits > 16 || p.levels.iter().any(|&m| m as usize >= p.alphabet()) {
            return Err(Error::InvalidConfig(format!(
                "phase indices must lie in 0..2^{bits}"
            )));
        }
        Ok(p)
    }

    pub fn zeros(elements: usize, bits: u32) -> Self {
        PhaseConfig {
            levels: vec![0; elements],
            bits,
        }
    }

    pub fn random<R: Rng + ?Sized>(elements: usize, bits: u32, rng: &mut R) -> Self {
        let n = 1u32 << bits;
        PhaseConfig {
            levels: (0..elements).map(|_| rng.random_range(0..n)).collect(),
            bits,
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        1usize << self.bits
    }

    pub fn angle_of(&self, level: u32) -> f64 {
        2.0 * PI * level as f64 / self.alphabet() as f64
    }

    pub fn angle(&self, l: usize) -> f64 {
        self.angle_of(self.levels[l])
    }

    /// `e^{jφ_l}`.
    pub fn unit(&self, l: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angle(l))
    }

    pub fn unit_vector(&self) -> CVector {
        CVector::from_fn(self.len(), |l, _| self.unit(l))
    }
}

/// `Φ = diag(e^{jφ_1}, …, e^{jφ_L})`.
pub fn phase_matrix(p: &PhaseConfig) -> CMatrix {
    let entries: Vec<Complex64> = (0..p.len()).map(|l| p.unit(l)).collect();
    diag(&entries)
}

/// Rate and sensing gain as quadratic forms in `u` for a fixed covariance.
#[derive(Debug, Clone)]
pub struct PhaseObjective {
    users: Vec<CMatrix>,
    sensing: CMatrix,
    sigma2: f64,
    threshold: f64,
}

impl PhaseObjective {
    /// `a` is the target steering vector; `threshold` is in absolute units.
    pub fn new(w: &CMatrix, ch: &ChannelRealization, a: &CVector, sigma2: f64, threshold: f64) -> Self {
        let form = |g: CMatrix| &g * w * g.adjoint();
        let users = ch.h_ir.iter().map(|h| form(cascade(h, &ch.h_bi))).collect();
        let a_conj = a.map(|z| z.conj());
        let sensing = form(cascade(&a_conj, &ch.h_bi));
        PhaseObjective {
            users,
            sensing,
            sigma2,
            threshold,
        }
    }

    fn rate_from_values(&self, values: &[f64]) -> f64 {
        values.iter().map(|v| rate_from_snr(v / self.sigma2)).sum()
    }

    pub fn rate(&self, p: &PhaseConfig) -> f64 {
        let u = conj_units(p);
        let values: Vec<f64> = self.users.iter().map(|m| quadratic_form(m, &u)).collect();
        self.rate_from_values(&values)
    }

    pub fn gain(&self, p: &PhaseConfig) -> f64 {
        quadratic_form(&self.sensing, &conj_units(p)).max(0.0)
    }

    pub fn is_feasible_gain(&self, gain: f64) -> bool {
        self.threshold <= 0.0 || gain >= self.threshold * (1.0 - 1e-10)
    }
}

fn conj_units(p: &PhaseConfig) -> CVector {
    p.unit_vector().map(|z| z.conj())
}

/// Incrementally maintained `M u` and `u^H M u` for one quadratic form.
#[derive(Debug, Clone)]
struct FormState {
    mu: CVector,
    value: f64,
}

impl FormState {
    fn new(m: &CMatrix, u: &CVector) -> Self {
        let mu = m * u;
        let value = u.dotc(&mu).re;
        FormState { mu, value }
    }

    /// Value after `u[l] += delta`.
    fn probe(&self, m: &CMatrix, l: usize, delta: Complex64) -> f64 {
        self.value + 2.0 * (delta.conj() * self.mu[l]).re + delta.norm_sqr() * m[(l, l)].re
    }

    fn apply(&mut self, m: &CMatrix, l: usize, delta: Complex64, value: f64) {
        let col = m.column(l);
        for (dst, src) in self.mu.iter_mut().zip(col.iter()) {
            *dst += src * delta;
        }
        self.value = value;
    }
}

/// Result of a coordinate local search.
#[derive(Debug, Clone)]
pub struct PhaseSearchOutcome {
    pub phase: PhaseConfig,
    pub rate: f64,
    pub gain: f64,
    /// Full passes over the elements.
    pub sweeps: usize,
    /// True when the pass cap stopped the search.
    pub capped: bool,
    /// Rate after every element update, starting with the initial rate.
    pub trace: Vec<f64>,
}

/// Coordinate local search over the discrete alphabet, elements visited in
/// order `0..L` each pass.
///
/// For each element every level is tried with the others held fixed. Levels
/// whose gain falls below the sensing threshold are skipped whenever at least
/// one level of that element meets it; the best remaining level wins, with
/// ties going to the smallest index. Passes repeat until one improves the
/// rate by at most `cfg.vartheta_phase`, or `cfg.max_inner` passes have run.
pub fn local_search(
    w: &CMatrix,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    init: &PhaseConfig,
) -> Result<PhaseSearchOutcome> {
    let a = target_steering(cfg)?;
    let obj = PhaseObjective::new(w, ch, &a, cfg.sigma2, cfg.gain_threshold());
    Ok(local_search_with(&obj, init, cfg.vartheta_phase, cfg.max_inner))
}

/// Strict improvement beyond roundoff, so analytically tied levels resolve
/// to the smallest index.
fn beats(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-12 * (1.0 + incumbent.abs())
}

pub fn local_search_with(
    obj: &PhaseObjective,
    init: &PhaseConfig,
    tolerance: f64,
    max_passes: usize,
) -> PhaseSearchOutcome {
    let mut phase = init.clone();
    let alphabet: Vec<Complex64> = (0..phase.alphabet() as u32)
        .map(|m| Complex64::from_polar(1.0, -phase.angle_of(m)))
        .collect();
    let mut u = conj_units(&phase);

    let mut users: Vec<FormState> = obj.users.iter().map(|m| FormState::new(m, &u)).collect();
    let mut sensing = FormState::new(&obj.sensing, &u);
    let mut rate = obj.rate_from_values(&users.iter().map(|s| s.value).collect::<Vec<_>>());
    let mut trace = vec![rate];
    let mut sweeps = 0;
    let mut capped = false;
    let mut values = vec![0.0; users.len()];

    loop {
        let pass_start = rate;
        sweeps += 1;
        for l in 0..phase.len() {
            let current = u[l];
            let mut best: Option<(u32, f64, f64)> = None;
            let mut any_feasible = false;
            let mut candidates = Vec::with_capacity(alphabet.len());
            for (m, &cand) in alphabet.iter().enumerate() {
                let delta = cand - current;
                for (v, (state, mat)) in values.iter_mut().zip(users.iter().zip(&obj.users)) {
                    *v = state.probe(mat, l, delta);
                }
                let r = obj.rate_from_values(&values);
                let g = sensing.probe(&obj.sensing, l, delta);
                let feasible = obj.is_feasible_gain(g);
                any_feasible |= feasible;
                candidates.push((m as u32, r, g, feasible));
            }
            for &(m, r, g, feasible) in &candidates {
                if any_feasible && !feasible {
                    continue;
                }
                if best.is_none_or(|(_, br, _)| beats(r, br)) {
                    best = Some((m, r, g));
                }
            }
            if !any_feasible {
                // keep the incumbent level for this element
                trace.push(rate);
                continue;
            }
            let (m, r, g) = best.expect("alphabet is nonempty");
            if m != phase.levels[l] {
                let delta = alphabet[m as usize] - current;
                for (state, mat) in users.iter_mut().zip(&obj.users) {
                    let v = state.probe(mat, l, delta);
                    state.apply(mat, l, delta, v);
                }
                sensing.apply(&obj.sensing, l, delta, g);
                u[l] = alphabet[m as usize];
                phase.levels[l] = m;
                rate = r;
            }
            trace.push(rate);
        }

        // refresh from scratch so roundoff cannot accumulate across passes
        users = obj.users.iter().map(|m| FormState::new(m, &u)).collect();
        sensing = FormState::new(&obj.sensing, &u);
        rate = obj.rate_from_values(&users.iter().map(|s| s.value).collect::<Vec<_>>());

        if rate - pass_start <= tolerance {
            break;
        }
        if sweeps >= max_passes {
            capped = true;
            break;
        }
    }

    PhaseSearchOutcome {
        gain: sensing.value.max(0.0),
        phase,
        rate,
        sweeps,
        capped,
        trace,
    }
}

/// Global optimum over all `2^(eL)` configurations, feasible ones preferred,
/// ties resolved towards the lexicographically smallest index vector.
pub fn exhaustive_search(
    w: &CMatrix,
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
) -> Result<(PhaseConfig, f64)> {
    let a = target_steering(cfg)?;
    let obj = PhaseObjective::new(w, ch, &a, cfg.sigma2, cfg.gain_threshold());
    exhaustive_search_with(&obj, ch.ris_elements(), cfg.phase_bits)
}

pub fn exhaustive_search_with(
    obj: &PhaseObjective,
    elements: usize,
    bits: u32,
) -> Result<(PhaseConfig, f64)> {
    let total_bits = elements * bits as usize;
    if total_bits > EXHAUSTIVE_BIT_LIMIT {
        return Err(Error::InstanceTooLarge {
            bits: total_bits,
            limit: EXHAUSTIVE_BIT_LIMIT,
        });
    }
    let alphabet = 1u64 << bits;
    let mut best: Option<(bool, f64, PhaseConfig)> = None;
    let mut p = PhaseConfig::zeros(elements, bits);
    for index in 0..(1u64 << total_bits) {
        // element 0 is the most significant digit, so index order is lexicographic
        let mut rest = index;
        for l in (0..elements).rev() {
            p.levels[l] = (rest % alphabet) as u32;
            rest /= alphabet;
        }
        let feasible = obj.is_feasible_gain(obj.gain(&p));
        let rate = obj.rate(&p);
        let better = match &best {
            None => true,
            Some((bf, br, _)) => (feasible && !bf) || (feasible == *bf && beats(rate, *br)),
        };
        if better {
            best = Some((feasible, rate, p.clone()));
        }
    }
    let (_, rate, phase) = best.expect("at least one configuration");
    Ok((phase, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use crate::metrics::{sum_rate_cov, EffectiveChannel};
    use crate::numerics::{outer, ONE};
    use crate::scenario::default_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn tiny_config(l: usize, bits: u32, k: usize) -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.ris_rows = 1;
        cfg.ris_cols = l;
        cfg.phase_bits = bits;
        cfg.antennas = 3;
        cfg.mrs = k;
        cfg.mr_positions.truncate(k);
        cfg.sigma2 = 1.0;
        cfg.gamma_th = 0.0;
        cfg.sensing_reference = 1.0;
        cfg.vartheta_phase = 1e-12;
        cfg
    }

    fn random_case(seed: u64, cfg: &ScenarioConfig) -> (ChannelRealization, CMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, n, k) = (cfg.ris_elements(), cfg.antennas, cfg.mrs);
        let mut ch = ChannelRealization::zeros(l, n, k);
        ch.h_bi = CMatrix::from_fn(l, n, |_, _| rand_c(&mut rng));
        for h in ch.h_ir.iter_mut() {
            *h = CVector::from_fn(l, |_, _| rand_c(&mut rng));
        }
        let w = CVector::from_fn(n, |_, _| rand_c(&mut rng));
        (ch, outer(&w))
    }

    #[test]
    fn phase_matrix_cases() {
        let id = phase_matrix(&PhaseConfig::zeros(3, 2));
        assert_eq!(id, CMatrix::identity(3, 3));

        let m = phase_matrix(&PhaseConfig::new(vec![1], 1).unwrap());
        assert!((m[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);

        let m = phase_matrix(&PhaseConfig::new(vec![0, 1, 2, 3], 2).unwrap());
        let expected = [ONE, c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (i, e) in expected.iter().enumerate() {
            assert!((m[(i, i)] - e).norm() < 1e-15);
            assert!((m[(i, i)].norm() - 1.0).abs() < 1e-15);
        }
        assert_eq!(m[(0, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn invalid_levels_rejected() {
        assert!(PhaseConfig::new(vec![4], 2).is_err());
    }

    #[test]
    fn objective_matches_metrics() {
        let cfg = tiny_config(4, 2, 3);
        let (ch, w) = random_case(1, &cfg);
        let a = target_steering(&cfg).unwrap();
        let obj = PhaseObjective::new(&w, &ch, &a, cfg.sigma2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let p = PhaseConfig::random(4, 2, &mut rng);
            let eff = EffectiveChannel::new(&ch, &p);
            let expected = sum_rate_cov(&eff, &w, cfg.sigma2).unwrap();
            assert!((obj.rate(&p) - expected).abs() < 1e-12 * (1.0 + expected));
            let g = crate::metrics::beampattern_gain(&a, &p, &ch.h_bi, &w).unwrap();
            assert!((obj.gain(&p) - g).abs() < 1e-12 * (1.0 + g));
        }
    }

    #[test]
    fn two_point_exhaustion() {
        let cfg = tiny_config(1, 1, 2);
        for seed in 0..10 {
            let (ch, w) = random_case(seed, &cfg);
            let out = local_search(&w, &ch, &cfg, &PhaseConfig::zeros(1, 1)).unwrap();
            let rates: Vec<f64> = (0..2u32)
                .map(|m| {
                    let p = PhaseConfig::new(vec![m], 1).unwrap();
                    sum_rate_cov(&EffectiveChannel::new(&ch, &p), &w, 1.0).unwrap()
                })
                .collect();
            let best = rates[0].max(rates[1]);
            assert!((out.rate - best).abs() < 1e-12 * (1.0 + best));
            let (ep, er) = exhaustive_search(&w, &ch, &cfg).unwrap();
            assert_eq!(ep, out.phase);
            assert!((er - out.rate).abs() < 1e-12 * (1.0 + er));
        }
    }

    #[test]
    fn fixed_point_takes_one_pass() {
        let cfg = tiny_config(4, 2, 2);
        let (ch, w) = random_case(4, &cfg);
        let (opt, _) = exhaustive_search(&w, &ch, &cfg).unwrap();
        let out = local_search(&w, &ch, &cfg, &opt).unwrap();
        assert_eq!(out.phase, opt);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn local_never_beats_exhaustive() {
        let cfg = tiny_config(4, 1, 3);
        let mut ratios = Vec::new();
        for seed in 0..20 {
            let (ch, w) = random_case(50 + seed, &cfg);
            let out = local_search(&w, &ch, &cfg, &PhaseConfig::zeros(4, 1)).unwrap();
            let (_, best) = exhaustive_search(&w, &ch, &cfg).unwrap();
            assert!(out.rate <= best + 1e-12);
            ratios.push(out.rate / best);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean >= 0.9, "mean ratio {mean}");
    }

    #[test]
    fn exhaustive_dominates_with_four_levels() {
        let cfg = tiny_config(4, 2, 3);
        let (ch, w) = random_case(77, &cfg);
        let out = local_search(&w, &ch, &cfg, &PhaseConfig::zeros(4, 2)).unwrap();
        let (_, best) = exhaustive_search(&w, &ch, &cfg).unwrap();
        assert!(best >= out.rate - 1e-12);
    }

    #[test]
    fn symmetric_channels_pick_lexicographic_optimum() {
        let cfg = tiny_config(2, 1, 1);
        let mut ch = ChannelRealization::zeros(2, 3, 1);
        for l in 0..2 {
            for n in 0..3 {
                ch.h_bi[(l, n)] = ONE;
            }
            ch.h_ir[0][l] = ONE;
        }
        let w = CMatrix::from_element(3, 3, ONE);
        let (p, _) = exhaustive_search(&w, &ch, &cfg).unwrap();
        // (0,0) and (1,1) are both optimal
        assert_eq!(p.levels, vec![0, 0]);
    }

    #[test]
    fn exhaustive_guard() {
        let cfg = tiny_config(11, 2, 1);
        let (ch, w) = random_case(1, &cfg);
        assert!(matches!(
            exhaustive_search(&w, &ch, &cfg),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn every_update_is_monotone_and_incremental_matches_full() {
        let mut cfg = tiny_config(16, 3, 4);
        cfg.ris_rows = 4;
        cfg.ris_cols = 4;
        for seed in 0..10 {
            let (ch, w) = random_case(500 + seed, &cfg);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = PhaseConfig::random(16, 3, &mut rng);
            let out = local_search(&w, &ch, &cfg, &init).unwrap();
            for pair in out.trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-12);
            }
            let full = sum_rate_cov(&EffectiveChannel::new(&ch, &out.phase), &w, 1.0).unwrap();
            assert!((full - out.rate).abs() <= 1e-12 * (1.0 + full));
            let last = *out.trace.last().unwrap();
            assert!((last - full).abs() <= 1e-12 * (1.0 + full));
        }
    }

    #[test]
    fn feasibility_is_preserved() {
        let mut cfg = tiny_config(9, 2, 3);
        cfg.ris_rows = 3;
        cfg.ris_cols = 3;
        let a = target_steering(&cfg).unwrap();
        for seed in 0..10 {
            let (ch, w) = random_case(900 + seed, &cfg);
            let init = PhaseConfig::zeros(9, 2);
            let obj0 = PhaseObjective::new(&w, &ch, &a, 1.0, 0.0);
            // threshold just under the initial gain so the filter binds
            cfg.gamma_th = 0.999 * obj0.gain(&init);
            let out = local_search(&w, &ch, &cfg, &init).unwrap();
            assert!(out.gain >= cfg.gain_threshold() * (1.0 - 1e-10));
            assert!(out.rate >= obj0.rate(&init) - 1e-12);
        }
    }

    #[test]
    fn pass_cap_is_reported() {
        let mut cfg = tiny_config(16, 3, 4);
        cfg.ris_rows = 4;
        cfg.ris_cols = 4;
        cfg.max_inner = 1;
        let (ch, w) = random_case(3, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = local_search(&w, &ch, &cfg, &PhaseConfig::random(16, 3, &mut rng)).unwrap();
        assert_eq!(out.sweeps, 1);
        assert!(out.capped);
    }

    proptest! {
        #[test]
        fn random_levels_stay_on_the_alphabet(seed in any::<u64>(), l in 1usize..=64, bits in 1u32..=5) {
            let p = PhaseConfig::random(l, bits, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(p.len(), l);
            for i in 0..l {
                prop_assert!((p.levels[i] as usize) < 1 << bits);
                prop_assert!((p.unit(i).norm() - 1.0).abs() < 1e-15);
                let expected = std::f64::consts::TAU * p.levels[i] as f64 / (1u32 << bits) as f64;
                prop_assert!((p.angle(i) - expected).abs() < 1e-15);
            }
        }

        #[test]
        fn local_search_never_decreases(seed in any::<u64>()) {
            let cfg = tiny_config(4, 2, 2);
            let (ch, w) = random_case(seed, &cfg);
            let init = PhaseConfig::random(4, 2, &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            let obj = PhaseObjective::new(&w, &ch, &CVector::from_element(4, c(0.5, 0.0)), cfg.sigma2, 0.0);
            let start = obj.rate(&init);
            let out = local_search_with(&obj, &init, 1e-12, 50);
            prop_assert!(out.trace.windows(2).all(|x| x[1] >= x[0] - 1e-12));
            prop_assert!(out.rate >= start - 1e-12);
        }
    }
}
