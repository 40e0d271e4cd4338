//! Rician channel realizations for the BS→RIS and RIS→MR links.
//!
//! Each channel entry draws from its own ChaCha stream addressed by
//! `(seed, link, user, row, col)`, so a realization is a pure function of the
//! scenario and the seed, and enlarging one link never changes another.
//! Within an entry the draw order is: LoS phase, NLoS real part, NLoS
//! imaginary part.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::numerics::{CMatrix, CVector};
use crate::scenario::{distance, ScenarioConfig};

/// Link identifiers used in stream addressing and channel dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    BsRis = 0,
    RisMr = 1,
    Direct = 2,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::BsRis => "bs_ris",
            Link::RisMr => "ris_mr",
            Link::Direct => "direct",
        }
    }
}

/// One draw of every channel in the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// BS→RIS, `L × N`.
    pub h_bi: CMatrix,
    /// RIS→MR row vectors, one per MR, each of length `L`.
    pub h_ir: Vec<CVector>,
    /// Direct BS→MR row vectors (Without-RIS baseline), each of length `N`.
    pub h_direct: Vec<CVector>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn ris_elements(&self) -> usize {
        self.h_bi.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.h_bi.ncols()
    }

    pub fn users(&self) -> usize {
        self.h_ir.len()
    }

    /// All-zero channels with the given dimensions.
    pub fn zeros(ris_elements: usize, antennas: usize, users: usize) -> Self {
        ChannelRealization {
            h_bi: CMatrix::zeros(ris_elements, antennas),
            h_ir: vec![CVector::zeros(ris_elements); users],
            h_direct: vec![CVector::zeros(antennas); users],
            seed: 0,
        }
    }

    /// Writes `link,row,col,re,im` rows. `row` is the MR index for the
    /// per-user links and the RIS element for `bs_ris`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["link", "row", "col", "re", "im"])?;
        let mut put = |link: Link, r: usize, c: usize, z: Complex64| {
            w.write_record([
                link.name().to_string(),
                r.to_string(),
                c.to_string(),
                format!("{:e}", z.re),
                format!("{:e}", z.im),
            ])
        };
        for r in 0..self.h_bi.nrows() {
            for c in 0..self.h_bi.ncols() {
                put(Link::BsRis, r, c, self.h_bi[(r, c)])?;
            }
        }
        for (k, h) in self.h_ir.iter().enumerate() {
            for (l, z) in h.iter().enumerate() {
                put(Link::RisMr, k, l, *z)?;
            }
        }
        for (k, h) in self.h_direct.iter().enumerate() {
            for (n, z) in h.iter().enumerate() {
                put(Link::Direct, k, n, *z)?;
            }
        }
        w.flush().map_err(|e| crate::error::Error::io("<channel csv>", e))?;
        Ok(())
    }
}

/// Large-scale amplitude `sqrt(β0 d^-α)` with `d` clamped to at least 1 m.
pub fn path_amplitude(beta0: f64, d: f64, alpha: f64) -> f64 {
    (beta0 * d.max(1.0).powf(-alpha)).sqrt()
}

/// Seed-addressable stream for one channel entry.
pub fn entry_rng(seed: u64, link: Link, user: usize, row: usize, col: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((link as u64) << 60)
        | (((user as u64) & 0xFFFF) << 40)
        | (((row as u64) & 0xF_FFFF) << 20)
        | ((col as u64) & 0xF_FFFF);
    rng.set_stream(stream);
    rng
}

/// Unit-variance circularly symmetric complex Gaussian.
pub fn cscg<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

#[derive(Debug, Clone, Copy)]
struct RicianLink {
    los_weight: f64,
    nlos_weight: f64,
    los_amp: f64,
    nlos_amp: f64,
}

impl RicianLink {
    fn new(cfg: &ScenarioConfig, d: f64) -> Self {
        let kr = cfg.rician_factor;
        RicianLink {
            los_weight: (kr / (kr + 1.0)).sqrt(),
            nlos_weight: (1.0 / (kr + 1.0)).sqrt(),
            los_amp: path_amplitude(cfg.beta0, d, cfg.alpha_los),
            nlos_amp: path_amplitude(cfg.beta0, d, cfg.alpha_nlos),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        let (psi, g) = draw_parts(rng);
        let los = Complex64::from_polar(self.los_amp, -psi);
        los * self.los_weight + g * (self.nlos_amp * self.nlos_weight)
    }
}

/// LoS phase and unit-variance NLoS sample of one Rician entry, in draw order.
fn draw_parts(rng: &mut ChaCha8Rng) -> (f64, Complex64) {
    let psi: f64 = rng.random_range(0.0..2.0 * PI);
    (psi, cscg(rng))
}

/// Draws one realization for `cfg` using `seed`.
pub fn gen_channels(cfg: &ScenarioConfig, seed: u64) -> ChannelRealization {
    let l = cfg.ris_elements();
    let n = cfg.antennas;

    let bi = RicianLink::new(cfg, cfg.bs_ris_distance());
    let h_bi = CMatrix::from_fn(l, n, |r, c| {
        bi.draw(&mut entry_rng(seed, Link::BsRis, 0, r, c))
    });

    let h_ir = (0..cfg.mrs)
        .map(|k| {
            let link = RicianLink::new(cfg, cfg.ris_mr_distance(k));
            CVector::from_fn(l, |e, _| {
                link.draw(&mut entry_rng(seed, Link::RisMr, k, 0, e))
            })
        })
        .collect();

    let h_direct = (0..cfg.mrs)
        .map(|k| {
            let d = distance(&cfg.bs_pos, &cfg.mr_positions[k]);
            let amp = path_amplitude(cfg.beta0, d, cfg.alpha_nlos) * cfg.direct_blockage.sqrt();
            CVector::from_fn(n, |a, _| {
                cscg(&mut entry_rng(seed, Link::Direct, k, 0, a)) * amp
            })
        })
        .collect();

    ChannelRealization {
        h_bi,
        h_ir,
        h_direct,
        seed,
    }
}
