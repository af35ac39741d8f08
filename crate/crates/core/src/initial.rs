//! Initial-condition presets.
//!
//! Every preset returns a neutral, admissible state whose fields lie in the
//! dealiased band, so the semi-discrete energy balance holds from `t = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{combine, SimState};
use crate::spectral::{Grid, SpectralField2D};

/// `ρ = a cos x`, `σ = σ̄ + b cos y`, `ω = w sin x sin y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleMode {
    pub a: f64,
    pub b: f64,
    pub sigma_bar: f64,
    pub w: f64,
}

impl Default for SingleMode {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 0.25,
            sigma_bar: 1.0,
            w: 0.0,
        }
    }
}

/// Two offset Gaussian bumps, one per species, on a uniform background.
///
/// The second bump is rescaled so both species carry the same total mass.
/// `w` adds a counter-rotating vortex pair centred on the bumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianBlobs {
    pub background: f64,
    pub amplitude: f64,
    pub width: f64,
    pub separation: f64,
    pub w: f64,
}

impl Default for GaussianBlobs {
    fn default() -> Self {
        Self {
            background: 0.5,
            amplitude: 1.0,
            width: 0.5,
            separation: 2.0,
            w: 0.0,
        }
    }
}

/// Seeded random data on the modes `1 ≤ |k| ≤ kmax`.
///
/// Amplitudes are grid sup norms of ρ, σ − σ̄ and ω. The mean salt is set to
/// `max(|ρ| − (σ − σ̄)) + margin`, which makes both species positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSmooth {
    pub kmax: u32,
    pub rho_amp: f64,
    pub sigma_amp: f64,
    pub omega_amp: f64,
    pub margin: f64,
}

impl Default for RandomSmooth {
    fn default() -> Self {
        Self {
            kmax: 4,
            rho_amp: 0.5,
            sigma_amp: 0.5,
            omega_amp: 1.0,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    SingleMode(SingleMode),
    GaussianBlobs(GaussianBlobs),
    RandomSmooth(RandomSmooth),
}

impl Default for Preset {
    fn default() -> Self {
        Preset::RandomSmooth(RandomSmooth::default())
    }
}

impl Preset {
    /// Builds the state at `t = 0`. Only `RandomSmooth` uses `seed`.
    pub fn build(&self, grid: Grid, seed: u64) -> Result<SimState> {
        let mut state = match self {
            Preset::SingleMode(p) => single_mode(grid, p)?,
            Preset::GaussianBlobs(p) => gaussian_blobs(grid, p)?,
            Preset::RandomSmooth(p) => random_smooth(grid, p, seed)?,
        };
        for f in [&mut state.rho, &mut state.sigma, &mut state.omega] {
            f.dealias_in_place();
        }
        state.rho.remove_mean();
        state.omega.remove_mean();
        Ok(state)
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

fn single_mode(grid: Grid, p: &SingleMode) -> Result<SimState> {
    if !(p.sigma_bar >= p.a.abs() + p.b.abs()) {
        return Err(invalid(format!(
            "single-mode needs sigma_bar >= |a| + |b| ({} < {})",
            p.sigma_bar,
            p.a.abs() + p.b.abs()
        )));
    }
    let rho = SpectralField2D::from_fn(grid, |x, _| p.a * x.cos());
    let sigma = SpectralField2D::from_fn(grid, |_, y| p.sigma_bar + p.b * y.cos());
    let omega = SpectralField2D::from_fn(grid, |x, y| p.w * x.sin() * y.sin());
    SimState::new(0.0, rho, sigma, omega)
}

/// Signed periodic offset in `[-π, π)`.
fn wrap(d: f64) -> f64 {
    (d + PI).rem_euclid(2.0 * PI) - PI
}

fn gaussian_blobs(grid: Grid, p: &GaussianBlobs) -> Result<SimState> {
    if !(p.background >= 0.0 && p.amplitude >= 0.0 && p.width > 0.0) {
        return Err(invalid(
            "gaussian-blobs needs background >= 0, amplitude >= 0, width > 0".into(),
        ));
    }
    let centres = [(PI - 0.5 * p.separation, PI), (PI + 0.5 * p.separation, PI)];
    let bump = |(cx, cy): (f64, f64)| {
        move |x: f64, y: f64| {
            let (dx, dy) = (wrap(x - cx), wrap(y - cy));
            (-(dx * dx + dy * dy) / (2.0 * p.width * p.width)).exp()
        }
    };
    let b1 = SpectralField2D::from_fn(grid, bump(centres[0]));
    let b2 = SpectralField2D::from_fn(grid, bump(centres[1]));
    let ratio = if b2.mean() > 0.0 { b1.mean() / b2.mean() } else { 1.0 };
    let bg = SpectralField2D::constant(grid, p.background);
    let c1 = &bg + &(&b1 * p.amplitude);
    let c2 = &bg + &(&b2 * (p.amplitude * ratio));
    let (rho, sigma) = combine(&c1, &c2);
    let omega = &(&b1 - &b2) * p.w;
    SimState::new(0.0, rho, sigma, omega)
}

fn random_field(grid: Grid, kmax: i64, rng: &mut ChaCha8Rng) -> SpectralField2D {
    let mut f = SpectralField2D::zeros(grid);
    for k1 in 0..=kmax {
        for k2 in -kmax..=kmax {
            let ksq = k1 * k1 + k2 * k2;
            // one representative per conjugate pair
            if ksq == 0 || ksq > kmax * kmax || (k1 == 0 && k2 < 0) {
                continue;
            }
            let weight = 1.0 / (1.0 + ksq as f64);
            let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * weight;
            f.set_coeff(k1, k2, c);
            f.set_coeff(-k1, -k2, c.conj());
        }
    }
    f
}

fn scale_to_sup(f: &mut SpectralField2D, amp: f64) {
    let sup = f.to_physical().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sup > 0.0 {
        f.scale(amp / sup);
    }
}

fn random_smooth(grid: Grid, p: &RandomSmooth, seed: u64) -> Result<SimState> {
    let kmax = i64::from(p.kmax);
    if kmax < 1 || kmax > grid.dealias_cutoff() {
        return Err(invalid(format!(
            "random-smooth kmax must lie in 1..={}, got {}",
            grid.dealias_cutoff(),
            p.kmax
        )));
    }
    if !(p.rho_amp >= 0.0 && p.sigma_amp >= 0.0 && p.omega_amp >= 0.0 && p.margin > 0.0) {
        return Err(invalid("random-smooth amplitudes must be >= 0 and margin > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho = random_field(grid, kmax, &mut rng);
    let mut fluct = random_field(grid, kmax, &mut rng);
    let mut omega = random_field(grid, kmax, &mut rng);
    scale_to_sup(&mut rho, p.rho_amp);
    scale_to_sup(&mut fluct, p.sigma_amp);
    scale_to_sup(&mut omega, p.omega_amp);

    let need = rho
        .to_physical()
        .iter()
        .zip(fluct.to_physical())
        .fold(0.0_f64, |m, (r, s)| m.max(r.abs() - s));
    let sigma = &fluct + &SpectralField2D::constant(grid, need + p.margin);
    SimState::new(0.0, rho, sigma, omega)
}
