//! Monitored norms, the L² energy balance, invariant checks and rate fits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{poisson_potential, velocity_from_vorticity, PhysParams, SimState};
use crate::spectral::SpectralField2D;

/// Exponents of the `L^p` columns for ρ and σ − σ̄.
pub const LP_EXPONENTS: [f64; 4] = [2.0, 3.0, 4.0, f64::INFINITY];
/// Exponents of the `L^r` columns for ω.
pub const LR_EXPONENTS: [f64; 3] = [2.0, 4.0, f64::INFINITY];
/// Orders of the `H^s` columns.
pub const HS_ORDERS: [f64; 3] = [1.0, 2.0, 3.0];

/// One timestamped row of monitored quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub lp_rho: [f64; 4],
    /// Norms of σ − σ̄.
    pub lp_sigma_fluct: [f64; 4],
    pub grad_phi_sup: f64,
    pub hs_rho: [f64; 3],
    pub hs_sigma: [f64; 3],
    pub lr_omega: [f64; 3],
    pub hs_u: [f64; 3],
    pub min_c1: f64,
    pub min_c2: f64,
    pub mean_rho: f64,
    pub mean_sigma: f64,
    /// `½(‖ρ‖² + ‖σ − σ̄‖²)`.
    pub energy_l2: f64,
    /// `D(‖∇ρ‖² + ‖∇σ‖²) + (D/ε)∫σρ²`.
    pub dissipation: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 28] = [
        "time",
        "lp_rho_2",
        "lp_rho_3",
        "lp_rho_4",
        "lp_rho_inf",
        "lp_sigma_fluct_2",
        "lp_sigma_fluct_3",
        "lp_sigma_fluct_4",
        "lp_sigma_fluct_inf",
        "grad_phi_sup",
        "hs_rho_1",
        "hs_rho_2",
        "hs_rho_3",
        "hs_sigma_1",
        "hs_sigma_2",
        "hs_sigma_3",
        "lr_omega_2",
        "lr_omega_4",
        "lr_omega_inf",
        "hs_u_1",
        "hs_u_2",
        "hs_u_3",
        "min_c1",
        "min_c2",
        "mean_rho",
        "mean_sigma",
        "energy_l2",
        "dissipation",
    ];

    /// Evaluates every column on `state`.
    ///
    /// The potential is computed from ρ with its mean removed, so a slightly
    /// non-neutral state still yields a record (with `mean_rho` showing the
    /// defect).
    pub fn compute(state: &SimState, params: &PhysParams) -> Result<Self> {
        let grid = state.grid();
        let h2 = grid.spacing() * grid.spacing();
        let mean_rho = state.rho.mean();
        let mean_sigma = state.sigma.mean();

        let mut rho0 = state.rho.clone();
        rho0.remove_mean();
        let mut fluct = state.sigma.clone();
        fluct.remove_mean();

        let rho_x = state.rho.to_physical();
        let sigma_x = state.sigma.to_physical();
        let fluct_x = fluct.to_physical();
        let omega_x = state.omega.to_physical();

        let phi = poisson_potential(&rho0, params.epsilon)?;
        let px = phi.dx().to_physical();
        let py = phi.dy().to_physical();
        let grad_phi_sup = px
            .iter()
            .zip(&py)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max);

        let mut omega0 = state.omega.clone();
        omega0.remove_mean();
        let (u1, u2) = velocity_from_vorticity(&omega0)?;

        let (mut min_c1, mut min_c2) = (f64::INFINITY, f64::INFINITY);
        let mut cubic = 0.0;
        for (r, s) in rho_x.iter().zip(&sigma_x) {
            min_c1 = min_c1.min(0.5 * (s + r));
            min_c2 = min_c2.min(0.5 * (s - r));
            cubic += s * r * r;
        }
        cubic *= h2;

        let d = params.diffusivity;
        let grad_sq = grad_energy(&state.rho) + grad_energy(&fluct);
        let energy_l2 = 0.5 * (l2_sq(&state.rho) + l2_sq(&fluct));

        let record = Self {
            time: state.time,
            lp_rho: LP_EXPONENTS.map(|p| lp_of_samples(&rho_x, p, h2)),
            lp_sigma_fluct: LP_EXPONENTS.map(|p| lp_of_samples(&fluct_x, p, h2)),
            grad_phi_sup,
            hs_rho: HS_ORDERS.map(|s| hs_unchecked(&state.rho, s)),
            hs_sigma: HS_ORDERS.map(|s| hs_unchecked(&state.sigma, s)),
            lr_omega: LR_EXPONENTS.map(|p| lp_of_samples(&omega_x, p, h2)),
            hs_u: HS_ORDERS.map(|s| hs_unchecked(&u1, s).hypot(hs_unchecked(&u2, s))),
            min_c1,
            min_c2,
            mean_rho,
            mean_sigma,
            energy_l2,
            dissipation: d * grad_sq + d / params.epsilon * cubic,
        };
        Ok(record)
    }

    /// Values in [`Self::COLUMNS`] order.
    pub fn to_row(&self) -> [f64; 28] {
        let mut row = [0.0; 28];
        let mut i = 0;
        let mut put = |v: f64| {
            row[i] = v;
            i += 1;
        };
        put(self.time);
        self.lp_rho.iter().for_each(|v| put(*v));
        self.lp_sigma_fluct.iter().for_each(|v| put(*v));
        put(self.grad_phi_sup);
        self.hs_rho.iter().for_each(|v| put(*v));
        self.hs_sigma.iter().for_each(|v| put(*v));
        self.lr_omega.iter().for_each(|v| put(*v));
        self.hs_u.iter().for_each(|v| put(*v));
        put(self.min_c1);
        put(self.min_c2);
        put(self.mean_rho);
        put(self.mean_sigma);
        put(self.energy_l2);
        put(self.dissipation);
        row
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != Self::COLUMNS.len() {
            return Err(Error::DimensionMismatch {
                expected: Self::COLUMNS.len(),
                actual: row.len(),
            });
        }
        let mut it = row.iter().copied();
        let mut next = || it.next().expect("length checked");
        Ok(Self {
            time: next(),
            lp_rho: [next(), next(), next(), next()],
            lp_sigma_fluct: [next(), next(), next(), next()],
            grad_phi_sup: next(),
            hs_rho: [next(), next(), next()],
            hs_sigma: [next(), next(), next()],
            lr_omega: [next(), next(), next()],
            hs_u: [next(), next(), next()],
            min_c1: next(),
            min_c2: next(),
            mean_rho: next(),
            mean_sigma: next(),
            energy_l2: next(),
            dissipation: next(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_row().iter().all(|v| v.is_finite())
    }
}

/// `(2π)² Σ |f̂_k|²`.
fn l2_sq(f: &SpectralField2D) -> f64 {
    4.0 * PI * PI * f.coeff_energy()
}

/// `‖∇f‖²`.
fn grad_energy(f: &SpectralField2D) -> f64 {
    let ksq = f.grid().wavenumber_squared();
    let sum: f64 = f.coeffs().iter().zip(&ksq).map(|(c, k)| k * c.norm_sqr()).sum();
    4.0 * PI * PI * sum
}

fn lp_of_samples(samples: &[f64], p: f64, h2: f64) -> f64 {
    if p.is_infinite() {
        return samples.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 2.0 {
        return (h2 * samples.iter().map(|v| v * v).sum::<f64>()).sqrt();
    }
    (h2 * samples.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

fn hs_unchecked(f: &SpectralField2D, s: f64) -> f64 {
    let ksq = f.grid().wavenumber_squared();
    let sum: f64 = f
        .coeffs()
        .iter()
        .zip(&ksq)
        .map(|(c, k)| (1.0 + k).powf(s) * c.norm_sqr())
        .sum();
    2.0 * PI * sum.sqrt()
}

/// `L^p` norm by collocation quadrature; `p = ∞` gives the grid maximum of `|f|`.
pub fn lp_norm(f: &SpectralField2D, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("L^p exponent must be >= 1, got {p}")));
    }
    let h = f.grid().spacing();
    Ok(lp_of_samples(&f.to_physical(), p, h * h))
}

/// Inhomogeneous Sobolev norm `(2π)(Σ (1+|k|²)^s |f̂_k|²)^{1/2}`.
pub fn sobolev_norm(f: &SpectralField2D, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("Sobolev order must be >= 0, got {s}")));
    }
    Ok(hs_unchecked(f, s))
}

/// Centered-difference `d/dt energy_l2 + dissipation` at the middle of three
/// equally spaced records.
pub fn energy_identity_residual(records: &[DiagnosticsRecord]) -> Result<f64> {
    let [a, b, c] = records else {
        return Err(Error::InvalidArgument(format!(
            "energy residual needs exactly 3 records, got {}",
            records.len()
        )));
    };
    let (h1, h2) = (b.time - a.time, c.time - b.time);
    if !(h1 > 0.0) || (h1 - h2).abs() > 1e-9 * h1.abs().max(h2.abs()) {
        return Err(Error::NonuniformSpacing);
    }
    let rate = (c.energy_l2 - a.energy_l2) / (c.time - a.time);
    Ok(rate + b.dissipation)
}

/// Least-squares fit `log y ≈ log A − rate·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub amplitude: f64,
    /// RMS of the fit residual in log space.
    pub rms_residual: f64,
    pub window: (f64, f64),
}

/// Default fitting window `[0.2·T, T]`.
pub fn default_window(t_end: f64) -> (f64, f64) {
    (0.2 * t_end, t_end)
}

/// Fits an exponential to the samples whose time lies in `window` (inclusive).
pub fn fit_exponential(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    let mut pts = Vec::new();
    for (index, &(t, y)) in series.iter().enumerate() {
        if t < lo - slack || t > hi + slack {
            continue;
        }
        if !(y > 0.0) {
            return Err(Error::NonPositiveSample { index, value: y });
        }
        pts.push((t, y.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: pts.len() });
    }
    let line = least_squares(&pts)
        .ok_or_else(|| Error::InvalidArgument("all samples share one time".into()))?;
    Ok(RateFit {
        rate: -line.slope,
        amplitude: line.intercept.exp(),
        rms_residual: line.rms_residual,
        window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

/// Ordinary least-squares line through `(x, y)`; `None` if every `x` is equal.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> Option<Line> {
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some(Line {
        slope,
        intercept,
        rms_residual: (ss / n).sqrt(),
    })
}

/// `H^s` norms of the differences of ρ, σ and the Biot-Savart velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceNorms {
    pub s: f64,
    pub rho: f64,
    pub sigma: f64,
    pub u: f64,
}

pub fn difference_norms(a: &SimState, b: &SimState, s_list: &[f64]) -> Result<Vec<DifferenceNorms>> {
    a.rho.ensure_same_grid(&b.rho)?;
    if let Some(s) = s_list.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("Sobolev order must be >= 0, got {s}")));
    }
    let dr = &a.rho - &b.rho;
    let ds = &a.sigma - &b.sigma;
    let mut dw = &a.omega - &b.omega;
    dw.remove_mean();
    let (u1, u2) = velocity_from_vorticity(&dw)?;
    Ok(s_list
        .iter()
        .map(|&s| DifferenceNorms {
            s,
            rho: hs_unchecked(&dr, s),
            sigma: hs_unchecked(&ds, s),
            u: hs_unchecked(&u1, s).hypot(hs_unchecked(&u2, s)),
        })
        .collect())
}

/// Thresholds for [`invariant_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantTolerances {
    pub neutrality: f64,
    /// Relative drift of the mean salt against `initial_mean_sigma`.
    pub salt_drift_rel: f64,
    pub positivity: f64,
    /// Reference mean of σ; the drift check is skipped when absent.
    pub initial_mean_sigma: Option<f64>,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self {
            neutrality: 1e-12,
            salt_drift_rel: 1e-10,
            positivity: crate::model::DEFAULT_TOL_POS,
            initial_mean_sigma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub time: f64,
    pub checks: Vec<InvariantCheck>,
}

impl InvariantReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Neutrality, salt drift, positivity of both species, and finiteness.
pub fn invariant_report(state: &SimState, tol: &InvariantTolerances) -> InvariantReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64, limit: f64| {
        checks.push(InvariantCheck {
            name: name.to_string(),
            residual,
            passed: residual <= limit,
        });
    };
    let finite = state.is_finite();
    push("finite", if finite { 0.0 } else { 1.0 }, 0.0);
    push("neutrality", state.rho.mean().abs(), tol.neutrality);
    if let Some(m0) = tol.initial_mean_sigma {
        let drift = (state.sigma.mean() - m0).abs() / m0.abs().max(f64::MIN_POSITIVE);
        push("salt_drift", drift, tol.salt_drift_rel);
    }
    let (c1, c2) = if finite {
        state.min_concentrations()
    } else {
        (f64::NAN, f64::NAN)
    };
    push("min_c1", (-c1).max(0.0), tol.positivity);
    push("min_c2", (-c2).max(0.0), tol.positivity);
    InvariantReport {
        time: state.time,
        checks,
    }
}
