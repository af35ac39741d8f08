//! State representation and right-hand-side assembly in the charge /
//! salt / vorticity variables `(ρ, σ, ω)`.
//!
//! With `ρ = c₁ − c₂`, `σ = c₁ + c₂`, `−εΔΦ = ρ` and `u = ∇⊥Δ⁻¹ω`,
//!
//! ```text
//! ∂ρ/∂t = −a·∇ρ + D(Δρ + ∇σ·∇Φ + σΔΦ)
//! ∂σ/∂t = −a·∇σ + D(Δσ + ∇ρ·∇Φ + ρΔΦ)
//! ∂ω/∂t = −a·∇ω − k_BT_K ∇⊥ρ·∇Φ + νΔω
//! ```
//!
//! where the advecting velocity `a` is `u`, or `J_ℓ u` for the regularized
//! (vortex-method) variant. `ΔΦ` is always substituted by `−ρ/ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{from_physical_pair, to_physical_pair, Grid, SpectralField2D};

/// Absolute undershoot tolerated in `σ ≥ |ρ|` (i.e. `c_i ≥ −tol/2`).
pub const DEFAULT_TOL_POS: f64 = 1e-8;

/// Which member of the model family is being integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Nernst-Planck-Euler: inviscid, unmollified.
    Npe,
    /// Nernst-Planck-Navier-Stokes: viscosity `ν` on the vorticity.
    Npns,
    /// Vortex-method regularization: advection by `J_ℓ u`.
    Regularized,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Npe => 0,
            Variant::Npns => 1,
            Variant::Regularized => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Npe),
            1 => Some(Variant::Npns),
            2 => Some(Variant::Regularized),
            _ => None,
        }
    }
}

/// Physical constants of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Ionic diffusivity `D` (equal for both species).
    pub diffusivity: f64,
    /// Debye coefficient `ε` in `−εΔΦ = ρ`.
    pub epsilon: f64,
    /// Thermal factor `k_B T_K` multiplying the electric body force.
    pub kbtk: f64,
    /// Kinematic viscosity; only acts in [`Variant::Npns`].
    pub nu: f64,
    /// Mollification scale; only acts in [`Variant::Regularized`].
    pub ell: f64,
    pub variant: Variant,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self::npe(1.0, 1.0, 1.0)
    }
}

impl PhysParams {
    pub fn npe(diffusivity: f64, epsilon: f64, kbtk: f64) -> Self {
        Self {
            diffusivity,
            epsilon,
            kbtk,
            nu: 0.0,
            ell: 0.0,
            variant: Variant::Npe,
        }
    }

    /// Same constants, Navier-Stokes momentum with viscosity `nu`.
    pub fn with_viscosity(self, nu: f64) -> Self {
        Self {
            nu,
            ell: 0.0,
            variant: Variant::Npns,
            ..self
        }
    }

    /// Same constants, vortex-method advection with mollifier scale `ell`.
    pub fn with_mollification(self, ell: f64) -> Self {
        Self {
            nu: 0.0,
            ell,
            variant: Variant::Regularized,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return bad(format!("diffusivity must be > 0, got {}", self.diffusivity));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.kbtk >= 0.0 && self.kbtk.is_finite()) {
            return bad(format!("kbtk must be >= 0, got {}", self.kbtk));
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if !(self.ell >= 0.0 && self.ell.is_finite()) {
            return bad(format!("ell must be >= 0, got {}", self.ell));
        }
        match self.variant {
            Variant::Npe if self.nu != 0.0 || self.ell != 0.0 => {
                bad("variant npe requires nu = 0 and ell = 0".into())
            }
            Variant::Npns if self.ell != 0.0 => bad("variant npns requires ell = 0".into()),
            Variant::Regularized if self.ell <= 0.0 => {
                bad("variant regularized requires ell > 0".into())
            }
            Variant::Regularized if self.nu != 0.0 => {
                bad("variant regularized requires nu = 0".into())
            }
            _ => Ok(()),
        }
    }

    /// Mollifier scale applied to the advecting velocity.
    pub fn advection_scale(&self) -> f64 {
        match self.variant {
            Variant::Regularized => self.ell,
            _ => 0.0,
        }
    }

    /// Viscosity entering the vorticity equation.
    pub fn viscosity(&self) -> f64 {
        match self.variant {
            Variant::Npns => self.nu,
            _ => 0.0,
        }
    }
}

/// Complete dynamical state: charge density, salt and vorticity.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub rho: SpectralField2D,
    pub sigma: SpectralField2D,
    pub omega: SpectralField2D,
}

impl SimState {
    pub fn new(
        time: f64,
        rho: SpectralField2D,
        sigma: SpectralField2D,
        omega: SpectralField2D,
    ) -> Result<Self> {
        rho.ensure_same_grid(&sigma)?;
        rho.ensure_same_grid(&omega)?;
        Ok(Self {
            time,
            rho,
            sigma,
            omega,
        })
    }

    /// Neutral, quiescent state with uniform salt `sigma_bar`.
    pub fn equilibrium(grid: Grid, sigma_bar: f64) -> Self {
        Self {
            time: 0.0,
            rho: SpectralField2D::zeros(grid),
            sigma: SpectralField2D::constant(grid, sigma_bar),
            omega: SpectralField2D::zeros(grid),
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.rho.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.rho.is_finite() && self.sigma.is_finite() && self.omega.is_finite()
    }

    /// Grid minima of `c₁` and `c₂`.
    pub fn min_concentrations(&self) -> (f64, f64) {
        let (rho, sigma) = to_physical_pair(&self.rho, &self.sigma);
        rho.iter()
            .zip(&sigma)
            .fold((f64::INFINITY, f64::INFINITY), |(m1, m2), (&r, &s)| {
                (m1.min(0.5 * (s + r)), m2.min(0.5 * (s - r)))
            })
    }

    /// Checks neutrality, zero mean vorticity, and `σ ≥ |ρ| − tol_pos`.
    pub fn check_admissible(&self, tol_pos: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite { time: self.time });
        }
        for f in [&self.rho, &self.omega] {
            if f.mean().abs() > 1e-12 {
                return Err(Error::NonZeroMean {
                    mean: f.mean(),
                    scale: f.max_abs_coeff(),
                });
            }
        }
        let (m1, m2) = self.min_concentrations();
        if 2.0 * m1.min(m2) < -tol_pos {
            return Err(Error::InvalidArgument(format!(
                "negative concentration: min c1 = {m1:e}, min c2 = {m2:e}"
            )));
        }
        Ok(())
    }
}

/// Time derivatives of the three prognostic fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub d_rho: SpectralField2D,
    pub d_sigma: SpectralField2D,
    pub d_omega: SpectralField2D,
}

impl Tendency {
    pub fn is_finite(&self) -> bool {
        self.d_rho.is_finite() && self.d_sigma.is_finite() && self.d_omega.is_finite()
    }
}

/// Solves `−εΔΦ = ρ` for the mean-zero potential.
pub fn poisson_potential(rho: &SpectralField2D, eps: f64) -> Result<SpectralField2D> {
    let mut phi = rho.inverse_laplacian()?;
    phi.scale(-1.0 / eps);
    Ok(phi)
}

/// Biot-Savart law `u = ∇⊥Δ⁻¹ω` with `∇⊥ = (−∂_y, ∂_x)`.
pub fn velocity_from_vorticity(
    omega: &SpectralField2D,
) -> Result<(SpectralField2D, SpectralField2D)> {
    let psi = omega.inverse_laplacian()?;
    Ok((-&psi.dy(), psi.dx()))
}

/// `c₁ = (σ+ρ)/2`, `c₂ = (σ−ρ)/2`.
pub fn concentrations(state: &SimState) -> (SpectralField2D, SpectralField2D) {
    let mut c1 = &state.sigma + &state.rho;
    let mut c2 = &state.sigma - &state.rho;
    c1.scale(0.5);
    c2.scale(0.5);
    (c1, c2)
}

/// Inverse of [`concentrations`]: returns `(ρ, σ)`.
pub fn combine(c1: &SpectralField2D, c2: &SpectralField2D) -> (SpectralField2D, SpectralField2D) {
    (c1 - c2, c1 + c2)
}

/// Physical-space coefficient fields that drive the transport terms: the
/// advecting velocity, `∇Φ` and `ΔΦ`.
///
/// In the nonlinear system they are derived from the state being advanced;
/// the Picard iteration freezes them from the previous iterate.
#[derive(Debug, Clone)]
pub(crate) struct Drivers {
    advect: [Vec<f64>; 2],
    grad_phi: [Vec<f64>; 2],
    lap_phi: Vec<f64>,
}

impl Drivers {
    /// `rho_phys` must be the physical samples of `state.rho`.
    fn build(state: &SimState, rho_phys: &[f64], params: &PhysParams) -> Result<Self> {
        let phi = poisson_potential(&state.rho, params.epsilon)?;
        let (gx, gy) = to_physical_pair(&phi.dx(), &phi.dy());
        let (u1, u2) = velocity_from_vorticity(&state.omega)?;
        let ell = params.advection_scale();
        let (a1, a2) = if ell > 0.0 {
            to_physical_pair(&u1.mollify(ell)?, &u2.mollify(ell)?)
        } else {
            to_physical_pair(&u1, &u2)
        };
        let inv_eps = 1.0 / params.epsilon;
        Ok(Self {
            advect: [a1, a2],
            grad_phi: [gx, gy],
            lap_phi: rho_phys.iter().map(|r| -r * inv_eps).collect(),
        })
    }

    pub(crate) fn from_state(state: &SimState, params: &PhysParams) -> Result<Self> {
        let rho_phys = state.rho.to_physical();
        Self::build(state, &rho_phys, params)
    }
}

/// Everything except the linear diffusion `DΔρ`, `DΔσ`, `νΔω`.
///
/// With `drivers = None` the coefficients come from `fields` itself (the
/// nonlinear system); otherwise the given frozen coefficients are used and
/// the result is linear in `fields`. All products are dealiased.
pub(crate) fn transport_terms(
    fields: &SimState,
    drivers: Option<&Drivers>,
    params: &PhysParams,
) -> Result<Tendency> {
    let grid = fields.grid();
    let (rho, sigma) = to_physical_pair(&fields.rho, &fields.sigma);
    let owned;
    let drv = match drivers {
        Some(d) => d,
        None => {
            owned = Drivers::build(fields, &rho, params)?;
            &owned
        }
    };
    let (rx, ry) = to_physical_pair(&fields.rho.dx(), &fields.rho.dy());
    let (sx, sy) = to_physical_pair(&fields.sigma.dx(), &fields.sigma.dy());
    let (wx, wy) = to_physical_pair(&fields.omega.dx(), &fields.omega.dy());

    let d = params.diffusivity;
    let kt = params.kbtk;
    let [a1, a2] = &drv.advect;
    let [gx, gy] = &drv.grad_phi;
    let lap = &drv.lap_phi;

    let len = grid.len();
    let mut nr = vec![0.0; len];
    let mut ns = vec![0.0; len];
    let mut nw = vec![0.0; len];
    for j in 0..len {
        nr[j] = -(a1[j] * rx[j] + a2[j] * ry[j]) + d * (sx[j] * gx[j] + sy[j] * gy[j] + sigma[j] * lap[j]);
        ns[j] = -(a1[j] * sx[j] + a2[j] * sy[j]) + d * (rx[j] * gx[j] + ry[j] * gy[j] + rho[j] * lap[j]);
        // ∇⊥ρ·∇Φ = −∂_yρ ∂_xΦ + ∂_xρ ∂_yΦ
        nw[j] = -(a1[j] * wx[j] + a2[j] * wy[j]) - kt * (rx[j] * gy[j] - ry[j] * gx[j]);
    }

    let (mut d_rho, mut d_sigma) = from_physical_pair(grid, &nr, &ns);
    let mut d_omega = SpectralField2D::from_physical(grid, &nw)?;
    d_rho.dealias_in_place();
    d_sigma.dealias_in_place();
    d_omega.dealias_in_place();
    let out = Tendency {
        d_rho,
        d_sigma,
        d_omega,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { time: fields.time });
    }
    Ok(out)
}

/// Full right-hand side of the selected variant at `state`.
pub fn tendency(state: &SimState, params: &PhysParams) -> Result<Tendency> {
    if !state.is_finite() {
        return Err(Error::NonFinite { time: state.time });
    }
    let mut t = transport_terms(state, None, params)?;
    let d = params.diffusivity;
    t.d_rho.axpy(d, &state.rho.laplacian());
    t.d_sigma.axpy(d, &state.sigma.laplacian());
    let nu = params.viscosity();
    if nu > 0.0 {
        t.d_omega.axpy(nu, &state.omega.laplacian());
    }
    Ok(t)
}

/// Leray projection `ĝ ← ĝ − k(k·ĝ)/|k|²` onto divergence-free fields.
pub fn leray_project(g1: &mut SpectralField2D, g2: &mut SpectralField2D) {
    let grid = g1.grid();
    let nyq = grid.nyquist();
    let (c1, c2) = (g1.coeffs_mut(), g2.coeffs_mut());
    for idx in 0..grid.len() {
        let (k1, k2) = grid.mode(idx);
        if k1 == 0 && k2 == 0 {
            continue;
        }
        // odd derivatives drop Nyquist wavenumbers, so project with them removed
        let q1 = if k1 == nyq { 0.0 } else { k1 as f64 };
        let q2 = if k2 == nyq { 0.0 } else { k2 as f64 };
        let q2sum = q1 * q1 + q2 * q2;
        if q2sum == 0.0 {
            continue;
        }
        let kg = (c1[idx] * q1 + c2[idx] * q2) / q2sum;
        c1[idx] -= kg * q1;
        c2[idx] -= kg * q2;
    }
}

/// Velocity form of the vortex-method momentum equation,
///
/// ```text
/// ∂u/∂t = −P[ [u]_ℓ·∇u + (∇[u]_ℓ)ᵀu + k_BT_K ρ∇Φ ]
/// ```
///
/// with `P` the Leray projector standing in for the pressure gradient. Its
/// curl reproduces the vorticity tendency of [`tendency`].
pub fn velocity_form_tendency(
    state: &SimState,
    params: &PhysParams,
) -> Result<(SpectralField2D, SpectralField2D)> {
    if params.viscosity() > 0.0 {
        return Err(Error::InvalidParams(
            "velocity form is defined for the inviscid and regularized variants".into(),
        ));
    }
    let grid = state.grid();
    let ell = params.advection_scale();
    let (u1, u2) = velocity_from_vorticity(&state.omega)?;
    let (m1, m2) = (u1.mollify(ell)?, u2.mollify(ell)?);
    let phi = poisson_potential(&state.rho, params.epsilon)?;

    let (pu1, pu2) = to_physical_pair(&u1, &u2);
    let (pm1, pm2) = to_physical_pair(&m1, &m2);
    let (u1x, u1y) = to_physical_pair(&u1.dx(), &u1.dy());
    let (u2x, u2y) = to_physical_pair(&u2.dx(), &u2.dy());
    let (m1x, m1y) = to_physical_pair(&m1.dx(), &m1.dy());
    let (m2x, m2y) = to_physical_pair(&m2.dx(), &m2.dy());
    let (gx, gy) = to_physical_pair(&phi.dx(), &phi.dy());
    let rho = state.rho.to_physical();

    let kt = params.kbtk;
    let len = grid.len();
    let mut r1 = vec![0.0; len];
    let mut r2 = vec![0.0; len];
    for j in 0..len {
        let adv1 = pm1[j] * u1x[j] + pm2[j] * u1y[j];
        let adv2 = pm1[j] * u2x[j] + pm2[j] * u2y[j];
        let adj1 = m1x[j] * pu1[j] + m2x[j] * pu2[j];
        let adj2 = m1y[j] * pu1[j] + m2y[j] * pu2[j];
        r1[j] = -(adv1 + adj1 + kt * rho[j] * gx[j]);
        r2[j] = -(adv2 + adj2 + kt * rho[j] * gy[j]);
    }
    let (mut g1, mut g2) = from_physical_pair(grid, &r1, &r2);
    g1.dealias_in_place();
    g2.dealias_in_place();
    leray_project(&mut g1, &mut g2);
    if !(g1.is_finite() && g2.is_finite()) {
        return Err(Error::NonFinite { time: state.time });
    }
    Ok((g1, g2))
}

/// Scalar curl `∂_x v₂ − ∂_y v₁`.
pub fn curl(v1: &SpectralField2D, v2: &SpectralField2D) -> SpectralField2D {
    &v2.dx() - &v1.dy()
}

/// Divergence `∂_x v₁ + ∂_y v₂`.
pub fn divergence(v1: &SpectralField2D, v2: &SpectralField2D) -> SpectralField2D {
    &v1.dx() + &v2.dy()
}
