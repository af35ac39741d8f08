//! Integrating-factor RK4 time stepping.
//!
//! Linear diffusion (`DΔ` on ρ and σ, `νΔ` on ω) is integrated exactly by
//! per-mode exponential factors; the transport and electric terms are
//! advanced with classical RK4 in the rotated frame (Lawson's scheme).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{transport_terms, velocity_from_vorticity, PhysParams, SimState, Tendency};
use crate::spectral::{to_physical_pair, Grid};

/// Velocity magnitude below which the CFL bound is not allowed to blow up.
pub const U_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    /// Fixed step, or the initial step in adaptive mode.
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub adaptive: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 0.0,
            cfl_safety: 0.5,
            dt_max: 1e-3,
            adaptive: false,
        }
    }
}

impl StepperConfig {
    /// Fixed-step configuration integrating to `t_end`.
    pub fn fixed(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            dt_max: dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.dt_max > 0.0) || self.dt > self.dt_max {
            return bad("dt must not exceed dt_max");
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if !self.t_end.is_finite() {
            return bad("t_end must be finite");
        }
        Ok(())
    }
}

/// Exponential factors for one step size.
#[derive(Debug, Clone)]
struct Factors {
    dt_bits: u64,
    salt_half: Vec<f64>,
    salt_full: Vec<f64>,
    /// `None` when the vorticity has no linear damping.
    vort: Option<(Vec<f64>, Vec<f64>)>,
}

impl Factors {
    /// `e^{L·dt/2}` (or `e^{L·dt}` when `full`) applied to every field.
    fn propagate(&self, s: &SimState, full: bool) -> SimState {
        let mut out = s.clone();
        let (salt, vort) = if full {
            (&self.salt_full, self.vort.as_ref().map(|v| &v.1))
        } else {
            (&self.salt_half, self.vort.as_ref().map(|v| &v.0))
        };
        out.rho.apply_multiplier(salt);
        out.sigma.apply_multiplier(salt);
        if let Some(v) = vort {
            out.omega.apply_multiplier(v);
        }
        out
    }
}

/// Reusable IF-RK4 stepper; caches the diffusion factors of the last step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: PhysParams,
    ksq: Vec<f64>,
    factors: Option<Factors>,
}

impl Stepper {
    pub fn new(grid: Grid, params: PhysParams) -> Self {
        Self {
            params,
            ksq: grid.wavenumber_squared(),
            factors: None,
        }
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    fn factors(&mut self, dt: f64) -> &Factors {
        let bits = dt.to_bits();
        if self.factors.as_ref().map(|f| f.dt_bits) != Some(bits) {
            let exp_of = |coef: f64, t: f64| -> Vec<f64> {
                self.ksq.iter().map(|k| (-coef * k * t).exp()).collect()
            };
            let d = self.params.diffusivity;
            let nu = self.params.viscosity();
            let vort = if nu > 0.0 {
                Some((exp_of(nu, 0.5 * dt), exp_of(nu, dt)))
            } else {
                None
            };
            self.factors = Some(Factors {
                dt_bits: bits,
                salt_half: exp_of(d, 0.5 * dt),
                salt_full: exp_of(d, dt),
                vort,
            });
        }
        self.factors.as_ref().expect("factors just built")
    }

    /// One step of the nonlinear system.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<SimState> {
        let params = self.params;
        self.step_with(state, dt, |_, stage| transport_terms(stage, None, &params))
    }

    /// One IF-RK4 step with a caller-supplied non-diffusive right-hand side.
    ///
    /// `rhs(i, y)` is evaluated at stage `i ∈ 0..4` on the stage state `y`
    /// (times `t`, `t+dt/2`, `t+dt/2`, `t+dt`). Means of ρ and ω are reset to
    /// zero after the step.
    pub fn step_with<F>(&mut self, state: &SimState, dt: f64, mut rhs: F) -> Result<SimState>
    where
        F: FnMut(usize, &SimState) -> Result<Tendency>,
    {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let e = self.factors(dt).clone();
        let t0 = state.time;
        let h2 = 0.5 * dt;

        let k1 = as_state(rhs(0, state)?);
        let mut y2 = state.clone();
        add_scaled(&mut y2, h2, &k1);
        let mut y2 = e.propagate(&y2, false);
        y2.time = t0 + h2;

        let k2 = as_state(rhs(1, &y2)?);
        let mut y3 = e.propagate(state, false);
        add_scaled(&mut y3, h2, &k2);
        y3.time = t0 + h2;

        let k3 = as_state(rhs(2, &y3)?);
        let mut y4 = e.propagate(state, true);
        add_scaled(&mut y4, dt, &e.propagate(&k3, false));
        y4.time = t0 + dt;

        let k4 = as_state(rhs(3, &y4)?);

        // y' = E y + dt/6 (E k1 + 2 E½ (k2 + k3) + k4)
        let mut mid = k2;
        add_scaled(&mut mid, 1.0, &k3);
        let mut next = e.propagate(state, true);
        add_scaled(&mut next, dt / 6.0, &e.propagate(&k1, true));
        add_scaled(&mut next, dt / 3.0, &e.propagate(&mid, false));
        add_scaled(&mut next, dt / 6.0, &k4);
        next.time = t0 + dt;
        next.rho.remove_mean();
        next.omega.remove_mean();
        if !next.is_finite() {
            return Err(Error::NonFinite { time: next.time });
        }
        Ok(next)
    }
}

fn as_state(t: Tendency) -> SimState {
    SimState {
        time: 0.0,
        rho: t.d_rho,
        sigma: t.d_sigma,
        omega: t.d_omega,
    }
}

fn add_scaled(y: &mut SimState, a: f64, x: &SimState) {
    y.rho.axpy(a, &x.rho);
    y.sigma.axpy(a, &x.sigma);
    y.omega.axpy(a, &x.omega);
}

/// Advances `state` by one step of size `dt`.
pub fn step(state: &SimState, params: &PhysParams, dt: f64) -> Result<SimState> {
    Stepper::new(state.grid(), *params).step(state, dt)
}

/// Advective CFL bound `min(dt_max, cfl·h / max(‖u‖∞, U_FLOOR))`.
///
/// Diffusion is integrated exactly and imposes no restriction.
pub fn stable_dt(state: &SimState, _params: &PhysParams, grid: Grid, cfg: &StepperConfig) -> f64 {
    let mut omega = state.omega.clone();
    omega.remove_mean();
    let umax = match velocity_from_vorticity(&omega) {
        Ok((u1, u2)) => {
            let (p1, p2) = to_physical_pair(&u1, &u2);
            p1.iter()
                .zip(&p2)
                .map(|(a, b)| a.hypot(*b))
                .fold(0.0, f64::max)
        }
        Err(_) => 0.0,
    };
    let candidate = cfg.cfl_safety * grid.spacing() / umax.max(U_FLOOR);
    cfg.dt_max.min(candidate)
}

/// Receives the state at scheduled output times during [`integrate`].
pub trait Sink {
    /// Output interval in time units; must be positive.
    fn interval(&self) -> f64;

    fn record(&mut self, state: &SimState) -> std::result::Result<(), String>;
}

/// [`Sink`] backed by a closure.
pub struct FnSink<F> {
    interval: f64,
    f: F,
}

impl<F> FnSink<F>
where
    F: FnMut(&SimState) -> std::result::Result<(), String>,
{
    pub fn new(interval: f64, f: F) -> Self {
        Self { interval, f }
    }
}

impl<F> Sink for FnSink<F>
where
    F: FnMut(&SimState) -> std::result::Result<(), String>,
{
    fn interval(&self) -> f64 {
        self.interval
    }

    fn record(&mut self, state: &SimState) -> std::result::Result<(), String> {
        (self.f)(state)
    }
}

struct Schedule {
    t0: f64,
    interval: f64,
    next: u64,
    last_recorded: Option<f64>,
}

impl Schedule {
    fn threshold(&self) -> f64 {
        self.t0 + self.next as f64 * self.interval
    }

    fn due(&self, t: f64) -> bool {
        t >= self.threshold() - 1e-9 * self.interval
    }

    fn advance_past(&mut self, t: f64) {
        while self.due(t) {
            self.next += 1;
        }
    }
}

fn emit(sinks: &mut [&mut dyn Sink], sched: &mut [Schedule], state: &SimState, force: bool) -> Result<()> {
    for (sink, s) in sinks.iter_mut().zip(sched.iter_mut()) {
        let already = s.last_recorded == Some(state.time);
        if (force || s.due(state.time)) && !already {
            sink.record(state).map_err(|message| Error::Sink {
                time: state.time,
                message,
            })?;
            s.last_recorded = Some(state.time);
        }
        s.advance_past(state.time);
    }
    Ok(())
}

/// Integrates from `state.time` to `cfg.t_end`.
///
/// Sinks fire at the start time, every time the clock crosses a multiple
/// of their interval, and at `t_end`. In fixed mode the step is `cfg.dt`
/// except for a final shortened step that lands exactly on `t_end`; times
/// are computed as `t₀ + i·dt` so long runs do not accumulate drift.
pub fn integrate(
    state: SimState,
    params: &PhysParams,
    cfg: &StepperConfig,
    sinks: &mut [&mut dyn Sink],
) -> Result<SimState> {
    cfg.validate()?;
    params.validate()?;
    if cfg.t_end < state.time {
        return Err(Error::InvalidArgument(format!(
            "t_end = {} precedes the start time {}",
            cfg.t_end, state.time
        )));
    }
    for s in sinks.iter() {
        if !(s.interval() > 0.0) {
            return Err(Error::InvalidArgument("sink interval must be positive".into()));
        }
    }
    let t0 = state.time;
    let mut sched: Vec<Schedule> = sinks
        .iter()
        .map(|s| Schedule {
            t0,
            interval: s.interval(),
            next: 0,
            last_recorded: None,
        })
        .collect();
    emit(sinks, &mut sched, &state, true)?;
    if cfg.t_end == t0 {
        return Ok(state);
    }

    let mut stepper = Stepper::new(state.grid(), *params);
    let mut state = state;
    let end_tol = 1e-9 * cfg.dt;
    let mut i: u64 = 0;
    loop {
        let remaining = cfg.t_end - state.time;
        let nominal = if cfg.adaptive {
            stable_dt(&state, params, state.grid(), cfg)
        } else {
            cfg.dt
        };
        let last = remaining <= nominal + end_tol;
        let h = if last && (remaining - nominal).abs() > end_tol {
            remaining
        } else {
            nominal
        };
        let mut next = stepper.step(&state, h).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { time: state.time },
            other => other,
        })?;
        i += 1;
        next.time = if last {
            cfg.t_end
        } else if cfg.adaptive {
            state.time + h
        } else {
            t0 + i as f64 * cfg.dt
        };
        state = next;
        emit(sinks, &mut sched, &state, last)?;
        if last {
            return Ok(state);
        }
    }
}
