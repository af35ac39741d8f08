//! Verification campaigns: vanishing-viscosity and mollification sweeps,
//! initial-data regularization, and the frozen-coefficient Picard iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{difference_norms, least_squares, sobolev_norm, DiagnosticsRecord, DifferenceNorms};
use crate::error::{Error, Result};
use crate::model::{transport_terms, velocity_from_vorticity, Drivers, PhysParams, SimState};
use crate::spectral::SpectralField2D;
use crate::timestep::{integrate, FnSink, Sink, Stepper, StepperConfig};

/// Smooths initial data at scale `kappa`.
///
/// ρ and σ (hence both concentrations) are mollified; ω is projected onto the
/// Fourier modes with `|k| ≤ ⌊1/κ⌋`.
pub fn regularize_initial_data(state: &SimState, kappa: f64) -> Result<SimState> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
    }
    let radius = (1.0 / kappa).floor().min(i64::MAX as f64) as i64;
    let m = SpectralField2D::modes_within(state.grid(), radius);
    Ok(SimState {
        time: state.time,
        rho: state.rho.mollify(kappa)?,
        sigma: state.sigma.mollify(kappa)?,
        omega: state.omega.project_low_modes(m),
    })
}

/// Initial data, physical constants and step size shared by every sweep member.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub initial: SimState,
    /// Constants for the reference run; `nu`, `ell` and `variant` are
    /// overridden per member.
    pub params: PhysParams,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Times at which member states are compared with the reference.
    pub sample_times: Vec<f64>,
    /// Sobolev orders of the difference norms.
    pub s_list: Vec<f64>,
    /// Spacing of the diagnostics feeding the per-member envelopes.
    pub record_interval: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            sample_times: vec![1.0],
            s_list: vec![0.0, 1.0, 2.0, 3.0],
            record_interval: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Nu,
    Ell,
    Kappa,
}

/// How NPNS members are initialised in a vanishing-viscosity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Same data as the inviscid reference.
    #[default]
    Matched,
    /// Data regularized with `κ = ν^{1/3}`.
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Rho,
    Sigma,
    U,
    /// Sum of the three.
    Total,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Rho, Quantity::Sigma, Quantity::U, Quantity::Total];

    pub fn of(self, d: &DifferenceNorms) -> f64 {
        match self {
            Quantity::Rho => d.rho,
            Quantity::Sigma => d.sigma,
            Quantity::U => d.u,
            Quantity::Total => d.rho + d.sigma + d.u,
        }
    }
}

/// Time-extremes of the monitored columns over one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Column-wise sup over the recorded times, except `min_c1`/`min_c2`
    /// which hold the inf. `time` is the last recorded time.
    pub extremes: DiagnosticsRecord,
    pub initial_energy_l2: f64,
    /// `sup_t energy_l2(t) / (energy_l2(0) e^{-2Dt})`.
    pub decay_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDifferences {
    pub time: f64,
    pub norms: Vec<DifferenceNorms>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub value: f64,
    /// Regularization scale applied to this member's data, if any.
    pub kappa: Option<f64>,
    pub differences: Vec<SampleDifferences>,
    pub envelope: Option<Envelope>,
}

impl SweepMember {
    /// Difference norms at `time` and order `s`.
    pub fn at(&self, time: f64, s: f64) -> Option<&DifferenceNorms> {
        self.differences
            .iter()
            .find(|d| d.time == time)?
            .norms
            .iter()
            .find(|n| n.s == s)
    }
}

/// Least-squares slope of `log(difference)` against `log(parameter)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub time: f64,
    pub s: f64,
    pub quantity: Quantity,
    pub slope: f64,
    pub rms_residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub value: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub mode: Option<SweepMode>,
    pub values: Vec<f64>,
    pub sample_times: Vec<f64>,
    pub s_list: Vec<f64>,
    pub reference: Option<Envelope>,
    /// Completed members, in the order of `values`.
    pub members: Vec<SweepMember>,
    pub slopes: Vec<SlopeFit>,
    /// Members whose run failed; the report is partial when non-empty.
    pub failures: Vec<MemberFailure>,
}

impl SweepReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn member(&self, value: f64) -> Option<&SweepMember> {
        self.members.iter().find(|m| m.value == value)
    }

    pub fn slope(&self, time: f64, s: f64, quantity: Quantity) -> Option<&SlopeFit> {
        self.slopes
            .iter()
            .find(|f| f.time == time && f.s == s && f.quantity == quantity)
    }
}

struct MemberRun {
    samples: Vec<SimState>,
    envelope: Envelope,
}

fn validate_settings(base: &SweepBase, settings: &SweepSettings) -> Result<Vec<f64>> {
    if !(base.dt > 0.0) {
        return Err(Error::InvalidArgument("sweep dt must be positive".into()));
    }
    if !(settings.record_interval > 0.0) {
        return Err(Error::InvalidArgument("record_interval must be positive".into()));
    }
    if settings.s_list.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("Sobolev orders must be >= 0".into()));
    }
    let mut times = settings.sample_times.clone();
    if times.is_empty() || times.iter().any(|t| !(*t >= base.initial.time)) {
        return Err(Error::InvalidArgument(
            "sample times must be non-empty and not precede the initial time".into(),
        ));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Runs one member through the sorted `times`, keeping the state at each.
fn run_member(initial: SimState, params: &PhysParams, dt: f64, times: &[f64], interval: f64) -> Result<MemberRun> {
    let t0 = initial.time;
    let d = params.diffusivity;
    let mut extremes: Option<DiagnosticsRecord> = None;
    let mut e0 = None;
    let mut ratio: f64 = 0.0;
    let mut state = initial;
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let mut sink = FnSink::new(interval, |s: &SimState| {
            let r = DiagnosticsRecord::compute(s, params).map_err(|e| e.to_string())?;
            let e_init = *e0.get_or_insert(r.energy_l2);
            if e_init > 0.0 {
                ratio = ratio.max(r.energy_l2 / (e_init * (-2.0 * d * (s.time - t0)).exp()));
            }
            extremes = Some(match extremes {
                None => r,
                Some(m) => fold_extremes(&m, &r),
            });
            Ok(())
        });
        let cfg = StepperConfig::fixed(dt, t);
        state = integrate(state, params, &cfg, &mut [&mut sink as &mut dyn Sink])?;
        samples.push(state.clone());
    }
    let extremes = extremes.expect("sink fires at least once");
    Ok(MemberRun {
        samples,
        envelope: Envelope {
            extremes,
            initial_energy_l2: e0.unwrap_or(0.0),
            decay_ratio: ratio,
        },
    })
}

fn fold_extremes(acc: &DiagnosticsRecord, r: &DiagnosticsRecord) -> DiagnosticsRecord {
    let a = acc.to_row();
    let b = r.to_row();
    let mut out = [0.0; 28];
    for (i, name) in DiagnosticsRecord::COLUMNS.iter().enumerate() {
        out[i] = if name.starts_with("min_") { a[i].min(b[i]) } else { a[i].max(b[i]) };
    }
    DiagnosticsRecord::from_row(&out).expect("fixed width")
}

fn sample_differences(run: &[SimState], reference: &[SimState], times: &[f64], s_list: &[f64]) -> Result<Vec<SampleDifferences>> {
    times
        .iter()
        .zip(run.iter().zip(reference))
        .map(|(&time, (a, b))| {
            Ok(SampleDifferences {
                time,
                norms: difference_norms(a, b, s_list)?,
            })
        })
        .collect()
}

fn fit_slopes(members: &[SweepMember], times: &[f64], s_list: &[f64]) -> Vec<SlopeFit> {
    let mut fits = Vec::new();
    for &time in times {
        for &s in s_list {
            for quantity in Quantity::ALL {
                let pts: Vec<(f64, f64)> = members
                    .iter()
                    .filter(|m| m.value > 0.0)
                    .filter_map(|m| {
                        let d = quantity.of(m.at(time, s)?);
                        (d > 0.0).then(|| (m.value.ln(), d.ln()))
                    })
                    .collect();
                if pts.len() < 2 {
                    continue;
                }
                if let Some(line) = least_squares(&pts) {
                    fits.push(SlopeFit {
                        time,
                        s,
                        quantity,
                        slope: line.slope,
                        rms_residual: line.rms_residual,
                        points: pts.len(),
                    });
                }
            }
        }
    }
    fits
}

struct MemberSpec {
    value: f64,
    kappa: Option<f64>,
    initial: SimState,
    params: PhysParams,
}

fn run_sweep(
    base: &SweepBase,
    settings: &SweepSettings,
    parameter: SweepParameter,
    mode: Option<SweepMode>,
    reference_params: PhysParams,
    specs: Vec<MemberSpec>,
) -> Result<SweepReport> {
    let times = validate_settings(base, settings)?;
    reference_params.validate()?;
    for m in &specs {
        m.params.validate()?;
    }
    let values: Vec<f64> = specs.iter().map(|m| m.value).collect();
    let interval = settings.record_interval;

    // The reference joins the parallel batch as member `None`.
    let jobs: Vec<Option<&MemberSpec>> = std::iter::once(None).chain(specs.iter().map(Some)).collect();
    let mut results: Vec<Result<MemberRun>> = jobs
        .par_iter()
        .map(|job| match job {
            None => run_member(base.initial.clone(), &reference_params, base.dt, &times, interval),
            Some(m) => run_member(m.initial.clone(), &m.params, base.dt, &times, interval),
        })
        .collect();
    let reference = results.remove(0)?;

    let mut members = Vec::new();
    let mut failures = Vec::new();
    for (spec, result) in specs.iter().zip(results) {
        match result {
            Ok(run) => members.push(SweepMember {
                value: spec.value,
                kappa: spec.kappa,
                differences: sample_differences(&run.samples, &reference.samples, &times, &settings.s_list)?,
                envelope: Some(run.envelope),
            }),
            Err(e) => failures.push(MemberFailure {
                value: spec.value,
                message: e.to_string(),
            }),
        }
    }
    let slopes = fit_slopes(&members, &times, &settings.s_list);
    Ok(SweepReport {
        parameter,
        mode,
        values,
        sample_times: times,
        s_list: settings.s_list.clone(),
        reference: Some(reference.envelope),
        members,
        slopes,
        failures,
    })
}

/// Compares NPNS runs at each viscosity with the inviscid reference.
///
/// All runs share grid, step size and (in matched mode) initial data, and run
/// concurrently. A failed member is listed in `failures`; a failed reference
/// is an error.
pub fn inviscid_sweep(base: &SweepBase, nu_list: &[f64], settings: &SweepSettings, mode: SweepMode) -> Result<SweepReport> {
    if let Some(nu) = nu_list.iter().find(|nu| !(**nu >= 0.0)) {
        return Err(Error::InvalidArgument(format!("viscosities must be >= 0, got {nu}")));
    }
    let p = base.params;
    let reference = PhysParams::npe(p.diffusivity, p.epsilon, p.kbtk);
    let specs = nu_list
        .iter()
        .map(|&nu| {
            let kappa = (mode == SweepMode::Regularized && nu > 0.0).then(|| nu.cbrt());
            let initial = match kappa {
                Some(k) => regularize_initial_data(&base.initial, k)?,
                None => base.initial.clone(),
            };
            Ok(MemberSpec {
                value: nu,
                kappa,
                initial,
                params: reference.with_viscosity(nu),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    run_sweep(base, settings, SweepParameter::Nu, Some(mode), reference, specs)
}

/// Compares vortex-method runs at each mollifier scale with the unmollified
/// reference. An `ell = 0` entry reruns the reference itself.
pub fn mollification_sweep(base: &SweepBase, ell_list: &[f64], settings: &SweepSettings) -> Result<SweepReport> {
    if let Some(ell) = ell_list.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidArgument(format!("mollifier scales must be >= 0, got {ell}")));
    }
    let p = base.params;
    let reference = PhysParams::npe(p.diffusivity, p.epsilon, p.kbtk);
    let specs = ell_list
        .iter()
        .map(|&ell| MemberSpec {
            value: ell,
            kappa: None,
            initial: base.initial.clone(),
            params: if ell > 0.0 { reference.with_mollification(ell) } else { reference },
        })
        .collect();
    run_sweep(base, settings, SweepParameter::Ell, None, reference, specs)
}

/// Distance between the data and its regularization at each `kappa`, at the
/// initial time. No time stepping is involved.
pub fn regularization_sweep(state: &SimState, kappa_list: &[f64], s_list: &[f64]) -> Result<SweepReport> {
    let members = kappa_list
        .iter()
        .map(|&kappa| {
            let reg = regularize_initial_data(state, kappa)?;
            Ok(SweepMember {
                value: kappa,
                kappa: Some(kappa),
                differences: vec![SampleDifferences {
                    time: state.time,
                    norms: difference_norms(&reg, state, s_list)?,
                }],
                envelope: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times = vec![state.time];
    let slopes = fit_slopes(&members, &times, s_list);
    Ok(SweepReport {
        parameter: SweepParameter::Kappa,
        mode: None,
        values: kappa_list.to_vec(),
        sample_times: times,
        s_list: s_list.to_vec(),
        reference: None,
        members,
        slopes,
        failures: Vec::new(),
    })
}

/// Settings of the frozen-coefficient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    /// Horizon; `None` selects [`default_horizon`].
    pub t0: Option<f64>,
    /// Number of iterates after the constant-in-time iterate 0.
    pub n_iters: usize,
    /// Step size; `None` uses `t0 / 20`.
    pub dt: Option<f64>,
    /// Differences below `floor_rel` times the size of the data count as
    /// converged, and the ratio involving them is not reported.
    pub floor_rel: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            t0: None,
            n_iters: 10,
            dt: None,
            floor_rel: 1e-12,
        }
    }
}

/// `‖u₀‖_{H¹} + ‖ρ₀‖_{H¹} + ‖σ₀‖_{H¹}`.
pub fn size_proxy(state: &SimState) -> Result<f64> {
    let mut omega = state.omega.clone();
    omega.remove_mean();
    let (u1, u2) = velocity_from_vorticity(&omega)?;
    let u = sobolev_norm(&u1, 1.0)?.hypot(sobolev_norm(&u2, 1.0)?);
    Ok(u + sobolev_norm(&state.rho, 1.0)? + sobolev_norm(&state.sigma, 1.0)?)
}

/// Heuristic horizon `min(0.1, 0.05 / M²)` for size proxy `M`.
pub fn default_horizon(m: f64) -> f64 {
    if m > 0.0 {
        (0.05 / (m * m)).min(0.1)
    } else {
        0.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateSummary {
    pub index: usize,
    /// Largest `|mean ρ|` over the stored times.
    pub max_abs_mean_rho: f64,
    /// Largest `|mean σ − mean σ₀|` over the stored times.
    pub max_salt_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    pub t0: f64,
    pub t0_is_default: bool,
    pub dt: f64,
    pub steps: usize,
    pub size_proxy: f64,
    pub iterates: Vec<IterateSummary>,
    /// `δ_n`: sup over stored times of the L² change in (ρ, σ) from iterate n to n+1.
    pub deltas: Vec<f64>,
    /// `υ_n`: sup over stored times of the L² change in u.
    pub upsilons: Vec<f64>,
    /// `q_n = (δ_{n+1} + υ_{n+1}) / (δ_n + υ_n)`; `None` once `δ_n + υ_n` is at roundoff.
    pub ratios: Vec<Option<f64>>,
    /// Sup over steps of the one-step defect of the final iterate against
    /// the nonlinear stepper, divided by `dt`.
    pub nonlinear_residual: f64,
    #[serde(skip)]
    pub final_state: SimState,
}

struct Trajectory {
    /// State at every stored time `t0 + j·dt`, `j = 0..=steps`.
    nodes: Vec<SimState>,
    /// The four stage states of every step.
    stages: Vec<[SimState; 4]>,
}

fn l2(f: &SpectralField2D) -> f64 {
    2.0 * std::f64::consts::PI * f.coeff_energy().sqrt()
}

fn velocity_l2(omega: &SpectralField2D) -> Result<f64> {
    let mut w = omega.clone();
    w.remove_mean();
    let (u1, u2) = velocity_from_vorticity(&w)?;
    Ok(l2(&u1).hypot(l2(&u2)))
}

fn summarize(index: usize, traj: &Trajectory, sigma0: f64) -> IterateSummary {
    let mut s = IterateSummary {
        index,
        max_abs_mean_rho: 0.0,
        max_salt_drift: 0.0,
    };
    for y in &traj.nodes {
        s.max_abs_mean_rho = s.max_abs_mean_rho.max(y.rho.mean().abs());
        s.max_salt_drift = s.max_salt_drift.max((y.sigma.mean() - sigma0).abs());
    }
    s
}

/// Picard iteration for the coupled system over `[t, t + T0]`.
///
/// Iterate 0 is the initial data held constant. Iterate n+1 integrates the
/// linear system whose advecting velocity and potential are taken from
/// iterate n at the matching Runge-Kutta stage, so the fixed point is the
/// nonlinear IF-RK4 trajectory on the same step grid.
pub fn picard_solve(initial: &SimState, params: &PhysParams, cfg: &PicardConfig) -> Result<PicardReport> {
    params.validate()?;
    if cfg.n_iters < 2 {
        return Err(Error::InvalidArgument(format!("n_iters must be >= 2, got {}", cfg.n_iters)));
    }
    let m = size_proxy(initial)?;
    let t0 = cfg.t0.unwrap_or_else(|| default_horizon(m));
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::InvalidArgument(format!("T0 must be > 0, got {t0}")));
    }
    let nominal = cfg.dt.unwrap_or(t0 / 20.0);
    if !(nominal > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {nominal}")));
    }
    let steps = ((t0 / nominal) - 1e-9).ceil().max(1.0) as usize;
    let dt = t0 / steps as f64;
    let start = initial.time;
    let sigma0 = initial.sigma.mean();
    let scale = {
        let mut fluct = initial.sigma.clone();
        fluct.remove_mean();
        l2(&initial.rho) + l2(&fluct) + velocity_l2(&initial.omega)?
    };
    let floor = cfg.floor_rel * scale.max(f64::MIN_POSITIVE);

    let mut stepper = Stepper::new(initial.grid(), *params);
    let mut prev = Trajectory {
        nodes: vec![initial.clone(); steps + 1],
        stages: vec![std::array::from_fn(|_| initial.clone()); steps],
    };
    let mut iterates = vec![summarize(0, &prev, sigma0)];
    let mut deltas = Vec::new();
    let mut upsilons = Vec::new();

    for n in 1..=cfg.n_iters {
        let mut nodes = Vec::with_capacity(steps + 1);
        let mut stages = Vec::with_capacity(steps);
        let mut y = initial.clone();
        nodes.push(y.clone());
        for j in 0..steps {
            let drivers = prev.stages[j]
                .iter()
                .map(|s| Drivers::from_state(s, params))
                .collect::<Result<Vec<_>>>()?;
            let mut seen: [Option<SimState>; 4] = Default::default();
            let mut next = stepper.step_with(&y, dt, |i, stage| {
                seen[i] = Some(stage.clone());
                transport_terms(stage, Some(&drivers[i]), params)
            })?;
            next.time = start + (j + 1) as f64 * dt;
            stages.push(seen.map(|s| s.expect("all four stages evaluated")));
            y = next;
            nodes.push(y.clone());
        }
        let traj = Trajectory { nodes, stages };

        let (mut delta, mut upsilon) = (0.0_f64, 0.0_f64);
        for (a, b) in traj.nodes.iter().zip(&prev.nodes) {
            let dr = l2(&(&a.rho - &b.rho));
            let ds = l2(&(&a.sigma - &b.sigma));
            delta = delta.max(dr.hypot(ds));
            upsilon = upsilon.max(velocity_l2(&(&a.omega - &b.omega))?);
        }
        deltas.push(delta);
        upsilons.push(upsilon);
        iterates.push(summarize(n, &traj, sigma0));
        prev = traj;
    }

    let ratios: Vec<Option<f64>> = deltas
        .windows(2)
        .zip(upsilons.windows(2))
        .map(|(d, u)| {
            let (before, after) = (d[0] + u[0], d[1] + u[1]);
            (before > floor).then(|| after / before)
        })
        .collect();
    let tail: Vec<f64> = ratios.iter().rev().take(3).map_while(|q| *q).collect();
    if tail.len() == 3 && tail.iter().all(|q| *q >= 1.0) {
        return Err(Error::NoContraction {
            ratios: ratios.iter().flatten().copied().collect(),
        });
    }

    let mut residual = 0.0_f64;
    for j in 0..steps {
        let mut direct = stepper.step(&prev.nodes[j], dt)?;
        direct.time = prev.nodes[j + 1].time;
        let target = &prev.nodes[j + 1];
        let defect = l2(&(&direct.rho - &target.rho))
            .hypot(l2(&(&direct.sigma - &target.sigma)))
            .hypot(l2(&(&direct.omega - &target.omega)));
        residual = residual.max(defect / dt);
    }

    Ok(PicardReport {
        t0,
        t0_is_default: cfg.t0.is_none(),
        dt,
        steps,
        size_proxy: m,
        iterates,
        deltas,
        upsilons,
        ratios,
        nonlinear_residual: residual,
        final_state: prev.nodes.pop().expect("at least one node"),
    })
}
