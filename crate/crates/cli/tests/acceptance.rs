//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a
//! readable summary.

use std::path::Path;
use std::sync::OnceLock;

use npe_cli::commands::{run_simulation, RunOptions};
use npe_cli::series::read_series;
use npe_cli::snapshot::{read_snapshot, write_snapshot};
use npe_cli::RunConfig;
use npe_core::diagnostics::{difference_norms, energy_identity_residual, fit_exponential, lp_norm};
use npe_core::experiments::{inviscid_sweep, mollification_sweep, picard_solve, Quantity, SweepBase, SweepSettings};
use npe_core::initial::RandomSmooth;
use npe_core::model::{curl, divergence, poisson_potential, tendency, velocity_form_tendency, velocity_from_vorticity};
use npe_core::{
    integrate, DiagnosticsRecord, FnSink, Grid, PhysParams, PicardConfig, Preset, Sink, SimState, SpectralField2D,
    StepperConfig, SweepMode,
};

fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!("[{}] {id:02} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn sci_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn npe() -> PhysParams {
    PhysParams::npe(1.0, 1.0, 1.0)
}

fn random_smooth(n: usize, seed: u64) -> SimState {
    Preset::default().build(Grid::new(n).unwrap(), seed).unwrap()
}

fn max_abs_diff(a: &SpectralField2D, b: &SpectralField2D) -> f64 {
    a.to_physical()
        .iter()
        .zip(b.to_physical())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Runs with a sink recording every `every` seconds and returns the records.
fn recorded_run(state: SimState, params: &PhysParams, dt: f64, t_end: f64, every: f64) -> Vec<DiagnosticsRecord> {
    let mut records = Vec::new();
    let mut sink = FnSink::new(every, |s: &SimState| {
        records.push(DiagnosticsRecord::compute(s, params).map_err(|e| e.to_string())?);
        Ok(())
    });
    let mut sinks: [&mut dyn Sink; 1] = [&mut sink];
    integrate(state, params, &StepperConfig::fixed(dt, t_end), &mut sinks).unwrap();
    records
}

#[test]
fn spectral_exactness() {
    let g = Grid::new(32).unwrap();
    let f = |h: fn(f64, f64) -> f64| SpectralField2D::from_fn(g, h);
    let cos_x = f(|x, _| x.cos());
    let mode = f(|x, y| (3.0 * x).sin() * (4.0 * y).cos());

    let mut closed = 0.0f64;
    let mut track = |a: &SpectralField2D, b: &SpectralField2D| closed = closed.max(max_abs_diff(a, b));
    track(&poisson_potential(&cos_x, 2.0).unwrap(), &f(|x, _| x.cos() / 2.0));
    track(&poisson_potential(&mode, 1.0).unwrap(), &f(|x, y| (3.0 * x).sin() * (4.0 * y).cos() / 25.0));
    let (u1, u2) = velocity_from_vorticity(&cos_x).unwrap();
    track(&u1, &SpectralField2D::zeros(g));
    track(&u2, &f(|x, _| x.sin()));
    let (u1, u2) = velocity_from_vorticity(&f(|x, y| 2.0 * x.cos() * y.cos())).unwrap();
    track(&u1, &f(|x, y| -x.cos() * y.sin()));
    track(&u2, &f(|x, y| x.sin() * y.cos()));
    track(&cos_x.dx(), &f(|x, _| -x.sin()));
    track(&mode.laplacian(), &f(|x, y| -25.0 * (3.0 * x).sin() * (4.0 * y).cos()));
    track(&SpectralField2D::constant(g, 3.0).dy(), &SpectralField2D::zeros(g));
    track(&cos_x.inverse_laplacian().unwrap(), &f(|x, _| -x.cos()));
    track(&mode.inverse_laplacian().unwrap(), &f(|x, y| -(3.0 * x).sin() * (4.0 * y).cos() / 25.0));

    let state = random_smooth(64, 11);
    let (u1, u2) = velocity_from_vorticity(&state.omega).unwrap();
    let div = divergence(&u1, &u2).max_abs_coeff();
    let grad_u = [u1.dx(), u1.dy(), u2.dx(), u2.dy()]
        .iter()
        .map(|d| lp_norm(d, 2.0).unwrap().powi(2))
        .sum::<f64>()
        .sqrt();
    let w = lp_norm(&state.omega, 2.0).unwrap();
    let grad_gap = (grad_u - w).abs() / w;

    let ok = closed <= 1e-12 && div <= 1e-14 && grad_gap <= 1e-12;
    verdict(
        1,
        "spectral exactness",
        ok,
        &format!("closed forms {closed:.2e} (<= 1e-12), div u {div:.2e} (<= 1e-14), |grad u| vs |omega| {grad_gap:.2e} (<= 1e-12)"),
    );
    assert!(ok);
}

type Column = fn(&DiagnosticsRecord) -> f64;

struct LongRun {
    records: Vec<DiagnosticsRecord>,
}

const LONG_DT: f64 = 1e-3;
const LONG_T: f64 = 5.0;

/// Random-smooth NPE run on 128² to t = 5 with a record at every step.
fn long_run() -> &'static LongRun {
    static RUN: OnceLock<LongRun> = OnceLock::new();
    RUN.get_or_init(|| LongRun {
        records: recorded_run(random_smooth(128, 0), &npe(), LONG_DT, LONG_T, LONG_DT),
    })
}

#[test]
fn conservation() {
    let recs = &long_run().records;
    let sigma0 = recs[0].mean_sigma;
    let mean_rho = recs.iter().map(|r| r.mean_rho.abs()).fold(0.0, f64::max);
    let drift = recs.iter().map(|r| (r.mean_sigma - sigma0).abs()).fold(0.0, f64::max) / sigma0.abs();
    let min_c = recs.iter().map(|r| r.min_c1.min(r.min_c2)).fold(f64::INFINITY, f64::min);
    let reached = recs.last().unwrap().time;

    let ok = (reached - LONG_T).abs() < 1e-12 && mean_rho <= 1e-13 && drift <= 1e-10 && min_c >= -1e-8;
    verdict(
        2,
        "conservation",
        ok,
        &format!(
            "{} records to t={reached}: max|mean rho| {mean_rho:.2e} (<= 1e-13), salt drift {drift:.2e} (<= 1e-10), min c {min_c:.3e} (>= -1e-8)",
            recs.len()
        ),
    );
    assert!(ok);
}

fn max_energy_residual(recs: &[DiagnosticsRecord], t_max: f64) -> f64 {
    recs.windows(3)
        .filter(|w| w[1].time <= t_max + 1e-12)
        .map(|w| energy_identity_residual(w).unwrap().abs())
        .fold(0.0, f64::max)
}

#[test]
fn dissipation_identity() {
    let recs = &long_run().records;
    let residual = max_energy_residual(recs, LONG_T);
    let max_diss = recs.iter().map(|r| r.dissipation).fold(0.0, f64::max);
    let bound = 1e-4 * max_diss;

    // same data at half the step over a shorter horizon
    let horizon = 0.5;
    let coarse = max_energy_residual(recs, horizon - LONG_DT);
    let fine_recs = recorded_run(random_smooth(128, 0), &npe(), LONG_DT / 2.0, horizon, LONG_DT / 2.0);
    let fine = max_energy_residual(&fine_recs, horizon - LONG_DT);
    let ratio = coarse / fine;

    let ok = residual <= bound && (3.5..=4.5).contains(&ratio);
    verdict(
        3,
        "dissipation identity",
        ok,
        &format!("max residual {residual:.3e} (<= {bound:.3e}); halving dt shrinks it {ratio:.3}x (in [3.5, 4.5])"),
    );
    assert!(ok);
}

#[test]
fn decay_envelopes() {
    let recs = &long_run().records;
    let d = npe().diffusivity;
    let e0 = recs[0].energy_l2;
    let worst = recs
        .iter()
        .map(|r| r.energy_l2 / (e0 * (-2.0 * d * r.time).exp()))
        .fold(0.0, f64::max);
    let mut ok = worst <= 1.0 + 1e-6;
    let mut detail = format!("sup E(t)/(E(0)e^(-2Dt)) = {worst:.8} (<= 1 + 1e-6)");

    let columns: [(&str, Column); 4] = [
        ("rho L3", |r| r.lp_rho[1]),
        ("rho Linf", |r| r.lp_rho[3]),
        ("sigma fluct L3", |r| r.lp_sigma_fluct[1]),
        ("grad phi sup", |r| r.grad_phi_sup),
    ];
    for (name, col) in columns {
        let series: Vec<_> = recs.iter().step_by(10).map(|r| (r.time, col(r))).collect();
        match fit_exponential(&series, (1.0, 5.0)) {
            Ok(fit) => {
                ok &= fit.rate > 0.0 && fit.rms_residual <= 0.1;
                detail.push_str(&format!("; {name} rate {:.4} rms {:.2e}", fit.rate, fit.rms_residual));
            }
            Err(e) => {
                ok = false;
                detail.push_str(&format!("; {name} fit failed: {e}"));
            }
        }
    }
    verdict(4, "decay envelopes", ok, &detail);
    assert!(ok);
}

#[test]
fn temporal_order() {
    let state = random_smooth(32, 7);
    let params = npe();
    let horizon = 0.5;
    let run = |dt: f64| integrate(state.clone(), &params, &StepperConfig::fixed(dt, horizon), &mut []).unwrap();
    let dist = |a: &SimState, b: &SimState| {
        let d = difference_norms(a, b, &[0.0]).unwrap()[0];
        (d.rho * d.rho + d.sigma * d.sigma + d.u * d.u).sqrt()
    };
    let dt = 0.02;
    let (a, b, c) = (run(dt), run(dt / 2.0), run(dt / 4.0));
    let (e1, e2) = (dist(&a, &b), dist(&b, &c));
    let order = (e1 / e2).log2();

    let ok = (3.5..=4.5).contains(&order);
    verdict(
        5,
        "temporal order",
        ok,
        &format!("successive differences {e1:.3e}, {e2:.3e}: order {order:.3} (in [3.5, 4.5])"),
    );
    assert!(ok);
}

#[test]
fn vortex_method_consistency() {
    let ells = [0.05, 0.1, 0.2];
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let state = random_smooth(32, 1000 + i);
        let params = npe().with_mollification(ells[i as usize % 3]);
        let (g1, g2) = velocity_form_tendency(&state, &params).unwrap();
        let d_omega = tendency(&state, &params).unwrap().d_omega;
        let gap = (&curl(&g1, &g2) - &d_omega).max_abs_coeff() / d_omega.max_abs_coeff();
        worst = worst.max(gap);
    }
    let ok = worst <= 1e-10;
    verdict(
        6,
        "vortex-method consistency",
        ok,
        &format!("100 states, worst relative curl mismatch {worst:.2e} (<= 1e-10)"),
    );
    assert!(ok);
}

#[test]
fn inviscid_limit() {
    let base = SweepBase {
        initial: random_smooth(128, 0),
        params: npe(),
        dt: 1e-3,
    };
    let nus = [1e-2, 3e-3, 1e-3, 3e-4];
    let settings = SweepSettings {
        sample_times: vec![1.0],
        s_list: vec![1.0, 2.0, 3.0],
        record_interval: 0.1,
    };
    let report = inviscid_sweep(&base, &nus, &settings, SweepMode::Matched).unwrap();
    let total = |nu: f64, s: f64| Quantity::Total.of(report.member(nu).unwrap().at(1.0, s).unwrap());

    let h1 = report.slope(1.0, 1.0, Quantity::Total).unwrap().slope;
    let h2 = report.slope(1.0, 2.0, Quantity::Total).unwrap().slope;
    let c = total(1e-2, 2.0) / (1e-2f64).sqrt();
    let h2_envelope = nus.iter().all(|&nu| total(nu, 2.0) <= c * nu.sqrt() * (1.0 + 1e-12));
    let h3: Vec<f64> = nus.iter().map(|&nu| total(nu, 3.0)).collect();
    let h3_monotone = h3.windows(2).all(|w| w[1] <= w[0]);

    let ok = report.is_complete() && (0.85..=1.15).contains(&h1) && h2_envelope && h2 >= 0.45 && h3_monotone;
    verdict(
        7,
        "inviscid limit",
        ok,
        &format!(
            "H1 slope {h1:.4} (in [0.85, 1.15]); H2 slope {h2:.4} (>= 0.45), envelope C(nu t)^1/2 {}; H3 diffs [{}] decreasing {h3_monotone}",
            if h2_envelope { "holds" } else { "violated" },
            sci_list(&h3)
        ),
    );
    assert!(ok);
}

#[test]
fn mollification_uniformity() {
    let base = SweepBase {
        initial: random_smooth(128, 0),
        params: npe(),
        dt: 1e-3,
    };
    let ells = [0.2, 0.1, 0.05];
    let settings = SweepSettings {
        sample_times: vec![1.0],
        s_list: vec![0.0],
        record_interval: 0.01,
    };
    let report = mollification_sweep(&base, &ells, &settings).unwrap();
    let l2: Vec<f64> = ells
        .iter()
        .map(|&ell| Quantity::Total.of(report.member(ell).unwrap().at(1.0, 0.0).unwrap()))
        .collect();
    let monotone = l2.windows(2).all(|w| w[1] <= w[0]);
    let worst_ratio = report
        .members
        .iter()
        .filter_map(|m| m.envelope)
        .chain(report.reference)
        .map(|e| e.decay_ratio)
        .fold(0.0, f64::max);
    let envelopes = report.members.iter().filter(|m| m.envelope.is_some()).count();

    let ok = report.is_complete() && monotone && envelopes == ells.len() && worst_ratio <= 1.0 + 1e-6;
    verdict(
        8,
        "mollification uniformity",
        ok,
        &format!(
            "L2 diffs at t=1 [{}] nonincreasing {monotone}; sup over ell of decay ratio {worst_ratio:.8} (<= 1 + 1e-6)",
            sci_list(&l2)
        ),
    );
    assert!(ok);
}

#[test]
fn picard_contraction() {
    let small = Preset::RandomSmooth(RandomSmooth {
        rho_amp: 0.1,
        sigma_amp: 0.1,
        omega_amp: 0.2,
        ..RandomSmooth::default()
    });
    let initial = small.build(Grid::new(32).unwrap(), 3).unwrap();
    let params = npe().with_mollification(0.1);
    let report = picard_solve(&initial, &params, &PicardConfig::default()).unwrap();

    let worst_q = report.ratios.iter().skip(2).flatten().copied().fold(0.0, f64::max);
    let direct = integrate(
        initial.clone(),
        &params,
        &StepperConfig::fixed(report.dt, report.t0),
        &mut [],
    )
    .unwrap();
    let d = difference_norms(&report.final_state, &direct, &[0.0]).unwrap()[0];
    let gap = (d.rho * d.rho + d.sigma * d.sigma + d.u * d.u).sqrt();

    let ok = report.t0_is_default && worst_q <= 0.5 && gap <= 1e-6;
    verdict(
        9,
        "Picard contraction",
        ok,
        &format!(
            "T0 {:.4e}, max q_n (n >= 2) {worst_q:.4} (<= 0.5), L2 gap to direct solve {gap:.2e} (<= 1e-6)",
            report.t0
        ),
    );
    assert!(ok);
}

fn small_config(dir: &Path, series: &str, t_end: f64) -> RunConfig {
    let text = format!(
        "seed = 5\n[grid]\nn = 32\n[time]\ndt = 0.01\nt_end = {t_end}\n[output]\nseries_path = \"{series}\"\nseries_interval = 0.05\nsnapshot_interval = 1.0\nsnapshot_dir = \"snaps\"\n"
    );
    let path = dir.join(format!("{series}.toml"));
    std::fs::write(&path, text).unwrap();
    RunConfig::load(&path, &[]).unwrap()
}

#[test]
fn determinism_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions::default();

    run_simulation(&small_config(dir.path(), "a.csv", 2.0), &opts).unwrap();
    run_simulation(&small_config(dir.path(), "b.csv", 2.0), &opts).unwrap();
    let identical = std::fs::read(dir.path().join("a.csv")).unwrap() == std::fs::read(dir.path().join("b.csv")).unwrap();

    let state = random_smooth(64, 21);
    let params = npe().with_mollification(0.1);
    let snap = dir.path().join("round.npe");
    write_snapshot(&state, &params, &snap).unwrap();
    let (back, back_params) = read_snapshot(&snap).unwrap();
    let bit_exact = back == state && back_params == params;

    // stop at t = 1, then resume from the checkpoint to t = 2
    let first = small_config(dir.path(), "c.csv", 1.0);
    run_simulation(&first, &opts).unwrap();
    let checkpoint = dir.path().join("snaps").join("snapshot_t1.000000.npe");
    let resume = RunOptions {
        resume: Some(checkpoint),
        ..RunOptions::default()
    };
    run_simulation(&small_config(dir.path(), "c.csv", 2.0), &resume).unwrap();
    let whole = read_series(&dir.path().join("a.csv")).unwrap();
    let resumed = read_series(&dir.path().join("c.csv")).unwrap();
    let worst = if whole.len() == resumed.len() {
        whole
            .iter()
            .zip(&resumed)
            .flat_map(|(a, b)| a.to_row().into_iter().zip(b.to_row()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let ok = identical && bit_exact && worst <= 1e-12;
    verdict(
        10,
        "determinism and persistence",
        ok,
        &format!(
            "repeat runs byte-identical {identical}; snapshot round trip bit-exact {bit_exact}; resume vs uninterrupted worst column gap {worst:.2e} over {} rows (<= 1e-12)",
            resumed.len()
        ),
    );
    assert!(ok);
}
