//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kinhom::cell_solver::{CellOperator, CellOptions, PowerStart, Scheme};
use kinhom::collision::{PhaseField, Profile, ScatteringKernel, XDependence};
use kinhom::effective::{CellSolution, EffectiveSample};
use kinhom::harness::pipeline::run_pipeline;
use kinhom::harness::ScenarioConfig;
use kinhom::macro_solver::{relative_l2, solve_macro, DriftDiffusion, DriftScheme, MacroOptions};
use kinhom::mv_algebra::{GradMethod, MeanValueFunction, PeriodicGrid};
use kinhom::phase_space::{BoundaryCondition, CellGrid, MacroGrid, VelocityMeasure};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn equilibrium(k: &ScatteringKernel, vm: &VelocityMeasure, cell: &CellGrid, opts: CellOptions) -> (f64, f64) {
    let op = CellOperator::assemble(&[0.0], k, vm, cell, opts).expect("assembly");
    let eq = op.equilibrium_f().expect("equilibrium");
    (eq.lambda, eq.f.min())
}

fn principal_eigenvalue() -> Outcome {
    let two = VelocityMeasure::two_velocity();
    let gl4 = common::gl4();
    let periodic = CellGrid::periodic(1, 32).unwrap();
    let qp = ScatteringKernel::quasi_periodic(0.2, 0.2, 4).unwrap();
    let hull = CellGrid::hull(qp.profile().spectral(1).unwrap().basis().to_vec(), 24).unwrap();
    let spectral = CellOptions {
        scheme: Scheme::Spectral,
        ..CellOptions::default()
    };
    let cases: Vec<(&str, ScatteringKernel, &VelocityMeasure, &CellGrid, CellOptions)> = vec![
        ("constant", ScatteringKernel::constant(1.0, 2).unwrap(), &two, &periodic, CellOptions::default()),
        ("sinusoidal 0.25", ScatteringKernel::sinusoidal(0.25, 2).unwrap(), &two, &periodic, CellOptions::default()),
        ("sinusoidal 0.5", ScatteringKernel::sinusoidal(0.5, 4).unwrap(), &gl4, &periodic, CellOptions::default()),
        ("quasi-periodic", qp.clone(), &gl4, &hull, spectral),
        ("random symmetric", ScatteringKernel::random_symmetric(4, 11).unwrap(), &gl4, &periodic, CellOptions::default()),
    ];
    let mut worst: f64 = 0.0;
    let mut min_f = f64::INFINITY;
    for (_, k, vm, cell, opts) in &cases {
        let (l, f) = equilibrium(k, vm, cell, *opts);
        worst = worst.max((l - 1.0).abs());
        min_f = min_f.min(f);
    }
    outcome(
        worst <= 1e-8 && min_f > 0.0,
        format!("{} families, max |lambda - 1| = {worst:.2e}, min F = {min_f:.3e}", cases.len()),
    )
}

fn constant_kernel_closed_forms() -> Outcome {
    let vm = VelocityMeasure::two_velocity();
    let k = ScatteringKernel::constant(1.0, 2).unwrap();
    let cell = CellGrid::periodic(1, 16).unwrap();
    let (sol, _) = CellSolution::compute(&[0.0], &k, &vm, &cell, CellOptions::default()).unwrap();
    let f_err = sol.equilibrium.f.values().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    let chi = &sol.chi.chi[0];
    let chi_err = (0..16)
        .flat_map(|j| (0..2).map(move |v| (j, v)))
        .map(|(j, v)| (chi.get(j, v) + vm.a(v)[0] / 2.0).abs())
        .fold(0.0, f64::max);
    let s = EffectiveSample::from_cell(&sol, vec![0.0], &vm).unwrap();
    let cfg = ScenarioConfig::parse("[cell]\nn = 16\n[macro]\nn = 64\n[sigma]\nx_dependence = \"tanh_scale\"\n").unwrap();
    let r = run_pipeline(&cfg).unwrap();
    let u_max = r.effective.samples.iter().map(|s| s.u_eff[0].abs()).fold(0.0, f64::max);
    let pass = f_err <= 1e-10
        && chi_err <= 1e-10
        && (s.d_raw[0][0] + 0.5).abs() <= 1e-10
        && (s.d_eff[0][0] - 0.5).abs() <= 1e-10
        && u_max <= 1e-12
        && s.b[0].abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "|F - 1/2| = {f_err:.1e}, |chi + v/2| = {chi_err:.1e}, D_raw = {:.12}, D_eff = {:.12}, max|U| = {u_max:.1e}, b = {:.1e}",
            s.d_raw[0][0], s.d_eff[0][0], s.b[0]
        ),
    )
}

fn dense_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut null_dims = vec![];
    for case in common::cases() {
        let p = common::oracle_p(&case);
        let sv = p.singular_values();
        null_dims.push(sv.iter().filter(|s| **s <= 1e-10 * sv.max()).count());
        let w = common::pairing(&case);
        let cell = CellGrid::periodic(1, common::N).unwrap();
        let op = CellOperator::assemble(&[0.0], &case.kernel, &case.vm, &cell, CellOptions::default()).unwrap();
        let eq = op.equilibrium_f().unwrap();
        let diff = |a: &[f64], b: &DVector<f64>| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(diff(eq.f.values(), &common::constrained_lsq(&p, &DVector::zeros(p.nrows()), &w, 1.0)));
        let g = PhaseField::from_fn(common::N, 2, |j, k| {
            (2.0 * PI * j as f64 / common::N as f64).sin() * if k == 0 { 1.0 } else { -0.5 }
        });
        let fl = op.solve_corrector(&g, &eq).unwrap();
        let gv = DVector::from_column_slice(g.values());
        worst = worst.max(diff(fl.solution.values(), &common::constrained_lsq(&p, &gv, &w, 0.0)));
        let chi = op.solve_chi_star(&eq).unwrap();
        let rhs = DVector::from_fn(p.nrows(), |r, _| -(case.vm.a(r / common::N)[0] - chi.b[0]));
        let ps = common::oracle_p_star(&case, &p);
        worst = worst.max(diff(chi.chi[0].values(), &common::constrained_lsq(&ps, &rhs, &w, 0.0)));
    }
    outcome(
        null_dims.iter().all(|d| *d == 1) && worst <= 1e-8,
        format!("null space dims {null_dims:?}, max oracle deviation {worst:.2e}"),
    )
}

fn structure_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let vm = common::gl4();
    let cell = CellGrid::periodic(1, 16).unwrap();
    let (mut cons, mut dual, mut bound, mut mean): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut sdb_ok = true;
    for _ in 0..100 {
        let seed = rng.random::<u64>();
        let alpha = rng.random_range(-0.9..0.9);
        let table = ScatteringKernel::random_symmetric(4, seed).unwrap().velocity_table().to_vec();
        let k = ScatteringKernel::new(Profile::Sinusoidal { alpha }, table.clone(), XDependence::None).unwrap();
        let q = k.at(&[0.0], &vm, &cell).unwrap();
        let f = PhaseField::from_values(16, 4, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let g = PhaseField::from_values(16, 4, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        let qf = q.apply_q(&f).unwrap();
        for j in 0..16 {
            let m: f64 = (0..4).map(|v| vm.weights()[v] * qf.get(j, v)).sum();
            cons = cons.max(m.abs() / qf.max_abs());
        }
        let lhs = qf.pairing(&g, &vm);
        let rhs = f.pairing(&q.apply_q_star(&g).unwrap(), &vm);
        dual = dual.max((lhs - rhs).abs() / (qf.norm(&vm) * g.norm(&vm)));
        let op = CellOperator::assemble(&[0.0], &k, &vm, &cell, CellOptions::default()).unwrap();
        let pf = op.apply_p(&f).unwrap();
        let d = (pf.pairing(&g, &vm) - f.pairing(&op.apply_p_star(&g).unwrap(), &vm)).abs();
        dual = dual.max(d / (pf.norm(&vm) * g.norm(&vm)));

        sdb_ok &= q.check_sdb().passed;
        let mut bad = table;
        bad[1][2] *= 1.0 + rng.random_range(1e-6..0.5);
        sdb_ok &= !ScatteringKernel::table(bad).unwrap().at(&[0.0], &vm, &cell).unwrap().check_sdb().passed;

        let u = op.apply_a_inverse(&f).unwrap();
        bound = bound.max(u.max_abs() * op.sigma1() / f.max_abs());

        let vals: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mv: MeanValueFunction = PeriodicGrid::new(1, 32, vals).unwrap().into();
        let du = &mv.grad_y(GradMethod::Spectral)[0];
        let scale = (0..32).map(|j| du.evaluate(&[j as f64 / 32.0]).abs()).fold(0.0, f64::max);
        mean = mean.max(du.mean_value().abs() / scale);
    }
    let pass = cons <= 1e-12 && dual <= 1e-12 && sdb_ok && bound <= 1.0 + 1e-12 && mean <= 1e-12;
    outcome(
        pass,
        format!(
            "100 trials: conservation {cons:.1e}, duality {dual:.1e}, sdb controls {}, |A^-1 h| sigma1/|h| <= {bound:.6}, M(d_y u) {mean:.1e}",
            if sdb_ok { "ok" } else { "failed" }
        ),
    )
}

const SCENARIO_5: &str = r#"
[scenario]
name = "sinusoidal two-velocity"

[cell]
n = 32
scheme = "spectral"

[sigma]
family = "sinusoidal"
alpha = 0.5

[initial]
kind = "gaussian"
width = 1.0

[macro]
half_width = 4.0
n = 512
t_final = 0.5
dt = 0.001

[kinetic]
epsilons = [0.4, 0.2, 0.1]
n_checkpoints = 20
"#;

fn diffusion_limit(report: &kinhom::harness::Report) -> Outcome {
    let sw = report.sweep.as_ref().expect("kinetic section present");
    let errs: Vec<f64> = sw.rows.iter().map(|r| r.err).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let ratios_ok = sw.ratios.iter().all(|r| *r >= 1.5);
    let last = *errs.last().unwrap();
    outcome(
        decreasing && ratios_ok && last <= 0.05,
        format!(
            "err = {:?}, ratios = {:?}, D_eff = {:.10}",
            errs.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>(),
            sw.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            report.effective.samples[0].d_eff[0][0]
        ),
    )
}

/// The literal (negative) tensor makes the macro problem backward-parabolic.
fn wrong_sign_diverges() -> bool {
    let g = MacroGrid::new(1, 4.0, 512, BoundaryCondition::Periodic).unwrap();
    let rho0: Vec<f64> = g.points().iter().map(|x| (-x[0] * x[0]).exp()).collect();
    let op = DriftDiffusion::uniform(&g, vec![vec![-0.5]], vec![0.0], DriftScheme::Central).unwrap();
    let opts = MacroOptions {
        dt: 1e-3,
        t_final: 0.5,
        ..MacroOptions::default()
    };
    let good = DriftDiffusion::uniform(&g, vec![vec![0.5]], vec![0.0], DriftScheme::Central).unwrap();
    let reference = solve_macro(good, &rho0, &opts).unwrap();
    match solve_macro(op, &rho0, &opts) {
        Ok(s) => {
            let e = relative_l2(s.final_slice(), reference.final_slice());
            !e.is_finite() || e > 1.0
        }
        Err(_) => true,
    }
}

fn sigma_functional(report: &kinhom::harness::Report) -> Outcome {
    let rows = report.sigma.as_ref().expect("sigma rows");
    let cos: Vec<f64> = rows.iter().filter(|r| r.psi == "phi_cos").map(|r| r.residual).collect();
    let one = rows
        .iter()
        .filter(|r| r.psi == "one")
        .map(|r| r.residual)
        .fold(0.0, f64::max);
    outcome(
        cos.windows(2).all(|w| w[1] < w[0]) && one <= 1e-10,
        format!(
            "phi cos(2 pi y) residuals = {:?}, max residual for psi = 1: {one:.1e}",
            cos.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn macro_accuracy() -> Outcome {
    let g = MacroGrid::new(1, 8.0, 512, BoundaryCondition::Periodic).unwrap();
    let rho0: Vec<f64> = g.points().iter().map(|x| (-x[0] * x[0]).exp()).collect();
    let op = DriftDiffusion::uniform(&g, vec![vec![0.5]], vec![0.0], DriftScheme::Central).unwrap();
    let s = solve_macro(
        op,
        &rho0,
        &MacroOptions {
            dt: 1e-3,
            t_final: 0.5,
            ..MacroOptions::default()
        },
    )
    .unwrap();
    // exp(-x^2) spreads to exp(-x^2 / (1 + 4 D t)) / sqrt(1 + 4 D t).
    let w = 1.0 + 4.0 * 0.5 * 0.5;
    let exact: Vec<f64> = g.points().iter().map(|x| (-x[0] * x[0] / w).exp() / w.sqrt()).collect();
    let err = relative_l2(s.final_slice(), &exact);
    outcome(
        err <= 1e-3 && s.max_mass_drift <= 1e-12,
        format!("relative L2 error {err:.3e}, mass drift {:.1e}", s.max_mass_drift),
    )
}

fn quasi_periodic_consistency() -> Outcome {
    let start = Instant::now();
    let vm = common::gl4();
    let k = ScatteringKernel::quasi_periodic(0.2, 0.2, 4).unwrap();
    let spec = k.profile().spectral(1).unwrap();
    let hull = CellGrid::hull(spec.basis().to_vec(), 32).unwrap();
    let spectral = CellOptions {
        scheme: Scheme::Spectral,
        ..CellOptions::default()
    };
    let (sol, _) = CellSolution::compute(&[0.0], &k, &vm, &hull, spectral).unwrap();
    let d_hull = EffectiveSample::from_cell(&sol, vec![0.0], &vm).unwrap().d_eff[0][0];

    let period = 169.0;
    let n = 2704;
    let grid = spec.periodic_approximant(period, n).unwrap();
    let approx = ScatteringKernel::new(
        Profile::Function(MeanValueFunction::from(grid)),
        vec![vec![1.0; 4]; 4],
        XDependence::None,
    )
    .unwrap();
    let cell = CellGrid::periodic_with_period(1, n, period).unwrap();
    let opts = CellOptions {
        power_start: PowerStart::Uniform,
        ..spectral
    };
    let (sol, _) = CellSolution::compute(&[0.0], &approx, &vm, &cell, opts).unwrap();
    let d_per = EffectiveSample::from_cell(&sol, vec![0.0], &vm).unwrap().d_eff[0][0];
    let rel = (d_hull - d_per).abs() / d_per.abs();
    outcome(
        rel <= 1e-3,
        format!(
            "hull D_eff = {d_hull:.10}, 239/169 approximant D_eff = {d_per:.10}, relative gap {rel:.2e}, {:.2} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn asymmetric_weights() -> Outcome {
    let cfg = ScenarioConfig::parse(
        r#"
[velocity]
kind = "custom"
nodes = [[-1.0], [1.0]]
weights = [1.0, 2.0]

[cell]
n = 16

[macro]
half_width = 4.0
n = 512
t_final = 0.5

[kinetic]
epsilons = [0.2]
n_checkpoints = 5
"#,
    )
    .unwrap();
    let r = match run_pipeline(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let b = r.effective.samples[0].b[0];
    let compat = r.solutions[0].chi.compatibility[0];
    let err = r.sweep.as_ref().unwrap().rows[0].err;
    outcome(
        (b - 1.0 / 3.0).abs() <= 1e-10 && compat <= 1e-10 && err <= 0.10,
        format!(
            "b = {b:.15}, compatibility {compat:.1e}, D_eff = {:.12}, kinetic vs drift-corrected macro {err:.3e}",
            r.effective.samples[0].d_eff[0][0]
        ),
    )
}

fn main() {
    let start = Instant::now();
    let cfg5 = ScenarioConfig::parse(SCENARIO_5).unwrap();
    let report5 = run_pipeline(&cfg5);
    let results: Vec<(usize, &str, Outcome)> = vec![
        (1, "principal eigenvalue", principal_eigenvalue()),
        (2, "constant-kernel closed forms", constant_kernel_closed_forms()),
        (3, "dense-oracle equivalence", dense_oracle()),
        (4, "exact structure invariants", structure_invariants()),
        (
            5,
            "diffusion-limit cross-validation",
            match &report5 {
                Ok(r) => {
                    let mut o = diffusion_limit(r);
                    let wrong = wrong_sign_diverges();
                    o.detail.push_str(&format!(", negated tensor diverges: {wrong}"));
                    o.pass &= wrong;
                    o
                }
                Err(e) => outcome(false, format!("pipeline failed: {e}")),
            },
        ),
        (
            6,
            "sigma-convergence functional",
            match &report5 {
                Ok(r) => sigma_functional(r),
                Err(e) => outcome(false, format!("pipeline failed: {e}")),
            },
        ),
        (7, "macro solver accuracy", macro_accuracy()),
        (8, "quasi-periodic algebra consistency", quasi_periodic_consistency()),
        (9, "asymmetric velocity weights", asymmetric_weights()),
    ];
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
