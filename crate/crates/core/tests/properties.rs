mod common;

use proptest::prelude::*;

use common::gl4;

use kinhom::cell_solver::{CellOperator, CellOptions};
use kinhom::collision::{PhaseField, Profile, ScatteringKernel, XDependence};
use kinhom::kinetic::{solve_kinetic, KineticOptions};
use kinhom::macro_solver::{solve_macro, DriftDiffusion, DriftScheme, MacroOptions};
use kinhom::mv_algebra::{GradMethod, MeanValueFunction, PeriodicGrid, SpectralAp};
use kinhom::phase_space::{BoundaryCondition, CellGrid, MacroGrid};

fn symmetric_kernel(alpha: f64, seed: u64, k: usize) -> ScatteringKernel {
    let table = ScatteringKernel::random_symmetric(k, seed).unwrap().velocity_table().to_vec();
    ScatteringKernel::new(Profile::Sinusoidal { alpha }, table, XDependence::None).unwrap()
}

fn field(n: usize, k: usize, vals: &[f64]) -> PhaseField {
    PhaseField::from_fn(n, k, |j, v| vals[(j * 7 + v * 13) % vals.len()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn collision_conserves_mass(
        table in prop::collection::vec(0.1f64..2.0, 16),
        alpha in -0.9f64..0.9,
        vals in prop::collection::vec(-1.0f64..1.0, 61),
    ) {
        let vm = gl4();
        let t: Vec<Vec<f64>> = table.chunks(4).map(|r| r.to_vec()).collect();
        let k = ScatteringKernel::new(Profile::Sinusoidal { alpha }, t, XDependence::None).unwrap();
        let cell = CellGrid::periodic(1, 16).unwrap();
        let q = k.at(&[0.0], &vm, &cell).unwrap();
        let f = field(16, 4, &vals);
        let qf = q.apply_q(&f).unwrap();
        let scale = qf.max_abs().max(f.max_abs());
        for j in 0..16 {
            let m: f64 = (0..4).map(|v| vm.weights()[v] * qf.get(j, v)).sum();
            prop_assert!(m.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn duality_of_q_and_p(
        seed in 0u64..1_000_000,
        alpha in -0.9f64..0.9,
        f in prop::collection::vec(-1.0f64..1.0, 37),
        g in prop::collection::vec(-1.0f64..1.0, 41),
    ) {
        let vm = gl4();
        let k = symmetric_kernel(alpha, seed, 4);
        let cell = CellGrid::periodic(1, 16).unwrap();
        let f = field(16, 4, &f);
        let g = field(16, 4, &g);
        let q = k.at(&[0.0], &vm, &cell).unwrap();
        let lhs = q.apply_q(&f).unwrap().pairing(&g, &vm);
        let rhs = f.pairing(&q.apply_q_star(&g).unwrap(), &vm);
        let scale = q.apply_q(&f).unwrap().norm(&vm) * g.norm(&vm);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        let op = CellOperator::assemble(&[0.0], &k, &vm, &cell, CellOptions::default()).unwrap();
        let pf = op.apply_p(&f).unwrap();
        let lhs = pf.pairing(&g, &vm);
        let rhs = f.pairing(&op.apply_p_star(&g).unwrap(), &vm);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (pf.norm(&vm) * g.norm(&vm)).max(1e-300));
    }

    #[test]
    fn semi_detailed_balance_detection(seed in 0u64..1_000_000, delta in 1e-6f64..0.5) {
        let vm = gl4();
        let cell = CellGrid::periodic(1, 8).unwrap();
        let k = ScatteringKernel::random_symmetric(4, seed).unwrap();
        prop_assert!(k.at(&[0.0], &vm, &cell).unwrap().check_sdb().passed);
        let mut t = k.velocity_table().to_vec();
        t[0][1] += delta;
        let bad = ScatteringKernel::table(t).unwrap();
        prop_assert!(!bad.at(&[0.0], &vm, &cell).unwrap().check_sdb().passed);
    }

    #[test]
    fn inverse_transport_bound(
        seed in 0u64..1_000_000,
        alpha in -0.9f64..0.9,
        h in prop::collection::vec(-1.0f64..1.0, 53),
    ) {
        let vm = gl4();
        let k = symmetric_kernel(alpha, seed, 4);
        let cell = CellGrid::periodic(1, 32).unwrap();
        let op = CellOperator::assemble(&[0.0], &k, &vm, &cell, CellOptions::default()).unwrap();
        let h = field(32, 4, &h);
        let u = op.apply_a_inverse(&h).unwrap();
        prop_assert!(u.max_abs() <= h.max_abs() / op.sigma1() * (1.0 + 1e-12));
    }

    #[test]
    fn mean_of_gradient_vanishes(vals in prop::collection::vec(-1.0f64..1.0, 32), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let u: MeanValueFunction = PeriodicGrid::new(1, 32, vals).unwrap().into();
        for method in [GradMethod::Spectral, GradMethod::Centered] {
            let du = &u.grad_y(method)[0];
            let scale = (0..32).map(|j| du.evaluate(&[j as f64 / 32.0]).abs()).fold(1.0, f64::max);
            prop_assert!(du.mean_value().abs() <= 1e-12 * scale);
        }
        let s: MeanValueFunction = SpectralAp::from_real_terms(
            vec![vec![2.0 * std::f64::consts::PI], vec![2.0 * std::f64::consts::PI * 2f64.sqrt()]],
            0.3,
            &[(vec![1, 0], a, b), (vec![1, -1], b, a)],
        )
        .unwrap()
        .into();
        prop_assert!(s.grad_y(GradMethod::Spectral)[0].mean_value().abs() <= 1e-12);
    }

    #[test]
    fn kinetic_mass_and_energy(
        seed in 0u64..1_000_000,
        alpha in -0.9f64..0.9,
        eps in 0.05f64..0.5,
        amp in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let vm = gl4();
        let k = symmetric_kernel(alpha, seed, 4);
        let g = MacroGrid::new(1, 2.0, 64, BoundaryCondition::Periodic).unwrap();
        let opts = KineticOptions { checkpoints: vec![0.025, 0.05, 0.075], ..KineticOptions::default() };
        let run = solve_kinetic(&k, &vm, &g, eps, 0.1, |x, v| 1.0 + amp[v] * (3.0 * x[0]).cos(), &opts).unwrap();
        prop_assert!(run.max_mass_drift <= 1e-12);
        prop_assert!(!run.l2_flag);
        for w in run.l2.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-8));
        }
    }

    #[test]
    fn macro_mass_is_conserved(
        d in 0.05f64..1.0,
        u in -1.0f64..1.0,
        no_flux in any::<bool>(),
        upwind in any::<bool>(),
    ) {
        let bc = if no_flux { BoundaryCondition::NoFlux } else { BoundaryCondition::Periodic };
        let drift = if upwind { DriftScheme::Upwind } else { DriftScheme::Central };
        let g = MacroGrid::new(1, 3.0, 96, bc).unwrap();
        let op = DriftDiffusion::uniform(&g, vec![vec![d]], vec![u], drift).unwrap();
        let rho0: Vec<f64> = g.points().iter().map(|x| (-x[0] * x[0]).exp()).collect();
        let s = solve_macro(op, &rho0, &MacroOptions { dt: 1e-2, t_final: 0.2, drift, ..MacroOptions::default() }).unwrap();
        prop_assert!(s.max_mass_drift <= 1e-12);
    }
}

/// For y-constant kernels the cell correctors scale as `1/c` under `sigma -> c sigma`.
#[test]
fn corrector_scales_inversely_for_y_constant_kernels() {
    let vm = gl4();
    let cell = CellGrid::periodic(1, 8).unwrap();
    let k = ScatteringKernel::random_symmetric(4, 3).unwrap();
    let solve = |k: &ScatteringKernel| {
        let op = CellOperator::assemble(&[0.0], k, &vm, &cell, CellOptions::default()).unwrap();
        let eq = op.equilibrium_f().unwrap();
        op.solve_chi_star(&eq).unwrap().chi[0].clone()
    };
    let base = solve(&k);
    let scaled = solve(&k.scaled(2.5).unwrap());
    for (a, b) in base.values().iter().zip(scaled.values()) {
        assert!((a - 2.5 * b).abs() <= 1e-10 * a.abs().max(1e-3));
    }
}
