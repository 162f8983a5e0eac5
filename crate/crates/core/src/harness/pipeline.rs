//! Gate checks, cell solves, effective coefficients, macro solve and the
//! optional kinetic comparison, chained with stage-tagged errors.

use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::sigma::{self, SigmaRow};
use super::sweep::{self, KineticCase, SweepTable};
use super::tables::{num, Table};
use crate::collision::{ScatteringKernel, SdbReport};
use crate::effective::{check_vfc, CellSolution, EffectiveField, VfcReport};
use crate::error::{Error, Result};
use crate::macro_solver::{initial_density, solve_macro, DriftDiffusion, MacroOptions, MacroSolution};
use crate::phase_space::{CellGrid, H1Report, MacroGrid, VelocityMeasure};

/// Objects built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub vm: VelocityMeasure,
    pub cell: CellGrid,
    pub kernel: ScatteringKernel,
    pub grid: MacroGrid,
}

impl Setup {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            vm: cfg.velocity_measure()?,
            cell: cfg.cell_grid()?,
            kernel: cfg.kernel()?,
            grid: cfg.macro_grid()?,
        })
    }

    /// Macro points at which the cell problem is solved: one for an
    /// `x`-independent kernel, every grid point otherwise.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        if self.kernel.x_dependence().is_trivial() {
            vec![vec![0.0; self.grid.dim()]]
        } else {
            self.grid.points()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    /// Worst case over the sampled macro points.
    pub sdb: SdbReport,
    pub h1: H1Report,
    pub samples: usize,
}

pub fn check_stage(setup: &Setup) -> Result<CheckReport> {
    let pts = setup.sample_points();
    let mut worst: Option<SdbReport> = None;
    for x in &pts {
        let r = setup.kernel.at(x, &setup.vm, &setup.cell)?.check_sdb();
        if worst.as_ref().is_none_or(|w| r.relative_gap > w.relative_gap) {
            worst = Some(r);
        }
    }
    let sdb = worst.expect("at least one sample");
    if !sdb.passed {
        return Err(Error::SemiDetailedBalance {
            gap: sdb.relative_gap,
            tol: sdb.tol,
        });
    }
    Ok(CheckReport {
        sdb,
        h1: setup.vm.validate_h1(),
        samples: pts.len(),
    })
}

pub fn cell_stage(cfg: &ScenarioConfig, setup: &Setup) -> Result<Vec<CellSolution>> {
    let opts = cfg.cell_options();
    setup
        .sample_points()
        .par_iter()
        .map(|x| CellSolution::compute(x, &setup.kernel, &setup.vm, &setup.cell, opts).map(|(s, _)| s))
        .collect()
}

pub fn effective_stage(setup: &Setup, sols: &[CellSolution]) -> Result<EffectiveField> {
    if sols.len() == 1 {
        EffectiveField::uniform(&sols[0], &setup.vm, &setup.grid)
    } else {
        EffectiveField::from_solutions(sols, &setup.vm, &setup.grid)
    }
}

/// `f0(x, v) = g(x) w(x, v)`, with `w` the cell mean of `F` (prepared) or a
/// velocity-biased profile (unprepared).
#[derive(Debug, Clone)]
pub struct InitialDatum {
    grid: MacroGrid,
    weights: Vec<Vec<f64>>,
    cfg: ScenarioConfig,
}

impl InitialDatum {
    pub fn new(cfg: &ScenarioConfig, setup: &Setup, sols: &[CellSolution], prepared: bool) -> Self {
        let vm = &setup.vm;
        let weights = if prepared {
            sols.iter()
                .map(|s| {
                    let f = &s.equilibrium.f;
                    let n = f.n_cell() as f64;
                    (0..vm.len()).map(|k| f.velocity_slice(k).iter().sum::<f64>() / n).collect()
                })
                .collect()
        } else {
            let amax = vm.max_speed().max(f64::MIN_POSITIVE);
            vec![(0..vm.len()).map(|k| (1.0 + 0.5 * vm.a(k)[0] / amax) / vm.mass()).collect()]
        };
        Self {
            grid: setup.grid.clone(),
            weights,
            cfg: cfg.clone(),
        }
    }

    fn index(&self, x: &[f64]) -> usize {
        if self.weights.len() == 1 {
            return 0;
        }
        let n = self.grid.n();
        let h = self.grid.spacing();
        x.iter().fold(0, |acc, xi| {
            let i = (((xi + self.grid.half_width()) / h).floor().max(0.0) as usize).min(n - 1);
            acc * n + i
        })
    }

    pub fn eval(&self, x: &[f64], k: usize) -> f64 {
        self.cfg.initial_profile(x) * self.weights[self.index(x)][k]
    }
}

/// Macro solve with `U_eff - b / eps` when `eps` is given.
pub fn macro_stage(
    cfg: &ScenarioConfig,
    setup: &Setup,
    eff: &EffectiveField,
    datum: &InitialDatum,
    eps: Option<f64>,
    extra_times: &[f64],
) -> Result<MacroSolution> {
    let u: Vec<Vec<f64>> = eff
        .samples
        .iter()
        .map(|s| match eps {
            Some(e) => s.u_eff.iter().zip(&s.b).map(|(u, b)| u - b / e).collect(),
            None => s.u_eff.clone(),
        })
        .collect();
    let op = DriftDiffusion::new(&setup.grid, eff.d_eff(), u, cfg.macro_.drift)?;
    let rho0 = initial_density(|x, k| datum.eval(x, k), &setup.vm, &setup.grid);
    let mut checkpoints = cfg.macro_.checkpoints.clone();
    checkpoints.extend_from_slice(extra_times);
    let opts = MacroOptions {
        theta: cfg.macro_.theta,
        dt: cfg.macro_.dt,
        t_final: cfg.macro_.t_final,
        checkpoints,
        drift: cfg.macro_.drift,
    };
    solve_macro(op, &rho0, &opts)
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: ScenarioConfig,
    pub check: CheckReport,
    pub solutions: Vec<CellSolution>,
    pub vfc: VfcReport,
    pub effective: EffectiveField,
    pub macro_solution: MacroSolution,
    pub sweep: Option<SweepTable>,
    pub sigma: Option<Vec<SigmaRow>>,
    pub kinetic: Vec<KineticCase>,
}

pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<Report> {
    let setup = Setup::from_config(cfg).map_err(|e| e.at_stage("config"))?;
    let check = check_stage(&setup).map_err(|e| e.at_stage("check_sdb"))?;
    let solutions = cell_stage(cfg, &setup).map_err(|e| e.at_stage("cell"))?;
    let vfc = check_vfc(&solutions[0].equilibrium.f, &setup.vm);
    let effective = effective_stage(&setup, &solutions).map_err(|e| e.at_stage("effective"))?;
    let datum = InitialDatum::new(cfg, &setup, &solutions, cfg.initial.prepared);
    let macro_solution =
        macro_stage(cfg, &setup, &effective, &datum, None, &[]).map_err(|e| e.at_stage("macro"))?;
    let (sweep, sigma, kinetic) = match &cfg.kinetic {
        Some(_) => {
            let runs = sweep::run_sweep(cfg, &setup, &solutions, &effective).map_err(|e| e.at_stage("kinetic"))?;
            let rows = sigma::sigma_test(&runs, &setup, &solutions).map_err(|e| e.at_stage("sigma"))?;
            (Some(runs.table), Some(rows), runs.cases)
        }
        None => (None, None, vec![]),
    };
    Ok(Report {
        config: cfg.clone(),
        check,
        solutions,
        vfc,
        effective,
        macro_solution,
        sweep,
        sigma,
        kinetic,
    })
}

/// One row per cell solve.
pub fn cell_table(sols: &[CellSolution]) -> Table {
    let d = sols.first().map_or(1, |s| s.x.len());
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    header.extend(["lambda", "f_min", "f_max", "eig_iterations", "chi_iterations"].map(String::from));
    header.extend((0..d).map(|i| format!("b{i}")));
    header.push("compatibility".into());
    let mut t = Table {
        header,
        rows: vec![],
    };
    for s in sols {
        let f = &s.equilibrium.f;
        let mut row: Vec<String> = s.x.iter().map(|v| num(*v)).collect();
        row.push(num(s.equilibrium.lambda));
        row.push(num(f.min()));
        row.push(num(f.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        row.push(s.equilibrium.iterations.to_string());
        row.push(s.chi.iterations.to_string());
        row.extend(s.chi.b.iter().map(|v| num(*v)));
        row.push(num(s.chi.compatibility.iter().copied().fold(0.0, f64::max)));
        t.push(row);
    }
    t
}

/// `F` and `chi*` at the first sample.
pub fn equilibrium_table(sol: &CellSolution) -> Table {
    let d = sol.chi.chi.len();
    let mut header = vec!["cell_index".to_string(), "v_index".into(), "F".into()];
    header.extend((0..d).map(|i| format!("chi{i}")));
    let mut t = Table {
        header,
        rows: vec![],
    };
    let f = &sol.equilibrium.f;
    for k in 0..f.n_vel() {
        for j in 0..f.n_cell() {
            let mut row = vec![j.to_string(), k.to_string(), num(f.get(j, k))];
            row.extend(sol.chi.chi.iter().map(|c| num(c.get(j, k))));
            t.push(row);
        }
    }
    t
}

pub fn effective_table(eff: &EffectiveField) -> Table {
    let d = eff.samples.first().map_or(1, |s| s.x.len());
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    for i in 0..d {
        for j in 0..d {
            header.push(format!("d_eff{i}{j}"));
        }
    }
    header.extend((0..d).map(|i| format!("u_eff{i}")));
    header.extend((0..d).map(|i| format!("b{i}")));
    header.push("ellipticity_min".into());
    let mut t = Table {
        header,
        rows: vec![],
    };
    for s in &eff.samples {
        let mut row: Vec<f64> = s.x.clone();
        row.extend(s.d_eff.iter().flatten());
        row.extend(&s.u_eff);
        row.extend(&s.b);
        row.push(s.ellipticity_min);
        t.push_nums(&row);
    }
    t
}

pub fn macro_table(sol: &MacroSolution) -> Table {
    let d = sol.grid.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.push("rho".into());
    let mut t = Table {
        header,
        rows: vec![],
    };
    let pts = sol.grid.points();
    for (time, slice) in sol.times.iter().zip(&sol.slices) {
        for (x, r) in pts.iter().zip(slice) {
            let mut row = vec![*time];
            row.extend(x);
            row.push(*r);
            t.push_nums(&row);
        }
    }
    t
}

impl Report {
    pub fn summary(&self) -> Vec<(String, String)> {
        let s0 = &self.effective.samples[0];
        let e0 = &self.solutions[0].equilibrium;
        let mut out = vec![
            ("scenario".to_string(), self.config.scenario.name.clone()),
            ("sdb_relative_gap".into(), num(self.check.sdb.relative_gap)),
            ("h1_passed".into(), self.check.h1.passed.to_string()),
            ("cell_samples".into(), self.solutions.len().to_string()),
            ("lambda".into(), num(e0.lambda)),
            ("f_min".into(), num(e0.f.min())),
            ("vfc_passed".into(), self.vfc.passed.to_string()),
        ];
        let d = s0.d_eff.len();
        for i in 0..d {
            for j in 0..d {
                out.push((format!("d_eff{i}{j}"), num(s0.d_eff[i][j])));
            }
        }
        let umax = self
            .effective
            .samples
            .iter()
            .flat_map(|s| s.u_eff.iter())
            .fold(0.0f64, |m, u| m.max(u.abs()));
        out.push(("u_eff_max_abs".into(), num(umax)));
        for (i, b) in s0.b.iter().enumerate() {
            out.push((format!("b{i}"), num(*b)));
        }
        out.push(("ellipticity_min".into(), num(s0.ellipticity_min)));
        out.push(("macro_mass_drift".into(), num(self.macro_solution.max_mass_drift)));
        if let Some(sw) = &self.sweep {
            for r in &sw.rows {
                out.push((format!("err_eps{}", r.eps), num(r.err)));
            }
            out.push((
                "sweep_monotone".into(),
                sw.monotone.map_or("n/a".to_string(), |m| m.to_string()),
            ));
            out.push((
                "sweep_min_ratio_met".into(),
                sw.ratio_met.map_or("n/a".to_string(), |m| m.to_string()),
            ));
        }
        out
    }

    pub fn summary_text(&self) -> String {
        self.summary().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn tables(&self) -> Vec<(String, Table)> {
        let mut t = vec![
            ("cell.csv".to_string(), cell_table(&self.solutions)),
            ("equilibrium.csv".into(), equilibrium_table(&self.solutions[0])),
            ("effective.csv".into(), effective_table(&self.effective)),
            ("macro.csv".into(), macro_table(&self.macro_solution)),
        ];
        if let Some(sw) = &self.sweep {
            t.push(("sweep.csv".into(), sw.table()));
        }
        if let Some(rows) = &self.sigma {
            t.push(("sigma.csv".into(), sigma::sigma_table(rows)));
        }
        if self.config.output.kinetic_dumps {
            for c in &self.kinetic {
                t.push((format!("kinetic_eps{}.csv", c.eps), sweep::kinetic_dump(&c.run)));
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ScenarioConfig {
        ScenarioConfig::parse(text).unwrap()
    }

    #[test]
    fn constant_kernel_summary() {
        let c = cfg("[cell]\nn = 8\n[macro]\nn = 64\n");
        let r = run_pipeline(&c).unwrap();
        let e = &r.effective.samples[0];
        assert!((r.solutions[0].equilibrium.lambda - 1.0).abs() < 1e-8);
        assert!((e.d_eff[0][0] - 0.5).abs() < 1e-10);
        assert!(e.u_eff[0].abs() < 1e-14 && e.b[0].abs() < 1e-14);
        assert!(r.sweep.is_none());
        assert!(r.summary_text().contains("lambda = "));
    }

    #[test]
    fn sdb_violation_aborts_at_gate() {
        let c = cfg("[sigma]\nfamily = \"table\"\ntable = [[1.0, 2.0], [3.0, 4.0]]\n");
        match run_pipeline(&c) {
            Err(Error::Stage { stage, source }) => {
                assert_eq!(stage, "check_sdb");
                assert!(matches!(*source, Error::SemiDetailedBalance { .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn x_dependent_kernel_solves_per_point() {
        let c = cfg("[sigma]\nfamily = \"sinusoidal\"\nx_dependence = \"tanh_scale\"\n[cell]\nn = 8\n[macro]\nn = 16\n");
        let r = run_pipeline(&c).unwrap();
        assert_eq!(r.solutions.len(), 16);
        assert!(r.effective.x_dependent);
        let umax = r.effective.samples.iter().map(|s| s.u_eff[0].abs()).fold(0.0, f64::max);
        assert!(umax <= 1e-12, "{umax}");
    }
}
