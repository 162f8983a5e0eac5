//! Kinetic runs over a list of `eps` and the density error against the
//! homogenized solution.

use std::time::Instant;

use rayon::prelude::*;

use super::config::{KineticSection, ScenarioConfig};
use super::pipeline::{self, InitialDatum, Setup};
use super::tables::{num, Table};
use crate::effective::{CellSolution, EffectiveField};
use crate::error::{Error, Result};
use crate::kinetic::{density, solve_kinetic, KineticOptions, KineticRun};
use crate::macro_solver::{relative_l2, MacroSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    /// `||rho_eps(T) - rho_0(T)|| / ||rho_0(T)||`.
    pub err: f64,
    pub err_unprepared: Option<f64>,
    pub l2_flag: bool,
    pub mass_drift: f64,
    pub steps: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `err[i] / err[i + 1]` in list order.
    pub ratios: Vec<f64>,
    /// `None` for a single `eps`.
    pub monotone: Option<bool>,
    pub ratio_met: Option<bool>,
    pub min_ratio: f64,
}

impl SweepTable {
    pub fn from_rows(rows: Vec<SweepRow>, min_ratio: f64) -> Self {
        let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].err / w[1].err).collect();
        let (monotone, ratio_met) = if rows.len() < 2 {
            (None, None)
        } else {
            (
                Some(rows.windows(2).all(|w| w[1].err < w[0].err)),
                Some(ratios.iter().all(|r| *r >= min_ratio)),
            )
        };
        Self {
            rows,
            ratios,
            monotone,
            ratio_met,
            min_ratio,
        }
    }

    /// Deterministic columns only; wall times go to [`SweepTable::timings`].
    pub fn table(&self) -> Table {
        let prep = self.rows.iter().any(|r| r.err_unprepared.is_some());
        let mut header = vec!["eps", "err", "ratio", "l2_flag", "mass_drift", "steps"];
        if prep {
            header.extend(["err_unprepared", "initial_layer_gap"]);
        }
        let mut t = Table::new(&header);
        for (i, r) in self.rows.iter().enumerate() {
            let ratio = if i == 0 { String::new() } else { num(self.ratios[i - 1]) };
            let mut row = vec![
                num(r.eps),
                num(r.err),
                ratio,
                r.l2_flag.to_string(),
                num(r.mass_drift),
                r.steps.to_string(),
            ];
            if prep {
                let u = r.err_unprepared.unwrap_or(f64::NAN);
                row.push(num(u));
                row.push(num(u - r.err));
            }
            t.push(row);
        }
        t
    }

    pub fn timings(&self) -> Table {
        let mut t = Table::new(&["eps", "runtime_s"]);
        for r in &self.rows {
            t.push_nums(&[r.eps, r.runtime_s]);
        }
        t
    }
}

/// One kinetic run with the macro solution it is compared to.
#[derive(Debug, Clone)]
pub struct KineticCase {
    pub eps: f64,
    pub run: KineticRun,
    pub macro_solution: MacroSolution,
}

#[derive(Debug, Clone)]
pub struct SweepRuns {
    pub table: SweepTable,
    pub cases: Vec<KineticCase>,
}

pub fn kinetic_options(k: &KineticSection, t_final: f64) -> KineticOptions {
    KineticOptions {
        c_cfl: k.c_cfl,
        theta: k.theta,
        transport: k.scheme,
        checkpoints: checkpoint_times(k, t_final),
        allow_sdb_violation: false,
    }
}

fn checkpoint_times(k: &KineticSection, t_final: f64) -> Vec<f64> {
    let n = k.n_checkpoints.max(1);
    (1..=n).map(|i| t_final * i as f64 / n as f64).collect()
}

/// Kinetic run at one `eps` and its macro counterpart (drift-corrected when `b != 0`).
pub fn kinetic_case(
    cfg: &ScenarioConfig,
    setup: &Setup,
    eff: &EffectiveField,
    datum: &InitialDatum,
    eps: f64,
) -> Result<KineticCase> {
    let k = cfg
        .kinetic
        .as_ref()
        .ok_or_else(|| Error::Config("no kinetic section".into()))?;
    let t_final = cfg.macro_.t_final;
    let opts = kinetic_options(k, t_final);
    let shifted = eff.samples.iter().any(|s| s.shifted);
    let macro_solution = pipeline::macro_stage(
        cfg,
        setup,
        eff,
        datum,
        shifted.then_some(eps),
        &opts.checkpoints,
    )?;
    let run = solve_kinetic(&setup.kernel, &setup.vm, &setup.grid, eps, t_final, |x, v| datum.eval(x, v), &opts)?;
    Ok(KineticCase {
        eps,
        run,
        macro_solution,
    })
}

pub fn case_error(case: &KineticCase, setup: &Setup) -> f64 {
    let rho = density(case.run.final_state(), &setup.vm);
    relative_l2(&rho, case.macro_solution.final_slice())
}

pub fn run_sweep(
    cfg: &ScenarioConfig,
    setup: &Setup,
    sols: &[CellSolution],
    eff: &EffectiveField,
) -> Result<SweepRuns> {
    let k = cfg
        .kinetic
        .as_ref()
        .ok_or_else(|| Error::Config("epsilon sweep needs a [kinetic] section".into()))?;
    let prepared = InitialDatum::new(cfg, setup, sols, cfg.initial.prepared);
    let other = k
        .compare_unprepared
        .then(|| InitialDatum::new(cfg, setup, sols, !cfg.initial.prepared));
    let results: Vec<(SweepRow, KineticCase)> = k
        .epsilons
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let case = kinetic_case(cfg, setup, eff, &prepared, eps)?;
            let err = case_error(&case, setup);
            let err_unprepared = match &other {
                Some(d) => Some(case_error(&kinetic_case(cfg, setup, eff, d, eps)?, setup)),
                None => None,
            };
            // Column means "unprepared" relative to the configured datum.
            let (err, err_unprepared) = match (cfg.initial.prepared, err_unprepared) {
                (false, Some(u)) => (u, Some(err)),
                (_, u) => (err, u),
            };
            let row = SweepRow {
                eps,
                err,
                err_unprepared,
                l2_flag: case.run.l2_flag,
                mass_drift: case.run.max_mass_drift,
                steps: case.run.n_steps,
                runtime_s: start.elapsed().as_secs_f64(),
            };
            Ok((row, case))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, cases): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(SweepRuns {
        table: SweepTable::from_rows(rows, k.min_ratio),
        cases,
    })
}

/// Standalone sweep: cell, effective and kinetic stages only.
pub fn epsilon_sweep(cfg: &ScenarioConfig) -> Result<SweepRuns> {
    let setup = Setup::from_config(cfg).map_err(|e| e.at_stage("config"))?;
    pipeline::check_stage(&setup).map_err(|e| e.at_stage("check_sdb"))?;
    let sols = pipeline::cell_stage(cfg, &setup).map_err(|e| e.at_stage("cell"))?;
    let eff = pipeline::effective_stage(&setup, &sols).map_err(|e| e.at_stage("effective"))?;
    run_sweep(cfg, &setup, &sols, &eff).map_err(|e| e.at_stage("kinetic"))
}

/// `t, x, v_index, f` rows of every checkpoint.
pub fn kinetic_dump(run: &KineticRun) -> Table {
    let mut t = Table::new(&["t", "x", "v_index", "f"]);
    let nx = run.grid.n();
    let pts = run.grid.points();
    for st in &run.states {
        for k in 0..run.n_vel {
            for j in 0..nx {
                t.push(vec![num(st.t), num(pts[j][0]), k.to_string(), num(st.f[k * nx + j])]);
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64, err: f64) -> SweepRow {
        SweepRow {
            eps,
            err,
            err_unprepared: None,
            l2_flag: false,
            mass_drift: 0.0,
            steps: 1,
            runtime_s: 0.0,
        }
    }

    #[test]
    fn single_row_has_no_verdict() {
        let t = SweepTable::from_rows(vec![row(0.1, 0.01)], 1.5);
        assert_eq!(t.monotone, None);
        assert_eq!(t.table().rows.len(), 1);
    }

    #[test]
    fn ratio_verdicts() {
        let t = SweepTable::from_rows(vec![row(0.4, 0.04), row(0.2, 0.02), row(0.1, 0.015)], 1.5);
        assert_eq!(t.monotone, Some(true));
        assert_eq!(t.ratio_met, Some(false));
    }

    #[test]
    fn small_sweep_converges() {
        let cfg = ScenarioConfig::parse(
            "[sigma]\nfamily = \"sinusoidal\"\n[cell]\nn = 16\n[macro]\nn = 256\n[kinetic]\nepsilons = [0.4, 0.2]\nn_checkpoints = 4\ncompare_unprepared = true\n",
        )
        .unwrap();
        let runs = epsilon_sweep(&cfg).unwrap();
        let t = &runs.table;
        assert_eq!(t.monotone, Some(true));
        assert!(t.rows.iter().all(|r| !r.l2_flag && r.mass_drift < 1e-12));
        assert!(t.rows.iter().all(|r| r.err_unprepared.is_some()));
        assert_eq!(runs.cases[0].run.states.len(), 5);
    }
}
