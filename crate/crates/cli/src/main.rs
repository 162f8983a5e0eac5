use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kinhom::effective::check_vfc;
use kinhom::harness::pipeline::{self, cell_table, effective_table, equilibrium_table, macro_table, InitialDatum, Setup};
use kinhom::harness::sweep::{self, kinetic_dump};
use kinhom::harness::tables::{write_atomic, Table};
use kinhom::harness::{emit_tables, ScenarioConfig};

#[derive(Parser)]
#[command(name = "kinhom", version, about = "Diffusion limits of linear kinetic equations with oscillating kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel and quadrature gates.
    Check(Common),
    /// Equilibrium and correctors.
    Cell(Common),
    /// Effective coefficients.
    Effective(Common),
    /// Homogenized drift-diffusion solve.
    Macro(Common),
    /// Kinetic reference runs for every eps.
    Kinetic(Common),
    /// eps-sweep convergence table.
    Sweep(Common),
    /// Full pipeline with summary.
    Pipeline(Common),
}

struct Ctx {
    cfg: ScenarioConfig,
    out: PathBuf,
}

fn load(c: &Common) -> Result<Ctx> {
    if let Some(j) = c.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = std::fs::read_to_string(&c.config).with_context(|| format!("reading {}", c.config.display()))?;
    let mut cfg = ScenarioConfig::parse(&text).with_context(|| format!("parsing {}", c.config.display()))?;
    if let Some(s) = c.seed {
        cfg.scenario.seed = s;
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok(Ctx { cfg, out })
}

fn write(out: &Path, tables: Vec<(String, Table)>) -> Result<()> {
    for p in emit_tables(&tables, out)? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn echo_config(ctx: &Ctx) -> Result<()> {
    write_atomic(&ctx.out.join("config.toml"), &ctx.cfg.dump())?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Check(c) => {
            let ctx = load(&c)?;
            let setup = Setup::from_config(&ctx.cfg)?;
            let report = pipeline::check_stage(&setup).context("stage `check_sdb`")?;
            println!("sdb_relative_gap = {:.16e}", report.sdb.relative_gap);
            println!("sdb_passed = {}", report.sdb.passed);
            println!("h1_min_projection = {:.16e}", report.h1.min_projection);
            println!("h1_passed = {}", report.h1.passed);
            println!("velocity_mass = {:.16e}", setup.vm.mass());
            println!("samples = {}", report.samples);
        }
        Command::Cell(c) => {
            let ctx = load(&c)?;
            let setup = Setup::from_config(&ctx.cfg)?;
            pipeline::check_stage(&setup).context("stage `check_sdb`")?;
            let sols = pipeline::cell_stage(&ctx.cfg, &setup).context("stage `cell`")?;
            let vfc = check_vfc(&sols[0].equilibrium.f, &setup.vm);
            println!("lambda = {:.16e}", sols[0].equilibrium.lambda);
            println!("f_min = {:.16e}", sols[0].equilibrium.f.min());
            println!("vfc_passed = {}", vfc.passed);
            echo_config(&ctx)?;
            write(
                &ctx.out,
                vec![
                    ("cell.csv".into(), cell_table(&sols)),
                    ("equilibrium.csv".into(), equilibrium_table(&sols[0])),
                ],
            )?;
        }
        Command::Effective(c) => {
            let ctx = load(&c)?;
            let setup = Setup::from_config(&ctx.cfg)?;
            pipeline::check_stage(&setup).context("stage `check_sdb`")?;
            let sols = pipeline::cell_stage(&ctx.cfg, &setup).context("stage `cell`")?;
            let eff = pipeline::effective_stage(&setup, &sols).context("stage `effective`")?;
            let s = &eff.samples[0];
            println!("d_eff = {:?}", s.d_eff);
            println!("u_eff = {:?}", s.u_eff);
            println!("b = {:?}", s.b);
            echo_config(&ctx)?;
            write(&ctx.out, vec![("effective.csv".into(), effective_table(&eff))])?;
        }
        Command::Macro(c) => {
            let ctx = load(&c)?;
            let setup = Setup::from_config(&ctx.cfg)?;
            pipeline::check_stage(&setup).context("stage `check_sdb`")?;
            let sols = pipeline::cell_stage(&ctx.cfg, &setup).context("stage `cell`")?;
            let eff = pipeline::effective_stage(&setup, &sols).context("stage `effective`")?;
            let datum = InitialDatum::new(&ctx.cfg, &setup, &sols, ctx.cfg.initial.prepared);
            let sol = pipeline::macro_stage(&ctx.cfg, &setup, &eff, &datum, None, &[]).context("stage `macro`")?;
            println!("mass_drift = {:.16e}", sol.max_mass_drift);
            echo_config(&ctx)?;
            write(&ctx.out, vec![("macro.csv".into(), macro_table(&sol))])?;
        }
        Command::Kinetic(c) => {
            let ctx = load(&c)?;
            let runs = sweep::epsilon_sweep(&ctx.cfg)?;
            let mut tables = vec![];
            for case in &runs.cases {
                println!(
                    "eps = {:.16e} steps = {} l2_flag = {} mass_drift = {:.3e}",
                    case.eps, case.run.n_steps, case.run.l2_flag, case.run.max_mass_drift
                );
                tables.push((format!("kinetic_eps{}.csv", case.eps), kinetic_dump(&case.run)));
            }
            echo_config(&ctx)?;
            write(&ctx.out, tables)?;
        }
        Command::Sweep(c) => {
            let ctx = load(&c)?;
            let runs = sweep::epsilon_sweep(&ctx.cfg)?;
            print!("{}", runs.table.table().to_csv());
            echo_config(&ctx)?;
            write(
                &ctx.out,
                vec![
                    ("sweep.csv".into(), runs.table.table()),
                    ("timings.csv".into(), runs.table.timings()),
                ],
            )?;
        }
        Command::Pipeline(c) => {
            let ctx = load(&c)?;
            let report = pipeline::run_pipeline(&ctx.cfg)?;
            let summary = report.summary_text();
            print!("{summary}");
            echo_config(&ctx)?;
            let mut tables = report.tables();
            if let Some(sw) = &report.sweep {
                tables.push(("timings.csv".into(), sw.timings()));
            }
            write(&ctx.out, tables)?;
            write_atomic(&ctx.out.join("summary.txt"), &summary)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    run(cli.command)
}
