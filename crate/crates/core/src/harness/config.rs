//! Scenario files: TOML with one flat section per stage.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cell_solver::{CellOptions, EigMethod, PowerStart, Scheme};
use crate::collision::{Profile, ScatteringKernel, XDependence};
use crate::error::{Error, Result};
use crate::kinetic::KineticTransport;
use crate::macro_solver::DriftScheme;
use crate::phase_space::{BoundaryCondition, CellGrid, MacroGrid, VelocityMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub velocity: VelocitySection,
    pub cell: CellSection,
    pub sigma: SigmaSection,
    pub initial: InitialSection,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<KineticSection>,
    pub output: OutputSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSection::default(),
            velocity: VelocitySection::default(),
            cell: CellSection::default(),
            sigma: SigmaSection::default(),
            initial: InitialSection::default(),
            macro_: MacroSection::default(),
            kinetic: None,
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub dimension: usize,
    /// Seeds random kernel tables.
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            dimension: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityKind {
    #[default]
    TwoVelocity,
    Circle,
    GaussLegendre,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocitySection {
    pub kind: VelocityKind,
    /// Node count for `circle` and `gauss_legendre`.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// `a(v_k)`; defaults to `a(v) = v`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<Vec<f64>>>,
}

impl Default for VelocitySection {
    fn default() -> Self {
        Self {
            kind: VelocityKind::TwoVelocity,
            n: 2,
            nodes: None,
            weights: None,
            field: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    #[default]
    Periodic,
    Hull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub kind: CellKind,
    pub n: usize,
    pub period: f64,
    /// Frequency module of the hull; defaults to the kernel's own module.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
    pub scheme: Scheme,
    pub tol_eig: f64,
    pub tol_lin: f64,
    pub tol_compat: f64,
    pub max_iter: usize,
    pub eig_method: EigMethod,
    pub power_start: PowerStart,
    pub gmres_restart: usize,
}

impl Default for CellSection {
    fn default() -> Self {
        let o = CellOptions::default();
        Self {
            kind: CellKind::Periodic,
            n: 32,
            period: 1.0,
            basis: None,
            scheme: o.scheme,
            tol_eig: o.tol_eig,
            tol_lin: o.tol_lin,
            tol_compat: o.tol_compat,
            max_iter: o.max_iter,
            eig_method: o.eig_method,
            power_start: o.power_start,
            gmres_restart: o.gmres_restart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Constant,
    Sinusoidal,
    QuasiPeriodic,
    RandomSymmetric,
    Asymptotic,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XDependenceKind {
    #[default]
    None,
    TanhScale,
    TanhAmplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaSection {
    pub family: KernelFamily,
    pub sigma0: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub amplitude: f64,
    pub width: f64,
    /// Velocity table `g[k][l]` for the `table` family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
    pub x_dependence: XDependenceKind,
    pub beta: f64,
}

impl Default for SigmaSection {
    fn default() -> Self {
        Self {
            family: KernelFamily::Constant,
            sigma0: 1.0,
            alpha: 0.5,
            alpha1: 0.2,
            alpha2: 0.2,
            amplitude: 0.5,
            width: 0.5,
            table: None,
            x_dependence: XDependenceKind::None,
            beta: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Gaussian,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub width: f64,
    pub center: Vec<f64>,
    /// `f0 = rho0 F`; otherwise `f0 = rho0 (1 + a_1 / (2 max|a|)) / mu(V)`.
    pub prepared: bool,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            amplitude: 1.0,
            width: 1.0,
            center: vec![0.0],
            prepared: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    pub half_width: f64,
    pub n: usize,
    pub bc: BoundaryCondition,
    pub theta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub checkpoints: Vec<f64>,
    pub drift: DriftScheme,
}

impl Default for MacroSection {
    fn default() -> Self {
        Self {
            half_width: 4.0,
            n: 512,
            bc: BoundaryCondition::Periodic,
            theta: 0.5,
            dt: 1e-3,
            t_final: 0.5,
            checkpoints: vec![],
            drift: DriftScheme::Central,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticSection {
    pub epsilons: Vec<f64>,
    pub c_cfl: f64,
    pub theta: f64,
    pub scheme: KineticTransport,
    /// Evenly spaced checkpoints used by the sigma functionals.
    pub n_checkpoints: usize,
    pub min_ratio: f64,
    /// Also run the unprepared datum and report the initial-layer gap.
    pub compare_unprepared: bool,
}

impl Default for KineticSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.4, 0.2, 0.1],
            c_cfl: 1.0,
            theta: 0.5,
            scheme: KineticTransport::Upwind,
            n_checkpoints: 20,
            min_ratio: 1.5,
            compare_unprepared: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    pub kinetic_dumps: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            kinetic_dumps: false,
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("scenario", &["name", "dimension", "seed"]),
    ("velocity", &["kind", "n", "nodes", "weights", "field"]),
    (
        "cell",
        &[
            "kind",
            "n",
            "period",
            "basis",
            "scheme",
            "tol_eig",
            "tol_lin",
            "tol_compat",
            "max_iter",
            "eig_method",
            "power_start",
            "gmres_restart",
        ],
    ),
    (
        "sigma",
        &[
            "family",
            "sigma0",
            "alpha",
            "alpha1",
            "alpha2",
            "amplitude",
            "width",
            "table",
            "x_dependence",
            "beta",
        ],
    ),
    ("initial", &["kind", "amplitude", "width", "center", "prepared"]),
    ("macro", &["half_width", "n", "bc", "theta", "dt", "t_final", "checkpoints", "drift"]),
    (
        "kinetic",
        &[
            "epsilons",
            "c_cfl",
            "theta",
            "scheme",
            "n_checkpoints",
            "min_ratio",
            "compare_unprepared",
        ],
    ),
    ("output", &["dir", "kinetic_dumps"]),
];

fn nearest<'a>(key: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .map(|c| (strsim::jaro_winkler(key, c), c))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

fn unknown(path: &str, suggestion: Option<String>) -> Error {
    match suggestion {
        Some(s) => Error::Config(format!("unknown key `{path}`; did you mean `{s}`?")),
        None => Error::Config(format!("unknown key `{path}`")),
    }
}

/// Rejects unknown sections and keys, naming the nearest valid key.
fn check_keys(doc: &toml::Table) -> Result<()> {
    for (section, value) in doc {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            let s = nearest(section, SECTIONS.iter().map(|(s, _)| *s));
            return Err(unknown(section, s.map(str::to_string)));
        };
        let toml::Value::Table(t) = value else {
            return Err(Error::Config(format!("`{section}` must be a table")));
        };
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                let s = nearest(key, keys.iter().copied()).map(|k| format!("{section}.{k}"));
                return Err(unknown(&format!("{section}.{key}"), s));
            }
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        check_keys(&doc)?;
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical echo with every default filled in.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.scenario.dimension;
        if !(1..=2).contains(&d) {
            return Err(Error::Config(format!("scenario.dimension = {d} not in 1..=2")));
        }
        let vm = self.velocity_measure()?;
        if vm.dim() != d {
            return Err(Error::Config(format!(
                "velocity field is {}-dimensional but scenario.dimension = {d}",
                vm.dim()
            )));
        }
        let cell = self.cell_grid()?;
        if cell.phys_dim() != d {
            return Err(Error::Config(format!(
                "cell is {}-dimensional but scenario.dimension = {d}",
                cell.phys_dim()
            )));
        }
        if self.initial.center.len() != d {
            return Err(Error::Config(format!(
                "initial.center has {} entries but scenario.dimension = {d}",
                self.initial.center.len()
            )));
        }
        if !(self.initial.width > 0.0) {
            return Err(Error::Config("initial.width must be positive".into()));
        }
        self.macro_grid()?;
        if !(self.macro_.dt > 0.0 && self.macro_.t_final > 0.0) {
            return Err(Error::Config("macro.dt and macro.t_final must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.macro_.theta) {
            return Err(Error::Config(format!("macro.theta = {} not in [0, 1]", self.macro_.theta)));
        }
        if let Some(k) = &self.kinetic {
            if d != 1 {
                return Err(Error::Config("kinetic section requires scenario.dimension = 1".into()));
            }
            if k.epsilons.is_empty() || k.epsilons.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::Config("kinetic.epsilons must be a nonempty list of positive values".into()));
            }
            if self.macro_.bc != BoundaryCondition::Periodic {
                return Err(Error::Config("kinetic runs need macro.bc = \"periodic\"".into()));
            }
        }
        self.kernel()?;
        Ok(())
    }

    pub fn velocity_measure(&self) -> Result<VelocityMeasure> {
        let v = &self.velocity;
        let vm = match v.kind {
            VelocityKind::TwoVelocity => VelocityMeasure::two_velocity(),
            VelocityKind::Circle => VelocityMeasure::circle(v.n)?,
            VelocityKind::GaussLegendre => {
                let (x, w) = gauss_legendre(v.n)?;
                VelocityMeasure::identity_field(x.into_iter().map(|x| vec![x]).collect(), w)?
            }
            VelocityKind::Custom => {
                let nodes = v
                    .nodes
                    .clone()
                    .ok_or_else(|| Error::Config("velocity.kind = \"custom\" needs velocity.nodes".into()))?;
                let weights = v
                    .weights
                    .clone()
                    .ok_or_else(|| Error::Config("velocity.kind = \"custom\" needs velocity.weights".into()))?;
                let field = v.field.clone().unwrap_or_else(|| nodes.clone());
                VelocityMeasure::new(nodes, weights, field)?
            }
        };
        Ok(vm)
    }

    pub fn cell_grid(&self) -> Result<CellGrid> {
        let c = &self.cell;
        match c.kind {
            CellKind::Periodic => CellGrid::periodic_with_period(self.scenario.dimension, c.n, c.period),
            CellKind::Hull => {
                let basis = match &c.basis {
                    Some(b) => b.clone(),
                    None => {
                        let k = self.kernel_unchecked()?;
                        k.profile()
                            .spectral(self.scenario.dimension)
                            .map(|s| s.basis().to_vec())
                            .ok_or_else(|| Error::Config("cell.kind = \"hull\" needs cell.basis".into()))?
                    }
                };
                CellGrid::hull(basis, c.n)
            }
        }
    }

    pub fn cell_options(&self) -> CellOptions {
        let c = &self.cell;
        CellOptions {
            scheme: c.scheme,
            tol_eig: c.tol_eig,
            tol_lin: c.tol_lin,
            tol_compat: c.tol_compat,
            max_iter: c.max_iter,
            eig_method: c.eig_method,
            power_start: c.power_start,
            gmres_restart: c.gmres_restart,
        }
    }

    pub fn macro_grid(&self) -> Result<MacroGrid> {
        MacroGrid::new(self.scenario.dimension, self.macro_.half_width, self.macro_.n, self.macro_.bc)
    }

    fn kernel_unchecked(&self) -> Result<ScatteringKernel> {
        let s = &self.sigma;
        let k = match self.velocity.kind {
            VelocityKind::TwoVelocity => 2,
            VelocityKind::Circle | VelocityKind::GaussLegendre => self.velocity.n,
            VelocityKind::Custom => self.velocity.nodes.as_ref().map_or(0, Vec::len),
        };
        let base = match s.family {
            KernelFamily::Constant => ScatteringKernel::constant(s.sigma0, k)?,
            KernelFamily::Sinusoidal => ScatteringKernel::new(
                Profile::Sinusoidal { alpha: s.alpha },
                vec![vec![s.sigma0; k]; k],
                XDependence::None,
            )?,
            KernelFamily::QuasiPeriodic => ScatteringKernel::new(
                Profile::QuasiPeriodic {
                    alpha1: s.alpha1,
                    alpha2: s.alpha2,
                },
                vec![vec![s.sigma0; k]; k],
                XDependence::None,
            )?,
            KernelFamily::RandomSymmetric => ScatteringKernel::random_symmetric(k, self.scenario.seed)?.scaled(s.sigma0)?,
            KernelFamily::Asymptotic => ScatteringKernel::new(
                Profile::AsymptoticSinusoidal {
                    alpha: s.alpha,
                    amplitude: s.amplitude,
                    width: s.width,
                },
                vec![vec![s.sigma0; k]; k],
                XDependence::None,
            )?,
            KernelFamily::Table => {
                let t = s
                    .table
                    .clone()
                    .ok_or_else(|| Error::Config("sigma.family = \"table\" needs sigma.table".into()))?;
                if t.len() != k {
                    return Err(Error::Config(format!(
                        "sigma.table has {} rows but the velocity set has {k} nodes",
                        t.len()
                    )));
                }
                ScatteringKernel::table(t)?
            }
        };
        let x_dep = match s.x_dependence {
            XDependenceKind::None => XDependence::None,
            XDependenceKind::TanhScale => XDependence::TanhScale { beta: s.beta },
            XDependenceKind::TanhAmplitude => XDependence::TanhAmplitude { beta: s.beta },
        };
        base.with_x_dependence(x_dep)
    }

    pub fn kernel(&self) -> Result<ScatteringKernel> {
        self.kernel_unchecked().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(format!("sigma: {other}")),
        })
    }

    /// `g(x)` of the initial datum.
    pub fn initial_profile(&self, x: &[f64]) -> f64 {
        let i = &self.initial;
        match i.kind {
            InitialKind::Constant => i.amplitude,
            InitialKind::Gaussian => {
                let r2: f64 = x.iter().zip(&i.center).map(|(a, c)| (a - c).powi(2)).sum();
                i.amplitude * (-r2 / (i.width * i.width)).exp()
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Config(format!("gauss_legendre needs n >= 2, got {n}")));
    }
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a.abs_diff(b) == 1 {
            let k = a.max(b) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize against eigen-solver roundoff.
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..n / 2 {
        let m = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = -m;
        x[n - 1 - i] = m;
        let a = 0.5 * (w[i] + w[n - 1 - i]);
        w[i] = a;
        w[n - 1 - i] = a;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}
