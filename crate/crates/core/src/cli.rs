//! Command-line front end: configuration, dispatch and output files.
//!
//! Settings come from an optional TOML file (`--config`) overlaid by flags.
//! The resolved [`ExperimentConfig`] is validated before any mesh is built and
//! echoed into the header of every file written.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};

use crate::analytic::{annulus_optimum, annulus_sigma1, mode_energy_sweep, ModeEnergyGrid};
use crate::eigen::SolverOptions;
use crate::mesh::{
    build_perforated_rectangle, build_polar_mesh, build_rectangle_grid, build_torus_cell, Mesh, PerforationSpec,
    TorusCellParams,
};
use crate::par::{self, Exec};
use crate::problems::{
    run_beta_sweep, run_cell_scaling, run_extension_sweep, run_homogenisation_sweep, shape_functionals,
    solve_problem, BetaDomain, DomainMeasures, ExtensionSweepParams, HomogenisationParams, ProblemKind,
};
use crate::report::{emit_csv, emit_svg, OutputHeader, PlotSpec, SweepReport};
use crate::{Error, Result, A2};

/// Environment variable overriding the output directory of the config file.
pub const OUT_ENV: &str = "STEKLOV_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    Square,
    Disk,
    Annulus,
    Perforated,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemName {
    Steklov,
    Neumann,
    Dynamical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Mesh,
    Solve,
    SweepHomog,
    SweepBeta,
    AnnulusOpt,
    CellScaling,
    VerifyLemma31,
    VerifyExtension,
}

impl CommandName {
    fn as_str(self) -> &'static str {
        match self {
            CommandName::Mesh => "mesh",
            CommandName::Solve => "solve",
            CommandName::SweepHomog => "sweep-homog",
            CommandName::SweepBeta => "sweep-beta",
            CommandName::AnnulusOpt => "annulus-opt",
            CommandName::CellScaling => "cell-scaling",
            CommandName::VerifyLemma31 => "verify-lemma31",
            CommandName::VerifyExtension => "verify-extension",
        }
    }
}

/// A decimal or a fraction such as `1/16`.
pub fn parse_number(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    let v = match t.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("invalid number `{t}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("invalid number `{t}`"))?;
            a / b
        }
        None => t.parse().map_err(|_| format!("invalid number `{t}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("invalid number `{t}`"))
    }
}

fn numbers<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Item {
        Num(f64),
        Text(String),
    }
    let items: Option<Vec<Item>> = Option::deserialize(d)?;
    items
        .map(|v| {
            v.into_iter()
                .map(|i| match i {
                    Item::Num(x) => Ok(x),
                    Item::Text(s) => parse_number(&s).map_err(serde::de::Error::custom),
                })
                .collect()
        })
        .transpose()
}

/// Unresolved settings; every field is optional. This is the TOML schema.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub subcommand: Option<CommandName>,
    pub domain: Option<DomainKind>,
    pub problem: Option<ProblemName>,
    pub side: Option<f64>,
    pub radius: Option<f64>,
    pub inner_radius: Option<f64>,
    pub beta: Option<f64>,
    #[serde(default, deserialize_with = "numbers")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, deserialize_with = "numbers")]
    pub eps: Option<Vec<f64>>,
    pub k: Option<usize>,
    pub resolution: Option<usize>,
    pub sectors: Option<usize>,
    pub nodes_per_cell_edge: Option<usize>,
    pub hole_rings: Option<usize>,
    pub fill_holes: Option<bool>,
    pub max_ell: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub sequential: Option<bool>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields of `self` win over those of `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            subcommand: self.subcommand.or(base.subcommand),
            domain: self.domain.or(base.domain),
            problem: self.problem.or(base.problem),
            side: self.side.or(base.side),
            radius: self.radius.or(base.radius),
            inner_radius: self.inner_radius.or(base.inner_radius),
            beta: self.beta.or(base.beta),
            betas: self.betas.or(base.betas),
            eps: self.eps.or(base.eps),
            k: self.k.or(base.k),
            resolution: self.resolution.or(base.resolution),
            sectors: self.sectors.or(base.sectors),
            nodes_per_cell_edge: self.nodes_per_cell_edge.or(base.nodes_per_cell_edge),
            hole_rings: self.hole_rings.or(base.hole_rings),
            fill_holes: self.fill_holes.or(base.fill_holes),
            max_ell: self.max_ell.or(base.max_ell),
            tol: self.tol.or(base.tol),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            jobs: self.jobs.or(base.jobs),
            sequential: self.sequential.or(base.sequential),
        }
    }
}

/// Fully resolved and validated experiment configuration.
///
/// Output directory and worker count do not change results and are left out
/// of the serialised form, so identical experiments give identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: CommandName,
    pub domain: DomainKind,
    pub problem: ProblemName,
    pub side: f64,
    pub radius: f64,
    pub inner_radius: f64,
    pub beta: f64,
    pub betas: Vec<f64>,
    pub eps: Vec<f64>,
    pub k: usize,
    /// Grid cells per side, or rings of a polar mesh.
    pub resolution: usize,
    pub sectors: usize,
    pub nodes_per_cell_edge: usize,
    pub hole_rings: usize,
    pub fill_holes: bool,
    pub max_ell: usize,
    pub tol: f64,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub sequential: bool,
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite (got {v})")))
    }
}

impl ExperimentConfig {
    /// Merge file, flags and environment, fill per-command defaults and
    /// validate. Output directory precedence: flag, then `env_out`, then file.
    pub fn resolve(command: CommandName, file: Settings, flags: Settings, env_out: Option<PathBuf>) -> Result<Self> {
        if let Some(c) = file.subcommand {
            if c != command {
                return Err(Error::Config(format!(
                    "config file is for `{}`, not `{}`",
                    c.as_str(),
                    command.as_str()
                )));
            }
        }
        let out_flag = flags.out.clone();
        let s = flags.over(file);
        let out = out_flag
            .or(env_out)
            .or(s.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        use CommandName as C;
        let domain = s.domain.unwrap_or(match command {
            C::SweepBeta => DomainKind::Disk,
            C::SweepHomog | C::VerifyExtension => DomainKind::Perforated,
            C::CellScaling => DomainKind::Torus,
            C::AnnulusOpt => DomainKind::Annulus,
            _ => DomainKind::Square,
        });
        let problem = match command {
            C::SweepHomog => ProblemName::Dynamical,
            C::VerifyExtension => ProblemName::Steklov,
            C::SweepBeta => ProblemName::Dynamical,
            _ => s.problem.unwrap_or(ProblemName::Steklov),
        };
        let torus = command == C::CellScaling;
        let cfg = ExperimentConfig {
            subcommand: command,
            domain,
            problem,
            side: s.side.unwrap_or(1.0),
            radius: s.radius.unwrap_or(1.0),
            inner_radius: s.inner_radius.unwrap_or(0.5),
            beta: s.beta.unwrap_or(1.0),
            betas: s.betas.unwrap_or_else(|| vec![10.0, 100.0, 1000.0, 10000.0]),
            eps: s.eps.unwrap_or_else(|| match command {
                C::CellScaling => vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
                C::Mesh | C::Solve => vec![1.0 / 8.0],
                _ => vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
            }),
            k: s.k.unwrap_or(match command {
                C::Solve => 6,
                C::SweepHomog => 4,
                _ => 1,
            }),
            resolution: s.resolution.unwrap_or(32),
            sectors: s.sectors.unwrap_or(128),
            nodes_per_cell_edge: s.nodes_per_cell_edge.unwrap_or(if torus { 16 } else { 8 }),
            hole_rings: s.hole_rings.unwrap_or(if torus { 16 } else { 6 }),
            fill_holes: s.fill_holes.unwrap_or(false),
            max_ell: s.max_ell.unwrap_or(20),
            tol: s.tol.unwrap_or(SolverOptions::default().tol),
            seed: s.seed.unwrap_or(SolverOptions::default().seed),
            out,
            jobs: s.jobs,
            sequential: s.sequential.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every numeric field that the subcommand will use.
    pub fn validate(&self) -> Result<()> {
        use CommandName as C;
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(invalid(format!("tol must lie in (0, 1) (got {})", self.tol)));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1".into()));
        }
        positive("side", self.side)?;
        positive("radius", self.radius)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be non-negative (got {})", self.beta)));
        }
        match self.subcommand {
            C::AnnulusOpt | C::VerifyLemma31 => {
                if self.max_ell == 0 {
                    return Err(invalid("max_ell must be at least 1".into()));
                }
                return Ok(());
            }
            C::SweepBeta => {
                if self.betas.is_empty() {
                    return Err(invalid("betas must not be empty".into()));
                }
                for &b in &self.betas {
                    positive("beta", b)?;
                }
                return match self.domain {
                    DomainKind::Disk => Ok(()),
                    DomainKind::Square if self.resolution >= 2 => Ok(()),
                    DomainKind::Square => Err(invalid("resolution must be at least 2".into())),
                    d => Err(invalid(format!("sweep-beta supports disk and square domains (got {d:?})"))),
                };
            }
            C::CellScaling => {
                self.check_eps()?;
                if self.nodes_per_cell_edge < 3 || self.hole_rings == 0 {
                    return Err(invalid(format!(
                        "torus cell needs nodes_per_cell_edge >= 3 and hole_rings >= 1 (got {}, {})",
                        self.nodes_per_cell_edge, self.hole_rings
                    )));
                }
                for &e in &self.eps {
                    let rho = self.beta * e;
                    if !(rho > 0.0 && rho < 0.5) {
                        return Err(Error::DegenerateCell { rho });
                    }
                }
                return Ok(());
            }
            C::SweepHomog | C::VerifyExtension => return self.check_perforation(),
            C::Mesh | C::Solve => {}
        }
        match self.domain {
            DomainKind::Square if self.resolution == 0 => Err(invalid("resolution must be at least 1".into())),
            DomainKind::Disk | DomainKind::Annulus if self.resolution == 0 || self.sectors < 8 => Err(invalid(
                format!("polar mesh needs resolution >= 1 and sectors >= 8 (got {}, {})", self.resolution, self.sectors),
            )),
            DomainKind::Annulus if !(self.inner_radius > 0.0 && self.inner_radius < self.radius) => {
                Err(Error::DegenerateAnnulus {
                    inner: self.inner_radius,
                    outer: self.radius,
                })
            }
            DomainKind::Perforated => self.check_perforation(),
            DomainKind::Torus => {
                self.check_eps()?;
                let rho = self.beta * self.eps[0];
                if !(rho > 0.0 && rho < 0.5) {
                    return Err(Error::DegenerateCell { rho });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn check_eps(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(invalid("eps must not be empty".into()));
        }
        for &e in &self.eps {
            positive("eps", e)?;
        }
        Ok(())
    }

    fn check_perforation(&self) -> Result<()> {
        self.check_eps()?;
        for &e in &self.eps {
            self.perforation(e)?.steps(self.side)?;
        }
        Ok(())
    }

    fn perforation(&self, epsilon: f64) -> Result<PerforationSpec> {
        PerforationSpec::with_resolution(epsilon, self.beta, self.nodes_per_cell_edge, self.hole_rings)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            seed: self.seed,
            exec: self.exec(),
            ..SolverOptions::default()
        }
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn problem_kind(&self) -> ProblemKind {
        match self.problem {
            ProblemName::Steklov => ProblemKind::Steklov,
            ProblemName::Neumann => ProblemKind::Neumann,
            ProblemName::Dynamical => ProblemKind::Dynamical { beta: self.beta },
        }
    }

    /// The configuration as TOML, echoed into output headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    fn header(&self) -> OutputHeader {
        OutputHeader::new(self.to_toml())
    }

    /// Mesh used by `mesh` and `solve`.
    pub fn build_mesh(&self) -> Result<Mesh> {
        match self.domain {
            DomainKind::Square => build_rectangle_grid(self.side, self.side, self.resolution, self.resolution),
            DomainKind::Disk => build_polar_mesh(0.0, self.radius, self.resolution, self.sectors),
            DomainKind::Annulus => build_polar_mesh(self.inner_radius, self.radius, self.resolution, self.sectors),
            DomainKind::Perforated => {
                build_perforated_rectangle(self.side, self.side, &self.perforation(self.eps[0])?, self.fill_holes)
            }
            DomainKind::Torus => build_torus_cell(self.beta * self.eps[0], self.torus_params()),
        }
    }

    fn torus_params(&self) -> TorusCellParams {
        TorusCellParams {
            nodes_per_edge: self.nodes_per_cell_edge,
            rings: self.hole_rings,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "steklov-lab", version, about = "Steklov, Neumann and dynamical eigenvalues on perforated domains")]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory (also STEKLOV_LAB_OUT).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed of the eigensolver start block.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Eigensolver residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct GeometryArgs {
    #[arg(long, value_enum)]
    domain: Option<DomainKind>,
    /// Side of the square.
    #[arg(long)]
    side: Option<f64>,
    /// Outer radius of the disk or annulus.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    inner_radius: Option<f64>,
    /// Grid cells per side, or rings of a polar mesh.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    sectors: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct PerforationArgs {
    #[arg(long)]
    beta: Option<f64>,
    /// Cell sizes, e.g. `1/8,1/16`.
    #[arg(long, value_delimiter = ',', value_parser = parse_number)]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    nodes_per_cell_edge: Option<usize>,
    #[arg(long)]
    hole_rings: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a mesh and write its text export.
    Mesh {
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        perforation: PerforationArgs,
        /// Triangulate the hole interiors.
        #[arg(long)]
        fill_holes: bool,
    },
    /// Solve one eigenproblem.
    Solve {
        #[arg(long, value_enum)]
        problem: Option<ProblemName>,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[command(flatten)]
        perforation: PerforationArgs,
        /// Number of nonzero eigenvalues.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Perforated Steklov eigenvalues against the dynamical limit.
    SweepHomog {
        #[command(flatten)]
        perforation: PerforationArgs,
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Dynamical eigenvalues over a list of beta.
    SweepBeta {
        #[arg(long, value_enum)]
        domain: Option<DomainKind>,
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_number)]
        betas: Option<Vec<f64>>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Maximise the perimeter-normalised first annulus eigenvalue.
    AnnulusOpt,
    /// Cell-problem norms on the punctured torus.
    CellScaling {
        #[command(flatten)]
        perforation: PerforationArgs,
    },
    /// Per-mode energy inequality over a parameter grid.
    VerifyLemma31 {
        #[arg(long)]
        max_ell: Option<usize>,
    },
    /// Harmonic-extension energy of a perforated Steklov eigenfunction.
    VerifyExtension {
        #[command(flatten)]
        perforation: PerforationArgs,
        #[arg(long)]
        k: Option<usize>,
    },
}

impl GeometryArgs {
    fn apply(&self, s: &mut Settings) {
        s.domain = self.domain;
        s.side = self.side;
        s.radius = self.radius;
        s.inner_radius = self.inner_radius;
        s.resolution = self.resolution;
        s.sectors = self.sectors;
    }
}

impl PerforationArgs {
    fn apply(&self, s: &mut Settings) {
        s.beta = self.beta;
        s.eps = self.eps.clone();
        s.nodes_per_cell_edge = self.nodes_per_cell_edge;
        s.hole_rings = self.hole_rings;
    }
}

impl Cli {
    fn flags(&self) -> (CommandName, Settings) {
        let mut s = Settings {
            out: self.out.clone(),
            jobs: self.jobs,
            seed: self.seed,
            tol: self.tol,
            sequential: self.sequential.then_some(true),
            ..Settings::default()
        };
        let name = match &self.command {
            Command::Mesh {
                geometry,
                perforation,
                fill_holes,
            } => {
                geometry.apply(&mut s);
                perforation.apply(&mut s);
                s.fill_holes = fill_holes.then_some(true);
                CommandName::Mesh
            }
            Command::Solve {
                problem,
                geometry,
                perforation,
                k,
            } => {
                geometry.apply(&mut s);
                perforation.apply(&mut s);
                s.problem = *problem;
                s.k = *k;
                CommandName::Solve
            }
            Command::SweepHomog { perforation, side, k } => {
                perforation.apply(&mut s);
                s.side = *side;
                s.k = *k;
                CommandName::SweepHomog
            }
            Command::SweepBeta {
                domain,
                side,
                radius,
                resolution,
                betas,
                k,
            } => {
                s.domain = *domain;
                s.side = *side;
                s.radius = *radius;
                s.resolution = *resolution;
                s.betas = betas.clone();
                s.k = *k;
                CommandName::SweepBeta
            }
            Command::AnnulusOpt => CommandName::AnnulusOpt,
            Command::CellScaling { perforation } => {
                perforation.apply(&mut s);
                CommandName::CellScaling
            }
            Command::VerifyLemma31 { max_ell } => {
                s.max_ell = *max_ell;
                CommandName::VerifyLemma31
            }
            Command::VerifyExtension { perforation, k } => {
                perforation.apply(&mut s);
                s.k = *k;
                CommandName::VerifyExtension
            }
        };
        (name, s)
    }
}

/// Exit code for an error: 2 for numerical failures, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_solver_failure() {
        2
    } else {
        1
    }
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = load_config(&cli).and_then(|cfg| par::with_jobs(cfg.jobs, || run(&cfg)));
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(path) => Settings::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
        None => Settings::default(),
    };
    let (name, flags) = cli.flags();
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    ExperimentConfig::resolve(name, file, flags, env_out)
}

/// Run a validated configuration and return the files written.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    match cfg.subcommand {
        CommandName::Mesh => run_mesh(cfg),
        CommandName::Solve => {
            let report = solve_report(cfg)?;
            let stem = format!("spectrum_{}_{}", cfg.problem.as_stem(), cfg.domain.as_stem());
            write_report(cfg, &report, &stem)
        }
        CommandName::SweepHomog => {
            let mut params = HomogenisationParams::new(cfg.beta, cfg.eps.clone(), cfg.k);
            params.side = cfg.side;
            params.nodes_per_cell_edge = cfg.nodes_per_cell_edge;
            params.hole_rings = cfg.hole_rings;
            params.solver = cfg.solver();
            let report = run_homogenisation_sweep(&params)?;
            for p in &report.points {
                println!("eps {:.6e}  gaps {:?}", p.epsilon, p.gaps);
            }
            write_report(cfg, &report.to_sweep_report(), "sweep_homog")
        }
        CommandName::SweepBeta => {
            let domain = match cfg.domain {
                DomainKind::Square => BetaDomain::Square {
                    side: cfg.side,
                    cells: cfg.resolution,
                },
                _ => BetaDomain::Disk { radius: cfg.radius },
            };
            let report = run_beta_sweep(domain, &cfg.betas, cfg.k, &cfg.solver())?;
            if let Some(s) = report.gap_slope {
                println!("gap slope {s:.6}");
            }
            write_report(cfg, &report.to_sweep_report(), &format!("sweep_beta_{}", cfg.domain.as_stem()))
        }
        CommandName::AnnulusOpt => {
            let report = annulus_report()?;
            write_report(cfg, &report, "annulus_opt")
        }
        CommandName::CellScaling => {
            let report = run_cell_scaling(cfg.beta, &cfg.eps, cfg.torus_params(), cfg.exec())?;
            if let Some(s) = report.slope {
                println!("slope {s:.6}  max ratio increase {:.6}", report.max_ratio_increase());
            }
            write_report(cfg, &report.to_sweep_report(cfg.torus_params()), "cell_scaling")
        }
        CommandName::VerifyLemma31 => {
            let report = mode_energy_report(cfg);
            write_report(cfg, &report, "mode_energy")
        }
        CommandName::VerifyExtension => {
            let mut params = ExtensionSweepParams::new(cfg.beta, cfg.eps.clone(), cfg.k);
            params.nodes_per_cell_edge = cfg.nodes_per_cell_edge;
            params.hole_rings = cfg.hole_rings;
            params.solver = cfg.solver();
            let (reports, sweep) = run_extension_sweep(&params)?;
            for r in &reports {
                println!("eps {:.6e}  aggregate ratio {:.6}", r.epsilon, r.aggregate);
            }
            write_report(cfg, &sweep, "extension")
        }
    }
}

impl DomainKind {
    fn as_stem(self) -> &'static str {
        match self {
            DomainKind::Square => "square",
            DomainKind::Disk => "disk",
            DomainKind::Annulus => "annulus",
            DomainKind::Perforated => "perforated",
            DomainKind::Torus => "torus",
        }
    }
}

impl ProblemName {
    fn as_stem(self) -> &'static str {
        match self {
            ProblemName::Steklov => "steklov",
            ProblemName::Neumann => "neumann",
            ProblemName::Dynamical => "dynamical",
        }
    }
}

fn write_report(cfg: &ExperimentConfig, report: &SweepReport, stem: &str) -> Result<Vec<PathBuf>> {
    let header = cfg.header();
    let csv = cfg.out.join(format!("{stem}.csv"));
    emit_csv(report, &header, &csv)?;
    let mut files = vec![csv];
    let svg = cfg.out.join(format!("{stem}.svg"));
    if emit_svg(report, &header, &svg)? {
        files.push(svg);
    }
    Ok(files)
}

fn run_mesh(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mesh = cfg.build_mesh()?;
    let header = cfg.header();
    let mut text = format!("# tool: {}\n", header.tool);
    for line in header.config.lines() {
        text.push_str(&format!("# config: {line}\n"));
    }
    text.push_str(&format!("# mesh: {} {}\n", cfg.domain.as_stem(), mesh.checksum()));
    text.push_str(&mesh.to_text());
    let path = cfg.out.join(format!("mesh_{}.txt", cfg.domain.as_stem()));
    write_file(&path, &text)?;
    println!(
        "{} vertices, {} triangles, {} dofs, checksum {}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.n_dofs(),
        mesh.checksum()
    );
    Ok(vec![path])
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Eigenvalues, residuals and normalised functionals of a single solve.
pub fn solve_report(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let mesh = cfg.build_mesh()?;
    let kind = cfg.problem_kind();
    let spectrum = solve_problem(&mesh, kind, cfg.k, &cfg.solver())?;
    let functionals = shape_functionals(&spectrum.eigenvalues, kind, DomainMeasures::of_mesh(&mesh));
    let rows = (0..spectrum.len())
        .map(|i| {
            vec![
                i as f64,
                spectrum.eigenvalues[i],
                spectrum.residuals[i],
                functionals[i],
            ]
        })
        .collect();
    for (i, v) in spectrum.eigenvalues.iter().enumerate() {
        println!("{i:3}  {v:.12}  residual {:.2e}", spectrum.residuals[i]);
    }
    Ok(SweepReport {
        title: format!("{} spectrum on {}", kind.name(), cfg.domain.as_stem()),
        columns: vec!["index".into(), "eigenvalue".into(), "residual".into(), "functional".into()],
        rows,
        meshes: vec![(cfg.domain.as_stem().to_string(), mesh.checksum())],
        notes: vec![format!("iterations {}", spectrum.iterations)],
        slopes: Vec::new(),
        plot: PlotSpec {
            x: "index".into(),
            ys: vec!["eigenvalue".into()],
            log_x: false,
            log_y: false,
            x_label: "index".into(),
            y_label: "eigenvalue".into(),
        },
    })
}

/// Scan of `σ_1(A_{r,1}) · 2π(1 + r)` over the inner radius plus the refined
/// maximiser.
pub fn annulus_report() -> Result<SweepReport> {
    let opt = annulus_optimum()?;
    let rows = (1..100)
        .map(|i| {
            let r = i as f64 / 100.0;
            let s = annulus_sigma1(r)?;
            Ok(vec![r, s, s * A2 * (1.0 + r)])
        })
        .collect::<Result<Vec<_>>>()?;
    println!(
        "optimum r = {:.6}, sigma_1 = {:.6}, functional = {:.6} pi",
        opt.inner_radius,
        opt.sigma1,
        opt.value / std::f64::consts::PI
    );
    Ok(SweepReport {
        title: "annulus first Steklov eigenvalue times perimeter".into(),
        columns: vec!["inner_radius".into(), "sigma_1".into(), "functional".into()],
        rows,
        meshes: Vec::new(),
        notes: vec![
            format!("optimum inner_radius {:.16e}", opt.inner_radius),
            format!("optimum sigma_1 {:.16e}", opt.sigma1),
            format!("optimum functional {:.16e}", opt.value),
        ],
        slopes: Vec::new(),
        plot: PlotSpec {
            x: "inner_radius".into(),
            ys: vec!["functional".into()],
            log_x: false,
            log_y: false,
            x_label: "inner radius r".into(),
            y_label: "sigma_1 |boundary|".into(),
        },
    })
}

/// Pass/fail table of the per-mode energy inequality.
pub fn mode_energy_report(cfg: &ExperimentConfig) -> SweepReport {
    let grid = ModeEnergyGrid {
        max_ell: cfg.max_ell,
        ..ModeEnergyGrid::default()
    };
    let report = mode_energy_sweep(&grid);
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let e = &row.energy;
            vec![
                e.ell as f64,
                e.dim as f64,
                e.r,
                e.sigma,
                e.d_h,
                e.d_u_mode,
                row.ratio,
                if row.pass { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    println!(
        "{} modes checked, {} skipped, {} violations, fitted constant {:.6e}",
        report.rows.len(),
        report.skipped,
        report.violations,
        report.fitted_c
    );
    SweepReport {
        title: "per-mode harmonic extension energy".into(),
        columns: ["ell", "dim", "r", "sigma", "d_h", "d_u_mode", "ratio", "pass"]
            .iter()
            .map(|c| c.to_string())
            .collect(),
        rows,
        meshes: Vec::new(),
        notes: vec![
            format!("skipped {}", report.skipped),
            format!("violations {}", report.violations),
            format!("fitted_c {:.16e}", report.fitted_c),
        ],
        slopes: Vec::new(),
        plot: PlotSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(args: &[&str]) -> Result<ExperimentConfig> {
        let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
        let (name, flags) = cli.flags();
        ExperimentConfig::resolve(name, Settings::default(), flags, None)
    }

    #[test]
    fn numbers_accept_fractions() {
        assert_eq!(parse_number("1/8"), Ok(0.125));
        assert_eq!(parse_number(" 0.5 "), Ok(0.5));
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("x").is_err());
    }

    #[test]
    fn eps_list_from_flags() {
        let cfg = resolve(&["steklov-lab", "sweep-homog", "--beta", "1", "--eps", "1/8,1/16,1/32", "--k", "4"]).unwrap();
        assert_eq!(cfg.eps, vec![0.125, 0.0625, 0.03125]);
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.problem, ProblemName::Dynamical);
    }

    #[test]
    fn oversized_holes_are_rejected_before_solving() {
        let e = resolve(&["steklov-lab", "sweep-homog", "--eps", "0.6", "--beta", "1"]).unwrap_err();
        assert!(matches!(e, Error::CriticalRadiusTooLarge { .. }), "{e}");
        assert_eq!(exit_code(&e), 1);
    }

    #[test]
    fn misaligned_lattice_is_rejected() {
        let e = resolve(&["steklov-lab", "verify-extension", "--eps", "0.3"]).unwrap_err();
        assert!(matches!(e, Error::NonAlignedLattice { .. }), "{e}");
    }

    #[test]
    fn flags_override_file_and_out_precedence() {
        let file = Settings::from_toml("beta = 0.5\neps = [\"1/4\", 0.125]\nk = 3\nout = \"from-file\"\n").unwrap();
        let cli = Cli::try_parse_from(["steklov-lab", "sweep-homog", "--k", "2"]).unwrap();
        let (name, flags) = cli.flags();
        let cfg = ExperimentConfig::resolve(name, file.clone(), flags, Some("from-env".into())).unwrap();
        assert_eq!(cfg.beta, 0.5);
        assert_eq!(cfg.eps, vec![0.25, 0.125]);
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.out, PathBuf::from("from-env"));

        let cli = Cli::try_parse_from(["steklov-lab", "--out", "from-flag", "sweep-homog"]).unwrap();
        let (name, flags) = cli.flags();
        let cfg = ExperimentConfig::resolve(name, file.clone(), flags, Some("from-env".into())).unwrap();
        assert_eq!(cfg.out, PathBuf::from("from-flag"));

        let (name, flags) = Cli::try_parse_from(["steklov-lab", "sweep-homog"]).unwrap().flags();
        let cfg = ExperimentConfig::resolve(name, file, flags, None).unwrap();
        assert_eq!(cfg.out, PathBuf::from("from-file"));
    }

    #[test]
    fn unknown_config_keys_fail() {
        assert!(matches!(Settings::from_toml("bogus = 1"), Err(Error::Config(_))));
        let file = Settings::from_toml("subcommand = \"solve\"").unwrap();
        let (name, flags) = Cli::try_parse_from(["steklov-lab", "mesh"]).unwrap().flags();
        assert!(ExperimentConfig::resolve(name, file, flags, None).is_err());
    }

    #[test]
    fn config_echo_skips_output_location() {
        let a = resolve(&["steklov-lab", "--out", "a", "--jobs", "2", "solve"]).unwrap();
        let b = resolve(&["steklov-lab", "--out", "b", "--sequential", "solve"]).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
        assert!(a.to_toml().contains("subcommand = \"solve\""));
    }

    #[test]
    fn invalid_numbers_are_validation_errors() {
        for args in [
            &["steklov-lab", "--tol", "0", "solve"][..],
            &["steklov-lab", "solve", "--k", "0"],
            &["steklov-lab", "solve", "--side", "-1"],
            &["steklov-lab", "solve", "--domain", "annulus", "--inner-radius", "2"],
            &["steklov-lab", "sweep-beta", "--betas", "1,-2"],
            &["steklov-lab", "cell-scaling", "--beta", "8"],
            &["steklov-lab", "--jobs", "0", "annulus-opt"],
        ] {
            let e = resolve(args).unwrap_err();
            assert_eq!(exit_code(&e), 1, "{args:?}: {e}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(parse_and_dispatch(["steklov-lab", "solve", "--bogus"]), 1);
        assert_eq!(parse_and_dispatch(["steklov-lab"]), 1);
        assert_eq!(parse_and_dispatch(["steklov-lab", "--help"]), 0);
    }
}
