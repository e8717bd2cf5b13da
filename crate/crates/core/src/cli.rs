//! The `fracperron` experiment runner.
//!
//! Every subcommand reads one TOML configuration (see [`crate::config`]) and
//! writes JSON reports and CSV tables named `<prefix>.<artifact>` into the
//! output directory. Files are written to a temporary name and renamed into
//! place. Floats use the shortest representation that parses back to the
//! same value, so identical runs produce identical bytes.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver
//! non-convergence, 4 insufficient resolution. Errors are printed to stderr
//! as a single JSON line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::capacity::{comparability_check, condenser_capacity, sobolev_capacity, CapacityResult};
use crate::config::{CapacityMode, ExperimentConfig};
use crate::energy::apply_operator;
use crate::error::{Error, Result};
use crate::model::{assemble_weights, Field, Grid, NodeSet, Point, SetRole, WeightMatrix};
use crate::perron::{
    kellogg_experiment, perturbation_experiment, spearman, upper_perron, KelloggCase, PerturbationCase,
};
use crate::regularity::{classify_points, default_r0, wiener_profile, wiener_trend, WIENER_HEURISTIC};
use crate::solver::{solve_dirichlet, solve_obstacle, ObstacleSpec, SolveReport};

const UNITS: &str = "lengths in box units; weights carry length^(n-sp); energies are dimensionless after cell-measure absorption";

#[derive(Debug, Parser)]
#[command(name = "fracperron", version, about = "Fractional p-Laplacian potential theory on grids")]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for independent sub-tasks.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Also write the assembled weights as CSV.
    #[arg(long, global = true)]
    pub dump_weights: bool,
    /// Also write the operator residual of the computed field as CSV.
    #[arg(long, global = true)]
    pub dump_residual: bool,
    /// Print the parsed configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dirichlet problem Hg.
    Solve,
    /// Obstacle problem with obstacle psi and data g.
    Obstacle,
    /// Condenser or Sobolev capacity, or the comparability check.
    Capacity {
        #[arg(long, value_enum)]
        kind: Option<CapacityMode>,
    },
    /// Dyadic Wiener profile at one boundary point.
    Wiener {
        /// Comma separated coordinates, e.g. `--x0=0,0`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Regular/irregular verdicts for boundary points.
    Classify {
        #[arg(long)]
        all_boundary: bool,
    },
    /// Upper and lower Perron envelopes compared with Hg.
    Perron,
    /// Refinement experiments.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum ExperimentKind {
    /// Influence of data perturbations on shrinking exterior sets.
    Perturbation,
    /// Capacity of the irregular boundary set under refinement.
    Kellogg,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            e.exit_code()
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<i32> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let prefix = cfg.output.prefix.clone().unwrap_or_else(|| {
        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
    });
    let out = Output { dir: cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")), prefix };
    let runner = Runner { cli, cfg: &cfg, out: &out };
    match cli.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
            pool.install(|| runner.dispatch())
        }
        None => runner.dispatch(),
    }
}

struct Output {
    dir: PathBuf,
    prefix: String,
}

impl Output {
    fn path(&self, artifact: &str) -> PathBuf {
        self.dir.join(format!("{}.{artifact}", self.prefix))
    }

    /// Writes through a temporary file in the same directory, then renames.
    fn write(&self, artifact: &str, contents: &str) -> Result<()> {
        let io = |e: std::io::Error| Error::Config(format!("output {artifact}: {e}"));
        fs::create_dir_all(&self.dir).map_err(io)?;
        let target = self.path(artifact);
        let tmp = self.dir.join(format!(".{}.{artifact}.tmp{}", self.prefix, std::process::id()));
        fs::write(&tmp, contents).map_err(io)?;
        fs::rename(&tmp, &target).map_err(io)
    }

    fn json(&self, artifact: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.write(artifact, &text)
    }
}

fn coord_header(grid: &Grid) -> &'static str {
    if grid.dim() == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn coords(grid: &Grid, c: Point) -> String {
    if grid.dim() == 1 {
        format!("{}", c[0])
    } else {
        format!("{},{}", c[0], c[1])
    }
}

fn point_json(grid: &Grid, c: Point) -> Value {
    if grid.dim() == 1 {
        json!([c[0]])
    } else {
        json!([c[0], c[1]])
    }
}

/// `index,x[,y],<columns...>` with one row per node.
fn field_csv(grid: &Grid, names: &[&str], fields: &[&Field]) -> String {
    let mut s = format!("index,{},{}\n", coord_header(grid), names.join(","));
    for i in 0..grid.len() {
        let _ = write!(s, "{i},{}", coords(grid, grid.center(i)));
        for f in fields {
            let _ = write!(s, ",{}", f.values[i]);
        }
        s.push('\n');
    }
    let _ = write!(s, "far,,");
    if grid.dim() == 2 {
        s.push(',');
    }
    s.pop();
    for f in fields {
        let _ = write!(s, ",{}", f.far);
    }
    s.push('\n');
    s
}

/// Accepts a partial report from a non-converged solve and turns it into exit code 3.
fn settle(result: Result<SolveReport>) -> Result<(SolveReport, i32)> {
    match result {
        Ok(r) => Ok((r, 0)),
        Err(Error::NotConverged(r)) => Ok((*r, 3)),
        Err(e) => Err(e),
    }
}

struct Runner<'a> {
    cli: &'a Cli,
    cfg: &'a ExperimentConfig,
    out: &'a Output,
}

impl Runner<'_> {
    fn dispatch(&self) -> Result<i32> {
        match &self.cli.command {
            Command::Solve => self.solve(false),
            Command::Obstacle => self.solve(true),
            Command::Capacity { kind } => self.capacity(*kind),
            Command::Wiener { x0, levels } => self.wiener(x0.as_deref(), *levels),
            Command::Classify { all_boundary } => self.classify(*all_boundary),
            Command::Perron => self.perron(),
            Command::Experiment { which: ExperimentKind::Perturbation } => self.perturbation(),
            Command::Experiment { which: ExperimentKind::Kellogg } => self.kellogg(),
        }
    }

    fn weights(&self, grid: &Grid) -> Result<WeightMatrix> {
        let w = assemble_weights(grid, &self.cfg.params()?)?;
        if self.cli.dump_weights {
            let mut buf = Vec::new();
            w.dump_csv(&mut buf).expect("writing to memory succeeds");
            self.out.write("weights.csv", &String::from_utf8(buf).expect("CSV is UTF-8"))?;
        }
        Ok(w)
    }

    fn residual(&self, u: &Field, omega: &NodeSet, w: &WeightMatrix) -> Result<()> {
        if !self.cli.dump_residual {
            return Ok(());
        }
        let grid = w.grid();
        let r = apply_operator(u, w, omega)?;
        let mut s = format!("index,{},residual\n", coord_header(grid));
        for (&i, v) in r.nodes.iter().zip(&r.values) {
            let _ = writeln!(s, "{i},{},{v}", coords(grid, grid.center(i)));
        }
        self.out.write("residual.csv", &s)
    }

    fn solve(&self, obstacle: bool) -> Result<i32> {
        let cfg = self.cfg;
        let grid = cfg.base_grid()?;
        let w = self.weights(&grid)?;
        let omega = cfg.set("omega", &grid, SetRole::Domain)?;
        let g = cfg.g(&grid)?;
        let opts = cfg.solve_options();
        let (report, code) = if obstacle {
            let spec = ObstacleSpec { psi: cfg.psi(&grid)?, g };
            settle(solve_obstacle(&spec, &omega, &w, &opts))?
        } else {
            settle(solve_dirichlet(&g, &omega, &w, &opts))?
        };
        self.out.json(
            "report.json",
            &json!({
                "command": if obstacle { "obstacle" } else { "solve" },
                "nodes": grid.len(),
                "interior_nodes": omega.count(),
                "iterations": report.iterations,
                "final_sweep_delta": report.final_sweep_delta,
                "energy": report.energy,
                "residual_sup": report.residual_sup,
                "complementarity": report.complementarity,
                "active_set": report.active_set.indices(),
                "converged": report.converged,
                "tol": opts.tol,
                "units": UNITS,
            }),
        )?;
        self.out.write("field.csv", &field_csv(&grid, &["u"], &[&report.u]))?;
        self.residual(&report.u, &omega, &w)?;
        Ok(code)
    }

    fn capacity(&self, kind: Option<CapacityMode>) -> Result<i32> {
        let cfg = self.cfg;
        let mode = kind
            .or_else(|| cfg.capacity.as_ref().and_then(|c| c.kind))
            .unwrap_or(CapacityMode::Condenser);
        let grid = cfg.base_grid()?;
        let params = cfg.params()?;
        let w = self.weights(&grid)?;
        let opts = cfg.solve_options();
        let write_result = |res: &CapacityResult| -> Result<i32> {
            self.out.json(
                "capacity.json",
                &json!({
                    "value": res.value,
                    "kind": res.kind,
                    "converged": res.converged,
                    "iterations": res.iterations,
                    "units": UNITS,
                }),
            )?;
            self.out.write("minimizer.csv", &field_csv(&grid, &["v"], &[&res.minimizer]))?;
            Ok(if res.converged { 0 } else { 3 })
        };
        match mode {
            CapacityMode::Condenser => {
                let omega = cfg.set("omega", &grid, SetRole::Domain)?;
                let k = cfg.set("k", &grid, SetRole::Compact)?;
                write_result(&condenser_capacity(&k, &omega, &params, &w, &opts)?)
            }
            CapacityMode::Sobolev => {
                let e = cfg.set("e", &grid, SetRole::Exceptional)?;
                write_result(&sobolev_capacity(&e, &params, &w, &opts)?)
            }
            CapacityMode::Comparability => {
                let omega = cfg.set("omega", &grid, SetRole::Domain)?;
                let e = cfg.set("e", &grid, SetRole::Exceptional)?;
                let rep = comparability_check(&e, &omega, &params, &w, &opts, cfg.comparability_budget())?;
                self.out.json("comparability.json", &serde_json::to_value(&rep).expect("report serializes"))?;
                Ok(0)
            }
        }
    }

    fn wiener(&self, x0: Option<&[f64]>, levels: Option<usize>) -> Result<i32> {
        let cfg = self.cfg;
        let grid = cfg.base_grid()?;
        let params = cfg.params()?;
        let domain = cfg.domain(&grid)?;
        let x0 = match x0 {
            Some(c) if c.len() == grid.dim() => [c[0], if grid.dim() == 2 { c[1] } else { 0.0 }],
            Some(c) => return Err(Error::Config(format!("--x0: expected {} coordinates, got {}", grid.dim(), c.len()))),
            None => cfg.x0()?.ok_or_else(|| Error::Config("regularity.x0: is required (or pass --x0)".into()))?,
        };
        let ropts = cfg.regularity_options();
        let levels = levels.unwrap_or(ropts.levels);
        let r0 = ropts.r0.unwrap_or_else(|| default_r0(&grid, x0));
        let profile = wiener_profile(x0, &domain, &params, r0, levels, ropts.min_spacing, None, &ropts.solver)?;
        let mut csv = String::from("j,rho,capacity,term,partial_sum\n");
        for j in 0..profile.radii.len() {
            let _ = writeln!(
                csv,
                "{j},{},{},{},{}",
                profile.radii[j], profile.capacities[j], profile.terms[j], profile.partial_sums[j]
            );
        }
        self.out.write("profile.csv", &csv)?;
        self.out.json(
            "wiener.json",
            &json!({
                "x0": point_json(&grid, x0),
                "r0": r0,
                "levels": levels,
                "truncated": profile.truncated,
                "trend": wiener_trend(&profile.terms),
                "heuristic": WIENER_HEURISTIC,
            }),
        )?;
        Ok(0)
    }

    fn classify(&self, all_boundary: bool) -> Result<i32> {
        let cfg = self.cfg;
        let grid = cfg.base_grid()?;
        let params = cfg.params()?;
        let w = self.weights(&grid)?;
        let domain = cfg.domain(&grid)?;
        let points = cfg.sample_points(&domain, all_boundary)?;
        let verdicts = classify_points(&points, &domain, &params, &w, &cfg.regularity_options())?;
        let mut csv = format!("{},verdict,wiener,barrier,potential\n", coord_header(&grid));
        for v in &verdicts {
            let e = &v.evidence;
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                coords(&grid, v.x0),
                json!(v.verdict).as_str().unwrap_or_default(),
                json!(e.wiener_trend).as_str().unwrap_or_default(),
                e.barrier_limit,
                e.potential_value
            );
        }
        self.out.write("verdicts.csv", &csv)?;
        self.out.json("verdicts.json", &serde_json::to_value(&verdicts).expect("verdicts serialize"))?;
        Ok(0)
    }

    fn perron(&self) -> Result<i32> {
        let cfg = self.cfg;
        let grid = cfg.base_grid()?;
        let w = self.weights(&grid)?;
        let omega = cfg.set("omega", &grid, SetRole::Domain)?;
        let g = cfg.g(&grid)?;
        let opts = cfg.solve_options();
        let rep = upper_perron(&g, &omega, &w, &opts)?;
        self.out.json(
            "perron.json",
            &json!({
                "gap_sup": rep.gap_sup,
                "dev_sup": rep.dev_sup,
                "upper_sweeps": rep.upper_sweeps,
                "lower_sweeps": rep.lower_sweeps,
                "max_increase": rep.max_increase,
                "converged": rep.converged,
                "tol": opts.tol,
            }),
        )?;
        self.out.write("perron.csv", &field_csv(&grid, &["upper", "lower", "hg"], &[&rep.upper, &rep.lower, &rep.hg]))?;
        self.residual(&rep.hg, &omega, &w)?;
        Ok(if rep.converged { 0 } else { 3 })
    }

    fn perturbation(&self) -> Result<i32> {
        let cfg = self.cfg;
        let params = cfg.params()?;
        let cases = cfg
            .grid_family()?
            .into_iter()
            .map(|grid| {
                Ok(PerturbationCase {
                    omega: cfg.set("omega", &grid, SetRole::Domain)?,
                    e: cfg.set("e", &grid, SetRole::Exceptional)?,
                    g: cfg.g(&grid)?,
                    h_pert: cfg.h_pert(&grid)?,
                    grid,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = perturbation_experiment(&cases, &params, &cfg.solve_options())?;
        let mut csv = String::from("k,h,capacity,deviation\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{}", r.k, r.h, r.capacity, r.deviation);
        }
        self.out.write("perturbation.csv", &csv)?;
        let dev: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
        let cap: Vec<f64> = rows.iter().map(|r| r.capacity).collect();
        self.out.json(
            "perturbation.json",
            &json!({
                "rows": rows,
                "deviation_strictly_decreasing": dev.windows(2).all(|p| p[1] < p[0]),
                "spearman": spearman(&cap, &dev),
            }),
        )?;
        Ok(0)
    }

    fn kellogg(&self) -> Result<i32> {
        let cfg = self.cfg;
        let params = cfg.params()?;
        let cases = cfg
            .grid_family()?
            .into_iter()
            .map(|grid| {
                let domain = cfg.domain(&grid)?;
                let points = cfg.sample_points(&domain, false)?;
                Ok(KelloggCase { domain, points })
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = cfg.grid.dim;
        let rows = kellogg_experiment(&cases, &params, &cfg.regularity_options())?;
        let mut csv = String::from("k,h,points,irregular,inconclusive,capacity\n");
        for r in &rows {
            let _ = writeln!(csv, "{},{},{},{},{},{}", r.k, r.h, r.points, r.irregular.len(), r.inconclusive.len(), r.capacity);
        }
        self.out.write("kellogg.csv", &csv)?;
        let pts = |ps: &[Point]| -> Vec<Value> {
            ps.iter().map(|p| if dim == 1 { json!([p[0]]) } else { json!([p[0], p[1]]) }).collect()
        };
        let caps: Vec<f64> = rows.iter().map(|r| r.capacity).collect();
        self.out.json(
            "kellogg.json",
            &json!({
                "rows": rows.iter().map(|r| json!({
                    "k": r.k,
                    "h": r.h,
                    "points": r.points,
                    "irregular": pts(&r.irregular),
                    "inconclusive": pts(&r.inconclusive),
                    "capacity": r.capacity,
                })).collect::<Vec<_>>(),
                "capacity_nonincreasing": caps.windows(2).all(|p| p[1] <= p[0]),
            }),
        )?;
        Ok(0)
    }
}

/// Path of an artifact written by a run with the given prefix.
pub fn artifact_path(out_dir: &Path, prefix: &str, artifact: &str) -> PathBuf {
    out_dir.join(format!("{prefix}.{artifact}"))
}
