//! Experiment configuration files (TOML).
//!
//! ```toml
//! [grid]
//! dim = 1
//! bounds = [[-1.05, 1.05]]     # one [lo, hi] pair per axis
//! h = 0.1
//! max_nodes = 4096             # optional
//!
//! [params]
//! s = 0.4
//! p = 2.0
//! lambda = 1.0                 # optional
//! kernel = "standard"          # or an expression in r, e.g. "1.5 * r^(-1.8)"
//!
//! [sets]                       # shape specifications (see `shape`)
//! omega = "rect(-1, 1) - point(0)"
//! k = "cball(0, 0.3)"
//! e = "cell(1.001)"
//!
//! [data]                       # expressions in x, y
//! g = "x^2"
//! g_far = 0.0
//! psi = "0.2 - x^2"            # absent: no obstacle
//! psi_at = [{ point = [0.0], value = inf }]
//! h_pert = "1"
//!
//! [solver]
//! tol = 1e-8
//! act_tol = 1e-9
//! max_sweeps = 10000
//! init = "exterior_mean"       # or "from_data"
//!
//! [output]
//! prefix = "run"               # defaults to the config file stem
//!
//! [capacity]
//! kind = "condenser"           # condenser | sobolev | comparability
//! budget = 100.0
//!
//! [regularity]
//! x0 = [0.0]
//! points = [[0.0], [1.0]]
//! all_boundary = false
//! levels = 4
//! r0 = 0.5
//! min_spacing = 0.0
//! barrier_tol = 0.3
//! pot_tol = 0.4
//! pot_radius_cells = 4.0
//!
//! [experiment]                 # grid family for refinement studies
//! hs = [0.1, 0.05, 0.025]
//! pad_cells = 0.5              # each box side grows by pad_cells * h
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::COMPARABILITY_BUDGET;
use crate::error::{Error, Result};
use crate::expr::{Expr, Vars};
use crate::model::{Field, FracParams, Grid, Kernel, NodeSet, Point, RadialProfile, SetRole, DEFAULT_MAX_NODES};
use crate::regularity::{Domain, RegularityOptions};
use crate::shape::{rasterize, Shape};
use crate::solver::{Init, SolveOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub params: ParamsSection,
    #[serde(default)]
    pub sets: SetsSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularity: Option<RegularitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub s: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiPin {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_far: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub psi_at: Vec<PsiPin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_pert: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMode {
    Condenser,
    Sobolev,
    Comparability,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CapacityMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub all_boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pot_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pot_radius_cells: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub hs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_cells: Option<f64>,
}

fn config_err(key: &str, err: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {err}"))
}

fn parse_shape(key: &str, source: &str, dim: usize) -> Result<Shape> {
    let shape = Shape::parse(source).map_err(|e| config_err(key, e))?;
    if let Some(d) = shape.dim() {
        if d != dim {
            return Err(config_err(key, format!("shape is {d}-dimensional but the grid is {dim}-dimensional")));
        }
    }
    Ok(shape)
}

fn parse_expr(key: &str, source: &str) -> Result<Expr> {
    Expr::parse(source).map_err(|e| config_err(key, e))
}

fn to_point(key: &str, coords: &[f64], dim: usize) -> Result<Point> {
    if coords.len() != dim {
        return Err(config_err(key, format!("expected {dim} coordinates, got {}", coords.len())));
    }
    Ok([coords[0], if dim == 2 { coords[1] } else { 0.0 }])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks that every shape and expression parses and that the parameters are valid.
    pub fn validate(&self) -> Result<()> {
        let dim = self.grid.dim;
        if dim != 1 && dim != 2 {
            return Err(config_err("grid.dim", format!("must be 1 or 2, got {dim}")));
        }
        if self.grid.bounds.len() != dim {
            return Err(config_err("grid.bounds", format!("expected {dim} intervals")));
        }
        self.params()?;
        for (key, src) in [("sets.omega", &self.sets.omega), ("sets.k", &self.sets.k), ("sets.e", &self.sets.e)] {
            if let Some(src) = src {
                parse_shape(key, src, dim)?;
            }
        }
        for (key, src) in [("data.g", &self.data.g), ("data.psi", &self.data.psi), ("data.h_pert", &self.data.h_pert)] {
            if let Some(src) = src {
                parse_expr(key, src)?;
            }
        }
        for pin in &self.data.psi_at {
            to_point("data.psi_at.point", &pin.point, dim)?;
            if pin.value.is_nan() {
                return Err(config_err("data.psi_at.value", "NaN is not an obstacle value"));
            }
        }
        if let Some(reg) = &self.regularity {
            if let Some(x0) = &reg.x0 {
                to_point("regularity.x0", x0, dim)?;
            }
            for p in &reg.points {
                to_point("regularity.points", p, dim)?;
            }
        }
        if let Some(exp) = &self.experiment {
            if exp.hs.is_empty() || exp.hs.iter().any(|h| !(*h > 0.0)) {
                return Err(config_err("experiment.hs", "needs positive spacings"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<FracParams> {
        let lambda = self.params.lambda.unwrap_or(1.0);
        let kernel = match self.params.kernel.as_deref() {
            None | Some("standard") => Kernel::Standard,
            Some(src) => {
                let expr = parse_expr("params.kernel", src)?;
                if expr.variables().iter().any(|v| v != "r" && v != "pi") {
                    return Err(config_err("params.kernel", "kernel profiles may only use the variable r"));
                }
                Kernel::Custom(RadialProfile::new(src, move |r| expr.eval(Vars::radius(r)).unwrap_or(f64::NAN)))
            }
        };
        FracParams::with_kernel(self.params.s, self.params.p, lambda, kernel).map_err(|e| config_err("params", e))
    }

    fn bounds(&self, pad: f64) -> Vec<(f64, f64)> {
        self.grid.bounds.iter().map(|[lo, hi]| (lo - pad, hi + pad)).collect()
    }

    fn max_nodes(&self) -> usize {
        self.grid.max_nodes.unwrap_or(DEFAULT_MAX_NODES)
    }

    pub fn base_grid(&self) -> Result<Grid> {
        Grid::with_limit(&self.bounds(0.0), self.grid.h, self.grid.dim, self.max_nodes())
    }

    /// The refinement family: one grid per `experiment.hs` entry, with boxes
    /// padded by `pad_cells * h` on every side.
    pub fn grid_family(&self) -> Result<Vec<Grid>> {
        let exp = self.experiment.as_ref().ok_or_else(|| config_err("experiment", "section is required"))?;
        let pad = exp.pad_cells.unwrap_or(0.0);
        exp.hs
            .iter()
            .map(|&h| Grid::with_limit(&self.bounds(pad * h), h, self.grid.dim, self.max_nodes()))
            .collect()
    }

    pub fn solve_options(&self) -> SolveOptions {
        let mut opts = SolveOptions::for_p(self.params.p);
        if let Some(t) = self.solver.tol {
            opts.tol = t;
        }
        if let Some(t) = self.solver.act_tol {
            opts.act_tol = t;
        }
        opts.max_sweeps = self.solver.max_sweeps;
        if let Some(init) = self.solver.init {
            opts.init = init;
        }
        opts
    }

    pub fn regularity_options(&self) -> RegularityOptions {
        let mut opts = RegularityOptions::for_p(self.params.p);
        opts.solver = self.solve_options();
        if let Some(reg) = &self.regularity {
            opts.r0 = reg.r0;
            opts.levels = reg.levels.unwrap_or(opts.levels);
            opts.min_spacing = reg.min_spacing.unwrap_or(opts.min_spacing);
            opts.barrier_tol = reg.barrier_tol.unwrap_or(opts.barrier_tol);
            opts.pot_tol = reg.pot_tol.unwrap_or(opts.pot_tol);
            opts.pot_radius_cells = reg.pot_radius_cells.unwrap_or(opts.pot_radius_cells);
        }
        opts
    }

    pub fn comparability_budget(&self) -> f64 {
        self.capacity.as_ref().and_then(|c| c.budget).unwrap_or(COMPARABILITY_BUDGET)
    }

    pub fn set(&self, key: &str, grid: &Grid, role: SetRole) -> Result<NodeSet> {
        let src = match key {
            "omega" => &self.sets.omega,
            "k" => &self.sets.k,
            "e" => &self.sets.e,
            _ => return Err(config_err(key, "unknown set")),
        };
        let src = src.as_deref().ok_or_else(|| config_err(&format!("sets.{key}"), "is required"))?;
        let shape = parse_shape(&format!("sets.{key}"), src, grid.dim())?;
        rasterize(&shape, grid, role)
    }

    pub fn domain(&self, grid: &Grid) -> Result<Domain> {
        let src = self.sets.omega.as_deref().ok_or_else(|| config_err("sets.omega", "is required"))?;
        Domain::new(parse_shape("sets.omega", src, grid.dim())?, grid.clone())
    }

    fn field(&self, key: &str, src: Option<&str>, default: &str, grid: &Grid, far: f64) -> Result<Field> {
        let expr = parse_expr(key, src.unwrap_or(default))?;
        let values = grid
            .centers()
            .map(|c| expr.eval(Vars::at(c)).map_err(|e| config_err(key, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Field { values, far })
    }

    /// Exterior data `g` (default `0`) with far value `g_far`.
    pub fn g(&self, grid: &Grid) -> Result<Field> {
        self.field("data.g", self.data.g.as_deref(), "0", grid, self.data.g_far.unwrap_or(0.0))
    }

    /// Perturbation `h_pert` (default `1`).
    pub fn h_pert(&self, grid: &Grid) -> Result<Field> {
        self.field("data.h_pert", self.data.h_pert.as_deref(), "1", grid, 0.0)
    }

    /// Obstacle: `None` when neither `psi` nor `psi_at` is given. Pinned
    /// values replace the expression at the cell containing each point.
    pub fn psi(&self, grid: &Grid) -> Result<Option<Field>> {
        if self.data.psi.is_none() && self.data.psi_at.is_empty() {
            return Ok(None);
        }
        let mut psi = match &self.data.psi {
            Some(src) => self.field("data.psi", Some(src), "0", grid, f64::NEG_INFINITY)?,
            None => Field { values: vec![f64::NEG_INFINITY; grid.len()], far: f64::NEG_INFINITY },
        };
        let h = grid.h();
        for pin in &self.data.psi_at {
            let at = to_point("data.psi_at.point", &pin.point, grid.dim())?;
            let i = (0..grid.len())
                .find(|&i| {
                    let c = grid.center(i);
                    (0..grid.dim()).all(|k| at[k] >= c[k] - 0.5 * h && at[k] < c[k] + 0.5 * h)
                })
                .ok_or_else(|| config_err("data.psi_at.point", format!("{:?} is outside the grid", pin.point)))?;
            psi.values[i] = pin.value;
        }
        Ok(Some(psi))
    }

    pub fn x0(&self) -> Result<Option<Point>> {
        match self.regularity.as_ref().and_then(|r| r.x0.as_ref()) {
            Some(x0) => Ok(Some(to_point("regularity.x0", x0, self.grid.dim)?)),
            None => Ok(None),
        }
    }

    /// Sample points for classification on `domain`: every boundary node
    /// when `all_boundary` is set, else the listed points, else `x0`.
    pub fn sample_points(&self, domain: &Domain, all_boundary: bool) -> Result<Vec<Point>> {
        let reg = self.regularity.clone().unwrap_or_default();
        if all_boundary || reg.all_boundary {
            let g = domain.grid();
            return Ok(domain.boundary_nodes().into_iter().map(|i| g.center(i)).collect());
        }
        if !reg.points.is_empty() {
            return reg.points.iter().map(|p| to_point("regularity.points", p, self.grid.dim)).collect();
        }
        match self.x0()? {
            Some(x0) => Ok(vec![x0]),
            None => Err(config_err("regularity", "needs x0, points or all_boundary")),
        }
    }
}
