use nonlocal_mp::discrete::{
    build_weight_table, read_grid_function, DiscreteForm, DomainMask, Grid, TestFunction,
};
use nonlocal_mp::kernels::{KernelSpec, XKernelSpec};
use nonlocal_mp::maxprinciple::ProblemData;
use nonlocal_mp::Error;
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum Failure {
    /// The config file or one of its referenced inputs is malformed.
    Config(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

pub type ConfigResult<T> = Result<T, Failure>;

fn cfg_err<T>(msg: impl Into<String>) -> ConfigResult<T> {
    Err(Failure::Config(msg.into()))
}

/// A grid function: a constant, a closed-form test function, explicit
/// values for every node, or a grid-function file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Constant(f64),
    Values(Vec<f64>),
    File { file: PathBuf },
    Function(TestFunction),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The `count` nodes closest to `center`.
    Nearest { center: Vec<f64>, count: usize },
}

impl MaskSpec {
    fn extent(&self, center: &[f64], h: f64, dim: usize) -> f64 {
        let far = |p: &[f64], r: f64| p.iter().zip(center).map(|(a, b)| (a - b).abs() + r).fold(0.0, f64::max);
        match self {
            MaskSpec::Ball { center: c, radius } => far(c, *radius),
            MaskSpec::Box { lo, hi } => far(lo, 0.0).max(far(hi, 0.0)),
            MaskSpec::Nearest { center: c, count } => far(c, h * (*count as f64).powf(1.0 / dim as f64)),
        }
    }

    fn build(&self, grid: &Grid) -> DomainMask {
        match self {
            MaskSpec::Ball { center, radius } => DomainMask::ball(grid, center, *radius),
            MaskSpec::Box { lo, hi } => {
                DomainMask::from_fn(grid, |x| x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b))
            }
            MaskSpec::Nearest { center, count } => DomainMask::nearest_nodes(grid, center, *count),
        }
    }
}

fn default_subdivision() -> usize {
    3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub spacing: f64,
    pub trunc_radius: f64,
    #[serde(default = "default_subdivision")]
    pub subdivision: usize,
    /// Defaults to the origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    /// Defaults to the mask extent plus the stencil reach.
    #[serde(default)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// A kernel spec object or the path of a JSON file holding one.
    pub kernel: Option<serde_json::Value>,
    pub xkernel: Option<XKernelSpec>,
    pub grid: Option<GridSpec>,
    pub mask: Option<MaskSpec>,
    pub c: Option<Field>,
    pub g: Option<Field>,
    pub exterior: Option<Field>,
    pub u: Option<Field>,
    pub radii: Option<Vec<f64>>,
    pub tolerance: Option<f64>,
    pub rel_tol: Option<f64>,
    pub budget: Option<u64>,
    pub c_plus: Option<f64>,
    pub r_max: Option<f64>,
    pub source: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub eps1: Option<f64>,
    pub reach: Option<f64>,
    pub certificate: Option<PathBuf>,
    pub generators: Option<Vec<Vec<f64>>>,
    pub start: Option<Vec<f64>>,
    pub end: Option<Vec<f64>>,
    pub rho: Option<f64>,
    pub bfs_cap: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Parse with the JSON path of the offending field in the message.
pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> ConfigResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Failure::Config(format!("{what}: field `{path}`: {inner}"))
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = parse_json(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_files(&self) -> ConfigResult<()> {
        let mut files: Vec<(&str, &Path)> = Vec::new();
        if let Some(serde_json::Value::String(p)) = &self.kernel {
            files.push(("kernel", Path::new(p)));
        }
        for (name, f) in [("c", &self.c), ("g", &self.g), ("exterior", &self.exterior), ("u", &self.u)] {
            if let Some(Field::File { file }) = f {
                files.push((name, file));
            }
        }
        if let Some(p) = &self.certificate {
            files.push(("certificate", p));
        }
        for (name, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return cfg_err(format!("field `{name}`: file {} does not exist", full.display()));
            }
        }
        Ok(())
    }

    pub fn require<'a, T>(&self, v: &'a Option<T>, name: &str, cmd: &str) -> ConfigResult<&'a T> {
        v.as_ref().ok_or_else(|| Failure::Config(format!("field `{name}` is required by `{cmd}`")))
    }

    pub fn kernel(&self, cmd: &str) -> ConfigResult<KernelSpec> {
        let (text, what) = match self.require(&self.kernel, "kernel", cmd)? {
            serde_json::Value::String(p) => {
                let full = self.resolve(Path::new(p));
                let text = fs::read_to_string(&full).map_err(|e| Failure::Config(format!("cannot read {}: {e}", full.display())))?;
                (text, full.display().to_string())
            }
            v => (v.to_string(), "field `kernel`".to_string()),
        };
        let mut k: KernelSpec = parse_json(&text, &what)?;
        k.validate().map_err(|e| Failure::Config(format!("{what}: {e}")))?;
        Ok(k)
    }

    pub fn form(&self, cmd: &str) -> ConfigResult<DiscreteForm> {
        let kernel = self.kernel(cmd)?;
        let gs = self.require(&self.grid, "grid", cmd)?;
        let ms = self.require(&self.mask, "mask", cmd)?;
        let dim = kernel.dimension;
        let table = build_weight_table(&kernel, gs.spacing, gs.trunc_radius, gs.subdivision)?;
        let center = gs.center.clone().unwrap_or_else(|| vec![0.0; dim]);
        if center.len() != dim {
            return cfg_err(format!("field `grid.center`: expected {dim} coordinates"));
        }
        let half = gs
            .half_width
            .unwrap_or_else(|| ms.extent(&center, gs.spacing, dim) + (table.reach() as f64 + 1.0) * gs.spacing);
        let grid = Grid::covering(center, half, gs.spacing).map_err(|e| Failure::Config(format!("field `grid`: {e}")))?;
        let mask = ms.build(&grid);
        DiscreteForm::new(grid, mask, table).map_err(|e| Failure::Config(format!("field `mask`: {e}")))
    }

    pub fn field(&self, f: &Option<Field>, name: &str, grid: &Grid, default: Option<f64>) -> ConfigResult<Vec<f64>> {
        let f = match (f, default) {
            (Some(f), _) => f,
            (None, Some(v)) => return Ok(vec![v; grid.len()]),
            (None, None) => return cfg_err(format!("field `{name}` is required")),
        };
        match f {
            Field::Constant(v) => Ok(vec![*v; grid.len()]),
            Field::Function(t) => Ok(t.sample(&grid.positions())),
            Field::Values(v) if v.len() == grid.len() => Ok(v.clone()),
            Field::Values(v) => cfg_err(format!("field `{name}`: {} values for {} grid nodes", v.len(), grid.len())),
            Field::File { file } => {
                let full = self.resolve(file);
                let bytes = fs::File::open(&full).map_err(|e| Failure::Config(format!("field `{name}`: {e}")))?;
                let (header, values) = read_grid_function(std::io::BufReader::new(bytes))
                    .map_err(|e| Failure::Config(format!("field `{name}`: {e}")))?;
                if &header.grid != grid {
                    return cfg_err(format!("field `{name}`: grid in {} does not match the configured grid", full.display()));
                }
                Ok(values)
            }
        }
    }

    pub fn problem(&self, cmd: &str) -> ConfigResult<ProblemData> {
        let form = self.form(cmd)?;
        let c = self.field(&self.c, "c", &form.grid, Some(0.0))?;
        let g = self.field(&self.g, "g", &form.grid, Some(0.0))?;
        let ext = self.field(&self.exterior, "exterior", &form.grid, Some(0.0))?;
        Ok(ProblemData::new(form, c, g, ext)?)
    }
}
