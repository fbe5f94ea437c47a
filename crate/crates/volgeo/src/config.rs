//! JSON run configuration, dotted-path overrides, and the analytic families
//! used for endpoints, coefficients, conformal factors and targets.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use volgeo_core::pde::LinearMethod;
use volgeo_core::{Field, Grid, Metric, ProblemData, SolverConfig, SpatialField, Target, Torus};

use crate::error::{CliError, Result};
use crate::output;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub problem: ProblemConfig,
    pub solver: SolverBlock,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    pub length: f64,
    pub nx: usize,
    pub nt: usize,
    pub phi: ConformalFactor,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            length: 1.0,
            nx: 64,
            nt: 33,
            phi: ConformalFactor::Flat,
        }
    }
}

/// Conformal factor `φ` of `g = e^{2φ}δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConformalFactor {
    Flat,
    /// `amplitude·cos(2π·frequency·x/L)`; dimension 2 only.
    CosBump {
        amplitude: f64,
        frequency: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Constant targets `ε_k`.
    EpsilonLadder,
    /// A single solve with target `f`.
    FixedF,
    /// Targets `f + δ_k` for a nonnegative `f` that may vanish.
    DegenerateF,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub a: CoefficientProfile,
    pub b: f64,
    pub mode: Mode,
    pub f: TargetProfile,
    /// Level used by `solve` in the ladder modes (`ε`, or the shift `δ`);
    /// defaults to the first ladder level. In `fixed-f` mode it shifts `f`
    /// and defaults to 0.
    pub level: Option<f64>,
    pub u0: EndpointProfile,
    pub u1: EndpointProfile,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            a: CoefficientProfile::Constant { value: 1.0 },
            b: 0.0,
            mode: Mode::EpsilonLadder,
            f: TargetProfile::Constant { value: 0.0 },
            level: None,
            u0: EndpointProfile::Zero,
            u1: EndpointProfile::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientProfile {
    Constant {
        value: f64,
    },
    /// `mean + amplitude·cos(2π·frequency·x/L)`.
    Cos {
        mean: f64,
        amplitude: f64,
        frequency: f64,
    },
}

/// Time-independent unless loaded from a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetProfile {
    Constant {
        value: f64,
    },
    /// `scale·(1 − cos(2πk·x/L))²`, vanishing to second order at `x = 0`.
    SquaredCos {
        scale: f64,
        k: f64,
    },
    /// `max(0, sin(2πk·x/L))^power`, with a kink in the zero set.
    SinPower {
        power: f64,
        k: f64,
    },
    /// A space-time field dump on the configured grid.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EndpointProfile {
    Zero,
    /// `amplitude·sin(2πk·x/L)`, times `sin(2πk·y/L)` in dimension 2.
    Sine {
        amplitude: f64,
        k: f64,
    },
    /// `height·exp(−d²/(2·width²))` with `d` the periodic distance to `center`.
    Bump {
        center: [f64; 2],
        width: f64,
        height: f64,
    },
    /// A single-layer field dump.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    pub admissibility_floor: f64,
    pub linear_tol: f64,
    pub linear_method: LinearMethodName,
    pub eps0: f64,
    pub sigma: f64,
    pub eps_min: f64,
    pub bulge: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMethodName {
    Auto,
    Banded,
    Gmres,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self::from(&SolverConfig::default())
    }
}

impl From<&SolverConfig> for SolverBlock {
    fn from(c: &SolverConfig) -> Self {
        Self {
            newton_tol: c.newton_tol,
            max_newton_iters: c.max_newton_iters,
            backtrack_factor: c.backtrack_factor,
            max_halvings: c.max_halvings,
            admissibility_floor: c.admissibility_floor,
            linear_tol: c.linear_tol,
            linear_method: match c.linear_method {
                LinearMethod::Auto => LinearMethodName::Auto,
                LinearMethod::Banded => LinearMethodName::Banded,
                LinearMethod::Gmres => LinearMethodName::Gmres,
            },
            eps0: c.eps0,
            sigma: c.sigma,
            eps_min: c.eps_min,
            bulge: c.bulge,
        }
    }
}

impl SolverBlock {
    pub fn to_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            newton_tol: self.newton_tol,
            max_newton_iters: self.max_newton_iters,
            backtrack_factor: self.backtrack_factor,
            max_halvings: self.max_halvings,
            admissibility_floor: self.admissibility_floor,
            linear_tol: self.linear_tol,
            linear_method: match self.linear_method {
                LinearMethodName::Auto => LinearMethod::Auto,
                LinearMethodName::Banded => LinearMethod::Banded,
                LinearMethodName::Gmres => LinearMethod::Gmres,
            },
            eps0: self.eps0,
            sigma: self.sigma,
            eps_min: self.eps_min,
            bulge: self.bulge,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Field,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("volgeo-out"),
            formats: vec![Format::Csv, Format::Json, Format::Field],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Coefficient `A` of `A·t²` in the maximum-principle quantity `H`.
    pub h_coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random jets per dimension in the concavity scan.
    pub samples: usize,
    /// Coarsest `nx` of the refinement studies; `nt = nx + 1` on each level.
    pub base_nx: usize,
    /// Allowed deviation of observed orders from 2.
    pub order_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: 100_000,
            base_nx: 16,
            order_tolerance: 0.3,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `key=value`
    /// overrides addressed by dotted paths, e.g. `geometry.nx=128` or
    /// `problem.u1={"kind":"sine","amplitude":0.02,"k":1}`. Values that do
    /// not parse as JSON are taken as strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| CliError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(RunConfig::default()).expect("serializable defaults"),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = &self.geometry;
        Ok(Grid::with_shape(g.dim, g.nx, g.nt, g.length)?)
    }

    pub fn metric(&self, torus: Torus) -> Result<Metric> {
        match self.geometry.phi {
            ConformalFactor::Flat => Ok(Metric::flat(torus)),
            ConformalFactor::CosBump {
                amplitude,
                frequency,
            } => {
                let l = torus.length();
                let phi = SpatialField::from_fn(torus, |x| {
                    amplitude * (2.0 * PI * frequency * x[0] / l).cos()
                });
                Ok(Metric::conformal(phi)?)
            }
        }
    }

    pub fn coefficient(&self, torus: Torus) -> SpatialField {
        match self.problem.a {
            CoefficientProfile::Constant { value } => SpatialField::constant(torus, value),
            CoefficientProfile::Cos {
                mean,
                amplitude,
                frequency,
            } => {
                let l = torus.length();
                SpatialField::from_fn(torus, |x| {
                    mean + amplitude * (2.0 * PI * frequency * x[0] / l).cos()
                })
            }
        }
    }

    pub fn target_field(&self, grid: Grid) -> Result<Field> {
        let l = grid.torus().length();
        let f = match &self.problem.f {
            TargetProfile::Constant { value } => Field::constant(grid, *value),
            TargetProfile::SquaredCos { scale, k } => Field::from_fn(grid, |x, _| {
                scale * (1.0 - (2.0 * PI * k * x[0] / l).cos()).powi(2)
            }),
            TargetProfile::SinPower { power, k } => Field::from_fn(grid, |x, _| {
                (2.0 * PI * k * x[0] / l).sin().max(0.0).powf(*power)
            }),
            TargetProfile::File { path } => {
                let dump = output::read_field(path)?;
                dump.check_grid(path, &grid)?;
                Field::from_values(grid, dump.values)?
            }
        };
        Ok(f)
    }

    fn endpoint(&self, profile: &EndpointProfile, torus: Torus) -> Result<SpatialField> {
        let l = torus.length();
        let dim = torus.dim();
        Ok(match profile {
            EndpointProfile::Zero => SpatialField::zeros(torus),
            EndpointProfile::Sine { amplitude, k } => SpatialField::from_fn(torus, |x| {
                let mut v = amplitude * (2.0 * PI * k * x[0] / l).sin();
                if dim == 2 {
                    v *= (2.0 * PI * k * x[1] / l).sin();
                }
                v
            }),
            EndpointProfile::Bump {
                center,
                width,
                height,
            } => SpatialField::from_fn(torus, |x| {
                let d2: f64 = (0..dim)
                    .map(|i| {
                        let d = (x[i] - center[i]).rem_euclid(l);
                        let d = d.min(l - d);
                        d * d
                    })
                    .sum();
                height * (-d2 / (2.0 * width * width)).exp()
            }),
            EndpointProfile::File { path } => {
                let dump = output::read_field(path)?;
                dump.check_spatial(path, &torus)?;
                SpatialField::from_values(torus, dump.values)?
            }
        })
    }

    /// The problem at the starting level of the configured mode.
    pub fn problem(&self) -> Result<ProblemData> {
        let grid = self.grid()?;
        let torus = *grid.torus();
        let metric = self.metric(torus)?;
        let a = self.coefficient(torus);
        let u0 = self.endpoint(&self.problem.u0, torus)?;
        let u1 = self.endpoint(&self.problem.u1, torus)?;
        let target = match self.problem.mode {
            Mode::EpsilonLadder => Target::Constant(self.problem.level.unwrap_or(self.solver.eps0)),
            Mode::DegenerateF => Target::Shifted {
                f: self.target_field(grid)?,
                shift: self.problem.level.unwrap_or(self.solver.eps0),
            },
            Mode::FixedF => Target::Shifted {
                f: self.target_field(grid)?,
                shift: self.problem.level.unwrap_or(0.0),
            },
        };
        Ok(ProblemData::new(
            grid,
            metric,
            a,
            self.problem.b,
            target,
            u0,
            u1,
        )?)
    }
}

fn apply_override(root: &mut Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{entry}` is not key=value")))?;
    let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::config(format!("`{path}`: `{key}` is not inside an object"))
        })?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), new);
            return Ok(());
        }
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::config(format!(
        "empty override path in `{entry}`"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        let cfg = c.solver.to_config().unwrap();
        assert_eq!(cfg, SolverConfig::default());
    }

    #[test]
    fn dotted_overrides() {
        let c = RunConfig::load(
            None,
            &[
                "geometry.nx=128".into(),
                "problem.mode=degenerate-f".into(),
                r#"problem.u1={"kind":"sine","amplitude":0.02,"k":1}"#.into(),
                "solver.bulge=2.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.geometry.nx, 128);
        assert_eq!(c.problem.mode, Mode::DegenerateF);
        assert_eq!(
            c.problem.u1,
            EndpointProfile::Sine {
                amplitude: 0.02,
                k: 1.0
            }
        );
        assert_eq!(c.solver.bulge, Some(2.5));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_overrides() {
        assert!(RunConfig::load(None, &["geometry.nz=3".into()]).is_err());
        assert!(RunConfig::load(None, &["geometry".into()]).is_err());
        assert!(RunConfig::load(None, &["geometry.nx.deep=1".into()]).is_err());
    }

    #[test]
    fn inadmissible_endpoint_names_the_node() {
        let c = RunConfig::load(
            None,
            &[r#"problem.u1={"kind":"sine","amplitude":0.1,"k":1}"#.into()],
        )
        .unwrap();
        let msg = c.problem().unwrap_err().to_string();
        assert!(msg.contains("u1") && msg.contains("layer"), "{msg}");
    }

    #[test]
    fn bump_is_periodic() {
        let mut c = RunConfig::default();
        c.geometry.nx = 16;
        c.problem.u0 = EndpointProfile::Bump {
            center: [0.0, 0.0],
            width: 0.1,
            height: 0.01,
        };
        let torus = *c.grid().unwrap().torus();
        let u0 = c.endpoint(&c.problem.u0, torus).unwrap();
        assert!((u0.at(1) - u0.at(15)).abs() < 1e-15);
        assert_eq!(u0.at(0), 0.01);
    }
}
