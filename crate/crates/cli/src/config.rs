//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rte_tomo::geometry::{Arc, CutoffSpec, Vec2};
use rte_tomo::tomography::{EdgeMetric, NormalPath};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

const KEYS: &[&str] = &[
    "geometry.R",
    "geometry.R1",
    "grid.nx",
    "grid.ny",
    "grid.n_theta",
    "grid.n_bdry",
    "absorption.preset",
    "absorption.value",
    "absorption.blobs",
    "absorption.path",
    "scattering.preset",
    "scattering.strength",
    "scattering.g",
    "scattering.modes",
    "scattering.rho",
    "cutoff.preset",
    "cutoff.arcs",
    "cutoff.transition_width",
    "solver.tol",
    "solver.max_iter",
    "solver.h_ray",
    "source.preset",
    "source.center",
    "source.radius",
    "source.value",
    "source.width",
    "source.blobs",
    "source.path",
    "symbol.n_xi",
    "normal.path",
    "wavefront.edges",
    "wavefront.metric",
    "output.dir",
    "run.seed",
];

#[derive(Clone, Debug, PartialEq)]
pub enum AbsorptionConfig {
    Zero,
    Constant(f64),
    /// Gaussian bumps `(center, width, amplitude)`.
    Blobs(Vec<(Vec2, f64, f64)>),
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScatteringConfig {
    None,
    Isotropic { strength: f64 },
    HenyeyGreenstein { strength: f64, g: f64, modes: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceConfig {
    Disk {
        center: Vec2,
        radius: f64,
        value: f64,
    },
    Gaussian {
        center: Vec2,
        width: f64,
        value: f64,
    },
    /// Constant disks `(center, radius, value)`.
    Blobs(Vec<(Vec2, f64, f64)>),
    Noise,
    Ones,
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub radius_inner: f64,
    pub radius_outer: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_theta: usize,
    pub n_bdry: usize,
    pub absorption: AbsorptionConfig,
    pub scattering: ScatteringConfig,
    /// Rescale the kernel to this spectral radius of `T1^{-1} K`.
    pub target_rho: Option<f64>,
    pub cutoff: CutoffSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub h_ray: f64,
    pub source: SourceConfig,
    pub n_xi: usize,
    pub normal_path: NormalPath,
    pub edges: usize,
    pub metric: EdgeMetric,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    /// Makes relative CSV paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let AbsorptionConfig::Csv(p) = &mut self.absorption {
            fix(p);
        }
        if let SourceConfig::Csv(p) = &mut self.source {
            fix(p);
        }
        if let Some(p) = &mut self.output_dir {
            fix(p);
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| ConfigError::Line {
                line,
                message: format!("cannot parse `{v}` for `{key}`"),
            }),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.parse(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    /// Error attributed to the line of `key`, if present.
    fn fail(&self, key: &str, message: String) -> ConfigError {
        match self.raw(key) {
            Some((line, _)) => ConfigError::Line { line, message },
            None => ConfigError::Invalid(message),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        let v = self.or(key, default)?;
        if v < 8 {
            return Err(self.fail(key, format!("`{key}` must be at least 8, got {v}")));
        }
        Ok(v)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.or(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.fail(key, format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.raw(key)
            .map(|(_, v)| PathBuf::from(v))
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn point(&self, key: &str, default: Vec2) -> Result<Vec2, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => {
                let t = tuple(v, 2).map_err(|message| ConfigError::Line { line, message })?;
                Ok(Vec2::new(t[0], t[1]))
            }
        }
    }

    /// `;`-separated groups of `width` comma-separated numbers.
    fn groups(&self, key: &str, width: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
        let (line, v) = self
            .raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        v.split(';')
            .filter(|g| !g.trim().is_empty())
            .map(|g| tuple(g, width).map_err(|message| ConfigError::Line { line, message }))
            .collect()
    }
}

fn tuple(text: &str, width: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("cannot parse `{}` as numbers", text.trim()))?;
    if vals.len() != width || vals.iter().any(|v| !v.is_finite()) {
        return Err(format!(
            "expected {width} finite numbers, got `{}`",
            text.trim()
        ));
    }
    Ok(vals)
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            message: format!("expected `section.key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !key.contains('.') || value.is_empty() {
            return Err(ConfigError::Line {
                line,
                message: format!("expected `section.key = value`, got `{content}`"),
            });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::Line {
                line,
                message: format!("unknown key `{key}`"),
            });
        }
        if let Some((first, _)) = map.insert(key.to_string(), (line, value.to_string())) {
            return Err(ConfigError::Line {
                line,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
    }
    Ok(Entries { map })
}

fn parse_cutoff(e: &Entries) -> Result<CutoffSpec, ConfigError> {
    let width: f64 = e.or("cutoff.transition_width", 0.2)?;
    let preset = e.raw("cutoff.preset").map(|(_, v)| v).unwrap_or("full");
    let arcs = match preset {
        "full" => return Ok(CutoffSpec::full()),
        "empty" => return Ok(CutoffSpec::empty()),
        "half_circle" => vec![Arc::new(-PI / 2.0, PI / 2.0)],
        "arcs" => {
            let (line, v) = e
                .raw("cutoff.arcs")
                .ok_or_else(|| ConfigError::Missing("cutoff.arcs".into()))?;
            v.split(';')
                .filter(|g| !g.trim().is_empty())
                .map(|g| {
                    let parts: Vec<f64> = g
                        .split(':')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| ConfigError::Line {
                            line,
                            message: format!("cannot parse arc `{}`", g.trim()),
                        })?;
                    match parts.as_slice() {
                        [a, b] => Ok(Arc::new(*a, *b)),
                        [a, b, c] => Ok(Arc::new(*a, *b).with_cone(*c)),
                        _ => Err(ConfigError::Line {
                            line,
                            message: format!("arc `{}` needs start:end[:cone]", g.trim()),
                        }),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        other => return Err(e.fail("cutoff.preset", format!("unknown cutoff preset `{other}`"))),
    };
    CutoffSpec::new(arcs, width).map_err(|err| e.fail("cutoff.arcs", err.to_string()))
}

fn parse_absorption(e: &Entries) -> Result<AbsorptionConfig, ConfigError> {
    Ok(
        match e.raw("absorption.preset").map(|(_, v)| v).unwrap_or("zero") {
            "zero" => AbsorptionConfig::Zero,
            "constant" => {
                let v: f64 = e.or("absorption.value", 0.3)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(e.fail(
                        "absorption.value",
                        format!("absorption must be nonnegative, got {v}"),
                    ));
                }
                AbsorptionConfig::Constant(v)
            }
            "blobs" => AbsorptionConfig::Blobs(
                e.groups("absorption.blobs", 4)?
                    .into_iter()
                    .map(|g| (Vec2::new(g[0], g[1]), g[2], g[3]))
                    .collect(),
            ),
            "csv" => AbsorptionConfig::Csv(e.path("absorption.path")?),
            other => {
                return Err(e.fail(
                    "absorption.preset",
                    format!("unknown absorption preset `{other}`"),
                ))
            }
        },
    )
}

fn parse_scattering(e: &Entries) -> Result<ScatteringConfig, ConfigError> {
    let strength = || -> Result<f64, ConfigError> {
        let v: f64 = e.or("scattering.strength", 0.5)?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(e.fail(
                "scattering.strength",
                format!("strength must be nonnegative, got {v}"),
            ));
        }
        Ok(v)
    };
    Ok(
        match e.raw("scattering.preset").map(|(_, v)| v).unwrap_or("none") {
            "none" => ScatteringConfig::None,
            "isotropic" => ScatteringConfig::Isotropic {
                strength: strength()?,
            },
            "henyey_greenstein" => {
                let g: f64 = e.or("scattering.g", 0.5)?;
                if g.is_nan() || g.abs() >= 1.0 {
                    return Err(e.fail("scattering.g", format!("|g| must be below 1, got {g}")));
                }
                ScatteringConfig::HenyeyGreenstein {
                    strength: strength()?,
                    g,
                    modes: e.or("scattering.modes", 8)?,
                }
            }
            other => {
                return Err(e.fail(
                    "scattering.preset",
                    format!("unknown scattering preset `{other}`"),
                ))
            }
        },
    )
}

fn parse_source(e: &Entries) -> Result<SourceConfig, ConfigError> {
    let origin = Vec2::new(0.0, 0.0);
    Ok(
        match e.raw("source.preset").map(|(_, v)| v).unwrap_or("disk") {
            "disk" => SourceConfig::Disk {
                center: e.point("source.center", origin)?,
                radius: e.positive("source.radius", 0.5)?,
                value: e.or("source.value", 1.0)?,
            },
            "gaussian" => SourceConfig::Gaussian {
                center: e.point("source.center", origin)?,
                width: e.positive("source.width", 0.2)?,
                value: e.or("source.value", 1.0)?,
            },
            "blobs" => SourceConfig::Blobs(
                e.groups("source.blobs", 4)?
                    .into_iter()
                    .map(|g| (Vec2::new(g[0], g[1]), g[2], g[3]))
                    .collect(),
            ),
            "noise" => SourceConfig::Noise,
            "ones" => SourceConfig::Ones,
            "csv" => SourceConfig::Csv(e.path("source.path")?),
            other => {
                return Err(e.fail("source.preset", format!("unknown source preset `{other}`")))
            }
        },
    )
}

/// Parses and validates a configuration document.
///
/// Defaults: `nx = ny = 64`, `n_theta = 64`, `n_bdry = 256`, `tol = 1e-10`,
/// `max_iter = 200`, `h_ray = R1 / 256`, zero absorption, no scattering,
/// complete data, a disk source of radius 0.5, `n_xi = 32`, iterative normal
/// operator, 32 detrended edge probes, seed 0.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;
    let radius_inner: f64 = e.required("geometry.R")?;
    let radius_outer: f64 = e.required("geometry.R1")?;
    if !(radius_inner > 0.0 && radius_outer.is_finite()) {
        return Err(e.fail("geometry.R", "radii must be positive and finite".into()));
    }
    if radius_inner >= radius_outer {
        return Err(e.fail("geometry.R", "R < R1 violated".into()));
    }
    let tol: f64 = e.or("solver.tol", 1e-10)?;
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(e.fail(
            "solver.tol",
            format!("tol must lie in (0, 1e-2], got {tol}"),
        ));
    }
    let max_iter: usize = e.or("solver.max_iter", 200)?;
    if max_iter == 0 {
        return Err(e.fail("solver.max_iter", "max_iter must be positive".into()));
    }
    let target_rho: Option<f64> = e.parse("scattering.rho")?;
    if let Some(r) = target_rho {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(e.fail(
                "scattering.rho",
                format!("rho must be nonnegative, got {r}"),
            ));
        }
    }
    let normal_path = match e.raw("normal.path").map(|(_, v)| v).unwrap_or("iterative") {
        "iterative" => NormalPath::Iterative,
        "matrix" => NormalPath::Matrix,
        other => return Err(e.fail("normal.path", format!("unknown normal path `{other}`"))),
    };
    let metric = match e
        .raw("wavefront.metric")
        .map(|(_, v)| v)
        .unwrap_or("detrended")
    {
        "detrended" => EdgeMetric::Detrended,
        "difference" => EdgeMetric::Difference,
        other => return Err(e.fail("wavefront.metric", format!("unknown edge metric `{other}`"))),
    };
    Ok(RunConfig {
        radius_inner,
        radius_outer,
        nx: e.count("grid.nx", 64)?,
        ny: e.count("grid.ny", 64)?,
        n_theta: e.count("grid.n_theta", 64)?,
        n_bdry: e.count("grid.n_bdry", 256)?,
        absorption: parse_absorption(&e)?,
        scattering: parse_scattering(&e)?,
        target_rho,
        cutoff: parse_cutoff(&e)?,
        tol,
        max_iter,
        h_ray: e.positive("solver.h_ray", radius_outer / 256.0)?,
        source: parse_source(&e)?,
        n_xi: e.count("symbol.n_xi", 32)?,
        normal_path,
        edges: e.count("wavefront.edges", 32)?,
        metric,
        output_dir: e.raw("output.dir").map(|(_, v)| PathBuf::from(v)),
        seed: e.or("run.seed", 0)?,
    })
}
