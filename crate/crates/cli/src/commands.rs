//! Command dispatch and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use rte_tomo::coefficients::{AbsorptionField, Blob, ScatteringKernel};
use rte_tomo::geometry::{convex_hull_mask, visible_mask, DiskGeometry};
use rte_tomo::io;
use rte_tomo::phantom::{self, DiskBlob};
use rte_tomo::raster::Raster;
use rte_tomo::tomography::{
    normal_operator_full, ray_transform, smoothing_diagnostic, svd_injectivity, symbol_field,
    wavefront_image, EdgePoint, NormalPath, OperatorMatrix,
};
use rte_tomo::transport::{Discretization, SolverSettings, Transport};

use crate::config::{AbsorptionConfig, ConfigError, RunConfig, ScatteringConfig, SourceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Forward,
    Measure,
    Normal,
    VisibleSet,
    Symbol,
    Svd,
    Wavefront,
    Smoothing,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Measure => "measure",
            Command::Normal => "normal",
            Command::VisibleSet => "visible-set",
            Command::Symbol => "symbol",
            Command::Svd => "svd",
            Command::Wavefront => "wavefront",
            Command::Smoothing => "smoothing",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Toolkit(#[from] rte_tomo::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// 2 for solver non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Toolkit(rte_tomo::Error::NonConvergence(_)) => 2,
            _ => 1,
        }
    }
}

/// Lines of `report.txt` and the artifacts written.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub lines: Vec<String>,
    pub artifacts: Vec<(String, String)>,
}

struct Output<'a> {
    dir: &'a Path,
    summary: RunSummary,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Output<'_> {
    fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        self.summary.lines.push(format!("{key} = {value}"));
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })?;
        self.summary
            .artifacts
            .push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn csv(&mut self, name: &str, r: &Raster) -> Result<(), RunError> {
        let mut buf = Vec::new();
        io::write_raster_csv(&mut buf, r)?;
        self.bytes(&format!("{name}.csv"), &buf)
    }

    fn pgm(&mut self, name: &str, r: &Raster) -> Result<(), RunError> {
        let scale = io::PgmScale::of(&r.data);
        let mut img = Vec::new();
        io::write_pgm(&mut img, r.grid, &r.data, scale)?;
        self.bytes(&format!("{name}.pgm"), &img)?;
        let mut meta = Vec::new();
        io::write_pgm_meta(&mut meta, r.grid, scale)?;
        self.bytes(&format!("{name}.pgm.meta"), &meta)
    }

    fn mask(&mut self, name: &str, m: &rte_tomo::geometry::VisibilityMask) -> Result<(), RunError> {
        let mut img = Vec::new();
        io::write_mask_pgm(&mut img, m)?;
        self.bytes(&format!("{name}.pgm"), &img)
    }

    fn finish(mut self, command: Command) -> Result<RunSummary, RunError> {
        let mut text = format!("command = {}\n", command.name());
        for l in &self.summary.lines {
            text.push_str(l);
            text.push('\n');
        }
        for (name, sum) in &self.summary.artifacts {
            text.push_str(&format!("sha256 {name} = {sum}\n"));
        }
        let path = self.dir.join("report.txt");
        fs::write(&path, text).map_err(|source| RunError::Io { path, source })?;
        self.summary
            .lines
            .insert(0, format!("command = {}", command.name()));
        Ok(self.summary)
    }
}

/// Geometry, discretization, transport model and source of a run.
pub struct Model {
    pub geom: DiskGeometry,
    pub disc: Discretization,
    pub transport: Transport,
    pub source: Raster,
}

fn read_csv(path: &Path) -> Result<Raster, RunError> {
    let file = fs::File::open(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(io::read_raster_csv(std::io::BufReader::new(file))?)
}

pub fn build_model(cfg: &RunConfig) -> Result<Model, RunError> {
    let geom = DiskGeometry::new(cfg.radius_inner, cfg.radius_outer)?;
    let disc = Discretization::new(&geom, cfg.nx, cfg.ny, cfg.n_theta, cfg.n_bdry)?
        .with_h_ray(cfg.h_ray)?;
    let grid = disc.grid;
    let sigma = match &cfg.absorption {
        AbsorptionConfig::Zero => AbsorptionField::zero(grid, &geom),
        AbsorptionConfig::Constant(c) => AbsorptionField::constant(grid, &geom, *c)?,
        AbsorptionConfig::Blobs(b) => {
            let blobs: Vec<Blob> = b
                .iter()
                .map(|&(center, width, amplitude)| Blob {
                    center,
                    width,
                    amplitude,
                })
                .collect();
            AbsorptionField::gaussian_blobs(grid, &geom, &blobs)?
        }
        AbsorptionConfig::Csv(p) => {
            let r = read_csv(p)?;
            grid.ensure_same(&r.grid)?;
            AbsorptionField::from_inner_raster(&geom, &r)?
        }
    };
    let kernel = match cfg.scattering {
        ScatteringConfig::None => ScatteringKernel::none(&geom),
        ScatteringConfig::Isotropic { strength } => {
            ScatteringKernel::isotropic(grid, &geom, strength)
        }
        ScatteringConfig::HenyeyGreenstein { strength, g, modes } => {
            ScatteringKernel::henyey_greenstein(grid, &geom, strength, g, modes)?
        }
    };
    let settings = SolverSettings {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        ..SolverSettings::default()
    };
    let mut transport = Transport::new(geom, disc, sigma, kernel)?.with_settings(settings)?;
    if let Some(rho) = cfg.target_rho {
        if !transport.kernel().is_empty() {
            let k = transport.kernel_scaled_to_radius(rho)?;
            transport = transport.with_kernel(k)?;
        }
    }
    let source = match &cfg.source {
        SourceConfig::Disk {
            center,
            radius,
            value,
        } => phantom::disk(grid, *center, *radius, *value).mask_disk(cfg.radius_inner),
        SourceConfig::Gaussian {
            center,
            width,
            value,
        } => phantom::gaussian(grid, *center, *width, *value).mask_disk(cfg.radius_inner),
        SourceConfig::Blobs(b) => phantom::blobs(grid, &geom, &disk_blobs(b)),
        SourceConfig::Noise => phantom::white_noise(grid, &geom, cfg.seed),
        SourceConfig::Ones => phantom::ones_on_omega(grid, &geom),
        SourceConfig::Csv(p) => {
            let r = read_csv(p)?;
            grid.ensure_same(&r.grid)?;
            r.mask_disk(cfg.radius_inner)
        }
    };
    Ok(Model {
        geom,
        disc,
        transport,
        source,
    })
}

fn disk_blobs(b: &[(rte_tomo::geometry::Vec2, f64, f64)]) -> Vec<DiskBlob> {
    b.iter()
        .map(|&(center, radius, value)| DiskBlob {
            center,
            radius,
            value,
        })
        .collect()
}

/// Labeled edges of piecewise-constant sources that lie inside `Omega`.
fn source_edges(cfg: &RunConfig, geom: &DiskGeometry) -> Vec<EdgePoint> {
    let circles: Vec<DiskBlob> = match &cfg.source {
        SourceConfig::Disk {
            center,
            radius,
            value,
        } => vec![DiskBlob {
            center: *center,
            radius: *radius,
            value: *value,
        }],
        SourceConfig::Blobs(b) => disk_blobs(b),
        _ => Vec::new(),
    };
    circles
        .iter()
        .filter(|c| c.value != 0.0)
        .flat_map(|c| phantom::disk_edge_points(c.center, c.radius, c.value, cfg.edges))
        .filter(|e| e.z.norm() < geom.radius_inner())
        .collect()
}

/// Runs one command, writing its artifacts and `report.txt` into `out`.
pub fn run_command(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<RunSummary, RunError> {
    fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut o = Output {
        dir: out,
        summary: RunSummary::default(),
    };
    match execute(cmd, cfg, &mut o) {
        Ok(()) => o.finish(cmd),
        Err(RunError::Toolkit(rte_tomo::Error::NonConvergence(report))) => {
            o.line("status", "non-convergence");
            o.line("spectral_radius_estimate", report.spectral_radius_estimate);
            o.line("iterations", report.iterations);
            if let Some(r) = report.residual_history.last() {
                o.line("final_residual", r);
            }
            o.finish(cmd)?;
            Err(RunError::Toolkit(rte_tomo::Error::NonConvergence(report)))
        }
        Err(e) => Err(e),
    }
}

fn execute(cmd: Command, cfg: &RunConfig, o: &mut Output) -> Result<(), RunError> {
    let m = build_model(cfg)?;
    let t = &m.transport;
    let spec = &cfg.cutoff;
    let grid = m.disc.grid;
    o.line("grid", format!("{}x{}", grid.nx, grid.ny));
    o.line("directions", m.disc.n_theta);
    o.line("boundary_angles", m.disc.n_bdry);
    match cmd {
        Command::Forward => {
            let sol = t.solve_forward(&m.source)?;
            let dth = m.disc.dtheta();
            let mut flux = Raster::zeros(grid);
            for q in 0..m.disc.n_theta {
                for (acc, v) in flux.data.iter_mut().zip(sol.u.direction(q)) {
                    *acc += v * dth;
                }
            }
            let trace = t.trace_plus(&sol.source)?;
            o.line(
                "spectral_radius_estimate",
                sol.report.spectral_radius_estimate,
            );
            o.line("iterations", sol.report.iterations);
            o.line("converged", sol.report.converged);
            o.line(
                "final_residual",
                sol.report.residual_history.last().copied().unwrap_or(0.0),
            );
            o.line("flux_l2", flux.l2_norm());
            o.line("trace_max", trace.max_abs());
            o.csv("flux", &flux)?;
            o.pgm("flux", &flux)?;
            let mut buf = Vec::new();
            io::write_boundary_csv(&mut buf, &trace)?;
            o.bytes("trace.csv", &buf)?;
        }
        Command::Measure => {
            let y = t.measure_xv(spec, &m.source)?;
            o.line("spectral_radius_estimate", t.spectral_radius());
            o.line("measurement_norm", y.norm());
            if t.kernel().is_empty() {
                let i = ray_transform(spec, t.sigma(), &m.geom, &m.disc, &m.source)?;
                let diff = y
                    .values
                    .iter()
                    .zip(&i.values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                o.line("ray_transform_max_difference", diff);
            }
            let mut buf = Vec::new();
            io::write_boundary_csv(&mut buf, &y)?;
            o.bytes("measurement.csv", &buf)?;
        }
        Command::Normal => {
            let split = normal_operator_full(t, spec, &m.source, cfg.normal_path)?;
            o.line(
                "normal_path",
                format!("{:?}", cfg.normal_path).to_lowercase(),
            );
            o.line("normal_norm", split.image.normal.l2_norm());
            o.line("ballistic_norm", split.ballistic.l2_norm());
            o.line("L_V remainder norm", split.remainder.l2_norm());
            o.csv("normal", &split.image.normal)?;
            o.pgm("normal", &split.image.normal)?;
            o.pgm("edge_strength", &split.image.edge_strength)?;
            o.csv("remainder", &split.remainder)?;
            if cfg.normal_path == NormalPath::Matrix {
                let (op, _) = OperatorMatrix::assemble(t, spec, &t.inner_pixels(), cfg.tol)?;
                o.bytes("operator.rteop", &op.to_bytes())?;
            }
        }
        Command::VisibleSet => {
            let vis = visible_mask(spec, &m.geom, grid, m.disc.n_theta)?;
            let inner = grid.pixels_in_disk(cfg.radius_inner).len();
            o.line("inner_pixels", inner);
            o.line("visible_pixels", vis.count());
            o.mask("visible", &vis)?;
            if spec.is_directionally_unrestricted() {
                let hull = convex_hull_mask(spec, &m.geom, grid)?.within_disk(cfg.radius_inner);
                let core = hull.eroded(2);
                o.line("hull_pixels", hull.count());
                o.line("hull_core_violations", core.violations_against(&vis).len());
                o.mask("hull", &hull)?;
            }
        }
        Command::Symbol => {
            let field = symbol_field(spec, t.sigma(), &m.geom, grid, cfg.n_xi, cfg.h_ray)?;
            let min = Raster::from_data(grid, field.min_over_covectors())?;
            let elliptic = field.elliptic_mask(&m.geom);
            o.line("covectors", cfg.n_xi);
            o.line("elliptic_pixels", elliptic.count());
            o.line(
                "symbol_max",
                field.values.iter().copied().fold(0.0, f64::max),
            );
            o.csv("symbol_min", &min)?;
            o.pgm("symbol_min", &min)?;
            o.mask("elliptic", &elliptic)?;
        }
        Command::Svd => {
            if grid.len() > 32 * 32 || m.disc.n_theta > 32 {
                return Err(rte_tomo::Error::Unsupported(format!(
                    "svd needs at most 32x32 pixels and 32 directions, got {}x{} and {}",
                    grid.nx, grid.ny, m.disc.n_theta
                ))
                .into());
            }
            let vis = visible_mask(spec, &m.geom, grid, m.disc.n_theta)?;
            let r = svd_injectivity(t, spec, &vis)?;
            o.line("spectral_radius_estimate", t.spectral_radius());
            o.line("visible_support_pixels", r.visible_pixels);
            o.line("invisible_support_pixels", r.invisible_pixels);
            o.line("sigma_min_visible", r.sigma_min_visible);
            o.line("sigma_min_invisible", r.sigma_min_invisible);
            o.line("ratio", r.ratio);
        }
        Command::Wavefront => {
            let edges = source_edges(cfg, &m.geom);
            let r = wavefront_image(t, spec, &m.source, &edges, cfg.normal_path, cfg.metric)?;
            o.line("edges", r.edges.len());
            o.line(
                "visible_edges",
                r.edges.iter().filter(|e| e.visible).count(),
            );
            let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
            o.line("median_visible_response", opt(r.median_visible()));
            o.line("min_visible_response", opt(r.min_visible()));
            o.line("max_invisible_response", opt(r.max_invisible()));
            o.line("invisible_ratio", opt(r.invisible_ratio()));
            o.pgm("normal", &r.image.normal)?;
            o.pgm("edge_strength", &r.image.edge_strength)?;
            let mut csv = String::from("x,y,normal_x,normal_y,visible,response\n");
            for e in &r.edges {
                csv.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
                    e.point.z.x,
                    e.point.z.y,
                    e.point.normal.x,
                    e.point.normal.y,
                    e.visible as u8,
                    e.response
                ));
            }
            o.bytes("edges.csv", csv.as_bytes())?;
        }
        Command::Smoothing => {
            let f = phantom::white_noise_field(grid, m.disc.n_theta, &m.geom, cfg.seed);
            let (before, after) = smoothing_diagnostic(t, &f)?;
            o.line("ratio_before", before);
            o.line("ratio_after", after);
            o.line("reduction", if before > 0.0 { after / before } else { 0.0 });
        }
    }
    Ok(())
}
