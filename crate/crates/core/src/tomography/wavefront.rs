use crate::error::{Error, Result};
use crate::geometry::{microvisible, CutoffSpec, Vec2};
use crate::raster::Raster;
use crate::transport::Transport;

use super::normal::{normal_operator_full, NormalPath, WavefrontImage};

/// A labeled point of a phantom edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgePoint {
    pub z: Vec2,
    /// Unit normal to the edge.
    pub normal: Vec2,
    /// Height of the jump of `f` across the edge.
    pub jump: f64,
}

/// How the response of `N` across an edge is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMetric {
    /// `|N(z + 1.5h xi) - N(z - 1.5h xi)| / jump`.
    Difference,
    /// The same difference minus a third of the one at three times the
    /// offset. Linear trends cancel exactly, smooth ones to third order, so
    /// only non-smooth behaviour at `z` survives.
    Detrended,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeResponse {
    pub point: EdgePoint,
    pub response: f64,
    pub visible: bool,
}

#[derive(Clone, Debug)]
pub struct WavefrontReport {
    pub image: WavefrontImage,
    pub edges: Vec<EdgeResponse>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

impl WavefrontReport {
    fn responses(&self, visible: bool) -> Vec<f64> {
        self.edges
            .iter()
            .filter(|e| e.visible == visible)
            .map(|e| e.response)
            .collect()
    }

    pub fn median_visible(&self) -> Option<f64> {
        median(self.responses(true))
    }

    pub fn min_visible(&self) -> Option<f64> {
        self.responses(true).into_iter().reduce(f64::min)
    }

    pub fn max_invisible(&self) -> Option<f64> {
        self.responses(false).into_iter().reduce(f64::max)
    }

    /// Largest invisible response over the median visible one.
    pub fn invisible_ratio(&self) -> Option<f64> {
        Some(self.max_invisible()? / self.median_visible()?)
    }
}

/// Response of `n` across one edge, with `h` the pixel size.
pub fn edge_response(n: &Raster, e: &EdgePoint, metric: EdgeMetric) -> f64 {
    let h = n.grid.pixel_size();
    let diff = |a: f64| n.sample(e.z + e.normal * a) - n.sample(e.z - e.normal * a);
    let d = match metric {
        EdgeMetric::Difference => diff(1.5 * h),
        EdgeMetric::Detrended => diff(1.5 * h) - diff(4.5 * h) / 3.0,
    };
    d.abs() / e.jump.abs()
}

/// `N = X_V^* X_V f` and the response of `N` at each labeled edge, grouped by
/// microlocal visibility of `(z, normal)`.
pub fn wavefront_image(
    transport: &Transport,
    spec: &CutoffSpec,
    f: &Raster,
    edges: &[EdgePoint],
    path: NormalPath,
    metric: EdgeMetric,
) -> Result<WavefrontReport> {
    let geom = transport.geometry();
    for e in edges {
        if e.jump == 0.0 || (e.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "edge points need a unit normal and a nonzero jump".into(),
            ));
        }
    }
    let split = normal_operator_full(transport, spec, f, path)?;
    let image = split.image;
    let edges = edges
        .iter()
        .map(|e| {
            Ok(EdgeResponse {
                point: *e,
                response: edge_response(&image.normal, e, metric),
                visible: microvisible(spec, geom, e.z, e.normal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WavefrontReport { image, edges })
}
