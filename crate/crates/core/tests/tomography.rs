use rte_tomo::coefficients::{AbsorptionField, ScatteringKernel};
use rte_tomo::geometry::{visible_mask, CutoffSpec, DiskGeometry, Vec2};
use rte_tomo::phantom;
use rte_tomo::tomography::{
    normal_operator_full, point_source_pairing, ray_transform, svd_injectivity, wavefront_image,
    EdgeMetric, NormalPath, OperatorMatrix,
};
use rte_tomo::transport::{Discretization, SolverSettings, Transport};

fn model(n: usize, n_theta: usize, n_bdry: usize, rho: Option<f64>) -> Transport {
    let geom = DiskGeometry::new(0.8, 1.0).unwrap();
    let disc = Discretization::new(&geom, n, n, n_theta, n_bdry).unwrap();
    let sigma = AbsorptionField::constant(disc.grid, &geom, 0.3).unwrap();
    let mut t = Transport::new(
        geom,
        disc,
        sigma,
        ScatteringKernel::isotropic(disc.grid, &geom, 1.0),
    )
    .unwrap()
    .with_settings(SolverSettings {
        tol: 1e-14,
        ..SolverSettings::default()
    })
    .unwrap();
    let kernel = match rho {
        Some(r) => t.kernel_scaled_to_radius(r).unwrap(),
        None => ScatteringKernel::none(&geom),
    };
    t = t.with_kernel(kernel).unwrap();
    t
}

#[test]
fn ballistic_model_has_no_remainder() {
    let t = model(20, 16, 64, None);
    let f = phantom::disk(t.discretization().grid, Vec2::new(0.1, 0.1), 0.3, 1.0);
    let split =
        normal_operator_full(&t, &CutoffSpec::half_circle(0.3), &f, NormalPath::Iterative).unwrap();
    assert_eq!(split.remainder.max_abs(), 0.0);
    assert!(split.image.normal.l2_norm() > 0.0);
}

#[test]
fn normal_paths_and_pairing_agree() {
    let t = model(16, 16, 48, Some(0.4));
    let spec = CutoffSpec::half_circle(0.3);
    let grid = t.discretization().grid;
    let f = phantom::gaussian(grid, Vec2::new(-0.1, 0.2), 0.25, 1.0).mask_disk(0.8);
    let a = normal_operator_full(&t, &spec, &f, NormalPath::Matrix).unwrap();
    let b = normal_operator_full(&t, &spec, &f, NormalPath::Iterative).unwrap();
    let n = &b.image.normal;
    assert!(a.image.normal.sub(n).l2_norm() <= 1e-10 * n.l2_norm());
    assert!(a.remainder.sub(&b.remainder).l2_norm() <= 1e-10 * b.remainder.l2_norm());
    let z = grid.index(10, 8);
    let p = point_source_pairing(&t, &spec, &f, z, 1e-14).unwrap();
    assert!((p - n.data[z]).abs() <= 1e-10 * p.abs());
}

#[test]
fn operator_file_round_trip_preserves_action() {
    let t = model(12, 8, 32, Some(0.3));
    let spec = CutoffSpec::half_circle(0.3);
    let (m, _) = OperatorMatrix::assemble(&t, &spec, &t.inner_pixels(), 1e-14).unwrap();
    let back = OperatorMatrix::read_from(&m.to_bytes()[..]).unwrap();
    let x: Vec<f64> = (0..m.cols).map(|i| (i as f64 * 0.37).sin()).collect();
    assert_eq!(back.apply(&x), m.apply(&x));
}

#[test]
fn ballistic_measurement_is_the_ray_transform() {
    let t = model(24, 16, 64, None);
    let disc = *t.discretization();
    let spec = CutoffSpec::half_circle(0.2);
    let f = phantom::disk(disc.grid, Vec2::new(0.0, -0.2), 0.35, 2.0);
    let x = t.measure_xv(&spec, &f).unwrap();
    let i = ray_transform(&spec, t.sigma(), t.geometry(), &disc, &f).unwrap();
    for (a, b) in x.values.iter().zip(&i.values) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-6));
    }
}

#[test]
fn visible_support_is_better_conditioned() {
    let t = model(16, 16, 64, Some(0.3));
    let spec = CutoffSpec::half_circle(0.3);
    let vis = visible_mask(&spec, t.geometry(), t.discretization().grid, 16).unwrap();
    let r = svd_injectivity(&t, &spec, &vis).unwrap();
    assert!(r.visible_pixels > 0 && r.invisible_pixels > 0);
    assert!(r.sigma_min_visible > r.sigma_min_invisible);
}

#[test]
fn invisible_edges_respond_weakly_without_scattering() {
    let t = model(48, 32, 160, None);
    let grid = t.discretization().grid;
    let c = Vec2::new(0.0, 0.0);
    let f = phantom::disk(grid, c, 0.5, 1.0);
    let edges = phantom::disk_edge_points(c, 0.5, 1.0, 16);
    let r = wavefront_image(
        &t,
        &CutoffSpec::half_circle(0.3),
        &f,
        &edges,
        NormalPath::Iterative,
        EdgeMetric::Detrended,
    )
    .unwrap();
    assert!(r.edges.iter().any(|e| e.visible) && r.edges.iter().any(|e| !e.visible));
    assert!(
        r.invisible_ratio().unwrap() < 0.3,
        "{:?}",
        r.invisible_ratio()
    );
}
