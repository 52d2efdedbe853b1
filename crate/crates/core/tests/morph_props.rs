mod common;

use common::{random_orthonormal, rng};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::Rng;
use romkit_core::morph::{self, FfdLattice, PointCloud, TriMesh};
use romkit_core::Matrix;

const AXES: [[f64; 3]; 3] = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]];
const ORIGIN: [f64; 3] = [-1.0, 0.5, 0.0];

fn interior_cloud(seed: u64, count: usize) -> PointCloud {
    let mut g = rng(seed);
    let pts: Vec<[f64; 3]> = (0..count)
        .map(|_| {
            let s: [f64; 3] = [g.gen_range(0.0..1.0), g.gen_range(0.0..1.0), g.gen_range(0.0..1.0)];
            [0, 1, 2].map(|d| ORIGIN[d] + (0..3).map(|a| s[a] * AXES[a][d]).sum::<f64>())
        })
        .collect();
    PointCloud::from_points(&pts).unwrap()
}

fn random_lattice(g: &mut impl Rng, dims: [usize; 3], interior_only: bool) -> FfdLattice {
    let mut lat = FfdLattice::new(ORIGIN, AXES, dims).unwrap();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let edge = [i, j, k].iter().zip(&dims).any(|(&c, &n)| c == 0 || c == n - 1);
                if interior_only && edge {
                    continue;
                }
                let d = [g.gen_range(-0.2..0.2), g.gen_range(-0.2..0.2), g.gen_range(-0.2..0.2)];
                lat.set_displacement(i, j, k, d).unwrap();
            }
        }
    }
    lat
}

#[test]
fn ffd_zero_displacement_is_identity() {
    let cloud = interior_cloud(1, 1000);
    let lat = FfdLattice::new(ORIGIN, AXES, [4, 3, 5]).unwrap();
    let out = morph::ffd_deform(&lat, &cloud).unwrap();
    assert_eq!(out.points(), cloud.points());
}

#[test]
fn ffd_uniform_displacement_translates() {
    let cloud = interior_cloud(2, 1000);
    let mut lat = FfdLattice::new(ORIGIN, AXES, [3, 4, 3]).unwrap();
    let t = [0.3, -1.25, 0.07];
    for k in 0..3 {
        for j in 0..4 {
            for i in 0..3 {
                lat.set_displacement(i, j, k, t).unwrap();
            }
        }
    }
    let out = morph::ffd_deform(&lat, &cloud).unwrap();
    let shift = Vector3::from(t);
    for j in 0..cloud.len() {
        assert!((out.point(j) - cloud.point(j) - shift).amax() <= 1e-12);
    }
}

#[test]
fn ffd_single_corner_hand_value() {
    // unit cube, 2×2×2 lattice, only (1,1,1) displaced by e_x: B₁¹(½)³ = 1/8
    let mut lat = FfdLattice::new([0.0; 3], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [2, 2, 2]).unwrap();
    lat.set_displacement(1, 1, 1, [1.0, 0.0, 0.0]).unwrap();
    let p = lat.deform_point(Vector3::new(0.5, 0.5, 0.5));
    assert!((p - Vector3::new(0.625, 0.5, 0.5)).amax() <= 1e-15);
}

#[test]
fn ffd_is_local() {
    let mut g = rng(3);
    let lat = random_lattice(&mut g, [4, 4, 4], false);
    let outside: Vec<[f64; 3]> = (0..1000)
        .map(|i| {
            let mut p: [f64; 3] = [g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0)];
            // push every point past one face of the box
            match i % 3 {
                0 => p[0] = if p[0] < 0.0 { -1.0 - 1e-9 - p[0].abs() } else { 1.0 + 1e-9 + p[0] },
                1 => p[1] = if p[1] < 0.0 { 0.5 - 1e-9 - p[1].abs() } else { 1.5 + 1e-9 + p[1] },
                _ => p[2] = if p[2] < 0.0 { -1e-9 - p[2].abs() } else { 0.5 + 1e-9 + p[2] },
            }
            p
        })
        .collect();
    let cloud = PointCloud::from_points(&outside).unwrap();
    let out = morph::ffd_deform(&lat, &cloud).unwrap();
    assert_eq!(out.points(), cloud.points());
}

#[test]
fn ffd_runs_fast_on_1000_points() {
    let mut g = rng(4);
    let lat = random_lattice(&mut g, [5, 5, 5], true);
    let cloud = interior_cloud(5, 1000);
    let start = std::time::Instant::now();
    morph::ffd_deform(&lat, &cloud).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jacobian_matches_finite_differences(seed in any::<u64>()) {
        let mut g = rng(seed);
        let lat = random_lattice(&mut g, [4, 3, 3], false);
        let s = [g.gen_range(0.1..0.9), g.gen_range(0.1..0.9), g.gen_range(0.1..0.9)];
        let x = Vector3::from_fn(|d, _| ORIGIN[d] + (0..3).map(|a| s[a] * AXES[a][d]).sum::<f64>());
        let analytic = lat.jacobian(x);
        let h = 1e-6;
        let mut fd = Matrix3::zeros();
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            fd.set_column(c, &((lat.deform_point(x + e) - lat.deform_point(x - e)) / (2.0 * h)));
        }
        prop_assert!((analytic - fd).amax() <= 1e-6);
    }

    #[test]
    fn idw_weights_sum_to_one(seed in any::<u64>(), power in 0.5f64..4.0) {
        // uniform control displacements are reproduced iff the weights sum to one
        let mut g = rng(seed);
        let controls = PointCloud::new(Matrix::from_fn(3, 7, |_, _| g.gen_range(-1.0..1.0))).unwrap();
        let d = [g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0)];
        let disp = Matrix::from_fn(3, 7, |i, _| d[i]);
        let cloud = PointCloud::new(Matrix::from_fn(3, 50, |_, _| g.gen_range(-2.0..2.0))).unwrap();
        let out = morph::idw_deform(&controls, &disp, &cloud, power).unwrap();
        for j in 0..cloud.len() {
            prop_assert!((out.point(j) - cloud.point(j) - Vector3::from(d)).amax() <= 1e-12);
        }
    }

    #[test]
    fn idw_rotation_covariance(seed in any::<u64>()) {
        let mut g = rng(seed);
        let q = random_orthonormal(&mut g, 3, 3);
        let controls = Matrix::from_fn(3, 6, |_, _| g.gen_range(-1.0..1.0));
        let disp = Matrix::from_fn(3, 6, |_, _| g.gen_range(-0.3..0.3));
        let pts = Matrix::from_fn(3, 40, |_, _| g.gen_range(-2.0..2.0));
        let base = morph::idw_deform(
            &PointCloud::new(controls.clone()).unwrap(),
            &disp,
            &PointCloud::new(pts.clone()).unwrap(),
            2.0,
        )
        .unwrap();
        let rotated = morph::idw_deform(
            &PointCloud::new(&q * &controls).unwrap(),
            &(&q * &disp),
            &PointCloud::new(&q * &pts).unwrap(),
            2.0,
        )
        .unwrap();
        prop_assert!((rotated.points() - &q * base.points()).amax() <= 1e-12);
    }

    #[test]
    fn stl_round_trip(seed in any::<u64>(), tris in 1usize..20) {
        let mut g = rng(seed);
        let pts = Matrix::from_fn(3, tris * 3, |_, _| g.gen_range(-1e3..1e3) * 10f64.powi(g.gen_range(-6..3)));
        let triangles: Vec<[usize; 3]> = (0..tris).map(|t| [3 * t, 3 * t + 1, 3 * t + 2]).collect();
        let mesh = TriMesh::new(PointCloud::new(pts).unwrap(), triangles, "part").unwrap();
        let back = TriMesh::parse_stl(mesh.to_stl().as_bytes(), "mem.stl").unwrap();
        prop_assert_eq!(&back.triangles, &mesh.triangles);
        prop_assert_eq!(&back.name, &mesh.name);
        let err = (back.vertices.points() - mesh.vertices.points()).amax();
        prop_assert!(err <= 1e-12 * mesh.vertices.points().amax().max(1.0));
    }
}

#[test]
fn stl_file_round_trip_with_weld() {
    // two triangles sharing an edge
    let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
    let mesh = TriMesh::new(PointCloud::from_points(&pts).unwrap(), vec![[0, 1, 2], [3, 4, 5]], "quad").unwrap();
    let welded = mesh.weld(morph::WELD_TOL).unwrap();
    assert_eq!(welded.vertices.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("quad.stl");
    welded.write_stl(&path).unwrap();
    let back = TriMesh::read_stl(&path).unwrap().weld(morph::WELD_TOL).unwrap();
    assert_eq!(back.triangles, welded.triangles);
    assert_eq!(back.vertices.points(), welded.vertices.points());
}
