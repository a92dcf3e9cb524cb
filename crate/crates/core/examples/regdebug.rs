use joey_core::features::{extract_features, FeatureParams};
use joey_core::geom::{Pose, Vec3};
use joey_core::grid::{CellState, VoxelGrid};
use joey_core::mapstore::UnifiedMap;
use joey_core::registration::{register_scan, RegistrationParams};
use joey_core::sensing::{raycast_scan, SensorSpec};

fn main() {
    let mut g = VoxelGrid::new(Vec3::zeros(), 0.25, [72, 48, 14], CellState::Free).unwrap();
    g.fill_shell(CellState::Occupied);
    g.fill_box(&Vec3::new(7.0, 0.25, 0.25), &Vec3::new(7.5, 8.0, 3.25), CellState::Occupied);
    g.fill_box(&Vec3::new(12.0, 5.0, 0.25), &Vec3::new(17.5, 5.5, 3.25), CellState::Occupied);
    let world = g;
    let sensor = SensorSpec::new(360.0, 30.0, 16.0, 180, 12).unwrap();
    let mut map = UnifiedMap::new(10.0, 0.25, Vec3::zeros(), 0);
    for pose in [Pose::at(3.0, 3.0, 1.375, 0.0), Pose::at(10.0, 8.0, 1.375, 2.2), Pose::at(14.0, 2.5, 1.375, -1.0)] {
        let scan = raycast_scan(&world, &pose, &sensor).unwrap();
        map.insert_points(&extract_features(&scan, &pose, &FeatureParams::default()));
    }
    let mut rng_state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    let anchors = [(3.0, 3.0), (5.2, 2.5), (9.0, 3.5), (10.5, 8.0), (14.0, 2.5)];
    for t in 0..20 {
        let (ax, ay) = anchors[t % anchors.len()];
        let truth = Pose::at(ax, ay + (t % 3) as f64 * 0.8, 1.375, next() * 2.0 - 1.0);
        let scan = raycast_scan(&world, &truth, &sensor).unwrap();
        let init = Pose::new(
            truth.position + Vec3::new((next() * 2.0 - 1.0) * 0.3, (next() * 2.0 - 1.0) * 0.3, (next() * 2.0 - 1.0) * 0.1),
            truth.yaw + (next() * 2.0 - 1.0) * 5.0f64.to_radians(),
        );
        let res = register_scan(&scan, &map, &init, &RegistrationParams::default());
        let pos_err = (res.pose.position - truth.position).norm();
        let yaw_err = (res.pose.yaw - truth.yaw).abs();
        let ok = res.converged && pos_err < 0.05 && yaw_err < 1.0f64.to_radians();
        if !ok {
            let init_err = (init.position - truth.position).norm();
            println!("t={t} truth=({:.2},{:.2}) yaw={:.2} conv={} fail={:?} iters={} res={:.4} pos_err={:.4} yaw_err={:.4} init_err={:.3} hist={:?}",
                truth.position.x, truth.position.y, truth.yaw, res.converged, res.failure, res.iterations_used, res.residual, pos_err, yaw_err, init_err,
                res.residual_history.iter().map(|r| (r*1000.0).round()/1000.0).collect::<Vec<_>>());
        }
    }
}
