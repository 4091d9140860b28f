use scenealign::anchor::{build_anchor_db, AnchorDatabase};
use scenealign::geometry::{Point2, Trajectory};
use scenealign::Scene;

/// History along +x ending at `start`; future straight along `dir` at `speed`.
fn walker(id: usize, start: Point2, dir: Point2, speed: f64) -> Scene {
    let dt = 0.4;
    let hist: Vec<Point2> = (0..8).map(|t| start.add(&Point2::new((t as f64 - 7.0) * 0.5, 0.0))).collect();
    let fut: Vec<Point2> = (1..=12).map(|t| start.add(&dir.scale(speed * dt * t as f64))).collect();
    Scene::new(
        format!("w{id}"),
        vec![0],
        vec![Trajectory::new(hist, dt).unwrap()],
        Some(vec![Trajectory::new(fut, dt).unwrap()]),
        None,
    )
    .unwrap()
}

fn directions() -> [Point2; 4] {
    [Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), Point2::new(-1.0, 0.0), Point2::new(0.0, -1.0)]
}

#[test]
fn four_directions_give_four_directional_anchors() {
    let speeds = [0.96, 1.0, 1.02, 1.06];
    let mut scenes = Vec::new();
    for (d, dir) in directions().iter().enumerate() {
        for (s, &speed) in speeds.iter().enumerate() {
            let start = Point2::new(d as f64 * 10.0, s as f64 * -3.0);
            scenes.push(walker(scenes.len(), start, *dir, speed));
        }
    }
    // Every seed, not a lucky one: clusters are well separated.
    for seed in 0..10 {
        let db = build_anchor_db(&scenes, 4, 4, seed).unwrap();
        assert_eq!(db.len(), 4);
        check_directions(&db, &speeds);
    }
}

fn check_directions(db: &AnchorDatabase, speeds: &[f64]) {

    // Oracle: mean agent-frame future of each direction group.
    let mean_speed = speeds.iter().sum::<f64>() / speeds.len() as f64;
    for dir in directions() {
        let oracle: Vec<Point2> = (1..=12).map(|t| dir.scale(mean_speed * 0.4 * t as f64)).collect();
        let hit = db.anchors.iter().any(|a| {
            a.points().iter().zip(&oracle).all(|(p, q)| p.distance(q) < 1e-9)
        });
        assert!(hit, "no anchor for direction {dir:?}");
    }
}

#[test]
fn saved_database_reloads_identically() {
    let scenes: Vec<Scene> = (0..12)
        .map(|i| walker(i, Point2::new(i as f64, 0.0), directions()[i % 4], 1.0 + 0.01 * i as f64))
        .collect();
    let db = build_anchor_db(&scenes, 4, 3, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("anchors.json");
    db.save(&path).unwrap();
    let back = AnchorDatabase::load(&path).unwrap();
    assert_eq!(back, db);
    for (a, b) in back.anchors.iter().zip(&db.anchors) {
        assert_eq!(a.flatten(), b.flatten());
    }
}
