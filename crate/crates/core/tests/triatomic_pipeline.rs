use mlscape::explorer::{basin_hopping, connect_database, stationary_index, BasinHoppingConfig, ConnectConfig};
use mlscape::landscape::{build_disconnectivity_tree, DisconnectivityTree, LandscapeDatabase};
use mlscape::models::TriatomicModel;
use mlscape::numcore::{rms, Objective, ParamVector};

fn start() -> ParamVector {
    ParamVector::from_vec(vec![0.0, 0.0, 0.0, 1.2, 0.1, 0.0, 0.5, 1.0, 0.2])
}

#[test]
fn basin_hopping_then_connect() {
    let m = TriatomicModel::default();
    let mut db = LandscapeDatabase::new(m.metric());
    let t0 = std::time::Instant::now();
    let cfg = BasinHoppingConfig { n_steps: 500, seed: 1, ..Default::default() };
    let rep = basin_hopping(&m, &start(), &cfg, &mut db).unwrap();
    eprintln!("bh {:?} minima {} unconverged {}", t0.elapsed(), db.minima.len(), rep.n_unconverged);
    assert_eq!(db.minima.len(), 4);
    let gm = db.global_minimum().unwrap();
    assert!((gm.energy + 2.219).abs() < 1e-3);

    let t1 = std::time::Instant::now();
    let report = connect_database(&m, &mut db, &ConnectConfig::default()).unwrap();
    eprintln!("connect {:?} jobs {} ts {}", t1.elapsed(), report.jobs.len(), db.transition_states.len());
    for j in &report.jobs {
        eprintln!("{:?} {:?}", j.status, j.log);
    }
    assert!(report.connected);
    for ts in &db.transition_states {
        eprintln!("ts E={} pair {:?}", ts.energy, ts.min_pair);
        assert_eq!(stationary_index(&m, &ts.coords).unwrap(), 1);
        assert!(rms(&m.energy_gradient(&ts.coords).1) <= 1e-6);
    }
    let (lo, hi, d) = DisconnectivityTree::default_range(&db).unwrap();
    let tree = build_disconnectivity_tree(&db, lo, hi, d).unwrap();
    assert_eq!(tree.leaves.len(), 4);
    assert!(!tree.is_forest);
}
