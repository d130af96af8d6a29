use conncoord::config::{parse_config, EL_FIG2, SI_FIG1};
use conncoord::delay::{DelayProfile, History, ProfileKind};
use conncoord::output::{csv_header, parse_trajectory_csv, render_svg, to_csv_string};
use conncoord::simulator::run_scenario;
use conncoord::Error;
use proptest::prelude::*;

#[test]
fn csv_round_trips_every_sample() {
    let mut cfg = parse_config(SI_FIG1).unwrap().config;
    cfg.horizon = Some(0.5);
    let record = run_scenario(&cfg).unwrap();
    let text = to_csv_string(&record).unwrap();
    let table = parse_trajectory_csv(&text).unwrap();
    assert_eq!(table.columns, csv_header(&record));
    assert_eq!(table.columns[1], "x[1][1]");
    assert_eq!(table.columns[6], "u[1][1]");
    assert_eq!(table.columns.last().unwrap(), "d[4-5]");
    assert_eq!(table.rows.len(), record.samples.len());
    for (row, s) in table.rows.iter().zip(&record.samples) {
        assert_eq!(row[0], s.t);
        assert_eq!(&row[1..6], s.positions.as_slice());
        assert_eq!(row[table.column_index("V").unwrap()], s.lyapunov);
        assert_eq!(row[table.column_index("margin").unwrap()], s.margin);
    }
}

#[test]
fn svg_is_a_pure_function_of_the_csv() {
    let mut cfg = parse_config(EL_FIG2).unwrap().config;
    cfg.horizon = Some(0.2);
    let record = run_scenario(&cfg).unwrap();
    let text = to_csv_string(&record).unwrap();
    let a = render_svg(&parse_trajectory_csv(&text).unwrap());
    let b = render_svg(&parse_trajectory_csv(&text).unwrap());
    assert_eq!(a, b);
    // ten joint coordinates and ten links
    assert_eq!(a.matches("<polyline").count(), 20);
    assert!(!a.contains("qdot"));
    assert!(a.contains("stroke-dasharray"));
}

#[test]
fn resolved_config_round_trips() {
    for text in [SI_FIG1, EL_FIG2] {
        let parsed = parse_config(text).unwrap();
        let again = parse_config(&parsed.config.to_json()).unwrap();
        assert_eq!(again.config, parsed.config);
        assert!(again.defaults_applied.is_empty(), "{:?}", again.defaults_applied);
    }
}

#[test]
fn minimal_config_records_defaults() {
    let text = r#"{"network":"single-integrator","positions":[[0.0],[0.5]],"r":1,"epsilon":0.4,"q":0.2,
        "damping":[10,10],"delay":{"dbar":0.1}}"#;
    let parsed = parse_config(text).unwrap();
    for key in ["dim", "velocities", "rho", "p", "step", "horizon", "decimation", "seed", "gain_check"] {
        assert!(parsed.defaults_applied.iter().any(|k| k == key), "{key} missing from {:?}", parsed.defaults_applied);
    }
    assert_eq!(parsed.config.step(), 1e-3);
    assert_eq!(parsed.config.horizon(), 20.0);
}

#[test]
fn config_errors_name_the_key() {
    let bad = [
        (r#"{"network":"single-integrator","positions":[[0.0]],"r":1,"epsilon":0.4,"q":0.2,"damping":[1],"delay":{"dbar":0.1},"step":0}"#, "step"),
        (r#"{"network":"single-integrator","positions":[[0.0]],"r":1,"epsilon":0.4,"q":0.2,"damping":[1],"delay":{"dbar":0.1},"step":-1}"#, "step"),
        (r#"{"network":"single-integrator","positions":[[0.0]],"r":1,"epsilon":1.4,"q":0.2,"damping":[1],"delay":{"dbar":0.1}}"#, "epsilon"),
        (r#"{"network":"single-integrator","positions":[[0.0],[1.0]],"r":1,"epsilon":0.4,"q":0.2,"damping":[1,[1,2]],"delay":{"dbar":0.1}}"#, "damping[1]"),
        (r#"{"network":"robot","positions":[[0.0]],"r":1,"epsilon":0.4,"q":0.2,"damping":[1],"delay":{"dbar":0.1}}"#, "network"),
        (r#"{"network":"single-integrator","positions":[[0.0]],"r":1,"epsilon":0.4,"q":0.2,"damping":[1],"delay":{"dbar":0.1},"extra":1}"#, "extra"),
    ];
    for (text, key) in bad {
        match parse_config(text) {
            Err(Error::Config { path, .. }) => assert!(path.starts_with(key), "{path} vs {key}"),
            other => panic!("{key}: expected config error, got {other:?}"),
        }
    }
}

#[test]
fn held_pre_history_and_interpolation() {
    let mut h = History::new(1, 0.5);
    h.record(0.0, &[2.0]).unwrap();
    h.record(0.1, &[3.0]).unwrap();
    let mut out = [0.0];
    h.query(-0.3, &mut out).unwrap();
    assert_eq!(out, [2.0]);
    h.query(0.025, &mut out).unwrap();
    assert!((out[0] - 2.25).abs() < 1e-15);
    assert!(h.query(0.2, &mut out).is_err());
    let profile = DelayProfile::constant(0.1, 0.1).unwrap();
    h.query_delayed(0.1, &profile, &mut out).unwrap();
    assert_eq!(out, [2.0]);
}

#[test]
fn random_walk_channels_differ_but_replay() {
    let kind = ProfileKind::RandomWalk {
        step_std: 0.01,
        knot_spacing: 0.1,
    };
    let a = kind.realize(0.1, 0, 4, 5.0, 11).unwrap();
    let b = kind.realize(0.1, 1, 4, 5.0, 11).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, kind.realize(0.1, 0, 4, 5.0, 11).unwrap());
}

proptest! {
    #[test]
    fn history_reproduces_linear_signals(slope in -5.0f64..5.0, offset in -5.0f64..5.0, h in 1e-3f64..0.05, q in 0.0f64..1.0) {
        let mut hist = History::new(1, 0.3);
        let n = 200;
        for k in 0..=n {
            let t = k as f64 * h;
            hist.record(t, &[offset + slope * t]).unwrap();
        }
        let end = n as f64 * h;
        // stay after t = 0; earlier queries are held at the first sample
        let t = end - q * end.min(0.3);
        let mut out = [0.0];
        hist.query(t, &mut out).unwrap();
        prop_assert!((out[0] - (offset + slope * t)).abs() < 1e-9 * (1.0 + slope.abs() * end + offset.abs()));
    }

    #[test]
    fn profiles_stay_within_bounds(dbar in 0.0f64..1.0, f in 0.0f64..10.0, idx in 0usize..16, seed in any::<u64>(), t in 0.0f64..50.0) {
        for kind in [
            ProfileKind::Sinusoidal { frequency: f },
            ProfileKind::Constant { fraction: 0.3 },
            ProfileKind::RandomWalk { step_std: 0.05, knot_spacing: 0.2 },
        ] {
            let p = kind.realize(dbar, idx, 16, 40.0, seed).unwrap();
            let d = p.delay(t);
            prop_assert!((0.0..=dbar).contains(&d));
        }
    }
}
