use std::path::Path;
use std::process::{Command, Output};

use ehrenfest_core::chaos::{EhrenfestProbe, LyapunovSettings};
use ehrenfest_core::cli::{parse_args, Command as Sub, PacketSource, RunConfig};
use ehrenfest_core::ensemble::QuadratureScheme;
use ehrenfest_core::{IntegratorConfig, LorenzParams, Method, PhasePoint};
use proptest::prelude::*;

fn ehrenfest(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehrenfest"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_headers_match_the_format_contract() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    assert!(ehrenfest(&["trajectory", "--p0", "1,1,1", "--t-end", "1"], &t).status.success());
    assert_eq!(header(&t), "t,p1,p2,p3");
    let text = std::fs::read_to_string(&t).unwrap();
    assert_eq!(text.lines().count(), 102);
    assert!(!text.contains('\r'));
    assert!(text.lines().nth(1).unwrap().starts_with("0.0,1.0,1.0,1.0"));

    let e = dir.path().join("e.csv");
    assert!(ehrenfest(&["expect", "--center", "1,1,1", "--dirac", "--t-end", "0.5", "--dt-out", "0.25"], &e).status.success());
    assert_eq!(header(&e), "t,mean1,mean2,mean3,var1,var2,var3,se1,se2,se3");

    let s = dir.path().join("s.csv");
    let out = ehrenfest(
        &["scan", "--center", "1,1,1", "--widths", "1e-1,1e-2,1e-3", "--quadrature", "gh:3", "--horizon", "40", "--transient", "5", "--total-time", "50"],
        &s,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&s).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "width,ln_inv_width,t_ehrenfest,bounded");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        match fields[3] {
            "true" => assert!(fields[2].parse::<f64>().unwrap() > 0.0),
            "false" => assert_eq!(fields[2], ""),
            other => panic!("bounded column `{other}`"),
        }
    }
    let fit = dir.path().join("s_fit.csv");
    assert_eq!(header(&fit), "fitted_slope,lambda_max,slope_times_lambda");
    assert_eq!(std::fs::read_to_string(&fit).unwrap().lines().count(), 2);

    // only the artifacts remain, no temporary files
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["e.csv", "s.csv", "s_fit.csv", "t.csv"]);
}

#[test]
fn unbounded_rows_leave_the_time_empty() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let out = ehrenfest(&["ehrenfest", "--center", "1,1,1", "--width", "1e-3", "--delta", "1000", "--horizon", "5", "--quadrature", "gh:3"], &x);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&x).unwrap().lines().nth(1).unwrap(), "0.001,6.907755278982137,,false");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let code = |args: &[&str], target: &Path| ehrenfest(args, target).status.code().unwrap();

    assert_eq!(code(&["trajectory", "--p0", "1,1,1", "--t-end", "1", "--sigma", "-1"], &out), 2);
    assert_eq!(code(&["trajectory", "--p0", "1,1,1", "--t-end", "1", "--nope"], &out), 2);
    assert_eq!(code(&["trajectory", "--p0", "1,1,1", "--t-end", "50", "--max-steps", "10"], &out), 3);
    assert_eq!(
        code(&["scan", "--center", "1,1,1", "--widths", "1,0.5,0.1", "--delta", "1000", "--horizon", "2", "--quadrature", "gh:3"], &out),
        4
    );
    assert_eq!(code(&["trajectory", "--p0", "1,1,1", "--t-end", "1"], &dir.path().join("missing/o.csv")), 5);
    assert_eq!(code(&["expect", "--samples", "/definitely/not/here.csv", "--t-end", "1"], &out), 5);
    assert!(!out.exists());

    let stderr = String::from_utf8(ehrenfest(&["trajectory", "--p0", "1,1,1", "--t-end", "1", "--sigma", "-1"], &out).stderr).unwrap();
    assert!(stderr.contains("--sigma"));

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_ehrenfest"))
        .args(["trajectory", "--p0", "1,1,1", "--t-end", "1", "--out"])
        .arg(&out)
        .env("EHRENFEST_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(2));
}

#[test]
fn samples_file_feeds_the_average() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("pts.csv");
    std::fs::write(&samples, "p1,p2,p3\n1,1,1\n-1,-1,1\n").unwrap();
    let out = dir.path().join("e.csv");
    let run = ehrenfest(&["expect", "--samples", samples.to_str().unwrap(), "--t-end", "1", "--dt-out", "1"], &out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    // the two points are mirror images, so the first two mean components cancel
    let last: Vec<f64> = std::fs::read_to_string(&out).unwrap().lines().nth(2).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!(last[1].abs() < 1e-12 && last[2].abs() < 1e-12);
}

fn triple() -> impl Strategy<Value = PhasePoint> {
    prop::array::uniform3(-50.0f64..50.0).prop_map(PhasePoint)
}

fn positive() -> impl Strategy<Value = f64> {
    (-8.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

fn config() -> impl Strategy<Value = RunConfig> {
    let command = prop_oneof![
        (triple(), positive(), positive()).prop_map(|(p0, t_end, dt_out)| Sub::Trajectory { p0, t_end, dt_out }),
        (triple(), prop::array::uniform3(positive()), positive(), positive(), any::<bool>()).prop_map(|(center, widths, t_end, dt_out, dirac)| {
            let packet = if dirac { PacketSource::Dirac { center } } else { PacketSource::Gaussian { center, widths } };
            Sub::Expect { packet, t_end, dt_out }
        }),
        (triple(), 1.0f64..50.0, 60.0f64..500.0, positive()).prop_map(|(p0, transient, total_time, renorm_interval)| Sub::Lyapunov {
            p0,
            settings: LyapunovSettings { transient, total_time, renorm_interval },
        }),
        (triple(), positive(), positive(), positive()).prop_map(|(center, width, threshold, horizon)| Sub::Ehrenfest {
            center,
            width,
            probe: EhrenfestProbe { threshold, horizon, ..EhrenfestProbe::default() },
        }),
        (triple(), prop::collection::vec(positive(), 1..6)).prop_map(|(center, mut widths)| {
            widths.sort_by(|a, b| b.total_cmp(a));
            widths.dedup();
            Sub::Scan {
                center,
                widths,
                probe: EhrenfestProbe::default(),
                lyapunov: LyapunovSettings::default(),
                fit_out: "fit.csv".into(),
            }
        }),
    ];
    let params = (0.01f64..50.0, -100.0f64..100.0, 0.01f64..20.0).prop_map(|(s, t, b)| LorenzParams::new(s, t, b).unwrap());
    let integrator = (any::<bool>(), positive(), 1e-14f64..1e-3, 1e-300f64..1e-3, 1usize..100_000_000, positive()).prop_map(
        |(rk4, step, rel_tol, abs_tol, max_steps, min_step)| IntegratorConfig {
            method: if rk4 { Method::FixedRk4 } else { Method::AdaptiveDopri5 },
            step,
            rel_tol,
            abs_tol,
            max_steps,
            min_step: Some(min_step),
        },
    );
    let scheme = prop_oneof![
        (0usize..20).prop_map(|k| QuadratureScheme::GaussHermite { order: 2 * k + 1 }),
        (1usize..1_000_000).prop_map(|samples| QuadratureScheme::MonteCarlo { samples, seed: 0 }),
    ];
    (command, params, integrator, scheme, any::<u64>()).prop_map(|(command, params, integrator, scheme, seed)| {
        let scheme = match scheme {
            QuadratureScheme::MonteCarlo { samples, .. } => QuadratureScheme::MonteCarlo { samples, seed },
            gh => gh,
        };
        RunConfig { command, params, integrator, scheme, seed, out: "out.csv".into() }
    })
}

proptest! {
    #[test]
    fn flag_serialization_round_trips(cfg in config()) {
        let argv = std::iter::once("ehrenfest".to_string()).chain(cfg.to_args());
        let parsed = parse_args(argv).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}
