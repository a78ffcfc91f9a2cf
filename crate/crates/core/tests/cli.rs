use std::f64::consts::PI;
use std::process::{Command, Output};

use nilspec::spectra::{heisenberg_spectrum, SpectralTable};
use serde_json::Value;

fn nilspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nilspec")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = nilspec(&all);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn spectrum_csv_matches_the_library_table() {
    let o = nilspec(&["spectrum", "--group", "heisenberg:1", "--lambda-max", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let want = heisenberg_spectrum(1, 2000.0).unwrap();
    assert_eq!(text, want.to_csv_string());
    let back = SpectralTable::read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, want);
    assert!(text.lines().any(|l| l == "value,multiplicity,sector,k,a,mshell"));
    let values: Vec<f64> = back.lines.iter().map(|l| l.value).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    // independent count below 2000: toral 4π²(a²+b²), plus 4π|k|(2a+1)·2|k| per sign
    let mut n = 0u64;
    for a in -8i64..=8 {
        for b in -8i64..=8 {
            if 4.0 * PI * PI * ((a * a + b * b) as f64) <= 2000.0 {
                n += 1;
            }
        }
    }
    for k in 1u64..200 {
        for a in 0u64..200 {
            if 4.0 * PI * (k * (2 * a + 1)) as f64 <= 2000.0 {
                n += 2 * 2 * k;
            }
        }
    }
    assert_eq!(back.counting(2000.0).unwrap(), n);
}

#[test]
fn zero_cutoff_gives_one_zero_line() {
    for g in ["torus:2", "heisenberg:1", "power:2"] {
        let o = nilspec(&["spectrum", "--group", g, "--lambda-max", "0"]);
        let t = SpectralTable::read_csv(stdout(&o).as_bytes()).unwrap();
        assert_eq!(t.lines.len(), 1, "{g}");
        assert_eq!(t.lines[0].value, 0.0);
        assert_eq!(t.lines[0].multiplicity, 1);
    }
}

#[test]
fn spectrum_json_round_trips_and_records_the_run() {
    let v = json(&["spectrum", "--group", "torus:2", "--lambda-max", "500", "--seed", "7"]);
    assert_eq!(v["tool"], "nilspec");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["seed"], 7);
    assert!(v["wall_time_s"].as_f64().unwrap() >= 0.0);
    let t: SpectralTable = serde_json::from_value(v["result"].clone()).unwrap();
    assert_eq!(t, nilspec::spectra::torus_spectrum(2, 500.0).unwrap());
}

#[test]
fn weyl_torus_and_power_runs() {
    let v = json(&["weyl", "--group", "torus:2"]);
    let c1 = v["result"]["fit"]["fitted_constant"].as_f64().unwrap();
    assert!((c1 * 4.0 * PI - 1.0).abs() < 0.02, "{c1}");

    let v = json(&["weyl", "--group", "power:2"]);
    let p = v["result"]["fit"]["fitted_exponent"].as_f64().unwrap();
    assert!((p - 0.5).abs() < 0.02, "{p}");

    let v = json(&["weyl", "--group", "heisenberg:1"]);
    let d = &v["result"]["discrepancy"];
    let gap = (d["series_c1"].as_f64().unwrap() - 1.0 / (256.0 * PI * PI)).abs();
    assert!(gap <= d["series_error_bound"].as_f64().unwrap(), "{gap}");
    assert!(v["notes"].as_array().unwrap().len() >= 3);
}

#[test]
fn weyl_without_a_grid_is_a_usage_error() {
    assert_eq!(nilspec(&["weyl", "--points", "0"]).status.code(), Some(1));
    assert_eq!(nilspec(&["weyl", "--lambda-min", "5000", "--lambda-max", "100"]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    // N_t not a multiple of 2 N_x
    assert_eq!(nilspec(&["eig", "--grid", "8x8x8"]).status.code(), Some(1));
    assert_eq!(nilspec(&["eig", "--group", "step3:engel"]).status.code(), Some(2));
    let o = nilspec(&["eig", "--grid", "16x16x32", "--count", "20", "--max-iter", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no convergence"));
    assert_eq!(nilspec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(nilspec(&["spectrum", "--group", "sphere:2"]).status.code(), Some(1));
    assert_eq!(nilspec(&["--version"]).status.code(), Some(0));
}

#[test]
fn eig_csv_and_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let vec_dir = dir.path().join("vecs");
    let o = nilspec(&["eig", "--grid", "12x12x24", "--count", "3", "--vectors", vec_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,residual,cluster_id"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][0].abs() < 1e-10 && rows[0][1] <= 1e-9);
    let bin = std::fs::read(vec_dir.join("eigenvector_000.bin")).unwrap();
    assert_eq!(bin.len(), 12 * 12 * 24 * 8);
    assert!(vec_dir.join("eigenvector.json").exists());
}

#[test]
fn qvar_exponential_is_zero_and_mixed_is_not() {
    let o = nilspec(&["qvar", "--basis", "exponential"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,N,variance,offset"));
    let mut n = 0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
        n += 1;
    }
    assert_eq!(n, 4);
    let v = json(&["qvar", "--basis", "mixed", "--eps", "0.1,0.05", "--delta", "0.1", "--seed", "3"]);
    let vars = v["result"]["variance"]["variances"].as_array().unwrap();
    assert!(vars.iter().all(|x| x.as_f64().unwrap() > 0.0));
    assert_eq!(v["result"]["density"]["delta"].as_f64(), Some(0.1));
}

#[test]
fn scdemo_commutator_passes() {
    let o = nilspec(&["scdemo", "--check", "commutator"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text.lines().find(|l| l.contains("commutator")).unwrap();
    assert!(line.starts_with("PASS"));
    let value: f64 = line.split('=').nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(value <= 1e-12);
}

#[test]
fn scdemo_reads_symbol_files_and_reports_parse_lines() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("a.sym");
    std::fs::write(&good, "dim 2\nmode 0 0 profile=gaussian(0,1)\nmode 1 1 coef=0.5 profile=gaussian(0.2,0.9)\n").unwrap();
    let v = json(&["scdemo", "--check", "hs", "--eps", "0.5", "--symbol", good.to_str().unwrap()]);
    assert_eq!(v["result"]["checks"][0]["passed"], true);

    let bad = dir.path().join("b.sym");
    std::fs::write(&bad, "dim 2\n\nmode 0 0 profile=gaussian(0)\n").unwrap();
    let o = nilspec(&["scdemo", "--symbol", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\n[spectrum]\ngroup = \"torus:1\"\nlambda-max = 400.0\n").unwrap();
    let c = cfg.to_str().unwrap();
    let v = json(&["--config", c, "spectrum"]);
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["result"]["manifold"], "torus:1");
    assert_eq!(v["result"]["lambda_max"].as_f64(), Some(400.0));
    let v = json(&["--config", c, "spectrum", "--lambda-max", "100", "--seed", "2"]);
    assert_eq!(v["result"]["lambda_max"].as_f64(), Some(100.0));
    assert_eq!(v["config"]["seed"], 2);
}

#[test]
fn out_file_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plots/count.svg");
    let o = nilspec(&["spectrum", "--lambda-max", "300", "--format", "svg", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let svg = std::fs::read_to_string(&path).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("</svg>"));
}

#[test]
fn single_thread_runs_are_reproducible() {
    let args = ["qvar", "--basis", "mixed", "--eps", "0.1,0.05", "--threads", "1", "--seed", "5"];
    assert_eq!(stdout(&nilspec(&args)), stdout(&nilspec(&args)));
    let args = ["eig", "--grid", "12x12x24", "--count", "4", "--threads", "1"];
    assert_eq!(stdout(&nilspec(&args)), stdout(&nilspec(&args)));
}

#[test]
fn eig_count_stops_at_the_requested_values() {
    // used to keep locking far-away eigenvalues until the budget ran out
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eig.toml");
    std::fs::write(&cfg, "seed = 11\n\n[eig]\ngrid = \"12x12x24\"\ncount = 5\ntol = 1e-10\n").unwrap();
    let o = nilspec(&["--config", cfg.to_str().unwrap(), "eig"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 6);
}
