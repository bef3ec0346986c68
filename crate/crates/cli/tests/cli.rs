use std::process::{Command, Output};

fn qpart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpart"))
        .args(args)
        .env_remove("QPART_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn calibrate_reports_cutoffs() {
    let o = qpart(&["calibrate", "--q", "1", "--N", "1e6", "--M", "100", "--method", "crude", "--delta", "0.1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["cutoffs"]["L"], 68_555);
    assert!((v["z2"].as_f64().unwrap() - 0.01).abs() < 1e-15);
    assert!((v["kappa"].as_f64().unwrap() - 0.01).abs() < 1e-15);

    let o = qpart(&["calibrate", "--q", "2", "--N", "12500", "--M", "5"]);
    let text = stdout(&o);
    assert!(text.contains("method   exact"), "{text}");
    assert!(text.contains("E[N]     12500.000000"), "{text}");
}

#[test]
fn calibrate_refuses_large_kappa() {
    let o = qpart(&["calibrate", "--q", "2", "--N", "100", "--M", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa"));
}

#[test]
fn sample_csv_layout() {
    let o = qpart(&["sample", "--q", "2", "--N", "12500", "--M", "5", "--count", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "index,N,M,lmax,lmin,parts\n");

    let o = qpart(&["sample", "--q", "2", "--N", "12500", "--M", "5", "--count", "200", "--seed", "8"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 200);
    for (i, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 6);
        assert_eq!(f[0], i.to_string());
        let parts: Vec<u64> = if f[5].is_empty() { vec![] } else { f[5].split(';').map(|s| s.parse().unwrap()).collect() };
        assert_eq!(parts.iter().sum::<u64>().to_string(), f[1]);
        assert_eq!(parts.len().to_string(), f[2]);
        assert!(parts.windows(2).all(|w| w[0] > w[1]));
        assert!(parts.iter().all(|&p| ((p as f64).sqrt().round() as u64).pow(2) == p));
        if parts.is_empty() {
            assert_eq!(*row, format!("{i},0,0,0,,"));
        }
    }
}

#[test]
fn sample_reruns_are_byte_identical() {
    let args = ["sample", "--q", "1", "--N", "1e5", "--M", "10", "--count", "300", "--seed", "21"];
    let a = qpart(&args);
    let b = qpart(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_qpart"))
        .args(&args[..9])
        .env("QPART_SEED", "21")
        .output()
        .unwrap();
    assert_eq!(a.stdout, env.stdout);
    let other = qpart(&["sample", "--q", "1", "--N", "1e5", "--M", "10", "--count", "300", "--seed", "22"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn reject_exact_targets() {
    let o = qpart(&["reject", "--q", "2", "--n", "5", "--m", "2", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["verdict"], "sampled");
    assert_eq!(v["partition"], serde_json::json!([4, 1]));

    let o = qpart(&["reject", "--q", "2", "--n", "3", "--m", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    assert_eq!(v["verdict"], "void");
    assert!(v["partition"].is_null());
}

#[test]
fn reject_infers_approximate_task() {
    let o = qpart(&["reject", "--q", "1", "--n", "2500", "--m", "5", "--theta", "1.1", "--seed", "3"]);
    let v = json(&o);
    assert_eq!(v["t_star"], 27);
    if v["verdict"] == "sampled" {
        let parts: Vec<u64> = serde_json::from_value(v["partition"].clone()).unwrap();
        let n: u64 = parts.iter().sum();
        assert!((2500..=2750).contains(&n));
        assert_eq!(parts.len(), 5);
    }
}

#[test]
fn reject_multiple_exact_hits() {
    let o = qpart(&["reject", "--q", "1", "--n", "40", "--m", "3", "--theta", "1.1", "--task", "t2"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    for h in v["hits"].as_array().unwrap() {
        let parts: Vec<u64> = serde_json::from_value(h["partition"].clone()).unwrap();
        assert_eq!(parts.iter().sum::<u64>(), h["n"].as_u64().unwrap());
    }
}

#[test]
fn enumerate_lists_and_tabulates() {
    let o = qpart(&["enumerate", "--q", "1", "--n", "12", "--m", "3"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("index,parts\n0,9;2;1\n"));

    let o = qpart(&["enumerate", "--q", "2", "--n", "25", "--m", "2", "--format", "json"]);
    let v = json(&o);
    assert_eq!(v["count"], 1);
    assert_eq!(v["partitions"][0], serde_json::json!([16, 9]));

    let o = qpart(&["enumerate", "--q", "1", "--n", "200", "--m", "3", "--count-only"]);
    assert_eq!(stdout(&o).trim(), "3234");

    let o = qpart(&["enumerate", "--q", "2", "--max-n", "30", "--max-m", "2"]);
    assert!(stdout(&o).starts_with("n,m,count\n0,0,1\n1,1,1\n4,1,1\n5,2,1\n"));

    let o = qpart(&["enumerate", "--q", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_uniformity_report() {
    let o = qpart(&["validate", "--suite", "uniformity", "--q", "1", "--n", "12", "--m", "3", "--count", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let r = &v[0];
    assert_eq!(r["name"], "uniformity chi-square over 7 cells");
    assert_eq!(r["n"], 2000);
    for key in ["statistic", "threshold", "verdict", "reference"] {
        assert!(r.get(key).is_some(), "{key}");
    }
}

#[test]
fn validate_rejects_bad_input() {
    assert_eq!(qpart(&["validate", "--suite", "bogus", "--q", "1"]).status.code(), Some(2));
    assert_eq!(qpart(&["validate", "--suite", "fixed-m", "--q", "1"]).status.code(), Some(2));
    assert_eq!(qpart(&["validate", "--suite", "uniformity", "--q", "1"]).status.code(), Some(2));
}

#[test]
fn shape_grid_and_limit() {
    let o = qpart(&["shape", "--q", "1", "--N", "1e5", "--M", "10", "--count", "50", "--grid-step", "0.5", "--x-max", "3"]);
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|s| s.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0][2], 1.0);
    for r in &rows {
        assert!((r[2] - (-r[0]).exp()).abs() < 1e-6);
    }
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn unwritable_output_exits_3() {
    let o = qpart(&["sample", "--q", "2", "--N", "12500", "--M", "5", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(3));
}
