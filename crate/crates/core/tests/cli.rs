//! The installed binary, driven through its command line.

use std::process::Command;

fn newtonlab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_newtonlab")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).expect("stdout is JSON")
}

#[test]
fn blaschke_solves_for_b() {
    let (code, out, _) = newtonlab(&["blaschke", "--k", "2", "--target-multiplier", "0.5"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert!((v["b"].as_f64().unwrap() - 0.2).abs() < 1e-9);
    assert!((v["alpha"].as_f64().unwrap() - (2.0 - 3f64.sqrt())).abs() < 1e-9);
    let (code, out, _) = newtonlab(&["blaschke", "--k", "3"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["triple_root_check"]["pass"], true);
}

#[test]
fn missing_polynomial_exits_with_usage() {
    let (code, _, err) = newtonlab(&["build"]);
    assert_eq!(code, 2);
    assert!(err.contains("Usage"));
    assert_eq!(newtonlab(&["render", "--width"]).0, 2);
}

#[test]
fn build_of_quadratic() {
    let (code, out, _) = newtonlab(&["build", "--p", "-1+0i,0+0i,1+0i", "--q", "0+0i"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["degree"], 2);
    assert_eq!(v["critical_count"], 2);
    let finite: Vec<&serde_json::Value> = v["fixed_points"].as_array().unwrap().iter().filter(|f| f["location"] != "inf").collect();
    assert_eq!(finite.len(), 2);
    for f in finite {
        assert_eq!(f["multiplier"]["re"].as_f64().unwrap().abs(), 0.0);
        assert_eq!(f["class"], "superattracting");
    }
}

#[test]
fn orbit_pcm_and_channel() {
    let (code, out, _) = newtonlab(&["orbit", "--p", "0,1", "--q", "0,1", "--z0", "-3,0"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["record"]["outcome"]["kind"], "petal");

    let (code, out, _) = newtonlab(&["pcm-check", "--p", "0,1", "--q", "0,1"]);
    assert_eq!(code, 0);
    assert_eq!(json(&out)["overall"], "pass");

    let dir = std::env::temp_dir().join(format!("newtonlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("rays.csv");
    let (code, out, _) = newtonlab(&["channel", "--p", "-1,0,0,1", "--mark", "0:1", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["rays"].as_array().unwrap().len(), 3);
    assert_eq!(v["n_marked"], 1);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("basin,j,index,re,im,marked"));
    assert_eq!(newtonlab(&["channel", "--p", "-1,0,0,1", "--mark", "0:1,0:1"]).0, 1);
}

#[test]
fn render_writes_ppm_and_report_file() {
    let dir = std::env::temp_dir().join(format!("newtonlab-render-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let img = dir.join("cubic.ppm");
    let rep = dir.join("cubic.json");
    let args = ["render", "--p", "-1,0,0,1", "--width", "64", "--height", "48", "--overlay", "fixed,critical,rays", "--image", img.to_str().unwrap(), "--out", rep.to_str().unwrap()];
    let (code, out, _) = newtonlab(&args);
    assert_eq!(code, 0);
    assert!(out.is_empty());
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P6\n64 48\n255\n"));
    assert_eq!(bytes.len(), 13 + 3 * 64 * 48);
    let v = json(&std::fs::read_to_string(&rep).unwrap());
    assert_eq!(v["counts"]["roots"].as_array().unwrap().len(), 3);
}

#[test]
fn surgery_commands() {
    let (code, out, _) = newtonlab(&["surgery-check", "--k", "2", "--r", "0.8", "--mmax", "40", "--grid", "16"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert!(v["continuity_max_jump"].as_f64().unwrap() < 1e-9);
    assert_eq!(v["verdict"], true);
    let (code, _, err) = newtonlab(&["surgery-check", "--k", "2", "--r", "0.1"]);
    assert_eq!(code, 1);
    assert_eq!(json(&err)["error"], "surgery");

    let (code, out, _) = newtonlab(&["surgery-pipeline", "--p", "-1,0,0,1"]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["basins"].as_array().unwrap().len(), 0);
}
