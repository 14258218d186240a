use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
[grid]
size = 12
goal_count = 4
max_episode_steps = 300

[encoder]
window = 4

[record]
hold_steps = 30

[suite]
seeds = 2
episodes = 2
success_k = 20
";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Sandbox { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn sbc(&self, args: &[&str]) -> Output {
        let config = self.path("small.toml");
        Command::new(env!("CARGO_BIN_EXE_sbc"))
            .arg("--config")
            .arg(&config)
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("SBC_JOBS")
            .output()
            .unwrap()
    }

    fn record(&self, n: &str, out: &str) {
        let o = self.sbc(&["record", "--demos", n, "--seed", "7", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn record_is_deterministic_and_reports_counts() {
    let sb = Sandbox::new();
    let o = sb.sbc(&["record", "--demos", "5", "--seed", "7", "--out", "a.sbc"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("recorded 5 demos"), "{stdout}");
    assert!(stdout.contains("dimension 108"), "{stdout}");
    sb.record("5", "b.sbc");
    assert_eq!(std::fs::read(sb.path("a.sbc")).unwrap(), std::fs::read(sb.path("b.sbc")).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.sbc(&["record", "--demos", "0", "--out", "x.sbc"])), 2);
    assert_eq!(code(&sb.sbc(&["frobnicate"])), 2);
    sb.record("3", "d.sbc");
    assert_eq!(code(&sb.sbc(&["eval", "--demos", "d.sbc", "--div-threshold", "-1"])), 2);
    assert_eq!(code(&sb.sbc(&["eval", "--demos", "d.sbc", "--div-threshold", "auto:1.5"])), 2);
    let o = sb.sbc(&["baseline", "--kind", "bogus"]);
    assert_eq!(code(&o), 2);
    let stderr = String::from_utf8_lossy(&o.stderr);
    for kind in ["random", "majority", "expert"] {
        assert!(stderr.contains(kind), "{stderr}");
    }
    assert_eq!(code(&sb.sbc(&["--jobs", "0", "baseline", "--kind", "expert"])), 2);
    assert_eq!(code(&sb.sbc(&["--help"])), 0);
}

#[test]
fn runtime_errors_exit_with_one() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.sbc(&["eval", "--demos", "missing.sbc"])), 1);
    std::fs::write(sb.path("junk.sbc"), b"not a demo file").unwrap();
    assert_eq!(code(&sb.sbc(&["eval", "--demos", "junk.sbc"])), 1);
    sb.record("4", "d.sbc");
    let o = sb.sbc(&["ablate", "--demos", "d.sbc", "--counts", "2,200"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("count exceeds demos"));
    let o = sb.sbc(&["baseline", "--kind", "majority"]);
    assert_eq!(code(&o), 1);
    std::fs::write(sb.path("bad.toml"), "[grid]\nsize = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sbc"))
        .args(["--config", sb.path("bad.toml").to_str().unwrap(), "baseline", "--kind", "expert"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_report_is_reproducible_across_jobs() {
    let sb = Sandbox::new();
    sb.record("6", "d.sbc");
    let o = sb.sbc(&["eval", "--demos", "d.sbc", "--report", "r1.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("success rate"));
    let o = sb.sbc(&["--jobs", "3", "eval", "--demos", "d.sbc", "--report", "r2.json"]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read(sb.path("r1.json")).unwrap();
    assert_eq!(a, std::fs::read(sb.path("r2.json")).unwrap());
    let r = json(&sb.path("r1.json"));
    assert_eq!(r["suite"]["episodes"], 4);
    assert_eq!(r["controller"]["max_steps"], 100);
    assert!(r["suite"].get("timing").is_none());
}

#[test]
fn flags_override_the_config_file() {
    let sb = Sandbox::new();
    sb.record("3", "d.sbc");
    let o = sb.sbc(&[
        "eval", "--demos", "d.sbc", "--seeds", "1", "--episodes", "3", "--max-steps", "7", "--warmup", "2",
        "--div-threshold", "4.5", "--report", "r.json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&sb.path("r.json"));
    assert_eq!(r["suite"]["episodes"], 3);
    assert_eq!(r["controller"]["max_steps"], 7);
    assert_eq!(r["controller"]["warmup"], 2);
    assert_eq!(r["controller"]["div_threshold"], 4.5);
}

#[test]
fn ablation_report_has_build_times_unless_disabled() {
    let sb = Sandbox::new();
    sb.record("4", "d.sbc");
    let o = sb.sbc(&["ablate", "--demos", "d.sbc", "--counts", "1,2,4", "--report", "a.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&sb.path("a.json"));
    let entries = r["ablation"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for e in entries {
        assert!(e["suite"]["timing"]["index_build_ms"].as_f64().unwrap() > 0.0);
    }
    for out in ["n1.json", "n2.json"] {
        let o = sb.sbc(&["ablate", "--demos", "d.sbc", "--counts", "1,2,4", "--no-timing", "--report", out]);
        assert_eq!(code(&o), 0);
    }
    let n1 = std::fs::read_to_string(sb.path("n1.json")).unwrap();
    assert_eq!(n1, std::fs::read_to_string(sb.path("n2.json")).unwrap());
    assert!(!n1.contains("index_build_ms"));
}

#[test]
fn baselines_run_through_the_suite() {
    let sb = Sandbox::new();
    let o = sb.sbc(&["baseline", "--kind", "expert", "--report", "e.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&sb.path("e.json"))["suite"]["success_rate"], 1.0);
    for out in ["r1.json", "r2.json"] {
        assert_eq!(code(&sb.sbc(&["baseline", "--kind", "random", "--seed", "3", "--report", out])), 0);
    }
    assert_eq!(
        std::fs::read(sb.path("r1.json")).unwrap(),
        std::fs::read(sb.path("r2.json")).unwrap()
    );
    sb.record("3", "d.sbc");
    let o = sb.sbc(&["baseline", "--kind", "majority", "--demos", "d.sbc", "--report", "m.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&sb.path("m.json"))["kind"], "majority");
}

#[test]
fn projection_csv_has_one_row_per_frame() {
    let sb = Sandbox::new();
    let o = sb.sbc(&["record", "--demos", "3", "--seed", "7", "--out", "d.sbc"]);
    let stdout = String::from_utf8_lossy(&o.stdout).to_string();
    let frames: usize = stdout
        .split_whitespace()
        .skip_while(|w| *w != "demos,")
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let o = sb.sbc(&["project", "--demos", "d.sbc", "--out", "p.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(sb.path("p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y,traj_id,offset,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), frames);
    // each demo ends with 30 hold frames
    assert_eq!(rows.iter().filter(|r| r.ends_with(",in_goal")).count(), 3 * 30);
}

#[test]
fn jobs_fall_back_to_the_environment() {
    let sb = Sandbox::new();
    let o = Command::new(env!("CARGO_BIN_EXE_sbc"))
        .args(["--config", sb.path("small.toml").to_str().unwrap(), "baseline", "--kind", "expert"])
        .env("SBC_JOBS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_sbc"))
        .args(["--config", sb.path("small.toml").to_str().unwrap(), "baseline", "--kind", "expert"])
        .env("SBC_JOBS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}
