use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use probe_core::{Dataset, Task};

fn probe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probe")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = probe(args);
    assert!(out.status.success(), "probe {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn hash_of(stdout: &str, task: &str) -> String {
    let line = stdout.lines().find(|l| l.starts_with(task)).unwrap();
    line.split_whitespace().skip_while(|w| *w != "sha256").nth(1).unwrap().to_string()
}

#[test]
fn scaled_rotation_generation_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let first = ok(&["generate", "--seed", "5", "--scale", "0.05", "--task", "rotation", "--output-dir", d]);
    assert!(first.contains(" 188 trials"), "{first}");
    assert!(!dir.path().join(Task::Oddball.manifest_file()).exists());
    let again = ok(&["generate", "--seed", "5", "--scale", "0.05", "--task", "rotation", "--output-dir", d]);
    assert_eq!(hash_of(&first, "rotation"), hash_of(&again, "rotation"));
    let other = ok(&["generate", "--seed", "6", "--scale", "0.05", "--task", "rotation", "--output-dir", d]);
    assert_ne!(hash_of(&first, "rotation"), hash_of(&other, "rotation"));
    assert!(dir.path().join("run_config.json").exists());
    let m = Dataset::load(dir.path(), Task::Rotation).unwrap();
    let Dataset::Rotation(m) = m else { unreachable!() };
    for t in m.trials.iter().take(5) {
        assert!(dir.path().join("stimuli").join(&t.images.left).exists());
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("out");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "seed": 1,
            "output_dir": out_dir,
            "scale": {"oddball": 0.02, "numerosity": 0.01, "rotation": 0.01},
        })
        .to_string(),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let out = ok(&["generate", "--config", c, "--task", "numerosity"]);
    assert!(out.contains(" 32 trials"), "{out}");
    let out = ok(&["generate", "--config", c, "--task", "numerosity", "--scale", "0.02"]);
    assert!(out.contains(" 64 trials"), "{out}");
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echo["scale"]["numerosity"], 0.02);
    assert_eq!(echo["seed"], 1);

    let out = ok(&["evaluate", "--config", c, "--model", "oracle"]);
    assert!(out.contains("accuracy=1.0000"), "{out}");
    assert!(out_dir.join("evals/oracle/numerosity.jsonl").exists());
    assert!(out_dir.join("evals/oracle/run_config.json").exists());
    let out = ok(&["evaluate", "--config", c, "--model", "majority_class", "--mode", "cot"]);
    assert!(out.contains("numerosity_cot.jsonl"), "{out}");

    let out = ok(&["analyze", "--config", c]);
    assert!(out.contains("0 human responses"), "{out}");
    let cells = std::fs::read_to_string(out_dir.join("summary/numerosity_cells.csv")).unwrap();
    assert!(cells.contains("majority_class/cot") && cells.contains("oracle"));
    assert!(out_dir.join("summary/run.json").exists() && out_dir.join("summary/run_config.json").exists());
}

#[test]
fn configuration_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = probe(&["generate", "--output-dir", d, "--scale", "0.05"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: required"));
    let out = probe(&["generate", "--seed", "1", "--output-dir", d, "--scale", "0.001"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scale.oddball: 0.001 is below 0.01"));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "service": {"experiment": {"session_size": "many"}}}"#).unwrap();
    let out = probe(&["generate", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("service.experiment.session_size"));

    let out = probe(&["evaluate", "--seed", "1", "--output-dir", d, "--model", "oracle"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no manifests"));
    let out = probe(&["analyze", "--seed", "1", "--output-dir", d, "--task", "oddball"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing manifest"));
}

fn serve(dir: &Path) -> (std::process::Child, String, std::io::Lines<BufReader<std::process::ChildStdout>>) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_probe"))
        .args(["serve", "--seed", "3", "--output-dir", dir.to_str().unwrap(), "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let base = loop {
        let l = lines.next().expect("service output").unwrap();
        if let Some(a) = l.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    (child, base, lines)
}

#[cfg(unix)]
#[test]
fn serve_shuts_down_on_interrupt_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["generate", "--seed", "3", "--scale", "0.05", "--task", "rotation", "--output-dir", d]);
    let (mut child, base, mut lines) = serve(dir.path());
    let created: serde_json::Value = serde_json::from_str(
        &ureq::post(format!("{base}/api/session"))
            .header("content-type", "application/json")
            .send(r#"{"task": "rotation"}"#)
            .unwrap()
            .body_mut()
            .read_to_string()
            .unwrap(),
    )
    .unwrap();
    let id = created["session_id"].as_str().unwrap().to_string();
    for k in 0..3 {
        let next: serde_json::Value =
            serde_json::from_str(&ureq::get(format!("{base}/api/session/{id}/next")).call().unwrap().body_mut().read_to_string().unwrap())
                .unwrap();
        let body = serde_json::json!({"trial_id": next["trial_id"], "answer": 1, "rt_ms": 800 + k});
        ureq::post(format!("{base}/api/session/{id}/response"))
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
    }
    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    assert!(child.wait().unwrap().success());
    let rest: Vec<String> = lines.by_ref().map(|l| l.unwrap()).collect();
    assert!(rest.iter().any(|l| l == "stopped; 3 responses on disk"), "{rest:?}");

    let (mut child, base, mut lines) = serve(dir.path());
    let session: serde_json::Value =
        serde_json::from_str(&ureq::get(format!("{base}/api/session/{id}")).call().unwrap().body_mut().read_to_string().unwrap()).unwrap();
    assert_eq!(session["cursor"], 3);
    child.kill().unwrap();
    child.wait().unwrap();
    let _ = lines.next();
    assert!(dir.path().join("service/run_config.json").exists());
}
