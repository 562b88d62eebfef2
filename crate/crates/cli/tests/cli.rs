use std::fs;
use std::path::Path;
use std::process::Command;

fn bilane(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_bilane")).args(args).output().expect("binary runs");
    assert!(out.status.success(), "bilane {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_testset_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    bilane(&["gen-testset", "--stage", "B", "--count", "25", "--seed", "5", "--out", p(&a)]);
    bilane(&["gen-testset", "--stage", "B", "--count", "25", "--seed", "5", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.json");
    bilane(&["gen-testset", "--stage", "B", "--count", "25", "--seed", "6", "--out", p(&c)]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn baseline_grid_has_36_equal_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ts = dir.path().join("ts.json");
    let out = dir.path().join("grid.csv");
    bilane(&["gen-testset", "--stage", "A", "--count", "4", "--seed", "1", "--out", p(&ts)]);
    let stdout = bilane(&["baseline", "--name", "threshold", "--test-set", p(&ts), "--out", p(&out)]);
    assert!(stdout.contains("spread 0.00"), "{stdout}");
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "c_ego,c_opp,success_rate,mean_traversal_time,episodes,config_hash");
    assert_eq!(rows.len(), 37);
    let tail = |r: &str| r.splitn(3, ',').nth(2).unwrap().to_string();
    assert!(rows[1..].iter().all(|r| tail(r) == tail(rows[1])));
}

#[test]
fn trace_replays() {
    let dir = tempfile::tempdir().unwrap();
    let ts = dir.path().join("ts.json");
    let tr = dir.path().join("trace.jsonl");
    bilane(&["gen-testset", "--stage", "C", "--count", "3", "--seed", "2", "--out", p(&ts)]);
    bilane(&["trace", "--baseline", "reachability", "--test-set", p(&ts), "--index", "2", "--c-ego", "0.3", "--out", p(&tr)]);
    let text = fs::read_to_string(&tr).unwrap();
    assert!(text.lines().count() > 10);
    let stdout = bilane(&["replay", "--trace", p(&tr)]);
    assert!(stdout.contains("reproduced"));
}

#[test]
fn tiny_training_run_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    bilane(&["init-config", "--learner", "sql", "--desk", "--seed", "4", "--out", p(&cfg)]);
    let run = dir.path().join("run");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .lines()
        .map(|l| match l.split(" = ").next().unwrap() {
            "output_dir" => format!("output_dir = {:?}", p(&run)),
            "epochs" => "epochs = 2".into(),
            "n_envs" => "n_envs = 2".into(),
            "ticks_per_env" => "ticks_per_env = 50".into(),
            "critic_steps_per_epoch" => "critic_steps_per_epoch = 3".into(),
            "warmup" => "warmup = 10".into(),
            _ => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&cfg, text).unwrap();
    bilane(&["train", "--config", p(&cfg)]);
    let ck = run.join("checkpoints").join("epoch_00002.json");
    assert!(ck.exists());

    let ts = dir.path().join("ts.json");
    bilane(&["gen-testset", "--stage", "A", "--count", "2", "--seed", "3", "--out", p(&ts)]);
    let grid = dir.path().join("grid.csv");
    bilane(&["eval-matrix", "--checkpoint", p(&ck), "--test-set", p(&ts), "--coop", "0,0.5", "--out", p(&grid)]);
    assert_eq!(fs::read_to_string(&grid).unwrap().lines().count(), 5);
    let t2 = dir.path().join("t.jsonl");
    bilane(&["trace", "--checkpoint", p(&ck), "--test-set", p(&ts), "--out", p(&t2)]);
    assert!(bilane(&["replay", "--trace", p(&t2)]).contains("reproduced"));
}

#[test]
fn bad_input_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_bilane")).args(["baseline", "--name", "nope", "--test-set", "/nonexistent", "--out", "/tmp/x"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown baseline"));
}
