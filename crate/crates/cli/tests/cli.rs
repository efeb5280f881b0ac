use dcmrta::report::read_metrics_csv;
use dcmrta::rl::Checkpoint;
use std::path::Path;
use std::process::{Command, Output};

fn dcmrta(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcmrta")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = dcmrta(dir, args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const DESK: &str = "layouts = [\"small:20\"]\nrobots = [4]\ntasks = 40\nseeds = [1, 2, 3]\n";

#[test]
fn run_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "exp.toml", DESK);
    ok(dir.path(), &["run", "--config", "exp.toml", "--out", "a"]);
    ok(dir.path(), &["run", "--config", "exp.toml", "--out", "b", "--jobs", "1"]);
    let a = std::fs::read(dir.path().join("a/metrics.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/metrics.csv")).unwrap());
    let records = read_metrics_csv(&a[..]).unwrap();
    assert_eq!(records.len(), 3 * 3);
    assert!(records.iter().all(|r| r.wall_clock_s.is_none()));

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["experiment"]["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(meta["experiment"]["sim"]["radius"], 1.5);
    let summary = std::fs::read_to_string(dir.path().join("a/summary.csv")).unwrap();
    assert!(summary.starts_with("layout,n_robots,nav_mode,allocator,runs,mean_ttd"));
    assert!(summary.contains("imp_vs_mpdm"));
}

#[test]
fn one_record_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "exp.toml", "layouts = [\"small:20\", \"open:24\"]\nrobots = [2, 3]\ntasks = 10\nallocators = [\"mpdm\"]\n");
    ok(dir.path(), &["run", "--config", "exp.toml", "--seed", "9"]);
    let records = read_metrics_csv(std::fs::File::open(dir.path().join("out/metrics.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.seed == 9 && r.allocator == "mpdm"));
}

#[test]
fn scale_records_timing_and_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "scale.toml", "layouts = [\"open:40\"]\nrobots = [2, 8]\ntasks = 30\nseeds = [4]\n");
    ok(dir.path(), &["scale", "--config", "scale.toml", "--out", "s"]);
    let scaled = read_metrics_csv(std::fs::File::open(dir.path().join("s/metrics.csv")).unwrap()).unwrap();
    assert_eq!(scaled.len(), 2 * 3);
    assert!(scaled.iter().all(|r| r.wall_clock_s.is_some_and(|t| t > 0.0) && r.nav_mode == "direct"));

    write(dir.path(), "run.toml", "layouts = [\"open:40\"]\nrobots = [2]\ntasks = 30\nseeds = [4]\nnav_mode = \"direct\"\n");
    ok(dir.path(), &["run", "--config", "run.toml", "--out", "r"]);
    let single = read_metrics_csv(std::fs::File::open(dir.path().join("r/metrics.csv")).unwrap()).unwrap();
    for r in &single {
        let twin = scaled.iter().find(|s| s.n_robots == 2 && s.allocator == r.allocator).unwrap();
        assert_eq!((twin.ttd_total, twin.makespan, twin.collisions), (r.ttd_total, r.makespan, r.collisions));
    }
}

#[test]
fn train_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "train.toml",
        "layouts = [\"small:20\"]\nrobots = [4]\nupdates = 6\nembed_dim = 8\nk_train = 20\neval_every = 3\nvalidation_episodes = 2\n",
    );
    ok(dir.path(), &["train", "--config", "train.toml", "--seed", "3"]);
    let ck = Checkpoint::load(dir.path().join("out/policy.json")).unwrap();
    assert_eq!(ck.policy.embed_dim(), 8);
    assert_eq!(ck.train_config.as_ref().unwrap().seed, 3);
    let back = Checkpoint::from_json(&ck.to_json()).unwrap();
    assert!(back.policy.params().iter().zip(ck.policy.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let log = std::fs::read_to_string(dir.path().join("out/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 6);

    write(dir.path(), "eval.toml", &format!("{DESK}checkpoint = \"out/policy.json\"\n"));
    ok(dir.path(), &["run", "--config", "eval.toml", "--out", "e"]);
    let records = read_metrics_csv(std::fs::File::open(dir.path().join("e/metrics.csv")).unwrap()).unwrap();
    assert!(records.iter().any(|r| r.allocator == "dc-mrta"));
}

#[test]
fn invalid_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = |o: Output| {
        assert!(!o.status.success());
        String::from_utf8(o.stderr).unwrap()
    };
    write(dir.path(), "gamma.toml", "gamma = 1.5\nupdates = 1\n");
    assert!(stderr(dcmrta(dir.path(), &["train", "--config", "gamma.toml"])).contains("gamma"));
    write(dir.path(), "typo.toml", "robts = [4]\n");
    assert!(stderr(dcmrta(dir.path(), &["run", "--config", "typo.toml"])).contains("robts"));
    write(dir.path(), "rl.toml", "allocators = [\"rl\"]\n");
    assert!(stderr(dcmrta(dir.path(), &["run", "--config", "rl.toml"])).contains("checkpoint"));
    assert!(stderr(dcmrta(dir.path(), &["validate-layout", "missing.txt"])).contains("missing.txt"));
}

#[test]
fn deadlock_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "stall.toml", "layouts = [\"small:20\"]\nrobots = [4]\ntasks = 40\nstall_ticks = 1\nallocators = [\"rbts\"]\nseeds = [5]\n");
    let out = dcmrta(dir.path(), &["run", "--config", "stall.toml"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("small-20x20 M=4") && err.contains("rbts run with seed 5") && err.contains("deadlock"), "{err}");
}

#[test]
fn layouts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["validate-layout", "B:40", "--write", "b.txt"]);
    let b = ok(dir.path(), &["validate-layout", "b.txt"]);
    assert_eq!(a.stdout, b.stdout);

    std::fs::create_dir(dir.path().join("exp")).unwrap();
    std::fs::rename(dir.path().join("b.txt"), dir.path().join("exp/b.txt")).unwrap();
    write(dir.path(), "exp/file.toml", "layouts = [\"b.txt\"]\nrobots = [3]\ntasks = 10\nallocators = [\"mpdm\"]\n");
    ok(dir.path(), &["run", "--config", "exp/file.toml"]);
    let meta = std::fs::read_to_string(dir.path().join("out/metadata.json")).unwrap();
    assert!(meta.contains("\"text\": \"layout B-40x40\\n"));
}
