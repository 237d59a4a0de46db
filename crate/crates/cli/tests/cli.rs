use std::path::Path;
use std::process::Command;

fn fmcpe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fmcpe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("tiny.cfg");
    std::fs::write(
        &p,
        "# tiny grid\ntask = gaussian\nn_sim = 500\nn_cal = 10,20\nseeds = 0\nn_test = 40\nmethods = npe,fmcpe\n\
         mse_samples = 3\ndump_points = 2\ndump_samples = 5\nsave_eval_samples = true\ntiming = false\n\
         npe_hidden = 16\nnpe_max_epochs = 5\nfmcpe_hidden = 8\nfmcpe_embed_hidden = 8\nfmcpe_ctx_dim = 4\n\
         fmcpe_max_steps = 20\nfmcpe_val_tuples = 16\node_steps = 4\node_train_steps = 4\nc2st_hidden = 8\nc2st_max_epochs = 5\n",
    )
    .unwrap();
    p
}

#[test]
fn run_then_recompute_metrics_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let o = fmcpe(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 5);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(stdout, metrics);
    assert!(out.join("manifest.json").exists());

    // Recompute from the evaluation dump; W2 and MSE do not depend on the classifier seed.
    let row = metrics.lines().find(|l| l.starts_with("fmcpe,gaussian,20,")).unwrap();
    let o = fmcpe(&[
        "metrics",
        "--test",
        out.join("data/test.csv").to_str().unwrap(),
        "--samples",
        out.join("samples/eval_fmcpe_ncal20_seed0.csv").to_str().unwrap(),
        "--task",
        "gaussian",
        "--n-cal",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let re = String::from_utf8(o.stdout).unwrap();
    let re_row = re.lines().nth(1).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    let g: Vec<&str> = re_row.split(',').collect();
    assert_eq!((f[0], f[4], f[6]), (g[0], g[4], g[6]));

    let dump = dir.path().join("d.csv");
    let o = fmcpe(&[
        "dump-samples",
        "--checkpoint",
        out.join("checkpoints/fmcpe_ncal20_seed0.json").to_str().unwrap(),
        "--test",
        out.join("data/test.csv").to_str().unwrap(),
        "--points",
        "0,3",
        "--n",
        "4",
        "--output",
        dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.lines().nth(5).unwrap().starts_with("fmcpe,3,0,"));

    // Same config again: byte-identical metrics.
    let out2 = dir.path().join("run2");
    assert!(fmcpe(&["run", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()])
        .status
        .success());
    assert_eq!(
        std::fs::read(out.join("metrics.csv")).unwrap(),
        std::fs::read(out2.join("metrics.csv")).unwrap()
    );
}

#[test]
fn generate_writes_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcpe(&[
        "generate",
        "--task",
        "pendulum",
        "--n-sim",
        "20",
        "--n-cal",
        "10",
        "--n-test",
        "30",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = std::fs::read_to_string(dir.path().join("data/sim.csv")).unwrap();
    assert_eq!(sim.lines().count(), 21);
    assert_eq!(sim.lines().next().unwrap().split(',').count(), 202);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("data/test.csv")).unwrap().lines().count(),
        31
    );
}

#[test]
fn config_errors_exit_nonzero() {
    let o = fmcpe(&["run", "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
    let o = fmcpe(&["run", "--n-cal", "50,10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_baseline_writes_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmcpe(&[
        "train-baseline",
        "--n-sim",
        "300",
        "--n-cal",
        "10",
        "--n-test",
        "30",
        "--set",
        "npe_max_epochs=2",
        "--set",
        "npe_hidden=8",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("checkpoints/baseline_seed2.json").exists());
}
