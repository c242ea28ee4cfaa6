use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use negscope::corpus::write_instances;
use negscope::synthetic;

fn negscope(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negscope"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NEGSCOPE_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("run negscope")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_setup(dir: &Path) {
    write_instances(fs::File::create(dir.join("corpus.tsv")).unwrap(), &synthetic::generate(60, 0.5, 8)).unwrap();
    fs::write(
        dir.join("run.conf"),
        "corpus = corpus.tsv\nout = runs\ndim = 8\nseed = 3\n\
         cue.variants = baseline, bilstm\nscope.variants = bilstm\n\
         cue.epochs = 2\nscope.epochs = 2\ncue.units = 8\nscope.units = 8\n",
    )
    .unwrap();
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&negscope(&["--help"], tmp.path())), 0);
    assert_eq!(code(&negscope(&["frobnicate"], tmp.path())), 2);
    assert_eq!(code(&negscope(&["train-cue", "--variant", "huge"], tmp.path())), 2);
    fs::write(tmp.path().join("bad.conf"), "cue.epochs = many\n").unwrap();
    assert_eq!(code(&negscope(&["train-cue", "--config", "bad.conf"], tmp.path())), 2);
    let o = negscope(&["train-scope", "--cue-input", "pred"], tmp.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = negscope(&["train-cue", "--corpus", "missing.tsv"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.tsv"));
}

#[test]
fn experiment_then_evaluate_and_predict() {
    let tmp = tempfile::tempdir().unwrap();
    write_setup(tmp.path());
    let o = negscope(&["experiment", "--config", "run.conf", "--out", "elsewhere"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = tmp.path().join("elsewhere");
    assert!(!tmp.path().join("runs").exists());
    for f in ["report.txt", "cue.tsv", "scope.tsv", "comparison.tsv", "config.txt", "vocab.txt", "train.log"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[task2 test set]"));

    let o = negscope(
        &[
            "evaluate",
            "--pred",
            "elsewhere/predictions/scope-bilstm.predicted.tsv",
            "--gold",
            "elsewhere/predictions/scope.test.gold.tsv",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[cue]") && text.contains("[scope]") && text.contains("pcp = "));

    fs::write(tmp.path().join("raw.txt"), "mice showed no growth .\n").unwrap();
    let o = negscope(
        &[
            "predict",
            "--cue-model",
            "elsewhere/cue-bilstm.ckpt",
            "--scope-model",
            "elsewhere/scope-bilstm.ckpt",
            "--input",
            "raw.txt",
            "--raw",
            "--out",
            "tagged.tsv",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tagged = fs::read_to_string(tmp.path().join("tagged.tsv")).unwrap();
    assert_eq!(tagged.lines().filter(|l| l.contains('\t')).count(), 5);
}

#[test]
fn output_directory_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    write_setup(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_negscope"))
        .args(["train-cue", "--config", "run.conf", "--variant", "baseline"])
        .current_dir(tmp.path())
        .env("NEGSCOPE_OUT", "from-env")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("from-env/cue-baseline.ckpt").exists());
    assert!(!tmp.path().join("from-env/cue-bilstm.ckpt").exists());
}
