//! The `gsr` binary end to end on a small generated graph.

use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seeds = [0]

[dataset.sbm]
block_sizes = [25, 25]
p_in = 0.2
p_out = 0.02
feature_dim = 8
feature_signal = 2.0
noise_edge_fraction = 0.1
seed = 5

[deepwalk]
walks_per_node = 3
walk_length = 10
dim = 8
epochs = 1

[pretrain]
epochs = 2
batch_size = 16
queue_size = 31
hidden_dim = 8
out_dim = 4
decoder_hidden_dim = 4

[refine]
add_ratio = 0.1
remove_ratio = 0.05

[finetune]
max_epochs = 30
patience = 10
"#;

fn gsr(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("run.toml");
    std::fs::write(&config, CONFIG).unwrap();
    Command::new(env!("CARGO_BIN_EXE_gsr"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn stages_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&gsr(dir.path(), &["embed"]));
    assert!(out.join("structure_seed0.gsrm").exists());
    ok(&gsr(dir.path(), &["pretrain"]));
    assert!(out.join("pretrained_seed0.ckpt").exists());
    let loss = std::fs::read_to_string(out.join("loss_seed0.tsv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch\tl_intra\tl_inter\tl_p"));
    assert_eq!(loss.lines().count(), 3);
    ok(&gsr(dir.path(), &["refine", "--scores"]));
    let plan = std::fs::read_to_string(out.join("plan_seed0.diff")).unwrap();
    assert!(plan.lines().any(|l| l.starts_with('+')));
    assert!(plan.lines().any(|l| l.starts_with('-')));
    let scores = std::fs::read_to_string(out.join("scores_seed0.tsv")).unwrap();
    assert_eq!(scores.lines().next(), Some("u\tv\tscore_F\tscore_S\tE\tis_edge"));
    assert_eq!(scores.lines().count(), 1 + 50 * 49 / 2);

    let plan_path = out.join("plan_seed0.diff");
    let table = ok(&gsr(dir.path(), &["finetune", "--plan", plan_path.to_str().unwrap()]));
    assert!(table.contains("finetune"));
    assert!(out.join("runs.jsonl").exists());
    assert!(out.join("config.toml").exists());
}

#[test]
fn pipeline_and_ablation_print_tables() {
    let dir = tempfile::tempdir().unwrap();
    let table = ok(&gsr(dir.path(), &["pipeline", "--set", "seeds=[0, 1]"]));
    assert!(table.contains("mean"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/pipeline.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    let abl = ok(&gsr(dir.path(), &["ablate", "--variant", "gcn,orig-graph"]));
    assert!(abl.contains("# gcn") && abl.contains("# orig-graph"));
    let sweep = ok(&gsr(dir.path(), &["sweep", "--axis", "beta_f", "--values", "0,1"]));
    assert!(sweep.starts_with("beta_f\tmean_acc"));
    assert!(dir.path().join("out/sweep_beta_f.tsv").exists());
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = gsr(dir.path(), &["pipeline", "--set", "pretrain.alpha=2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));

    let o = gsr(dir.path(), &["ablate", "--variant", "nonsense"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown variant"));

    let o = gsr(dir.path(), &["sweep", "--axis", "m_plus", "--values", "100000"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("m_plus"));

    let o = gsr(dir.path(), &["pipeline", "--dataset", "/nonexistent/set"]);
    assert!(!o.status.success());
}
