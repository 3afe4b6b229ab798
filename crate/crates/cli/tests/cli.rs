use std::path::Path;
use std::process::{Command, Output};

use eqv2i_cli::config::ExperimentConfig;
use eqv2i_cli::manifest::sha256_hex;

const CONFIG: &str = r#"
seed = 3

[env]
n_h = 4
oversample_h = 1
users_per_region = 2
subcarriers = 8

[sensing]
n_train = 80
n_images = 30
n_test = 20
knn = 8

[sensing.charting]
steps = 50
hidden = [16]

[policy.net]
enc_hidden = 2
x_channels = 2
msg_channels = 2
value_hidden = 2

[train]
epochs = 2
horizon = 4
n_envs = 2
checkpoint_every = 1

[theory]
seeds = 2

[eval]
n_envs = 1
horizon = 3
"#;

fn eqv2i(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqv2i")).args(args).current_dir(dir).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "seed = 1\n[sensing.charting]\niters = 5\n").unwrap();
    let o = eqv2i(&["theory-check", "--config", "c.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sensing.charting"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").join("config-theory-check.toml").exists());
}

#[test]
fn seed_is_mandatory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "[train]\nepochs = 1\n").unwrap();
    let o = eqv2i(&["print-config", "--config", "c.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
    // a command-line seed fills the gap
    let o = eqv2i(&["print-config", "--seed", "4"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invalid_values_and_arguments_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "seed = 1\n[sensing]\nn_images = 0\n").unwrap();
    assert_eq!(eqv2i(&["gen-data", "--config", "c.toml"], tmp.path()).status.code(), Some(2));
    assert_eq!(eqv2i(&["no-such-command"], tmp.path()).status.code(), Some(2));
    assert_eq!(eqv2i(&["gen-data", "--jobs", "many"], tmp.path()).status.code(), Some(2));
    assert_eq!(eqv2i(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn missing_upstream_artifact_names_its_producer() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), CONFIG).unwrap();
    let o = eqv2i(&["sense", "--config", "c.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gen-data"), "{}", stderr(&o));
    let o = eqv2i(&["eval", "--config", "c.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("marl-train"), "{}", stderr(&o));
}

#[test]
fn print_config_round_trips_with_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), CONFIG).unwrap();
    let o = eqv2i(&["print-config", "--config", "c.toml", "--seed", "17"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = ExperimentConfig::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let mut expected = ExperimentConfig::parse(CONFIG).unwrap();
    expected.seed = 17;
    assert_eq!(printed, expected);
    assert_eq!(ExperimentConfig::parse(&expected.to_toml()).unwrap(), expected);
}

#[test]
fn pipeline_writes_documented_outputs_and_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), CONFIG).unwrap();
    for cmd in ["gen-data", "sense", "marl-train", "eval", "theory-check", "env-check"] {
        let o = eqv2i(&[cmd, "--config", "c.toml", "--out", "run"], tmp.path());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let out = tmp.path().join("run");
    let headers = [
        ("sensing_metrics.csv", "method,mean_err_m,p95_err_m,ks,ct,tw"),
        ("learning_curve.csv", "epoch,seed,mean_reward,actor_loss,critic_loss,entropy"),
        ("theory_check.csv", "setting,seed,eps_r,eps_t,gamma,measured,bound,holds"),
        ("env_check.csv", "check,samples,value,op,threshold,pass"),
    ];
    for (name, h) in headers {
        assert_eq!(header(&out.join(name)), h, "{name}");
    }
    assert!(out.join("policy-epoch00001.eqm").exists());

    let mut listed = std::collections::BTreeSet::new();
    for cmd in ["gen-data", "sense", "marl-train", "eval", "theory-check", "env-check"] {
        let text = std::fs::read_to_string(out.join(format!("manifest-{cmd}.toml"))).unwrap();
        let m: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(m["command"].as_str(), Some(cmd));
        assert_eq!(m["seed"].as_integer(), Some(3));
        assert_eq!(m["matrix_format"].as_str(), Some("EQM1"));
        let used = std::fs::read_to_string(out.join(format!("config-{cmd}.toml"))).unwrap();
        assert_eq!(m["config_sha256"].as_str(), Some(sha256_hex(used.as_bytes()).as_str()));
        for f in m["files"].as_array().unwrap() {
            let name = f["name"].as_str().unwrap();
            let bytes = std::fs::read(out.join(name)).unwrap();
            assert_eq!(f["bytes"].as_integer(), Some(bytes.len() as i64), "{name}");
            assert_eq!(f["sha256"].as_str(), Some(sha256_hex(&bytes).as_str()), "{name}");
            assert!(listed.insert(name.to_string()), "{name} listed twice");
        }
    }
    // every output except the manifests themselves is accounted for
    let on_disk: std::collections::BTreeSet<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with("manifest-"))
        .collect();
    assert_eq!(listed, on_disk);

    // a corrupted matrix file is reported, not trusted
    std::fs::write(out.join("policy.eqm"), b"EQM1garbage").unwrap();
    let o = eqv2i(&["eval", "--config", "c.toml", "--out", "run"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("policy.eqm"), "{}", stderr(&o));
}
