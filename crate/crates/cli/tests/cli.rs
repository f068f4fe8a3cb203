use std::path::Path;
use std::process::{Command, Output};

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let env = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::create_dir_all(env.path("cfg")).unwrap();
        std::fs::write(env.path("cfg/teiresias.yaml"), "retry_limit: 0\nretry_backoff_ms: 0\n").unwrap();
        env
    }

    fn path(&self, rel: &str) -> std::path::PathBuf {
        self.dir.path().join(rel)
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_teiresias"));
        cmd.env("TEIRESIAS_STATE_DIR", self.path("state"))
            .env("TEIRESIAS_CONFIG_DIR", self.path("cfg"))
            .env_remove("TEIRESIAS_TOKEN")
            .env_remove("TEIRESIAS_LISTEN");
        cmd
    }

    fn run(&self, args: &[&str]) -> Output {
        self.command().args(args).output().unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_compose(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(
        dir.join("docker-compose.yml"),
        "services:\n  db:\n    image: postgres:15\n    environment:\n      POSTGRES_PASSWORD: ${PW}\n",
    )
    .unwrap();
}

#[test]
fn scan_prints_a_table_and_report_show_matches_the_export() {
    let env = Env::new();
    write_compose(&env.path("repo"));
    let out = env.run(&["scan", "--dir", env.path("repo").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("postgresql"), "{text}");
    assert!(text.contains("no (password)"), "{text}");
    let id = text.split_whitespace().nth(1).unwrap().to_string();

    let shown = env.run(&["report", "show", &id]);
    assert_eq!(code(&shown), 0);
    let exported = env.path("state").join("reports").join(format!("report-{id}.json"));
    assert_eq!(stdout(&shown), std::fs::read_to_string(exported).unwrap());

    let list = stdout(&env.run(&["report", "list"]));
    assert!(list.contains(&id));
}

#[test]
fn missing_source_and_unknown_report_exit_2() {
    let env = Env::new();
    assert_eq!(code(&env.run(&["scan", "--dir", env.path("absent").to_str().unwrap()])), 2);
    assert_eq!(code(&env.run(&["report", "show", "19700101T000000Z-00000000"])), 2);
    assert_eq!(code(&env.run(&["registry", "exclude", "0123456789abcdef"])), 2);
}

#[test]
fn fail_on_findings_exits_1() {
    let env = Env::new();
    let data = env.path("data");
    std::fs::create_dir_all(&data).unwrap();
    let csv = data.join("ips.csv");
    let out = env.run(&["gen-dataset", "--kind", "ipv4", "--rows", "50", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = env.run(&["registry", "add-external", "--name", "data", "--type", "tabular", "--host", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::create_dir_all(env.path("empty")).unwrap();
    let empty = env.path("empty");
    let empty = empty.to_str().unwrap();

    let out = env.run(&["scan", "--dir", empty]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("personal"));
    let out = env.run(&["scan", "--dir", empty, "--fail-on-findings", "--format", "json"]);
    assert_eq!(code(&out), 1);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["summary"]["storages"][0]["collections"][0]["alpha"], 1);
}

#[test]
fn registry_complete_takes_secret_references_only() {
    let env = Env::new();
    write_compose(&env.path("repo"));
    let out = env.run(&["scan", "--dir", env.path("repo").to_str().unwrap(), "--format", "json"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let id = report["summary"]["storages"][0]["storage_id"].as_str().unwrap().to_string();

    let out = env.run(&["registry", "complete", &id, "--password-env", "DB_PASSWORD", "--host", "127.0.0.1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let registry = std::fs::read_to_string(env.path("state/registry.json")).unwrap();
    assert!(registry.contains("DB_PASSWORD"));
    // There is no flag that takes a password value.
    assert_eq!(code(&env.run(&["registry", "complete", &id, "--password", "hunter2"])), 2);
}

#[test]
fn serve_needs_a_token_and_a_free_port() {
    let env = Env::new();
    let out = env.run(&["serve"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("TEIRESIAS_TOKEN"));

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let out = env
        .command()
        .args(["serve"])
        .env("TEIRESIAS_TOKEN", "t")
        .env("TEIRESIAS_LISTEN", taken.local_addr().unwrap().to_string())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn config_init_refuses_to_overwrite() {
    let env = Env::new();
    let cfg = env.path("fresh");
    let args = ["--config-dir", cfg.to_str().unwrap(), "config", "init"];
    assert_eq!(code(&env.run(&args)), 0);
    assert!(cfg.join("patterns.yaml").exists());
    assert_eq!(code(&env.run(&args)), 2);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&env.run(&forced)), 0);
}
