mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::{completion_body, error_body, StubServer};
use tempfile::TempDir;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn llmsim(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_llmsim"));
    cmd.args(args)
        .env_remove("LLMSIM_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .env_remove("RUST_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    llmsim(args).output().unwrap()
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = llmsim(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_bundled(dir: &TempDir, name: &str) -> (Output, PathBuf) {
    let out = dir.path().join(format!("{name}.jsonl"));
    let config = scenarios().join(format!("{name}.json"));
    let o = run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    (o, out)
}

#[test]
fn bundled_negotiations_report_outcomes() {
    let dir = TempDir::new().unwrap();
    for (name, outcome, turns) in [
        ("negotiation_1", "Sold for $25", 9),
        ("negotiation_2", "Sold for $17", 6),
        ("negotiation_3", "No deal", 7),
    ] {
        let (o, out) = run_bundled(&dir, name);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let text = stdout(&o);
        assert!(text.contains(&format!("Outcome: {outcome}\n")), "{text}");
        assert!(text.contains(&format!("Turns: {turns}\n")), "{text}");
        assert!(text.contains("Termination: ScriptEnd\n"), "{text}");

        let lines: Vec<_> = std::fs::read_to_string(&out)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        assert_eq!(lines.len(), turns + 2);
        assert!(lines[0].starts_with(r#"{"type":"scenario","#));
        assert!(lines.last().unwrap().starts_with(r#"{"type":"summary","#));
        assert_eq!(
            lines
                .iter()
                .filter(|l| l.contains(r#""type":"summary""#))
                .count(),
            1
        );
    }
}

#[test]
fn replay_and_report_round_trip() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_bundled(&dir, "mystery");
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Outcome: accused=Nancy, killer=Nancy, correct=true\n"));

    let again = dir.path().join("again.jsonl");
    let o = run(&[
        "replay",
        "--transcript",
        path_str(&out),
        "--out",
        path_str(&again),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());

    let o = run(&["report", "--transcript", path_str(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(
        text.contains("Outcome: accused=Nancy, killer=Nancy, correct=true\n"),
        "{text}"
    );
    assert!(text.contains("Final Prompt Token: "), "{text}");
}

#[test]
fn replay_reports_divergence() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run_bundled(&dir, "negotiation_1");
    let text = std::fs::read_to_string(&out).unwrap();
    // a recorded usage that disagrees with the summary cannot be reproduced
    let tampered = text.replace(
        r#""type":"summary","termination":"ScriptEnd","final_prompt_tokens":"#,
        r#""type":"summary","termination":"ScriptEnd","final_prompt_tokens":1"#,
    );
    assert_ne!(tampered, text);
    std::fs::write(&out, tampered).unwrap();
    let o = run(&["replay", "--transcript", path_str(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverges at line 11"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            r#"{"kind":"one_to_one","personas":[{"agent":"A","text":"a"}],"seed_speaker":"A","seed_message":"hi"}"#,
            "`personas`",
        ),
        (
            r#"{"kind":"one_to_one","personas":[{"agent":"A","text":"a"},{"agent":"B","text":""}],"seed_speaker":"A","seed_message":"hi"}"#,
            "`personas[1].text`",
        ),
        (r#"{"kind":"one_to_one","colour":"blue"}"#, "colour"),
        (
            r#"{"kind":"one_to_many","generator":{"n_passengers":20},"seed_question":"Hi"}"#,
            "`generator`",
        ),
    ];
    for (i, (config, needle)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("c{i}.json"));
        std::fs::write(&path, config).unwrap();
        let o = run(&[
            "run",
            "--config",
            path_str(&path),
            "--out",
            path_str(&dir.path().join("t.jsonl")),
        ]);
        assert_eq!(o.status.code(), Some(2), "{config}");
        assert!(stderr(&o).contains(needle), "{}", stderr(&o));
    }
    let o = run(&[
        "run",
        "--config",
        path_str(&dir.path().join("missing.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overrides_change_the_run() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.jsonl");
    let config = scenarios().join("negotiation_1.json");
    let o = run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
        "--max-prompt-tokens",
        "150",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("Termination: BudgetExhausted\n"),
        "{}",
        stdout(&o)
    );
    assert!(std::fs::read_to_string(&out)
        .unwrap()
        .contains(r#""budget":{"max_prompt_tokens":150}"#));

    let script = dir.path().join("short.jsonl");
    std::fs::write(
        &script,
        "{\"speaker\":\"Seller\",\"content\":\"No deal.\"}\n",
    )
    .unwrap();
    let o = run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
        "--script",
        path_str(&script),
    ]);
    assert!(stdout(&o).contains("Outcome: No deal\n"), "{}", stdout(&o));

    let o = run(&[
        "run",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn hub_config(dir: &TempDir, server: Option<&StubServer>) -> PathBuf {
    let script = dir.path().join("hub.jsonl");
    std::fs::write(
        &script,
        concat!(
            "{\"speaker\":\"Ann\",\"content\":\"I was in the library.\"}\n",
            "{\"speaker\":\"Ben\",\"content\":\"I was on deck.\"}\n",
            "{\"speaker\":\"Captain\",\"content\":\"Noted.\"}\n",
            "{\"speaker\":\"Captain\",\"content\":\"Ben seems suspicious.\"}\n",
        ),
    )
    .unwrap();
    let backend = match server {
        Some(s) => format!(r#"{{"base_url":"{}"}}"#, s.base_url),
        None => r#"{"mock_script":"hub.jsonl"}"#.to_string(),
    };
    let config = format!(
        r#"{{"kind":"one_to_many","personas":[{{"agent":"Captain","text":"Find the killer."}},{{"agent":"Ann","text":"You are Ann."}},{{"agent":"Ben","text":"You are Ben."}}],
            "hub":"Captain","killer":"Ann","seed_question":"Where were you?","rounds":1,"interactive":true,"backend":{backend}}}"#
    );
    let path = dir.path().join("hub.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn interactive_question_from_stdin() {
    let dir = TempDir::new().unwrap();
    let config = hub_config(&dir, None);
    let out = dir.path().join("t.jsonl");
    let o = run_with_stdin(
        &[
            "run",
            "--config",
            path_str(&config),
            "--out",
            path_str(&out),
        ],
        "Who did it?\n",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stderr(&o).contains("Answer: Ben seems suspicious."),
        "{}",
        stderr(&o)
    );
    assert!(
        stdout(&o).contains("Outcome: accused=Ben, killer=Ann, correct=false\n"),
        "{}",
        stdout(&o)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains(r#""speaker":"Human","content":"Who did it?""#));

    let o = run(&["replay", "--transcript", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    // end of input skips the question
    let o = run_with_stdin(
        &[
            "run",
            "--config",
            path_str(&config),
            "--out",
            path_str(&out),
        ],
        "",
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("Outcome: none\n"), "{}", stdout(&o));
    assert!(!std::fs::read_to_string(&out)
        .unwrap()
        .contains(r#""speaker":"Human""#));
}

#[test]
fn live_backend_against_stub() {
    let dir = TempDir::new().unwrap();
    let server = StubServer::start(vec![
        (200, completion_body("I was in the library.", 30, 6)),
        (200, completion_body("I was on deck.", 31, 5)),
        (200, completion_body("Noted.", 80, 2)),
        (200, completion_body("Ann seems suspicious.", 101, 5)),
    ]);
    let config = hub_config(&dir, Some(&server));
    let out = dir.path().join("t.jsonl");
    let mut cmd = llmsim(&[
        "run",
        "--backend",
        "live",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    let o = cmd
        .env("LLMSIM_API_KEY", "sk-stub")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .and_then(|mut child| {
            child.stdin.take().unwrap().write_all(b"Who?\n")?;
            child.wait_with_output()
        })
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("Outcome: accused=Ann, killer=Ann, correct=true\n"),
        "{text}"
    );
    assert!(text.contains("Final Prompt Token: 101\n"), "{text}");
    assert!(server
        .requests()
        .iter()
        .all(|r| r.header("authorization") == Some("Bearer sk-stub")));

    // replaying a live transcript needs no network
    let o = run(&["replay", "--transcript", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn live_backend_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let server = StubServer::start(vec![(401, error_body("Incorrect API key provided", None))]);
    let config = hub_config(&dir, Some(&server));
    let out = dir.path().join("t.jsonl");
    let o = llmsim(&[
        "run",
        "--backend",
        "live",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ])
    .env("OPENAI_API_KEY", "sk-bad")
    .output()
    .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("401"), "{}", stderr(&o));

    let o = run(&[
        "run",
        "--backend",
        "live",
        "--config",
        path_str(&config),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("LLMSIM_API_KEY"));
}
