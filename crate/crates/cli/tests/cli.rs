//! End-to-end tests of the `hykge` binary.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hykge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hykge"))
}

struct Fixture {
    _dir: tempfile::TempDir,
    entities: PathBuf,
    triples: PathBuf,
    stopwords: PathBuf,
    snapshot: PathBuf,
    index: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let entities = dir.path().join("entities.jsonl");
        let triples = dir.path().join("triples.tsv");
        let stopwords = dir.path().join("stopwords.txt");
        std::fs::write(
            &entities,
            concat!(
                "{\"name\": \"aspirin\", \"description\": \"a common analgesic\"}\n",
                "{\"name\": \"fever\"}\n",
                "{\"name\": \"inflammation\", \"type\": \"symptom\"}\n",
            ),
        )
        .unwrap();
        std::fs::write(
            &triples,
            "aspirin\ttreats\tfever\naspirin\treduces\tinflammation\ninflammation\tcauses\tfever\n",
        )
        .unwrap();
        std::fs::write(&stopwords, "does\nhelp\nwith\n").unwrap();
        let snapshot = dir.path().join("graph.hykg");
        let index = dir.path().join("entities.idx");
        Fixture {
            _dir: dir,
            entities,
            triples,
            stopwords,
            snapshot,
            index,
        }
    }

    fn ingest(&self) {
        let out = hykge()
            .args([
                "ingest",
                "--entities",
                self.entities.to_str().unwrap(),
                "--triples",
                self.triples.to_str().unwrap(),
                "--out",
                self.snapshot.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "ingest failed: {}", stderr(&out));
    }

    fn query_args(&self) -> Vec<String> {
        vec![
            "--snapshot".into(),
            self.snapshot.to_str().unwrap().into(),
            "--index".into(),
            self.index.to_str().unwrap().into(),
            "--stopwords".into(),
            self.stopwords.to_str().unwrap().into(),
            "--doubles".into(),
        ]
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn ingest_prints_counts() {
    let fx = Fixture::new();
    let out = hykge()
        .args([
            "ingest",
            "--entities",
            fx.entities.to_str().unwrap(),
            "--triples",
            fx.triples.to_str().unwrap(),
            "--out",
            fx.snapshot.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("entities: 3"));
    assert!(text.contains("relations: 3"));
    assert!(text.contains("triplets: 3"));
}

#[test]
fn ingest_missing_file_exits_2() {
    let fx = Fixture::new();
    let out = hykge()
        .args([
            "ingest",
            "--entities",
            "/nonexistent/entities.jsonl",
            "--triples",
            fx.triples.to_str().unwrap(),
            "--out",
            fx.snapshot.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn ingest_malformed_line_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let entities = dir.path().join("e.jsonl");
    let triples = dir.path().join("t.tsv");
    std::fs::write(&entities, "{\"name\": \"A\"}\n{broken\n").unwrap();
    std::fs::write(&triples, "").unwrap();
    let out = hykge()
        .args([
            "ingest",
            "--entities",
            entities.to_str().unwrap(),
            "--triples",
            triples.to_str().unwrap(),
            "--out",
            dir.path().join("g.hykg").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(":2:"), "stderr: {}", stderr(&out));
}

/// Triplet counts must match an independent dedup pass over the raw lines.
#[test]
fn ingest_counts_match_line_dedup() {
    let dir = tempfile::tempdir().unwrap();
    let entities = dir.path().join("e.jsonl");
    let triples = dir.path().join("t.tsv");
    let mut entity_lines = String::new();
    for i in 0..50 {
        entity_lines.push_str(&format!("{{\"name\": \"n{i}\"}}\n"));
    }
    std::fs::write(&entities, entity_lines).unwrap();

    let mut lines = Vec::new();
    for i in 0..400 {
        lines.push(format!("n{}\tr{}\tn{}", i % 50, i % 7, (i * 13) % 50));
    }
    // Duplicate every line once.
    let raw: Vec<String> = lines.iter().chain(lines.iter()).cloned().collect();
    std::fs::write(&triples, raw.join("\n")).unwrap();
    let distinct: HashSet<&String> = lines.iter().collect();

    let out = hykge()
        .args([
            "ingest",
            "--entities",
            entities.to_str().unwrap(),
            "--triples",
            triples.to_str().unwrap(),
            "--out",
            dir.path().join("g.hykg").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains(&format!("triplets: {}", distinct.len())));
}

#[test]
fn index_builds_then_caches() {
    let fx = Fixture::new();
    fx.ingest();
    let args = [
        "index",
        "--snapshot",
        fx.snapshot.to_str().unwrap(),
        "--out",
        fx.index.to_str().unwrap(),
        "--doubles",
    ];
    let first = hykge().args(args).output().unwrap();
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("rebuilt"));
    let second = hykge().args(args).output().unwrap();
    assert!(stdout(&second).contains("cached"));
}

#[test]
fn query_is_deterministic_and_matches_golden() {
    let fx = Fixture::new();
    fx.ingest();
    let question = "does aspirin help with fever";
    let run = || {
        let out = hykge()
            .arg("query")
            .arg(question)
            .args(fx.query_args())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "query output must be deterministic");

    let golden_path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/query_stdout.txt");
    let golden = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(first, golden, "answer drifted from golden");
}

#[test]
fn query_trace_is_json_with_all_fields() {
    let fx = Fixture::new();
    fx.ingest();
    let out = hykge()
        .arg("query")
        .arg("does aspirin help with fever")
        .args(fx.query_args())
        .arg("--trace")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let json_start = text.find('{').expect("trace JSON in output");
    let trace: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    for field in [
        "query",
        "hypothesis_output",
        "mentions",
        "mention_source_counts",
        "anchors",
        "chain_counts",
        "fragment_count",
        "pruned_chains",
        "reader_prompt",
        "answer",
        "durations",
    ] {
        assert!(trace.get(field).is_some(), "missing trace field {field}");
    }
    assert_eq!(trace["mentions"].as_array().unwrap().len(), 2);
    assert!(trace["chain_counts"]["pruned"].as_u64().unwrap() >= 1);
}

#[test]
fn ablation_flag_disables_hypothesis() {
    let fx = Fixture::new();
    fx.ingest();
    let out = hykge()
        .arg("query")
        .arg("does aspirin help with fever")
        .args(fx.query_args())
        .args(["--trace", "--ablation", "w/o-HO"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let json_start = text.find('{').unwrap();
    let trace: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(trace["hypothesis_output"], "");
}

/// Minimal HTTP stub serving /embed, /ner, and /score so everything but
/// the generator works; the generator URL points at a dead port.
fn spawn_provider_stub() -> String {
    use std::io::{Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let header_end = loop {
                match stream.read(&mut chunk) {
                    Ok(0) => break None,
                    Ok(n) => {
                        buf.extend_from_slice(&chunk[..n]);
                        if let Some(p) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                            break Some(p);
                        }
                    }
                    Err(_) => break None,
                }
            };
            let Some(header_end) = header_end else { continue };
            let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
            let content_length: usize = head
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.trim()
                        .eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            while buf.len() < header_end + 4 + content_length {
                match stream.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                    Err(_) => break,
                }
            }
            let path = head
                .lines()
                .next()
                .and_then(|l| l.split_whitespace().nth(1))
                .unwrap_or("/")
                .to_string();
            let body = String::from_utf8_lossy(&buf[header_end + 4..]).to_string();
            let request: serde_json::Value =
                serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);

            // Deterministic pseudo-embedding from text bytes, so identical
            // strings align between index build and mention linking.
            let embed_one = |text: &str| -> Vec<f64> {
                let bytes = text.as_bytes();
                (0..8)
                    .map(|i| bytes.get(i % bytes.len().max(1)).copied().unwrap_or(1) as f64 + i as f64)
                    .collect()
            };

            let response_body = match path.as_str() {
                "/embed" => {
                    let texts = request["texts"].as_array().cloned().unwrap_or_default();
                    let vectors: Vec<Vec<f64>> = texts
                        .iter()
                        .map(|t| embed_one(t.as_str().unwrap_or("")))
                        .collect();
                    serde_json::json!({ "vectors": vectors }).to_string()
                }
                "/ner" => {
                    // Report "aspirin" and "fever" wherever they occur.
                    let text = request["text"].as_str().unwrap_or("");
                    let chars: Vec<char> = text.chars().collect();
                    let mut entities = Vec::new();
                    for needle in ["aspirin", "fever"] {
                        let needle_chars: Vec<char> = needle.chars().collect();
                        for start in 0..chars.len().saturating_sub(needle_chars.len() - 1) {
                            if chars[start..start + needle_chars.len()] == needle_chars[..] {
                                entities.push(serde_json::json!({
                                    "surface": needle,
                                    "start": start,
                                    "end": start + needle_chars.len(),
                                }));
                            }
                        }
                    }
                    serde_json::json!({ "entities": entities }).to_string()
                }
                "/score" => {
                    let n = request["pairs"].as_array().map(|a| a.len()).unwrap_or(0);
                    serde_json::json!({ "scores": vec![0.5; n] }).to_string()
                }
                _ => "{}".to_string(),
            };
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
                response_body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    format!("http://{addr}")
}

#[test]
fn unreachable_generator_exits_3_with_stage_name() {
    let fx = Fixture::new();
    fx.ingest();
    let stub = spawn_provider_stub();

    let out = hykge()
        .arg("query")
        .arg("does aspirin help with fever")
        .args([
            "--snapshot",
            fx.snapshot.to_str().unwrap(),
            "--index",
            fx.index.to_str().unwrap(),
        ])
        .env("HYKGE_GENERATOR_URL", "http://127.0.0.1:9")
        .env("HYKGE_EMBEDDER_URL", &stub)
        .env("HYKGE_SCORER_URL", &stub)
        .env("HYKGE_NER_URL", &stub)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(
        stderr(&out).contains("hypothesis_output"),
        "stage name missing from: {}",
        stderr(&out)
    );
}

#[test]
fn unreachable_embedder_at_index_build_exits_3() {
    let fx = Fixture::new();
    fx.ingest();
    let out = hykge()
        .args([
            "index",
            "--snapshot",
            fx.snapshot.to_str().unwrap(),
            "--out",
            fx.index.to_str().unwrap(),
        ])
        .env("HYKGE_GENERATOR_URL", "http://127.0.0.1:9")
        .env("HYKGE_EMBEDDER_URL", "http://127.0.0.1:9")
        .env("HYKGE_SCORER_URL", "http://127.0.0.1:9")
        .env("HYKGE_NER_URL", "http://127.0.0.1:9")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
}

#[test]
fn eval_runs_mcq_dataset() {
    let fx = Fixture::new();
    fx.ingest();
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("mcq.jsonl");
    std::fs::write(
        &dataset,
        concat!(
            "{\"id\": \"q1\", \"question\": \"pick one\", \"options\": {\"A\": \"aspirin\", \"B\": \"rest\"}, \"answer\": \"A\"}\n",
            "{\"id\": \"q2\", \"question\": \"pick two\", \"options\": {\"A\": \"x\", \"B\": \"y\", \"C\": \"z\"}, \"answer\": \"BC\"}\n",
        ),
    )
    .unwrap();
    let report_path = dir.path().join("report.json");
    let out = hykge()
        .args([
            "eval",
            "--dataset",
            dataset.to_str().unwrap(),
            "--kind",
            "mcq",
            "--seeds",
            "2",
            "--out",
            report_path.to_str().unwrap(),
        ])
        .args(fx.query_args())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("em"));
    assert!(text.contains("pcr"));
    assert!(text.contains("unavailable"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
    assert!(report["aggregates"]["em"]["mean"].is_number());
}

#[test]
fn query_config_file_overrides_defaults() {
    let fx = Fixture::new();
    fx.ingest();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    std::fs::write(
        &config,
        format!(
            "top_k = 1\n\n[resources]\nsnapshot_path = {:?}\nentity_index_path = {:?}\nstopwords_path = {:?}\n",
            fx.snapshot.to_str().unwrap(),
            fx.index.to_str().unwrap(),
            fx.stopwords.to_str().unwrap(),
        ),
    )
    .unwrap();
    let out = hykge()
        .arg("query")
        .arg("does aspirin help with fever")
        .args(["--config", config.to_str().unwrap(), "--doubles", "--trace"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let json_start = text.find('{').unwrap();
    let trace: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert!(trace["pruned_chains"].as_array().unwrap().len() <= 1);
}
