use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use mmego::dataforge::{
    assemble_paragraph, forge, synth_narrated_videos, Backend, ForgeConfig, QuestionKind, RemoteBackend, RemoteConfig,
};
use mmego::Error;

/// Serves the given bodies in order, one per connection, and records request
/// bodies and authorization headers.
fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<(String, Option<String>)>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                let lower = l.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(l["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push((String::from_utf8(buf).unwrap(), auth));
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn config(url: String, retries: u32) -> RemoteConfig {
    RemoteConfig {
        url,
        token_env: Some("MMEGO_TEST_REMOTE_TOKEN".into()),
        timeout_ms: 5_000,
        retries,
        backoff_ms: 1,
        max_in_flight: 1,
    }
}

fn paragraph(n: usize) -> mmego::dataforge::Paragraph {
    let mut v = synth_narrated_videos(1, 0).remove(0);
    v.clips.truncate(n);
    assemble_paragraph(&v).unwrap()
}

#[test]
fn invalid_responses_are_retried_then_accepted() {
    std::env::set_var("MMEGO_TEST_REMOTE_TOKEN", "sekrit");
    let good = r#"[{"question":"What did I open?","answer":"the fridge","narration_index":2}]"#;
    let (url, seen) = mock_server(vec![
        (200, r#"[{"question":"q","answer":"a","narration_index":99}]"#.into()),
        (500, "oops".into()),
        (200, good.into()),
    ]);
    let backend = RemoteBackend::new(config(url, 3));
    let qa = backend.generate(&paragraph(5), 3).unwrap();
    assert_eq!(qa.len(), 1);
    assert_eq!(qa[0].source_narration_idx, 2);
    assert_eq!(qa[0].kind, QuestionKind::Open);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&seen[0].0).unwrap();
    assert_eq!(body["n_questions"], 3);
    assert!(body["paragraph"].as_str().unwrap().starts_with("1. "));
    assert_eq!(seen[0].1.as_deref(), Some("Bearer sekrit"));
}

#[test]
fn exhausted_retries_fail() {
    let bad = r#"[{"question":"q","answer":"a","narration_index":99}]"#.to_string();
    let (url, _) = mock_server(vec![(200, bad.clone()), (200, bad)]);
    let err = RemoteBackend::new(config(url, 1)).generate(&paragraph(5), 2).unwrap_err();
    assert!(matches!(err, Error::Backend(_)), "{err}");
}

#[test]
fn forge_through_remote_backend_maps_keyframes() {
    let videos = synth_narrated_videos(2, 1);
    let body = r#"[{"question":"What did I hold?","answer":"a spoon","narration_index":1}]"#.to_string();
    let (url, _) = mock_server(vec![(200, body.clone()), (200, body)]);
    let convs = forge(&videos, &Backend::Remote(RemoteBackend::new(config(url, 0))), &ForgeConfig::default()).unwrap();
    assert_eq!(convs.len(), 2);
    for (c, v) in convs.iter().zip(&videos) {
        let first = v.clips.iter().min_by(|a, b| a.start_s.total_cmp(&b.start_s)).unwrap();
        assert_eq!(c.qa[0].keyframe_time_range_s, Some((first.start_s, first.end_s)));
        assert!(!c.qa[0].keyframe_indices.is_empty());
    }
}
