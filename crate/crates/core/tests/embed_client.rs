mod common;

use std::io::Write;

use common::StubServer;
use sts_core::embedclient::{embed_words, EmbedClient, EmbedConfig, EmbedMode};
use sts_core::Error;

fn live(url: &str, cache: Option<std::path::PathBuf>, max_batch: usize) -> EmbedClient {
    std::env::set_var("STS_STUB_KEY", "test-key");
    EmbedClient::new(EmbedConfig {
        base_url: url.to_string(),
        model_name: "stub-model".into(),
        api_key_env: "STS_STUB_KEY".into(),
        cache_dir: cache,
        max_batch,
        max_retries: 2,
        timeout_secs: 5,
        ..EmbedConfig::default()
    })
    .unwrap()
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("veta {i}")).collect()
}

#[test]
fn batches_preserve_input_order() {
    let server = StubServer::start(0);
    let client = live(&server.url, None, 3);
    let input = texts(7);
    let out = client.embed(&input).unwrap();
    let batches = server.batches.lock().unwrap().clone();
    assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 1]);
    assert_eq!(batches.concat(), input);
    for (i, v) in out.iter().enumerate() {
        assert_eq!(*v, StubServer::expected(&input[i], i % 3));
    }
    assert_eq!(client.stats().requests, 3);
}

#[test]
fn parallel_batches_keep_order() {
    let server = StubServer::start(0);
    std::env::set_var("STS_STUB_KEY", "test-key");
    let client = EmbedClient::new(EmbedConfig {
        base_url: server.url.clone(),
        api_key_env: "STS_STUB_KEY".into(),
        max_batch: 2,
        parallel_batches: 3,
        ..EmbedConfig::default()
    })
    .unwrap();
    let input = texts(9);
    let out = client.embed(&input).unwrap();
    for (i, v) in out.iter().enumerate() {
        assert_eq!(*v, StubServer::expected(&input[i], i % 2));
    }
}

#[test]
fn cache_serves_repeat_calls_bit_exactly() {
    let server = StubServer::start(0);
    let dir = tempfile::tempdir().unwrap();
    let client = live(&server.url, Some(dir.path().to_path_buf()), 16);
    let input = texts(4);
    let first = client.embed(&input).unwrap();
    assert_eq!(client.stats().cache_writes, 4);
    let second = client.embed(&input).unwrap();
    assert_eq!(client.stats().requests, 1);
    assert_eq!(client.stats().cache_hits, 4);
    let bits = |v: &Vec<Vec<f64>>| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&first), bits(&second));

    let fresh = live(&server.url, Some(dir.path().to_path_buf()), 16);
    assert_eq!(bits(&fresh.embed(&input).unwrap()), bits(&first));
    assert_eq!(fresh.stats().requests, 0);
}

#[test]
fn retries_transient_failures() {
    let server = StubServer::start(1);
    let client = live(&server.url, None, 8);
    let out = client.embed(&texts(2)).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(client.stats().requests, 2);
}

#[test]
fn gives_up_after_retries() {
    let server = StubServer::start(10);
    let client = live(&server.url, None, 8);
    match client.embed(&texts(1)).unwrap_err() {
        Error::Embed { status, .. } => assert_eq!(status, Some(503)),
        other => panic!("{other:?}"),
    }
    assert_eq!(client.stats().requests, 3);
}

#[test]
fn fixture_mode_is_offline_and_deterministic() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, r#"{{"pes": [1.0, 0.0], "mačka": [0.0, 1.0]}}"#).unwrap();
    let cfg = EmbedConfig {
        base_url: "http://127.0.0.1:9/unreachable".into(),
        mode: EmbedMode::Fixture {
            path: f.path().to_path_buf(),
        },
        ..EmbedConfig::default()
    };
    let client = EmbedClient::new(cfg.clone()).unwrap();
    let words = embed_words(&client, &["pes", "mačka", "pes"]).unwrap();
    assert_eq!(words.len(), 2);
    assert_eq!(words.get("mačka"), Some([0.0, 1.0].as_slice()));
    assert_eq!(client.stats().requests, 0);
    let again = EmbedClient::new(cfg).unwrap();
    assert_eq!(
        client.embed(&["pes".into()]).unwrap(),
        again.embed(&["pes".into()]).unwrap()
    );
    assert!(matches!(client.embed(&["kôň".into()]), Err(Error::FixtureMiss(_))));
}
