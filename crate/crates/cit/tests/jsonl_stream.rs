use std::collections::BTreeSet;

use cit::jsonl::{read_corpus, write_corpus, JsonlStream};
use cit::CliError;
use cit_core::data::{
    CorpusParams, PairRecord, RecordSource, SyntheticCorpusSpec, SyntheticStream,
};

fn records(n: usize) -> Vec<PairRecord> {
    let spec = SyntheticCorpusSpec::generate(&CorpusParams::default(), 5, 6).unwrap();
    SyntheticStream::new(spec)
        .unwrap()
        .next_raw_batch(n)
        .unwrap()
}

#[test]
fn corpus_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let recs = records(100);
    write_corpus(&path, &recs).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 100);
    assert_eq!(read_corpus(&path).unwrap(), recs);
}

#[test]
fn malformed_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\n").unwrap();
    match JsonlStream::open(&path, 0) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let mut text = String::new();
    for r in records(3) {
        text.push_str(&serde_json::to_string(&r).unwrap());
        text.push('\n');
    }
    text.push_str("{\"id\": 9, \"img\": [1.0]}\n");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(
        read_corpus(&path),
        Err(CliError::Parse { line: 4, .. })
    ));
}

#[test]
fn empty_file_is_an_empty_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.jsonl");
    std::fs::write(&path, "\n\n").unwrap();
    assert!(matches!(
        JsonlStream::open(&path, 0),
        Err(CliError::Core(cit_core::Error::EmptySource))
    ));
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.jsonl");
    let r = records(1);
    write_corpus(&path, [&r[0], &r[0]]).unwrap();
    assert!(matches!(
        JsonlStream::open(&path, 0),
        Err(CliError::Parse { line: 2, .. })
    ));
}

#[test]
fn every_epoch_is_a_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let recs = records(7);
    write_corpus(&path, &recs).unwrap();
    let mut s = JsonlStream::open(&path, 42).unwrap();
    let ids: Vec<u64> = s
        .next_text_batch(21)
        .unwrap()
        .iter()
        .map(|v| v.id)
        .collect();
    assert_eq!(ids.len(), 21);
    let all: BTreeSet<u64> = recs.iter().map(|r| r.id).collect();
    for epoch in ids.chunks(7) {
        assert_eq!(epoch.iter().copied().collect::<BTreeSet<_>>(), all);
    }
    assert_ne!(ids[..7], ids[7..14], "epochs should be reshuffled");
    // the 21st read finished the third pass, the wrap happens on the next read
    assert_eq!(s.exhaustion_count(), 2);

    let mut again = JsonlStream::open(&path, 42).unwrap();
    let replay: Vec<u64> = again
        .next_text_batch(21)
        .unwrap()
        .iter()
        .map(|v| v.id)
        .collect();
    assert_eq!(ids, replay);
}

#[test]
fn fetch_returns_the_stored_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let recs = records(10);
    write_corpus(&path, &recs).unwrap();
    let mut s = JsonlStream::open(&path, 1).unwrap();
    let got = s.fetch(&[recs[3].id, recs[0].id]).unwrap();
    assert_eq!(got[0], recs[3].clone().strip());
    assert_eq!(got[1], recs[0].clone().strip());
    assert!(s.fetch(&[10_000]).is_err());
}
