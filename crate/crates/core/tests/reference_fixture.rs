use std::path::PathBuf;

use pmx::certify::{load_reference_certificate, reference_tables, verify_certificate, Certificate, ToleranceProfile};
use pmx::operator_algebra::Matrix;
use pmx::process::{lgyni, Distribution};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read_json(name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[test]
fn spectrum_matches_listed_eigenvalues() {
    let cert = load_reference_certificate().unwrap();
    let mut listed = reference_tables().unwrap().eigenvalues;
    listed.sort_by(f64::total_cmp);
    let ours = cert.process.op().eigenvalues().unwrap();
    assert_eq!(ours.len(), 16);
    assert_eq!(listed.len(), 16);
    for (a, b) in ours.iter().zip(&listed) {
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    assert!((cert.process.op().min_eigenvalue().unwrap() + 1.643013259010e-13).abs() <= 1e-12);
}

#[test]
fn nine_decimal_table_is_a_rounding_of_the_raw_table() {
    let t = reference_tables().unwrap();
    for (raw, rounded) in t.distribution_raw.iter().flatten().zip(t.distribution_rounded.iter().flatten()) {
        assert!((raw - rounded).abs() <= 5e-10 + 1e-15, "{raw} vs {rounded}");
        assert_eq!((raw * 1e9).round(), (rounded * 1e9).round());
    }
    let v = lgyni(&Distribution::from_bipartite_rows(&t.distribution_raw)).unwrap();
    assert!((v - t.lgyni).abs() <= 1e-12);
}

#[test]
fn instrument_channels_are_trace_preserving() {
    let cert = load_reference_certificate().unwrap();
    for inst in [&cert.ma, &cert.mb] {
        for x in 0..inst.settings() {
            let ch = inst.channel(x);
            let out = ch.output().name.clone();
            let reduced = ch.op().partial_trace(&[out.as_str()]).unwrap();
            assert!(reduced.matrix().max_abs_diff(&Matrix::identity(2)) <= 1e-10);
        }
    }
}

#[test]
fn committed_fixtures_match_the_transcription() {
    let cert = load_reference_certificate().unwrap();
    assert_eq!(read_json("wstar_cert.json"), cert.to_json());
    let dist = Distribution::from_bipartite_rows(&reference_tables().unwrap().distribution_raw);
    assert_eq!(read_json("wstar_dist.json"), dist.to_json());
}

#[test]
fn save_load_verify_is_bit_exact() {
    let cert = Certificate::load(&fixture("wstar_cert.json")).unwrap();
    let tol = ToleranceProfile::default();
    let direct = verify_certificate(&load_reference_certificate().unwrap(), &tol);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roundtrip.json");
    std::fs::write(&path, serde_json::to_string(&cert.to_json()).unwrap()).unwrap();
    let reloaded = verify_certificate(&Certificate::load(&path).unwrap(), &tol);
    assert!(direct.passed());
    assert_eq!(direct.rows.len(), reloaded.rows.len());
    for (a, b) in direct.rows.iter().zip(&reloaded.rows) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.measured.to_bits(), b.measured.to_bits(), "{}", a.name);
    }
}
