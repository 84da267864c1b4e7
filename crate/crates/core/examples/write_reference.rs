//! Writes `fixtures/wstar_cert.json` and `fixtures/wstar_dist.json` from the
//! transcription.

use std::path::Path;

use pmx::certify::{load_reference_certificate, reference_tables};
use pmx::process::Distribution;

fn main() -> pmx::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let cert = load_reference_certificate()?;
    let dist = Distribution::from_bipartite_rows(&reference_tables()?.distribution_raw);
    for (name, v) in [("wstar_cert.json", cert.to_json()), ("wstar_dist.json", dist.to_json())] {
        std::fs::write(dir.join(name), serde_json::to_string_pretty(&v)? + "\n")?;
    }
    Ok(())
}
