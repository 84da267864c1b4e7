//! Certificate bundles, the transcribed reference certificate and the full
//! residual verification.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::channels::{ChoiOperator, InstrumentSet};
use crate::error::{Error, Result};
use crate::operator_algebra::{Matrix, Operator, SystemLabel};
use crate::process::{
    born_probabilities, normalization_residuals, CorrelationFunctional, Distribution, ProcessMatrix, Theory,
};

pub const CERTIFICATE_VERSION: u64 = 1;

/// Transcription of the reference process, instruments and tables.
pub const TRANSCRIPTION: &str = include_str!("../../../fixtures/wstar_transcription.json");

/// SHA-256 of `TRANSCRIPTION`.
pub const TRANSCRIPTION_SHA256: &str = "4d6d9dad70bd3a5e6ed669d1c38bd276eae4b79216f15d76acd4d7441d56ebb6";

/// Agreement required between a listed block and the transpose of its mirror.
pub const BLOCK_MIRROR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceProfile {
    pub psd_min_eig: f64,
    pub affine_max: f64,
    pub tp_max: f64,
    pub prob_max: f64,
    pub value_abs: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        ToleranceProfile { psd_min_eig: 1e-8, affine_max: 1e-9, tp_max: 1e-9, prob_max: 1e-9, value_abs: 1e-9 }
    }
}

impl ToleranceProfile {
    pub fn validate(&self) -> Result<()> {
        let all = [self.psd_min_eig, self.affine_max, self.tp_max, self.prob_max, self.value_abs];
        if all.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Unsupported("tolerances must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, f: f64) -> Self {
        ToleranceProfile {
            psd_min_eig: self.psd_min_eig * f,
            affine_max: self.affine_max * f,
            tp_max: self.tp_max * f,
            prob_max: self.prob_max * f,
            value_abs: self.value_abs * f,
        }
    }
}

/// Named functional of a certificate.
#[derive(Clone, Debug, PartialEq)]
pub enum FunctionalSpec {
    Lgyni,
    Custom(CorrelationFunctional),
}

impl FunctionalSpec {
    pub fn functional(&self) -> CorrelationFunctional {
        match self {
            FunctionalSpec::Lgyni => CorrelationFunctional::lgyni(),
            FunctionalSpec::Custom(f) => f.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            FunctionalSpec::Lgyni => json!("lgyni"),
            FunctionalSpec::Custom(f) => json!({
                "outcomes": f.outcomes,
                "settings": f.settings,
                "coefficients": f.coefficients,
                "offset": f.offset,
            }),
        }
    }

    fn from_json(v: &Value) -> Result<Self> {
        match v {
            Value::String(s) if s == "lgyni" => Ok(FunctionalSpec::Lgyni),
            Value::Object(_) => {
                let get = |k: &str| v.get(k).cloned().ok_or_else(|| Error::Format(format!("functional needs \"{k}\"")));
                let f = CorrelationFunctional {
                    outcomes: serde_json::from_value(get("outcomes")?)?,
                    settings: serde_json::from_value(get("settings")?)?,
                    coefficients: serde_json::from_value(get("coefficients")?)?,
                    offset: serde_json::from_value(get("offset")?)?,
                };
                let n: usize = f.outcomes.iter().chain(&f.settings).product();
                if f.coefficients.len() != n || f.outcomes.len() != f.settings.len() {
                    return Err(Error::Format("functional coefficients do not match its shape".into()));
                }
                Ok(FunctionalSpec::Custom(f))
            }
            other => Err(Error::Format(format!("unknown functional {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub process: ProcessMatrix,
    pub ma: InstrumentSet,
    pub mb: InstrumentSet,
    pub distribution: Distribution,
    pub functional: FunctionalSpec,
    pub value: f64,
    pub metadata: BTreeMap<String, Value>,
}

impl Certificate {
    /// Computes the distribution and value from the process and instruments.
    pub fn assemble(
        process: ProcessMatrix,
        ma: InstrumentSet,
        mb: InstrumentSet,
        functional: FunctionalSpec,
        metadata: BTreeMap<String, Value>,
    ) -> Result<Self> {
        let distribution = born_probabilities(&process, &ma, &mb)?;
        let value = functional.functional().evaluate(&distribution)?;
        Ok(Certificate { process, ma, mb, distribution, functional, value, metadata })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "version": CERTIFICATE_VERSION,
            "theory": self.process.theory().name(),
            "process": self.process.to_json(None),
            "instruments": { "A": self.ma.to_json(), "B": self.mb.to_json() },
            "distribution": self.distribution.to_json(),
            "functional": self.functional.to_json(),
            "value": self.value,
            "residuals": verify_certificate(self, &ToleranceProfile::default()).to_json(),
            "metadata": Value::Object(self.metadata.clone().into_iter().collect::<Map<_, _>>()),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let field = |k: &str| v.get(k).ok_or_else(|| Error::Format(format!("certificate needs \"{k}\"")));
        let version = field("version")?.as_u64();
        if version != Some(CERTIFICATE_VERSION) {
            return Err(Error::Format(format!("unsupported certificate version {:?}", field("version")?)));
        }
        let process = ProcessMatrix::from_json(field("process")?, |p| {
            Err(Error::Format(format!("certificate groups must be inline, got path {p:?}")))
        })?;
        if let Some(t) = v.get("theory").and_then(Value::as_str) {
            if t != process.theory().name() {
                return Err(Error::Format(format!("certificate theory {t} but process theory {}", process.theory().name())));
            }
        }
        let inst = field("instruments")?;
        let ma = InstrumentSet::from_json(inst.get("A").ok_or_else(|| Error::Format("missing instruments.A".into()))?)?;
        let mb = InstrumentSet::from_json(inst.get("B").ok_or_else(|| Error::Format("missing instruments.B".into()))?)?;
        let distribution = Distribution::from_json(field("distribution")?)?;
        let functional = FunctionalSpec::from_json(field("functional")?)?;
        let value = field("value")?.as_f64().ok_or_else(|| Error::Format("\"value\" must be a number".into()))?;
        let metadata = match v.get("metadata") {
            Some(Value::Object(m)) => m.clone().into_iter().collect(),
            None | Some(Value::Null) => BTreeMap::new(),
            Some(_) => return Err(Error::Format("\"metadata\" must be an object".into())),
        };
        Ok(Certificate { process, ma, mb, distribution, functional, value, metadata })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// One verification row; `passed` compares `measured` against `threshold`
/// as an upper bound, or as a lower bound when `lower_bound` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub lower_bound: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub rows: Vec<Row>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "name": r.name,
                    "measured": r.measured,
                    "threshold": r.threshold,
                    "bound": if r.lower_bound { "min" } else { "max" },
                    "passed": r.passed,
                })
            })
            .collect();
        json!({ "passed": self.passed(), "rows": rows })
    }
}

fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Row {
    Row { name: name.into(), measured, threshold, lower_bound: false, passed: measured <= threshold }
}

fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Row {
    Row { name: name.into(), measured, threshold, lower_bound: true, passed: measured >= threshold }
}

fn failed(name: impl Into<String>) -> Row {
    Row { name: name.into(), measured: f64::NAN, threshold: 0.0, lower_bound: false, passed: false }
}

/// Largest `|Im Tr[W (M_{a|x} ⊗ M_{b|y})]|`.
fn probability_imag(w: &ProcessMatrix, ma: &InstrumentSet, mb: &InstrumentSet) -> f64 {
    let mut worst: f64 = 0.0;
    for (_, _, m_a) in ma.iter() {
        for (_, _, m_b) in mb.iter() {
            let t = w.op().matrix().trace_product(&m_a.matrix().kron(m_b.matrix()));
            worst = worst.max(t.im.abs());
        }
    }
    worst
}

/// Recomputes every residual of the certificate against the profile.
pub fn verify_certificate(cert: &Certificate, tol: &ToleranceProfile) -> VerificationReport {
    let mut rows = Vec::new();
    let w = &cert.process;
    let m = w.op().matrix();
    let real = matches!(w.theory(), Theory::Rqt);
    if real {
        rows.push(at_most("W realness max|Im|", m.max_imag(), tol.affine_max));
        rows.push(at_most("W symmetry max|W-W^T|", m.symmetry_deviation(), tol.affine_max));
    } else {
        rows.push(at_most("W hermiticity max|W-W^dag|", m.hermiticity_deviation(), tol.affine_max));
    }
    match w.op().min_eigenvalue() {
        Ok(l) => rows.push(at_least("W min eigenvalue", l, -tol.psd_min_eig)),
        Err(_) => rows.push(failed("W min eigenvalue")),
    }
    match normalization_residuals(w) {
        Ok(res) => {
            rows.push(at_most(format!("|Tr W - {}|", res.trace_target), res.trace_residual().abs(), tol.affine_max));
            for s in &res.subsets {
                rows.push(at_most(format!("max|r^{}|", s.label), s.max_abs(), tol.affine_max));
            }
        }
        Err(_) => rows.push(failed("normalization residuals")),
    }
    for inst in [&cert.ma, &cert.mb] {
        let p = inst.party();
        if real {
            rows.push(at_most(format!("{p} realness max|Im|"), inst.max_imag(), tol.affine_max));
            rows.push(at_most(format!("{p} symmetry max|M-M^T|"), inst.symmetry_deviation(), tol.affine_max));
        }
        rows.push(at_least(format!("{p} min eigenvalue"), inst.min_eigenvalue(), -tol.psd_min_eig));
        rows.push(at_most(format!("{p} TP residual"), inst.tp_residual(), tol.tp_max));
        rows.push(at_least(format!("{p} trace-nonincreasing margin"), inst.trace_nonincreasing_margin(), -tol.tp_max));
    }
    match born_probabilities(w, &cert.ma, &cert.mb) {
        Ok(p) => {
            rows.push(at_most("p realness max|Im|", probability_imag(w, &cert.ma, &cert.mb), tol.prob_max));
            rows.push(at_least("p min entry", p.min_entry(), -tol.prob_max));
            rows.push(at_most("p normalization", p.normalization_residual(), tol.prob_max));
            match cert.distribution.max_abs_diff(&p) {
                Ok(d) => rows.push(at_most("p recomputation", d, tol.prob_max)),
                Err(_) => rows.push(failed("p recomputation")),
            }
            match cert.functional.functional().evaluate(&p) {
                Ok(v) => rows.push(at_most("value recomputation", (v - cert.value).abs(), tol.value_abs)),
                Err(_) => rows.push(failed("value recomputation")),
            }
        }
        Err(_) => rows.push(failed("p recomputation")),
    }
    VerificationReport { rows }
}

/// Numbers printed alongside the reference certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTables {
    pub eigenvalues: Vec<f64>,
    /// `rows[(x,y)][(a,b)]`, full precision.
    pub distribution_raw: [[f64; 4]; 4],
    /// Same layout, nine decimals.
    pub distribution_rounded: [[f64; 4]; 4],
    pub lgyni: f64,
    /// Top forbidden Pauli coefficients in printed order.
    pub forbidden_top: Vec<(String, f64)>,
    pub residuals: BTreeMap<String, f64>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::FixtureCorrupt(msg.into())
}

fn parse_transcription(text: &str) -> Result<Value> {
    let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
    if digest != TRANSCRIPTION_SHA256 {
        return Err(corrupt(format!("checksum {digest} does not match {TRANSCRIPTION_SHA256}")));
    }
    let v: Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if v.get("format").and_then(Value::as_str) != Some("pmx-transcription") || v.get("version").and_then(Value::as_u64) != Some(1) {
        return Err(corrupt("unexpected format tag or version"));
    }
    Ok(v)
}

fn real_grid(v: &Value, rows: usize, cols: usize, what: &str) -> Result<Vec<f64>> {
    let grid: Vec<Vec<f64>> = serde_json::from_value(v.clone()).map_err(|e| corrupt(format!("{what}: {e}")))?;
    if grid.len() != rows || grid.iter().any(|r| r.len() != cols) {
        return Err(corrupt(format!("{what} is not {rows}×{cols}")));
    }
    Ok(grid.into_iter().flatten().collect())
}

/// Assembles the 16×16 process from listed 4×4 blocks `W_ij`, `i, j ∈ 1..4`,
/// placing `W_ij` at block `(i−1, j−1)` and checking `W_ji = W_ijᵀ`.
fn assemble_process(blocks: &Value) -> Result<Matrix> {
    let mut listed = BTreeMap::new();
    for i in 1..=4 {
        for j in 1..=4 {
            let key = format!("{i}{j}");
            let b = blocks.get(&key).ok_or_else(|| corrupt(format!("missing block {key}")))?;
            listed.insert((i, j), real_grid(b, 4, 4, &format!("block {key}"))?);
        }
    }
    for i in 1..=4 {
        for j in (i + 1)..=4 {
            let (u, l) = (&listed[&(i, j)], &listed[&(j, i)]);
            for r in 0..4 {
                for c in 0..4 {
                    if (u[r * 4 + c] - l[c * 4 + r]).abs() > BLOCK_MIRROR_TOL {
                        return Err(corrupt(format!("block {j}{i} is not the transpose of block {i}{j} at ({r},{c})")));
                    }
                }
            }
        }
    }
    let mut data = vec![0.0; 256];
    for ((i, j), b) in &listed {
        for r in 0..4 {
            for c in 0..4 {
                data[((i - 1) * 4 + r) * 16 + (j - 1) * 4 + c] = b[r * 4 + c];
            }
        }
    }
    Ok(Matrix::from_real(16, 16, &data))
}

fn transcribed_instrument(v: &Value, party: &str) -> Result<InstrumentSet> {
    let legs = [SystemLabel::new(format!("{party}1"), 2), SystemLabel::new(format!("{party}2"), 2)];
    let mut elements = Vec::new();
    for x in 0..2 {
        let mut row = Vec::new();
        for a in 0..2 {
            let key = format!("{a}|{x}");
            let m = v.get(&key).ok_or_else(|| corrupt(format!("missing instrument {party} element {key}")))?;
            let mat = Matrix::from_real(4, 4, &real_grid(m, 4, 4, &format!("{party} {key}"))?);
            if mat.symmetry_deviation() > BLOCK_MIRROR_TOL {
                return Err(corrupt(format!("instrument {party} element {key} is not symmetric")));
            }
            row.push(ChoiOperator::from_matrix(legs[0].clone(), legs[1].clone(), mat)?);
        }
        elements.push(row);
    }
    InstrumentSet::new(party, elements)
}

fn certificate_from(v: &Value) -> Result<Certificate> {
    let w = assemble_process(v.get("process_blocks").ok_or_else(|| corrupt("missing process_blocks"))?)?;
    let legs = ["A1", "A2", "B1", "B2"].map(|n| SystemLabel::new(n, 2)).to_vec();
    let process = ProcessMatrix::new(Operator::from_matrix(legs, w)?, Theory::Rqt)?;
    let inst = v.get("instruments").ok_or_else(|| corrupt("missing instruments"))?;
    let ma = transcribed_instrument(inst.get("A").ok_or_else(|| corrupt("missing instruments.A"))?, "A")?;
    let mb = transcribed_instrument(inst.get("B").ok_or_else(|| corrupt("missing instruments.B"))?, "B")?;
    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), json!("transcription"));
    metadata.insert("transcription_sha256".to_string(), json!(TRANSCRIPTION_SHA256));
    Certificate::assemble(process, ma, mb, FunctionalSpec::Lgyni, metadata)
}

/// Loads a transcription text (checksum-guarded) into a certificate.
pub fn load_transcription(text: &str) -> Result<Certificate> {
    certificate_from(&parse_transcription(text)?)
}

/// The reference certificate: transcribed process and instruments with the
/// distribution recomputed through the Born rule.
pub fn load_reference_certificate() -> Result<Certificate> {
    load_transcription(TRANSCRIPTION)
}

/// The printed tables accompanying the reference certificate.
pub fn reference_tables() -> Result<ReferenceTables> {
    let v = parse_transcription(TRANSCRIPTION)?;
    let table = |k: &str| -> Result<[[f64; 4]; 4]> {
        let flat = real_grid(v.get(k).ok_or_else(|| corrupt(format!("missing {k}")))?, 4, 4, k)?;
        let mut t = [[0.0; 4]; 4];
        for (i, x) in flat.into_iter().enumerate() {
            t[i / 4][i % 4] = x;
        }
        Ok(t)
    };
    let eigenvalues: Vec<f64> =
        serde_json::from_value(v.get("eigenvalues").cloned().unwrap_or(Value::Null)).map_err(|e| corrupt(e.to_string()))?;
    let forbidden_top: Vec<(String, f64)> =
        serde_json::from_value(v.get("forbidden_top").cloned().unwrap_or(Value::Null)).map_err(|e| corrupt(e.to_string()))?;
    let residuals: BTreeMap<String, f64> =
        serde_json::from_value(v.get("residuals").cloned().unwrap_or(Value::Null)).map_err(|e| corrupt(e.to_string()))?;
    let lgyni = v.get("lgyni").and_then(Value::as_f64).ok_or_else(|| corrupt("missing lgyni"))?;
    Ok(ReferenceTables {
        eigenvalues,
        distribution_raw: table("distribution_raw")?,
        distribution_rounded: table("distribution_rounded")?,
        lgyni,
        forbidden_top,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_algebra::C64;

    #[test]
    fn checksum_guards_the_transcription() {
        let tampered = TRANSCRIPTION.replacen("\"version\": 1", "\"version\":  1", 1);
        assert!(matches!(load_transcription(&tampered), Err(Error::FixtureCorrupt(_))));
    }

    #[test]
    fn mirror_blocks_are_cross_checked() {
        let mut v: Value = serde_json::from_str(TRANSCRIPTION).unwrap();
        let x = v["process_blocks"]["21"][0][1].as_f64().unwrap();
        v["process_blocks"]["21"][0][1] = json!(x + 1e-9);
        assert!(matches!(certificate_from(&v), Err(Error::FixtureCorrupt(_))));
    }

    #[test]
    fn reference_certificate_passes_default_profile() {
        let cert = load_reference_certificate().unwrap();
        let rep = verify_certificate(&cert, &ToleranceProfile::default());
        let bad: Vec<_> = rep.failing().map(|r| r.name.clone()).collect();
        assert!(rep.passed(), "{bad:?}");
    }

    #[test]
    fn perturbed_trace_and_zeroed_distribution_fail() {
        let cert = load_reference_certificate().unwrap();
        let mut m = cert.process.op().matrix().clone();
        for i in 0..16 {
            let z = m.get(i, i);
            m.set(i, i, z + C64::new(1e-3, 0.0));
        }
        let mut bad = cert.clone();
        bad.process = ProcessMatrix::new(cert.process.op().with_matrix(m).unwrap(), Theory::Rqt).unwrap();
        let rep = verify_certificate(&bad, &ToleranceProfile::default());
        let row = rep.rows.iter().find(|r| r.name.starts_with("|Tr W")).unwrap();
        assert!(!row.passed);
        assert!((row.measured - 1.6e-2).abs() < 1e-11);

        let mut zero = cert.clone();
        zero.distribution = Distribution::new(vec![2, 2], vec![2, 2], vec![0.0; 16]).unwrap();
        let rep = verify_certificate(&zero, &ToleranceProfile::default());
        assert!(!rep.row("p recomputation").unwrap().passed);
    }

    #[test]
    fn certificate_json_round_trip_is_bit_exact() {
        let cert = load_reference_certificate().unwrap();
        let text = serde_json::to_string(&cert.to_json()).unwrap();
        let back = Certificate::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, cert);
        let (r1, r2) = (verify_certificate(&cert, &ToleranceProfile::default()), verify_certificate(&back, &ToleranceProfile::default()));
        for (a, b) in r1.rows.iter().zip(&r2.rows) {
            assert_eq!(a.measured.to_bits(), b.measured.to_bits(), "{}", a.name);
        }
    }
}
