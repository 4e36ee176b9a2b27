//! Text formats.
//!
//! * `nsbox/1`: a JSON object with `format`, `inputs: [2,2]`, `outputs: [2,2]`
//!   and `p`, a 4-deep array indexed `[x][y][a][b]`.
//! * `nsbox3/1`: the tripartite extension with `eve_inputs` and a 6-deep `q`
//!   array indexed `[x][y][z][a][b][e]`.
//! * `nsbox-manifest/1`: weights and component files of a decomposition.
//!
//! Entries are strings holding `n/d` or a terminating decimal, or JSON
//! integers. Writers always emit lowest-terms `n/d` strings, so reading a
//! written document reproduces the box exactly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::boxes::{indices, NsBox, Table};
use crate::ratio::Ratio;
use crate::secrecy::TripartiteBox;

pub const BOX_FORMAT: &str = "nsbox/1";
pub const TRIPARTITE_FORMAT: &str = "nsbox3/1";
pub const MANIFEST_FORMAT: &str = "nsbox-manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("{location}: {message}")]
    Field { location: String, message: String },
}

fn field_err(location: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::Field { location: location.into(), message: message.into() }
}

fn parse_json(text: &str) -> Result<Value, FormatError> {
    serde_json::from_str(text).map_err(|e| FormatError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn expect_format(doc: &Value, expected: &str) -> Result<(), FormatError> {
    match doc.get("format") {
        Some(Value::String(s)) if s == expected => Ok(()),
        Some(other) => Err(field_err("format", format!("expected {expected:?}, found {other}"))),
        None => Err(field_err("format", "missing field")),
    }
}

fn expect_dims(doc: &Value, key: &str, expected: &[u64]) -> Result<(), FormatError> {
    let want: Vec<Value> = expected.iter().map(|&d| Value::from(d)).collect();
    match doc.get(key) {
        Some(Value::Array(v)) if *v == want => Ok(()),
        Some(other) => Err(field_err(key, format!("expected {want:?}, found {other}"))),
        None => Err(field_err(key, "missing field")),
    }
}

fn parse_entry(v: &Value, location: &str) -> Result<Ratio, FormatError> {
    match v {
        Value::String(s) => s.parse().map_err(|e| field_err(location, format!("{e}"))),
        Value::Number(n) => match n.as_i64() {
            Some(k) => Ok(Ratio::from_integer(k)),
            None => Err(field_err(location, format!("number {n} is not an integer; write decimals as strings"))),
        },
        other => Err(field_err(location, format!("expected a rational string or integer, found {other}"))),
    }
}

/// Walks a nested array of the given shape, collecting entries in row-major
/// order.
fn read_nested(v: &Value, shape: &[usize], location: &mut String, out: &mut Vec<Ratio>) -> Result<(), FormatError> {
    let Some((&len, rest)) = shape.split_first() else {
        out.push(parse_entry(v, location)?);
        return Ok(());
    };
    let arr = v.as_array().ok_or_else(|| field_err(location.clone(), format!("expected an array of length {len}")))?;
    if arr.len() != len {
        return Err(field_err(location.clone(), format!("expected length {len}, found {}", arr.len())));
    }
    for (i, item) in arr.iter().enumerate() {
        let mark = location.len();
        write!(location, "[{i}]").expect("write to string");
        read_nested(item, rest, location, out)?;
        location.truncate(mark);
    }
    Ok(())
}

pub(crate) fn table_from_value(v: &Value, name: &str) -> Result<Table, FormatError> {
    let mut entries = Vec::with_capacity(16);
    read_nested(v, &[2, 2, 2, 2], &mut name.to_string(), &mut entries)?;
    let mut it = entries.into_iter();
    Ok(crate::boxes::table_from_fn(|_, _, _, _| it.next().expect("16 entries")))
}

/// Parses an `nsbox/1` document. The box is not validated.
pub fn read_box(text: &str) -> Result<NsBox, FormatError> {
    let doc = parse_json(text)?;
    expect_format(&doc, BOX_FORMAT)?;
    expect_dims(&doc, "inputs", &[2, 2])?;
    expect_dims(&doc, "outputs", &[2, 2])?;
    let p = doc.get("p").ok_or_else(|| field_err("p", "missing field"))?;
    Ok(NsBox::from_table(table_from_value(p, "p")?))
}

fn write_table(out: &mut String, t: &Table, indent: &str) {
    out.push_str("[\n");
    for x in 0..2 {
        let _ = writeln!(out, "{indent}  [");
        for y in 0..2 {
            let row = &t[x][y];
            let _ = write!(
                out,
                "{indent}    [[\"{}\", \"{}\"], [\"{}\", \"{}\"]]",
                row[0][0], row[0][1], row[1][0], row[1][1]
            );
            out.push_str(if y == 0 { ",\n" } else { "\n" });
        }
        let _ = write!(out, "{indent}  ]");
        out.push_str(if x == 0 { ",\n" } else { "\n" });
    }
    let _ = write!(out, "{indent}]");
}

pub fn write_box(b: &NsBox) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{{\n  \"format\": \"{BOX_FORMAT}\",");
    out.push_str("  \"inputs\": [2, 2],\n  \"outputs\": [2, 2],\n  \"p\": ");
    write_table(&mut out, b.table(), "  ");
    out.push_str("\n}\n");
    out
}

/// Parses an `nsbox3/1` document. The box is not validated.
pub fn read_tripartite(text: &str) -> Result<TripartiteBox, FormatError> {
    let doc = parse_json(text)?;
    expect_format(&doc, TRIPARTITE_FORMAT)?;
    expect_dims(&doc, "inputs", &[2, 2])?;
    expect_dims(&doc, "outputs", &[2, 2, 2])?;
    let eve_inputs = doc
        .get("eve_inputs")
        .and_then(Value::as_u64)
        .filter(|&k| k >= 1)
        .ok_or_else(|| field_err("eve_inputs", "expected a positive integer"))? as usize;
    let q = doc.get("q").ok_or_else(|| field_err("q", "missing field"))?;
    let mut entries = Vec::with_capacity(32 * eve_inputs);
    read_nested(q, &[2, 2, eve_inputs, 2, 2, 2], &mut "q".to_string(), &mut entries)?;
    Ok(TripartiteBox::from_entries(eve_inputs, entries))
}

pub fn write_tripartite(t: &TripartiteBox) -> String {
    let nested: Vec<Vec<Vec<Vec<Vec<Vec<String>>>>>> = (0..2)
        .map(|x| {
            (0..2)
                .map(|y| {
                    (0..t.eve_inputs())
                        .map(|z| {
                            (0..2)
                                .map(|a| {
                                    (0..2)
                                        .map(|b| (0..2).map(|e| t.q(x, y, z, a, b, e).to_string()).collect())
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let doc = serde_json::json!({
        "format": TRIPARTITE_FORMAT,
        "inputs": [2, 2],
        "eve_inputs": t.eve_inputs(),
        "outputs": [2, 2, 2],
        "q": nested,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

/// One weighted component of a decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub label: String,
    pub weight: Ratio,
    /// File name of the component's `nsbox/1` document, relative to the
    /// manifest.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub mode: String,
    pub components: Vec<ManifestEntry>,
    /// Mode-specific verification flags.
    #[serde(default)]
    pub checks: serde_json::Map<String, Value>,
}

impl Manifest {
    pub fn new(mode: impl Into<String>) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            mode: mode.into(),
            components: Vec::new(),
            checks: Default::default(),
        }
    }

    pub fn total_weight(&self) -> Ratio {
        self.components.iter().map(|c| &c.weight).sum()
    }
}

/// Serde adapter embedding a box as its 4-deep array of `n/d` strings.
pub mod box_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &NsBox, serializer: S) -> Result<S::Ok, S::Error> {
        b.table().serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<NsBox, D::Error> {
        let t = Table::deserialize(deserializer)?;
        Ok(NsBox::from_table(t))
    }
}

/// Flattened `(index, value)` listing, handy for diagnostics.
pub fn entries(b: &NsBox) -> Vec<([usize; 4], Ratio)> {
    indices().map(|(x, y, a, bb)| ([x, y, a, bb], b.p(x, y, a, bb).clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::random_nonsignaling_box;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_noise_round_trip() {
        let text = write_box(&NsBox::maximally_mixed());
        assert!(text.contains("\"1/4\""));
        assert_eq!(read_box(&text).unwrap(), NsBox::maximally_mixed());
    }

    #[test]
    fn accepts_decimal_and_integer_entries() {
        let doc = r#"{"format":"nsbox/1","inputs":[2,2],"outputs":[2,2],
            "p":[[[["0.25","1/4"],["0.25",0.0]],[[1,0],[0,0]]],[[["1/3","2/3"],[0,0]],[[0,0],[0,1]]]]}"#;
        let err = read_box(doc).unwrap_err();
        assert_eq!(
            err,
            FormatError::Field {
                location: "p[0][0][1][1]".into(),
                message: "number 0.0 is not an integer; write decimals as strings".into()
            }
        );
        let doc = doc.replace("0.0]", "\"0.25\"]");
        let b = read_box(&doc).unwrap();
        assert_eq!(b.p(0, 0, 0, 0), &Ratio::new(1, 4));
        assert_eq!(b.p(0, 0, 1, 1), &Ratio::new(1, 4));
        assert_eq!(b.p(1, 0, 0, 0), &Ratio::new(1, 3));
        assert!(b.p(0, 1, 0, 0).is_one());
    }

    #[test]
    fn reports_locations() {
        let bad_dims = r#"{"format":"nsbox/1","inputs":[2,3],"outputs":[2,2],"p":[]}"#;
        assert!(matches!(read_box(bad_dims), Err(FormatError::Field { location, .. }) if location == "inputs"));

        let short = r#"{"format":"nsbox/1","inputs":[2,2],"outputs":[2,2],"p":[[[["1","0"]]]]}"#;
        assert!(matches!(read_box(short), Err(FormatError::Field { location, .. }) if location == "p"));
        let short_row = write_box(&NsBox::maximally_mixed()).replacen(r#"[["1/4", "1/4"], "#, "[", 1);
        assert!(matches!(read_box(&short_row), Err(FormatError::Field { location, .. }) if location == "p[0][0]"));

        let junk = write_box(&NsBox::pr(0, 0, 0)).replacen("\"1/2\"", "\"one half\"", 1);
        assert!(matches!(read_box(&junk), Err(FormatError::Field { location, .. }) if location == "p[0][0][0][0]"));

        assert!(matches!(read_box("{ nope"), Err(FormatError::Json { line: 1, .. })));
        let wrong = r#"{"format":"nsbox3/1"}"#;
        assert!(matches!(read_box(wrong), Err(FormatError::Field { location, .. }) if location == "format"));
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = Manifest::new("pr-fraction");
        m.components.push(ManifestEntry {
            label: "pr:000".into(),
            weight: Ratio::new(3, 10),
            file: "component-0.json".into(),
        });
        m.checks.insert("reconstructs".into(), Value::Bool(true));
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"3/10\""));
        assert_eq!(serde_json::from_str::<Manifest>(&text).unwrap(), m);
    }

    proptest! {
        #[test]
        fn box_round_trip_is_exact(seed in any::<u64>()) {
            let b = random_nonsignaling_box(&mut ChaCha8Rng::seed_from_u64(seed));
            let text = write_box(&b);
            prop_assert_eq!(read_box(&text).unwrap(), b.clone());
            prop_assert_eq!(write_box(&read_box(&text).unwrap()), text);
        }
    }
}
