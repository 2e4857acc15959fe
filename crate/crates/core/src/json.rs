//! JSON encodings for structures, diagrams, Δ-systems, expansions, counts,
//! and reports.
//!
//! Canonical output: interpretation arrays sorted ascending, object keys in
//! map order (serde_json's default map is ordered), big integers as decimal
//! strings. A structure looks like
//! `{"vocab":[["E",2],["P",1]],"size":3,"interp":{"E":[[0,1]],"P":[2]}}`;
//! a system lists its cells for i ≤ j only (1-based keys like "1,2") and
//! the lower triangle is recovered by reversal.

use crate::classify::TheoryClass;
use crate::delta::{DeltaSystem, Violation};
use crate::divisibility::{ClosureAuditRow, DivisibilityReport};
use crate::meq::{ExpandedStructure, Sort};
use crate::sample::AgeCount;
use crate::structure::{
    Arity, FiniteStructure, PairDiagram, StructureBuilder, UnaryDiagram, Vocabulary,
};
use serde_json::{json, Map, Value};
use std::sync::Arc;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum JsonError {
    #[error("malformed JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema error at {context}: {message}")]
    Schema { context: String, message: String },
    #[error(transparent)]
    Vocabulary(#[from] crate::structure::VocabularyError),
    #[error(transparent)]
    Structure(#[from] crate::structure::StructureError),
    #[error(transparent)]
    Delta(#[from] crate::delta::DeltaError),
}

fn schema(context: &str, message: impl Into<String>) -> JsonError {
    JsonError::Schema { context: context.to_string(), message: message.into() }
}

pub fn vocabulary_to_value(v: &Vocabulary) -> Value {
    Value::Array(
        v.symbols()
            .iter()
            .map(|s| {
                json!([s.name, match s.arity {
                    Arity::Unary => 1,
                    Arity::Binary => 2,
                }])
            })
            .collect(),
    )
}

pub fn vocabulary_from_value(v: &Value) -> Result<Arc<Vocabulary>, JsonError> {
    let list = v.as_array().ok_or_else(|| schema("vocab", "expected an array"))?;
    let mut symbols = Vec::new();
    for entry in list {
        let pair = entry.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
            schema("vocab", "expected [name, arity] pairs")
        })?;
        let name = pair[0]
            .as_str()
            .ok_or_else(|| schema("vocab", "symbol name must be a string"))?;
        let arity = match pair[1].as_u64() {
            Some(1) => Arity::Unary,
            Some(2) => Arity::Binary,
            _ => return Err(schema("vocab", "arity must be 1 or 2")),
        };
        symbols.push((name.to_string(), arity));
    }
    Ok(Arc::new(Vocabulary::new(symbols)?))
}

pub fn structure_to_value(s: &FiniteStructure) -> Value {
    let vocab = s.vocab();
    let mut interp = Map::new();
    for sym in vocab.symbols() {
        let r = vocab.lookup(&sym.name).unwrap();
        let tuples: Value = match sym.arity {
            Arity::Unary => Value::Array(
                (0..s.size())
                    .filter(|&e| s.has_unary(r.index, e))
                    .map(|e| json!(e))
                    .collect(),
            ),
            Arity::Binary => Value::Array(
                (0..s.size())
                    .flat_map(|a| (0..s.size()).map(move |b| (a, b)))
                    .filter(|&(a, b)| s.has_binary(r.index, a, b))
                    .map(|(a, b)| json!([a, b]))
                    .collect(),
            ),
        };
        interp.insert(sym.name.clone(), tuples);
    }
    json!({
        "vocab": vocabulary_to_value(vocab),
        "size": s.size(),
        "interp": Value::Object(interp),
    })
}

pub fn structure_from_value(v: &Value) -> Result<FiniteStructure, JsonError> {
    let obj = v.as_object().ok_or_else(|| schema("structure", "expected an object"))?;
    let vocab = vocabulary_from_value(
        obj.get("vocab").ok_or_else(|| schema("structure", "missing \"vocab\""))?,
    )?;
    let size = obj
        .get("size")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("structure", "missing numeric \"size\""))? as usize;
    let interp = obj
        .get("interp")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("structure", "missing \"interp\" object"))?;
    let mut b = StructureBuilder::new(Arc::clone(&vocab), size);
    for sym in vocab.symbols() {
        let tuples = interp
            .get(&sym.name)
            .and_then(Value::as_array)
            .ok_or_else(|| schema("interp", format!("missing symbol {:?}", sym.name)))?;
        let r = vocab.lookup(&sym.name).unwrap();
        for t in tuples {
            match sym.arity {
                Arity::Unary => {
                    let e = t
                        .as_u64()
                        .ok_or_else(|| schema(&sym.name, "unary tuples are integers"))?
                        as usize;
                    check_el(e, size, &sym.name)?;
                    b.set_unary(r.index, e, true);
                }
                Arity::Binary => {
                    let pair = t.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                        schema(&sym.name, "binary tuples are [a, b] pairs")
                    })?;
                    let a = pair[0]
                        .as_u64()
                        .ok_or_else(|| schema(&sym.name, "tuple entries are integers"))?
                        as usize;
                    let bb = pair[1]
                        .as_u64()
                        .ok_or_else(|| schema(&sym.name, "tuple entries are integers"))?
                        as usize;
                    check_el(a, size, &sym.name)?;
                    check_el(bb, size, &sym.name)?;
                    b.set_binary(r.index, a, bb, true);
                }
            }
        }
    }
    for key in interp.keys() {
        if vocab.lookup(key).is_none() {
            return Err(schema("interp", format!("unknown symbol {key:?}")));
        }
    }
    Ok(b.finish())
}

fn check_el(e: usize, size: usize, context: &str) -> Result<(), JsonError> {
    if e >= size {
        Err(schema(context, format!("element {e} outside universe of size {size}")))
    } else {
        Ok(())
    }
}

/// Diagram format: per symbol, binary atoms `{"xx","xy","yx","yy"}` and
/// unary atoms `{"x","y"}`.
pub fn diagram_to_value(vocab: &Vocabulary, d: &PairDiagram) -> Value {
    let mut out = Map::new();
    for k in 0..vocab.unary_count() {
        out.insert(
            vocab.unary_name(k).to_string(),
            json!({"x": d.x().unary(k), "y": d.y().unary(k)}),
        );
    }
    for k in 0..vocab.binary_count() {
        out.insert(
            vocab.binary_name(k).to_string(),
            json!({
                "xx": d.x().loop_at(k),
                "xy": d.cross_xy(k),
                "yx": d.cross_yx(k),
                "yy": d.y().loop_at(k),
            }),
        );
    }
    Value::Object(out)
}

pub fn diagram_from_value(vocab: &Vocabulary, v: &Value) -> Result<PairDiagram, JsonError> {
    let obj = v.as_object().ok_or_else(|| schema("diagram", "expected an object"))?;
    let get = |sym: &str, atom: &str| -> Result<bool, JsonError> {
        obj.get(sym)
            .and_then(Value::as_object)
            .and_then(|entry| entry.get(atom))
            .and_then(Value::as_bool)
            .ok_or_else(|| schema("diagram", format!("missing atom {sym}.{atom}")))
    };
    let mut ux = Vec::new();
    let mut uy = Vec::new();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut xy = Vec::new();
    let mut yx = Vec::new();
    for k in 0..vocab.unary_count() {
        let name = vocab.unary_name(k);
        ux.push(get(name, "x")?);
        uy.push(get(name, "y")?);
    }
    for k in 0..vocab.binary_count() {
        let name = vocab.binary_name(k);
        lx.push(get(name, "xx")?);
        ly.push(get(name, "yy")?);
        xy.push(get(name, "xy")?);
        yx.push(get(name, "yx")?);
    }
    for key in obj.keys() {
        if vocab.lookup(key).is_none() {
            return Err(schema("diagram", format!("unknown symbol {key:?}")));
        }
    }
    Ok(PairDiagram::from_parts(
        vocab,
        UnaryDiagram::from_parts(vocab, ux, lx)?,
        UnaryDiagram::from_parts(vocab, uy, ly)?,
        xy,
        yx,
    )?)
}

pub fn delta_to_value(ds: &DeltaSystem) -> Value {
    let mut cells = Map::new();
    for i in 0..ds.num_classes() {
        for j in i..ds.num_classes() {
            cells.insert(
                format!("{},{}", i + 1, j + 1),
                Value::Array(
                    ds.cell(i, j).iter().map(|d| diagram_to_value(ds.vocab(), d)).collect(),
                ),
            );
        }
    }
    json!({
        "vocab": vocabulary_to_value(ds.vocab()),
        "q": ds.q_name(),
        "l": ds.num_classes(),
        "t": ds.num_base(),
        "delta": Value::Object(cells),
    })
}

pub fn delta_from_value(v: &Value) -> Result<DeltaSystem, JsonError> {
    let obj = v.as_object().ok_or_else(|| schema("system", "expected an object"))?;
    let vocab = vocabulary_from_value(
        obj.get("vocab").ok_or_else(|| schema("system", "missing \"vocab\""))?,
    )?;
    let q = obj
        .get("q")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("system", "missing string \"q\""))?;
    let l = obj
        .get("l")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("system", "missing numeric \"l\""))? as usize;
    let t = obj
        .get("t")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema("system", "missing numeric \"t\""))? as usize;
    let cells = obj
        .get("delta")
        .and_then(Value::as_object)
        .ok_or_else(|| schema("system", "missing \"delta\" object"))?;
    let mut upper = Vec::new();
    for (key, value) in cells {
        let (i, j) = key
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| schema("delta", format!("bad cell key {key:?}")))?;
        if i == 0 || j == 0 || i > j {
            return Err(schema("delta", format!("cell keys are 1-based with i <= j, got {key:?}")));
        }
        let list = value
            .as_array()
            .ok_or_else(|| schema("delta", format!("cell {key:?} must be an array")))?;
        let mut diagrams = Vec::new();
        for d in list {
            diagrams.push(diagram_from_value(&vocab, d)?);
        }
        upper.push(((i - 1, j - 1), diagrams));
    }
    Ok(DeltaSystem::from_upper(vocab, q, l, t, upper)?)
}

pub fn violations_to_value(violations: &[Violation]) -> Value {
    json!({
        "valid": violations.is_empty(),
        "violations": violations
            .iter()
            .map(|v| json!({"kind": v.kind(), "detail": v.to_string()}))
            .collect::<Vec<Value>>(),
    })
}

/// Expanded structures carry a `"sorts"` field mapping each element to
/// `"home"` or `[relation name, block index]`.
pub fn expanded_to_value(e: &ExpandedStructure) -> Value {
    let mut v = structure_to_value(&e.expansion);
    let sorts: Vec<Value> = e
        .sorts
        .iter()
        .map(|sort| match sort {
            Sort::Home => json!("home"),
            Sort::Imaginary { rel, block } => json!([e.rel_names[*rel], block]),
        })
        .collect();
    v.as_object_mut().unwrap().insert("sorts".to_string(), Value::Array(sorts));
    v
}

pub fn age_count_to_value(c: &AgeCount) -> Value {
    json!({
        "n": c.n,
        "total": c.total.to_string(),
        "by_class_sizes": c
            .by_class_sizes
            .iter()
            .map(|(sizes, count)| json!({"sizes": sizes, "count": count.to_string()}))
            .collect::<Vec<Value>>(),
    })
}

pub fn classification_to_value(tc: &TheoryClass) -> Value {
    json!({
        "simple_su1_trivial": tc.simple_su1_trivial,
        "omega_stable": tc.omega_stable,
        "strongly_minimal": tc.strongly_minimal,
        "random_structure_warning": tc.random_structure_warning,
        "justification": tc.justification,
    })
}

pub fn divisibility_to_values(report: &DivisibilityReport) -> Vec<Value> {
    report
        .entries
        .iter()
        .map(|e| {
            json!({
                "params": e.params,
                "target_size": e.target_size,
                "class_sizes": e.class_sizes,
                "gcd": e.gcd,
                "holds": e.holds,
            })
        })
        .collect()
}

pub fn closure_audit_to_values(rows: &[ClosureAuditRow]) -> Vec<Value> {
    rows.iter()
        .map(|r| {
            json!({
                "n": r.n,
                "step": r.step,
                "expected_step": r.expected_step,
                "remaining": r.remaining,
                "step_divides_remaining": r.step_divides_remaining,
                "power_divides_total": r.power_divides_total,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::PairDiagramBuilder;

    fn rg_system() -> DeltaSystem {
        let vocab = Vocabulary::shared(vec![("Q", Arity::Binary), ("E", Arity::Binary)]).unwrap();
        let edge = PairDiagramBuilder::new(&vocab)
            .loops("Q", true, true)
            .cross("Q", true, true)
            .cross("E", true, true)
            .build();
        let nonedge = PairDiagramBuilder::new(&vocab)
            .loops("Q", true, true)
            .cross("Q", true, true)
            .build();
        DeltaSystem::from_upper(vocab, "Q", 1, 0, vec![((0, 0), vec![edge, nonedge])]).unwrap()
    }

    #[test]
    fn structure_roundtrip_and_format() {
        let vocab = Vocabulary::shared(vec![("E", Arity::Binary), ("P", Arity::Unary)]).unwrap();
        let mut b = StructureBuilder::new(vocab, 3);
        b.set("E", &[0, 1]).set("E", &[1, 0]).set("P", &[2]);
        let s = b.finish();
        let v = structure_to_value(&s);
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"interp":{"E":[[0,1],[1,0]],"P":[2]},"size":3,"vocab":[["E",2],["P",1]]}"#
        );
        let back = structure_from_value(&v).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn structure_schema_errors() {
        let bad: Value = serde_json::from_str(
            r#"{"vocab":[["E",2]],"size":2,"interp":{"E":[[0,5]]}}"#,
        )
        .unwrap();
        assert!(matches!(structure_from_value(&bad), Err(JsonError::Schema { .. })));
        let missing: Value =
            serde_json::from_str(r#"{"vocab":[["E",2]],"size":2,"interp":{}}"#).unwrap();
        assert!(matches!(structure_from_value(&missing), Err(JsonError::Schema { .. })));
    }

    #[test]
    fn delta_roundtrip() {
        let ds = rg_system();
        let v = delta_to_value(&ds);
        let back = delta_from_value(&v).unwrap();
        assert_eq!(back, ds);
        // The lower triangle is rebuilt by reversal, so only "1,1" is
        // listed here.
        let cells = v.get("delta").unwrap().as_object().unwrap();
        assert_eq!(cells.keys().collect::<Vec<_>>(), vec!["1,1"]);
    }

    #[test]
    fn padded_system_roundtrip() {
        // Padding introduces fresh symbols; the wire format carries them.
        let padded = rg_system().pad().unwrap();
        let v = delta_to_value(&padded);
        let back = delta_from_value(&v).unwrap();
        assert_eq!(back, padded);
        assert!(back.validate().is_empty());
    }

    #[test]
    fn diagram_roundtrip_all() {
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary), ("E", Arity::Binary)]).unwrap();
        for d in PairDiagram::enumerate(&vocab) {
            let v = diagram_to_value(&vocab, &d);
            assert_eq!(diagram_from_value(&vocab, &v).unwrap(), d);
        }
    }

    #[test]
    fn expanded_sorts_field() {
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary)]).unwrap();
        let mut b = StructureBuilder::new(vocab, 2);
        b.set("P", &[0]);
        let s = b.finish();
        let f = crate::logic::parse("P(x) <-> P(y)", s.vocab()).unwrap();
        let e = crate::meq::expand(&s, &[("K".to_string(), f)]).unwrap();
        let v = expanded_to_value(&e);
        let sorts = v.get("sorts").unwrap();
        assert_eq!(sorts, &json!(["home", "home", ["K", 0], ["K", 1]]));
    }
}
