//! Validator for the JSON Schema keywords used by the shipped schemas:
//! type, enum, required, properties, additionalProperties (false),
//! items, minItems, maxItems, minimum, allOf, oneOf and local `$ref`s.

use serde_json::Value;

pub fn validate(schema: &Value, doc: &Value) -> Result<(), String> {
    check(schema, schema, doc, "$")
}

fn resolve<'a>(root: &'a Value, r: &str) -> &'a Value {
    let name = r.strip_prefix("#/$defs/").unwrap_or_else(|| panic!("unsupported reference {r}"));
    &root["$defs"][name]
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        other => panic!("unsupported type {other}"),
    }
}

fn check(root: &Value, schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    let s = schema.as_object().expect("schema is an object");
    for key in s.keys() {
        let known = [
            "$schema", "$id", "title", "description", "$defs", "$ref", "type", "enum", "required", "properties",
            "additionalProperties", "items", "minItems", "maxItems", "minimum", "allOf", "oneOf",
        ];
        assert!(known.contains(&key.as_str()), "schema keyword {key} not supported by the test validator");
    }
    if let Some(r) = s.get("$ref") {
        check(root, resolve(root, r.as_str().unwrap()), v, path)?;
    }
    if let Some(all) = s.get("allOf") {
        for sub in all.as_array().unwrap() {
            check(root, sub, v, path)?;
        }
    }
    if let Some(one) = s.get("oneOf") {
        let hits = one.as_array().unwrap().iter().filter(|sub| check(root, sub, v, path).is_ok()).count();
        if hits != 1 {
            return Err(format!("{path}: matches {hits} oneOf branches"));
        }
    }
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(t) => type_matches(t, v),
            Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
            _ => panic!("bad type keyword"),
        };
        if !ok {
            return Err(format!("{path}: expected {t}, found {v}"));
        }
    }
    if let Some(e) = s.get("enum") {
        if !e.as_array().unwrap().contains(v) {
            return Err(format!("{path}: {v} not in {e}"));
        }
    }
    if let (Some(min), Some(n)) = (s.get("minimum"), v.as_f64()) {
        if n < min.as_f64().unwrap() {
            return Err(format!("{path}: {n} below {min}"));
        }
    }
    if let Some(obj) = v.as_object() {
        if let Some(req) = s.get("required") {
            for k in req.as_array().unwrap() {
                if !obj.contains_key(k.as_str().unwrap()) {
                    return Err(format!("{path}: missing {k}"));
                }
            }
        }
        let props = s.get("properties").and_then(Value::as_object);
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => check(root, sub, x, &format!("{path}.{k}"))?,
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected property {k}"))
                }
                None => {}
            }
        }
    }
    if let Some(items) = v.as_array() {
        if let Some(n) = s.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < n {
                return Err(format!("{path}: fewer than {n} items"));
            }
        }
        if let Some(n) = s.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > n {
                return Err(format!("{path}: more than {n} items"));
            }
        }
        if let Some(sub) = s.get("items") {
            for (i, x) in items.iter().enumerate() {
                check(root, sub, x, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}
