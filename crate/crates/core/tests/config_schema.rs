use ricnet_core::config::RunConfig;
use serde_json::Value;

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn resolve<'a>(root: &'a Value, node: &'a Value) -> &'a Value {
    match node.get("$ref").and_then(Value::as_str) {
        Some(r) => resolve(root, root.pointer(r.trim_start_matches('#')).unwrap()),
        None => node,
    }
}

/// Checks that `value` has exactly the schema's keys and that stated defaults agree.
fn walk(root: &Value, node: &Value, value: &Value, at: &str) {
    if let Some(d) = node.get("default") {
        assert_eq!(d, value, "default mismatch at {at}");
    }
    let node = resolve(root, node);
    if let Some(props) = node.get("properties").and_then(Value::as_object) {
        assert_eq!(node["additionalProperties"], Value::Bool(false), "{at} must be strict");
        let obj = value.as_object().unwrap_or_else(|| panic!("{at} is not an object"));
        let mut a: Vec<&String> = props.keys().collect();
        let mut b: Vec<&String> = obj.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "keys differ at {at}");
        for (k, sub) in props {
            walk(root, sub, &obj[k], &format!("{at}.{k}"));
        }
    }
}

#[test]
fn schema_matches_serialized_defaults() {
    let s = schema();
    let defaults: Value = serde_json::from_str(&RunConfig::default().to_json()).unwrap();
    walk(&s, &s, &defaults, "$");
}

#[test]
fn enum_values_parse() {
    let s = schema();
    for v in s.pointer("/properties/noise/enum").unwrap().as_array().unwrap() {
        RunConfig::from_json(&format!(r#"{{"noise": {v}}}"#)).unwrap();
    }
    for v in s.pointer("/$defs/model/properties/kl_direction/enum").unwrap().as_array().unwrap() {
        RunConfig::from_json(&format!(r#"{{"model": {{"kl_direction": {v}}}}}"#)).unwrap();
    }
    for v in s.pointer("/$defs/encoder/properties/mode/enum").unwrap().as_array().unwrap() {
        RunConfig::from_json(&format!(r#"{{"model": {{"encoder": {{"mode": {v}}}}}}}"#)).unwrap();
    }
}
