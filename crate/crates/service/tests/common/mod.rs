//! Fixtures shared by the service test targets.
#![allow(dead_code)]

use gensss_core::bench::write_synthetic_suite;
use gensss_service::config::ServiceConfig;
use std::path::{Path, PathBuf};

pub const DIPOLE_JSON: &str =
    r#"{"name": "Marble", "sigma_s_prime": [2.19, 2.62, 3.00], "sigma_a": [0.0021, 0.0041, 0.0071], "eta": 1.3, "units": "1/mm"}"#;

/// A material directory holding the synthetic suite at `n` samples plus one
/// dipole material.
pub fn material_dir(root: &Path, n: usize) -> PathBuf {
    let dir = root.join("materials");
    write_synthetic_suite(&dir, n).unwrap();
    std::fs::write(dir.join("marble.json"), DIPOLE_JSON).unwrap();
    dir
}

/// Small and fast settings; written to `root/config.toml` so the CLI can use
/// the same values.
pub fn quick_config(root: &Path, materials: &Path) -> (ServiceConfig, PathBuf) {
    let text = format!(
        r#"
material_dir = "{}"
data_dir = "{}"
workers = 1
preview_size = 16

[ga]
population_size = 6
max_generations = 3
seed = 2

[render]
samples_per_pixel = 1
irradiance_sample_count = 64
thread_count = 1
"#,
        materials.display(),
        root.join("data").display()
    );
    let path = root.join("config.toml");
    std::fs::write(&path, &text).unwrap();
    (ServiceConfig::parse_toml(&text).unwrap(), path)
}

pub mod fuzz {
    use proptest::prelude::*;
    use serde_json::{json, Map, Value};

    fn material() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(json!("Jade")),
            Just(json!("Marble")),
            Just(json!("Blue Wax")),
            Just(json!("Chessboard (4x4)")),
            Just(json!("")),
            Just(json!("Nope")),
            Just(json!(3)),
            Just(Value::Null),
            "[a-zA-Z ()0-9]{0,12}".prop_map(Value::from),
        ]
    }

    fn material_type() -> impl Strategy<Value = Value> {
        prop_oneof![
            4 => Just(json!("Homogeneous")),
            4 => Just(json!("Heterogeneous")),
            1 => Just(json!("homogeneous")),
            1 => Just(json!("HETEROGENEOUS")),
            1 => Just(json!("Mixed")),
            1 => Just(json!(1)),
            1 => Just(Value::Null),
        ]
    }

    fn k() -> impl Strategy<Value = Value> {
        prop_oneof![
            3 => prop_oneof![Just(1u64), Just(5), Just(10)].prop_map(Value::from),
            2 => (0u64..=12).prop_map(Value::from),
            1 => any::<u64>().prop_map(Value::from),
            1 => (-20i64..0).prop_map(Value::from),
            1 => prop_oneof![Just(1.0f64), Just(5.0), Just(10.0), Just(2.5), Just(-1.0)].prop_map(Value::from),
            1 => prop_oneof![Just(json!("5")), Just(json!("ten")), Just(Value::Null), Just(json!([5])), Just(json!(true))],
        ]
    }

    fn seed() -> impl Strategy<Value = Value> {
        prop_oneof![any::<u64>().prop_map(Value::from), Just(json!(-1)), Just(json!("1")), Just(Value::Null)]
    }

    /// Request bodies: mostly objects built from plausible and hostile
    /// field values, sometimes other JSON shapes or plain garbage.
    pub fn payload() -> impl Strategy<Value = Vec<u8>> {
        let object = (
            prop::option::weighted(0.95, material()),
            prop::option::weighted(0.95, material_type()),
            prop::option::of(k()),
            prop::option::weighted(0.2, seed()),
            prop::option::weighted(0.05, "[a-z]{1,6}"),
        )
            .prop_map(|(m, t, k, s, extra)| {
                let mut o = Map::new();
                for (key, v) in [("material", m), ("type", t), ("k", k), ("seed", s)] {
                    if let Some(v) = v {
                        o.insert(key.into(), v);
                    }
                }
                if let Some(e) = extra {
                    o.insert(e, json!(1));
                }
                serde_json::to_vec(&Value::Object(o)).unwrap()
            });
        prop_oneof![
            20 => object,
            1 => Just(b"[]".to_vec()),
            1 => Just(b"null".to_vec()),
            1 => prop::collection::vec(any::<u8>(), 0..32),
        ]
    }
}
