//! The scenario loader against arbitrary TOML. Parsing plus validation must
//! never panic, and anything accepted must survive a serialize/reparse
//! round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;
use trudi::channel::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(scenario) = Scenario::from_toml_str(text) else { return };

    let value = toml::Value::try_from(&scenario).expect("accepted scenarios serialize");
    let rendered = value.to_string();
    let reparsed = Scenario::from_toml_str(&rendered)
        .expect("serialized form of an accepted scenario parses");
    assert_eq!(
        value,
        toml::Value::try_from(&reparsed).expect("accepted scenarios serialize"),
        "scenario changed across a serialize/reparse round trip"
    );
});
