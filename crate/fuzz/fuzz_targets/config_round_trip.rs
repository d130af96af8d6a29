#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(parsed) = conncoord::config::parse_config(data) {
        let again = conncoord::config::parse_config(&parsed.config.to_json()).expect("serialized config re-parses");
        assert_eq!(again.config, parsed.config);
    }
});
