#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(parsed) = conncoord::config::parse_config(data) {
        // anything that validates must also build a scenario or fail cleanly
        let _ = conncoord::simulator::Scenario::from_config(&parsed.config);
    }
});
