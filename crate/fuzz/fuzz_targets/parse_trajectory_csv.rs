#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(table) = conncoord::output::parse_trajectory_csv(data) {
        let _ = conncoord::output::render_svg(&table);
    }
});
