#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ambiance_core::cluster::parse_relabel_config(text) {
        for cluster in &config.clusters {
            assert!(!cluster.members.is_empty());
            assert!(cluster.members.contains(&cluster.target));
        }
    }
});
