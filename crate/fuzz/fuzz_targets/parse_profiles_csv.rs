#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(profiles) = ambiance_core::aggregate::profiles_from_csv(text) {
        for profile in &profiles {
            assert_eq!(profile.flatten().len(), 129);
        }
    }
});
