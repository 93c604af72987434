#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // every accepted record must satisfy the annotation invariants
    if let Ok(map) = ambiance_core::annotation::parse_annotation_reader(std::io::Cursor::new(data)) {
        for annotation in map.values() {
            annotation.validate().expect("accepted record violates invariants");
        }
    }
});
