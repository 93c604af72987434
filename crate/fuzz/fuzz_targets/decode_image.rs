#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // decoding untrusted bytes must never panic; on success the buffer
    // invariants must hold
    if let Ok(image) = ambiance_core::imaging::decode_image(data) {
        assert_eq!(
            image.pixels().len(),
            image.width() as usize * image.height() as usize
        );
    }
});
