#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = ambiance_core::ratings::parse_ratings_csv(text) {
        // accepted tables are normalized onto [0,1] with exactly 72 columns
        assert_eq!(table.dimensions.len(), 72);
        for row in &table.rows {
            assert_eq!(row.values.len(), 72);
            assert!(row.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
});
