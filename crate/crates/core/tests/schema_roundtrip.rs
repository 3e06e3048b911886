// With `acceptance_runner` set these are plain functions called by the acceptance target.

use dualspace_core::schema::{parse_record, serialize_record};
use dualspace_core::synth::synthetic_record;

const PAIRING_EXAMPLE: &str = include_str!("../../../fixtures/pairing_example.json");

#[cfg_attr(not(acceptance_runner), test)]
fn pairing_example_round_trips_byte_stably() {
    let record = parse_record(PAIRING_EXAMPLE.as_bytes()).unwrap();
    record.validate().unwrap();
    let once = serialize_record(&record).unwrap();
    let reparsed = parse_record(&once).unwrap();
    assert_eq!(reparsed, record);
    assert_eq!(serialize_record(&reparsed).unwrap(), once);
}

#[cfg_attr(not(acceptance_runner), test)]
fn generated_records_round_trip() {
    for seed in 0..100 {
        let record = synthetic_record(seed);
        let bytes = serialize_record(&record).unwrap();
        let parsed = parse_record(&bytes).unwrap();
        let mut expected = record.quantized();
        expected.stem = String::new();
        assert_eq!(parsed, expected, "seed {seed}");
        assert_eq!(serialize_record(&parsed).unwrap(), bytes, "seed {seed}");
    }
}

#[cfg(acceptance_runner)]
pub fn run_all() {
    pairing_example_round_trips_byte_stably();
    generated_records_round_trip();
}
