#![no_main]

use dagsearch::data::{parse_dataset, LabelColumn};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_dataset(data, LabelColumn::Last);
    let _ = parse_dataset(data, LabelColumn::Named("label"));
});
