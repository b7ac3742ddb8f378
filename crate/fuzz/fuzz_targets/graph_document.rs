#![no_main]

use dagsearch::graph::{from_json, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(graph) = from_json(text) {
        // anything accepted must survive a second trip unchanged
        let again = from_json(&to_json(&graph)).expect("re-import of exported graph");
        assert_eq!(again, graph);
    }
});
