#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = artinv::nncore::checkpoint::parse_checkpoint_bytes(data);
});
