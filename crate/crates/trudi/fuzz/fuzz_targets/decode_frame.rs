//! The frame decoder against arbitrary bytes. First input byte picks the
//! receiver's configured key width, the rest is the wire image. Decoding
//! must never panic, and anything it accepts must re-encode to the exact
//! input bytes (the encoding is canonical).

#![no_main]

use libfuzzer_sys::fuzz_target;
use trudi::wire::{compute_mac, decode_frame, encode_frame, ScKey, MAC_LEN, MIN_FRAME_LEN};

fn sc_key() -> ScKey {
    ScKey::new(std::array::from_fn(|i| i as u8))
}

fuzz_target!(|data: &[u8]| {
    let Some((&width_sel, wire)) = data.split_first() else { return };
    let sc = sc_key();
    let key_len = width_sel as usize;

    if let Ok(frame) = decode_frame(wire, &sc, key_len) {
        let encoded = encode_frame(&frame, &sc).expect("accepted frames re-encode");
        assert_eq!(encoded, wire, "decode accepted a non-canonical encoding");
    }

    // Same bytes with the tag made valid, so the structural parsing behind
    // the integrity check gets exercised too.
    if wire.len() >= MIN_FRAME_LEN {
        let mut fixed = wire.to_vec();
        let body_len = fixed.len() - MAC_LEN;
        let mac = compute_mac(&sc, &fixed[..body_len]);
        fixed[body_len..].copy_from_slice(&mac);
        if let Ok(frame) = decode_frame(&fixed, &sc, key_len) {
            let encoded = encode_frame(&frame, &sc).expect("accepted frames re-encode");
            assert_eq!(encoded, fixed, "decode accepted a non-canonical encoding");
        }
    }
});
