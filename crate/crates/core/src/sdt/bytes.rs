//! Reversible mapping between raw bytes and printable symbols.
//!
//! Every byte is assigned one Unicode scalar so that byte-level surfaces are
//! always valid, printable strings. Printable Latin-1 bytes map to themselves;
//! the rest (control characters, space, and a few gaps) are shifted into the
//! range starting at U+0100, so a space shows up as `Ġ`.

use std::collections::HashMap;
use std::sync::OnceLock;

struct ByteTable {
    forward: [char; 256],
    inverse: HashMap<char, u8>,
}

fn table() -> &'static ByteTable {
    static TABLE: OnceLock<ByteTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let keeps = |b: u8| matches!(b, b'!'..=b'~' | 0xA1..=0xAC | 0xAE..=0xFF);
        let mut forward = ['\0'; 256];
        let mut shifted = 0u32;
        for b in 0..=255u8 {
            forward[b as usize] = if keeps(b) {
                char::from(b)
            } else {
                let c = char::from_u32(256 + shifted).expect("valid scalar");
                shifted += 1;
                c
            };
        }
        let inverse = forward
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        ByteTable { forward, inverse }
    })
}

/// The printable symbol standing for `byte`.
pub fn byte_symbol(byte: u8) -> char {
    table().forward[byte as usize]
}

/// Maps raw bytes to their symbol string.
pub fn bytes_to_symbols(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_symbol(b)).collect()
}

/// Inverse of [`bytes_to_symbols`]. Returns `None` when a char is not a byte symbol.
pub fn symbols_to_bytes(symbols: &str) -> Option<Vec<u8>> {
    let inverse = &table().inverse;
    symbols.chars().map(|c| inverse.get(&c).copied()).collect()
}

/// The 256 byte symbols in byte order.
pub fn alphabet() -> Vec<String> {
    (0..=255u8).map(|b| byte_symbol(b).to_string()).collect()
}
