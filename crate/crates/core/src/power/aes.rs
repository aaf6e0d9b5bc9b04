// SPDX-License-Identifier: Apache-2.0

//! Iterative AES-128 core: one round per cycle with the round key expanded
//! on the fly, and Hamming-distance toggle accounting on its registers.

const fn xtime(x: u8) -> u8 {
    (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 }
}

const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

const fn build_sbox() -> [u8; 256] {
    let mut sbox = [0u8; 256];
    let mut x = 0usize;
    while x < 256 {
        // multiplicative inverse, 0 maps to 0
        let mut inv = 0u8;
        if x != 0 {
            let mut y = 1usize;
            while y < 256 {
                if gmul(x as u8, y as u8) == 1 {
                    inv = y as u8;
                    break;
                }
                y += 1;
            }
        }
        let b = inv;
        sbox[x] =
            b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
        x += 1;
    }
    sbox
}

pub static SBOX: [u8; 256] = build_sbox();

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

/// Cycles per encryption: one load cycle and ten rounds.
pub const AES_CYCLES: usize = 11;

pub type Block = [u8; 16];

fn next_round_key(rk: &Block, round: usize) -> Block {
    let mut out = [0u8; 16];
    let t = [
        SBOX[rk[13] as usize] ^ RCON[round - 1],
        SBOX[rk[14] as usize],
        SBOX[rk[15] as usize],
        SBOX[rk[12] as usize],
    ];
    for i in 0..4 {
        out[i] = rk[i] ^ t[i];
    }
    for i in 4..16 {
        out[i] = rk[i] ^ out[i - 4];
    }
    out
}

/// Column-major state, byte `r + 4c` at row `r`, column `c`.
fn shift_rows(s: &Block) -> Block {
    let mut out = [0u8; 16];
    for c in 0..4 {
        for r in 0..4 {
            out[r + 4 * c] = s[r + 4 * ((c + r) % 4)];
        }
    }
    out
}

fn mix_columns(s: &Block) -> Block {
    let mut out = [0u8; 16];
    for c in 0..4 {
        let col = &s[4 * c..4 * c + 4];
        for r in 0..4 {
            out[4 * c + r] =
                gmul(col[r], 2) ^ gmul(col[(r + 1) % 4], 3) ^ col[(r + 2) % 4] ^ col[(r + 3) % 4];
        }
    }
    out
}

fn hd(a: &Block, b: &Block) -> u64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| u64::from((x ^ y).count_ones()))
        .sum()
}

/// Register-level AES-128 model. Registers start at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Aes128Core {
    state: Block,
    round_key: Block,
    sbox_bus: Block,
}

impl Aes128Core {
    pub fn new() -> Aes128Core {
        Aes128Core::default()
    }

    pub fn state(&self) -> &Block {
        &self.state
    }

    /// Runs one encryption and returns the ciphertext with the toggle count
    /// of each cycle: Hamming distance of the state register, round-key
    /// register and s-box output bus between consecutive cycles. The load
    /// cycle leaves the s-box bus unchanged.
    pub fn encrypt(&mut self, key: &Block, plaintext: &Block) -> (Block, [u64; AES_CYCLES]) {
        let mut toggles = [0u64; AES_CYCLES];
        let mut loaded = [0u8; 16];
        for i in 0..16 {
            loaded[i] = plaintext[i] ^ key[i];
        }
        toggles[0] = hd(&self.state, &loaded) + hd(&self.round_key, key);
        self.state = loaded;
        self.round_key = *key;
        for round in 1..=10 {
            let rk = next_round_key(&self.round_key, round);
            let mut bus = [0u8; 16];
            for i in 0..16 {
                bus[i] = SBOX[self.state[i] as usize];
            }
            let shifted = shift_rows(&bus);
            let mixed = if round == 10 {
                shifted
            } else {
                mix_columns(&shifted)
            };
            let mut next = [0u8; 16];
            for i in 0..16 {
                next[i] = mixed[i] ^ rk[i];
            }
            toggles[round] =
                hd(&self.state, &next) + hd(&self.round_key, &rk) + hd(&self.sbox_bus, &bus);
            self.state = next;
            self.round_key = rk;
            self.sbox_bus = bus;
        }
        (self.state, toggles)
    }
}

/// Encryption on a freshly reset core.
pub fn aes128_encrypt_trace(key: &Block, plaintext: &Block) -> (Block, [u64; AES_CYCLES]) {
    Aes128Core::new().encrypt(key, plaintext)
}

/// Parses 32 hex digits.
pub fn parse_block(hex: &str) -> Option<Block> {
    let hex = hex.trim();
    if hex.len() != 32 {
        return None;
    }
    let mut out = [0u8; 16];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(hex.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    Some(out)
}

pub fn format_block(b: &Block) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}
