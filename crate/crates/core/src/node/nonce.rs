use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Micros;
use crate::codec::{S0_NONCE_LEN, S2_NONCE_LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nonce {
    pub value: Vec<u8>,
    pub issued_at: Micros,
}

/// Seeded nonce generator shared by every node of one run. A value is
/// never handed out twice; collisions are redrawn.
#[derive(Debug, Clone)]
pub struct NonceSource {
    rng: ChaCha8Rng,
    seen: HashSet<Vec<u8>>,
    issued: Vec<Nonce>,
}

impl NonceSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
            issued: Vec::new(),
        }
    }

    fn draw(&mut self, len: usize, now: Micros) -> Vec<u8> {
        loop {
            let mut value = vec![0; len];
            self.rng.fill_bytes(&mut value);
            if self.seen.insert(value.clone()) {
                self.issued.push(Nonce {
                    value: value.clone(),
                    issued_at: now,
                });
                return value;
            }
        }
    }

    pub fn s0(&mut self, now: Micros) -> [u8; S0_NONCE_LEN] {
        self.draw(S0_NONCE_LEN, now).try_into().expect("S0 nonce length")
    }

    pub fn s2(&mut self, now: Micros) -> [u8; S2_NONCE_LEN] {
        self.draw(S2_NONCE_LEN, now).try_into().expect("S2 nonce length")
    }

    /// Every nonce issued so far, in issue order.
    pub fn issued(&self) -> &[Nonce] {
        &self.issued
    }
}

/// S0 initialization vector: sender nonce followed by receiver nonce.
pub fn s0_iv(sender: &[u8; S0_NONCE_LEN], receiver: &[u8; S0_NONCE_LEN]) -> [u8; 2 * S0_NONCE_LEN] {
    let mut iv = [0; 2 * S0_NONCE_LEN];
    iv[..S0_NONCE_LEN].copy_from_slice(sender);
    iv[S0_NONCE_LEN..].copy_from_slice(receiver);
    iv
}
