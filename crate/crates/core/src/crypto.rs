//! Confidentiality and integrity layer: length-preserving AES encryption
//! keyed by a shared password, with the carrier packet size as the
//! initialization vector, and the SHA-1-based 2-byte packet identifier
//! (PID) that doubles as a carrier-authentication tag.
//!
//! Counter mode is used so ciphertext length equals plaintext length,
//! which the size-preserving embedding requires. Note the scheme's
//! inherent weakness: two carriers of equal size reuse the keystream.
//! That is part of the protocol being reproduced, not an oversight.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha1::{Digest, Sha1};

use crate::{Error, Result};

/// Smallest total packet size eligible as a carrier (video means > 180).
pub const MIN_CARRIER_SIZE: usize = 181;
/// Largest total packet size eligible as a carrier.
pub const MAX_CARRIER_SIZE: usize = 1400;

/// Symmetric key derived from the shared password.
///
/// The key is never serialized; captures carry only ciphertext.
#[derive(Clone)]
pub struct SharedSecret {
    key: [u8; 16],
}

impl std::fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

/// 16-bit packet identifier: the two rightmost bytes of the SHA-1 hash
/// of the plaintext fragment, read big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pid(pub u16);

/// Derive the 16-byte key from a password: the first 16 bytes of
/// SHA-1(password) || SHA-1(password || 0x01).
///
/// This is plumbing, not password hardening; the channel's secrecy rests
/// on the password staying secret.
pub fn derive_key(password: &[u8]) -> Result<SharedSecret> {
    if password.is_empty() {
        return Err(Error::EmptyPassword);
    }
    let h1 = Sha1::digest(password);
    let mut salted = password.to_vec();
    salted.push(0x01);
    let h2 = Sha1::digest(&salted);
    let mut key = [0u8; 16];
    let full: Vec<u8> = h1.iter().chain(h2.iter()).copied().collect();
    key.copy_from_slice(&full[..16]);
    Ok(SharedSecret { key })
}

fn check_carrier_size(packet_size: usize) -> Result<()> {
    if !(MIN_CARRIER_SIZE..=MAX_CARRIER_SIZE).contains(&packet_size) {
        return Err(Error::InvalidCarrier(packet_size));
    }
    Ok(())
}

/// XOR the AES-128-CTR keystream for the given packet size into `data`.
/// The initial counter block is the packet size big-endian in the
/// low-order bytes of a zero 16-byte block.
fn apply_keystream(secret: &SharedSecret, packet_size: usize, data: &mut [u8]) {
    let cipher = Aes128::new(GenericArray::from_slice(&secret.key));
    let mut counter = packet_size as u128;
    for chunk in data.chunks_mut(16) {
        let mut block = GenericArray::from(counter.to_be_bytes());
        cipher.encrypt_block(&mut block);
        for (b, k) in chunk.iter_mut().zip(block.iter()) {
            *b ^= k;
        }
        counter = counter.wrapping_add(1);
    }
}

/// Encrypt a plaintext fragment for a carrier of the given total size.
/// Length-preserving: |ciphertext| = |plaintext|.
pub fn encrypt_fragment(
    plain: &[u8],
    secret: &SharedSecret,
    packet_size: usize,
) -> Result<Vec<u8>> {
    if plain.is_empty() {
        return Err(Error::Config("cannot encrypt an empty fragment".into()));
    }
    check_carrier_size(packet_size)?;
    let mut out = plain.to_vec();
    apply_keystream(secret, packet_size, &mut out);
    Ok(out)
}

/// Decrypt a carrier payload. Total over any byte sequence: non-carrier
/// payloads decrypt to pseudo-random bytes and are weeded out by the
/// PID check, never by a decryption error.
pub fn decrypt_fragment(
    cipher: &[u8],
    secret: &SharedSecret,
    packet_size: usize,
) -> Result<Vec<u8>> {
    check_carrier_size(packet_size)?;
    let mut out = cipher.to_vec();
    apply_keystream(secret, packet_size, &mut out);
    Ok(out)
}

/// PID of a plaintext fragment (SMI || chunk): the two rightmost bytes
/// of its SHA-1 digest, big-endian.
pub fn compute_pid(plain_fragment: &[u8]) -> Pid {
    let digest = Sha1::digest(plain_fragment);
    Pid(u16::from_be_bytes([digest[18], digest[19]]))
}
