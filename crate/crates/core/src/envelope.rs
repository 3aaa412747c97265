//! Public-key sealing, signatures and address derivation.
//!
//! Sealing is hybrid: a fresh 32-byte key is encapsulated with RSA-OAEP
//! (SHA-256) and the payload is encrypted with ChaCha20-Poly1305, with the
//! recipient fingerprint bound as associated data. Signatures are RSA-PSS
//! (SHA-256, randomized salt).

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use rsa::pss::{BlindedSigningKey, VerifyingKey};
use rsa::signature::{RandomizedSigner, SignatureEncoding, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint as RsaBigUint, Oaep, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{DecodeError, Reader, Writer};
use crate::{fingerprint16, Profile};

const ENC_FINGERPRINT_TAG: &str = "veilsum/enc-pk/v1";
const SYM_KEY_LEN: usize = 32;
const NONCE_LEN: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("envelope is sealed to a different recipient")]
    WrongRecipient,
    #[error("envelope failed authentication or padding checks")]
    CorruptEnvelope,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct EncPublicKey {
    key: RsaPublicKey,
    fingerprint: [u8; 16],
}

#[derive(Clone)]
pub struct EncPrivateKey {
    key: RsaPrivateKey,
    fingerprint: [u8; 16],
}

#[derive(Clone, PartialEq, Eq)]
pub struct SigPublicKey {
    key: RsaPublicKey,
}

#[derive(Clone)]
pub struct SigPrivateKey {
    key: RsaPrivateKey,
}

/// An entity's encryption and signature key pairs.
#[derive(Clone)]
pub struct EntityKeys {
    pub enc_public: EncPublicKey,
    pub enc_private: EncPrivateKey,
    pub sig_public: SigPublicKey,
    pub sig_private: SigPrivateKey,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Address(pub [u8; 20]);

#[derive(Clone, PartialEq, Eq)]
pub struct SealedEnvelope {
    pub encapsulated_key: Vec<u8>,
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
    pub recipient_fingerprint: [u8; 16],
}

#[derive(Clone, PartialEq, Eq)]
pub struct Signature(pub Vec<u8>);

pub fn keygen<R: RngCore + CryptoRng>(
    profile: Profile,
    rng: &mut R,
) -> Result<EntityKeys, EnvelopeError> {
    let bits = profile.rsa_bits();
    let gen = |rng: &mut R| {
        RsaPrivateKey::new(rng, bits).map_err(|e| EnvelopeError::KeyGeneration(e.to_string()))
    };
    let enc = gen(rng)?;
    let sig = gen(rng)?;
    let enc_public = EncPublicKey::from_rsa(enc.to_public_key());
    let fingerprint = enc_public.fingerprint;
    Ok(EntityKeys {
        enc_public,
        enc_private: EncPrivateKey {
            key: enc,
            fingerprint,
        },
        sig_public: SigPublicKey {
            key: sig.to_public_key(),
        },
        sig_private: SigPrivateKey { key: sig },
    })
}

fn encode_rsa_public(key: &RsaPublicKey) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(&key.n().to_bytes_be())
        .bytes(&key.e().to_bytes_be());
    w.finish()
}

fn decode_rsa_public(bytes: &[u8]) -> Result<RsaPublicKey, DecodeError> {
    let mut r = Reader::new(bytes);
    let n = r.bytes()?;
    let e = r.bytes()?;
    r.finish()?;
    for part in [n, e] {
        if part.is_empty() || part[0] == 0 {
            return Err(DecodeError::NonCanonicalInteger);
        }
    }
    RsaPublicKey::new(RsaBigUint::from_bytes_be(n), RsaBigUint::from_bytes_be(e))
        .map_err(|_| DecodeError::Invalid("RSA public key"))
}

impl EncPublicKey {
    fn from_rsa(key: RsaPublicKey) -> Self {
        let fingerprint = fingerprint16(ENC_FINGERPRINT_TAG, &encode_rsa_public(&key));
        Self { key, fingerprint }
    }

    pub fn fingerprint(&self) -> [u8; 16] {
        self.fingerprint
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_rsa_public(&self.key)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        Ok(Self::from_rsa(decode_rsa_public(bytes)?))
    }
}

impl EncPrivateKey {
    pub fn fingerprint(&self) -> [u8; 16] {
        self.fingerprint
    }
}

impl SigPublicKey {
    pub fn encode(&self) -> Vec<u8> {
        encode_rsa_public(&self.key)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        Ok(Self {
            key: decode_rsa_public(bytes)?,
        })
    }
}

impl fmt::Debug for EncPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncPublicKey({})", hex::encode(self.fingerprint))
    }
}

impl fmt::Debug for EncPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncPrivateKey({})", hex::encode(self.fingerprint))
    }
}

impl fmt::Debug for SigPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigPublicKey({})", address_of(self))
    }
}

impl fmt::Debug for SigPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SigPrivateKey(..)")
    }
}

impl fmt::Debug for EntityKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EntityKeys")
            .field("enc_public", &self.enc_public)
            .field("sig_public", &self.sig_public)
            .finish_non_exhaustive()
    }
}

/// Seals `payload` to the holder of `pk`'s private key.
pub fn seal<R: RngCore + CryptoRng>(
    pk: &EncPublicKey,
    payload: &[u8],
    rng: &mut R,
) -> SealedEnvelope {
    let mut sym = [0u8; SYM_KEY_LEN];
    rng.fill_bytes(&mut sym);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let encapsulated_key = pk
        .key
        .encrypt(rng, Oaep::new::<Sha256>(), &sym)
        .expect("32-byte key fits every supported modulus");
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&sym));
    let body = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: payload,
                aad: &pk.fingerprint,
            },
        )
        .expect("in-memory AEAD encryption");
    SealedEnvelope {
        encapsulated_key,
        nonce,
        body,
        recipient_fingerprint: pk.fingerprint,
    }
}

pub fn open(sk: &EncPrivateKey, env: &SealedEnvelope) -> Result<Vec<u8>, EnvelopeError> {
    if env.recipient_fingerprint != sk.fingerprint {
        return Err(EnvelopeError::WrongRecipient);
    }
    let sym = sk
        .key
        .decrypt(Oaep::new::<Sha256>(), &env.encapsulated_key)
        .map_err(|_| EnvelopeError::CorruptEnvelope)?;
    if sym.len() != SYM_KEY_LEN {
        return Err(EnvelopeError::CorruptEnvelope);
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&sym));
    cipher
        .decrypt(
            Nonce::from_slice(&env.nonce),
            Payload {
                msg: &env.body,
                aad: &env.recipient_fingerprint,
            },
        )
        .map_err(|_| EnvelopeError::CorruptEnvelope)
}

pub fn sign<R: RngCore + CryptoRng>(sk: &SigPrivateKey, message: &[u8], rng: &mut R) -> Signature {
    let signer = BlindedSigningKey::<Sha256>::new(sk.key.clone());
    Signature(signer.sign_with_rng(rng, message).to_vec())
}

/// Malformed signature bytes verify as `false`.
pub fn verify(pk: &SigPublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(sig) = rsa::pss::Signature::try_from(sig.0.as_slice()) else {
        return false;
    };
    VerifyingKey::<Sha256>::new(pk.key.clone())
        .verify(message, &sig)
        .is_ok()
}

pub fn address_of(pk: &SigPublicKey) -> Address {
    let digest = Sha256::digest(pk.encode());
    Address(digest[..20].try_into().unwrap())
}

impl SealedEnvelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.recipient_fingerprint)
            .bytes(&self.encapsulated_key)
            .raw(&self.nonce)
            .bytes(&self.body);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let env = Self::read(&mut r)?;
        r.finish()?;
        Ok(env)
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let recipient_fingerprint = r.array::<16>()?;
        let encapsulated_key = r.bytes()?.to_vec();
        let nonce = r.array::<NONCE_LEN>()?;
        let body = r.bytes()?.to_vec();
        Ok(Self {
            encapsulated_key,
            nonce,
            body,
            recipient_fingerprint,
        })
    }
}

impl fmt::Debug for SealedEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SealedEnvelope(to={}, {} body bytes)",
            hex::encode(self.recipient_fingerprint),
            self.body.len()
        )
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({} bytes)", self.0.len())
    }
}

impl Address {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<Address> for String {
    fn from(a: Address) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Address {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let hex_part = s
            .strip_prefix("0x")
            .ok_or_else(|| format!("address {s:?} lacks 0x prefix"))?;
        let bytes = hex::decode(hex_part).map_err(|e| e.to_string())?;
        Ok(Address(
            bytes
                .try_into()
                .map_err(|_| "address must be 20 bytes".to_string())?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashSet;
    use std::sync::OnceLock;

    fn keys(i: usize) -> &'static EntityKeys {
        static KEYS: OnceLock<Vec<EntityKeys>> = OnceLock::new();
        &KEYS.get_or_init(|| {
            (0..2)
                .map(|i| keygen(Profile::Test, &mut stream(i, "env-test")).unwrap())
                .collect()
        })[i]
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen(Profile::Test, &mut stream(0, "env-test")).unwrap();
        assert_eq!(a.enc_public.encode(), keys(0).enc_public.encode());
        assert_eq!(a.sig_public.encode(), keys(0).sig_public.encode());
        assert_ne!(keys(0).enc_public.encode(), keys(1).enc_public.encode());
        assert_ne!(keys(0).enc_public.encode(), keys(0).sig_public.encode());
    }

    #[test]
    fn seal_open_roundtrips() {
        let mut rng = stream(1, "seal");
        let k = keys(0);
        for len in [0usize, 1, 1024, 1 << 20] {
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            let env = seal(&k.enc_public, &payload, &mut rng);
            assert_eq!(open(&k.enc_private, &env).unwrap(), payload);
            assert_eq!(SealedEnvelope::decode(&env.encode()).unwrap(), env);
        }
    }

    #[test]
    fn sealing_is_randomized() {
        let mut rng = stream(2, "seal");
        let mut seen = HashSet::new();
        for _ in 0..100 {
            assert!(seen.insert(seal(&keys(0).enc_public, b"fixed", &mut rng).encode()));
        }
    }

    #[test]
    fn wrong_recipient_and_corruption() {
        let mut rng = stream(3, "seal");
        let env = seal(&keys(0).enc_public, b"payload", &mut rng);
        assert_eq!(
            open(&keys(1).enc_private, &env),
            Err(EnvelopeError::WrongRecipient)
        );

        for i in 0..env.body.len() {
            let mut bad = env.clone();
            bad.body[i] ^= 0x01;
            assert_eq!(
                open(&keys(0).enc_private, &bad),
                Err(EnvelopeError::CorruptEnvelope)
            );
        }
        let mut bad = env.clone();
        bad.nonce[0] ^= 0x80;
        assert_eq!(
            open(&keys(0).enc_private, &bad),
            Err(EnvelopeError::CorruptEnvelope)
        );
        let mut bad = env.clone();
        bad.encapsulated_key[5] ^= 0x10;
        assert_eq!(
            open(&keys(0).enc_private, &bad),
            Err(EnvelopeError::CorruptEnvelope)
        );
    }

    #[test]
    fn reused_token_stays_openable() {
        let mut rng = stream(4, "seal");
        let env = seal(&keys(0).enc_public, b"addr", &mut rng);
        let copy = SealedEnvelope::decode(&env.encode()).unwrap();
        assert_eq!(copy.encode(), env.encode());
        assert_eq!(open(&keys(0).enc_private, &copy).unwrap(), b"addr");
    }

    #[test]
    fn signatures() {
        let mut rng = stream(5, "sig");
        let k = keys(0);
        let sig = sign(&k.sig_private, b"hello", &mut rng);
        assert!(verify(&k.sig_public, b"hello", &sig));
        assert!(!verify(&k.sig_public, b"hellp", &sig));
        assert!(!verify(&keys(1).sig_public, b"hello", &sig));
        let mut flipped = sig.clone();
        flipped.0[10] ^= 0x04;
        assert!(!verify(&k.sig_public, b"hello", &flipped));
        assert!(!verify(&k.sig_public, b"hello", &Signature(vec![])));
        assert!(!verify(
            &k.sig_public,
            b"hello",
            &Signature(vec![0xff; 300])
        ));
    }

    #[test]
    fn random_signatures_never_verify() {
        let mut rng = stream(6, "sig");
        let len = sign(&keys(0).sig_private, b"m", &mut rng).0.len();
        for _ in 0..1000 {
            let mut bytes = vec![0u8; len];
            rng.fill_bytes(&mut bytes);
            assert!(!verify(
                &keys(0).sig_public,
                b"fixed message",
                &Signature(bytes)
            ));
        }
    }

    #[test]
    fn addresses() {
        let a = address_of(&keys(0).sig_public);
        assert_eq!(a, address_of(&keys(0).sig_public));
        assert_eq!(a.0.len(), 20);
        assert_ne!(a, address_of(&keys(1).sig_public));
        let s = a.to_string();
        assert_eq!(Address::try_from(s).unwrap(), a);
    }

    #[test]
    fn public_key_encodings_roundtrip() {
        let k = keys(1);
        assert_eq!(
            EncPublicKey::decode(&k.enc_public.encode()).unwrap(),
            k.enc_public
        );
        assert_eq!(
            SigPublicKey::decode(&k.sig_public.encode()).unwrap(),
            k.sig_public
        );
    }
}
