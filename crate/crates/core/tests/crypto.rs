//! Larger-sample checks on the primitives: address collisions, bulk
//! payloads and HE roundtrips at the test-profile key size.

use std::collections::BTreeSet;

use num_bigint::RandBigInt;

use veilsum::envelope::{self, address_of};
use veilsum::he;
use veilsum::rng::stream;
use veilsum::Profile;

#[test]
fn distinct_keys_give_distinct_addresses() {
    let mut rng = stream(11, "crypto/address-sweep");
    let mut seen = BTreeSet::new();
    for i in 0..1000 {
        let keys = envelope::keygen(Profile::Test, &mut rng).unwrap();
        assert!(
            seen.insert(address_of(&keys.sig_public)),
            "address collision at key {i}"
        );
    }
}

#[test]
fn one_mebibyte_payload_roundtrips() {
    let mut rng = stream(12, "crypto/bulk");
    let keys = envelope::keygen(Profile::Test, &mut rng).unwrap();
    let payload: Vec<u8> = (0..1 << 20).map(|_| rand::Rng::gen(&mut rng)).collect();
    let sealed = envelope::seal(&keys.enc_public, &payload, &mut rng);
    assert_eq!(envelope::open(&keys.enc_private, &sealed).unwrap(), payload);
}

#[test]
fn he_roundtrips_under_1024_bit_key() {
    let mut rng = stream(13, "crypto/he-roundtrip");
    let (pk, sk) = he::keygen(1024, &mut rng).unwrap();
    assert_eq!(pk.bit_length(), 1024);
    for _ in 0..1000 {
        let m = rng.gen_biguint_below(pk.modulus());
        assert_eq!(sk.decrypt(&pk.encrypt(&m, &mut rng).unwrap()).unwrap(), m);
    }
}
