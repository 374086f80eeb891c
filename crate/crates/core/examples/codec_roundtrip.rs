//! Parameter exchange through the identity and authenticated-encryption codecs.

use fedrep::model::ParamVector;
use fedrep::privacy::{decode, encode, Codec};

fn main() -> anyhow::Result<()> {
    let v = ParamVector::new(vec![0.25, -1.5, 3.0e-8, 42.0]);

    let plain = encode(&v, &Codec::Identity);
    println!("identity: {} bytes, header {:?}", plain.len(), &plain[..4]);
    assert_eq!(decode(&plain, &Codec::Identity)?, v);

    let codec = Codec::Symmetric { key: [7; 32] };
    let sealed = encode(&v, &codec);
    println!("symmetric: {} bytes (nonce + ciphertext + tag)", sealed.len());
    assert_eq!(decode(&sealed, &codec)?, v);

    let mut tampered = sealed.clone();
    tampered[30] ^= 1;
    println!("tampered: {}", decode(&tampered, &codec).unwrap_err());
    println!("wrong key: {}", decode(&sealed, &Codec::Symmetric { key: [8; 32] }).unwrap_err());
    Ok(())
}
