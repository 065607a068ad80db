use ddm_core::data::{parse_idx, IMAGE_MAGIC, LABEL_MAGIC};
use ddm_core::{rng, Error};
use rand::Rng as _;

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out
}

/// Damages a valid file in one of several ways; every variant must be rejected.
fn malformed(seed: u64) -> Vec<u8> {
    let mut g = rng::stream(seed, 7);
    let dims = [
        g.random_range(1..5u32),
        g.random_range(1..5),
        g.random_range(1..5),
    ];
    let payload = (dims.iter().product::<u32>()) as usize;
    let mut good = header(IMAGE_MAGIC, &dims);
    good.extend(std::iter::repeat_n(0u8, payload));
    match g.random_range(0..5) {
        0 => {
            let mut magic: u32 = g.random();
            while magic == IMAGE_MAGIC || magic == LABEL_MAGIC {
                magic = g.random();
            }
            good[..4].copy_from_slice(&magic.to_be_bytes());
            good
        }
        1 => good[..g.random_range(0..16)].to_vec(),
        2 => {
            good.truncate(good.len() - g.random_range(1..=payload));
            good
        }
        3 => {
            good.extend(std::iter::repeat_n(7u8, g.random_range(1..10)));
            good
        }
        _ => {
            let i = g.random_range(0..3);
            good[4 + 4 * i..8 + 4 * i].copy_from_slice(&0u32.to_be_bytes());
            good
        }
    }
}

#[test]
fn malformed_headers_are_rejected() {
    for seed in 0..1000 {
        let bytes = malformed(seed);
        match parse_idx(&bytes) {
            Err(Error::Format(_)) | Err(Error::Length { .. }) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
    }
}

#[test]
fn canonical_headers_parse() {
    let mut images = header(IMAGE_MAGIC, &[2, 28, 28]);
    images.extend(std::iter::repeat_n(255u8, 2 * 784));
    assert!(parse_idx(&images).is_ok());
    let mut labels = header(LABEL_MAGIC, &[3]);
    labels.extend([1, 2, 3]);
    assert!(parse_idx(&labels).is_ok());
}
