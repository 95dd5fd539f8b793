#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchreg::matrix::{parse_libsvm, write_libsvm};

fuzz_target!(|data: &[u8]| {
    let Ok((x, y)) = parse_libsvm(data, None) else { return };
    assert_eq!(x.n(), y.len());
    // Whatever parses must survive a write/parse round trip unchanged.
    let mut buf = Vec::new();
    write_libsvm(&mut buf, &x, y.as_slice()).unwrap();
    let (x2, y2) = parse_libsvm(&buf[..], Some(x.d())).unwrap();
    assert_eq!(y2.as_slice(), y.as_slice());
    assert_eq!(x2.to_dense_data(), x.to_dense_data());
});
