#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchreg::matrix::{parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok((x, y)) = parse_csv(data) else { return };
    assert_eq!(x.n(), y.len());
    let mut buf = Vec::new();
    write_csv(&mut buf, &x, y.as_slice()).unwrap();
    let (x2, y2) = parse_csv(&buf[..]).unwrap();
    assert_eq!(y2.as_slice(), y.as_slice());
    assert_eq!(x2.to_dense_data(), x.to_dense_data());
});
