use crate::error::{Error, Result};

/// In-place unnormalized fast Walsh-Hadamard transform, `v <- H v`.
///
/// `H` is the Sylvester-ordered Hadamard matrix, so applying the transform
/// twice multiplies by the length.
pub fn fwht_inplace(v: &mut [f64]) -> Result<()> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::invalid(format!("fwht length {n} is not a power of two")));
    }
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Entry `(r, c)` of the Sylvester Hadamard matrix.
#[inline]
pub fn hadamard_entry(r: usize, c: usize) -> f64 {
    if (r & c).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}
