//! Little-endian bit fields over `u64` limbs. Offset 0 is bit 0 of limb 0.

pub(crate) fn get_bits(w: &[u64], off: usize, width: usize) -> u64 {
    debug_assert!(width <= 64);
    if width == 0 {
        return 0;
    }
    let (i, s) = (off >> 6, off & 63);
    let mut v = w[i] >> s;
    if s + width > 64 {
        v |= w[i + 1] << (64 - s);
    }
    if width == 64 {
        v
    } else {
        v & ((1 << width) - 1)
    }
}

pub(crate) fn set_bits(w: &mut [u64], off: usize, width: usize, value: u64) {
    debug_assert!(width <= 64);
    if width == 0 {
        return;
    }
    let mask = if width == 64 { u64::MAX } else { (1 << width) - 1 };
    let value = value & mask;
    let (i, s) = (off >> 6, off & 63);
    w[i] = (w[i] & !(mask << s)) | (value << s);
    if s + width > 64 {
        let hi = 64 - s;
        w[i + 1] = (w[i + 1] & !(mask >> hi)) | (value >> hi);
    }
}
