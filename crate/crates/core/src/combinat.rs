//! Small combinatorial helpers: binomials, falling factorials, ranking of
//! combinations and packed tuple keys.

use num_bigint::BigInt;
use num_traits::One;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        let num = (n - i) as u128;
        let den = (i + 1) as u128;
        // acc * num / den is exact because acc*num is divisible by den at each step
        let g = gcd(acc, den);
        let (a, d) = (acc / g, den / g);
        let num = num / d;
        acc = match a.checked_mul(num) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

pub fn binomial_big(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// n (n-1) ... (n-r+1), saturating.
pub fn falling(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128);
    }
    acc
}

pub fn falling_f64(n: f64, r: usize) -> f64 {
    (0..r).map(|i| n - i as f64).product()
}

pub fn pow_usize(base: usize, exp: usize) -> usize {
    base.checked_pow(exp as u32).expect("integer power overflow")
}

/// The combination of `k` elements of `0..n` with lexicographic rank `rank`.
pub fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0usize;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let block = binomial((n - next - 1) as u64, remaining as u64);
            if rank < block {
                out.push(next);
                next += 1;
                break;
            }
            rank -= block;
            next += 1;
        }
    }
    out
}

/// Lexicographic rank of a strictly increasing combination of `0..n`.
pub fn rank_combination(n: usize, comb: &[usize]) -> u128 {
    let k = comb.len();
    let mut rank = 0u128;
    let mut prev = 0usize;
    for (i, &c) in comb.iter().enumerate() {
        for skipped in prev..c {
            rank += binomial((n - skipped - 1) as u64, (k - i - 1) as u64);
        }
        prev = c + 1;
    }
    rank
}

/// Advances `comb` to the next combination of `0..n` in lexicographic order.
pub fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in i + 1..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All subsets of `0..k` of size `size`, in lexicographic order.
pub fn subsets_of_size(k: usize, size: usize) -> Vec<Vec<usize>> {
    if size > k {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut comb: Vec<usize> = (0..size).collect();
    loop {
        out.push(comb.clone());
        if !next_combination(&mut comb, k) {
            break;
        }
    }
    out
}

/// Decodes a row-major index over `D^len` (first coordinate most significant).
pub fn decode_tuple(mut index: usize, q: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for i in (0..len).rev() {
        out[i] = index % q;
        index /= q;
    }
    out
}

pub fn encode_tuple(values: impl IntoIterator<Item = usize>, q: usize) -> usize {
    values.into_iter().fold(0, |acc, v| acc * q + v)
}

/// Increments a base-`q` odometer; returns false after the last tuple.
pub fn odometer_next(values: &mut [usize], q: usize) -> bool {
    for i in (0..values.len()).rev() {
        values[i] += 1;
        if values[i] < q {
            return true;
        }
        values[i] = 0;
    }
    false
}

/// Packs a tuple of at most 8 variable indices (each below 2^16) into one key.
pub fn pack(tuple: &[u32]) -> u128 {
    debug_assert!(tuple.len() <= 8);
    let mut key = tuple.len() as u128;
    for (i, &v) in tuple.iter().enumerate() {
        debug_assert!(v < 1 << 16);
        key |= (v as u128) << (8 + 16 * i);
    }
    key
}

pub fn unpack(key: u128) -> Vec<u32> {
    let len = (key & 0xff) as usize;
    (0..len)
        .map(|i| ((key >> (8 + 16 * i)) & 0xffff) as u32)
        .collect()
}

pub fn is_injective(tuple: &[u32]) -> bool {
    for i in 0..tuple.len() {
        for j in i + 1..tuple.len() {
            if tuple[i] == tuple[j] {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(64, 2), 2016);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial_big(100, 50).to_string(), "100891344545564193334812497256");
        assert_eq!(falling(10, 3), 720);
    }

    #[test]
    fn combination_order() {
        let all = subsets_of_size(4, 2);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        for (r, c) in all.iter().enumerate() {
            assert_eq!(rank_combination(4, c), r as u128);
            assert_eq!(&unrank_combination(4, 2, r as u128), c);
        }
    }

    #[test]
    fn tuple_codec() {
        assert_eq!(encode_tuple([1, 0, 1], 2), 5);
        assert_eq!(decode_tuple(5, 2, 3), vec![1, 0, 1]);
        let key = pack(&[3, 65535, 0]);
        assert_eq!(unpack(key), vec![3, 65535, 0]);
        assert_ne!(pack(&[0]), pack(&[0, 0]));
    }

    proptest! {
        #[test]
        fn rank_unrank_roundtrip(n in 1usize..30, k in 0usize..6, seed in 0u64..1000) {
            prop_assume!(k <= n);
            let total = binomial(n as u64, k as u64);
            let r = (seed as u128) % total.max(1);
            let comb = unrank_combination(n, k, r);
            prop_assert!(comb.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(rank_combination(n, &comb), r);
        }
    }
}
