//! XOR + run-length delta codec.
//!
//! The delta between two equal-length byte sequences is the RLE of their
//! bytewise XOR, written as a sequence of records:
//!
//! ```text
//! [zero_run: u32 BE] [literal_len: u32 BE] [literal_len bytes of XOR values]
//! ```
//!
//! Records are concatenated and together cover the full input length. An
//! unchanged buffer of length N is the single record `(N, 0)`.

use super::WireError;

const RECORD_HEADER: usize = 8;

/// Zero runs shorter than a record header are cheaper to inline as literals.
const MIN_SPLIT_RUN: usize = RECORD_HEADER;

pub fn delta_encode(base: &[u8], next: &[u8]) -> Result<Vec<u8>, WireError> {
    if base.len() != next.len() {
        return Err(WireError::LengthMismatch {
            base: base.len(),
            next: next.len(),
        });
    }
    if base.len() > u32::MAX as usize {
        return Err(WireError::Overflow);
    }
    let n = base.len();
    let xor = |i: usize| base[i] ^ next[i];
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let zero_start = i;
        while i < n && xor(i) == 0 {
            i += 1;
        }
        let zero_run = i - zero_start;
        let lit_start = i;
        // Extend the literal until a zero run long enough to pay for a new record.
        while i < n {
            if xor(i) != 0 {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < n && xor(j) == 0 && j - i < MIN_SPLIT_RUN {
                j += 1;
            }
            if j == n || j - i >= MIN_SPLIT_RUN {
                break;
            }
            i = j;
        }
        let lit_end = i;
        out.extend_from_slice(&(zero_run as u32).to_be_bytes());
        out.extend_from_slice(&((lit_end - lit_start) as u32).to_be_bytes());
        out.extend((lit_start..lit_end).map(xor));
        if i >= n {
            break;
        }
    }
    Ok(out)
}

pub fn delta_decode(base: &[u8], delta: &[u8]) -> Result<Vec<u8>, WireError> {
    let mut out = base.to_vec();
    let mut pos = 0usize;
    let mut cursor = 0usize;
    if delta.is_empty() {
        return Err(WireError::CorruptPayload("empty delta"));
    }
    while cursor < delta.len() {
        if delta.len() - cursor < RECORD_HEADER {
            return Err(WireError::CorruptPayload("truncated delta record"));
        }
        let zero_run = read_u32(&delta[cursor..]) as usize;
        let lit_len = read_u32(&delta[cursor + 4..]) as usize;
        cursor += RECORD_HEADER;
        let lit = delta
            .get(cursor..cursor.saturating_add(lit_len))
            .ok_or(WireError::CorruptPayload("truncated delta literal"))?;
        cursor += lit_len;
        pos = pos
            .checked_add(zero_run)
            .filter(|p| *p <= out.len())
            .ok_or(WireError::CorruptPayload("delta run exceeds base length"))?;
        let end = pos + lit_len;
        if end > out.len() {
            return Err(WireError::CorruptPayload("delta literal exceeds base length"));
        }
        for (dst, x) in out[pos..end].iter_mut().zip(lit) {
            *dst ^= x;
        }
        pos = end;
    }
    if pos != out.len() {
        return Err(WireError::CorruptPayload("delta does not cover base length"));
    }
    Ok(out)
}

fn read_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force reference: XOR the buffers, then split into maximal
    /// zero / nonzero spans. Used only to check coverage and decoded output,
    /// since the encoder may merge short zero runs into literals.
    fn xor_oracle(base: &[u8], next: &[u8]) -> Vec<u8> {
        base.iter().zip(next).map(|(a, b)| a ^ b).collect()
    }

    fn records(delta: &[u8]) -> Vec<(u32, u32, Vec<u8>)> {
        let mut out = Vec::new();
        let mut c = 0;
        while c < delta.len() {
            let z = read_u32(&delta[c..]);
            let l = read_u32(&delta[c + 4..]);
            out.push((z, l, delta[c + 8..c + 8 + l as usize].to_vec()));
            c += 8 + l as usize;
        }
        out
    }

    #[test]
    fn identical_buffers_are_one_zero_record() {
        let base = vec![7u8; 1000];
        let d = delta_encode(&base, &base).unwrap();
        assert_eq!(records(&d), vec![(1000, 0, vec![])]);
        assert_eq!(d, [0, 0, 3, 0xe8, 0, 0, 0, 0]);
    }

    #[test]
    fn hand_computed_tail_change() {
        let base = [0u8; 8];
        let next = [0, 0, 0, 0, 0xff, 0xff, 0xff, 0xff];
        let d = delta_encode(&base, &next).unwrap();
        assert_eq!(d, [0, 0, 0, 4, 0, 0, 0, 4, 0xff, 0xff, 0xff, 0xff]);
        assert_eq!(delta_decode(&base, &d).unwrap(), next);
    }

    #[test]
    fn trailing_zero_run_gets_its_own_record() {
        let base = [0u8; 20];
        let mut next = [0u8; 20];
        next[0] = 1;
        let d = delta_encode(&base, &next).unwrap();
        assert_eq!(records(&d), vec![(0, 1, vec![1]), (19, 0, vec![])]);
    }

    #[test]
    fn short_gaps_are_merged_into_literals() {
        let base = [0u8; 6];
        let next = [1, 0, 0, 1, 0, 0];
        let d = delta_encode(&base, &next).unwrap();
        // the gap of two zeros is inlined; the trailing two zeros reach the end
        assert_eq!(records(&d), vec![(0, 4, vec![1, 0, 0, 1]), (2, 0, vec![])]);
    }

    #[test]
    fn empty_input_round_trips() {
        let d = delta_encode(&[], &[]).unwrap();
        assert_eq!(records(&d), vec![(0, 0, vec![])]);
        assert!(delta_decode(&[], &d).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(
            delta_encode(&[0; 3], &[0; 4]),
            Err(WireError::LengthMismatch { base: 3, next: 4 })
        ));
    }

    #[test]
    fn malformed_deltas_are_rejected() {
        let base = [0u8; 8];
        // covers only 4 of 8 bytes
        assert!(delta_decode(&base, &[0, 0, 0, 4, 0, 0, 0, 0]).is_err());
        // run past the end
        assert!(delta_decode(&base, &[0, 0, 0, 9, 0, 0, 0, 0]).is_err());
        // literal length past the payload
        assert!(delta_decode(&base, &[0, 0, 0, 0, 0, 0, 0, 8, 1]).is_err());
        // header cut short
        assert!(delta_decode(&base, &[0, 0, 0]).is_err());
        assert!(delta_decode(&base, &[]).is_err());
    }

    #[test]
    fn random_64k_pairs_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(0x64);
        for _ in 0..8 {
            let base: Vec<u8> = (0..65536).map(|_| rng.random()).collect();
            let mut next = base.clone();
            for _ in 0..rng.random_range(0..4000) {
                let i = rng.random_range(0..next.len());
                next[i] = rng.random();
            }
            let d = delta_encode(&base, &next).unwrap();
            let out = delta_decode(&base, &d).unwrap();
            assert_eq!(out, next);
        }
    }

    proptest! {
        #[test]
        fn records_cover_length_and_match_xor(
            pair in (0usize..512).prop_flat_map(|n| (
                proptest::collection::vec(any::<u8>(), n),
                proptest::collection::vec(prop_oneof![Just(0u8), any::<u8>()], n),
            ))
        ) {
            let (base, mask) = pair;
            let next: Vec<u8> = base.iter().zip(&mask).map(|(a, m)| a ^ m).collect();
            let d = delta_encode(&base, &next).unwrap();
            let recs = records(&d);
            let covered: usize = recs.iter().map(|(z, l, _)| (*z + *l) as usize).sum();
            prop_assert_eq!(covered, base.len());
            // literals concatenated at their offsets reproduce the XOR stream
            let mut rebuilt = vec![0u8; base.len()];
            let mut p = 0;
            for (z, _, lit) in &recs {
                p += *z as usize;
                rebuilt[p..p + lit.len()].copy_from_slice(lit);
                p += lit.len();
            }
            prop_assert_eq!(&rebuilt, &xor_oracle(&base, &next));
            prop_assert_eq!(delta_decode(&base, &d).unwrap(), next);
        }
    }
}
