//! Compact control-word encoding of snapped schedules.
//!
//! Layout, most significant bit first:
//!
//! ```text
//! | ramp slots (mixed radix) | n_train | r - 1 |
//! ```
//!
//! Each of the `n_max` slots holds a symbol in `[0, clock_multiple * r_max]`
//! where 0 marks an absent pulse and `k` marks tick `k - 1`. Slots are sorted
//! ascending with absent slots last, and the first slot is the most
//! significant digit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedule::{duration_periods, Coupling, MAX_RAMP_PULSES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("invalid encoding parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("cannot encode `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("corrupt control word: {0}")]
    Corrupt(String),
    #[error("tick position {0} is not an integer; snap the schedule to a clock first")]
    Unsnapped(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingParams {
    pub n_max: u32,
    pub r_max: u32,
    pub clock_multiple: u32,
    pub n_train_max: u32,
}

impl EncodingParams {
    pub const INDUCTIVE: Self = Self {
        n_max: MAX_RAMP_PULSES as u32,
        r_max: 5,
        clock_multiple: 128,
        n_train_max: 31,
    };
    pub const CAPACITIVE: Self = Self {
        n_train_max: 127,
        ..Self::INDUCTIVE
    };

    pub fn for_coupling(coupling: Coupling) -> Self {
        match coupling {
            Coupling::Inductive => Self::INDUCTIVE,
            Coupling::Capacitive => Self::CAPACITIVE,
        }
    }

    /// Symbols per slot.
    pub fn radix(&self) -> u128 {
        self.clock_multiple as u128 * self.r_max as u128 + 1
    }

    fn validate(&self) -> Result<(), EncodingError> {
        for (field, v) in [
            ("n_max", self.n_max),
            ("r_max", self.r_max),
            ("clock_multiple", self.clock_multiple),
            ("n_train_max", self.n_train_max),
        ] {
            if v == 0 {
                return Err(EncodingError::InvalidParams {
                    field,
                    reason: "must be positive".into(),
                });
            }
        }
        if self.slot_space().is_none() {
            return Err(EncodingError::InvalidParams {
                field: "n_max",
                reason: "ramp field exceeds 128 bits".into(),
            });
        }
        Ok(())
    }

    /// `radix^n_max`, when it fits in 128 bits.
    fn slot_space(&self) -> Option<u128> {
        self.radix().checked_pow(self.n_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub ramp_bits: u32,
    pub train_bits: u32,
    pub ramplen_bits: u32,
}

impl BitLayout {
    pub fn total(&self) -> u32 {
        self.ramp_bits + self.train_bits + self.ramplen_bits
    }
}

/// Bits needed to hold every integer in `[0, x)`.
fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

fn layout(params: &EncodingParams) -> Result<BitLayout, EncodingError> {
    params.validate()?;
    let space = params.slot_space().expect("validated");
    Ok(BitLayout {
        ramp_bits: ceil_log2(space),
        train_bits: ceil_log2(params.n_train_max as u128 + 1),
        ramplen_bits: ceil_log2(params.r_max as u128),
    })
}

/// `(ramp_bits, train_bits, ramplen_bits, total)`.
pub fn bit_cost(n_max: u32, r_max: u32, clock_multiple: u32, n_train_max: u32) -> Result<(u32, u32, u32, u32), EncodingError> {
    let l = layout(&EncodingParams {
        n_max,
        r_max,
        clock_multiple,
        n_train_max,
    })?;
    Ok((l.ramp_bits, l.train_bits, l.ramplen_bits, l.total()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSchedule {
    /// Most significant bit first.
    pub bits: Vec<bool>,
    pub layout: BitLayout,
    pub params: EncodingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSchedule {
    pub ticks: Vec<u64>,
    pub r_periods: u32,
    pub n_train: u32,
}

fn push_bits(out: &mut Vec<bool>, value: u128, width: u32) {
    out.extend((0..width).rev().map(|b| (value >> b) & 1 == 1));
}

fn read_bits(bits: &[bool]) -> u128 {
    bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)
}

pub fn encode(ticks: &[u64], r_periods: u32, n_train: u32, params: &EncodingParams) -> Result<EncodedSchedule, EncodingError> {
    let layout = layout(params)?;
    let reject = |field, reason: String| Err(EncodingError::Field { field, reason });
    if r_periods == 0 || r_periods > params.r_max {
        return reject("r", format!("{r_periods} outside [1, {}]", params.r_max));
    }
    if n_train > params.n_train_max {
        return reject("n_train", format!("{n_train} exceeds {}", params.n_train_max));
    }
    if ticks.len() > params.n_max as usize {
        return reject("ticks", format!("{} pulses exceed n_max = {}", ticks.len(), params.n_max));
    }
    let limit = params.clock_multiple as u64 * r_periods as u64;
    let mut sorted = ticks.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return reject("ticks", format!("duplicate tick {}", w[0]));
        }
    }
    if let Some(&t) = sorted.iter().find(|&&t| t >= limit) {
        return reject("ticks", format!("tick {t} outside [0, {limit})"));
    }

    let radix = params.radix();
    let ramp_word = (0..params.n_max as usize).fold(0u128, |acc, slot| {
        let symbol = sorted.get(slot).map_or(0, |&t| t as u128 + 1);
        acc * radix + symbol
    });
    let mut bits = Vec::with_capacity(layout.total() as usize);
    push_bits(&mut bits, ramp_word, layout.ramp_bits);
    push_bits(&mut bits, n_train as u128, layout.train_bits);
    push_bits(&mut bits, (r_periods - 1) as u128, layout.ramplen_bits);
    Ok(EncodedSchedule {
        bits,
        layout,
        params: *params,
    })
}

pub fn decode(e: &EncodedSchedule) -> Result<DecodedSchedule, EncodingError> {
    let layout = layout(&e.params)?;
    if layout != e.layout {
        return Err(EncodingError::Corrupt(format!(
            "layout {:?} does not match parameters (expected {:?})",
            e.layout, layout
        )));
    }
    if e.bits.len() != layout.total() as usize {
        return Err(EncodingError::Corrupt(format!(
            "{} bits, layout needs {}",
            e.bits.len(),
            layout.total()
        )));
    }
    let (ramp, rest) = e.bits.split_at(layout.ramp_bits as usize);
    let (train, ramplen) = rest.split_at(layout.train_bits as usize);
    let p = &e.params;

    let r_periods = read_bits(ramplen) as u32 + 1;
    if r_periods > p.r_max {
        return Err(EncodingError::Corrupt(format!("ramp length {r_periods} exceeds {}", p.r_max)));
    }
    let n_train = read_bits(train) as u32;
    if n_train > p.n_train_max {
        return Err(EncodingError::Corrupt(format!("train length {n_train} exceeds {}", p.n_train_max)));
    }

    let mut word = read_bits(ramp);
    if word >= p.slot_space().expect("validated") {
        return Err(EncodingError::Corrupt("ramp field overflows the slot alphabet".into()));
    }
    let radix = p.radix();
    let mut symbols = vec![0u128; p.n_max as usize];
    for s in symbols.iter_mut().rev() {
        *s = word % radix;
        word /= radix;
    }
    let limit = p.clock_multiple as u128 * r_periods as u128;
    let present = symbols.iter().take_while(|&&s| s != 0).count();
    if symbols[present..].iter().any(|&s| s != 0) {
        return Err(EncodingError::Corrupt("absent slot before a present pulse".into()));
    }
    let ticks: Vec<u64> = symbols[..present].iter().map(|&s| (s - 1) as u64).collect();
    if let Some(&s) = symbols[..present].iter().find(|&&s| s > limit) {
        return Err(EncodingError::Corrupt(format!(
            "symbol {s} beyond ramp of {limit} ticks"
        )));
    }
    if ticks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EncodingError::Corrupt("slots not strictly ascending".into()));
    }
    Ok(DecodedSchedule {
        ticks,
        r_periods,
        n_train,
    })
}

impl EncodedSchedule {
    /// Hex digits, most significant first, left-padded to whole nibbles.
    pub fn to_hex(&self) -> String {
        let pad = (4 - self.bits.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad).chain(self.bits.iter().copied()).collect();
        let mut out = String::with_capacity(padded.len() / 4);
        for nibble in padded.chunks(4) {
            write!(out, "{:x}", read_bits(nibble)).expect("writing to a String");
        }
        out
    }

    pub fn from_hex(hex: &str, params: &EncodingParams) -> Result<Self, EncodingError> {
        let layout = layout(params)?;
        let total = layout.total() as usize;
        let digits = hex.trim().trim_start_matches("0x");
        if digits.len() != total.div_ceil(4) {
            return Err(EncodingError::Corrupt(format!(
                "{} hex digits, layout of {total} bits needs {}",
                digits.len(),
                total.div_ceil(4)
            )));
        }
        let mut bits = Vec::with_capacity(digits.len() * 4);
        for c in digits.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| EncodingError::Corrupt(format!("invalid hex digit {c:?}")))?;
            push_bits(&mut bits, v as u128, 4);
        }
        let pad = bits.len() - total;
        if bits[..pad].iter().any(|&b| b) {
            return Err(EncodingError::Corrupt("nonzero padding bits".into()));
        }
        bits.drain(..pad);
        Ok(Self {
            bits,
            layout,
            params: *params,
        })
    }
}

/// One flag per clock tick over the whole gate, tick 0 through the final
/// tick at the gate duration inclusive.
pub fn expand_to_pulse_stream(ticks: &[f64], r_periods: u32, n_train: u32, clock_multiple: u32) -> Result<Vec<bool>, EncodingError> {
    if r_periods == 0 || clock_multiple == 0 {
        return Err(EncodingError::Field {
            field: if r_periods == 0 { "r" } else { "clock_multiple" },
            reason: "must be positive".into(),
        });
    }
    let m = clock_multiple as u64;
    let ramp_ticks = m * r_periods as u64;
    let mut on = Vec::with_capacity(ticks.len());
    for &t in ticks {
        if !t.is_finite() || t.fract() != 0.0 {
            return Err(EncodingError::Unsnapped(t));
        }
        if t < 0.0 || t >= ramp_ticks as f64 {
            return Err(EncodingError::Field {
                field: "ticks",
                reason: format!("tick {t} outside [0, {ramp_ticks})"),
            });
        }
        on.push(t as u64);
    }
    let end = duration_periods(r_periods, n_train) * m;
    let mut stream = vec![false; end as usize + 1];
    let mut set = |k: u64| -> Result<(), EncodingError> {
        let slot = &mut stream[k as usize];
        if *slot {
            return Err(EncodingError::Field {
                field: "ticks",
                reason: format!("two pulses on tick {k}"),
            });
        }
        *slot = true;
        Ok(())
    };
    for &t in &on {
        set(t)?;
        set(end - t)?;
    }
    for k in 0..n_train as u64 {
        set(ramp_ticks + k * m)?;
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_cost_examples() {
        assert_eq!(bit_cost(6, 5, 128, 31).unwrap(), (56, 5, 3, 64));
        assert_eq!(bit_cost(6, 5, 128, 127).unwrap(), (56, 7, 3, 66));
        assert_eq!(bit_cost(1, 1, 2, 1).unwrap(), (2, 1, 0, 3));
        assert!(bit_cost(0, 5, 128, 31).is_err());
    }

    #[test]
    fn bit_cost_matches_float_formula_away_from_powers_of_two() {
        for n in 1..=6u32 {
            for r in 1..=5u32 {
                for m in [8u32, 32, 64, 128] {
                    let (ramp, ..) = bit_cost(n, r, m, 31).unwrap();
                    let exact = n as f64 * ((m * r + 1) as f64).log2();
                    assert_eq!(ramp, exact.ceil() as u32, "n={n} r={r} m={m}");
                }
            }
        }
    }

    #[test]
    fn oversize_alphabet_rejected() {
        assert!(bit_cost(40, 5, 128, 31).is_err());
    }

    #[test]
    fn empty_ramp_is_zero_word() {
        let e = encode(&[], 1, 1, &EncodingParams::INDUCTIVE).unwrap();
        assert!(e.bits[..56].iter().all(|&b| !b));
        assert_eq!(e.bits.len(), 64);
        // n_train = 1 in 5 bits, r - 1 = 0 in 3 bits
        assert_eq!(&e.bits[56..], &[false, false, false, false, true, false, false, false]);
    }

    #[test]
    fn single_tick_offset_by_one() {
        let p = EncodingParams::INDUCTIVE;
        let e = encode(&[0], 1, 1, &p).unwrap();
        let word = read_bits(&e.bits[..56]);
        assert_eq!(word, p.radix().pow(5));
    }

    #[test]
    fn examples_round_trip() {
        let p = EncodingParams::INDUCTIVE;
        for (ticks, r, n) in [(vec![], 1, 1), (vec![0], 1, 1), (vec![3, 200, 639], 5, 31)] {
            let d = decode(&encode(&ticks, r, n, &p).unwrap()).unwrap();
            assert_eq!(d, DecodedSchedule { ticks, r_periods: r, n_train: n });
        }
    }

    #[test]
    fn encode_sorts_and_rejects() {
        let p = EncodingParams::INDUCTIVE;
        let a = encode(&[50, 10], 1, 3, &p).unwrap();
        let b = encode(&[10, 50], 1, 3, &p).unwrap();
        assert_eq!(a, b);
        let field = |r: Result<EncodedSchedule, EncodingError>| match r {
            Err(EncodingError::Field { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field(encode(&[128], 1, 3, &p)), "ticks");
        assert_eq!(field(encode(&[1, 1], 1, 3, &p)), "ticks");
        assert_eq!(field(encode(&[1, 2, 3, 4, 5, 6, 7], 1, 3, &p)), "ticks");
        assert_eq!(field(encode(&[], 6, 3, &p)), "r");
        assert_eq!(field(encode(&[], 0, 3, &p)), "r");
        assert_eq!(field(encode(&[], 1, 32, &p)), "n_train");
    }

    #[test]
    fn corrupt_symbol_rejected() {
        let p = EncodingParams::INDUCTIVE;
        // r = 1 leaves symbols up to 128 valid; symbol 200 is beyond the ramp
        let mut e = encode(&[], 1, 1, &p).unwrap();
        let word = 200 * p.radix().pow(5);
        let mut bits = Vec::new();
        push_bits(&mut bits, word, 56);
        e.bits[..56].copy_from_slice(&bits);
        assert!(matches!(decode(&e), Err(EncodingError::Corrupt(_))));
    }

    #[test]
    fn all_ones_rejected() {
        let p = EncodingParams::INDUCTIVE;
        let e = EncodedSchedule {
            bits: vec![true; 64],
            layout: layout(&p).unwrap(),
            params: p,
        };
        assert!(matches!(decode(&e), Err(EncodingError::Corrupt(_))));
    }

    #[test]
    fn non_canonical_orderings_rejected() {
        let p = EncodingParams::INDUCTIVE;
        let q = p.radix();
        let check = |symbols: [u128; 6]| {
            let word = symbols.iter().fold(0u128, |acc, &s| acc * q + s);
            let mut e = encode(&[], 1, 1, &p).unwrap();
            let mut bits = Vec::new();
            push_bits(&mut bits, word, 56);
            e.bits[..56].copy_from_slice(&bits);
            decode(&e)
        };
        assert!(check([0, 5, 0, 0, 0, 0]).is_err());
        assert!(check([7, 5, 0, 0, 0, 0]).is_err());
        assert!(check([5, 5, 0, 0, 0, 0]).is_err());
        assert!(check([5, 7, 0, 0, 0, 0]).is_ok());
    }

    #[test]
    fn hex_round_trip_and_padding() {
        let p = EncodingParams::CAPACITIVE;
        let e = encode(&[1, 64, 639], 5, 105, &p).unwrap();
        let hex = e.to_hex();
        assert_eq!(hex.len(), 17);
        assert_eq!(EncodedSchedule::from_hex(&hex, &p).unwrap(), e);
        // 66 bits: the two leading pad bits must be zero
        let mut bad = hex.clone();
        bad.replace_range(0..1, "f");
        assert!(EncodedSchedule::from_hex(&bad, &p).is_err());
        assert!(EncodedSchedule::from_hex(&hex[1..], &p).is_err());
        assert!(EncodedSchedule::from_hex(&hex.replace(|c: char| c.is_ascii_digit(), "g"), &p).is_err());
    }

    #[test]
    fn hex_is_msb_first() {
        let p = EncodingParams {
            n_max: 1,
            r_max: 1,
            clock_multiple: 2,
            n_train_max: 1,
        };
        // symbol 2 -> "10", n_train 1 -> "1": 0b101
        assert_eq!(encode(&[1], 1, 1, &p).unwrap().to_hex(), "5");
    }

    #[test]
    fn stream_example() {
        let s = expand_to_pulse_stream(&[], 1, 2, 4).unwrap();
        assert_eq!(s.len(), 13);
        let on: Vec<usize> = s.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        assert_eq!(on, vec![4, 8]);
    }

    #[test]
    fn stream_is_mirror_symmetric() {
        let s = expand_to_pulse_stream(&[0.0, 3.0, 9.0], 3, 5, 4).unwrap();
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(s, rev);
        assert_eq!(s.iter().filter(|&&b| b).count(), 2 * 3 + 5);
        assert!(s[0] && s[s.len() - 1]);
    }

    #[test]
    fn stream_without_train() {
        let s = expand_to_pulse_stream(&[1.0], 1, 0, 4).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.iter().filter(|&&b| b).count(), 2);
        assert!(s[1] && s[7]);
    }

    #[test]
    fn stream_rejects_unsnapped() {
        assert!(matches!(
            expand_to_pulse_stream(&[1.5], 1, 2, 4),
            Err(EncodingError::Unsnapped(_))
        ));
        assert!(expand_to_pulse_stream(&[4.0], 1, 2, 4).is_err());
        assert!(expand_to_pulse_stream(&[1.0, 1.0], 1, 2, 4).is_err());
    }
}
