//! Built-in lifting factorizations.
//!
//! The Daubechies chains reproduce the orthonormal `db2`/`db4` analysis
//! lowpass (up to a shift) through [`compose_filterbank`], including the
//! final channel gain. `bior53` is the unnormalized LeGall 5/3 pair.
//!
//! [`compose_filterbank`]: crate::filterbank::compose_filterbank

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::lifting::{LiftingChain, LiftingStage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StandardWavelet {
    Db2,
    Db4,
    Bior53,
}

impl StandardWavelet {
    pub const ALL: [StandardWavelet; 3] = [Self::Db2, Self::Db4, Self::Bior53];

    pub fn name(self) -> &'static str {
        match self {
            Self::Db2 => "db2",
            Self::Db4 => "db4",
            Self::Bior53 => "bior53",
        }
    }

    pub fn chain(self) -> LiftingChain {
        match self {
            Self::Db2 => db2(),
            Self::Db4 => db4(),
            Self::Bior53 => bior53(),
        }
    }
}

impl fmt::Display for StandardWavelet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StandardWavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "db2" => Ok(Self::Db2),
            "db4" => Ok(Self::Db4),
            "bior53" | "bior5/3" | "legall" | "5/3" => Ok(Self::Bior53),
            other => Err(Error::InvalidParameter(format!("unknown wavelet {other:?}"))),
        }
    }
}

fn stage(t: &[f64], s: &[f64]) -> LiftingStage {
    LiftingStage::new(t.to_vec(), s.to_vec()).expect("built-in taps are valid")
}

/// LeGall 5/3: `t = [1/2, 1/2]`, `s = [1/4, 1/4]`.
pub fn bior53() -> LiftingChain {
    LiftingChain::new(vec![stage(&[0.5, 0.5], &[0.25, 0.25])]).unwrap()
}

/// Zero predict and update.
pub fn lazy() -> LiftingChain {
    LiftingChain::new(vec![stage(&[0.0, 0.0], &[0.0, 0.0])]).unwrap()
}

pub fn db2() -> LiftingChain {
    LiftingChain::with_gain(
        vec![
            stage(
                &[0.0, 0.577_350_269_189_625_8],
                &[0.200_961_894_323_342_03, 0.433_012_701_892_219_3],
            ),
            stage(&[0.333_333_333_333_333_3, 0.0], &[0.0, 0.0]),
        ],
        1.115_355_071_650_410_5,
    )
    .unwrap()
}

pub fn db4() -> LiftingChain {
    LiftingChain::with_gain(
        vec![
            stage(
                &[0.0, 0.322_275_888_000_281_1],
                &[-1.117_123_605_116_217_2, -0.300_142_258_549_153_5],
            ),
            stage(
                &[0.0, 0.0, -0.117_648_086_803_539_54, 0.018_808_352_727_750_04],
                &[2.131_816_712_612_868, 0.636_428_270_961_927_7],
            ),
            stage(
                &[
                    0.024_791_238_158_270_824,
                    -0.140_039_237_739_272_75,
                    0.469_083_478_933_020_9,
                    0.0,
                    0.0,
                    0.0,
                ],
                &[0.0, 0.0],
            ),
        ],
        0.734_124_527_700_464,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::compose_filterbank;

    const DB2: [f64; 4] = [
        -0.129_409_522_551_260_38,
        0.224_143_868_042_013_4,
        0.836_516_303_737_807_9,
        0.482_962_913_144_534_14,
    ];

    const DB4: [f64; 8] = [
        -0.010_597_401_784_997_278,
        0.032_883_011_666_982_945,
        0.030_841_381_835_986_965,
        -0.187_034_811_718_881_14,
        -0.027_983_769_416_983_85,
        0.630_880_767_929_590_4,
        0.714_846_570_552_541_5,
        0.230_377_813_308_855_23,
    ];

    fn assert_lowpass(chain: &LiftingChain, want: &[f64]) {
        let h0 = compose_filterbank(chain).h0;
        let h0 = h0.trimmed();
        assert_eq!(h0.taps.len(), want.len(), "{h0:?}");
        for (a, b) in h0.taps.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn db2_lowpass() {
        assert_lowpass(&db2(), &DB2);
    }

    #[test]
    fn db4_lowpass() {
        assert_lowpass(&db4(), &DB4);
    }

    #[test]
    fn daubechies_banks_are_orthonormal() {
        for c in [db2(), db4()] {
            let fb = compose_filterbank(&c);
            let e: f64 = fb.h1.taps.iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            // synthesis lowpass is the time reverse of the analysis lowpass
            let (h0, f0) = (fb.h0.trimmed(), fb.f0.trimmed());
            assert_eq!(h0.start, -f0.end());
            for (a, b) in h0.taps.iter().zip(f0.taps.iter().rev()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parse_names() {
        for w in StandardWavelet::ALL {
            assert_eq!(w.name().parse::<StandardWavelet>().unwrap(), w);
        }
        assert!("haar".parse::<StandardWavelet>().is_err());
    }
}
