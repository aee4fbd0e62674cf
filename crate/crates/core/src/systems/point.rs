use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};
use crate::rng::seeded_symbol;

/// A bi-infinite symbol sequence, stored by rule rather than by value.
/// Position 0 is the current coordinate; shifting moves the offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SymbolPoint {
    /// Independent uniform symbols drawn from a keyed hash of the position.
    Seeded { seed: u64, offset: i64 },
    /// The periodic sequence `word word word ...`.
    Periodic { word: Arc<[u8]>, offset: i64 },
    /// Coding of a rotation by `slope` started at `intercept`: symbol `i`
    /// is `floor((i+1) slope + intercept) - floor(i slope + intercept)`.
    Sturmian { intercept: f64 },
}

impl SymbolPoint {
    /// Symbol at position `i` (relative to the current offset).
    pub fn symbol(&self, i: i64, arity: u32, slope: f64) -> u8 {
        match self {
            SymbolPoint::Seeded { seed, offset } => seeded_symbol(*seed, offset + i, arity),
            SymbolPoint::Periodic { word, offset } => {
                let len = word.len() as i64;
                word[(offset + i).rem_euclid(len) as usize]
            }
            SymbolPoint::Sturmian { intercept } => {
                let a = (i as f64 + 1.0) * slope + intercept;
                let b = i as f64 * slope + intercept;
                (a.floor() - b.floor()) as u8
            }
        }
    }

    pub fn window(&self, window: u32, arity: u32, slope: f64) -> Vec<u8> {
        (0..window as i64).map(|i| self.symbol(i, arity, slope)).collect()
    }

    pub(crate) fn shifted(&self, k: i64, slope: f64) -> SymbolPoint {
        match self {
            SymbolPoint::Seeded { seed, offset } => SymbolPoint::Seeded { seed: *seed, offset: offset + k },
            SymbolPoint::Periodic { word, offset } => {
                let len = word.len() as i64;
                SymbolPoint::Periodic { word: word.clone(), offset: (offset + k).rem_euclid(len) }
            }
            SymbolPoint::Sturmian { intercept } => SymbolPoint::Sturmian {
                intercept: frac(intercept + k as f64 * slope),
            },
        }
    }
}

/// A point of a phase space in canonical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PhasePoint {
    Circle(f64),
    Torus(f64, f64),
    Symbolic(SymbolPoint),
    /// `(base, height)` with `0 <= height < roof(base)`.
    Suspended { base: Box<PhasePoint>, height: f64 },
}

impl PhasePoint {
    pub fn suspended(base: PhasePoint, height: f64) -> Self {
        PhasePoint::Suspended { base: Box::new(base), height }
    }

    /// Base point for flow points, the point itself otherwise.
    pub fn base(&self) -> &PhasePoint {
        match self {
            PhasePoint::Suspended { base, .. } => base,
            p => p,
        }
    }

    pub fn height(&self) -> Option<f64> {
        match self {
            PhasePoint::Suspended { height, .. } => Some(*height),
            _ => None,
        }
    }

    /// Parse the textual point forms: `0.25` (circle), `0.1:0.2` (torus),
    /// `w0101` (periodic word), `s123` (seeded sequence), and
    /// `<base>@<height>` for flow points. Sturmian points are written as
    /// their intercept; see [`crate::systems::System::parse_point`].
    pub fn parse(text: &str) -> Result<PhasePoint> {
        let text = text.trim();
        if let Some((base, height)) = text.rsplit_once('@') {
            let h = parse_f64(height, text.len() - height.len() + 1)?;
            return Ok(PhasePoint::suspended(PhasePoint::parse(base)?, h));
        }
        if let Some(rest) = text.strip_prefix('w') {
            let word: Vec<u8> = rest
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    c.to_digit(36).map(|d| d as u8).ok_or_else(|| FkError::Parse {
                        column: i + 2,
                        message: format!("invalid symbol '{c}'"),
                    })
                })
                .collect::<Result<_>>()?;
            if word.is_empty() {
                return Err(FkError::Parse { column: 2, message: "empty word".into() });
            }
            return Ok(PhasePoint::Symbolic(SymbolPoint::Periodic { word: word.into(), offset: 0 }));
        }
        if let Some(rest) = text.strip_prefix('s') {
            let (seed_text, offset_text) = match rest.find(['+', '-']) {
                Some(k) => (&rest[..k], Some(&rest[k..])),
                None => (rest, None),
            };
            let seed = seed_text.parse::<u64>().map_err(|_| FkError::Parse {
                column: 2,
                message: format!("invalid seed '{seed_text}'"),
            })?;
            let offset = match offset_text {
                Some(o) => o.parse::<i64>().map_err(|_| FkError::Parse {
                    column: seed_text.len() + 2,
                    message: format!("invalid offset '{o}'"),
                })?,
                None => 0,
            };
            return Ok(PhasePoint::Symbolic(SymbolPoint::Seeded { seed, offset }));
        }
        if let Some((a, b)) = text.split_once(':') {
            let x = parse_f64(a, 1)?;
            let y = parse_f64(b, a.len() + 2)?;
            return Ok(PhasePoint::Torus(x, y));
        }
        Ok(PhasePoint::Circle(parse_f64(text, 1)?))
    }
}

fn parse_f64(text: &str, column: usize) -> Result<f64> {
    let v = text.trim().parse::<f64>().map_err(|_| FkError::Parse {
        column,
        message: format!("invalid number '{text}'"),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FkError::Parse { column, message: format!("non-finite number '{text}'") })
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhasePoint::Circle(x) => write!(f, "{x}"),
            PhasePoint::Torus(a, b) => write!(f, "{a}:{b}"),
            PhasePoint::Symbolic(SymbolPoint::Seeded { seed, offset }) => {
                if *offset == 0 {
                    write!(f, "s{seed}")
                } else {
                    write!(f, "s{seed}{offset:+}")
                }
            }
            PhasePoint::Symbolic(SymbolPoint::Periodic { word, offset }) => {
                let len = word.len();
                write!(f, "w")?;
                for i in 0..len {
                    let s = word[(*offset as usize + i) % len];
                    write!(f, "{}", char::from_digit(s as u32, 36).unwrap_or('?'))?;
                }
                Ok(())
            }
            PhasePoint::Symbolic(SymbolPoint::Sturmian { intercept }) => write!(f, "{intercept}"),
            PhasePoint::Suspended { base, height } => write!(f, "{base}@{height}"),
        }
    }
}

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Arc-length distance on the unit circle.
#[inline]
pub fn arc(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    let d = d - d.floor();
    d.min(1.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_point_forms() {
        assert_eq!(PhasePoint::parse("0.25").unwrap(), PhasePoint::Circle(0.25));
        assert_eq!(PhasePoint::parse("0.1:0.2").unwrap(), PhasePoint::Torus(0.1, 0.2));
        assert_eq!(
            PhasePoint::parse("0.3@0.5").unwrap(),
            PhasePoint::suspended(PhasePoint::Circle(0.3), 0.5)
        );
        match PhasePoint::parse("w0101").unwrap() {
            PhasePoint::Symbolic(SymbolPoint::Periodic { word, .. }) => assert_eq!(&*word, &[0, 1, 0, 1]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(PhasePoint::parse("s7").unwrap(), PhasePoint::Symbolic(SymbolPoint::Seeded { seed: 7, .. })));
        assert!(matches!(PhasePoint::parse("0.1:x"), Err(FkError::Parse { column: 5, .. })));
    }

    #[test]
    fn display_round_trips() {
        for text in ["0.25", "0.1:0.2", "w0110", "s99", "s5-3", "s5+12", "0.5@0.25", "w01@0.5"] {
            let p = PhasePoint::parse(text).unwrap();
            assert_eq!(p.to_string(), text);
        }
    }

    #[test]
    fn arc_metric() {
        assert!((arc(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert!((arc(0.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(arc(0.3, 0.3), 0.0);
        assert!((arc(0.95, 0.05) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sturmian_symbols_are_binary_with_the_right_density() {
        let p = SymbolPoint::Sturmian { intercept: 0.2 };
        let slope = 0.381_966_011_250_105_1;
        let ones: u32 = (0..10_000).map(|i| p.symbol(i, 2, slope) as u32).sum();
        assert!((ones as f64 / 10_000.0 - slope).abs() < 1e-3);
    }

    #[test]
    fn periodic_shift_wraps() {
        let p = SymbolPoint::Periodic { word: vec![0u8, 1, 1].into(), offset: 0 };
        let q = p.shifted(-1, 0.0);
        assert_eq!(q.window(3, 2, 0.0), vec![1, 0, 1]);
    }
}
