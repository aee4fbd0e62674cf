use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FkError, Result};

/// A strictly positive continuous function given in closed form. Used both
/// as the roof of a special flow and as the speed of a time-change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Const(f64),
    /// `c + a * cos(2 pi s)` with `c > a >= 0`.
    Cos { c: f64, a: f64 },
}

pub type RoofSpec = Profile;
pub type RateSpec = Profile;

impl Profile {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Profile::Const(c) => c,
            Profile::Cos { c, a } => c + a * (TAU * s).cos(),
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            Profile::Const(c) => c,
            Profile::Cos { c, a } => c - a,
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        match *self {
            Profile::Const(c) => {
                if !(c.is_finite() && c > 0.0) {
                    return Err(FkError::config(field, format!("constant {c} must be positive")));
                }
            }
            Profile::Cos { c, a } => {
                if !(c.is_finite() && a.is_finite() && a >= 0.0 && c > a) {
                    return Err(FkError::config(
                        field,
                        format!("cos profile needs c > a >= 0, got c={c}, a={a}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Const(c) => write!(f, "const:{c}"),
            Profile::Cos { c, a } => write!(f, "cos:c={c},a={a}"),
        }
    }
}

/// Metric on symbol windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ShiftMetric {
    /// `sum_{i < window} 2^-(i+1) [p_i != q_i]`.
    #[default]
    Cylinder,
    /// `[p_0 != q_0]`.
    Discrete,
}

/// Description of a built-in dynamical system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SystemSpec {
    Rotation { alpha: f64 },
    TorusTranslation { alpha1: f64, alpha2: f64 },
    FullShift { arity: u32, window: u32, metric: ShiftMetric },
    Sturmian { slope: f64, window: u32 },
    /// The identity map of the circle. Every point is fixed.
    Identity,
    Suspension { base: Box<SystemSpec> },
    SpecialFlow { base: Box<SystemSpec>, roof: RoofSpec },
    TimeChange { flow: Box<SystemSpec>, rate: RateSpec },
}

pub const GOLDEN: f64 = 0.618_033_988_749_894_8;

pub const DEFAULT_WINDOW: u32 = 32;

impl SystemSpec {
    pub fn golden_rotation() -> Self {
        SystemSpec::Rotation { alpha: GOLDEN }
    }

    pub fn suspend(base: SystemSpec) -> Self {
        SystemSpec::Suspension { base: Box::new(base) }
    }

    pub fn is_flow(&self) -> bool {
        matches!(
            self,
            SystemSpec::Suspension { .. } | SystemSpec::SpecialFlow { .. } | SystemSpec::TimeChange { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        fn unit_open(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(FkError::config(field, format!("{v} is not in (0,1)")))
            }
        }
        match self {
            SystemSpec::Rotation { alpha } => unit_open("alpha", *alpha),
            SystemSpec::TorusTranslation { alpha1, alpha2 } => {
                unit_open("alpha1", *alpha1)?;
                unit_open("alpha2", *alpha2)
            }
            SystemSpec::FullShift { arity, window, .. } => {
                if *arity < 2 || *arity > 255 {
                    return Err(FkError::config("arity", format!("{arity} is not in [2, 255]")));
                }
                check_window(*window)
            }
            SystemSpec::Sturmian { slope, window } => {
                unit_open("slope", *slope)?;
                check_window(*window)
            }
            SystemSpec::Identity => Ok(()),
            SystemSpec::Suspension { base } => {
                if base.is_flow() {
                    return Err(FkError::config("base", "suspension needs a map as its base"));
                }
                base.validate()
            }
            SystemSpec::SpecialFlow { base, roof } => {
                if base.is_flow() {
                    return Err(FkError::config("base", "special flow needs a map as its base"));
                }
                roof.validate("roof")?;
                base.validate()
            }
            SystemSpec::TimeChange { flow, rate } => {
                if !flow.is_flow() {
                    return Err(FkError::config("flow", "time-change needs a flow"));
                }
                rate.validate("rate")?;
                flow.validate()
            }
        }
    }

    /// Parse the textual form used on the command line, e.g.
    /// `suspend(rotation:alpha=0.6180339887)` or
    /// `timechange(special(shift:arity=2,window=32;roof=cos:c=2,a=0.5);rate=const:2)`.
    pub fn parse(text: &str) -> Result<SystemSpec> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        p.skip_ws();
        let spec = p.spec()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(spec)
    }
}

fn check_window(window: u32) -> Result<()> {
    if window == 0 || window > 52 {
        Err(FkError::config("window", format!("{window} is not in [1, 52]")))
    } else {
        Ok(())
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSpec::Rotation { alpha } => write!(f, "rotation:alpha={alpha}"),
            SystemSpec::TorusTranslation { alpha1, alpha2 } => {
                write!(f, "torus:alpha1={alpha1},alpha2={alpha2}")
            }
            SystemSpec::FullShift { arity, window, metric } => {
                write!(f, "shift:arity={arity},window={window}")?;
                if *metric == ShiftMetric::Discrete {
                    write!(f, ",metric=discrete")?;
                }
                Ok(())
            }
            SystemSpec::Sturmian { slope, window } => write!(f, "sturmian:slope={slope},window={window}"),
            SystemSpec::Identity => write!(f, "identity"),
            SystemSpec::Suspension { base } => write!(f, "suspend({base})"),
            SystemSpec::SpecialFlow { base, roof } => write!(f, "special({base};roof={roof})"),
            SystemSpec::TimeChange { flow, rate } => write!(f, "timechange({flow};rate={rate})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> FkError {
        FkError::Parse {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if start == self.pos {
            return Err(self.error("expected a name"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>().map_err(|_| FkError::Parse {
            column: start + 1,
            message: format!("invalid number '{text}'"),
        })
    }

    /// `key=value` pairs separated by commas, up to `)` `;` or end of input.
    fn params(&mut self) -> Result<Vec<(String, String, usize)>> {
        let mut out = Vec::new();
        loop {
            let key = self.ident()?;
            self.expect(b'=')?;
            self.skip_ws();
            let start = self.pos;
            while let Some(c) = self.peek() {
                if matches!(c, b',' | b')' | b';') || c.is_ascii_whitespace() {
                    break;
                }
                self.pos += 1;
            }
            let value = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
            out.push((key, value, start + 1));
            self.skip_ws();
            if self.peek() == Some(b',') {
                self.pos += 1;
            } else {
                return Ok(out);
            }
        }
    }

    fn profile(&mut self) -> Result<Profile> {
        let kind = self.ident()?;
        self.expect(b':')?;
        match kind.as_str() {
            "const" => Ok(Profile::Const(self.number()?)),
            "cos" => {
                let params = self.params()?;
                let (mut c, mut a) = (None, None);
                for (k, v, col) in params {
                    let val = parse_real(&v, col)?;
                    match k.as_str() {
                        "c" => c = Some(val),
                        "a" => a = Some(val),
                        _ => return Err(FkError::Parse { column: col, message: format!("unknown key '{k}'") }),
                    }
                }
                match (c, a) {
                    (Some(c), Some(a)) => Ok(Profile::Cos { c, a }),
                    _ => Err(self.error("cos profile needs c and a")),
                }
            }
            other => Err(self.error(format!("unknown profile '{other}'"))),
        }
    }

    fn spec(&mut self) -> Result<SystemSpec> {
        let name_col = self.pos;
        let name = self.ident()?;
        match name.as_str() {
            "suspend" => {
                self.expect(b'(')?;
                let base = self.spec()?;
                self.expect(b')')?;
                Ok(SystemSpec::Suspension { base: Box::new(base) })
            }
            "special" | "timechange" => {
                self.expect(b'(')?;
                let inner = self.spec()?;
                self.expect(b';')?;
                let key = self.ident()?;
                let want = if name == "special" { "roof" } else { "rate" };
                if key != want {
                    return Err(self.error(format!("expected '{want}='")));
                }
                self.expect(b'=')?;
                let profile = self.profile()?;
                self.expect(b')')?;
                Ok(if name == "special" {
                    SystemSpec::SpecialFlow { base: Box::new(inner), roof: profile }
                } else {
                    SystemSpec::TimeChange { flow: Box::new(inner), rate: profile }
                })
            }
            "identity" => Ok(SystemSpec::Identity),
            "rotation" | "torus" | "shift" | "sturmian" => {
                self.expect(b':')?;
                let params = self.params()?;
                build_leaf(&name, params, name_col + 1)
            }
            other => Err(FkError::Parse {
                column: name_col + 1,
                message: format!("unknown system '{other}'"),
            }),
        }
    }
}

fn parse_real(v: &str, col: usize) -> Result<f64> {
    v.parse::<f64>().map_err(|_| FkError::Parse {
        column: col,
        message: format!("invalid number '{v}'"),
    })
}

fn parse_int(v: &str, col: usize) -> Result<u32> {
    v.parse::<u32>().map_err(|_| FkError::Parse {
        column: col,
        message: format!("invalid integer '{v}'"),
    })
}

fn build_leaf(name: &str, params: Vec<(String, String, usize)>, col: usize) -> Result<SystemSpec> {
    let get = |key: &str| params.iter().find(|(k, _, _)| k == key).map(|(_, v, c)| (v.as_str(), *c));
    for (k, _, c) in &params {
        let known: &[&str] = match name {
            "rotation" => &["alpha"],
            "torus" => &["alpha1", "alpha2"],
            "shift" => &["arity", "window", "metric"],
            _ => &["slope", "window"],
        };
        if !known.contains(&k.as_str()) {
            return Err(FkError::Parse { column: *c, message: format!("unknown key '{k}' for {name}") });
        }
    }
    let missing = |key: &str| FkError::Parse { column: col, message: format!("{name} needs '{key}='") };
    match name {
        "rotation" => {
            let (v, c) = get("alpha").ok_or_else(|| missing("alpha"))?;
            Ok(SystemSpec::Rotation { alpha: parse_real(v, c)? })
        }
        "torus" => {
            let (v1, c1) = get("alpha1").ok_or_else(|| missing("alpha1"))?;
            let (v2, c2) = get("alpha2").ok_or_else(|| missing("alpha2"))?;
            Ok(SystemSpec::TorusTranslation { alpha1: parse_real(v1, c1)?, alpha2: parse_real(v2, c2)? })
        }
        "shift" => {
            let arity = match get("arity") {
                Some((v, c)) => parse_int(v, c)?,
                None => 2,
            };
            let window = match get("window") {
                Some((v, c)) => parse_int(v, c)?,
                None => DEFAULT_WINDOW,
            };
            let metric = match get("metric") {
                None | Some(("cylinder", _)) => ShiftMetric::Cylinder,
                Some(("discrete", _)) => ShiftMetric::Discrete,
                Some((v, c)) => {
                    return Err(FkError::Parse { column: c, message: format!("unknown metric '{v}'") })
                }
            };
            Ok(SystemSpec::FullShift { arity, window, metric })
        }
        _ => {
            let (v, c) = get("slope").ok_or_else(|| missing("slope"))?;
            let window = match get("window") {
                Some((w, wc)) => parse_int(w, wc)?,
                None => DEFAULT_WINDOW,
            };
            Ok(SystemSpec::Sturmian { slope: parse_real(v, c)?, window })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_forms() {
        let s = SystemSpec::parse("suspend(rotation:alpha=0.6180339887)").unwrap();
        assert_eq!(s, SystemSpec::suspend(SystemSpec::Rotation { alpha: 0.6180339887 }));

        let s = SystemSpec::parse("special(shift:arity=2,window=32;roof=cos:c=2,a=0.5)").unwrap();
        match s {
            SystemSpec::SpecialFlow { base, roof } => {
                assert_eq!(*base, SystemSpec::FullShift { arity: 2, window: 32, metric: ShiftMetric::Cylinder });
                assert_eq!(roof, Profile::Cos { c: 2.0, a: 0.5 });
            }
            other => panic!("unexpected {other:?}"),
        }

        let s = SystemSpec::parse("timechange(suspend(rotation:alpha=0.3);rate=cos:c=1,a=0.3)").unwrap();
        assert!(matches!(s, SystemSpec::TimeChange { .. }));
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "rotation:alpha=0.25",
            "torus:alpha1=0.1,alpha2=0.2",
            "shift:arity=3,window=8,metric=discrete",
            "sturmian:slope=0.4,window=16",
            "identity",
            "suspend(rotation:alpha=0.25)",
            "special(rotation:alpha=0.25;roof=const:1.5)",
            "timechange(special(rotation:alpha=0.25;roof=cos:c=2,a=0.5);rate=cos:c=1,a=0.3)",
        ] {
            let spec = SystemSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(SystemSpec::parse(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_errors_carry_columns() {
        match SystemSpec::parse("suspend(rotation:alpha=abc)") {
            Err(FkError::Parse { column, .. }) => assert_eq!(column, 24),
            other => panic!("{other:?}"),
        }
        assert!(matches!(SystemSpec::parse("warp:x=1"), Err(FkError::Parse { column: 1, .. })));
        assert!(matches!(SystemSpec::parse("suspend(identity"), Err(FkError::Parse { .. })));
    }

    #[test]
    fn validation_names_the_field() {
        let bad = SystemSpec::FullShift { arity: 2, window: 0, metric: ShiftMetric::Cylinder };
        assert!(matches!(bad.validate(), Err(FkError::Config { field, .. }) if field == "window"));
        let bad = SystemSpec::SpecialFlow {
            base: Box::new(SystemSpec::golden_rotation()),
            roof: Profile::Const(0.0),
        };
        assert!(matches!(bad.validate(), Err(FkError::Config { field, .. }) if field == "roof"));
        let bad = SystemSpec::FullShift { arity: 1, window: 4, metric: ShiftMetric::Cylinder };
        assert!(matches!(bad.validate(), Err(FkError::Config { field, .. }) if field == "arity"));
    }
}
