//! Box-construction expressions for `nsbox make`.
//!
//! ```text
//! expr   := "det:" bit{4} | "pr:" bit{3} | "noise" | "noisy-pr:" bit{3} ":" ratio
//!         | "mix:" weighted ("+" weighted)*
//! weighted := ratio "*" ( "(" expr ")" | expr )
//! ```
//!
//! A `+` always extends the innermost open `mix`; parenthesize a nested mix
//! to continue the outer one.

use std::fmt;

use nsbox_core::boxes::{mix, MixError, Mixture, NsBox};
use nsbox_core::ratio::Ratio;
use nsbox_core::secrecy::noisy_pr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprError {
    Syntax { column: usize, message: String },
    Weights(String),
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Syntax { column, message } => write!(f, "box expression error at column {column}: {message}"),
            ExprError::Weights(m) => write!(f, "box expression weights: {m}"),
        }
    }
}

impl std::error::Error for ExprError {}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax { column: self.pos + 1, message: message.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), ExprError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.error(format!("expected `{token}`"))
        }
    }

    fn bits<const N: usize>(&mut self) -> Result<[u8; N], ExprError> {
        let mut out = [0u8; N];
        for slot in &mut out {
            *slot = match self.rest().as_bytes().first() {
                Some(b'0') => 0,
                Some(b'1') => 1,
                _ => return self.error(format!("expected {N} binary digits")),
            };
            self.pos += 1;
        }
        Ok(out)
    }

    fn ratio(&mut self) -> Result<Ratio, ExprError> {
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '/' | '.' | '-')))
            .unwrap_or(self.rest().len());
        let text = &self.rest()[..len];
        match text.parse::<Ratio>() {
            Ok(r) => {
                self.pos += len;
                Ok(r)
            }
            Err(e) => self.error(format!("expected a number: {e}")),
        }
    }

    fn box_expr(&mut self) -> Result<NsBox, ExprError> {
        if self.eat("det:") {
            let [a, b, c, d] = self.bits::<4>()?;
            Ok(NsBox::deterministic(a, b, c, d))
        } else if self.eat("pr:") {
            let [a, b, c] = self.bits::<3>()?;
            Ok(NsBox::pr(a, b, c))
        } else if self.eat("noisy-pr:") {
            let label = self.bits::<3>()?;
            self.expect(":")?;
            let at = self.pos;
            let p = self.ratio()?;
            noisy_pr(label, &p).or_else(|e| {
                self.pos = at;
                self.error(e.to_string())
            })
        } else if self.eat("noise") {
            Ok(NsBox::maximally_mixed())
        } else if self.eat("mix:") {
            self.mixture()
        } else {
            self.error("expected one of det:, pr:, noise, noisy-pr:, mix:")
        }
    }

    fn mixture(&mut self) -> Result<NsBox, ExprError> {
        let mut m = Mixture::default();
        loop {
            let w = self.ratio()?;
            self.expect("*")?;
            let b = if self.eat("(") {
                let inner = self.box_expr()?;
                self.expect(")")?;
                inner
            } else {
                self.box_expr()?
            };
            m.push(w, b);
            if !self.eat("+") {
                break;
            }
        }
        mix(&m).map_err(|e| match e {
            MixError::Empty => ExprError::Weights("empty mixture".into()),
            other => ExprError::Weights(other.to_string()),
        })
    }
}

/// Parses and evaluates a box expression exactly.
pub fn parse_expr(src: &str) -> Result<NsBox, ExprError> {
    let mut p = Parser { src: src.trim(), pos: 0 };
    let b = p.box_expr()?;
    if !p.rest().is_empty() {
        return p.error("unexpected trailing input");
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertices_and_noise() {
        assert_eq!(parse_expr("pr:011").unwrap(), NsBox::pr(0, 1, 1));
        assert_eq!(parse_expr("det:1001").unwrap(), NsBox::deterministic(1, 0, 0, 1));
        assert_eq!(parse_expr("noise").unwrap(), NsBox::maximally_mixed());
        assert_eq!(parse_expr("noisy-pr:000:3/4").unwrap(), noisy_pr([0, 0, 0], &Ratio::new(3, 4)).unwrap());
        assert_eq!(parse_expr("noisy-pr:000:0.75").unwrap(), parse_expr("noisy-pr:000:3/4").unwrap());
    }

    #[test]
    fn mixtures() {
        let b = parse_expr("mix:3/4*pr:000+1/4*pr:001").unwrap();
        assert_eq!(b.p(0, 0, 0, 0), &Ratio::new(3, 8));
        let nested = parse_expr("mix:1/2*(mix:1/2*pr:000+1/2*pr:001)+1/2*noise").unwrap();
        let flat = parse_expr("mix:1/4*pr:000+1/4*pr:001+1/2*noise").unwrap();
        assert_eq!(nested, flat);
        assert_eq!(parse_expr("mix:1/2*noisy-pr:000:1/2+1/2*noise").unwrap(), parse_expr("noisy-pr:000:1/4").unwrap());
    }

    #[test]
    fn errors_carry_columns() {
        assert_eq!(
            parse_expr("pr:0a1"),
            Err(ExprError::Syntax { column: 5, message: "expected 3 binary digits".into() })
        );
        assert!(matches!(parse_expr("bogus"), Err(ExprError::Syntax { column: 1, .. })));
        assert!(matches!(parse_expr("mix:1/2*pr:000"), Err(ExprError::Weights(_))));
        assert!(matches!(parse_expr("mix:1/2 pr:000"), Err(ExprError::Syntax { column: 8, .. })));
        assert!(matches!(parse_expr("noise!"), Err(ExprError::Syntax { column: 6, .. })));
        assert!(matches!(parse_expr("noisy-pr:000:3/2"), Err(ExprError::Syntax { column: 14, .. })));
    }
}
