//! Text syntax for states, operator products and mode lists.
//!
//! The grammar mirrors the display form used everywhere else, so anything
//! the library prints parses back:
//!
//! ```text
//! state  :=  term (("+" | "-") term)*
//! term   :=  [scalar] ["*"] factor* "|0>"
//! factor :=  ("a" | "p") "[" int "]" "(" name ")"     int < 0 (creators)
//! chain  :=  gen+
//! gen    :=  ("O" | "G") "[" uint "]" "(" name ")"
//! modes  :=  "(" int ("," int)* ")"
//! ```
//!
//! Scalars are exact: `3`, `-1/2`, `i`, `2*i`, and the parenthesized
//! complex forms `(1/2+3/4*i)`, `(1/2-3/4*i)`.  An unparenthesized scalar
//! never carries an inner `+` or `-`, which keeps term boundaries in sums
//! unambiguous.  `a` states live on the Hilbert side, `p` states on the
//! orbifold side; `G` chains multiply in the quantum-corrected ring, `O`
//! chains in the orbifold ring.  Letters must not be mixed inside one
//! expression.

use thiserror::Error;

use crate::fock::{FockVector, NakajimaMonomial};
use crate::frobenius::GradedFrobeniusAlgebra;
use crate::scalar::{parse_rational, Rational, Scalar};

/// What a piece of input failed to be.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("at byte {pos}: expected {expected}, found {found:?}")]
    Unexpected {
        pos: usize,
        found: char,
        expected: String,
    },
    #[error("input ended while expecting {expected}")]
    UnexpectedEnd { expected: String },
    #[error("unknown basis class {name:?}")]
    UnknownClass { name: String },
    #[error("mixed letters {first:?} and {second:?} in one expression")]
    MixedLetters { first: char, second: char },
    #[error("state factors must create, so modes must be negative; found {mode}")]
    CreatorModeRequired { mode: i64 },
    #[error("mode 0 does not exist")]
    ZeroMode,
    #[error("malformed number at byte {pos}")]
    BadNumber { pos: usize },
    #[error("nothing to parse")]
    Empty,
}

/// Either argument of a product: a chain of ring generators or a plain
/// state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// `O[k](b)` / `G[k](b)` factors as (order, basis index) pairs.
    Chain { letter: char, factors: Vec<(u32, usize)> },
    /// A linear combination of creation monomials applied to the vacuum.
    State { letter: Option<char>, vector: FockVector },
}

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            text: text.as_bytes(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.text.get(self.pos).map(|&b| b as char)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, want: char) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            Some(c) => Err(ParseError::Unexpected {
                pos: self.pos - 1,
                found: c,
                expected: format!("{want:?}"),
            }),
            None => Err(ParseError::UnexpectedEnd {
                expected: format!("{want:?}"),
            }),
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => Err(ParseError::Unexpected {
                pos: self.pos,
                found: c,
                expected: "end of input".to_string(),
            }),
        }
    }

    /// `[+-]? digits [/ digits]?` as an exact rational.
    fn scan_rational(&mut self) -> Result<Rational, ParseError> {
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some('/') {
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.text[start..self.pos]).expect("ascii slice");
        parse_rational(text).map_err(|_| ParseError::BadNumber { pos: start })
    }

    fn scan_integer(&mut self) -> Result<i64, ParseError> {
        let start = self.pos;
        if matches!(self.peek(), Some('+') | Some('-')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.text[start..self.pos])
            .expect("ascii slice")
            .parse()
            .map_err(|_| ParseError::BadNumber { pos: start })
    }
}

/// One signed summand of a scalar: either purely real or purely imaginary.
fn scalar_part(cur: &mut Cursor) -> Result<Scalar, ParseError> {
    cur.skip_ws();
    let negative = if cur.eat('-') {
        true
    } else {
        cur.eat('+');
        false
    };
    cur.skip_ws();
    let mut value = if cur.peek() == Some('i') {
        cur.bump();
        Scalar::i()
    } else {
        let r = cur.scan_rational()?;
        let mark = cur.pos;
        cur.eat('*');
        let imaginary = cur.eat('i');
        if !imaginary {
            // The star, if any, separates the coefficient from a monomial.
            cur.pos = mark;
        }
        if imaginary {
            Scalar::new(Rational::from_integer(0.into()), r)
        } else {
            Scalar::new(r, Rational::from_integer(0.into()))
        }
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// A full scalar: one part, or two parts of which the second must be
/// imaginary (`re+im*i` / `re-im*i`).
fn scalar_full(cur: &mut Cursor) -> Result<Scalar, ParseError> {
    let first = scalar_part(cur)?;
    if matches!(cur.peek(), Some('+') | Some('-')) {
        let pos = cur.pos;
        let second = scalar_part(cur)?;
        if !second.is_real() {
            return Ok(first + second);
        }
        return Err(ParseError::Unexpected {
            pos,
            found: cur.text.get(pos).map(|&b| b as char).unwrap_or(' '),
            expected: "an imaginary part after the real one".to_string(),
        });
    }
    Ok(first)
}

/// True when the upcoming character can begin a coefficient.
fn starts_scalar(c: char) -> bool {
    c.is_ascii_digit() || matches!(c, '+' | '-' | 'i' | '(')
}

/// Optional coefficient in term position; parenthesized scalars may carry
/// both parts, bare ones only a single part.
fn leading_scalar(cur: &mut Cursor) -> Result<Option<Scalar>, ParseError> {
    cur.skip_ws();
    match cur.peek() {
        Some('(') => {
            cur.bump();
            let value = scalar_full(cur)?;
            cur.skip_ws();
            cur.expect(')')?;
            Ok(Some(value))
        }
        Some(c) if starts_scalar(c) => Ok(Some(scalar_part(cur)?)),
        _ => Ok(None),
    }
}

fn class_index(alg: &GradedFrobeniusAlgebra, name: &str) -> Result<usize, ParseError> {
    alg.basis()
        .iter()
        .position(|b| b.name == name)
        .ok_or_else(|| ParseError::UnknownClass {
            name: name.to_string(),
        })
}

/// `letter [ int ] ( name )`; the caller has already seen the letter.
fn factor_body(cur: &mut Cursor, alg: &GradedFrobeniusAlgebra) -> Result<(i64, usize), ParseError> {
    cur.expect('[')?;
    cur.skip_ws();
    let mode = cur.scan_integer()?;
    cur.skip_ws();
    cur.expect(']')?;
    cur.expect('(')?;
    let start = cur.pos;
    while !matches!(cur.peek(), Some(')') | None) {
        cur.bump();
    }
    let name = std::str::from_utf8(&cur.text[start..cur.pos])
        .expect("ascii slice")
        .trim()
        .to_string();
    cur.expect(')')?;
    Ok((mode, class_index(alg, &name)?))
}

fn note_letter(seen: &mut Option<char>, letter: char) -> Result<(), ParseError> {
    match *seen {
        None => {
            *seen = Some(letter);
            Ok(())
        }
        Some(first) if first == letter => Ok(()),
        Some(first) => Err(ParseError::MixedLetters {
            first,
            second: letter,
        }),
    }
}

/// Parse a linear combination of creation monomials ending in `|0>`.
/// Returns the vector and the mode letter (`None` for a bare vacuum sum).
pub fn parse_state(
    alg: &GradedFrobeniusAlgebra,
    text: &str,
) -> Result<(FockVector, Option<char>), ParseError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    if cur.peek().is_none() {
        return Err(ParseError::Empty);
    }
    let mut letter: Option<char> = None;
    let mut total = FockVector::zero();
    let mut first_term = true;
    loop {
        cur.skip_ws();
        let negate = if first_term {
            first_term = false;
            // A leading sign is folded into the coefficient by
            // `leading_scalar`, so nothing to do here.
            false
        } else if cur.eat('+') {
            false
        } else if cur.eat('-') {
            true
        } else {
            let c = cur.peek().expect("loop only continues on + or -");
            return Err(ParseError::Unexpected {
                pos: cur.pos,
                found: c,
                expected: "'+' or '-' between terms".to_string(),
            });
        };
        let mut coeff = leading_scalar(&mut cur)?.unwrap_or_else(Scalar::one);
        if negate {
            coeff = -coeff;
        }
        cur.skip_ws();
        cur.eat('*');
        let mut factors: Vec<(u32, usize)> = Vec::new();
        loop {
            cur.skip_ws();
            match cur.peek() {
                Some(c @ ('a' | 'p')) => {
                    cur.bump();
                    note_letter(&mut letter, c)?;
                    let (mode, class) = factor_body(&mut cur, alg)?;
                    if mode == 0 {
                        return Err(ParseError::ZeroMode);
                    }
                    if mode > 0 {
                        return Err(ParseError::CreatorModeRequired { mode });
                    }
                    factors.push((mode.unsigned_abs() as u32, class));
                }
                Some('|') => break,
                Some(c) => {
                    return Err(ParseError::Unexpected {
                        pos: cur.pos,
                        found: c,
                        expected: "a factor or '|0>'".to_string(),
                    })
                }
                None => {
                    return Err(ParseError::UnexpectedEnd {
                        expected: "'|0>'".to_string(),
                    })
                }
            }
        }
        cur.expect('|')?;
        cur.expect('0')?;
        cur.expect('>')?;
        total.add_term(NakajimaMonomial::new(&factors), coeff);
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some('+') | Some('-') => continue,
            Some(c) => {
                return Err(ParseError::Unexpected {
                    pos: cur.pos,
                    found: c,
                    expected: "'+', '-' or end of input".to_string(),
                })
            }
        }
    }
    Ok((total, letter))
}

/// Parse a nonempty product of ring generators `O[k](b)` / `G[k](b)`.
pub fn parse_chain(
    alg: &GradedFrobeniusAlgebra,
    text: &str,
) -> Result<(char, Vec<(u32, usize)>), ParseError> {
    let mut cur = Cursor::new(text);
    let mut letter: Option<char> = None;
    let mut factors = Vec::new();
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some(c @ ('O' | 'G')) => {
                cur.bump();
                note_letter(&mut letter, c)?;
                let (order, class) = factor_body(&mut cur, alg)?;
                if order < 0 {
                    return Err(ParseError::Unexpected {
                        pos: cur.pos,
                        found: '-',
                        expected: "a nonnegative generator order".to_string(),
                    });
                }
                factors.push((order as u32, class));
            }
            None if !factors.is_empty() => break,
            None => return Err(ParseError::Empty),
            Some(c) => {
                return Err(ParseError::Unexpected {
                    pos: cur.pos,
                    found: c,
                    expected: "'O[k](b)' or 'G[k](b)'".to_string(),
                })
            }
        }
    }
    Ok((letter.expect("nonempty chain has a letter"), factors))
}

/// Dispatch on the first letter: `O`/`G` make a generator chain, anything
/// else must be a state.
pub fn parse_expr(alg: &GradedFrobeniusAlgebra, text: &str) -> Result<Expr, ParseError> {
    let mut probe = Cursor::new(text);
    probe.skip_ws();
    match probe.peek() {
        Some('O') | Some('G') => {
            let (letter, factors) = parse_chain(alg, text)?;
            Ok(Expr::Chain { letter, factors })
        }
        Some(_) => {
            let (vector, letter) = parse_state(alg, text)?;
            Ok(Expr::State { letter, vector })
        }
        None => Err(ParseError::Empty),
    }
}

/// Parse a parenthesized mode list like `(-3)` or `(-1, -2)`.
pub fn parse_modes(text: &str) -> Result<Vec<i64>, ParseError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    cur.expect('(')?;
    let mut out = Vec::new();
    loop {
        cur.skip_ws();
        let mode = cur.scan_integer()?;
        if mode == 0 {
            return Err(ParseError::ZeroMode);
        }
        out.push(mode);
        cur.skip_ws();
        if cur.eat(',') {
            continue;
        }
        cur.expect(')')?;
        break;
    }
    cur.expect_end()?;
    Ok(out)
}

/// Standalone scalar literal, accepting everything `leading_scalar` does.
pub fn parse_scalar(text: &str) -> Result<Scalar, ParseError> {
    let mut cur = Cursor::new(text);
    cur.skip_ws();
    let value = if cur.eat('(') {
        let v = scalar_full(&mut cur)?;
        cur.skip_ws();
        cur.expect(')')?;
        v
    } else {
        scalar_full(&mut cur)?
    };
    cur.expect_end()?;
    Ok(value)
}
