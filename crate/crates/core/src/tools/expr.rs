//! Arithmetic over columns for derived query columns.
//!
//! Grammar: `expr := term (('+' | '-') term)*`, `term := unary (('*' | '/') unary)*`,
//! `unary := '-' unary | atom`, `atom := number | column | '(' expr ')'`.
//! `×` and `÷` are accepted for `*` and `/`; column names containing spaces or
//! symbols can be written in double quotes or backticks.

use super::dataset::{Cell, Dataset};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Col(usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' | '-' | '*' | '/' => {
                out.push(Tok::Op(c));
                i += 1;
            }
            '×' => {
                out.push(Tok::Op('*'));
                i += 1;
            }
            '÷' => {
                out.push(Tok::Op('/'));
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            '"' | '`' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| format!("unterminated quoted name in expression {src:?}"))?;
                out.push(Tok::Ident(chars[i + 1..i + 1 + end].iter().collect()));
                i += end + 2;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let n = text.parse::<f64>().map_err(|_| format!("bad number {text:?} in expression"))?;
                out.push(Tok::Num(n));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character {other:?} in expression {src:?}")),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    dataset: &'a Dataset,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Ident(name)) => {
                let idx = self.dataset.require_column(&name)?;
                if !self.dataset.columns[idx].dtype.is_numeric() {
                    return Err(format!("column {name} is not numeric"));
                }
                Ok(Expr::Col(idx))
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err("missing closing parenthesis".into()),
                }
            }
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

impl Expr {
    /// Parses `src` with column names bound against `dataset`'s schema.
    pub fn parse(src: &str, dataset: &Dataset) -> Result<Expr, String> {
        let toks = tokenize(src)?;
        if toks.is_empty() {
            return Err("empty expression".into());
        }
        let mut p = Parser { toks, pos: 0, dataset };
        let e = p.expr()?;
        if p.pos < p.toks.len() {
            return Err(format!("unexpected trailing input in expression {src:?}"));
        }
        Ok(e)
    }

    /// Null when any referenced cell is null, on division by zero, or on a non-finite result.
    pub fn eval(&self, row: &[Cell]) -> Option<f64> {
        let v = match self {
            Expr::Num(n) => *n,
            Expr::Col(i) => row[*i].as_f64()?,
            Expr::Neg(e) => -e.eval(row)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(row)?, b.eval(row)?);
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ => {
                        if b == 0.0 {
                            return None;
                        }
                        a / b
                    }
                }
            }
        };
        v.is_finite().then_some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::dataset::{Column, DType};

    fn table() -> Dataset {
        Dataset::new(
            vec![
                Column { name: "tip_amount".into(), dtype: DType::Float },
                Column { name: "fare_amount".into(), dtype: DType::Float },
                Column { name: "vendor name".into(), dtype: DType::String },
                Column { name: "n".into(), dtype: DType::Integer },
            ],
            vec![],
            "",
        )
    }

    fn row(t: f64, f: f64, n: i64) -> Vec<Cell> {
        vec![Cell::Float(t), Cell::Float(f), Cell::Str("x".into()), Cell::Int(n)]
    }

    #[test]
    fn tip_percentage() {
        let e = Expr::parse("tip_amount ÷ fare_amount × 100", &table()).unwrap();
        let v = e.eval(&row(0.30, 0.01, 0)).unwrap();
        assert!((v - 3000.0).abs() < 1e-9);
    }

    #[test]
    fn precedence_and_unary() {
        let t = table();
        assert_eq!(Expr::parse("1 + 2 * 3", &t).unwrap().eval(&row(0.0, 0.0, 0)), Some(7.0));
        assert_eq!(Expr::parse("(1 + 2) * 3", &t).unwrap().eval(&row(0.0, 0.0, 0)), Some(9.0));
        assert_eq!(Expr::parse("-n - -2", &t).unwrap().eval(&row(0.0, 0.0, 5)), Some(-3.0));
        assert_eq!(Expr::parse("10 - 4 - 3", &t).unwrap().eval(&row(0.0, 0.0, 0)), Some(3.0));
        assert_eq!(Expr::parse("1.5e2", &t).unwrap().eval(&row(0.0, 0.0, 0)), Some(150.0));
    }

    #[test]
    fn nulls_and_division_by_zero() {
        let t = table();
        let e = Expr::parse("tip_amount / fare_amount", &t).unwrap();
        assert_eq!(e.eval(&row(1.0, 0.0, 0)), None);
        let mut r = row(1.0, 2.0, 0);
        r[0] = Cell::Null;
        assert_eq!(e.eval(&r), None);
    }

    #[test]
    fn schema_errors_name_the_column() {
        let t = table();
        assert!(Expr::parse("missing + 1", &t).unwrap_err().contains("missing"));
        assert!(Expr::parse("\"vendor name\" + 1", &t).unwrap_err().contains("vendor name"));
        assert!(Expr::parse("1 +", &t).is_err());
        assert!(Expr::parse("(1", &t).is_err());
        assert!(Expr::parse("1 2", &t).is_err());
        assert!(Expr::parse("", &t).is_err());
        assert!(Expr::parse("1 % 2", &t).is_err());
    }
}
