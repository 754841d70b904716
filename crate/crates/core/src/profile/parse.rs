//! Recursive-descent parser for profile expressions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := '-' factor | primary ('^' factor)?
//! primary := number | 'tau' | const | func '(' expr ')' | '(' expr ')'
//! ```

use super::ast::{BinOp, Constant, Func, ProfileAst};
use super::ProfileError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Next token and the byte offset where it starts.
    fn next(&mut self) -> Result<(Tok, usize), ProfileError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            return self.number(start).map(|n| (Tok::Num(n), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            other => {
                return Err(ProfileError::Syntax {
                    offset: start,
                    message: format!("unexpected character '{other}'"),
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<f64, ProfileError> {
        let bytes = self.src.as_bytes();
        let mut i = start;
        let digits = |i: &mut usize| {
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
        };
        digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            digits(&mut i);
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                i = j;
                digits(&mut i);
            }
        }
        let text = &self.src[start..i];
        self.pos = i;
        text.parse::<f64>().map_err(|_| ProfileError::Syntax {
            offset: start,
            message: format!("malformed number '{text}'"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ProfileError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ProfileError> {
        Err(ProfileError::Syntax {
            offset: self.at,
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<ProfileAst, ProfileError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = ProfileAst::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<ProfileAst, ProfileError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.factor()?;
            lhs = ProfileAst::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<ProfileAst, ProfileError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.factor()?;
            return Ok(ProfileAst::Neg(Box::new(inner)));
        }
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.factor()?;
            return Ok(ProfileAst::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ProfileAst, ProfileError> {
        match self.tok.clone() {
            Tok::Num(x) => {
                self.bump()?;
                Ok(ProfileAst::Num(x))
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return self.syntax("expected ')'");
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(name),
            Tok::End => self.syntax("unexpected end of input"),
            other => self.syntax(format!("unexpected token {other:?}")),
        }
    }

    fn identifier(&mut self, name: String) -> Result<ProfileAst, ProfileError> {
        let offset = self.at;
        let leaf = match name.as_str() {
            "tau" => Some(ProfileAst::Tau),
            "pi" => Some(ProfileAst::Const(Constant::Pi)),
            "e" => Some(ProfileAst::Const(Constant::E)),
            _ => None,
        };
        self.bump()?;
        if let Some(leaf) = leaf {
            if self.tok == Tok::LParen {
                return Err(ProfileError::Arity {
                    name,
                    offset,
                    expected: 0,
                    found: self.count_args()?,
                });
            }
            return Ok(leaf);
        }
        let Some(func) = Func::from_name(&name) else {
            return Err(ProfileError::UnknownIdentifier { name, offset });
        };
        if self.tok != Tok::LParen {
            return Err(ProfileError::Arity {
                name,
                offset,
                expected: 1,
                found: 0,
            });
        }
        self.bump()?;
        if self.tok == Tok::RParen {
            return Err(ProfileError::Arity {
                name,
                offset,
                expected: 1,
                found: 0,
            });
        }
        let arg = self.expr()?;
        match self.tok {
            Tok::RParen => {
                self.bump()?;
                Ok(ProfileAst::call(func, arg))
            }
            Tok::Comma => {
                let mut found = 1;
                while self.tok == Tok::Comma {
                    self.bump()?;
                    self.expr()?;
                    found += 1;
                }
                Err(ProfileError::Arity {
                    name,
                    offset,
                    expected: 1,
                    found,
                })
            }
            _ => self.syntax("expected ')'"),
        }
    }

    /// Consumes a parenthesised argument list and reports how many
    /// arguments it held; used only to produce arity diagnostics.
    fn count_args(&mut self) -> Result<usize, ProfileError> {
        self.bump()?;
        if self.tok == Tok::RParen {
            return Ok(0);
        }
        let mut found = 1;
        self.expr()?;
        while self.tok == Tok::Comma {
            self.bump()?;
            self.expr()?;
            found += 1;
        }
        Ok(found)
    }
}

pub fn parse(source: &str) -> Result<ProfileAst, ProfileError> {
    let mut parser = Parser {
        lexer: Lexer {
            src: source,
            pos: 0,
        },
        tok: Tok::End,
        at: 0,
    };
    parser.bump()?;
    let ast = parser.expr()?;
    if parser.tok != Tok::End {
        return parser.syntax("trailing input");
    }
    Ok(ast)
}
