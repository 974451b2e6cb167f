//! Hand-rolled lexer shared by the line parser and the formula parser.
//! Tracks 1-based columns so errors can point at the offending token.

use super::{ParseError, ParseErrorKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Token {
    Ident(String),
    Number(f64),
    Quoted(String, usize), // text plus the column right after the opening quote
    Arrow,
    Colon,
    Bang,
    Amp,
    Pipe,
    LParen,
    RParen,
    True,
    False,
    End,
}

#[derive(Clone, Debug)]
pub struct Spanned {
    pub token: Token,
    pub column: usize,
}

pub struct Lexer {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    col_offset: usize,
}

impl Lexer {
    /// `col_offset` shifts reported columns; the formula parser uses it to
    /// report positions inside the quoted guard relative to the full line.
    pub fn new(src: &str, line: usize, col_offset: usize) -> Self {
        Lexer {
            chars: src.char_indices().collect(),
            pos: 0,
            line,
            col_offset,
        }
    }

    fn error(&self, column: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: column + self.col_offset,
            kind,
            message: message.into(),
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    /// Column (1-based, before offset) of the current read position.
    fn column(&self) -> usize {
        self.pos + 1
    }

    pub fn next_token(&mut self) -> Result<Spanned, ParseError> {
        while matches!(self.peek_char(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
        let column = self.column();
        let Some(c) = self.peek_char() else {
            return Ok(Spanned { token: Token::End, column: column + self.col_offset });
        };
        let spanned = |token| Spanned { token, column: column + self.col_offset };
        match c {
            '(' => {
                self.pos += 1;
                Ok(spanned(Token::LParen))
            }
            ')' => {
                self.pos += 1;
                Ok(spanned(Token::RParen))
            }
            '!' => {
                self.pos += 1;
                Ok(spanned(Token::Bang))
            }
            '&' => {
                self.pos += 1;
                Ok(spanned(Token::Amp))
            }
            '|' => {
                self.pos += 1;
                Ok(spanned(Token::Pipe))
            }
            ':' => {
                self.pos += 1;
                Ok(spanned(Token::Colon))
            }
            '-' => {
                // either "->" or a negative number
                if self.chars.get(self.pos + 1).map(|&(_, c)| c) == Some('>') {
                    self.pos += 2;
                    Ok(spanned(Token::Arrow))
                } else if matches!(self.chars.get(self.pos + 1), Some(&(_, c)) if c.is_ascii_digit())
                {
                    self.lex_number(column)
                } else {
                    Err(self.error(column, ParseErrorKind::Lex, "stray `-`"))
                }
            }
            '"' => {
                let start = self.pos + 1;
                let mut end = start;
                while end < self.chars.len() && self.chars[end].1 != '"' {
                    end += 1;
                }
                if end == self.chars.len() {
                    return Err(self.error(column, ParseErrorKind::Lex, "unterminated quote"));
                }
                let text: String = self.chars[start..end].iter().map(|&(_, c)| c).collect();
                self.pos = end + 1;
                Ok(Spanned {
                    token: Token::Quoted(text, start + 1 + self.col_offset),
                    column: column + self.col_offset,
                })
            }
            c if c.is_ascii_digit() => self.lex_number(column),
            c if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while matches!(self.peek_char(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let word: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
                let token = match word.as_str() {
                    "true" => Token::True,
                    "false" => Token::False,
                    _ => Token::Ident(word),
                };
                Ok(spanned(token))
            }
            other => Err(self.error(
                column,
                ParseErrorKind::Lex,
                format!("unexpected character `{other}`"),
            )),
        }
    }

    fn lex_number(&mut self, column: usize) -> Result<Spanned, ParseError> {
        let start = self.pos;
        if self.peek_char() == Some('-') {
            self.pos += 1;
        }
        while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek_char() == Some('.') {
            self.pos += 1;
            if !matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                return Err(self.error(
                    self.column(),
                    ParseErrorKind::Lex,
                    "digits must follow the decimal point",
                ));
            }
            while matches!(self.peek_char(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|&(_, c)| c).collect();
        let value: f64 = text.parse().map_err(|_| {
            self.error(column, ParseErrorKind::Lex, format!("bad number `{text}`"))
        })?;
        Ok(Spanned {
            token: Token::Number(value),
            column: column + self.col_offset,
        })
    }

    /// Lexes the remainder of the source, ending with `Token::End`.
    pub fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            let t = self.next_token()?;
            let end = matches!(t.token, Token::End);
            out.push(t);
            if end {
                return Ok(out);
            }
        }
    }
}
