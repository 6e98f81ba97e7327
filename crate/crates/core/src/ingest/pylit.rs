//! Minimal reader for the Python literals used in `####`-separated label
//! files: nested lists/tuples of strings and integers.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PyValue {
    Str(String),
    Int(i64),
    Seq(Vec<PyValue>),
    None,
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
}

pub fn parse(src: &str) -> Result<PyValue, String> {
    let mut r = Reader {
        chars: src.char_indices().peekable(),
        src,
    };
    let v = r.value(0)?;
    r.skip_ws();
    match r.chars.peek() {
        None => Ok(v),
        Some((i, _)) => Err(format!("trailing input at byte {i}")),
    }
}

const MAX_DEPTH: usize = 8;

impl<'a> Reader<'a> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn value(&mut self, depth: usize) -> Result<PyValue, String> {
        if depth > MAX_DEPTH {
            return Err("literal nested too deeply".into());
        }
        self.skip_ws();
        match self.chars.peek().copied() {
            Some((_, '[')) => self.seq(']', depth),
            Some((_, '(')) => self.seq(')', depth),
            Some((_, q @ ('\'' | '"'))) => self.string(q),
            Some((_, c)) if c == '-' || c.is_ascii_digit() => self.int(),
            Some((i, _)) if self.src[i..].starts_with("None") => {
                for _ in 0..4 {
                    self.chars.next();
                }
                Ok(PyValue::None)
            }
            Some((i, c)) => Err(format!("unexpected {c:?} at byte {i}")),
            None => Err("unexpected end of literal".into()),
        }
    }

    fn seq(&mut self, close: char, depth: usize) -> Result<PyValue, String> {
        self.chars.next();
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if matches!(self.chars.peek(), Some((_, c)) if *c == close) {
                self.chars.next();
                return Ok(PyValue::Seq(items));
            }
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.chars.next() {
                Some((_, ',')) => {}
                Some((_, c)) if c == close => return Ok(PyValue::Seq(items)),
                Some((i, c)) => return Err(format!("unexpected {c:?} at byte {i}")),
                None => return Err("unterminated sequence".into()),
            }
        }
    }

    fn string(&mut self, quote: char) -> Result<PyValue, String> {
        self.chars.next();
        let mut out = String::new();
        while let Some((_, c)) = self.chars.next() {
            match c {
                '\\' => match self.chars.next() {
                    Some((_, 'n')) => out.push('\n'),
                    Some((_, 't')) => out.push('\t'),
                    Some((_, e @ ('\\' | '\'' | '"'))) => out.push(e),
                    Some((_, e)) => {
                        out.push('\\');
                        out.push(e);
                    }
                    None => break,
                },
                c if c == quote => return Ok(PyValue::Str(out)),
                c => out.push(c),
            }
        }
        Err("unterminated string".into())
    }

    fn int(&mut self) -> Result<PyValue, String> {
        let mut s = String::new();
        while let Some((_, c)) = self.chars.peek().copied() {
            if c == '-' || c.is_ascii_digit() {
                s.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        s.parse().map(PyValue::Int).map_err(|e| format!("bad integer {s:?}: {e}"))
    }
}
