use std::fmt;
use std::sync::Arc;

use serde::Serialize;

/// Location of a parsed element.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Debug)]
pub enum SExpr {
    Symbol(String, SourceSpan),
    List(Vec<SExpr>, SourceSpan),
}

impl SExpr {
    pub fn span(&self) -> &SourceSpan {
        match self {
            SExpr::Symbol(_, s) | SExpr::List(_, s) => s,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items, _) => Some(items),
            SExpr::Symbol(..) => None,
        }
    }

    /// For `(keyword ...)` lists, the keyword.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_symbol()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub message: String,
    pub span: SourceSpan,
}

/// Reads every top-level s-expression of `text`. `;` starts a line comment.
pub fn read_all(text: &str, file: &str) -> Result<Vec<SExpr>, SyntaxError> {
    let file: Arc<str> = Arc::from(file);
    let mut stack: Vec<(Vec<SExpr>, SourceSpan)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    let span = |line, column| SourceSpan {
        file: file.clone(),
        line,
        column,
    };
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => {
                chars.next();
                stack.push((Vec::new(), span(line, col)));
                col += 1;
            }
            ')' => {
                chars.next();
                let Some((items, sp)) = stack.pop() else {
                    return Err(SyntaxError {
                        message: "unbalanced ')'".into(),
                        span: span(line, col),
                    });
                };
                col += 1;
                let e = SExpr::List(items, sp);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(e),
                    None => top.push(e),
                }
            }
            _ => {
                let start = i;
                let sp = span(line, col);
                let mut end = text.len();
                while let Some(&(j, c)) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        end = j;
                        break;
                    }
                    chars.next();
                    col += 1;
                }
                let e = SExpr::Symbol(text[start..end].to_string(), sp);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(e),
                    None => top.push(e),
                }
            }
        }
    }
    if let Some((_, sp)) = stack.pop() {
        return Err(SyntaxError {
            message: "unclosed '('".into(),
            span: sp,
        });
    }
    Ok(top)
}
