use super::{AccessPolicy, Attribute, PolicyError, PolicyNode};

/// Parses the prefix policy DSL.
///
/// ```text
/// expr   := attr | AND(expr, ...) | OR(expr, ...) | THRESH(int, expr, ...)
/// ```
///
/// Gate keywords are case-sensitive; attribute leaves are canonicalized.
pub fn parse_policy(text: &str) -> Result<AccessPolicy, PolicyError> {
    let mut p = Parser { src: text, pos: 0 };
    let root = p.expr("root")?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(AccessPolicy { root })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> PolicyError {
        PolicyError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), PolicyError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .find(|c: char| c.is_whitespace() || matches!(c, '(' | ')' | ','))
            .unwrap_or(rest.len());
        self.pos += len;
        &self.src[start..start + len]
    }

    fn expr(&mut self, path: &str) -> Result<PolicyNode, PolicyError> {
        let start = {
            self.skip_ws();
            self.pos
        };
        let tok = self.token();
        if tok.is_empty() {
            return Err(self.error("expected attribute or gate"));
        }
        self.skip_ws();
        let is_call = self.peek() == Some('(');
        match (tok, is_call) {
            ("AND" | "OR" | "THRESH", true) => {
                self.expect('(')?;
                let threshold = if tok == "THRESH" {
                    let t_pos = {
                        self.skip_ws();
                        self.pos
                    };
                    let t_tok = self.token();
                    let t = t_tok.parse::<usize>().map_err(|_| PolicyError::Syntax {
                        pos: t_pos,
                        msg: format!("expected threshold integer, found {t_tok:?}"),
                    })?;
                    self.expect(',')?;
                    Some(t)
                } else {
                    None
                };
                let mut children = Vec::new();
                loop {
                    let child_path = format!("{path}.children[{}]", children.len());
                    children.push(self.expr(&child_path)?);
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.error("expected `,` or `)`")),
                    }
                }
                let threshold = match (tok, threshold) {
                    ("AND", _) => children.len(),
                    ("OR", _) => 1,
                    (_, Some(t)) => t,
                    _ => unreachable!(),
                };
                if threshold < 1 || threshold > children.len() {
                    return Err(PolicyError::ThresholdOutOfRange {
                        threshold,
                        children: children.len(),
                        path: path.to_string(),
                    });
                }
                Ok(PolicyNode::Gate {
                    threshold,
                    children,
                })
            }
            (_, true) => Err(PolicyError::Syntax {
                pos: start,
                msg: format!("unknown gate {tok:?}"),
            }),
            (_, false) => Attribute::new(tok).map(PolicyNode::Leaf).map_err(|_| {
                PolicyError::Syntax {
                    pos: start,
                    msg: format!("invalid attribute {tok:?}"),
                }
            }),
        }
    }
}
