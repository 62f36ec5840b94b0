use thiserror::Error;

use super::{Arg, ArgShape, Builtin, FPart, Kwarg, PlanProgram, Span, Statement, StatementKind};
use super::{DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty plan")]
    EmptyPlan,
    #[error("{0}")]
    Syntax(String),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("`{builtin}` has no keyword argument `{name}`")]
    BadKwarg { builtin: Builtin, name: String },
    #[error("`{builtin}` is missing keyword argument `{name}`")]
    MissingKwarg { builtin: Builtin, name: String },
    #[error("duplicate keyword argument `{0}`")]
    DuplicateKwarg(String),
    #[error("unterminated string")]
    UnterminatedString,
    #[error("keyword argument `{0}` does not take a list")]
    ListNotAllowed(String),
    #[error("keyword argument `{0}` expects a list of variables")]
    ListRequired(String),
    #[error("f-string: {0}")]
    BadFString(String),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// `Name [: Type] =` at the start of a line. Before the first statement the
/// type annotation is required, which keeps prompt scaffolding such as
/// `query = Original_Query` out of the plan.
fn looks_like_statement(line: &str, started: bool) -> bool {
    let s = line.trim_start();
    let mut chars = s.char_indices().peekable();
    match chars.next() {
        Some((_, c)) if is_ident_start(c) => {}
        _ => return false,
    }
    let mut rest = s;
    while let Some(&(i, c)) = chars.peek() {
        if !is_ident_char(c) {
            rest = &s[i..];
            break;
        }
        chars.next();
        rest = "";
    }
    let rest = rest.trim_start();
    let (annotated, rest) = match rest.strip_prefix(':') {
        Some(r) => {
            let r = r.trim_start();
            let end = r.find(|c: char| !is_ident_char(c)).unwrap_or(r.len());
            if end == 0 {
                return false;
            }
            (true, r[end..].trim_start())
        }
        None => (false, rest),
    };
    if !annotated && !started {
        return false;
    }
    rest.starts_with('=') && !rest.starts_with("==")
}

/// Bracket depth at the end of `text`, ignoring brackets inside strings.
fn open_depth(text: &str) -> i64 {
    let mut depth = 0i64;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in text.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q || c == '\n' {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            '#' => {
                // comment runs to end of line; only matters for the last line
            }
            _ => {}
        }
    }
    depth
}

/// Parses plan text into a program. Prose before the first statement and
/// anything after `Finish_The_Plan` is skipped with a note.
pub fn parse_plan(text: &str) -> Result<PlanProgram, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut statements = Vec::new();
    let mut notes = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            i += 1;
            continue;
        }
        let started = !statements.is_empty();
        if !looks_like_statement(line, started) {
            if !started {
                notes.push(Diagnostic::warning(
                    DiagCode::SkippedText,
                    i + 1,
                    None,
                    "skipped text before the first statement".into(),
                ));
                i += 1;
                continue;
            }
            let column = line.len() - line.trim_start().len() + 1;
            return Err(ParseError {
                line: i + 1,
                column,
                kind: ParseErrorKind::Syntax("expected a statement `Name: str = ...`".into()),
            });
        }
        let mut logical = line.to_string();
        let mut end = i;
        while open_depth(&logical) > 0 && end + 1 < lines.len() {
            end += 1;
            logical.push('\n');
            logical.push_str(lines[end]);
        }
        let stmt = StatementParser::new(&logical, i + 1).statement()?;
        let finished = stmt.builtin() == Some(Builtin::FinishThePlan);
        statements.push(stmt);
        i = end + 1;
        if finished {
            let trailing = lines[i.min(lines.len())..]
                .iter()
                .position(|l| !l.trim().is_empty() && !l.trim().starts_with('#'));
            if let Some(off) = trailing {
                notes.push(Diagnostic::warning(
                    DiagCode::SkippedText,
                    i + off + 1,
                    None,
                    "ignored text after Finish_The_Plan".into(),
                ));
            }
            break;
        }
    }
    if statements.is_empty() {
        return Err(ParseError {
            line: 1,
            column: 1,
            kind: ParseErrorKind::EmptyPlan,
        });
    }
    Ok(PlanProgram { statements, notes })
}

struct StatementParser {
    chars: Vec<char>,
    pos: usize,
    first_line: usize,
}

impl StatementParser {
    fn new(text: &str, first_line: usize) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
            first_line,
        }
    }

    fn span_at(&self, pos: usize) -> Span {
        let mut line = self.first_line;
        let mut column = 1;
        for &c in &self.chars[..pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
        }
        Span { line, column }
    }

    fn err_at(&self, pos: usize, kind: ParseErrorKind) -> ParseError {
        let s = self.span_at(pos);
        ParseError {
            line: s.line,
            column: s.column,
            kind,
        }
    }

    fn syntax(&self, msg: &str) -> ParseError {
        self.err_at(self.pos, ParseErrorKind::Syntax(msg.to_string()))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn skip_inline_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c == ' ' || c == '\t' || c == '\r') {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected {what}")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(c) if is_ident_start(c) => {}
            _ => return Err(self.syntax("expected an identifier")),
        }
        let start = self.pos;
        while matches!(self.peek(), Some(c) if is_ident_char(c)) {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        self.skip_inline_ws();
        let span = self.span_at(self.pos);
        let var = self.ident()?;
        self.skip_inline_ws();
        if self.peek() == Some(':') {
            self.pos += 1;
            self.skip_inline_ws();
            self.ident()?;
            self.skip_inline_ws();
        }
        self.expect('=', "`=`")?;
        self.skip_inline_ws();
        let kind = self.rhs()?;
        self.skip_ws();
        match self.peek() {
            None => {}
            Some('#') => {}
            Some(_) => return Err(self.syntax("unexpected trailing input")),
        }
        Ok(Statement { var, kind, span })
    }

    fn rhs(&mut self) -> Result<StatementKind, ParseError> {
        match self.peek() {
            Some('f') if matches!(self.chars.get(self.pos + 1), Some('"') | Some('\'')) => {
                self.pos += 1;
                let open = self.pos;
                let raw = self.string()?;
                let parts = split_fstring(&raw).map_err(|m| self.err_at(open, ParseErrorKind::BadFString(m)))?;
                Ok(StatementKind::FString { parts })
            }
            Some('"') | Some('\'') => Ok(StatementKind::Literal { text: self.string()? }),
            Some(c) if is_ident_start(c) => {
                let at = self.pos;
                let name = self.ident()?;
                let builtin: Builtin = name
                    .parse()
                    .map_err(|_| self.err_at(at, ParseErrorKind::UnknownBuiltin(name.clone())))?;
                self.skip_inline_ws();
                self.expect('(', "`(` after builtin name")?;
                let args = self.kwargs(builtin)?;
                for (param, _) in builtin.params() {
                    if !args.iter().any(|k| k.name == *param) {
                        return Err(self.err_at(
                            at,
                            ParseErrorKind::MissingKwarg {
                                builtin,
                                name: param.to_string(),
                            },
                        ));
                    }
                }
                Ok(StatementKind::Call { builtin, args })
            }
            _ => Err(self.syntax("expected a string, an f-string or a builtin call")),
        }
    }

    fn kwargs(&mut self, builtin: Builtin) -> Result<Vec<Kwarg>, ParseError> {
        let mut args: Vec<Kwarg> = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(')') {
                self.pos += 1;
                return Ok(args);
            }
            let at = self.pos;
            let name = self.ident().map_err(|_| self.syntax("expected a keyword argument `name = value`"))?;
            self.skip_ws();
            if self.peek() != Some('=') {
                return Err(self.err_at(at, ParseErrorKind::Syntax("positional arguments are not allowed; use `name = value`".into())));
            }
            let shape = builtin
                .params()
                .iter()
                .find(|(p, _)| *p == name)
                .map(|(_, s)| *s)
                .ok_or_else(|| {
                    self.err_at(
                        at,
                        ParseErrorKind::BadKwarg {
                            builtin,
                            name: name.clone(),
                        },
                    )
                })?;
            if args.iter().any(|k| k.name == name) {
                return Err(self.err_at(at, ParseErrorKind::DuplicateKwarg(name)));
            }
            self.expect('=', "`=` after keyword")?;
            self.skip_ws();
            let value_at = self.pos;
            let value = self.value()?;
            match (shape, &value) {
                (ArgShape::Scalar, Arg::List(_)) => {
                    return Err(self.err_at(value_at, ParseErrorKind::ListNotAllowed(name)))
                }
                (ArgShape::List, Arg::Var(_) | Arg::Literal(_)) => {
                    return Err(self.err_at(value_at, ParseErrorKind::ListRequired(name)))
                }
                _ => {}
            }
            args.push(Kwarg { name, value });
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {}
                _ => return Err(self.syntax("expected `,` or `)`")),
            }
        }
    }

    fn value(&mut self) -> Result<Arg, ParseError> {
        match self.peek() {
            Some('[') => {
                self.pos += 1;
                let mut vars = Vec::new();
                loop {
                    self.skip_ws();
                    if self.peek() == Some(']') {
                        self.pos += 1;
                        return Ok(Arg::List(vars));
                    }
                    vars.push(self.ident()?);
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => self.pos += 1,
                        Some(']') => {}
                        _ => return Err(self.syntax("expected `,` or `]`")),
                    }
                }
            }
            Some('"') | Some('\'') => Ok(Arg::Literal(self.string()?)),
            Some(c) if is_ident_start(c) => Ok(Arg::Var(self.ident()?)),
            _ => Err(self.syntax("expected a variable, a string or a list")),
        }
    }

    /// Single-line quoted string with backslash escapes.
    fn string(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        let q = self.peek().expect("caller checked quote");
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => return Err(self.err_at(open, ParseErrorKind::UnterminatedString)),
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        None | Some('\n') => return Err(self.err_at(open, ParseErrorKind::UnterminatedString)),
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some(c @ ('\\' | '"' | '\'')) => out.push(c),
                        Some(c) => {
                            out.push('\\');
                            out.push(c);
                        }
                    }
                    self.pos += 1;
                }
                Some(c) if c == q => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }
}

fn split_fstring(raw: &str) -> Result<Vec<FPart>, String> {
    let mut parts = Vec::new();
    let mut text = String::new();
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) if is_ident_char(c) => name.push(c),
                        Some(c) => return Err(format!("unsupported `{c}` in placeholder; only {{Var}} is allowed")),
                        None => return Err("unclosed `{`".into()),
                    }
                }
                if name.is_empty() || !name.starts_with(is_ident_start) {
                    return Err(format!("`{{{name}}}` is not a variable reference"));
                }
                if !text.is_empty() {
                    parts.push(FPart::Text(std::mem::take(&mut text)));
                }
                parts.push(FPart::Var(name));
            }
            '}' => return Err("single `}` must be doubled".into()),
            c => text.push(c),
        }
    }
    if !text.is_empty() {
        parts.push(FPart::Text(text));
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const NAMIBIA: &str = r#"### Question Type: Two Projection
### Decompose the original question into sub-questions.

Thought1: str = "If I want to know who succeeded the first President of Namibia, I need to first know who is the first President of Namibia."
Sub_Question_1: str = "Who is the first President of Namibia?"
Info_1: str = Search(query = Sub_Question_1, thought = Thought1)
Ans_1: str = Get_Answer(query = Sub_Question_1, info = Info_1)

Thought2: str = "After knowing who is the first President of Namibia, I need to know who succeeded him."
Sub_Question_2: str = f"Who succeeded {Ans_1}?"
Info_2: str = Search(query = Sub_Question_2, thought = Thought2)
Ans_2: str = Get_Answer(query = Sub_Question_2, info = Info_2)

Final_Answer: str = Finish_The_Plan(Answer = Ans_2)
"#;

    fn err(text: &str) -> ParseError {
        parse_plan(text).unwrap_err()
    }

    #[test]
    fn namibia_plan() {
        let p = parse_plan(NAMIBIA).unwrap();
        assert_eq!(p.len(), 9);
        assert!(p.notes.is_empty());
        let sq2 = &p.statements[5];
        assert_eq!(sq2.var, "Sub_Question_2");
        assert_eq!(
            sq2.kind,
            StatementKind::FString {
                parts: vec![
                    FPart::Text("Who succeeded ".into()),
                    FPart::Var("Ans_1".into()),
                    FPart::Text("?".into())
                ]
            }
        );
        assert_eq!(sq2.span, Span { line: 10, column: 1 });
        assert_eq!(p.statements[8].builtin(), Some(Builtin::FinishThePlan));
    }

    #[test]
    fn empty_plan() {
        assert_eq!(err("").kind, ParseErrorKind::EmptyPlan);
        assert_eq!(err("  \n# nothing\n").kind, ParseErrorKind::EmptyPlan);
        assert_eq!(err("").to_string(), "line 1, column 1: empty plan");
    }

    #[test]
    fn prose_around_the_plan_is_skipped() {
        let text = format!("Sure! Here is the plan:\n```python\n{NAMIBIA}```\nHope this helps.\n");
        let p = parse_plan(&text).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.notes.len(), 3);
        assert!(p.notes.iter().all(|n| n.code == DiagCode::SkippedText));
    }

    #[test]
    fn unknown_builtin() {
        let e = err("X: str = Lookup(query = Y)\n");
        assert_eq!(e.kind, ParseErrorKind::UnknownBuiltin("Lookup".into()));
        assert_eq!((e.line, e.column), (1, 10));
    }

    #[test]
    fn kwarg_errors() {
        let e = err("Thought1: str = \"t\"\nQ: str = \"q\"\nInfo: str = Search(qeury = Q, thought = Thought1)\n");
        assert!(matches!(e.kind, ParseErrorKind::BadKwarg { builtin: Builtin::Search, ref name } if name == "qeury"));
        assert_eq!((e.line, e.column), (3, 20));
        assert!(matches!(
            err("A: str = Search(query = Q)\n").kind,
            ParseErrorKind::MissingKwarg { .. }
        ));
        assert!(matches!(
            err("A: str = Union(Answer1 = X, Answer1 = Y)\n").kind,
            ParseErrorKind::DuplicateKwarg(_)
        ));
        assert!(matches!(
            err("A: str = Union(Answer1 = [X], Answer2 = Y)\n").kind,
            ParseErrorKind::ListNotAllowed(_)
        ));
        assert!(matches!(
            err("A: str = Compare(Original_Query = Q, Subquestions = S, Answers = [A1])\n").kind,
            ParseErrorKind::ListRequired(_)
        ));
        assert!(matches!(err("A: str = Union(X, Y)\n").kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn unterminated_string() {
        let e = err("A: str = \"open\nB: str = \"x\"\n");
        assert_eq!(e.kind, ParseErrorKind::UnterminatedString);
        assert_eq!((e.line, e.column), (1, 10));
    }

    #[test]
    fn multiline_call_and_lists() {
        let p = parse_plan(
            "Ans_3: str = Compare(\n    Original_Query = Original_Question,\n    Subquestions = [Q1, Q2],\n    Answers = [A1, A2],\n)\nF: str = Finish_The_Plan(Answer = Ans_3)\n",
        )
        .unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(
            p.statements[0].arg("Answers"),
            Some(&Arg::List(vec!["A1".into(), "A2".into()]))
        );
        assert_eq!(p.statements[1].span.line, 6);
    }

    #[test]
    fn fstring_forms() {
        let p = parse_plan("Q: str = f\"{{literal}} {Inter_A} and {Ans_1}\"\n").unwrap();
        let StatementKind::FString { parts } = &p.statements[0].kind else { panic!() };
        assert_eq!(
            parts,
            &vec![
                FPart::Text("{literal} ".into()),
                FPart::Var("Inter_A".into()),
                FPart::Text(" and ".into()),
                FPart::Var("Ans_1".into())
            ]
        );
        assert!(matches!(err("Q: str = f\"{Ans_1:>3}\"\n").kind, ParseErrorKind::BadFString(_)));
        assert!(matches!(err("Q: str = f\"{Ans_1 + 1}\"\n").kind, ParseErrorKind::BadFString(_)));
        assert!(matches!(err("Q: str = f\"}\"\n").kind, ParseErrorKind::BadFString(_)));
    }

    #[test]
    fn escapes_and_quote_round_trip() {
        let text = "He said \"hi\" \\ back";
        let src = format!("A: str = {}\n", super::super::quote(text));
        let p = parse_plan(&src).unwrap();
        assert_eq!(p.statements[0].kind, StatementKind::Literal { text: text.into() });
    }

    #[test]
    fn garbage_mid_plan_is_an_error() {
        let e = err("A: str = \"x\"\nthis is not code\n");
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(e.line, 2);
        assert!(matches!(err("A: str = \"x\" trailing\n").kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn trailing_comment_allowed() {
        let p = parse_plan("A: str = \"x\"  # note\n").unwrap();
        assert_eq!(p.len(), 1);
    }
}
