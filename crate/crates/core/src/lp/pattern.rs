//! A small regular-expression dialect for language patterns.
//!
//! Supported: literals and escapes, `.`, character classes, `\d \w \s` (and
//! negations), `\b \B`, `^ $`, groups `( )` and `(?: )`, alternation, greedy
//! `? * + {m,n}`, a leading `(?i)` flag, and lookbehind `(?<! )` / `(?<= )`
//! whose body is an alternation of literal strings. Alternatives may differ in
//! length; each is checked separately at the match position.
//!
//! Lookahead, backreferences, named groups, lazy or possessive quantifiers
//! and other inline flags are rejected when compiling.
//!
//! Matching is leftmost-first (the same spans a backtracking engine
//! reports). A visited set over (instruction, position) keeps the search
//! linear in pattern size times text length.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unsupported construct `{construct}` at offset {position}")]
    Unsupported { construct: String, position: usize },
    #[error("empty pattern")]
    Empty,
    #[error("pattern too large after expanding repetitions")]
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ClassItem {
    Range(char, char),
    Digit(bool),
    Word(bool),
    Space(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ClassSet {
    negated: bool,
    items: Vec<ClassItem>,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl ClassItem {
    fn matches(&self, c: char) -> bool {
        match *self {
            ClassItem::Range(lo, hi) => lo <= c && c <= hi,
            ClassItem::Digit(pos) => c.is_ascii_digit() == pos,
            ClassItem::Word(pos) => is_word(c) == pos,
            ClassItem::Space(pos) => c.is_whitespace() == pos,
        }
    }
}

impl ClassSet {
    fn matches(&self, c: char, fold: bool) -> bool {
        let hit = |ch: char| self.items.iter().any(|i| i.matches(ch));
        let mut found = hit(c);
        if !found && fold {
            found = c.to_lowercase().any(hit) || c.to_uppercase().any(hit);
        }
        found != self.negated
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Char(char),
    Any,
    Class(ClassSet),
    Group(Vec<Vec<Node>>),
    Repeat {
        node: Box<Node>,
        min: u32,
        max: Option<u32>,
    },
    LookBehind {
        negate: bool,
        alternatives: Vec<Vec<char>>,
    },
    Start,
    End,
    WordBoundary(bool),
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    source: &'a str,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str) -> Self {
        Parser {
            chars: source.chars().collect(),
            pos: 0,
            source,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c))
    }

    fn syntax<T>(&self, position: usize, message: impl Into<String>) -> Result<T, PatternError> {
        Err(PatternError::Syntax {
            position,
            message: message.into(),
        })
    }

    fn unsupported<T>(&self, position: usize, construct: impl Into<String>) -> Result<T, PatternError> {
        Err(PatternError::Unsupported {
            construct: construct.into(),
            position,
        })
    }

    fn parse(mut self) -> Result<(Vec<Vec<Node>>, bool), PatternError> {
        if self.source.is_empty() {
            return Err(PatternError::Empty);
        }
        let mut case_insensitive = false;
        if self.starts_with("(?i)") {
            case_insensitive = true;
            self.pos += 4;
        }
        let alt = self.parse_alternation(0)?;
        if let Some(c) = self.peek() {
            // only a stray ')' can stop the top-level alternation early
            debug_assert_eq!(c, ')');
            return self.syntax(self.pos, "unmatched `)`");
        }
        Ok((alt, case_insensitive))
    }

    fn parse_alternation(&mut self, depth: usize) -> Result<Vec<Vec<Node>>, PatternError> {
        let mut alternatives = vec![self.parse_sequence(depth)?];
        while self.peek() == Some('|') {
            self.pos += 1;
            alternatives.push(self.parse_sequence(depth)?);
        }
        Ok(alternatives)
    }

    fn parse_sequence(&mut self, depth: usize) -> Result<Vec<Node>, PatternError> {
        let mut seq = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            let atom = self.parse_atom(depth)?;
            let atom = self.parse_quantifier(atom)?;
            seq.push(atom);
        }
        Ok(seq)
    }

    fn parse_quantifier(&mut self, atom: Node) -> Result<Node, PatternError> {
        let start = self.pos;
        let (min, max) = match self.peek() {
            Some('?') => (0, Some(1)),
            Some('*') => (0, None),
            Some('+') => (1, None),
            Some('{') => match self.parse_braces()? {
                Some(bounds) => bounds,
                None => return Ok(atom),
            },
            _ => return Ok(atom),
        };
        if self.pos == start {
            self.pos += 1;
        }
        if matches!(
            atom,
            Node::Start | Node::End | Node::WordBoundary(_) | Node::LookBehind { .. }
        ) {
            return self.syntax(start, "quantifier applied to an assertion");
        }
        match self.peek() {
            Some('?') => return self.unsupported(start, "lazy quantifier"),
            Some('+') => return self.unsupported(start, "possessive quantifier"),
            Some('*') | Some('{') => return self.syntax(self.pos, "repeated quantifier"),
            _ => {}
        }
        Ok(Node::Repeat {
            node: Box::new(atom),
            min,
            max,
        })
    }

    /// `{m}`, `{m,}` or `{m,n}`. Consumes input only on success; a brace
    /// that does not form a valid counter is a syntax error.
    fn parse_braces(&mut self) -> Result<Option<(u32, Option<u32>)>, PatternError> {
        let open = self.pos;
        let mut i = self.pos + 1;
        let read_num = |i: &mut usize| {
            let s = *i;
            while self.chars.get(*i).is_some_and(|c| c.is_ascii_digit()) {
                *i += 1;
            }
            if *i == s {
                None
            } else {
                self.chars[s..*i].iter().collect::<String>().parse::<u32>().ok()
            }
        };
        let Some(min) = read_num(&mut i) else {
            return self.syntax(open, "expected a repetition count after `{`");
        };
        let max = if self.chars.get(i) == Some(&',') {
            i += 1;
            read_num(&mut i)
        } else {
            Some(min)
        };
        if self.chars.get(i) != Some(&'}') {
            return self.syntax(open, "unterminated repetition `{`");
        }
        if let Some(max) = max {
            if max < min {
                return self.syntax(open, "repetition bounds out of order");
            }
        }
        self.pos = i + 1;
        Ok(Some((min, max)))
    }

    fn parse_atom(&mut self, depth: usize) -> Result<Node, PatternError> {
        let start = self.pos;
        let c = self.peek().expect("caller checked");
        match c {
            '(' => self.parse_group(depth),
            '[' => self.parse_class(),
            '\\' => self.parse_escape(false).map(|e| match e {
                Escaped::Char(c) => Node::Char(c),
                Escaped::Class(item) => Node::Class(ClassSet {
                    negated: false,
                    items: vec![item],
                }),
                Escaped::Boundary(b) => Node::WordBoundary(b),
            }),
            '.' => {
                self.pos += 1;
                Ok(Node::Any)
            }
            '^' => {
                self.pos += 1;
                Ok(Node::Start)
            }
            '$' => {
                self.pos += 1;
                Ok(Node::End)
            }
            '?' | '*' | '+' => self.syntax(start, format!("nothing to repeat before `{c}`")),
            '{' => {
                // a counter with no atom in front of it
                if self.parse_braces().is_ok() {
                    self.syntax(start, "nothing to repeat before `{`")
                } else {
                    self.pos = start + 1;
                    Ok(Node::Char('{'))
                }
            }
            _ => {
                self.pos += 1;
                Ok(Node::Char(c))
            }
        }
    }

    fn parse_group(&mut self, depth: usize) -> Result<Node, PatternError> {
        let open = self.pos;
        self.pos += 1;
        if self.peek() == Some('?') {
            if self.starts_with("?:") {
                self.pos += 2;
            } else if self.starts_with("?<!") || self.starts_with("?<=") {
                let negate = self.peek_at(2) == Some('!');
                self.pos += 3;
                return self.parse_lookbehind(open, negate);
            } else if self.starts_with("?=") || self.starts_with("?!") {
                return self.unsupported(open, "lookahead");
            } else if self.starts_with("?P<") || self.starts_with("?<") || self.starts_with("?'") {
                return self.unsupported(open, "named group");
            } else if self.starts_with("?>") {
                return self.unsupported(open, "atomic group");
            } else if self.starts_with("?P=") {
                return self.unsupported(open, "backreference");
            } else if self.starts_with("?#") {
                return self.unsupported(open, "comment group");
            } else {
                return self.unsupported(open, "inline flag group");
            }
        }
        let inner = self.parse_alternation(depth + 1)?;
        if self.peek() != Some(')') {
            return self.syntax(open, "unbalanced `(`");
        }
        self.pos += 1;
        Ok(Node::Group(inner))
    }

    fn parse_lookbehind(&mut self, open: usize, negate: bool) -> Result<Node, PatternError> {
        let mut alternatives = vec![Vec::new()];
        loop {
            let here = self.pos;
            match self.peek() {
                None => return self.syntax(open, "unbalanced `(`"),
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some('|') => {
                    self.pos += 1;
                    alternatives.push(Vec::new());
                }
                Some('\\') => match self.parse_escape(true)? {
                    Escaped::Char(c) => alternatives.last_mut().unwrap().push(c),
                    _ => return self.unsupported(here, "non-literal lookbehind"),
                },
                Some(c) if "()[].*+?{^$".contains(c) => {
                    return self.unsupported(here, "non-literal lookbehind");
                }
                Some(c) => {
                    self.pos += 1;
                    alternatives.last_mut().unwrap().push(c);
                }
            }
        }
        if alternatives.iter().any(Vec::is_empty) {
            return self.syntax(open, "empty lookbehind alternative");
        }
        Ok(Node::LookBehind {
            negate,
            alternatives,
        })
    }

    fn parse_escape(&mut self, literal_only: bool) -> Result<Escaped, PatternError> {
        let start = self.pos;
        self.pos += 1;
        let Some(c) = self.peek() else {
            return self.syntax(start, "trailing backslash");
        };
        self.pos += 1;
        let escaped = match c {
            'd' => Escaped::Class(ClassItem::Digit(true)),
            'D' => Escaped::Class(ClassItem::Digit(false)),
            'w' => Escaped::Class(ClassItem::Word(true)),
            'W' => Escaped::Class(ClassItem::Word(false)),
            's' => Escaped::Class(ClassItem::Space(true)),
            'S' => Escaped::Class(ClassItem::Space(false)),
            'b' => Escaped::Boundary(true),
            'B' => Escaped::Boundary(false),
            'n' => Escaped::Char('\n'),
            't' => Escaped::Char('\t'),
            'r' => Escaped::Char('\r'),
            '1'..='9' => return self.unsupported(start, "backreference"),
            'k' => return self.unsupported(start, "backreference"),
            'p' | 'P' => return self.unsupported(start, "unicode property class"),
            'A' | 'z' | 'Z' | 'G' => return self.unsupported(start, format!("\\{c} anchor")),
            c if c.is_ascii_alphanumeric() => {
                return self.unsupported(start, format!("escape \\{c}"));
            }
            c => Escaped::Char(c),
        };
        if literal_only && !matches!(escaped, Escaped::Char(_)) {
            return self.unsupported(start, "non-literal lookbehind");
        }
        Ok(escaped)
    }

    fn parse_class(&mut self) -> Result<Node, PatternError> {
        let open = self.pos;
        self.pos += 1;
        let mut negated = false;
        if self.peek() == Some('^') {
            negated = true;
            self.pos += 1;
        }
        let mut items = Vec::new();
        let mut first = true;
        loop {
            let here = self.pos;
            let c = match self.peek() {
                None => return self.syntax(open, "unterminated character class"),
                Some(']') if !first => {
                    self.pos += 1;
                    break;
                }
                Some('[') if self.peek_at(1) == Some(':') => {
                    return self.unsupported(here, "POSIX class");
                }
                Some('\\') => match self.parse_escape(false)? {
                    Escaped::Char(c) => c,
                    Escaped::Class(item) => {
                        items.push(item);
                        first = false;
                        continue;
                    }
                    Escaped::Boundary(_) => return self.syntax(here, "`\\b` inside a class"),
                },
                Some(c) => {
                    self.pos += 1;
                    c
                }
            };
            first = false;
            if self.peek() == Some('-') && self.peek_at(1).is_some_and(|n| n != ']') {
                self.pos += 1;
                let hi = match self.peek() {
                    Some('\\') => match self.parse_escape(false)? {
                        Escaped::Char(h) => h,
                        _ => return self.syntax(here, "invalid class range"),
                    },
                    Some(h) => {
                        self.pos += 1;
                        h
                    }
                    None => return self.syntax(open, "unterminated character class"),
                };
                if hi < c {
                    return self.syntax(here, "class range out of order");
                }
                items.push(ClassItem::Range(c, hi));
            } else {
                items.push(ClassItem::Range(c, c));
            }
        }
        Ok(Node::Class(ClassSet { negated, items }))
    }
}

enum Escaped {
    Char(char),
    Class(ClassItem),
    Boundary(bool),
}

#[derive(Debug, Clone)]
enum Inst {
    Char(char),
    Any,
    Class(ClassSet),
    Split(usize, usize),
    Jmp(usize),
    Start,
    End,
    WordBoundary(bool),
    LookBehind {
        negate: bool,
        alternatives: Vec<Vec<char>>,
    },
    Match,
}

const MAX_PROGRAM: usize = 20_000;

struct Compiler {
    prog: Vec<Inst>,
    fold: bool,
}

impl Compiler {
    fn emit(&mut self, inst: Inst) -> Result<usize, PatternError> {
        if self.prog.len() >= MAX_PROGRAM {
            return Err(PatternError::TooLarge);
        }
        self.prog.push(inst);
        Ok(self.prog.len() - 1)
    }

    fn alternation(&mut self, alts: &[Vec<Node>]) -> Result<(), PatternError> {
        if alts.len() == 1 {
            return self.sequence(&alts[0]);
        }
        let mut jumps = Vec::new();
        for (i, alt) in alts.iter().enumerate() {
            if i + 1 < alts.len() {
                let split = self.emit(Inst::Split(0, 0))?;
                self.sequence(alt)?;
                jumps.push(self.emit(Inst::Jmp(0))?);
                let next = self.prog.len();
                self.prog[split] = Inst::Split(split + 1, next);
            } else {
                self.sequence(alt)?;
            }
        }
        let end = self.prog.len();
        for j in jumps {
            self.prog[j] = Inst::Jmp(end);
        }
        Ok(())
    }

    fn sequence(&mut self, seq: &[Node]) -> Result<(), PatternError> {
        seq.iter().try_for_each(|n| self.node(n))
    }

    fn node(&mut self, node: &Node) -> Result<(), PatternError> {
        match node {
            Node::Char(c) => {
                let c = if self.fold { fold_char(*c) } else { *c };
                self.emit(Inst::Char(c))?;
            }
            Node::Any => {
                self.emit(Inst::Any)?;
            }
            Node::Class(set) => {
                self.emit(Inst::Class(set.clone()))?;
            }
            Node::Group(alts) => self.alternation(alts)?,
            Node::Start => {
                self.emit(Inst::Start)?;
            }
            Node::End => {
                self.emit(Inst::End)?;
            }
            Node::WordBoundary(b) => {
                self.emit(Inst::WordBoundary(*b))?;
            }
            Node::LookBehind {
                negate,
                alternatives,
            } => {
                let alternatives = alternatives
                    .iter()
                    .map(|a| {
                        if self.fold {
                            a.iter().copied().map(fold_char).collect()
                        } else {
                            a.clone()
                        }
                    })
                    .collect();
                self.emit(Inst::LookBehind {
                    negate: *negate,
                    alternatives,
                })?;
            }
            Node::Repeat { node, min, max } => {
                for _ in 0..*min {
                    self.node(node)?;
                }
                match max {
                    None => {
                        let split = self.emit(Inst::Split(0, 0))?;
                        self.node(node)?;
                        self.emit(Inst::Jmp(split))?;
                        let after = self.prog.len();
                        self.prog[split] = Inst::Split(split + 1, after);
                    }
                    Some(max) => {
                        let mut splits = Vec::new();
                        for _ in *min..*max {
                            splits.push(self.emit(Inst::Split(0, 0))?);
                            self.node(node)?;
                        }
                        let after = self.prog.len();
                        for s in splits {
                            self.prog[s] = Inst::Split(s + 1, after);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

/// A compiled pattern.
#[derive(Clone)]
pub struct Regex {
    source: String,
    prog: Vec<Inst>,
    fold: bool,
}

impl fmt::Debug for Regex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Regex").field(&self.source).finish()
    }
}

/// A match in character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Regex {
    pub fn new(source: &str) -> Result<Regex, PatternError> {
        let (alts, fold) = Parser::new(source).parse()?;
        if alts.iter().all(Vec::is_empty) {
            return Err(PatternError::Empty);
        }
        let mut compiler = Compiler {
            prog: Vec::new(),
            fold,
        };
        compiler.alternation(&alts)?;
        compiler.emit(Inst::Match)?;
        Ok(Regex {
            source: source.to_string(),
            prog: compiler.prog,
            fold,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    pub fn is_match(&self, text: &str) -> bool {
        let chars: Vec<char> = text.chars().collect();
        let mut visited = Visited::new(self.prog.len(), chars.len());
        (0..=chars.len()).any(|s| self.run(&chars, s, &mut visited).is_some())
    }

    /// Non-overlapping matches, scanning left to right.
    pub fn find_iter(&self, text: &str) -> Vec<Span> {
        let chars: Vec<char> = text.chars().collect();
        self.find_iter_chars(&chars)
    }

    pub(crate) fn find_iter_chars(&self, chars: &[char]) -> Vec<Span> {
        let mut out = Vec::new();
        let mut visited = Visited::new(self.prog.len(), chars.len());
        let mut start = 0;
        while start <= chars.len() {
            match self.run(chars, start, &mut visited) {
                Some(end) if end > start => {
                    out.push(Span { start, end });
                    start = end;
                    // positions before the new start will never be revisited,
                    // but states reached through them might; start clean
                    visited.clear();
                }
                _ => start += 1,
            }
        }
        out
    }

    fn char_eq(&self, pattern: char, text: char) -> bool {
        if self.fold {
            fold_char(text) == pattern
        } else {
            text == pattern
        }
    }

    fn lookbehind_hit(&self, chars: &[char], pos: usize, alt: &[char]) -> bool {
        alt.len() <= pos
            && chars[pos - alt.len()..pos]
                .iter()
                .zip(alt)
                .all(|(t, p)| self.char_eq(*p, *t))
    }

    /// Leftmost-first search anchored at `start`; returns the end offset.
    fn run(&self, chars: &[char], start: usize, visited: &mut Visited) -> Option<usize> {
        let mut stack = vec![(0usize, start)];
        while let Some((mut pc, mut pos)) = stack.pop() {
            loop {
                if !visited.insert(pc, pos) {
                    break;
                }
                match &self.prog[pc] {
                    Inst::Match => return Some(pos),
                    Inst::Char(c) => {
                        if pos < chars.len() && self.char_eq(*c, chars[pos]) {
                            pc += 1;
                            pos += 1;
                        } else {
                            break;
                        }
                    }
                    Inst::Any => {
                        if pos < chars.len() && chars[pos] != '\n' {
                            pc += 1;
                            pos += 1;
                        } else {
                            break;
                        }
                    }
                    Inst::Class(set) => {
                        if pos < chars.len() && set.matches(chars[pos], self.fold) {
                            pc += 1;
                            pos += 1;
                        } else {
                            break;
                        }
                    }
                    Inst::Split(a, b) => {
                        stack.push((*b, pos));
                        pc = *a;
                    }
                    Inst::Jmp(t) => pc = *t,
                    Inst::Start => {
                        if pos == 0 {
                            pc += 1
                        } else {
                            break;
                        }
                    }
                    Inst::End => {
                        if pos == chars.len() {
                            pc += 1
                        } else {
                            break;
                        }
                    }
                    Inst::WordBoundary(want) => {
                        let before = pos > 0 && is_word(chars[pos - 1]);
                        let after = pos < chars.len() && is_word(chars[pos]);
                        if (before != after) == *want {
                            pc += 1
                        } else {
                            break;
                        }
                    }
                    Inst::LookBehind {
                        negate,
                        alternatives,
                    } => {
                        let hit = alternatives
                            .iter()
                            .any(|alt| self.lookbehind_hit(chars, pos, alt));
                        if hit != *negate {
                            pc += 1
                        } else {
                            break;
                        }
                    }
                }
            }
        }
        None
    }
}

struct Visited {
    bits: Vec<u64>,
    width: usize,
}

impl Visited {
    fn new(prog_len: usize, text_len: usize) -> Self {
        let width = text_len + 1;
        let n = prog_len * width;
        Visited {
            bits: vec![0; n.div_ceil(64)],
            width,
        }
    }

    fn insert(&mut self, pc: usize, pos: usize) -> bool {
        let k = pc * self.width + pos;
        let (w, b) = (k / 64, k % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }

    fn clear(&mut self) {
        self.bits.iter_mut().for_each(|w| *w = 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REPLACEABILITY: &str = "(?i)(?<!should |could |would |th)(is |are |has |have )(a |an |)(far |much |)(more |)(improv|upgrade|faster|quicker)";

    fn spans(p: &str, t: &str) -> Vec<(usize, usize)> {
        Regex::new(p)
            .unwrap()
            .find_iter(t)
            .into_iter()
            .map(|s| (s.start, s.end))
            .collect()
    }

    #[test]
    fn compiles_reference_pattern() {
        Regex::new(REPLACEABILITY).unwrap();
    }

    #[test]
    fn optional_suffix_group() {
        assert!(Regex::new("crash(es|ed|ing)?").unwrap().is_match("it crashed again"));
        assert_eq!(spans("crash(es|ed|ing)?", "crashed"), vec![(0, 7)]);
        assert_eq!(spans("crash(es|ed|ing)?", "crash"), vec![(0, 5)]);
    }

    #[test]
    fn case_folding() {
        assert_eq!(spans("(?i)lag", "LAG and Lag"), vec![(0, 3), (8, 11)]);
        assert!(spans("lag", "LAG").is_empty());
        assert_eq!(spans("(?i)[a-c]x", "BX"), vec![(0, 2)]);
    }

    #[test]
    fn classes_and_escapes() {
        assert_eq!(spans(r"v\d+\.\d", "v12.3"), vec![(0, 5)]);
        assert_eq!(spans(r"\bapp\b", "apple app"), vec![(6, 9)]);
        assert_eq!(spans("[^a-z ]+", "ab 12 cd"), vec![(3, 5)]);
        assert_eq!(spans("lo{2,3}g", "log loog looog loooog"), vec![(4, 8), (9, 14)]);
        assert_eq!(spans("^a|b$", "ab"), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn positive_lookbehind() {
        assert_eq!(spans("(?<=not |never )work", "does not work"), vec![(9, 13)]);
        assert!(spans("(?<=not |never )work", "does work").is_empty());
    }

    #[test]
    fn syntax_errors_report_offsets() {
        assert_eq!(
            Regex::new("crash(es|ed").err(),
            Some(PatternError::Syntax {
                position: 5,
                message: "unbalanced `(`".into()
            })
        );
        match Regex::new("abc)d") {
            Err(PatternError::Syntax { position, .. }) => assert_eq!(position, 3),
            other => panic!("{other:?}"),
        }
        match Regex::new("ab[cd") {
            Err(PatternError::Syntax { position, .. }) => assert_eq!(position, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Regex::new("*a"), Err(PatternError::Syntax { position: 0, .. })));
        assert_eq!(Regex::new("").err(), Some(PatternError::Empty));
    }

    #[test]
    fn rejects_constructs_outside_the_dialect() {
        let construct = |p: &str| match Regex::new(p) {
            Err(PatternError::Unsupported { construct, .. }) => construct,
            other => panic!("{p}: {other:?}"),
        };
        assert_eq!(construct("a(?=b)"), "lookahead");
        assert_eq!(construct("a(?!b)"), "lookahead");
        assert_eq!(construct(r"(a)\1"), "backreference");
        assert_eq!(construct("(?P<x>a)"), "named group");
        assert_eq!(construct("a+?"), "lazy quantifier");
        assert_eq!(construct("(?<![ab])c"), "non-literal lookbehind");
        assert_eq!(construct(r"(?<!\w)c"), "non-literal lookbehind");
        assert_eq!(construct("a(?s)b"), "inline flag group");
    }

    #[test]
    fn nested_empty_loops_terminate() {
        assert_eq!(spans("(a*)*b", "aaab"), vec![(0, 4)]);
        assert_eq!(spans("(|a)+b", "ab"), vec![(0, 2)]);
    }

    #[test]
    fn pathological_pattern_is_fast() {
        let text = "a".repeat(2_000);
        let re = Regex::new("(a|aa)*(a|aa)*c").unwrap();
        assert!(re.find_iter(&text).is_empty());
    }
}
