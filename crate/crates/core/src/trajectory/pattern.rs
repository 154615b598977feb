//! Trajectory patterns: grammar, parser, printer and matcher.
//!
//! ```text
//! P    := '[' item (',' item)* ']' '<' INT ',' (INT | '*') '>'
//! item := LABEL | P
//! ```
//!
//! Runs of adjacent labels are grouped pairwise as `obs,act`. A bracket that
//! only holds labels is a leaf; otherwise each label run becomes a leaf child
//! with cardinality `<1,1>`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{is_ident_char, History, Label, Step, WILDCARD};

/// A label position inside a pattern: an exact label or `#any`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelPat {
    Any,
    Exact(Label),
}

impl LabelPat {
    #[inline]
    pub fn accepts(&self, label: &Label) -> bool {
        match self {
            LabelPat::Any => true,
            LabelPat::Exact(l) => l == label,
        }
    }

    pub fn parse(text: &str) -> Result<Self, super::LabelError> {
        if text == WILDCARD {
            Ok(LabelPat::Any)
        } else {
            Label::new(text).map(LabelPat::Exact)
        }
    }
}

impl fmt::Display for LabelPat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelPat::Any => f.write_str(WILDCARD),
            LabelPat::Exact(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for LabelPat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelPat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        LabelPat::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairPat {
    pub obs: LabelPat,
    pub act: LabelPat,
}

impl PairPat {
    #[inline]
    fn accepts(&self, step: &Step) -> bool {
        self.obs.accepts(&step.obs) && self.act.accepts(&step.act)
    }
}

/// Repetition bounds; `max == None` is the unbounded `*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cardinality {
    pub min: u32,
    pub max: Option<u32>,
}

impl Cardinality {
    pub const ONCE: Cardinality = Cardinality { min: 1, max: Some(1) };

    pub fn new(min: u32, max: Option<u32>) -> Self {
        Cardinality { min, max }
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max {
            Some(m) => write!(f, "<{},{}>", self.min, m),
            None => write!(f, "<{},*>", self.min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternKind {
    Leaf(Vec<PairPat>),
    Node(Vec<Pattern>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub kind: PatternKind,
    pub card: Cardinality,
}

impl Pattern {
    pub fn leaf(pairs: Vec<PairPat>, card: Cardinality) -> Self {
        Pattern { kind: PatternKind::Leaf(pairs), card }
    }

    pub fn node(children: Vec<Pattern>, card: Cardinality) -> Self {
        Pattern { kind: PatternKind::Node(children), card }
    }

    /// The shortest history realizing the pattern: every level repeated
    /// `min` times. `None` when a wildcard would have to be realized.
    pub fn realize(&self) -> Option<History> {
        let mut out = Vec::new();
        self.realize_into(&mut out)?;
        Some(History::from_steps(out))
    }

    fn realize_into(&self, out: &mut Vec<Step>) -> Option<()> {
        for _ in 0..self.card.min {
            match &self.kind {
                PatternKind::Leaf(pairs) => {
                    for p in pairs {
                        match (&p.obs, &p.act) {
                            (LabelPat::Exact(o), LabelPat::Exact(a)) => {
                                out.push(Step::new(o.clone(), a.clone()))
                            }
                            _ => return None,
                        }
                    }
                }
                PatternKind::Node(children) => {
                    for c in children {
                        c.realize_into(out)?;
                    }
                }
            }
        }
        Some(())
    }

    /// Set of positions where a realization of this pattern can end, given
    /// the set of positions where it may start.
    fn ends(&self, steps: &[Step], starts: &PosSet) -> PosSet {
        let n = steps.len();
        let card = self.card;
        let mut acc = if card.min == 0 {
            starts.clone()
        } else {
            PosSet::empty(n)
        };
        // Any endpoint reachable with more than max(min, n) repetitions is also
        // reachable with fewer: beyond n repetitions some must be zero-length.
        let cutoff = card.min.max(n as u32 + 1);
        let limit = card.max.unwrap_or(u32::MAX).min(cutoff);
        let mut cur = starts.clone();
        let mut k = 0u32;
        while k < limit {
            let next = self.body_ends(steps, &cur);
            k += 1;
            if next.is_empty() {
                break;
            }
            if k >= card.min {
                acc.union_with(&next);
            }
            if next == cur {
                // fixed point: every further repetition count yields `next`
                if k < card.min && card.max.is_none_or(|m| card.min <= m) {
                    acc.union_with(&next);
                }
                break;
            }
            cur = next;
        }
        acc
    }

    fn body_ends(&self, steps: &[Step], starts: &PosSet) -> PosSet {
        match &self.kind {
            PatternKind::Leaf(pairs) => {
                let n = steps.len();
                let len = pairs.len();
                let mut out = PosSet::empty(n);
                for s in starts.iter() {
                    if s + len <= n && pairs.iter().zip(&steps[s..s + len]).all(|(p, st)| p.accepts(st)) {
                        out.insert(s + len);
                    }
                }
                out
            }
            PatternKind::Node(children) => {
                let mut cur = starts.clone();
                for c in children {
                    if cur.is_empty() {
                        break;
                    }
                    cur = c.ends(steps, &cur);
                }
                cur
            }
        }
    }

    /// True iff some contiguous sub-sequence of `steps` realizes the pattern.
    pub fn matches_steps(&self, steps: &[Step]) -> bool {
        let starts = PosSet::full(steps.len());
        !self.ends(steps, &starts).is_empty()
    }

    fn validate(&self) -> Result<(), PatternErrorKind> {
        if let Some(max) = self.card.max {
            if self.card.min > max {
                return Err(PatternErrorKind::CardinalityOrder { min: self.card.min, max });
            }
        }
        match &self.kind {
            PatternKind::Leaf(pairs) if pairs.is_empty() => Err(PatternErrorKind::EmptySequence),
            PatternKind::Node(children) if children.is_empty() => Err(PatternErrorKind::EmptySequence),
            PatternKind::Node(children) => children.iter().try_for_each(Pattern::validate),
            PatternKind::Leaf(_) => Ok(()),
        }
    }
}

impl fmt::Display for Pattern {
    /// Canonical form: child leaves are always printed in bracket form so the
    /// output parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        match &self.kind {
            PatternKind::Leaf(pairs) => {
                for (i, p) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{},{}", p.obs, p.act)?;
                }
            }
            PatternKind::Node(children) => {
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
            }
        }
        f.write_str("]")?;
        write!(f, "{}", self.card)
    }
}

impl std::str::FromStr for Pattern {
    type Err = PatternError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pattern(s)
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse_pattern(&text).map_err(serde::de::Error::custom)
    }
}

/// `m(p, h)`: does the history contain a contiguous sub-sequence realizing `p`?
pub fn matches(pattern: &Pattern, history: &History) -> bool {
    pattern.matches_steps(history.steps())
}

/// Membership of a history in the set described by a goal pattern.
pub fn belongs(pattern: &Pattern, history: &History) -> bool {
    matches(pattern, history)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternErrorKind {
    #[error("empty pattern text")]
    EmptyInput,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("expected {0}")]
    Expected(&'static str),
    #[error("odd number of labels in a sequence; labels pair up as obs,act")]
    UnpairedLabel,
    #[error("cardinality min {min} exceeds max {max}")]
    CardinalityOrder { min: u32, max: u32 },
    #[error("empty sequence")]
    EmptySequence,
    #[error("integer out of range")]
    IntOverflow,
    #[error("trailing input after pattern")]
    TrailingInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pattern syntax error at byte {offset}: {kind}")]
pub struct PatternError {
    pub offset: usize,
    pub kind: PatternErrorKind,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

enum Item {
    Label(LabelPat),
    Sub(Pattern),
}

impl<'a> Parser<'a> {
    fn err<T>(&self, kind: PatternErrorKind) -> Result<T, PatternError> {
        Err(PatternError { offset: self.pos, kind })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, want: char, what: &'static str) -> Result<(), PatternError> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => self.err(PatternErrorKind::Expected(what)),
            None => self.err(PatternErrorKind::UnexpectedEnd),
        }
    }

    fn label(&mut self) -> Result<LabelPat, PatternError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if rest.starts_with(WILDCARD) {
            let after = rest[WILDCARD.len()..].chars().next();
            if after.is_none_or(|c| !is_ident_char(c)) {
                self.pos += WILDCARD.len();
                return Ok(LabelPat::Any);
            }
        }
        let len: usize = rest.chars().take_while(|c| is_ident_char(*c)).map(char::len_utf8).sum();
        if len == 0 {
            return match rest.chars().next() {
                Some(c) => self.err(PatternErrorKind::UnexpectedChar(c)),
                None => self.err(PatternErrorKind::UnexpectedEnd),
            };
        }
        let text = &rest[..len];
        self.pos += len;
        Ok(LabelPat::Exact(Label::new(text).expect("identifier characters checked")))
    }

    fn int(&mut self) -> Result<u32, PatternError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest.bytes().take_while(u8::is_ascii_digit).count();
        if len == 0 {
            return match rest.chars().next() {
                Some(_) => self.err(PatternErrorKind::Expected("integer")),
                None => self.err(PatternErrorKind::UnexpectedEnd),
            };
        }
        let value = rest[..len].parse::<u32>();
        match value {
            Ok(v) => {
                self.pos += len;
                Ok(v)
            }
            Err(_) => self.err(PatternErrorKind::IntOverflow),
        }
    }

    fn pattern(&mut self) -> Result<Pattern, PatternError> {
        self.expect('[', "'['")?;
        let mut items = Vec::new();
        loop {
            let item = match self.peek() {
                Some('[') => Item::Sub(self.pattern()?),
                Some(_) => Item::Label(self.label()?),
                None => return self.err(PatternErrorKind::UnexpectedEnd),
            };
            items.push(item);
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => return self.err(PatternErrorKind::Expected("',' or ']'")),
                None => return self.err(PatternErrorKind::UnexpectedEnd),
            }
        }
        let close_at = self.pos;
        self.expect('<', "'<'")?;
        let card_at = self.pos;
        let min = self.int()?;
        self.expect(',', "','")?;
        let max = if self.peek() == Some('*') {
            self.pos += 1;
            None
        } else {
            Some(self.int()?)
        };
        self.expect('>', "'>'")?;
        if let Some(max) = max {
            if min > max {
                return Err(PatternError {
                    offset: card_at,
                    kind: PatternErrorKind::CardinalityOrder { min, max },
                });
            }
        }
        let card = Cardinality { min, max };
        Self::assemble(items, card).map_err(|kind| PatternError { offset: close_at, kind })
    }

    fn assemble(items: Vec<Item>, card: Cardinality) -> Result<Pattern, PatternErrorKind> {
        let mut children = Vec::new();
        let mut run: Vec<LabelPat> = Vec::new();
        let all_labels = items.iter().all(|i| matches!(i, Item::Label(_)));
        let flush = |run: &mut Vec<LabelPat>| -> Result<Vec<PairPat>, PatternErrorKind> {
            if !run.len().is_multiple_of(2) {
                return Err(PatternErrorKind::UnpairedLabel);
            }
            let pairs = run
                .chunks(2)
                .map(|c| PairPat { obs: c[0].clone(), act: c[1].clone() })
                .collect();
            run.clear();
            Ok(pairs)
        };
        for item in items {
            match item {
                Item::Label(l) => run.push(l),
                Item::Sub(p) => {
                    if !run.is_empty() {
                        children.push(Pattern::leaf(flush(&mut run)?, Cardinality::ONCE));
                    }
                    children.push(p);
                }
            }
        }
        if all_labels {
            return Ok(Pattern::leaf(flush(&mut run)?, card));
        }
        if !run.is_empty() {
            children.push(Pattern::leaf(flush(&mut run)?, Cardinality::ONCE));
        }
        Ok(Pattern::node(children, card))
    }
}

/// Parses a pattern string. Whitespace is insignificant.
pub fn parse_pattern(text: &str) -> Result<Pattern, PatternError> {
    if text.trim().is_empty() {
        return Err(PatternError { offset: 0, kind: PatternErrorKind::EmptyInput });
    }
    let mut p = Parser { src: text, pos: 0 };
    let pattern = p.pattern()?;
    if p.peek().is_some() {
        return p.err(PatternErrorKind::TrailingInput);
    }
    pattern
        .validate()
        .map_err(|kind| PatternError { offset: 0, kind })?;
    Ok(pattern)
}

/// Fixed-size set of positions `0..=n` used by the matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PosSet {
    words: Vec<u64>,
}

impl PosSet {
    fn empty(n: usize) -> Self {
        PosSet { words: vec![0; n / 64 + 1] }
    }

    fn full(n: usize) -> Self {
        let mut s = PosSet::empty(n);
        for i in 0..=n {
            s.insert(i);
        }
        s
    }

    #[inline]
    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    fn union_with(&mut self, other: &PosSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}
