//! Structured basis labels.
//!
//! Composite constructions (tensor products, direct sums, composite
//! products) name their basis vectors by canonical nested tuples of the
//! input labels, so that structural bijections are syntactic.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Atom(String),
    Int(i64),
    Pair(Box<Label>, Box<Label>),
    Seq(Vec<Label>),
    Tag(String, Box<Label>),
    /// injection into the i-th summand of a direct sum
    In(usize, Box<Label>),
}

impl Label {
    pub fn atom(s: impl Into<String>) -> Label {
        Label::Atom(s.into())
    }

    pub fn pair(a: Label, b: Label) -> Label {
        Label::Pair(Box::new(a), Box::new(b))
    }

    pub fn tag(t: impl Into<String>, l: Label) -> Label {
        Label::Tag(t.into(), Box::new(l))
    }

    pub fn inj(i: usize, l: Label) -> Label {
        Label::In(i, Box::new(l))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Atom(s) => write!(f, "{s}"),
            Label::Int(n) => write!(f, "{n}"),
            Label::Pair(a, b) => write!(f, "({a},{b})"),
            Label::Seq(v) => {
                write!(f, "[")?;
                for (i, l) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "]")
            }
            Label::Tag(t, l) => write!(f, "{t}:{l}"),
            Label::In(i, l) => write!(f, "i{i}<{l}>"),
        }
    }
}
