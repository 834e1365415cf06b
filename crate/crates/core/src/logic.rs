//! Three-valued (Kleene) logic for guards over possibly-missing values.
//!
//! A comparison with a missing operand is `Unknown`; a guard selects its
//! branch only when it evaluates to `True`.

use std::ops::{BitAnd, BitOr, Not};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tri {
    True,
    False,
    Unknown,
}

impl Tri {
    #[inline]
    pub fn is_true(self) -> bool {
        self == Tri::True
    }

    #[inline]
    pub fn from_bool(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }

    /// `value == target`, unknown when `value` is missing.
    #[inline]
    pub fn eq<T: PartialEq>(value: Option<T>, target: T) -> Tri {
        value.map_or(Tri::Unknown, |v| Tri::from_bool(v == target))
    }

    #[inline]
    pub fn ne<T: PartialEq>(value: Option<T>, target: T) -> Tri {
        !Tri::eq(value, target)
    }

    /// Apply a predicate to a possibly-missing value.
    #[inline]
    pub fn test<T>(value: Option<T>, pred: impl FnOnce(T) -> bool) -> Tri {
        value.map_or(Tri::Unknown, |v| Tri::from_bool(pred(v)))
    }
}

impl From<bool> for Tri {
    fn from(b: bool) -> Tri {
        Tri::from_bool(b)
    }
}

impl Not for Tri {
    type Output = Tri;
    fn not(self) -> Tri {
        match self {
            Tri::True => Tri::False,
            Tri::False => Tri::True,
            Tri::Unknown => Tri::Unknown,
        }
    }
}

impl BitAnd for Tri {
    type Output = Tri;
    fn bitand(self, rhs: Tri) -> Tri {
        match (self, rhs) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Unknown,
        }
    }
}

impl BitOr for Tri {
    type Output = Tri;
    fn bitor(self, rhs: Tri) -> Tri {
        match (self, rhs) {
            (Tri::True, _) | (_, Tri::True) => Tri::True,
            (Tri::False, Tri::False) => Tri::False,
            _ => Tri::Unknown,
        }
    }
}
