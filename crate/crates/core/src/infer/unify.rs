//! Kind-directed unification. Pure: returns the new bindings as a local
//! substitution that the caller merges into Σ.

use crate::diag::ErrorKind;
use crate::types::*;

#[derive(Clone, Debug, PartialEq)]
pub struct UnifyError {
    pub kind: ErrorKind,
    pub message: String,
    pub types: Vec<String>,
}

struct Unifier<'a> {
    sigma: &'a SubstEnv,
    local: SubstEnv,
}

/// Computes the bindings that make `t1` and `t2` equal under `sigma`.
pub fn unify(t1: &SemType, t2: &SemType, sigma: &SubstEnv) -> Result<SubstEnv, UnifyError> {
    let mut u = Unifier { sigma, local: SubstEnv::new() };
    match u.sem(t1, t2) {
        Ok(()) => Ok(u.local),
        Err(Mismatch { kind, left, right, what }) => {
            let mut merged = sigma.clone();
            let _ = merged.extend(u.local);
            let mut p = TypePrinter::new();
            let l = p.sem(&zonk(&left, &merged));
            let r = p.sem(&zonk(&right, &merged));
            let message = match kind {
                ErrorKind::Kind => format!("kind mismatch: expected {} ({}), found {} ({})", l, kind_word(&left, &merged), r, kind_word(&right, &merged)),
                ErrorKind::Occurs => format!("occurs check failed: {} occurs in {}", l, r),
                _ => match what {
                    Some(w) => format!("type mismatch ({}): expected {}, found {}", w, l, r),
                    None => format!("type mismatch: expected {}, found {}", l, r),
                },
            };
            Err(UnifyError { kind, message, types: vec![l, r] })
        }
    }
}

fn kind_word(t: &SemType, sigma: &SubstEnv) -> &'static str {
    match kind_of(&zonk(t, sigma)) {
        Kind::Software => "software",
        Kind::Hardware => "hardware",
        Kind::Module => "module",
        Kind::Unknown => "unknown kind",
    }
}

struct Mismatch {
    kind: ErrorKind,
    left: SemType,
    right: SemType,
    what: Option<String>,
}

type UResult = Result<(), Mismatch>;

fn type_err(l: SemType, r: SemType) -> Mismatch {
    Mismatch { kind: ErrorKind::Type, left: l, right: r, what: None }
}

impl Unifier<'_> {
    fn lookup(&self, id: MetaId) -> Option<&SemType> {
        self.local.get(id).or_else(|| self.sigma.get(id))
    }

    fn size(&self, s: Size) -> Size {
        let mut cur = s;
        while let Size::Var(v, off) = cur {
            match self.local.get_size(v).or_else(|| self.sigma.get_size(v)) {
                Some(next) => cur = next.plus(off),
                None => break,
            }
        }
        cur
    }

    fn shallow(&self, t: &SemType) -> SemType {
        let mut cur = t.clone();
        loop {
            cur = match cur {
                SemType::Meta(id) => match self.lookup(id) {
                    Some(t) => t.clone(),
                    None => return SemType::Meta(id),
                },
                SemType::Sw(s) => return SemType::Sw(self.shallow_s(&s)),
                SemType::Hw(h) => return SemType::Hw(self.shallow_h(&h)),
                other => return other,
            }
        }
    }

    fn shallow_s(&self, t: &SType) -> SType {
        let mut cur = t.clone();
        while let SType::Meta(id) = cur {
            cur = match self.lookup(id) {
                Some(SemType::Sw(s)) => s.clone(),
                Some(SemType::Top) => SType::Top,
                Some(_) => SType::Bottom,
                None => return SType::Meta(id),
            };
        }
        cur
    }

    /// Shallow resolution that also merges nested delays.
    fn shallow_h(&self, t: &HType) -> HType {
        let mut cur = t.clone();
        loop {
            cur = match cur {
                HType::Meta(id) => match self.lookup(id) {
                    Some(SemType::Hw(h)) => h.clone(),
                    Some(SemType::Top) => HType::Top,
                    Some(_) => HType::Bottom,
                    None => return HType::Meta(id),
                },
                HType::Temporal(inner, n) => {
                    let n = self.size(n);
                    let inner = self.shallow_h(&inner);
                    return HType::temporal(inner, n);
                }
                other => return other,
            }
        }
    }

    fn bind(&mut self, id: MetaId, t: SemType) {
        // Only unbound metas reach here, so a duplicate is impossible.
        let _ = self.local.insert(id, t);
    }

    fn occurs_sem(&self, x: MetaId, t: &SemType) -> bool {
        match self.shallow(t) {
            SemType::Meta(id) => id == x,
            SemType::Sw(s) => self.occurs_s(x, &s),
            SemType::Hw(h) => self.occurs_h(x, &h),
            SemType::Mod(m) => match m {
                MType::Module(a, b) => self.occurs_h(x, &a) || self.occurs_h(x, &b),
                MType::Parameterized(s, a, b) => self.occurs_s(x, &s) || self.occurs_h(x, &a) || self.occurs_h(x, &b),
                _ => false,
            },
            _ => false,
        }
    }

    fn occurs_s(&self, x: MetaId, t: &SType) -> bool {
        match self.shallow_s(t) {
            SType::Meta(id) => id == x,
            SType::Arrow(a, b) => self.occurs_s(x, &a) || self.occurs_s(x, &b),
            SType::List(a) | SType::Ref(a) => self.occurs_s(x, &a),
            SType::Sw(h) => self.occurs_h(x, &h),
            SType::Record(fs) => fs.iter().any(|(_, t)| self.occurs_s(x, t)),
            SType::Data(d) => d.args.iter().any(|a| self.occurs_s(x, a)),
            SType::Mu(vs, body) => !vs.contains(&x) && self.occurs_s(x, &body),
            _ => false,
        }
    }

    fn occurs_h(&self, x: MetaId, t: &HType) -> bool {
        match self.shallow_h(t) {
            HType::Meta(id) => id == x,
            HType::Array(e, _) | HType::Temporal(e, _) => self.occurs_h(x, &e),
            HType::Record(fs) => fs.iter().any(|(_, t)| self.occurs_h(x, t)),
            HType::Data(d) => d.args.iter().any(|a| self.occurs_h(x, a)),
            _ => false,
        }
    }

    fn occurs_err(x: SemType, t: SemType) -> Mismatch {
        Mismatch { kind: ErrorKind::Occurs, left: x, right: t, what: None }
    }

    fn sem(&mut self, t1: &SemType, t2: &SemType) -> UResult {
        let a = self.shallow(t1);
        let b = self.shallow(t2);
        match (&a, &b) {
            (SemType::Meta(x), SemType::Meta(y)) if x == y => Ok(()),
            (SemType::Meta(x), _) => {
                if self.occurs_sem(*x, &b) {
                    return Err(Self::occurs_err(a.clone(), b.clone()));
                }
                self.bind(*x, b.clone());
                Ok(())
            }
            (_, SemType::Meta(y)) => {
                if self.occurs_sem(*y, &a) {
                    return Err(Self::occurs_err(b.clone(), a.clone()));
                }
                self.bind(*y, a.clone());
                Ok(())
            }
            (SemType::Top | SemType::Bottom, _) | (_, SemType::Top | SemType::Bottom) => Ok(()),
            (SemType::Hw(x), SemType::Hw(y)) => self.h(x, y),
            (SemType::Sw(x), SemType::Sw(y)) => self.s(x, y),
            (SemType::Mod(x), SemType::Mod(y)) => self.m(x, y),
            _ => Err(Mismatch { kind: ErrorKind::Kind, left: a, right: b, what: None }),
        }
    }

    fn s(&mut self, t1: &SType, t2: &SType) -> UResult {
        let a = self.shallow_s(t1);
        let b = self.shallow_s(t2);
        let err = || type_err(SemType::Sw(a.clone()), SemType::Sw(b.clone()));
        match (&a, &b) {
            (SType::Meta(x), SType::Meta(y)) if x == y => Ok(()),
            (SType::Meta(x), _) => {
                if self.occurs_s(*x, &b) {
                    return Err(Self::occurs_err(SemType::Sw(a.clone()), SemType::Sw(b.clone())));
                }
                self.bind(*x, SemType::Sw(b.clone()));
                Ok(())
            }
            (_, SType::Meta(y)) => {
                if self.occurs_s(*y, &a) {
                    return Err(Self::occurs_err(SemType::Sw(b.clone()), SemType::Sw(a.clone())));
                }
                self.bind(*y, SemType::Sw(a.clone()));
                Ok(())
            }
            (SType::Top | SType::Bottom, _) | (_, SType::Top | SType::Bottom) => Ok(()),
            (SType::Int, SType::Int) | (SType::Real, SType::Real) | (SType::String, SType::String) => Ok(()),
            (SType::Arrow(a1, b1), SType::Arrow(a2, b2)) => {
                self.s(a1, a2)?;
                self.s(b1, b2)
            }
            (SType::List(x), SType::List(y)) | (SType::Ref(x), SType::Ref(y)) => self.s(x, y),
            (SType::Sw(x), SType::Sw(y)) => self.h(x, y),
            (SType::Record(f1), SType::Record(f2)) => {
                if !same_labels(f1, f2) {
                    return Err(err());
                }
                for (l, t) in f1 {
                    let u = &f2.iter().find(|(l2, _)| l2 == l).unwrap().1;
                    self.s(t, u)?;
                }
                Ok(())
            }
            (SType::Data(_) | SType::Mu(..), SType::Data(_) | SType::Mu(..)) => {
                let (x, y) = (data_head(&a), data_head(&b));
                match (x, y) {
                    (Some(x), Some(y)) if x.tag == y.tag && x.args.len() == y.args.len() => {
                        for (p, q) in x.args.iter().zip(&y.args) {
                            self.s(p, q)?;
                        }
                        Ok(())
                    }
                    _ => Err(err()),
                }
            }
            (SType::Poly(_), _) | (_, SType::Poly(_)) if a == b => Ok(()),
            _ => Err(err()),
        }
    }

    fn unify_size(&mut self, s1: Size, s2: Size) -> Result<(), ()> {
        let a = self.size(s1);
        let b = self.size(s2);
        match (a, b) {
            (Size::Known(x), Size::Known(y)) => {
                if x == y {
                    Ok(())
                } else {
                    Err(())
                }
            }
            (Size::Var(v, o), Size::Known(k)) | (Size::Known(k), Size::Var(v, o)) => {
                if k >= o {
                    let _ = self.local.insert_size(v, Size::Known(k - o));
                    Ok(())
                } else {
                    Err(())
                }
            }
            (Size::Var(v, o1), Size::Var(w, o2)) => {
                if v == w {
                    return if o1 == o2 { Ok(()) } else { Err(()) };
                }
                if o1 <= o2 {
                    let _ = self.local.insert_size(v, Size::Var(w, o2 - o1));
                } else {
                    let _ = self.local.insert_size(w, Size::Var(v, o1 - o2));
                }
                Ok(())
            }
        }
    }

    fn h(&mut self, t1: &HType, t2: &HType) -> UResult {
        let a = self.shallow_h(t1);
        let b = self.shallow_h(t2);
        let err = || type_err(SemType::Hw(a.clone()), SemType::Hw(b.clone()));
        match (&a, &b) {
            (HType::Meta(x), HType::Meta(y)) if x == y => Ok(()),
            (HType::Meta(x), _) => {
                if self.occurs_h(*x, &b) {
                    return Err(Self::occurs_err(SemType::Hw(a.clone()), SemType::Hw(b.clone())));
                }
                self.bind(*x, SemType::Hw(b.clone()));
                Ok(())
            }
            (_, HType::Meta(y)) => {
                if self.occurs_h(*y, &a) {
                    return Err(Self::occurs_err(SemType::Hw(b.clone()), SemType::Hw(a.clone())));
                }
                self.bind(*y, SemType::Hw(a.clone()));
                Ok(())
            }
            (HType::Top | HType::Bottom, _) | (_, HType::Top | HType::Bottom) => Ok(()),
            (HType::Bit, HType::Bit) => Ok(()),
            (HType::Array(e1, n1), HType::Array(e2, n2)) => {
                if self.unify_size(*n1, *n2).is_err() {
                    return Err(err());
                }
                self.h(e1, e2)
            }
            (HType::Temporal(e1, n1), HType::Temporal(e2, n2)) => {
                if self.unify_size(*n1, *n2).is_err() {
                    return Err(Mismatch { what: Some("delay".into()), ..err() });
                }
                self.h(e1, e2)
            }
            (HType::Temporal(e1, n1), _) => {
                if self.unify_size(*n1, Size::Known(0)).is_err() {
                    return Err(Mismatch { what: Some("delay".into()), ..err() });
                }
                self.h(e1, &b)
            }
            (_, HType::Temporal(e2, n2)) => {
                if self.unify_size(*n2, Size::Known(0)).is_err() {
                    return Err(Mismatch { what: Some("delay".into()), ..err() });
                }
                self.h(&a, e2)
            }
            (HType::Record(f1), HType::Record(f2)) => {
                if !same_labels(f1, f2) {
                    return Err(err());
                }
                for (l, t) in f1 {
                    let u = &f2.iter().find(|(l2, _)| l2 == l).unwrap().1;
                    self.h(t, u)?;
                }
                Ok(())
            }
            (HType::Data(x), HType::Data(y)) => {
                if x.tag != y.tag || x.args.len() != y.args.len() {
                    return Err(err());
                }
                for (p, q) in x.args.iter().zip(&y.args) {
                    self.h(p, q)?;
                }
                Ok(())
            }
            (HType::Poly(_), _) | (_, HType::Poly(_)) if a == b => Ok(()),
            _ => Err(err()),
        }
    }

    fn m(&mut self, t1: &MType, t2: &MType) -> UResult {
        match (t1, t2) {
            (MType::Bottom, _) | (_, MType::Bottom) => Ok(()),
            (MType::Module(a1, b1), MType::Module(a2, b2)) => {
                self.h(a1, a2)?;
                self.h(b1, b2)
            }
            (MType::Parameterized(s1, a1, b1), MType::Parameterized(s2, a2, b2)) => {
                self.s(s1, s2)?;
                self.h(a1, a2)?;
                self.h(b1, b2)
            }
            _ if t1 == t2 => Ok(()),
            _ => Err(type_err(SemType::Mod(t1.clone()), SemType::Mod(t2.clone()))),
        }
    }
}

fn same_labels<T>(a: &[(Label, T)], b: &[(Label, T)]) -> bool {
    a.len() == b.len() && a.iter().all(|(l, _)| b.iter().any(|(l2, _)| l2 == l))
}

/// The datatype instance behind a (possibly recursive) software type.
pub fn data_head(t: &SType) -> Option<&DataTy<SType>> {
    match t {
        SType::Data(d) => Some(d),
        SType::Mu(_, body) => data_head(body),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sw(t: SType) -> SemType {
        SemType::Sw(t)
    }

    #[test]
    fn meta_against_concrete() {
        let s = unify(&sw(SType::Meta(1)), &sw(SType::Int), &SubstEnv::new()).unwrap();
        assert_eq!(s.get(1), Some(&sw(SType::Int)));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn cross_kind_is_kind_error() {
        let e = unify(&SemType::Hw(HType::Meta(1)), &sw(SType::Int), &SubstEnv::new()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Kind);
    }

    #[test]
    fn structural_descent() {
        let a = sw(SType::arrow(SType::Int, SType::Meta(2)));
        let b = sw(SType::arrow(SType::Int, SType::String));
        let s = unify(&a, &b, &SubstEnv::new()).unwrap();
        assert_eq!(s.get(2), Some(&sw(SType::String)));
    }

    #[test]
    fn array_sizes_must_agree() {
        let e = unify(&SemType::Hw(HType::bits(8)), &SemType::Hw(HType::bits(16)), &SubstEnv::new()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Type);
        assert_eq!(e.types, vec!["bit[8]".to_string(), "bit[16]".to_string()]);
    }

    #[test]
    fn occurs_check() {
        let e = unify(&sw(SType::Meta(1)), &sw(SType::list(SType::Meta(1))), &SubstEnv::new()).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Occurs);
    }

    #[test]
    fn size_offsets() {
        let a = SemType::Hw(HType::Array(Box::new(HType::Bit), Size::Var(5, 1)));
        let s = unify(&a, &SemType::Hw(HType::bits(4)), &SubstEnv::new()).unwrap();
        assert_eq!(s.get_size(5), Some(Size::Known(3)));
        assert!(unify(&a, &SemType::Hw(HType::bits(0)), &SubstEnv::new()).is_err());
    }

    #[test]
    fn temporal_zero_unifies_with_plain() {
        let t = SemType::Hw(HType::Temporal(Box::new(HType::Meta(1)), Size::Var(2, 0)));
        let s = unify(&t, &SemType::Hw(HType::Bit), &SubstEnv::new()).unwrap();
        assert_eq!(s.get_size(2), Some(Size::Known(0)));
        assert_eq!(s.get(1), Some(&SemType::Hw(HType::Bit)));
    }

    #[test]
    fn records_ignore_label_order() {
        let a = sw(SType::Record(vec![("x".into(), SType::Int), ("y".into(), SType::Meta(3))]));
        let b = sw(SType::Record(vec![("y".into(), SType::String), ("x".into(), SType::Int)]));
        let s = unify(&a, &b, &SubstEnv::new()).unwrap();
        assert_eq!(s.get(3), Some(&sw(SType::String)));
    }
}
