use gemini_core::diag::ErrorKind;
use gemini_core::infer::unify::unify;
use gemini_core::infer::{infer_source, substitute, TypeEnv, ValBind, DEFAULT_SUBST_LIMIT};
use gemini_core::types::{free_metas, HType, MType, MetaId, SType, SemType, Size, SubstEnv};
use proptest::prelude::*;
use std::collections::BTreeSet;

const SW_METAS: std::ops::Range<MetaId> = 0..4;
const HW_METAS: std::ops::Range<MetaId> = 10..14;
const SIZE_METAS: std::ops::Range<MetaId> = 20..23;
const ANY_METAS: std::ops::Range<MetaId> = 30..32;

fn size() -> impl Strategy<Value = Size> {
    prop_oneof![(1..4u32).prop_map(Size::Known), (SIZE_METAS, 0..2u32).prop_map(|(m, o)| Size::Var(m, o))]
}

fn htype() -> impl Strategy<Value = HType> {
    let leaf = prop_oneof![Just(HType::Bit), HW_METAS.prop_map(HType::Meta)];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), size()).prop_map(|(e, n)| HType::Array(Box::new(e), n)),
            (inner.clone(), 1..3u32).prop_map(|(e, n)| HType::temporal(e, Size::Known(n))),
            (inner.clone(), inner).prop_map(|(a, b)| HType::Record(vec![("1".into(), a), ("2".into(), b)])),
        ]
    })
}

fn stype() -> impl Strategy<Value = SType> {
    let leaf = prop_oneof![
        Just(SType::Int),
        Just(SType::Real),
        Just(SType::String),
        SW_METAS.prop_map(SType::Meta),
        htype().prop_map(|h| SType::Sw(Box::new(h))),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| SType::arrow(a, b)),
            inner.clone().prop_map(SType::list),
            inner.clone().prop_map(|a| SType::Ref(Box::new(a))),
            (inner.clone(), inner).prop_map(|(a, b)| SType::Record(vec![("1".into(), a), ("2".into(), b)])),
        ]
    })
}

fn semtype() -> impl Strategy<Value = SemType> {
    prop_oneof![
        4 => stype().prop_map(SemType::Sw),
        3 => htype().prop_map(SemType::Hw),
        1 => (htype(), htype()).prop_map(|(a, b)| SemType::Mod(MType::Module(a, b))),
        1 => ANY_METAS.prop_map(SemType::Meta),
    ]
}

/// Pairs that share metavariables often enough to unify non-trivially.
fn related_pair() -> impl Strategy<Value = (SemType, SemType)> {
    prop_oneof![
        (semtype(), semtype()),
        stype().prop_flat_map(|a| (Just(a.clone()), stype()).prop_map(|(a, b)| {
            (SemType::Sw(SType::arrow(a.clone(), SType::Meta(0))), SemType::Sw(SType::arrow(SType::Meta(1), b)))
        })),
        htype().prop_map(|h| (SemType::Hw(h.clone()), SemType::Hw(HType::Meta(10)))),
    ]
}

// Reference application of a substitution, written independently of the compiler's zonk.

fn apply_size(s: Size, sigma: &SubstEnv, fuel: u32) -> Size {
    match s {
        Size::Var(v, o) if fuel > 0 => match sigma.get_size(v) {
            Some(t) => apply_size(t, sigma, fuel - 1).plus(o),
            None => s,
        },
        _ => s,
    }
}

fn apply_h(t: &HType, sigma: &SubstEnv, fuel: u32) -> HType {
    let f = fuel.saturating_sub(1);
    match t {
        HType::Meta(m) => match sigma.get(*m) {
            Some(SemType::Hw(h)) if fuel > 0 => apply_h(h, sigma, f),
            Some(SemType::Meta(x)) if fuel > 0 => apply_h(&HType::Meta(*x), sigma, f),
            _ => t.clone(),
        },
        HType::Array(e, n) => HType::Array(Box::new(apply_h(e, sigma, f)), apply_size(*n, sigma, 64)),
        HType::Temporal(e, n) => HType::temporal(apply_h(e, sigma, f), apply_size(*n, sigma, 64)),
        HType::Record(fs) => HType::Record(fs.iter().map(|(l, x)| (l.clone(), apply_h(x, sigma, f))).collect()),
        other => other.clone(),
    }
}

fn apply_s(t: &SType, sigma: &SubstEnv, fuel: u32) -> SType {
    let f = fuel.saturating_sub(1);
    match t {
        SType::Meta(m) => match sigma.get(*m) {
            Some(SemType::Sw(s)) if fuel > 0 => apply_s(s, sigma, f),
            Some(SemType::Meta(x)) if fuel > 0 => apply_s(&SType::Meta(*x), sigma, f),
            _ => t.clone(),
        },
        SType::Arrow(a, b) => SType::arrow(apply_s(a, sigma, f), apply_s(b, sigma, f)),
        SType::List(a) => SType::list(apply_s(a, sigma, f)),
        SType::Ref(a) => SType::Ref(Box::new(apply_s(a, sigma, f))),
        SType::Sw(h) => SType::Sw(Box::new(apply_h(h, sigma, f))),
        SType::Record(fs) => SType::Record(fs.iter().map(|(l, x)| (l.clone(), apply_s(x, sigma, f))).collect()),
        other => other.clone(),
    }
}

fn apply(t: &SemType, sigma: &SubstEnv) -> SemType {
    const FUEL: u32 = 256;
    match t {
        SemType::Sw(s) => SemType::Sw(apply_s(s, sigma, FUEL)),
        SemType::Hw(h) => SemType::Hw(apply_h(h, sigma, FUEL)),
        SemType::Mod(MType::Module(a, b)) => SemType::Mod(MType::Module(apply_h(a, sigma, FUEL), apply_h(b, sigma, FUEL))),
        SemType::Meta(m) => match sigma.get(*m) {
            Some(x) => apply(x, sigma),
            None => t.clone(),
        },
        other => other.clone(),
    }
}

fn metas(t: &SemType) -> BTreeSet<MetaId> {
    free_metas(t).into_iter().map(|o| o.id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn unifier_is_sound_and_minimal((a, b) in related_pair(), (c, d) in related_pair()) {
        // A prior Σ from an unrelated unification, when one exists.
        let prior = unify(&c, &d, &SubstEnv::new()).unwrap_or_default();
        if let Ok(local) = unify(&a, &b, &prior) {
            let allowed: BTreeSet<MetaId> = metas(&a)
                .into_iter()
                .chain(metas(&b))
                .chain(prior.domain().flat_map(|m| prior.get(m).map(metas).unwrap_or_default()))
                .collect();
            for m in local.domain() {
                prop_assert!(allowed.contains(&m), "binding for {} outside the inputs", m);
                prop_assert!(prior.get(m).is_none() && prior.get_size(m).is_none(), "rebinds {}", m);
            }
            let mut merged = prior.clone();
            merged.extend(local).unwrap();
            prop_assert_eq!(apply(&a, &merged), apply(&b, &merged));
        }
    }

    #[test]
    fn unify_is_reflexive(a in semtype()) {
        let s = unify(&a, &a, &SubstEnv::new()).unwrap();
        prop_assert!(s.is_empty());
    }

    #[test]
    fn sizes_are_part_of_type_identity(n in 1..64u32, m in 1..64u32) {
        let r = unify(&SemType::Hw(HType::bits(n)), &SemType::Hw(HType::bits(m)), &SubstEnv::new());
        prop_assert_eq!(r.is_ok(), n == m);
        if n != m {
            prop_assert_eq!(r.unwrap_err().kind, ErrorKind::Type);
        }
    }
}

proptest! {
    #[test]
    fn substitution_reaches_a_fixed_point(
        pairs in prop::collection::vec(related_pair(), 1..5),
        env_types in prop::collection::vec(semtype(), 1..6),
    ) {
        let mut sigma = SubstEnv::new();
        for (a, b) in &pairs {
            if let Ok(local) = unify(a, b, &sigma) {
                sigma.extend(local).unwrap();
            }
        }
        let mut env = TypeEnv::default();
        for (i, t) in env_types.iter().enumerate() {
            env.bind_val(&format!("v{}", i), t.clone());
        }
        let once = substitute(&sigma, &env, DEFAULT_SUBST_LIMIT).unwrap();
        let twice = substitute(&sigma, &once, DEFAULT_SUBST_LIMIT).unwrap();
        for ((_, x), (_, y)) in once.vals.iter().zip(&twice.vals) {
            let (ValBind::Var(x), ValBind::Var(y)) = (x, y) else { unreachable!() };
            prop_assert_eq!(x, y);
            prop_assert_eq!(apply(x, &sigma), x.clone());
        }
    }

    #[test]
    fn independent_mismatches_are_all_reported(k in 1..6usize) {
        let decs: String = (0..k).map(|i| format!(" val v{} = {} + \"s\"", i, i)).collect();
        let src = format!("let{} in 0 end", decs);
        let (_, _, inf) = infer_source(&src).unwrap();
        let errors = inf.diags.iter().filter(|d| d.is_error()).count();
        prop_assert!(errors >= k, "{} errors for {} mismatches", errors, k);
    }
}
