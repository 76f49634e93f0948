use rahier::adversary::{attack, broken, verify, AdversaryBudget, ClaimSpec, Certificate, Outcome, Target, TransformerRef, Variant, VerifyError};
use rahier::registry::{lookup, CORRECT};
use rahier::{Rational, Transformer};

fn claim(t: &Transformer, target: Target, variant: Variant) -> ClaimSpec {
    ClaimSpec {
        transformer: TransformerRef::Registry(t.id().to_string()),
        in_tag: t.in_tag(),
        out_tag: t.out_tag(),
        target,
        variant,
    }
}

fn falsify(t: &Transformer, target: Target, variant: Variant) -> Certificate {
    match attack(t, &claim(t, target, variant), &AdversaryBudget::default()).unwrap() {
        Outcome::Falsified { certificate } => *certificate,
        other => panic!("{} not falsified: {other:?}", t.id()),
    }
}

#[test]
fn every_broken_claimant_yields_a_certificate_that_survives_json() {
    for (t, target, variant) in broken::corpus() {
        let cert = falsify(&t, target, variant);
        let text = serde_json::to_string_pretty(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
        verify(&back, &lookup).unwrap_or_else(|e| panic!("{}: {e}", t.id()));
    }
}

#[test]
fn correct_machines_are_not_falsified() {
    let variants = [
        Variant::FastFast,
        Variant::FastLower,
        Variant::LowerLower,
        Variant::LimitLimit,
        Variant::LimitLower1,
        Variant::Lower1Lower1,
    ];
    for id in CORRECT {
        let t = lookup(id).unwrap();
        let variant = variants.into_iter().find(|v| v.tags() == (t.in_tag(), t.out_tag())).unwrap();
        let target = if id.starts_with("square") { Target::Square } else { Target::Heaviside };
        let out = attack(&t, &claim(&t, target, variant), &AdversaryBudget::default()).unwrap();
        assert!(out.certificate().is_none(), "{id}: {out:?}");
    }
}

#[test]
fn attack_is_deterministic() {
    let (t, target, variant) = broken::corpus().remove(0);
    let a = serde_json::to_string(&falsify(&t, target, variant)).unwrap();
    let b = serde_json::to_string(&falsify(&t, target, variant)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tampered_certificates_are_rejected() {
    let (t, target, variant) = broken::corpus().remove(0);
    let cert = falsify(&t, target, variant);

    let mut bad = cert.clone();
    let v = &mut bad.runs[0].trace.emitted[0];
    *v = &*v + Rational::one();
    assert!(matches!(verify(&bad, &lookup), Err(VerifyError::ReplayMismatch { run: 0 })));

    let mut bad = cert.clone();
    bad.claim.transformer = TransformerRef::Registry("heaviside_nowhere".into());
    assert!(matches!(verify(&bad, &lookup), Err(VerifyError::UnknownTransformer(_))));

    let mut bad = cert.clone();
    bad.inputs[0].prefix.push(Rational::from_int(42));
    assert!(verify(&bad, &lookup).is_err());

    // Pointing the claim at a correct machine breaks the replay.
    let mut bad = cert;
    bad.claim.transformer = TransformerRef::Registry("heaviside_lt".into());
    assert!(verify(&bad, &lookup).is_err());
}

#[test]
fn variant_tags_must_match() {
    let t = lookup("heaviside_lt").unwrap();
    let err = attack(&t, &claim(&t, Target::Heaviside, Variant::FastFast), &AdversaryBudget::default());
    assert!(err.is_err());
}
