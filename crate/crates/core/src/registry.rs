//! Built-in transformers by id.

use std::sync::Arc;

use crate::adversary::broken;
use crate::hotz::{heaviside_hotz, restart_lift, square_to_hotz};
use crate::lifting::{
    heaviside_lt, heaviside_lt1, lift_pointwise, lsc_apply, mlsc_apply, mlsc_eval_sup, LscFunction, Square,
};
use crate::machine::{compose, Transformer};
use crate::names::ReprTag;
use crate::nondet::{nd_binary, nd_fast_subsequence, nd_level_down};
use crate::reductions::{join_level1, join_lt_gt, liminf_to_lower1, lower1_to_liminf, WeakenEdge};

const LSC_FUNCTIONS: [(&str, LscFunction); 4] = [
    ("heaviside", LscFunction::Heaviside),
    ("identity", LscFunction::Identity),
    ("step_ramp", LscFunction::StepRamp),
    ("ladder", LscFunction::Ladder),
];

fn build(id: &str) -> Option<Transformer> {
    let t = match id {
        "join_lt_gt" => join_lt_gt(),
        "join_level1" => join_level1(),
        "rho_to_lt" => WeakenEdge::RhoToLt.transformer(),
        "rho_to_gt" => WeakenEdge::RhoToGt.transformer(),
        "lt_to_rho1" => WeakenEdge::LtToRho1.transformer(),
        "rho1_to_lt1" => WeakenEdge::Rho1ToLt1.transformer(),
        "liminf_to_lower1" => liminf_to_lower1(ReprTag::Liminf),
        "lower1_to_liminf" => lower1_to_liminf(),
        "heaviside_lt" => heaviside_lt(),
        "heaviside_lt1" => heaviside_lt1(),
        "heaviside_rho_lt" => compose(&WeakenEdge::RhoToLt.transformer(), &heaviside_lt()).ok()?,
        "heaviside_hotz" => heaviside_hotz(),
        "square_fast" => square_to_hotz(),
        "square_hotz" => restart_lift(&square_to_hotz()).ok()?,
        "square_limit" => lift_pointwise(Arc::new(Square)),
        "nd_fast_subsequence" => nd_fast_subsequence(),
        "nd_binary" => nd_binary(),
        "nd_level_down_1" => nd_level_down(1),
        other => {
            if let Some(t) = broken::corpus().into_iter().map(|(t, _, _)| t).find(|t| t.id() == other) {
                return Some(t);
            }
            let (family, fname) = other.split_once('/')?;
            let (_, f) = LSC_FUNCTIONS.iter().find(|(n, _)| *n == fname)?;
            match family {
                "lsc_apply" => lsc_apply(&f.lsc_name()),
                "mlsc_apply" if f.is_monotone() => mlsc_apply(&f.mlsc_name()),
                "mlsc_eval_sup" if f.is_monotone() => mlsc_eval_sup(&f.mlsc_name()),
                _ => return None,
            }
        }
    };
    Some(t.with_id(id))
}

pub fn lookup(id: &str) -> Option<Transformer> {
    build(id)
}

/// Every id `lookup` accepts, sorted.
pub fn ids() -> Vec<String> {
    let mut v: Vec<String> = [
        "join_lt_gt",
        "join_level1",
        "rho_to_lt",
        "rho_to_gt",
        "lt_to_rho1",
        "rho1_to_lt1",
        "liminf_to_lower1",
        "lower1_to_liminf",
        "heaviside_lt",
        "heaviside_lt1",
        "heaviside_rho_lt",
        "heaviside_hotz",
        "square_fast",
        "square_hotz",
        "square_limit",
        "nd_fast_subsequence",
        "nd_binary",
        "nd_level_down_1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(broken::corpus().into_iter().map(|(t, _, _)| t.id().to_string()));
    for (n, f) in LSC_FUNCTIONS {
        v.push(format!("lsc_apply/{n}"));
        if f.is_monotone() {
            v.push(format!("mlsc_apply/{n}"));
            v.push(format!("mlsc_eval_sup/{n}"));
        }
    }
    v.sort();
    v
}

/// Machines that compute their function correctly, for adversary soundness checks.
pub const CORRECT: [&str; 4] = ["heaviside_lt", "heaviside_rho_lt", "heaviside_lt1", "square_limit"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_resolves_with_its_own_id() {
        for id in ids() {
            let t = lookup(&id).unwrap_or_else(|| panic!("{id}"));
            assert_eq!(t.id(), id);
        }
        assert!(lookup("nope").is_none());
        assert!(lookup("mlsc_apply/step_ramp").is_none());
    }
}
