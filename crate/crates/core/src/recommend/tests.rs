use std::collections::{BTreeMap, BTreeSet};

use super::*;
use crate::atc::AtcAnnotation;
use crate::cluster::{DbscanParams, OutlierSet, Partition};
use crate::error::Error;
use crate::graph::{jenks_breaks, PruneReport, SimGraph, StopList};
use crate::ingest::{MedId, MedicineCatalogEntry};
use crate::rulemine::{AssociationRule, RuleParams, RuleSet, Strength};

const A: MedId = MedId(0);
const B: MedId = MedId(1);
const C: MedId = MedId(2);
const D: MedId = MedId(3);
const E: MedId = MedId(4);
const F: MedId = MedId(5);
const G: MedId = MedId(6);
const O: MedId = MedId(7);
const S: MedId = MedId(8);

fn rule(ante: &[MedId], cons: &[MedId], confidence: f64, lift: f64, strength: Strength) -> AssociationRule {
    AssociationRule {
        antecedent: ante.to_vec(),
        consequent: cons.to_vec(),
        count: 10,
        antecedent_count: 10,
        consequent_count: 10,
        support: 0.01,
        confidence,
        lift,
        strength,
    }
}

/// cluster(a) = {a, b, c, e}, {d}, {f, g}; o is an outlier, s a stop
/// medicine. Strong a→d (0.95), weak a→e (lift 0.5).
fn fixture() -> (ClusterModel, RuleSet) {
    let names = ["a", "b", "c", "d", "e", "f", "g", "o", "s"];
    let catalog: Vec<MedicineCatalogEntry> = names
        .iter()
        .enumerate()
        .map(|(i, n)| MedicineCatalogEntry {
            med_id: MedId(i as u32),
            name: n.to_uppercase(),
            normalized_name: n.to_uppercase(),
            generic_code: String::new(),
            frequency: 10,
        })
        .collect();
    let rules = RuleSet {
        rules: vec![
            rule(&[A], &[D], 0.95, 3.0, Strength::Strong),
            rule(&[A], &[E], 0.2, 0.5, Strength::Weak),
            rule(&[A], &[S], 0.99, 1.1, Strength::Strong),
            rule(&[A], &[O], 0.97, 2.0, Strength::Strong),
            rule(&[A], &[B], 0.4, 1.5, Strength::Weak),
            rule(&[A, B], &[F], 0.92, 5.0, Strength::Strong),
        ],
        params: RuleParams {
            min_support: 0.001,
            min_confidence: 0.9,
        },
        db_fingerprint: "fixture".into(),
    };
    let graph = SimGraph {
        nodes: [A, B, C, D, E, F, G, O].into(),
        edges: [((A, B), 0.6), ((A, C), 0.4), ((B, C), 0.5), ((A, E), 0.3), ((F, G), 0.7)]
            .into_iter()
            .collect::<BTreeMap<_, _>>(),
    };
    let partition = Partition::from_assignment([(A, 0), (B, 0), (C, 0), (E, 0), (D, 1), (F, 2), (G, 2)]);
    let code = |m: MedId, c: &str| AtcAnnotation {
        med_id: m,
        codes: vec![c.parse().unwrap()],
        matched: true,
    };
    let annotations = catalog
        .iter()
        .map(|e| match e.med_id {
            A => code(A, "C09CA01"),
            B => code(B, "C07AB02"),
            D => code(D, "C08CA01"),
            m => AtcAnnotation {
                med_id: m,
                codes: Vec::new(),
                matched: false,
            },
        })
        .collect();
    let model = ClusterModel {
        config: EngineConfig::default(),
        db_fingerprint: "fixture".into(),
        n_transactions: 100,
        jenks: jenks_breaks(&[10], 1).unwrap(),
        stoplist: StopList {
            med_ids: [S].into(),
            ..Default::default()
        },
        prune: PruneReport {
            nodes_before: 9,
            nodes_after: 8,
            edges_before: 6,
            edges_after: 5,
            removed: vec![S],
            isolated_after: 2,
        },
        graph,
        outliers: OutlierSet {
            med_ids: [O].into(),
            params: DbscanParams { eps: 0.7, min_pts: 3 },
        },
        partition,
        modularity: 0.3,
        annotations,
        ruleset_ref: rules.fingerprint(),
        catalog,
        built_at: None,
    };
    (model, rules)
}

fn ids(r: &Recommendations) -> Vec<MedId> {
    r.recommendations.iter().map(|x| x.med_id).collect()
}

#[test]
fn cluster_and_rule_candidates() {
    let (model, rules) = fixture();
    let out = recommend(&model, &rules, &[A].into(), 10).unwrap();
    let got = ids(&out);
    for m in [B, C, D] {
        assert!(got.contains(&m), "{m} missing from {got:?}");
    }
    for m in [A, S, O] {
        assert!(!got.contains(&m));
    }
    let d = out.recommendations.iter().find(|r| r.med_id == D).unwrap();
    assert_eq!(d.components.rule_conf, 0.95);
    assert!(!d.components.same_cluster);
    assert_eq!(d.atc.codes[0].as_str(), "C08CA01");
}

#[test]
fn weak_rule_candidate_is_flagged_and_last() {
    let (model, rules) = fixture();
    let out = recommend(&model, &rules, &[A].into(), 10).unwrap();
    let last = out.recommendations.last().unwrap();
    assert_eq!(last.med_id, E);
    assert_eq!(last.flag, Flag::Discouraged);
    assert!(out.recommendations[..out.recommendations.len() - 1]
        .iter()
        .all(|r| r.flag == Flag::None));
    // a→b is weak but co-prescribed above chance, so b is not flagged
    let b = out.recommendations.iter().find(|r| r.med_id == B).unwrap();
    assert_eq!(b.flag, Flag::None);
}

#[test]
fn lift_bound_controls_flagging() {
    let (mut model, rules) = fixture();
    model.config.discourage_max_lift = None;
    let out = recommend(&model, &rules, &[A].into(), 10).unwrap();
    let b = out.recommendations.iter().find(|r| r.med_id == B).unwrap();
    assert_eq!(b.flag, Flag::Discouraged);
    model.config.discourage_max_lift = Some(0.1);
    let out = recommend(&model, &rules, &[A].into(), 10).unwrap();
    assert!(out.recommendations.iter().all(|r| r.flag == Flag::None));
}

#[test]
fn ranking_is_score_then_id() {
    let (model, rules) = fixture();
    let out = recommend(&model, &rules, &[A].into(), 10).unwrap();
    let unflagged: Vec<_> = out.recommendations.iter().filter(|r| r.flag == Flag::None).collect();
    for w in unflagged.windows(2) {
        assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].med_id < w[1].med_id));
    }
    // b: 0.3·0.6 + 0.2 = 0.38; d: 0.5·0.95 = 0.475; c: 0.3·0.4 + 0.2 = 0.32
    assert_eq!(ids(&out)[..3], [D, B, C]);
    let top2 = recommend(&model, &rules, &[A].into(), 2).unwrap();
    assert_eq!(ids(&top2), vec![D, B]);
}

#[test]
fn multi_item_antecedent_fires_only_on_full_query() {
    let (model, rules) = fixture();
    let solo = recommend(&model, &rules, &[A].into(), 10).unwrap();
    assert!(!ids(&solo).contains(&F));
    let both = recommend(&model, &rules, &[A, B].into(), 10).unwrap();
    assert!(ids(&both).contains(&F));
}

#[test]
fn exhausted_pool_is_empty() {
    let (model, rules) = fixture();
    let out = recommend(&model, &rules, &[F, G].into(), 10).unwrap();
    assert!(out.recommendations.is_empty());
}

#[test]
fn unknown_medicines() {
    let (model, rules) = fixture();
    let out = recommend(&model, &rules, &[A, MedId(99)].into(), 10).unwrap();
    assert_eq!(out.unknown, vec![MedId(99)]);
    assert!(matches!(
        recommend(&model, &rules, &[MedId(99)].into(), 10),
        Err(Error::UnknownMedicines(_))
    ));
    assert!(recommend(&model, &rules, &[A].into(), 0).is_err());
}

#[test]
fn explanation_for_rule_candidate() {
    let (model, rules) = fixture();
    let exp = explain(&model, &rules, &[A].into(), D).unwrap();
    assert_eq!(exp.fired_rules.len(), 1);
    assert_eq!(exp.fired_rules[0].antecedent, vec![A]);
    assert_eq!(exp.fired_rules[0].consequent, vec![D]);
    assert_eq!(exp.shared_cluster_id, None);
    assert_eq!(exp.atc_classes, vec!["C".to_string()]);
}

#[test]
fn explanation_for_cluster_candidate() {
    let (model, rules) = fixture();
    let exp = explain(&model, &rules, &[A].into(), C).unwrap();
    assert!(exp.fired_rules.is_empty());
    assert_eq!(exp.shared_cluster_id, Some(0));
    assert_eq!(exp.jaccard_details, vec![(A, 0.4)]);
}

#[test]
fn explanation_rejects_query_medicine() {
    let (model, rules) = fixture();
    assert!(matches!(explain(&model, &rules, &[A].into(), A), Err(Error::NotInPool(A))));
}

#[test]
fn explanations_reproduce_scores() {
    let (model, rules) = fixture();
    for query in [vec![A], vec![A, B], vec![B, C], vec![F]] {
        let q: BTreeSet<MedId> = query.into_iter().collect();
        let out = recommend(&model, &rules, &q, 20).unwrap();
        for r in &out.recommendations {
            let exp = explain(&model, &rules, &q, r.med_id).unwrap();
            assert_eq!(exp.score, r.score);
            assert_eq!(exp.recomputed_score(), r.score);
            assert_eq!(exp.flag, r.flag);
            assert!(exp.fired_rules.iter().all(|f| f.antecedent.iter().all(|m| q.contains(m))));
        }
    }
}

#[test]
fn artifact_round_trip_preserves_answers() {
    let (model, rules) = fixture();
    let art = ModelArtifact::new(model, rules);
    let bytes = art.to_bytes().unwrap();
    assert!(bytes.starts_with(br#"{"format":"recomed-model/1""#));
    let back = ModelArtifact::from_bytes(&bytes).unwrap();
    assert_eq!(back, art);
    assert_eq!(back.to_bytes().unwrap(), bytes);
    for q in [vec![A], vec![A, B], vec![F]] {
        let q: BTreeSet<MedId> = q.into_iter().collect();
        assert_eq!(
            recommend(&art.model, &art.rules, &q, 10).unwrap(),
            recommend(&back.model, &back.rules, &q, 10).unwrap()
        );
    }
}

#[test]
fn artifact_rejects_mismatched_rules() {
    let (model, mut rules) = fixture();
    let mut art = ModelArtifact::new(model, rules.clone());
    rules.rules.pop();
    art.rules = rules;
    assert!(ModelArtifact::from_bytes(&art.to_bytes().unwrap()).is_err());
}

#[test]
fn name_resolution_and_search() {
    let (model, _) = fixture();
    let (known, unknown) = model.resolve_names(&[" a ", "zzz"]);
    assert_eq!(known, [A].into());
    assert_eq!(unknown, vec!["zzz".to_string()]);
    assert_eq!(model.search("", 10).len(), 0);
    assert_eq!(model.search("g", 10)[0].med_id, G);
}
