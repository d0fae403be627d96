#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recomed_core::atc::{load_atc_table, ATC_FIXTURE_TSV};
use recomed_core::ingest::{build_transaction_db, RawItem, RawPrescriptionRecord};
use recomed_core::metrics::TaggedSample;
use recomed_core::recommend::{build_model, EngineConfig, ModelArtifact};
use recomed_core::synth::{generate_synthetic, synthetic_atc_table, SynthConfig};

fn record(i: usize, names: &[String]) -> RawPrescriptionRecord {
    RawPrescriptionRecord {
        rx_id: format!("rx{i}"),
        pharmacy: String::new(),
        location: String::new(),
        items: names
            .iter()
            .map(|n| RawItem {
                name: n.clone(),
                generic_code: String::new(),
                quantity: 1.0,
            })
            .collect(),
    }
}

/// Model over the expert-tagged sample's medicines. Cardiovascular ones are
/// co-prescribed in small fixed groups; the rest form one more group.
pub fn catalog_artifact() -> ModelArtifact {
    let sample = TaggedSample::expert_sample();
    let mut names: Vec<String> = sample.rows.iter().map(|r| r.medicine.clone()).collect();
    names.sort();
    names.dedup();
    let (cardio, other): (Vec<String>, Vec<String>) = names.into_iter().partition(|n| {
        let row = sample.rows.iter().find(|r| &r.medicine == n).unwrap();
        row.atc_codes[0].anatomical_group() == 'C'
    });
    let mut groups: Vec<Vec<String>> = cardio.chunks(5).map(|c| c.to_vec()).collect();
    groups.push(other);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let records: Vec<_> = (0..600)
        .map(|i| {
            let pool = &groups[i % groups.len()];
            let k = r.gen_range(pool.len() - 2..=pool.len());
            let picked: Vec<String> = pool.choose_multiple(&mut r, k).cloned().collect();
            record(i, &picked)
        })
        .collect();
    let db = build_transaction_db(&records).unwrap();
    let (atc, _) = load_atc_table(ATC_FIXTURE_TSV).unwrap();
    let cfg = EngineConfig {
        stop_class_count: 0,
        min_support: 0.01,
        min_confidence: 0.3,
        min_pts: 2,
        ..Default::default()
    };
    let (model, rules) = build_model(&db, &atc, &cfg).unwrap();
    ModelArtifact::new(model, rules)
}

pub fn synthetic_artifact(seed: u64) -> ModelArtifact {
    let cfg = SynthConfig {
        n_prescriptions: 2_000,
        seed,
        ..Default::default()
    };
    let (db, _) = generate_synthetic(&cfg).unwrap();
    let (atc, _) = load_atc_table(&synthetic_atc_table(&cfg)).unwrap();
    let engine = EngineConfig {
        jenks_k: 3,
        stop_class_count: 1,
        ..Default::default()
    };
    let (model, rules) = build_model(&db, &atc, &engine).unwrap();
    ModelArtifact::new(model, rules)
}
