//! Transcript scans: no feature value or split threshold may leave a client.
#![allow(dead_code)]

use std::collections::HashSet;

use fedmsa_core::fedrf::PartialTreeNode;
use fedmsa_core::transcript::numbers_in;
use fedmsa_core::{Dataset, FedRfOutput, ProtocolMessage};
use serde_json::Value;

fn keys(v: &Value, out: &mut HashSet<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.insert(k.clone());
                keys(x, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys(x, out)),
        _ => {}
    }
}

fn forbidden_values(data: &[&Dataset]) -> HashSet<u64> {
    data.iter().flat_map(|d| d.features().iter().filter(|v| v.fract() != 0.0).map(|v| v.to_bits())).collect()
}

fn thresholds(node: &PartialTreeNode, out: &mut HashSet<u64>) {
    if let PartialTreeNode::Split { local, left, right, .. } = node {
        if let Some(s) = local {
            out.insert(s.threshold.to_bits());
        }
        thresholds(left, out);
        thresholds(right, out);
    }
}

/// Returns the number of payloads scanned.
pub fn audit_fedsvm(transcript: &[ProtocolMessage], data: &[&Dataset]) -> usize {
    let forbidden = forbidden_values(data);
    let allowed: HashSet<&str> = ["recipient", "model", "stop_reason", "weights", "intercept"].into();
    for msg in transcript {
        let payload = msg.to_record("audit", true).payload.expect("inlined");
        let mut k = HashSet::new();
        keys(&payload, &mut k);
        for key in &k {
            assert!(allowed.contains(key.as_str()), "unexpected payload field `{key}` in {msg:?}");
        }
        let numbers = numbers_in(&payload);
        let dim = data[0].n_features();
        assert!(numbers.is_empty() || numbers.len() == dim + 1, "payload carries {} numbers", numbers.len());
        for x in numbers {
            assert!(!forbidden.contains(&x.to_bits()), "feature value {x} leaked in {msg:?}");
        }
    }
    transcript.len()
}

/// Only ids, client indices, ordinals, exact Gini fractions, Gini values and
/// prune flags may appear; never a feature value, threshold or label.
pub fn audit_fedrf(out: &FedRfOutput, data: &[&Dataset]) -> usize {
    let mut forbidden = forbidden_values(data);
    for client in &out.client_trees {
        for tree in client {
            thresholds(tree, &mut forbidden);
        }
    }
    let allowed: HashSet<&str> = [
        "recipient", "path", "body", "type", "features", "train_ids", "test_ids", "report", "feature", "ordinal", "key", "num",
        "den", "weighted_gini", "needs_pruning", "sets", "left_train", "right_train", "left_test", "right_test", "owner",
    ]
    .into();
    for msg in &out.transcript {
        let payload = msg.to_record("audit", true).payload.expect("inlined");
        let mut k = HashSet::new();
        keys(&payload, &mut k);
        for key in &k {
            assert!(allowed.contains(key.as_str()), "unexpected payload field `{key}`");
        }
        let gini = payload.pointer("/body/report/weighted_gini").and_then(Value::as_f64);
        for x in numbers_in(&payload) {
            assert!(!forbidden.contains(&x.to_bits()), "value {x} leaked in {msg:?}");
            assert!(x.fract() == 0.0 || Some(x) == gini, "non-integer {x} outside the Gini field in {msg:?}");
        }
    }
    out.transcript.len()
}
