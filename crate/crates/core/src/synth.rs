//! Synthetic flow tables with a planted signal, used for fixtures and for
//! exercising the pipeline without a real capture.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::RawTable;
use crate::rng;
use crate::schema::{FeatureKind, FeatureSchema, FeatureSpec};

/// Schema of the generated table: four numeric features, one categorical,
/// and a binary label. `f0` carries the class signal.
pub fn schema() -> FeatureSchema {
    let numeric = |name: &str| FeatureSpec {
        name: name.into(),
        kind: FeatureKind::Numeric,
        categories: vec![],
    };
    FeatureSchema {
        name: "synthetic-flows".into(),
        features: vec![
            numeric("f0"),
            numeric("f1"),
            numeric("f2"),
            numeric("f3"),
            FeatureSpec {
                name: "proto".into(),
                kind: FeatureKind::Categorical,
                categories: vec!["tcp".into(), "udp".into(), "icmp".into()],
            },
        ],
        label_column: "label".into(),
        attack_category_column: None,
    }
}

/// Generate `n` rows. Classes alternate deterministically (even rows are
/// normal), `f0` is a two-mode Gaussian separated by three standard
/// deviations, `f1..f3` are pure noise, and `proto` is weakly correlated
/// with the class.
pub fn generate(n: usize, seed: u64) -> RawTable {
    let schema = schema();
    let mut stream = rng::stream(seed, "synth", 0);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i % 2 == 1);
        let center = if label == 1 { 1.5 } else { -1.5 };
        let noise: f64 = StandardNormal.sample(&mut stream);
        let f0 = center + 0.5 * noise;
        let mut cells: Vec<Option<String>> = vec![Some(format!("{f0:.6}"))];
        for _ in 0..3 {
            let v: f64 = StandardNormal.sample(&mut stream);
            cells.push(Some(format!("{v:.6}")));
        }
        let proto_roll: f64 = stream.random();
        let proto = match (label, proto_roll) {
            (1, r) if r < 0.5 => "tcp",
            (1, r) if r < 0.8 => "udp",
            (1, _) => "icmp",
            (_, r) if r < 0.5 => "udp",
            (_, r) if r < 0.8 => "tcp",
            _ => "icmp",
        };
        cells.push(Some(proto.to_string()));
        cells.push(Some(if label == 1 { "1".into() } else { "0".into() }));
        rows.push(cells);
    }
    RawTable {
        schema,
        rows,
        provenance: vec![format!("synthetic(n={n}, seed={seed})")],
    }
}
