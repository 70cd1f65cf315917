//! Measured forward + transposed operator applications against the closed-form
//! counts, for every training-step variant.

use anyhow::Result;
use dbprop::{
    double_backprop, frobenius_naive, frobenius_optimized, loss_and_v, LayerConfig, LossKind, Network, NetworkConfig,
    OpCounter, OpCounts, PenaltySpec, Tensor,
};
use serde::Serialize;

/// Depths and class counts covered by the default report.
pub const DEPTHS: [usize; 4] = [1, 2, 3, 5];
pub const CLASSES: [usize; 3] = [2, 4, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Training without a penalty: `2L − 1`.
    PlainTraining,
    /// Loss-gradient penalty reusing the loss backprop: `4L − 1`.
    ClassicalDbp,
    /// Independent penalty plus loss: `5L − 2`.
    PenaltyPlusLoss,
    /// Constant `v`, identity output, locally linear hidden layers: `3L`.
    LocallyLinearPenalty,
    /// `L + C(3L − 1)`
    FrobeniusNaive,
    /// `2L − 1 + C(3L − 1)`
    FrobeniusNaiveWithLoss,
    /// `2L − 1 + 2CL`
    FrobeniusOptimized,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::PlainTraining,
        Variant::ClassicalDbp,
        Variant::PenaltyPlusLoss,
        Variant::LocallyLinearPenalty,
        Variant::FrobeniusNaive,
        Variant::FrobeniusNaiveWithLoss,
        Variant::FrobeniusOptimized,
    ];

    pub fn formula(self) -> &'static str {
        match self {
            Variant::PlainTraining => "2L-1",
            Variant::ClassicalDbp => "4L-1",
            Variant::PenaltyPlusLoss => "5L-2",
            Variant::LocallyLinearPenalty => "3L",
            Variant::FrobeniusNaive => "L+C(3L-1)",
            Variant::FrobeniusNaiveWithLoss => "2L-1+C(3L-1)",
            Variant::FrobeniusOptimized => "2L-1+2CL",
        }
    }

    pub fn expected(self, l: usize, c: usize) -> usize {
        match self {
            Variant::PlainTraining => 2 * l - 1,
            Variant::ClassicalDbp => 4 * l - 1,
            Variant::PenaltyPlusLoss => 5 * l - 2,
            Variant::LocallyLinearPenalty => 3 * l,
            Variant::FrobeniusNaive => l + c * (3 * l - 1),
            Variant::FrobeniusNaiveWithLoss => 2 * l - 1 + c * (3 * l - 1),
            Variant::FrobeniusOptimized => 2 * l - 1 + 2 * c * l,
        }
    }

    /// Measured counts on a seeded `L`-layer network with `C` outputs.
    pub fn measure(self, l: usize, c: usize) -> Result<OpCounts> {
        let (hidden, output) = match self {
            Variant::LocallyLinearPenalty => ("relu", "identity"),
            Variant::FrobeniusNaive | Variant::FrobeniusNaiveWithLoss | Variant::FrobeniusOptimized => {
                ("relu", "softmax")
            }
            _ => ("tanh", "softmax"),
        };
        let net = mlp(4, 6, l, c, hidden, output, 7)?;
        let x0 = Tensor::vector(vec![0.3, -0.8, 1.2, 0.5]);
        let y = Tensor::unit(&[c], 0);
        Ok(match self {
            Variant::PlainTraining => {
                let counter = OpCounter::new();
                let t = net.forward(&x0, &counter)?;
                let (_, v) = loss_and_v(LossKind::Nll, t.output(), &y)?;
                net.standard_backprop(&t, &v, &counter)?;
                counter.snapshot()
            }
            Variant::ClassicalDbp => {
                double_backprop(&net, &x0, Some(&y), &PenaltySpec::classical(LossKind::Nll, 0.1), Some(LossKind::Nll))?
                    .counts
            }
            Variant::PenaltyPlusLoss => {
                double_backprop(&net, &x0, Some(&y), &PenaltySpec::output_node(1, 0.1), Some(LossKind::Nll))?.counts
            }
            Variant::LocallyLinearPenalty => {
                double_backprop(&net, &x0, None, &PenaltySpec::output_node(1, 0.1), None)?.counts
            }
            Variant::FrobeniusNaive => frobenius_naive(&net, &x0, false, None)?.counts,
            Variant::FrobeniusNaiveWithLoss => frobenius_naive(&net, &x0, true, Some(&y))?.counts,
            Variant::FrobeniusOptimized => frobenius_optimized(&net, &x0, true, Some(&y))?.counts,
        })
    }
}

/// `depth` dense layers of width `width` ending in `c` outputs.
pub fn mlp(input: usize, width: usize, depth: usize, c: usize, hidden: &str, output: &str, seed: u64) -> Result<Network> {
    let layers = (0..depth)
        .map(|j| {
            if j + 1 == depth {
                LayerConfig::dense(c, output)
            } else {
                LayerConfig::dense(width, hidden)
            }
        })
        .collect();
    Ok(Network::from_config(&NetworkConfig {
        input: vec![input],
        seed,
        layers,
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCountRow {
    pub variant: Variant,
    pub formula: &'static str,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub expected: usize,
    pub measured: usize,
    pub count_forward: u64,
    pub count_transposed: u64,
    pub count_weight_adjoint: u64,
    pub exact_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCountReport {
    pub rows: Vec<OpCountRow>,
    pub all_match: bool,
}

impl OpCountReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn find(&self, variant: Variant, l: usize, c: usize) -> Option<&OpCountRow> {
        self.rows.iter().find(|r| r.variant == variant && r.l == l && r.c == c)
    }
}

pub fn measure_row(variant: Variant, l: usize, c: usize) -> Result<OpCountRow> {
    let counts = variant.measure(l, c)?;
    let expected = variant.expected(l, c);
    let measured = counts.linear() as usize;
    Ok(OpCountRow {
        variant,
        formula: variant.formula(),
        l,
        c,
        expected,
        measured,
        count_forward: counts.forward,
        count_transposed: counts.transposed,
        count_weight_adjoint: counts.weight_adjoint,
        exact_match: measured == expected,
    })
}

/// Every variant over `L ∈ {1, 2, 3, 5}`, `C ∈ {2, 4, 10}`, plus the
/// `L = 4, C = 10` Frobenius pair.
pub fn opcount_report() -> Result<OpCountReport> {
    let mut rows = Vec::new();
    for variant in Variant::ALL {
        for l in DEPTHS {
            for c in CLASSES {
                rows.push(measure_row(variant, l, c)?);
            }
        }
    }
    for variant in [Variant::FrobeniusNaiveWithLoss, Variant::FrobeniusOptimized] {
        rows.push(measure_row(variant, 4, 10)?);
    }
    let all_match = rows.iter().all(|r| r.exact_match);
    Ok(OpCountReport { rows, all_match })
}
