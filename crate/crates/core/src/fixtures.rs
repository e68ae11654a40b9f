//! Reference networks used by tests, the CLI demo and the Python smoke test.

use nalgebra::{dmatrix, DMatrix};

use crate::error::{OscError, Result};
use crate::model::{LayeredNetwork, Network};

/// Two oscillators `n1->n3`, `n2->n4`; resistors `n1-n2` (g=1) and `n3-n4` (g=3).
pub const NET_A: &str = "\
# two-oscillator resistive ladder
param omega0 1.0
node n1
node n2
node n3
node n4
osc o1 n1 n3
osc o2 n2 n4
res r1 n1 n2 1
res r2 n3 n4 3
";

/// `NET_A` without the `n1-n2` resistor: the first layer falls apart.
pub const NET_B: &str = "\
param omega0 1.0
node n1
node n2
node n3
node n4
osc o1 n1 n3
osc o2 n2 n4
res r2 n3 n4 3
";

/// Square with oscillators on three sides and a resistor closing it (odd o-cycle).
pub const NET_C: &str = "\
param omega0 1.0
node n1
node n2
node n3
node n4
osc o1 n1 n2
osc o2 n2 n3
osc o3 n3 n4
res r1 n4 n1 1
";

/// The four-tank RL example in block form; only `B1` depends on `alpha`.
pub fn four_tank_layers(alpha: f64) -> LayeredNetwork {
    let f1 = dmatrix![
        1.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 1.0, 0.0;
        0.0, 0.0, 0.0, 1.0
    ];
    let f2 = dmatrix![
        1.0, 0.0, 0.0, 0.0;
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 1.0, 1.0
    ];
    let g1 = DMatrix::zeros(3, 3);
    let b1 = dmatrix![
        alpha + 4.0, -4.0, -alpha;
        -4.0, 5.0, -1.0;
        -alpha, -1.0, alpha + 1.0
    ];
    let g2 = dmatrix![
        0.0, 0.0, 0.0;
        0.0, 2.0, -2.0;
        0.0, -2.0, 2.0
    ];
    let b2 = dmatrix![
        8.0, -5.0, -3.0;
        -5.0, 5.0, 0.0;
        -3.0, 0.0, 3.0
    ];
    LayeredNetwork::from_blocks(f1, f2, g1, b1, g2, b2).expect("four-tank blocks are well formed")
}

/// The four-tank RL example as a [`Network`] with `omega0 = 1`.
///
/// # Panics
/// If `alpha` is not strictly positive.
pub fn four_tank(alpha: f64) -> Network {
    try_four_tank(alpha).expect("alpha must be positive")
}

pub fn try_four_tank(alpha: f64) -> Result<Network> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(OscError::Invalid(format!("alpha must be positive and finite, got {alpha}")));
    }
    let mb = four_tank_layers(alpha).bundle();
    Network::from_matrices(&mb.a, &mb.g, &mb.b, 1.0)
}
