//! Plain-text parameter container.
//!
//! ```text
//! gnnkrige-params 1
//! order 2
//! window 24
//! hidden 32
//! activation relu
//! theta <layer> <direction> <k> <rows> <cols>
//! <row 0 values>
//! ...
//! ```

use super::{LayerParams, ModelParams};
use crate::error::Result;
use crate::numerics::Activation;
use crate::textio::{TextReader, TextWriter};

const MAGIC: &str = "gnnkrige-params";
const VERSION: u32 = 1;

pub fn write_params(params: &ModelParams) -> String {
    let mut w = TextWriter::new();
    write_into(&mut w, params);
    w.finish()
}

pub fn read_params(text: &str) -> Result<ModelParams> {
    let mut r = TextReader::new("parameter file", text);
    read_from(&mut r)
}

pub(crate) fn write_into(w: &mut TextWriter, params: &ModelParams) {
    w.kv(MAGIC, VERSION);
    w.kv("order", params.order());
    w.kv("window", params.window());
    w.kv("hidden", params.hidden());
    w.kv("activation", params.activation().name());
    for (key, m) in params.keys().into_iter().zip(params.matrices()) {
        w.matrix(
            &format!("theta {} {} {}", key.layer, key.direction, key.k),
            m,
        );
    }
}

pub(crate) fn read_from(r: &mut TextReader<'_>) -> Result<ModelParams> {
    let version: u32 = r.expect_parse(MAGIC)?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let order: usize = r.expect_parse("order")?;
    let window: usize = r.expect_parse("window")?;
    let hidden: usize = r.expect_parse("hidden")?;
    let activation: Activation = r.expect_parse("activation")?;
    let mut layers = Vec::with_capacity(super::LAYERS);
    for layer in 0..super::LAYERS {
        let mut banks = [Vec::with_capacity(order), Vec::with_capacity(order)];
        for direction in 1..=2 {
            for k in 1..=order {
                let (tags, m) = r.matrix("theta")?;
                let expected = [layer, direction, k].map(|x| x.to_string());
                if tags != expected {
                    return Err(r.err(format!("expected theta {expected:?}, found {tags:?}")));
                }
                banks[direction - 1].push(m);
            }
        }
        let [dir1, dir2] = banks;
        layers.push(LayerParams { dir1, dir2 });
    }
    ModelParams::new(order, window, hidden, activation, layers)
}
