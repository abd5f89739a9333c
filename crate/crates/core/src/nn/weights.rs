//! Text weight files.
//!
//! ```text
//! format_version=1
//! scalar=f64
//! tensors=2
//! shape layer0.weight 5 128
//! shape layer0.bias 1 128
//! end_header
//! # layer0.weight
//! <row 0, space separated>
//! ...
//! ```
//!
//! Values are written with enough significant digits to parse back bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{Matrix, Model};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textio;

pub const FORMAT_VERSION: u32 = 1;

pub fn weights_to_string<T: Scalar, M: Model<T>>(model: &M) -> String {
    let tensors = model.tensors();
    let names = model.tensor_names();
    let mut out = String::new();
    let _ = writeln!(out, "format_version={FORMAT_VERSION}");
    let _ = writeln!(out, "scalar={}", T::NAME);
    let _ = writeln!(out, "tensors={}", tensors.len());
    for (name, t) in names.iter().zip(&tensors) {
        let _ = writeln!(out, "shape {name} {} {}", t.rows(), t.cols());
    }
    out.push_str("end_header\n");
    for (name, t) in names.iter().zip(&tensors) {
        let _ = writeln!(out, "# {name}");
        for i in 0..t.rows() {
            let row: Vec<String> = t.row(i).iter().map(|x| x.to_exact_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Loads parameters into `model`, whose architecture must match the file.
pub fn weights_from_str<T: Scalar, M: Model<T>>(text: &str, model: &mut M, path: &Path) -> Result<()> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of file, expected {what}")))
    };

    let (n, l) = next("format_version")?;
    if l != format!("format_version={FORMAT_VERSION}") {
        return Err(Error::parse(path, n, format!("unsupported header {l:?}")));
    }
    let (n, l) = next("scalar")?;
    if l != format!("scalar={}", T::NAME) {
        return Err(Error::parse(path, n, format!("expected scalar={}, got {l:?}", T::NAME)));
    }
    let (n, l) = next("tensors")?;
    let count: usize = l
        .strip_prefix("tensors=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(path, n, "expected tensors=<count>"))?;

    let names = model.tensor_names();
    let mut params = model.tensors_mut();
    if count != params.len() {
        return Err(Error::parse(
            path,
            n,
            format!("file has {count} tensors, model has {}", params.len()),
        ));
    }
    for (name, p) in names.iter().zip(&params) {
        let (n, l) = next("shape line")?;
        let expected = format!("shape {name} {} {}", p.rows(), p.cols());
        if l != expected {
            return Err(Error::parse(path, n, format!("expected {expected:?}, got {l:?}")));
        }
    }
    let (n, l) = next("end_header")?;
    if l != "end_header" {
        return Err(Error::parse(path, n, "expected end_header"));
    }
    for (name, p) in names.iter().zip(params.iter_mut()) {
        let (n, l) = next("tensor marker")?;
        if l != format!("# {name}") {
            return Err(Error::parse(path, n, format!("expected tensor {name}")));
        }
        let cols = p.cols();
        for i in 0..p.rows() {
            let (n, l) = next("tensor row")?;
            let row = p.row_mut(i);
            let mut count = 0;
            for (slot, tok) in row.iter_mut().zip(l.split_whitespace()) {
                *slot = tok
                    .parse()
                    .map_err(|_| Error::parse(path, n, format!("bad number {tok:?}")))?;
                count += 1;
            }
            if count != cols || l.split_whitespace().count() != cols {
                return Err(Error::parse(path, n, format!("expected {cols} values")));
            }
        }
    }
    Ok(())
}

pub fn save_weights<T: Scalar, M: Model<T>>(model: &M, path: &Path) -> Result<()> {
    textio::write_atomic(path, &weights_to_string(model))
}

pub fn load_weights<T: Scalar, M: Model<T>>(model: &mut M, path: &Path) -> Result<()> {
    let text = textio::read_to_string(path)?;
    weights_from_str(&text, model, path)
}

/// Snapshot of all parameters, handy for equality checks in tests.
pub fn flatten<T: Scalar, M: Model<T>>(model: &M) -> Vec<T> {
    model
        .tensors()
        .iter()
        .flat_map(|t: &&Matrix<T>| t.as_slice().iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Net(Mlp<f64>);

    impl Model<f64> for Net {
        fn tensors(&self) -> Vec<&Matrix<f64>> {
            self.0.tensors()
        }
        fn tensors_mut(&mut self) -> Vec<&mut Matrix<f64>> {
            self.0.tensors_mut()
        }
        fn tensor_names(&self) -> Vec<String> {
            self.0.tensor_names("layer")
        }
    }

    fn net(seed: u64) -> Net {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Net(Mlp::new(&[3, 5, 2], Activation::Tanh, Activation::Identity, &mut rng))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = net(1);
        let text = weights_to_string(&a);
        let mut b = net(2);
        weights_from_str(&text, &mut b, Path::new("w.txt")).unwrap();
        let bits = |n: &Net| flatten(n).iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(weights_to_string(&b), text);
    }

    #[test]
    fn architecture_mismatch_is_rejected() {
        let text = weights_to_string(&net(1));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut other = Net(Mlp::new(&[3, 4, 2], Activation::Tanh, Activation::Identity, &mut rng));
        let err = weights_from_str(&text, &mut other, Path::new("w.txt")).unwrap_err();
        assert!(err.to_string().contains("w.txt:4"), "{err}");
    }
}
