//! Plain-text parameter checkpoints.
//!
//! ```text
//! vinslab-params sizes=3,64,1 layernorm=1,0 activations=relu,identity
//! <weights row 0 of layer 0>
//! ...
//! <bias row of layer 0>
//! <gain row of layer 0>      (normalized layers only)
//! <offset row of layer 0>    (normalized layers only)
//! ...
//! ```
//!
//! Rows are space-separated reals at 17 significant digits.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, LayerNorm, NetworkParams};
use crate::error::{Error, Result};
use crate::format;

const MAGIC: &str = "vinslab-params";

impl NetworkParams {
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let sizes = self
            .sizes()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let norms = self
            .layernorm_flags()
            .iter()
            .map(|f| if *f { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(",");
        let acts = self
            .layers()
            .iter()
            .map(|l| l.activation.tag())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{MAGIC} sizes={sizes} layernorm={norms} activations={acts}")?;
        for layer in self.layers() {
            for row in layer.weights.rows() {
                writeln!(w, "{}", format::join_reals(row.iter(), " "))?;
            }
            writeln!(w, "{}", format::join_reals(layer.bias.iter(), " "))?;
            if let Some(norm) = &layer.norm {
                writeln!(w, "{}", format::join_reals(norm.gain.iter(), " "))?;
                writeln!(w, "{}", format::join_reals(norm.offset.iter(), " "))?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Schema("empty checkpoint".into()))?;
        let header = header?;
        let (sizes, norms, acts) = parse_header(&header)?;

        let mut next_row = |expected: usize| -> Result<Vec<f64>> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::Schema("checkpoint ends early".into()))?;
            let line = line?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != expected {
                return Err(Error::parse(
                    n,
                    format!("expected {expected} values, found {}", tokens.len()),
                ));
            }
            format::parse_reals(&tokens, n)
        };

        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut weights = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_out {
                weights.extend(next_row(fan_in)?);
            }
            let weights = Array2::from_shape_vec((fan_out, fan_in), weights)
                .map_err(|e| Error::Shape(e.to_string()))?;
            let bias = Array1::from(next_row(fan_out)?);
            let norm = if norms[i] {
                Some(LayerNorm {
                    gain: Array1::from(next_row(fan_out)?),
                    offset: Array1::from(next_row(fan_out)?),
                })
            } else {
                None
            };
            layers.push(Layer {
                weights,
                bias,
                norm,
                activation: acts[i],
            });
        }
        if let Some((n, line)) = lines.next() {
            if !line?.trim().is_empty() {
                return Err(Error::parse(n, "trailing data after last layer"));
            }
        }
        NetworkParams::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::Dependency(path.to_path_buf()));
        }
        Self::read_from(BufReader::new(fs::File::open(path)?))
    }
}

fn parse_header(header: &str) -> Result<(Vec<usize>, Vec<bool>, Vec<Activation>)> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::parse(1, format!("missing '{MAGIC}' header")));
    }
    let (mut sizes, mut norms, mut acts) = (None, None, None);
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("bad header field {part:?}")))?;
        let items: Vec<&str> = value.split(',').collect();
        match key {
            "sizes" => {
                sizes = Some(
                    items
                        .iter()
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::parse(1, "bad layer size"))?,
                )
            }
            "layernorm" => {
                norms = Some(
                    items
                        .iter()
                        .map(|s| match *s {
                            "1" => Ok(true),
                            "0" => Ok(false),
                            _ => Err(Error::parse(1, "bad layer-norm flag")),
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "activations" => {
                acts = Some(
                    items
                        .iter()
                        .map(|s| {
                            Activation::from_tag(s)
                                .ok_or_else(|| Error::parse(1, format!("unknown activation {s:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            other => return Err(Error::parse(1, format!("unknown header field {other:?}"))),
        }
    }
    let sizes = sizes.ok_or_else(|| Error::Schema("header lacks sizes".into()))?;
    let norms = norms.ok_or_else(|| Error::Schema("header lacks layernorm flags".into()))?;
    let acts = acts.ok_or_else(|| Error::Schema("header lacks activations".into()))?;
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArchitecture(format!("{sizes:?}")));
    }
    if norms.len() != sizes.len() - 1 || acts.len() != sizes.len() - 1 {
        return Err(Error::Schema("per-layer header lists disagree with sizes".into()));
    }
    Ok((sizes, norms, acts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let p = NetworkParams::init(&[3, 7, 5, 2], &[true, false, false], 42).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let back = NetworkParams::read_from(buf.as_slice()).unwrap();
        assert_eq!(p, back);
        let bits: Vec<u64> = p.to_flat().iter().map(|v| v.to_bits()).collect();
        let back_bits: Vec<u64> = back.to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, back_bits);
    }

    #[test]
    fn truncated_row_reports_line() {
        let p = NetworkParams::init(&[2, 3, 1], &[false, false], 1).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[2] = lines[2].split(' ').next().unwrap().to_string();
        let err = NetworkParams::read_from(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_file_is_dependency_error() {
        let err = NetworkParams::load("/nonexistent/vinslab/value.params").unwrap_err();
        assert!(matches!(err, Error::Dependency(_)));
    }
}
