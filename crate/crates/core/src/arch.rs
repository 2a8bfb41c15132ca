//! Declarative architecture specs, shape inference, and parameter counting.
//!
//! Specs serialize to a one-layer-per-line text format
//! (`name kind(args)` after an `input HxWxC` header), so user-defined
//! networks can be supplied without code changes.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    /// `k×k` convolution, stride 1, same padding, `channels` outputs, fused ReLU.
    Conv2d { k: usize, channels: usize },
    MaxPool { d: usize, s: usize },
    Flatten,
    /// Fully connected layer with fused ReLU.
    Dense { units: usize },
    BatchNorm,
    Dropout { p: f64 },
    /// Affine map to `classes` logits followed by softmax.
    SoftmaxOutput { classes: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    /// Input image shape `(H, W, C)`.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for layer in &self.layers {
            if layer.name.is_empty() || layer.name.contains(char::is_whitespace) {
                return Err(Error::Spec(format!(
                    "layer name '{}' must be non-empty without whitespace",
                    layer.name
                )));
            }
            if !names.insert(&layer.name) {
                return Err(Error::Spec(format!("duplicate layer name '{}'", layer.name)));
            }
            match &layer.kind {
                LayerKind::Conv2d { k, channels } => {
                    if *k == 0 || k % 2 == 0 {
                        return Err(Error::Spec(format!(
                            "layer '{}': same-padding convolution needs an odd kernel, got {k}",
                            layer.name
                        )));
                    }
                    if *channels == 0 {
                        return Err(Error::Spec(format!(
                            "layer '{}': channel count must be positive",
                            layer.name
                        )));
                    }
                }
                LayerKind::MaxPool { d, s } => {
                    if *d == 0 || *s == 0 {
                        return Err(Error::Spec(format!(
                            "layer '{}': pool size and stride must be positive",
                            layer.name
                        )));
                    }
                }
                LayerKind::Dense { units } => {
                    if *units == 0 {
                        return Err(Error::Spec(format!(
                            "layer '{}': dense layer needs at least one unit",
                            layer.name
                        )));
                    }
                }
                LayerKind::Dropout { p } => {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::Spec(format!(
                            "layer '{}': dropout probability must be in [0, 1), got {p}",
                            layer.name
                        )));
                    }
                }
                LayerKind::SoftmaxOutput { classes } => {
                    if *classes < 2 {
                        return Err(Error::Spec(format!(
                            "layer '{}': output needs at least 2 classes",
                            layer.name
                        )));
                    }
                }
                LayerKind::Flatten | LayerKind::BatchNorm => {}
            }
        }
        match self.layers.last() {
            Some(last) if matches!(last.kind, LayerKind::SoftmaxOutput { .. }) => {}
            _ => {
                return Err(Error::Spec(
                    "the final layer must be a softmax output".into(),
                ))
            }
        }
        infer_shapes(self).map(|_| ())
    }

    /// One layer per line: `input HxWxC`, then `name kind(args)`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let (h, w, c) = self.input;
        writeln!(out, "input {h}x{w}x{c}").unwrap();
        for layer in &self.layers {
            let kind = match &layer.kind {
                LayerKind::Conv2d { k, channels } => format!("conv2d({k}, {channels})"),
                LayerKind::MaxPool { d, s } => format!("maxpool({d}, {s})"),
                LayerKind::Flatten => "flatten".to_string(),
                LayerKind::Dense { units } => format!("dense({units})"),
                LayerKind::BatchNorm => "batchnorm".to_string(),
                LayerKind::Dropout { p } => format!("dropout({p})"),
                LayerKind::SoftmaxOutput { classes } => format!("softmax({classes})"),
            };
            writeln!(out, "{} {}", layer.name, kind).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<ArchitectureSpec> {
        let mut input = None;
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let head = parts.next().unwrap();
            let rest = parts.next().unwrap_or("").trim();
            if input.is_none() {
                if head != "input" {
                    return Err(Error::Spec(format!(
                        "line {}: expected 'input HxWxC' first, got '{line}'",
                        lineno + 1
                    )));
                }
                let dims: Vec<usize> = rest
                    .split('x')
                    .map(|d| d.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::Spec(format!("line {}: bad input shape '{rest}'", lineno + 1))
                    })?;
                if dims.len() != 3 {
                    return Err(Error::Spec(format!(
                        "line {}: input shape needs three extents, got '{rest}'",
                        lineno + 1
                    )));
                }
                input = Some((dims[0], dims[1], dims[2]));
                continue;
            }
            let kind = parse_kind(rest)
                .map_err(|e| Error::Spec(format!("line {}: {e}", lineno + 1)))?;
            layers.push(LayerSpec {
                name: head.to_string(),
                kind,
            });
        }
        let spec = ArchitectureSpec {
            input: input.ok_or_else(|| Error::Spec("missing 'input HxWxC' line".into()))?,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_kind(s: &str) -> std::result::Result<LayerKind, String> {
    let (name, args) = match s.find('(') {
        Some(open) => {
            let close = s
                .rfind(')')
                .ok_or_else(|| format!("unbalanced parentheses in '{s}'"))?;
            (
                s[..open].trim(),
                s[open + 1..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .collect::<Vec<_>>(),
            )
        }
        None => (s.trim(), Vec::new()),
    };
    let want = |n: usize| -> std::result::Result<(), String> {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("'{name}' takes {n} argument(s), got {}", args.len()))
        }
    };
    let int = |a: &str| a.parse::<usize>().map_err(|_| format!("bad integer '{a}'"));
    match name {
        "conv2d" => {
            want(2)?;
            Ok(LayerKind::Conv2d {
                k: int(args[0])?,
                channels: int(args[1])?,
            })
        }
        "maxpool" => {
            want(2)?;
            Ok(LayerKind::MaxPool {
                d: int(args[0])?,
                s: int(args[1])?,
            })
        }
        "flatten" => {
            want(0)?;
            Ok(LayerKind::Flatten)
        }
        "dense" => {
            want(1)?;
            Ok(LayerKind::Dense {
                units: int(args[0])?,
            })
        }
        "batchnorm" => {
            want(0)?;
            Ok(LayerKind::BatchNorm)
        }
        "dropout" => {
            want(1)?;
            Ok(LayerKind::Dropout {
                p: args[0]
                    .parse::<f64>()
                    .map_err(|_| format!("bad probability '{}'", args[0]))?,
            })
        }
        "softmax" => {
            want(1)?;
            Ok(LayerKind::SoftmaxOutput {
                classes: int(args[0])?,
            })
        }
        other => Err(format!("unknown layer kind '{other}'")),
    }
}

/// The 13-convolution VGG16 body with the flat tail appended: five conv
/// blocks (64, 128, 256×3, 512×3, 512×3) each followed by MaxPool(2,2),
/// then Flatten, Dense(4096)×2, Dense(1000), BatchNorm, Dense(256),
/// Dropout(p), and a softmax output.
pub fn vgg16_spec(classes: usize, p: f64, input: (usize, usize, usize)) -> ArchitectureSpec {
    let mut layers = Vec::new();
    let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
    for (block, &(convs, channels)) in blocks.iter().enumerate() {
        for i in 0..convs {
            layers.push(LayerSpec {
                name: format!("2D-Conv_1{}{}", block + 1, i + 1),
                kind: LayerKind::Conv2d { k: 3, channels },
            });
        }
        layers.push(LayerSpec {
            name: format!("Pool_1{}", block + 1),
            kind: LayerKind::MaxPool { d: 2, s: 2 },
        });
    }
    layers.push(LayerSpec {
        name: "Flat_11".into(),
        kind: LayerKind::Flatten,
    });
    for (i, units) in [(1, 4096), (2, 4096), (3, 1000)] {
        layers.push(LayerSpec {
            name: format!("Layer_1{i}"),
            kind: LayerKind::Dense { units },
        });
    }
    layers.push(LayerSpec {
        name: "Norm_11".into(),
        kind: LayerKind::BatchNorm,
    });
    layers.push(LayerSpec {
        name: "Layer_14".into(),
        kind: LayerKind::Dense { units: 256 },
    });
    layers.push(LayerSpec {
        name: "Drop_11".into(),
        kind: LayerKind::Dropout { p },
    });
    layers.push(LayerSpec {
        name: "Out_1".into(),
        kind: LayerKind::SoftmaxOutput { classes },
    });
    ArchitectureSpec { input, layers }
}

/// VGG19 variant: VGG16 plus one extra convolution at the end of blocks
/// three, four, and five (16 convolutions total). Everything else is
/// identical to [`vgg16_spec`].
pub fn vgg19_spec(classes: usize, p: f64, input: (usize, usize, usize)) -> ArchitectureSpec {
    let mut spec = vgg16_spec(classes, p, input);
    let insertions = [
        ("2D-Conv_133", "2D-Conv_134", 256usize),
        ("2D-Conv_143", "2D-Conv_144", 512),
        ("2D-Conv_153", "2D-Conv_154", 512),
    ];
    for (after, name, channels) in insertions {
        let pos = spec
            .layers
            .iter()
            .position(|l| l.name == after)
            .expect("vgg16 layer present");
        spec.layers.insert(
            pos + 1,
            LayerSpec {
                name: name.into(),
                kind: LayerKind::Conv2d { k: 3, channels },
            },
        );
    }
    spec
}

/// Desk-scale variant for tests and demos: two conv blocks (8, 16 channels,
/// two convolutions each) and the same flat-tail structure at reduced
/// widths (64, 64, 32, BatchNorm, 16, Dropout, softmax).
pub fn mini_vgg_spec(classes: usize, p: f64, input: (usize, usize, usize)) -> ArchitectureSpec {
    let mut layers = Vec::new();
    for (block, channels) in [(1, 8usize), (2, 16)] {
        for i in 1..=2 {
            layers.push(LayerSpec {
                name: format!("2D-Conv_{block}{i}"),
                kind: LayerKind::Conv2d { k: 3, channels },
            });
        }
        layers.push(LayerSpec {
            name: format!("Pool_{block}"),
            kind: LayerKind::MaxPool { d: 2, s: 2 },
        });
    }
    layers.push(LayerSpec {
        name: "Flat_1".into(),
        kind: LayerKind::Flatten,
    });
    for (i, units) in [(1, 64), (2, 64), (3, 32)] {
        layers.push(LayerSpec {
            name: format!("Layer_{i}"),
            kind: LayerKind::Dense { units },
        });
    }
    layers.push(LayerSpec {
        name: "Norm_1".into(),
        kind: LayerKind::BatchNorm,
    });
    layers.push(LayerSpec {
        name: "Layer_4".into(),
        kind: LayerKind::Dense { units: 16 },
    });
    layers.push(LayerSpec {
        name: "Drop_1".into(),
        kind: LayerKind::Dropout { p },
    });
    layers.push(LayerSpec {
        name: "Out_1".into(),
        kind: LayerKind::SoftmaxOutput { classes },
    });
    ArchitectureSpec { input, layers }
}

/// Per-layer output shapes (without the batch dimension). Convolutions
/// preserve H×W (same padding, stride 1); pooling applies
/// `floor((H−d)/s)+1`; Flatten yields `H·W·C`.
pub fn infer_shapes(spec: &ArchitectureSpec) -> Result<Vec<Vec<usize>>> {
    let (h, w, c) = spec.input;
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Spec(format!(
            "input shape extents must be positive, got {h}x{w}x{c}"
        )));
    }
    let mut shape = vec![h, w, c];
    let mut out = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        shape = match &layer.kind {
            LayerKind::Conv2d { k, channels } => match shape.as_slice() {
                [h, w, _] => {
                    if h + 2 * ((k - 1) / 2) < *k || w + 2 * ((k - 1) / 2) < *k {
                        return Err(Error::Spec(format!(
                            "layer '{}': kernel {k} exceeds padded input {h}x{w}",
                            layer.name
                        )));
                    }
                    vec![*h, *w, *channels]
                }
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': convolution needs an [H, W, C] input, got {s:?}",
                        layer.name
                    )))
                }
            },
            LayerKind::MaxPool { d, s } => match shape.as_slice() {
                [h, w, c] if *h >= *d && *w >= *d => vec![
                    (*h - *d) / *s + 1,
                    (*w - *d) / *s + 1,
                    *c,
                ],
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': pooling needs an [H, W, C] input at least {d}x{d}, got {s:?}",
                        layer.name
                    )))
                }
            },
            LayerKind::Flatten => match shape.as_slice() {
                [h, w, c] => vec![h * w * c],
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': flatten needs an [H, W, C] input, got {s:?}",
                        layer.name
                    )))
                }
            },
            LayerKind::Dense { units } => match shape.as_slice() {
                [_] => vec![*units],
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': dense layer needs a flat input, got {s:?} (flatten first)",
                        layer.name
                    )))
                }
            },
            LayerKind::BatchNorm => match shape.as_slice() {
                [f] => vec![*f],
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': batch norm needs a flat input, got {s:?}",
                        layer.name
                    )))
                }
            },
            LayerKind::Dropout { .. } => shape,
            LayerKind::SoftmaxOutput { classes } => match shape.as_slice() {
                [_] => vec![*classes],
                s => {
                    return Err(Error::Spec(format!(
                        "layer '{}': output layer needs a flat input, got {s:?}",
                        layer.name
                    )))
                }
            },
        };
        out.push(shape.clone());
    }
    Ok(out)
}

/// One row of the parameter table.
#[derive(Clone, Debug)]
pub struct ParamCount {
    pub name: String,
    pub output_shape: Vec<usize>,
    /// Trainable parameters: conv `k²·Cin·Cout + Cout`, dense `f·n + n`,
    /// batch norm `2f` (gamma, beta).
    pub trainable: usize,
    /// Non-trainable running buffers: batch norm `2f`, zero elsewhere.
    pub buffers: usize,
}

/// Totals as `(trainable, buffers)` plus the per-layer breakdown.
pub fn count_params(spec: &ArchitectureSpec) -> Result<((usize, usize), Vec<ParamCount>)> {
    let shapes = infer_shapes(spec)?;
    let (h, w, c) = spec.input;
    let mut in_shape = vec![h, w, c];
    let mut rows = Vec::with_capacity(spec.layers.len());
    let mut trainable_total = 0usize;
    let mut buffer_total = 0usize;
    for (layer, out_shape) in spec.layers.iter().zip(&shapes) {
        let (trainable, buffers) = match &layer.kind {
            LayerKind::Conv2d { k, channels } => {
                let cin = *in_shape.last().unwrap();
                (k * k * cin * channels + channels, 0)
            }
            LayerKind::Dense { units } => {
                let f = in_shape[0];
                (f * units + units, 0)
            }
            LayerKind::SoftmaxOutput { classes } => {
                let f = in_shape[0];
                (f * classes + classes, 0)
            }
            LayerKind::BatchNorm => {
                let f = in_shape[0];
                (2 * f, 2 * f)
            }
            _ => (0, 0),
        };
        trainable_total += trainable;
        buffer_total += buffers;
        rows.push(ParamCount {
            name: layer.name.clone(),
            output_shape: out_shape.clone(),
            trainable,
            buffers,
        });
        in_shape = out_shape.clone();
    }
    Ok(((trainable_total, buffer_total), rows))
}
