//! Partitionable DNN workload profiles.
//!
//! A profile is an ordered chain of layers with per-layer FLOP counts and
//! output sizes; index 0 is always a virtual input layer carrying the raw
//! input size and zero computation. A [`PartitionPair`] `(l1, l2)` splits a
//! profile into three tiers: layers `0..=l1` run on the device, `l1+1..=l2`
//! on the MEC server, and the rest in the cloud.
//!
//! FLOP counts are exact `u64` integers; all splits satisfy
//! `s_local + s_mec + s_cloud == total` identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer type; drives the FLOP formula and the output-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Placeholder at index 0 holding the raw input size; zero FLOPs.
    VirtualInput,
    Convolutional,
    MaxPool,
    FullyConnected,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::VirtualInput => "virtual_input",
            LayerKind::Convolutional => "convolutional",
            LayerKind::MaxPool => "max_pool",
            LayerKind::FullyConnected => "fully_connected",
        }
    }
}

/// Validated layer with resolved output size.
///
/// Convolutional/max-pool layers use `a` x `b` x `c` output feature maps and
/// filter size `d`; fully connected layers use `e` neurons. Unused fields
/// are zero. `out_bits` is the serialized activation size leaving the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub e: u64,
    pub out_bits: u64,
}

/// Raw layer entry as written in a profile document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<u64>,
}

impl Default for LayerKind {
    fn default() -> Self {
        LayerKind::VirtualInput
    }
}

/// Profile document: `{name, element_bits, layers: [{kind, a, b, c, d, e}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub name: String,
    #[serde(default = "default_element_bits")]
    pub element_bits: u64,
    pub layers: Vec<LayerDoc>,
}

fn default_element_bits() -> u64 {
    32
}

/// A validated DNN profile: layers indexed `0..=L` with layer 0 virtual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnnProfile {
    pub name: String,
    pub element_bits: u64,
    layers: Vec<LayerSpec>,
    /// Per-layer FLOPs, index-aligned with `layers`.
    flops: Vec<u64>,
    /// prefix[l] = sum of flops over layers 0..=l.
    prefix: Vec<u64>,
}

/// Three-tier workload split in FLOPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSplit {
    pub s_local: u64,
    pub s_mec: u64,
    pub s_cloud: u64,
}

/// Partition pair `(l1, l2)` with `0 <= l1 <= l2 <= L`.
///
/// `l1` is the last layer executed on the device and `l2` the last layer
/// executed at the MEC server; the ordering derives `Ord` lexicographically,
/// which the exhaustive oracle uses for deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartitionPair {
    pub l1: usize,
    pub l2: usize,
}

impl PartitionPair {
    pub fn new(l1: usize, l2: usize, last: usize) -> Result<Self> {
        if l1 > l2 || l2 > last {
            return Err(Error::PartitionOutOfRange { l1, l2, last });
        }
        Ok(Self { l1, l2 })
    }
}

/// FLOPs required by `layer` given its predecessor:
/// `(2 c_prev d^2 - 1) a b c` for convolutional, `a b c d^2` for max-pool,
/// `(2 e_prev - 1) e` for fully connected, `0` for the virtual input.
///
/// A fully connected layer after a feature-map layer consumes the flattened
/// map, so `e_prev = a b c` of the predecessor.
pub fn flops_of_layer(layer: &LayerSpec, prev: &LayerSpec) -> Result<u64> {
    match layer.kind {
        LayerKind::VirtualInput => Ok(0),
        LayerKind::Convolutional => {
            let c_prev = match prev.kind {
                LayerKind::FullyConnected => {
                    return Err(Error::Profile {
                        index: 0,
                        message: "convolutional layer cannot follow a fully connected layer"
                            .into(),
                    })
                }
                _ => prev.c,
            };
            Ok((2 * c_prev * layer.d * layer.d - 1) * layer.a * layer.b * layer.c)
        }
        LayerKind::MaxPool => {
            if prev.kind == LayerKind::FullyConnected {
                return Err(Error::Profile {
                    index: 0,
                    message: "max-pool layer cannot follow a fully connected layer".into(),
                });
            }
            Ok(layer.a * layer.b * layer.c * layer.d * layer.d)
        }
        LayerKind::FullyConnected => {
            let e_prev = match prev.kind {
                LayerKind::FullyConnected => prev.e,
                // Flattening rule: the first FC layer consumes a*b*c inputs.
                _ => prev.a * prev.b * prev.c,
            };
            if e_prev == 0 {
                return Err(Error::Profile {
                    index: 0,
                    message: "fully connected layer has no input neuron count".into(),
                });
            }
            Ok((2 * e_prev - 1) * layer.e)
        }
    }
}

impl DnnProfile {
    /// Validates a profile document and derives FLOPs and output sizes.
    pub fn from_doc(doc: &ProfileDoc) -> Result<Self> {
        if doc.layers.len() < 2 {
            return Err(Error::Profile {
                index: 0,
                message: "profile must contain the virtual input plus at least one layer".into(),
            });
        }
        if doc.element_bits == 0 {
            return Err(Error::Profile {
                index: 0,
                message: "element_bits must be positive".into(),
            });
        }
        let q = doc.element_bits;
        let mut layers: Vec<LayerSpec> = Vec::with_capacity(doc.layers.len());
        for (index, raw) in doc.layers.iter().enumerate() {
            let get = |v: Option<u64>, name: &str| -> Result<u64> {
                v.filter(|&x| x >= 1).ok_or_else(|| Error::Profile {
                    index,
                    message: format!("{} layer requires field '{name}' >= 1", raw.kind.as_str()),
                })
            };
            let spec = match raw.kind {
                LayerKind::VirtualInput => {
                    if index != 0 {
                        return Err(Error::Profile {
                            index,
                            message: "virtual input layer is only allowed at index 0".into(),
                        });
                    }
                    let (a, b, c) = (get(raw.a, "a")?, get(raw.b, "b")?, get(raw.c, "c")?);
                    LayerSpec { kind: raw.kind, a, b, c, d: 0, e: 0, out_bits: a * b * c * q }
                }
                LayerKind::Convolutional | LayerKind::MaxPool => {
                    if index == 0 {
                        return Err(Error::Profile {
                            index,
                            message: "layer 0 must be the virtual input".into(),
                        });
                    }
                    let (a, b, c, d) =
                        (get(raw.a, "a")?, get(raw.b, "b")?, get(raw.c, "c")?, get(raw.d, "d")?);
                    LayerSpec { kind: raw.kind, a, b, c, d, e: 0, out_bits: a * b * c * q }
                }
                LayerKind::FullyConnected => {
                    if index == 0 {
                        return Err(Error::Profile {
                            index,
                            message: "layer 0 must be the virtual input".into(),
                        });
                    }
                    let e = get(raw.e, "e")?;
                    LayerSpec { kind: raw.kind, a: 0, b: 0, c: 0, d: 0, e, out_bits: e * q }
                }
            };
            layers.push(spec);
        }

        let mut flops = Vec::with_capacity(layers.len());
        flops.push(0u64);
        for index in 1..layers.len() {
            let mu = flops_of_layer(&layers[index], &layers[index - 1]).map_err(|e| match e {
                Error::Profile { message, .. } => Error::Profile { index, message },
                other => other,
            })?;
            flops.push(mu);
        }
        let mut prefix = Vec::with_capacity(flops.len());
        let mut acc = 0u64;
        for &mu in &flops {
            acc = acc.checked_add(mu).ok_or_else(|| Error::Profile {
                index: 0,
                message: "total FLOPs overflow u64".into(),
            })?;
            prefix.push(acc);
        }
        if acc == 0 {
            return Err(Error::Profile {
                index: 0,
                message: "profile has zero total FLOPs".into(),
            });
        }
        Ok(Self {
            name: doc.name.clone(),
            element_bits: doc.element_bits,
            layers,
            flops,
            prefix,
        })
    }

    /// Parses a JSON profile document.
    pub fn from_json(json: &str) -> Result<Self> {
        let doc: ProfileDoc = serde_json::from_str(json)?;
        Self::from_doc(&doc)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The built-in AlexNet profile (5 convolutional, 3 max-pool, 3 fully
    /// connected layers; 227x227x3 input).
    pub fn alexnet() -> Self {
        Self::from_json(include_str!("../data/alexnet.json"))
            .expect("embedded alexnet profile is valid")
    }

    /// Keeps the virtual input plus the first `keep` computational layers.
    pub fn truncated(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.last_index() {
            return Err(Error::Profile {
                index: keep,
                message: format!(
                    "cannot truncate profile with {} layers to {keep}",
                    self.last_index()
                ),
            });
        }
        let mut out = self.clone();
        out.name = format!("{}_trunc{}", self.name, keep);
        out.layers.truncate(keep + 1);
        out.flops.truncate(keep + 1);
        out.prefix.truncate(keep + 1);
        Ok(out)
    }

    /// Index of the last layer, `L`.
    pub fn last_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// FLOPs of layer `l`.
    pub fn layer_flops(&self, l: usize) -> u64 {
        self.flops[l]
    }

    /// Output size of layer `l` in bits.
    pub fn out_bits(&self, l: usize) -> u64 {
        self.layers[l].out_bits
    }

    /// Total FLOPs over all layers.
    pub fn total_flops(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Splits the workload at `p`: device gets layers `0..=l1`, MEC gets
    /// `l1+1..=l2`, cloud gets the rest. `l1 == l2` leaves the MEC idle.
    pub fn workload_split(&self, p: PartitionPair) -> Result<WorkloadSplit> {
        let last = self.last_index();
        if p.l1 > p.l2 || p.l2 > last {
            return Err(Error::PartitionOutOfRange { l1: p.l1, l2: p.l2, last });
        }
        let s_local = self.prefix[p.l1];
        let s_mec = self.prefix[p.l2] - self.prefix[p.l1];
        let s_cloud = self.total_flops() - self.prefix[p.l2];
        Ok(WorkloadSplit { s_local, s_mec, s_cloud })
    }

    /// All pairs with `0 <= l1 <= l2 <= L` in lexicographic order;
    /// cardinality `(L+1)(L+2)/2`.
    pub fn enumerate_partitions(&self) -> Vec<PartitionPair> {
        let last = self.last_index();
        let mut pairs = Vec::with_capacity((last + 1) * (last + 2) / 2);
        for l1 in 0..=last {
            for l2 in l1..=last {
                pairs.push(PartitionPair { l1, l2 });
            }
        }
        pairs
    }
}
