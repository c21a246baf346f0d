use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which prefix of the layer stack is used, with its classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    /// First temporal convolution + batch norm.
    #[serde(rename = "CNN-I")]
    CnnI,
    /// Adds the second convolution, batch norm and ELU.
    #[serde(rename = "CNN-II")]
    CnnII,
    /// Adds pooling, dropout and the depthwise spatial convolution.
    #[serde(rename = "CNN-III")]
    CnnIII,
    /// The full stack with BiLSTM and connectivity weighting.
    #[serde(rename = "FuDNN")]
    FuDnn,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Architecture::CnnI, Architecture::CnnII, Architecture::CnnIII, Architecture::FuDnn];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::CnnI => "CNN-I",
            Architecture::CnnII => "CNN-II",
            Architecture::CnnIII => "CNN-III",
            Architecture::FuDnn => "FuDNN",
        }
    }

    /// Whether inputs are multiplied by connectivity weights.
    pub fn uses_channel_weights(self) -> bool {
        self == Architecture::FuDnn
    }

    pub(crate) fn depth(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        match norm.as_str() {
            "cnni" => Ok(Architecture::CnnI),
            "cnnii" => Ok(Architecture::CnnII),
            "cnniii" => Ok(Architecture::CnnIII),
            "fudnn" => Ok(Architecture::FuDnn),
            _ => Err(Error::Config(format!("unknown architecture {s:?}"))),
        }
    }
}

/// Hyperparameters of the layer stack. Input is `[1, n_channels, n_samples]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub conv1_maps: usize,
    pub conv1_kernel: usize,
    pub conv2_maps: usize,
    pub conv2_kernel: usize,
    pub pool_size: usize,
    pub dropout: f64,
    pub lstm_hidden: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

/// One layer descriptor, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { name: String, maps: usize, kernel: [usize; 2] },
    BatchNorm { name: String },
    Elu,
    AvgPool { kernel: [usize; 2], stride: [usize; 2] },
    Dropout { p: f64 },
    Depthwise { name: String, kernel: [usize; 2] },
    BiLstm { name: String, hidden: usize },
    GlobalAvgPool,
    Flatten,
    Dense { name: String, units: usize },
    Softmax,
}

/// Output size after one block of layers, batch axis omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub block: String,
    pub output: Vec<usize>,
}

impl NetworkSpec {
    /// Full-size stack: 40 then 80 maps, 1×50 kernels, 1×7 pooling, BiLSTM of
    /// 100 units, for 64 × 500 inputs.
    pub fn table_one(n_classes: usize) -> Self {
        NetworkSpec {
            architecture: Architecture::FuDnn,
            n_channels: 64,
            n_samples: 500,
            n_classes,
            conv1_maps: 40,
            conv1_kernel: 50,
            conv2_maps: 80,
            conv2_kernel: 50,
            pool_size: 7,
            dropout: 0.5,
            lstm_hidden: 100,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
        }
    }

    /// Same layer kinds and pooling, with far fewer maps, half-length temporal
    /// kernels (100 ms at 250 Hz) and a small recurrent layer, so that
    /// cross-validated training fits on one CPU core.
    pub fn desk(n_classes: usize) -> Self {
        NetworkSpec {
            conv1_maps: 2,
            conv2_maps: 4,
            conv1_kernel: 25,
            conv2_kernel: 25,
            lstm_hidden: 16,
            ..Self::table_one(n_classes)
        }
    }

    pub fn with_architecture(mut self, architecture: Architecture) -> Self {
        self.architecture = architecture;
        self
    }

    pub fn with_input(mut self, n_channels: usize, n_samples: usize) -> Self {
        self.n_channels = n_channels;
        self.n_samples = n_samples;
        self
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let depth = self.architecture.depth();
        let p = self.pool_size;
        let mut l = vec![
            LayerSpec::Conv { name: "conv1".into(), maps: self.conv1_maps, kernel: [1, self.conv1_kernel] },
            LayerSpec::BatchNorm { name: "bn1".into() },
        ];
        if depth >= 1 {
            l.extend([
                LayerSpec::Conv { name: "conv2".into(), maps: self.conv2_maps, kernel: [1, self.conv2_kernel] },
                LayerSpec::BatchNorm { name: "bn2".into() },
                LayerSpec::Elu,
            ]);
        }
        if depth >= 2 {
            l.extend([
                LayerSpec::AvgPool { kernel: [1, p], stride: [1, p] },
                LayerSpec::Dropout { p: self.dropout },
                LayerSpec::Depthwise { name: "depthwise".into(), kernel: [self.n_channels, 1] },
                LayerSpec::BatchNorm { name: "bn3".into() },
                LayerSpec::Elu,
            ]);
        }
        if depth >= 3 {
            l.extend([
                LayerSpec::AvgPool { kernel: [1, p], stride: [1, p] },
                LayerSpec::Dropout { p: self.dropout },
                LayerSpec::BiLstm { name: "bilstm".into(), hidden: self.lstm_hidden },
                LayerSpec::Flatten,
            ]);
        } else {
            l.extend([LayerSpec::GlobalAvgPool, LayerSpec::Flatten]);
        }
        l.extend([
            LayerSpec::Dense { name: "dense".into(), units: self.n_classes },
            LayerSpec::Softmax,
        ]);
        l
    }

    fn maps_after_convs(&self) -> usize {
        if self.architecture == Architecture::CnnI {
            self.conv1_maps
        } else {
            self.conv2_maps
        }
    }

    /// Per-sample output size of every block, computed from the descriptors.
    pub fn shape_trace(&self) -> Result<Vec<TraceRow>> {
        let bad = |m: String| Err(Error::Contract(m));
        if self.n_classes < 2 {
            return bad(format!("{} classes", self.n_classes));
        }
        if [self.n_channels, self.n_samples, self.conv1_maps, self.conv2_maps, self.pool_size, self.lstm_hidden]
            .contains(&0)
        {
            return bad("zero-sized layer".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {}", self.dropout));
        }
        let row = |block: &str, output: Vec<usize>| TraceRow { block: block.into(), output };
        let (k, depth) = (self.n_channels, self.architecture.depth());
        let mut rows = Vec::new();
        let mut t = self.n_samples;
        if self.conv1_kernel > t {
            return bad(format!("conv1 kernel {} exceeds {t} samples", self.conv1_kernel));
        }
        t = t - self.conv1_kernel + 1;
        rows.push(row("conv1", vec![self.conv1_maps, k, t]));
        if depth >= 1 {
            if self.conv2_kernel > t {
                return bad(format!("conv2 kernel {} exceeds {t} samples", self.conv2_kernel));
            }
            t = t - self.conv2_kernel + 1;
            rows.push(row("conv2", vec![self.conv2_maps, k, t]));
        }
        let pool = |t: usize| -> Result<usize> {
            if self.pool_size > t {
                return Err(Error::Contract(format!("pool {} exceeds {t} samples", self.pool_size)));
            }
            Ok((t - self.pool_size) / self.pool_size + 1)
        };
        if depth >= 2 {
            t = pool(t)?;
            rows.push(row("pool1", vec![self.conv2_maps, k, t]));
            rows.push(row("depthwise", vec![self.conv2_maps, 1, t]));
        }
        let features = if depth >= 3 {
            t = pool(t)?;
            rows.push(row("pool2", vec![self.conv2_maps, 1, t]));
            rows.push(row("bilstm", vec![t, 2 * self.lstm_hidden]));
            t * 2 * self.lstm_hidden
        } else {
            let f = self.maps_after_convs() * if depth >= 2 { 1 } else { k };
            rows.push(row("gap", vec![f]));
            f
        };
        rows.push(row("flatten", vec![1, features]));
        rows.push(row("dense", vec![1, self.n_classes]));
        Ok(rows)
    }

    /// Width of the dense layer's input.
    pub fn head_features(&self) -> Result<usize> {
        let trace = self.shape_trace()?;
        Ok(trace[trace.len() - 2].output[1])
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_trace().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.as_str().parse::<Architecture>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.as_str()));
        }
    }

    #[test]
    fn table_trace() {
        let rows = NetworkSpec::table_one(4).shape_trace().unwrap();
        let got: Vec<(&str, &[usize])> = rows.iter().map(|r| (r.block.as_str(), r.output.as_slice())).collect();
        assert_eq!(
            got,
            vec![
                ("conv1", &[40, 64, 451][..]),
                ("conv2", &[80, 64, 402][..]),
                ("pool1", &[80, 64, 57][..]),
                ("depthwise", &[80, 1, 57][..]),
                ("pool2", &[80, 1, 8][..]),
                ("bilstm", &[8, 200][..]),
                ("flatten", &[1, 1600][..]),
                ("dense", &[1, 4][..]),
            ]
        );
    }

    #[test]
    fn oversized_kernel_is_a_contract_error() {
        let spec = NetworkSpec::desk(4).with_input(64, 40);
        assert!(matches!(spec.validate(), Err(Error::Contract(_))));
    }
}
