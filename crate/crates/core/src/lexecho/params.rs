use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, FormatError, Result};

/// Sizes of every tensor in the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HeadDims {
    /// Encoder hidden size.
    pub d_l: usize,
    /// Connector MLP width.
    pub d_h: usize,
    /// Embedding size of the English head.
    pub d_e: usize,
    /// English vocabulary size.
    pub v_e: usize,
    /// Source tokenizer vocabulary size.
    pub source_vocab: usize,
}

impl Default for HeadDims {
    fn default() -> Self {
        Self {
            d_l: 16,
            d_h: 16,
            d_e: 12,
            v_e: 64,
            source_vocab: 96,
        }
    }
}

impl HeadDims {
    pub fn num_params(&self) -> usize {
        self.groups().last().map_or(0, |(_, r)| r.end)
    }

    /// Named parameter groups in declared (and serialized) order, as ranges
    /// into the flat parameter vector.
    pub fn groups(&self) -> Vec<(&'static str, Range<usize>)> {
        let sizes = [
            ("connector_w1", self.d_l * self.d_h),
            ("connector_b1", self.d_h),
            ("proj_w", self.d_h * self.d_e),
            ("proj_b", self.d_e),
            ("ln_gamma", self.d_e),
            ("ln_beta", self.d_e),
            ("decoder_e", self.v_e * self.d_e),
            ("decoder_b", self.v_e),
            ("echo_e", self.d_e),
            ("echo_b", 1),
        ];
        let mut start = 0;
        sizes
            .into_iter()
            .map(|(name, len)| {
                let r = start..start + len;
                start += len;
                (name, r)
            })
            .collect()
    }
}

/// How encoder states reach the English head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectorMode {
    /// MLP, linear projection and layer norm.
    #[default]
    Mlp,
    /// Hidden states are zero-padded or truncated to `d_e` and fed to the
    /// decoder directly. Connector weights are carried but unused.
    Bypass,
}

/// Every trainable tensor of the head. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub connector_w1: Array2<f64>,
    pub connector_b1: Array1<f64>,
    pub proj_w: Array2<f64>,
    pub proj_b: Array1<f64>,
    pub ln_gamma: Array1<f64>,
    pub ln_beta: Array1<f64>,
    /// `|V_e| x d_e`; row `j` embeds English token `j`.
    pub decoder_e: Array2<f64>,
    pub decoder_b: Array1<f64>,
    pub echo_e: Array1<f64>,
    pub echo_b: f64,
    pub connector: ConnectorMode,
    pub source_vocab: usize,
}

impl HeadParams {
    pub fn zeros(dims: HeadDims) -> Self {
        Self {
            connector_w1: Array2::zeros((dims.d_l, dims.d_h)),
            connector_b1: Array1::zeros(dims.d_h),
            proj_w: Array2::zeros((dims.d_h, dims.d_e)),
            proj_b: Array1::zeros(dims.d_e),
            ln_gamma: Array1::zeros(dims.d_e),
            ln_beta: Array1::zeros(dims.d_e),
            decoder_e: Array2::zeros((dims.v_e, dims.d_e)),
            decoder_b: Array1::zeros(dims.v_e),
            echo_e: Array1::zeros(dims.d_e),
            echo_b: 0.0,
            connector: ConnectorMode::Mlp,
            source_vocab: dims.source_vocab,
        }
    }

    /// Scaled-Gaussian initialization; layer-norm gain starts at one and the
    /// ECHO bias at one, so source weights start out mostly active.
    pub fn init(dims: HeadDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |rows: usize, cols: usize, fan_in: usize| {
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut rng))
        };
        let connector_w1 = gauss(dims.d_l, dims.d_h, dims.d_l);
        let proj_w = gauss(dims.d_h, dims.d_e, dims.d_h);
        let decoder_e = gauss(dims.v_e, dims.d_e, dims.d_e);
        let echo_e = gauss(1, dims.d_e, dims.d_e).row(0).to_owned();
        Self {
            connector_w1,
            proj_w,
            ln_gamma: Array1::ones(dims.d_e),
            decoder_e,
            echo_e,
            echo_b: 1.0,
            ..Self::zeros(dims)
        }
    }

    pub fn with_connector(mut self, mode: ConnectorMode) -> Self {
        self.connector = mode;
        self
    }

    pub fn dims(&self) -> HeadDims {
        HeadDims {
            d_l: self.connector_w1.nrows(),
            d_h: self.connector_w1.ncols(),
            d_e: self.proj_w.ncols(),
            v_e: self.decoder_e.nrows(),
            source_vocab: self.source_vocab,
        }
    }

    /// Checks the tensors agree with each other and hold only finite values.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        let shapes = [
            ("connector_b1", self.connector_b1.len(), d.d_h),
            ("proj_w rows", self.proj_w.nrows(), d.d_h),
            ("proj_b", self.proj_b.len(), d.d_e),
            ("ln_gamma", self.ln_gamma.len(), d.d_e),
            ("ln_beta", self.ln_beta.len(), d.d_e),
            ("decoder_e cols", self.decoder_e.ncols(), d.d_e),
            ("decoder_b", self.decoder_b.len(), d.v_e),
            ("echo_e", self.echo_e.len(), d.d_e),
        ];
        for (context, actual, expected) in shapes {
            if actual != expected {
                return Err(Error::Shape {
                    context,
                    expected: expected.to_string(),
                    actual: actual.to_string(),
                });
            }
        }
        if !self.to_flat().iter().all(|x| x.is_finite()) {
            return Err(Error::Config("head parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// All parameters in declared field order, matrices row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims().num_params());
        out.extend(self.connector_w1.iter());
        out.extend(self.connector_b1.iter());
        out.extend(self.proj_w.iter());
        out.extend(self.proj_b.iter());
        out.extend(self.ln_gamma.iter());
        out.extend(self.ln_beta.iter());
        out.extend(self.decoder_e.iter());
        out.extend(self.decoder_b.iter());
        out.extend(self.echo_e.iter());
        out.push(self.echo_b);
        out
    }

    pub fn from_flat(dims: HeadDims, connector: ConnectorMode, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.num_params() {
            return Err(Error::Shape {
                context: "flat head parameters",
                expected: dims.num_params().to_string(),
                actual: flat.len().to_string(),
            });
        }
        let mut params = Self::zeros(dims).with_connector(connector);
        params.assign_flat(flat);
        Ok(params)
    }

    fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        let mut fill = |slice: &mut dyn Iterator<Item = &mut f64>| {
            for x in slice {
                *x = it.next().expect("length checked");
            }
        };
        fill(&mut self.connector_w1.iter_mut());
        fill(&mut self.connector_b1.iter_mut());
        fill(&mut self.proj_w.iter_mut());
        fill(&mut self.proj_b.iter_mut());
        fill(&mut self.ln_gamma.iter_mut());
        fill(&mut self.ln_beta.iter_mut());
        fill(&mut self.decoder_e.iter_mut());
        fill(&mut self.decoder_b.iter_mut());
        fill(&mut self.echo_e.iter_mut());
        fill(&mut std::iter::once(&mut self.echo_b));
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &HeadParams) {
        self.connector_w1.scaled_add(alpha, &other.connector_w1);
        self.connector_b1.scaled_add(alpha, &other.connector_b1);
        self.proj_w.scaled_add(alpha, &other.proj_w);
        self.proj_b.scaled_add(alpha, &other.proj_b);
        self.ln_gamma.scaled_add(alpha, &other.ln_gamma);
        self.ln_beta.scaled_add(alpha, &other.ln_beta);
        self.decoder_e.scaled_add(alpha, &other.decoder_e);
        self.decoder_b.scaled_add(alpha, &other.decoder_b);
        self.echo_e.scaled_add(alpha, &other.echo_e);
        self.echo_b += alpha * other.echo_b;
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    /// Header line, then every parameter as a little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dims();
        let mut out = format!("{} {} {} {} {}", d.d_l, d.d_h, d.d_e, d.v_e, d.source_vocab).into_bytes();
        if self.connector == ConnectorMode::Bypass {
            out.extend_from_slice(b" bypass");
        }
        out.push(b'\n');
        for x in self.to_flat() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(FormatError::Truncated("parameter header"))?;
        let header = std::str::from_utf8(&bytes[..newline]).map_err(|e| FormatError::Malformed {
            what: "parameter header",
            detail: e.to_string(),
        })?;
        let mut fields = header.split_whitespace();
        let mut dim = |name: &'static str| -> Result<usize> {
            fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| {
                    FormatError::Malformed {
                        what: "parameter header",
                        detail: format!("missing or invalid {name}"),
                    }
                    .into()
                })
        };
        let dims = HeadDims {
            d_l: dim("d_l")?,
            d_h: dim("d_h")?,
            d_e: dim("d_e")?,
            v_e: dim("v_e")?,
            source_vocab: dim("source_vocab")?,
        };
        let connector = match fields.next() {
            None => ConnectorMode::Mlp,
            Some("bypass") => ConnectorMode::Bypass,
            Some(other) => {
                return Err(FormatError::Malformed {
                    what: "parameter header",
                    detail: format!("unknown flag {other:?}"),
                }
                .into())
            }
        };
        let body = &bytes[newline + 1..];
        let expected = dims.num_params() * 8;
        if body.len() < expected {
            return Err(FormatError::Truncated("parameter body").into());
        }
        if body.len() > expected {
            return Err(FormatError::Malformed {
                what: "parameter body",
                detail: format!("{} trailing bytes", body.len() - expected),
            }
            .into());
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let params = Self::from_flat(dims, connector, &flat)?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Frozen stand-in for the multilingual encoder: an embedding table plus a
/// moving-average window.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    /// `source_vocab x d_l`.
    pub embeddings: Array2<f64>,
    pub radius: usize,
}

impl ToyEncoderParams {
    pub fn from_seed(seed: u64, source_vocab: usize, d_l: usize, radius: usize) -> Self {
        // Offset keeps the encoder stream independent of head initialization
        // when both derive from one user seed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x656e_636f_6465_72);
        let normal = Normal::new(0.0, 1.0).expect("valid std");
        Self {
            embeddings: Array2::from_shape_simple_fn((source_vocab, d_l), || normal.sample(&mut rng)),
            radius,
        }
    }

    pub fn for_dims(seed: u64, dims: HeadDims) -> Self {
        Self::from_seed(seed, dims.source_vocab, dims.d_l, 1)
    }

    pub fn source_vocab(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn d_l(&self) -> usize {
        self.embeddings.ncols()
    }
}
