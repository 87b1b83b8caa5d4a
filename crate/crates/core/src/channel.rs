//! Random channel realizations, symbol extension and relay deactivation.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Tolerance};
use crate::rng::{complex_gaussian_matrix, random_unitary, streams, trial_rng};
use crate::wire::WireMatrix;

/// Antenna counts, user count, symbol extension and seed of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Antennas per user.
    pub m: usize,
    /// Relay antennas.
    pub n: usize,
    /// Number of users.
    pub k: usize,
    /// Symbol-extension factor (channel uses stacked block-diagonally).
    pub extension: usize,
    pub seed: u64,
    pub tol: Tolerance,
    /// Repeat one draw on every extension slot instead of drawing per slot.
    pub identical_blocks: bool,
}

impl SystemConfig {
    pub fn new(m: usize, n: usize, k: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            m,
            n,
            k,
            extension: 1,
            seed,
            tol: Tolerance::default(),
            identical_blocks: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_extension(mut self, extension: usize) -> Result<Self> {
        self.extension = extension;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(Error::InvalidConfig(format!("K must be at least 3, got {}", self.k)));
        }
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidConfig(format!(
                "antenna counts must be positive, got M={}, N={}",
                self.m, self.n
            )));
        }
        if self.extension == 0 {
            return Err(Error::InvalidConfig("extension factor must be positive".into()));
        }
        Tolerance::new(self.tol.rank_rel, self.tol.leakage_abs)?;
        Ok(())
    }
}

/// Uplink matrices `H_k` (relay x user) and downlink matrices `G_k`
/// (user x relay) for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub extension: usize,
    pub uplink: Vec<ComplexMatrix>,
    pub downlink: Vec<ComplexMatrix>,
    /// Relay dimensions still in use, at most `n * extension`.
    pub active_relay: usize,
}

fn block_diagonal(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Draws every matrix with i.i.d. CN(0, 1) entries.
///
/// Draw order on the channel stream: for each extension slot, `H_1 .. H_K`
/// then `G_1 .. G_K`. With `identical_blocks` only the first slot is drawn.
pub fn sample_channel_set(cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, streams::CHANNELS);
    let slots = if cfg.identical_blocks { 1 } else { cfg.extension };
    let mut up_blocks: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); cfg.k];
    let mut down_blocks: Vec<Vec<ComplexMatrix>> = vec![Vec::new(); cfg.k];
    for _ in 0..slots {
        for blocks in up_blocks.iter_mut() {
            blocks.push(complex_gaussian_matrix(&mut rng, cfg.n, cfg.m));
        }
        for blocks in down_blocks.iter_mut() {
            blocks.push(complex_gaussian_matrix(&mut rng, cfg.m, cfg.n));
        }
    }
    let expand = |blocks: Vec<ComplexMatrix>| {
        if cfg.identical_blocks {
            block_diagonal(&vec![blocks[0].clone(); cfg.extension])
        } else {
            block_diagonal(&blocks)
        }
    };
    Ok(ChannelSet {
        m: cfg.m,
        n: cfg.n,
        k: cfg.k,
        extension: cfg.extension,
        uplink: up_blocks.into_iter().map(expand).collect(),
        downlink: down_blocks.into_iter().map(expand).collect(),
        active_relay: cfg.n * cfg.extension,
    })
}

impl ChannelSet {
    /// Extended user dimension `M * extension`.
    pub fn user_dim(&self) -> usize {
        self.m * self.extension
    }

    /// Transposed downlink channels `G_k^T`, which have the uplink shape.
    pub fn downlink_transposed(&self) -> Vec<ComplexMatrix> {
        self.downlink.iter().map(|g| g.transpose()).collect()
    }

    fn check_request(&self, n_active: usize) -> Result<()> {
        if n_active == 0 || n_active > self.active_relay {
            return Err(Error::InvalidDeactivation {
                requested: n_active,
                available: self.active_relay,
            });
        }
        Ok(())
    }
}

/// Keeps the first `n_active` relay antennas: uplink rows and downlink
/// columns beyond the prefix are dropped.
pub fn deactivate_relay_antennas(ch: &ChannelSet, n_active: usize) -> Result<ChannelSet> {
    ch.check_request(n_active)?;
    Ok(ChannelSet {
        uplink: ch.uplink.iter().map(|h| h.rows(0, n_active).into_owned()).collect(),
        downlink: ch.downlink.iter().map(|g| g.columns(0, n_active).into_owned()).collect(),
        active_relay: n_active,
        ..ch.clone()
    })
}

/// Restricts the relay to a random `n_active`-dimensional subspace of its
/// extended signal space: the relay receives through `D` and transmits
/// through `D^H`, where `D` has orthonormal rows drawn from `seed`.
///
/// Under symbol extension a coordinate (row-prefix) selection concentrates
/// every group's nullspace on the shortened slots, so fractional deactivation
/// uses this form instead.
pub fn restrict_relay_subspace(ch: &ChannelSet, n_active: usize, seed: u64) -> Result<ChannelSet> {
    ch.check_request(n_active)?;
    let q = random_unitary(&mut trial_rng(seed, streams::RELAY_SUBSPACE), ch.active_relay);
    let d = q.rows(0, n_active).into_owned();
    let d_h = d.adjoint();
    Ok(ChannelSet {
        uplink: ch.uplink.iter().map(|h| &d * h).collect(),
        downlink: ch.downlink.iter().map(|g| g * &d_h).collect(),
        active_relay: n_active,
        ..ch.clone()
    })
}

#[derive(Serialize, Deserialize)]
struct WireChannelSet {
    m: usize,
    n: usize,
    k: usize,
    ext: usize,
    active_relay: usize,
    uplink: Vec<WireMatrix>,
    downlink: Vec<WireMatrix>,
}

impl Serialize for ChannelSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WireChannelSet {
            m: self.m,
            n: self.n,
            k: self.k,
            ext: self.extension,
            active_relay: self.active_relay,
            uplink: self.uplink.iter().map(WireMatrix::from).collect(),
            downlink: self.downlink.iter().map(WireMatrix::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChannelSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = WireChannelSet::deserialize(d)?;
        let to = |v: Vec<WireMatrix>| {
            v.into_iter()
                .map(|m| m.into_matrix().map_err(D::Error::custom))
                .collect::<std::result::Result<Vec<_>, _>>()
        };
        let ch = ChannelSet {
            m: w.m,
            n: w.n,
            k: w.k,
            extension: w.ext,
            active_relay: w.active_relay,
            uplink: to(w.uplink)?,
            downlink: to(w.downlink)?,
        };
        if ch.uplink.len() != ch.k || ch.downlink.len() != ch.k {
            return Err(D::Error::custom("matrix count does not match k"));
        }
        let up = (ch.active_relay, ch.m * ch.extension);
        if ch.uplink.iter().any(|h| h.shape() != up)
            || ch.downlink.iter().any(|g| g.shape() != (up.1, up.0))
        {
            return Err(D::Error::custom("matrix shape does not match m, n, ext"));
        }
        Ok(ch)
    }
}
