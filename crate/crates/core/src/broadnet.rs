//! Random feature and enhancement mappings that turn raw inputs into the
//! state matrix `U = [Z, H]`.
//!
//! Every random tensor is drawn from its own ChaCha stream, keyed by the basis
//! seed and a tag naming the tensor, so a basis can be rebuilt bit-for-bit from
//! `(Architecture, seed)` and extensions never disturb existing tensors.

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Shape of a broad network: `k` feature groups of `q` nodes and `m`
/// enhancement groups of `r` nodes over `input_dim` inputs and `output_dim`
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    input_dim: usize,
    output_dim: usize,
    feature_groups: usize,
    feature_nodes: usize,
    enhancement_groups: usize,
    enhancement_nodes: usize,
    feature_activation: Activation,
    enhancement_activation: Activation,
}

impl Architecture {
    /// Identity feature mapping and `tanh` enhancement nodes.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        feature_groups: usize,
        feature_nodes: usize,
        enhancement_groups: usize,
        enhancement_nodes: usize,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            output_dim,
            feature_groups,
            feature_nodes,
            enhancement_groups,
            enhancement_nodes,
            feature_activation: Activation::Identity,
            enhancement_activation: Activation::Tanh,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_activations(mut self, feature: Activation, enhancement: Activation) -> Result<Self> {
        self.feature_activation = feature;
        self.enhancement_activation = enhancement;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dim", self.input_dim),
            ("output_dim", self.output_dim),
            ("feature groups (k)", self.feature_groups),
            ("feature nodes per group (q)", self.feature_nodes),
            ("enhancement groups (m)", self.enhancement_groups),
            ("enhancement nodes per group (r)", self.enhancement_nodes),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        if self.enhancement_activation == Activation::Identity {
            return Err(Error::InvalidParameter(
                "enhancement activation must be tanh or sigmoid".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn feature_groups(&self) -> usize {
        self.feature_groups
    }

    pub fn feature_nodes(&self) -> usize {
        self.feature_nodes
    }

    pub fn enhancement_groups(&self) -> usize {
        self.enhancement_groups
    }

    pub fn enhancement_nodes(&self) -> usize {
        self.enhancement_nodes
    }

    pub fn feature_activation(&self) -> Activation {
        self.feature_activation
    }

    pub fn enhancement_activation(&self) -> Activation {
        self.enhancement_activation
    }

    /// Total hidden width `L = k*q + m*r`.
    pub fn width(&self) -> usize {
        self.feature_groups * self.feature_nodes + self.enhancement_groups * self.enhancement_nodes
    }
}

/// Sampling ranges for random weights and biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitRanges {
    pub weight: (f64, f64),
    pub bias: (f64, f64),
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            weight: (-1.0, 1.0),
            bias: (0.0, 1.0),
        }
    }
}

/// An affine map `x * weights + bias`, with one bias per node shared by all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    #[serde(with = "crate::persist::matrix")]
    pub weights: DMatrix<f64>,
    #[serde(with = "crate::persist::row")]
    pub bias: RowDVector<f64>,
}

impl Projection {
    fn sample(inputs: usize, outputs: usize, ranges: &InitRanges, seed: u64, tag: Tag) -> Self {
        let mut rng = tensor_rng(seed, tag.weights());
        let (lo, hi) = ranges.weight;
        let weights = DMatrix::from_fn(inputs, outputs, |_, _| rng.random_range(lo..=hi));
        let mut rng = tensor_rng(seed, tag.bias());
        let (lo, hi) = ranges.bias;
        let bias = RowDVector::from_fn(outputs, |_, _| rng.random_range(lo..=hi));
        Self { weights, bias }
    }

    pub fn nodes(&self) -> usize {
        self.weights.ncols()
    }

    fn forward(&self, input: &DMatrix<f64>, activation: Activation) -> DMatrix<f64> {
        let mut out = input * &self.weights;
        for mut row in out.row_iter_mut() {
            row += &self.bias;
        }
        if activation != Activation::Identity {
            out.apply(|v| *v = activation.apply(*v));
        }
        out
    }
}

/// Which feature columns an enhancement group reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// The first `n` feature groups, concatenated.
    Leading(usize),
    /// A single feature group (the extension nodes of an added group).
    Group(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementGroup {
    pub source: Source,
    pub projection: Projection,
}

/// One column block of the state matrix, in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Feature(usize),
    Enhancement(usize),
}

/// The frozen random weights and biases of a broad network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBasis {
    input_dim: usize,
    feature_nodes: usize,
    feature_activation: Activation,
    enhancement_activation: Activation,
    /// Shape `(m, r)` of the extension enhancement nodes created with each added feature group.
    extension_shape: (usize, usize),
    ranges: InitRanges,
    seed: u64,
    feature_groups: Vec<Projection>,
    enhancement_groups: Vec<EnhancementGroup>,
    layout: Vec<Block>,
}

/// Hidden representation of a batch of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub values: DMatrix<f64>,
    pub feature_block_width: usize,
    pub enhancement_block_width: usize,
}

impl StateMatrix {
    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

pub fn init_basis(arch: &Architecture, seed: u64) -> RandomBasis {
    RandomBasis::new(arch, seed)
}

impl RandomBasis {
    pub fn new(arch: &Architecture, seed: u64) -> Self {
        Self::with_ranges(arch, seed, InitRanges::default())
    }

    pub fn with_ranges(arch: &Architecture, seed: u64, ranges: InitRanges) -> Self {
        let k = arch.feature_groups;
        let q = arch.feature_nodes;
        let feature_groups = (0..k)
            .map(|i| Projection::sample(arch.input_dim, q, &ranges, seed, Tag::feature(i)))
            .collect();
        let enhancement_groups = (0..arch.enhancement_groups)
            .map(|j| EnhancementGroup {
                source: Source::Leading(k),
                projection: Projection::sample(
                    k * q,
                    arch.enhancement_nodes,
                    &ranges,
                    seed,
                    Tag::enhancement(j),
                ),
            })
            .collect();
        let layout = (0..k)
            .map(Block::Feature)
            .chain((0..arch.enhancement_groups).map(Block::Enhancement))
            .collect();
        Self {
            input_dim: arch.input_dim,
            feature_nodes: q,
            feature_activation: arch.feature_activation,
            enhancement_activation: arch.enhancement_activation,
            extension_shape: (arch.enhancement_groups, arch.enhancement_nodes),
            ranges,
            seed,
            feature_groups,
            enhancement_groups,
            layout,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_groups(&self) -> &[Projection] {
        &self.feature_groups
    }

    pub fn enhancement_groups(&self) -> &[EnhancementGroup] {
        &self.enhancement_groups
    }

    /// Enhancement groups created alongside added feature groups.
    pub fn extension_groups(&self) -> impl Iterator<Item = &EnhancementGroup> {
        self.enhancement_groups
            .iter()
            .filter(|g| matches!(g.source, Source::Group(_)))
    }

    pub fn layout(&self) -> &[Block] {
        &self.layout
    }

    pub fn feature_width(&self) -> usize {
        self.feature_groups.len() * self.feature_nodes
    }

    pub fn enhancement_width(&self) -> usize {
        self.enhancement_groups.iter().map(|g| g.projection.nodes()).sum()
    }

    /// Current hidden width `L`.
    pub fn width(&self) -> usize {
        self.feature_width() + self.enhancement_width()
    }

    fn block_width(&self, block: Block) -> usize {
        match block {
            Block::Feature(_) => self.feature_nodes,
            Block::Enhancement(j) => self.enhancement_groups[j].projection.nodes(),
        }
    }

    /// Concatenated feature groups `Z = [phi(X We_1 + b_1), ..., phi(X We_k + b_k)]`.
    pub fn feature_nodes(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("feature_nodes (input columns)", self.input_dim, x.ncols())?;
        let q = self.feature_nodes;
        let mut z = DMatrix::zeros(x.nrows(), self.feature_width());
        for (i, group) in self.feature_groups.iter().enumerate() {
            z.columns_mut(i * q, q)
                .copy_from(&group.forward(x, self.feature_activation));
        }
        Ok(z)
    }

    /// All enhancement groups (in creation order) evaluated on the feature block `z`.
    pub fn enhancement_nodes(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("enhancement_nodes (feature columns)", self.feature_width(), z.ncols())?;
        let mut h = DMatrix::zeros(z.nrows(), self.enhancement_width());
        let mut col = 0;
        for j in 0..self.enhancement_groups.len() {
            let block = self.enhancement_block(z, j);
            h.columns_mut(col, block.ncols()).copy_from(&block);
            col += block.ncols();
        }
        Ok(h)
    }

    fn enhancement_block(&self, z: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
        let group = &self.enhancement_groups[j];
        let q = self.feature_nodes;
        let input = match group.source {
            Source::Leading(n) => z.columns(0, n * q).into_owned(),
            Source::Group(i) => z.columns(i * q, q).into_owned(),
        };
        group.projection.forward(&input, self.enhancement_activation)
    }

    /// `U = [Z, H]` following the basis layout.
    pub fn state_matrix(&self, x: &DMatrix<f64>) -> Result<StateMatrix> {
        let values = self.columns_from(x, 0)?;
        Ok(StateMatrix {
            values,
            feature_block_width: self.feature_width(),
            enhancement_block_width: self.enhancement_width(),
        })
    }

    /// Columns of the layout blocks from index `first_block` onward.
    pub fn columns_from(&self, x: &DMatrix<f64>, first_block: usize) -> Result<DMatrix<f64>> {
        let z = self.feature_nodes(x)?;
        let blocks = &self.layout[first_block.min(self.layout.len())..];
        let width = blocks.iter().map(|&b| self.block_width(b)).sum();
        let q = self.feature_nodes;
        let mut out = DMatrix::zeros(x.nrows(), width);
        let mut col = 0;
        for &block in blocks {
            let w = self.block_width(block);
            match block {
                Block::Feature(i) => out.columns_mut(col, w).copy_from(&z.columns(i * q, q)),
                Block::Enhancement(j) => out
                    .columns_mut(col, w)
                    .copy_from(&self.enhancement_block(&z, j)),
            }
            col += w;
        }
        Ok(out)
    }

    /// Appends one group of `p` enhancement nodes reading every current feature group.
    pub fn extend_enhancement(&self, p: usize, seed: u64) -> Result<RandomBasis> {
        if p == 0 {
            return Err(Error::InvalidParameter(
                "enhancement increment needs at least one node".into(),
            ));
        }
        let mut next = self.clone();
        let j = next.enhancement_groups.len();
        next.enhancement_groups.push(EnhancementGroup {
            source: Source::Leading(self.feature_groups.len()),
            projection: Projection::sample(
                self.feature_width(),
                p,
                &self.ranges,
                seed,
                Tag::enhancement(j),
            ),
        });
        next.layout.push(Block::Enhancement(j));
        Ok(next)
    }

    /// Appends feature group `k+1` and its `m` extension enhancement groups,
    /// which read only the new feature group.
    pub fn extend_feature(&self, seed: u64) -> RandomBasis {
        let mut next = self.clone();
        let i = next.feature_groups.len();
        next.feature_groups.push(Projection::sample(
            self.input_dim,
            self.feature_nodes,
            &self.ranges,
            seed,
            Tag::feature(i),
        ));
        next.layout.push(Block::Feature(i));
        let (m, r) = self.extension_shape;
        for e in 0..m {
            let j = next.enhancement_groups.len();
            next.enhancement_groups.push(EnhancementGroup {
                source: Source::Group(i),
                projection: Projection::sample(
                    self.feature_nodes,
                    r,
                    &self.ranges,
                    seed,
                    Tag::extension(i, e),
                ),
            });
            next.layout.push(Block::Enhancement(j));
        }
        next
    }

    /// Number of layout blocks; new blocks from an extension start here.
    pub fn block_count(&self) -> usize {
        self.layout.len()
    }
}

pub fn extend_basis_enhancement(basis: &RandomBasis, p: usize, seed: u64) -> Result<RandomBasis> {
    basis.extend_enhancement(p, seed)
}

pub fn extend_basis_feature(basis: &RandomBasis, seed: u64) -> RandomBasis {
    basis.extend_feature(seed)
}

/// Stream tag of a random tensor: `kind << 48 | group << 16 | index`.
#[derive(Clone, Copy)]
struct Tag(u64);

impl Tag {
    const FEATURE: u64 = 1;
    const ENHANCEMENT: u64 = 2;
    const EXTENSION: u64 = 3;

    fn new(kind: u64, group: usize, index: usize) -> Self {
        Tag((kind << 48) | ((group as u64) << 16) | index as u64)
    }

    fn feature(i: usize) -> Self {
        Self::new(Self::FEATURE, i, 0)
    }

    fn enhancement(j: usize) -> Self {
        Self::new(Self::ENHANCEMENT, j, 0)
    }

    fn extension(feature_group: usize, e: usize) -> Self {
        Self::new(Self::EXTENSION, feature_group, e)
    }

    // weights and biases occupy even and odd streams of the same tag
    fn weights(self) -> u64 {
        self.0 << 1
    }

    fn bias(self) -> u64 {
        (self.0 << 1) | 1
    }
}

fn tensor_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::new(3, 1, 2, 2, 1, 3).unwrap()
    }

    fn sample_x() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            3,
            &[
                0.1, -0.4, 0.9, //
                1.2, 0.3, -0.7, //
                -0.5, 0.8, 0.2, //
                0.0, -1.1, 0.6,
            ],
        )
    }

    #[test]
    fn architecture_rejects_zero_counts() {
        assert!(Architecture::new(3, 1, 0, 2, 1, 3).is_err());
        assert!(Architecture::new(3, 0, 1, 2, 1, 3).is_err());
        assert!(arch()
            .with_activations(Activation::Tanh, Activation::Identity)
            .is_err());
    }

    #[test]
    fn init_shapes() {
        let arch = Architecture::new(3, 1, 1, 2, 1, 3).unwrap();
        let basis = init_basis(&arch, 7);
        assert_eq!(basis.feature_groups()[0].weights.shape(), (3, 2));
        assert_eq!(basis.feature_groups()[0].bias.len(), 2);
        assert_eq!(basis.enhancement_groups()[0].projection.weights.shape(), (2, 3));
        assert_eq!(basis.width(), 5);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_basis(&arch(), 7);
        assert_eq!(a, init_basis(&arch(), 7));
        assert_ne!(a, init_basis(&arch(), 8));
    }

    #[test]
    fn draws_respect_ranges() {
        let basis = init_basis(&Architecture::new(5, 1, 4, 6, 2, 10).unwrap(), 3);
        for g in basis.feature_groups() {
            assert!(g.weights.iter().all(|w| (-1.0..=1.0).contains(w)));
            assert!(g.bias.iter().all(|b| (0.0..=1.0).contains(b)));
        }
    }

    #[test]
    fn identity_projection_reproduces_input() {
        let arch = Architecture::new(3, 1, 1, 3, 1, 2).unwrap();
        let mut basis = init_basis(&arch, 1);
        basis.feature_groups[0].weights = DMatrix::identity(3, 3);
        basis.feature_groups[0].bias = RowDVector::zeros(3);
        let x = sample_x();
        assert_eq!(basis.feature_nodes(&x).unwrap(), x);
    }

    #[test]
    fn zero_row_stays_zero_under_tanh() {
        let arch = arch()
            .with_activations(Activation::Tanh, Activation::Tanh)
            .unwrap();
        let mut basis = init_basis(&arch, 1);
        for g in &mut basis.feature_groups {
            g.bias.fill(0.0);
        }
        let z = basis.feature_nodes(&DMatrix::zeros(1, 3)).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn enhancement_of_zero_is_zero_without_bias() {
        let mut basis = init_basis(&arch(), 5);
        basis.enhancement_groups[0].projection.bias.fill(0.0);
        let h = basis.enhancement_nodes(&DMatrix::zeros(3, 4)).unwrap();
        assert_eq!(h, DMatrix::zeros(3, 3));
    }

    /// Scalar-loop evaluation of both node families.
    #[test]
    fn nodes_match_scalar_loops() {
        let arch = arch()
            .with_activations(Activation::Sigmoid, Activation::Tanh)
            .unwrap();
        let basis = init_basis(&arch, 11);
        let x = sample_x();
        let z = basis.feature_nodes(&x).unwrap();
        for n in 0..4 {
            for (i, g) in basis.feature_groups().iter().enumerate() {
                for c in 0..2 {
                    let mut acc = g.bias[c];
                    for d in 0..3 {
                        acc += x[(n, d)] * g.weights[(d, c)];
                    }
                    let expected = 1.0 / (1.0 + (-acc).exp());
                    assert!((z[(n, i * 2 + c)] - expected).abs() < 1e-14);
                }
            }
        }
        let h = basis.enhancement_nodes(&z).unwrap();
        let g = &basis.enhancement_groups()[0].projection;
        for n in 0..4 {
            for c in 0..3 {
                let mut acc = g.bias[c];
                for d in 0..4 {
                    acc += z[(n, d)] * g.weights[(d, c)];
                }
                assert!((h[(n, c)] - acc.tanh()).abs() < 1e-14);
                assert!(h[(n, c)].abs() < 1.0);
            }
        }
    }

    #[test]
    fn state_matrix_blocks() {
        let basis = init_basis(&Architecture::new(3, 1, 1, 2, 1, 3).unwrap(), 2);
        let x = sample_x();
        let u = basis.state_matrix(&x).unwrap();
        assert_eq!(u.values.ncols(), 5);
        assert_eq!(u.feature_block_width, 2);
        assert_eq!(u.values.columns(0, 2), basis.feature_nodes(&x).unwrap());
        let z = basis.feature_nodes(&x).unwrap();
        assert_eq!(u.values.columns(2, 3), basis.enhancement_nodes(&z).unwrap());

        let empty = basis.state_matrix(&DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(empty.values.shape(), (0, 5));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let basis = init_basis(&arch(), 2);
        assert!(matches!(
            basis.state_matrix(&DMatrix::zeros(2, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(basis.enhancement_nodes(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn enhancement_extension_keeps_existing_tensors() {
        let basis = init_basis(&arch(), 4);
        let before = basis.clone();
        let ext = basis.extend_enhancement(3, 99).unwrap();
        assert_eq!(basis, before);
        assert_eq!(&ext.enhancement_groups()[..1], basis.enhancement_groups());
        assert_eq!(ext.enhancement_groups()[1].projection.weights.shape(), (4, 3));
        assert_eq!(ext.width(), basis.width() + 3);
        assert_eq!(ext, basis.extend_enhancement(3, 99).unwrap());
        assert_ne!(ext, basis.extend_enhancement(3, 100).unwrap());
        assert!(basis.extend_enhancement(0, 1).is_err());
    }

    #[test]
    fn feature_extension_adds_group_and_extension_nodes() {
        let basis = init_basis(&arch(), 4);
        let ext = basis.extend_feature(21);
        assert_eq!(ext.feature_groups().len(), 3);
        assert_eq!(&ext.feature_groups()[..2], basis.feature_groups());
        let extensions: Vec<_> = ext.extension_groups().collect();
        assert_eq!(extensions.len(), 1);
        assert_eq!(extensions[0].source, Source::Group(2));
        assert_eq!(extensions[0].projection.weights.shape(), (2, 3));
        assert_eq!(ext.width(), basis.width() + 2 + 3);
        assert_eq!(ext, basis.extend_feature(21));

        // new columns are appended after the old layout and read only the new group
        let x = sample_x();
        let old = basis.state_matrix(&x).unwrap().values;
        let new = ext.state_matrix(&x).unwrap().values;
        assert_eq!(new.columns(0, old.ncols()), old);
        let z_new = ext.feature_nodes(&x).unwrap().columns(4, 2).into_owned();
        let g = &extensions[0].projection;
        let mut h_ex = &z_new * &g.weights;
        for mut row in h_ex.row_iter_mut() {
            row += &g.bias;
        }
        h_ex.apply(|v| *v = v.tanh());
        assert_eq!(new.columns(old.ncols(), 2), z_new);
        assert_eq!(new.columns(old.ncols() + 2, 3), h_ex);
        assert_eq!(ext.columns_from(&x, basis.block_count()).unwrap(), new.columns(old.ncols(), 5));
    }
}
