//! One group network: a conv stack per input volume, a shared trunk over the
//! concatenated features, and geometry and semantic heads.
//!
//! Every stack is an entry convolution followed by residual blocks
//! `relu(conv3(relu(conv3(x))) + conv1(x))`. Branch entries are 3³ and the
//! trunk entry is a 1³ fuse, so a two-input network has 32 convolutions and a
//! three-input one 42. The regression head adds the observed distance
//! `|TSDF|` to its output, so an untrained network starts out copying the scan.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::head::HeadMode;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::ops::{concat_channels, relu_backward, relu_in_place, split_channels};
use crate::nn::{Conv3d, Scalar, Tensor5};
use crate::volume::{NUM_CLASSES, TRUNCATION};

/// Residual blocks per stack.
pub const BLOCKS_PER_STACK: usize = 3;

/// Input volumes a network can read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Partial scan TSDF at the current level, scaled to `[-1, 1]`.
    Tsdf,
    /// Upsampled previous-level TDF plus one-hot labels.
    PreviousLevel,
    /// Earlier-group TDF, one-hot labels and a predicted mask.
    PreviousGroup,
}

impl InputKind {
    pub fn channels(self) -> usize {
        match self {
            InputKind::Tsdf => 1,
            InputKind::PreviousLevel => 1 + NUM_CLASSES,
            InputKind::PreviousGroup => 2 + NUM_CLASSES,
        }
    }

    /// The inputs of a level network, with or without coarser conditioning.
    pub fn for_level(conditioned: bool) -> Vec<InputKind> {
        if conditioned {
            vec![InputKind::Tsdf, InputKind::PreviousLevel, InputKind::PreviousGroup]
        } else {
            vec![InputKind::Tsdf, InputKind::PreviousGroup]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub branch: usize,
    pub trunk: usize,
}

/// Tensors fed to one forward pass, all of equal batch and spatial size.
#[derive(Clone, Debug)]
pub struct NetInputs<T> {
    pub tsdf: Tensor5<T>,
    pub previous_level: Option<Tensor5<T>>,
    pub previous_group: Tensor5<T>,
}

impl<T: Scalar> NetInputs<T> {
    fn get(&self, kind: InputKind) -> Option<&Tensor5<T>> {
        match kind {
            InputKind::Tsdf => Some(&self.tsdf),
            InputKind::PreviousLevel => self.previous_level.as_ref(),
            InputKind::PreviousGroup => Some(&self.previous_group),
        }
    }
}

/// Raw head outputs: geometry (1 channel or one per bin) and class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct NetOutput<T> {
    pub geometry: Tensor5<T>,
    pub semantics: Tensor5<T>,
}

#[derive(Clone, Debug, PartialEq)]
struct ResBlock<T> {
    first: Conv3d<T>,
    second: Conv3d<T>,
    shortcut: Conv3d<T>,
}

struct BlockCache<T> {
    hidden: Tensor5<T>,
    out: Tensor5<T>,
}

impl<T: Scalar> ResBlock<T> {
    fn init(c_in: usize, c: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            first: Conv3d::init(c_in, c, 3, rng)?,
            second: Conv3d::init(c, c, 3, rng)?,
            shortcut: Conv3d::init(c_in, c, 1, rng)?,
        })
    }

    fn forward(&self, x: &Tensor5<T>) -> Result<BlockCache<T>> {
        let mut hidden = self.first.forward(x)?;
        relu_in_place(&mut hidden);
        let mut out = self.second.forward(&hidden)?;
        out.add_assign(&self.shortcut.forward(x)?)?;
        relu_in_place(&mut out);
        Ok(BlockCache { hidden, out })
    }

    fn backward(&self, x: &Tensor5<T>, cache: &BlockCache<T>, dy: &Tensor5<T>, grads: &mut Self) -> Result<Tensor5<T>> {
        let d_sum = relu_backward(&cache.out, dy);
        let d_hidden = self.second.backward(&cache.hidden, &d_sum, &mut grads.second)?;
        let d_hidden = relu_backward(&cache.hidden, &d_hidden);
        let mut dx = self.first.backward(x, &d_hidden, &mut grads.first)?;
        dx.add_assign(&self.shortcut.backward(x, &d_sum, &mut grads.shortcut)?)?;
        Ok(dx)
    }

    fn convs(&self) -> [&Conv3d<T>; 3] {
        [&self.first, &self.second, &self.shortcut]
    }

    fn convs_mut(&mut self) -> [&mut Conv3d<T>; 3] {
        [&mut self.first, &mut self.second, &mut self.shortcut]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stack<T> {
    entry: Conv3d<T>,
    blocks: Vec<ResBlock<T>>,
}

struct StackCache<T> {
    entry: Tensor5<T>,
    blocks: Vec<BlockCache<T>>,
}

impl<T: Scalar> StackCache<T> {
    fn output(&self) -> &Tensor5<T> {
        self.blocks.last().map_or(&self.entry, |b| &b.out)
    }
}

impl<T: Scalar> Stack<T> {
    fn init(c_in: usize, c: usize, entry_kernel: usize, rng: &mut impl Rng) -> Result<Self> {
        let entry = Conv3d::init(c_in, c, entry_kernel, rng)?;
        let blocks = (0..BLOCKS_PER_STACK).map(|_| ResBlock::init(c, c, rng)).collect::<Result<_>>()?;
        Ok(Self { entry, blocks })
    }

    fn forward(&self, x: &Tensor5<T>) -> Result<StackCache<T>> {
        let mut entry = self.entry.forward(x)?;
        relu_in_place(&mut entry);
        let mut blocks: Vec<BlockCache<T>> = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let c = b.forward(blocks.last().map_or(&entry, |p| &p.out))?;
            blocks.push(c);
        }
        Ok(StackCache { entry, blocks })
    }

    /// Backpropagates into `grads`; returns the input gradient if asked.
    fn backward(&self, x: &Tensor5<T>, cache: &StackCache<T>, dy: &Tensor5<T>, grads: &mut Self, want_input: bool) -> Result<Option<Tensor5<T>>> {
        let mut d = dy.clone();
        for i in (0..self.blocks.len()).rev() {
            let input = if i == 0 { &cache.entry } else { &cache.blocks[i - 1].out };
            d = self.blocks[i].backward(input, &cache.blocks[i], &d, &mut grads.blocks[i])?;
        }
        let d = relu_backward(&cache.entry, &d);
        if want_input {
            Ok(Some(self.entry.backward(x, &d, &mut grads.entry)?))
        } else {
            self.entry.backward_params(x, &d, &mut grads.entry)?;
            Ok(None)
        }
    }

    fn convs(&self) -> Vec<&Conv3d<T>> {
        std::iter::once(&self.entry).chain(self.blocks.iter().flat_map(|b| b.convs())).collect()
    }

    fn convs_mut(&mut self) -> Vec<&mut Conv3d<T>> {
        std::iter::once(&mut self.entry).chain(self.blocks.iter_mut().flat_map(|b| b.convs_mut())).collect()
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T> {
    branches: Vec<StackCache<T>>,
    fused: Tensor5<T>,
    trunk: StackCache<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupNetwork<T> {
    inputs: Vec<InputKind>,
    widths: Widths,
    head: HeadMode,
    branches: Vec<Stack<T>>,
    trunk: Stack<T>,
    geometry: Conv3d<T>,
    semantics: Conv3d<T>,
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    inputs: Vec<InputKind>,
    widths: Widths,
    head: HeadMode,
}

impl<T: Scalar> GroupNetwork<T> {
    /// Random initialization. The regression head starts at the truncation
    /// distance, i.e. "everything is far from a surface".
    pub fn new(inputs: Vec<InputKind>, widths: Widths, head: HeadMode, rng: &mut impl Rng) -> Result<Self> {
        head.validate()?;
        if inputs.is_empty() || inputs.iter().filter(|&&k| k == InputKind::Tsdf).count() != 1 {
            return Err(Error::InvalidParam("a network reads exactly one TSDF input".into()));
        }
        if widths.branch == 0 || widths.trunk == 0 {
            return Err(Error::InvalidParam("channel widths must be positive".into()));
        }
        let branches = inputs
            .iter()
            .map(|k| Stack::init(k.channels(), widths.branch, 3, rng))
            .collect::<Result<Vec<_>>>()?;
        let trunk = Stack::init(widths.branch * inputs.len(), widths.trunk, 1, rng)?;
        let geometry = Conv3d::init(widths.trunk, head.geometry_channels(), 1, rng)?;
        let semantics = Conv3d::init(widths.trunk, NUM_CLASSES, 1, rng)?;
        Ok(Self {
            inputs,
            widths,
            head,
            branches,
            trunk,
            geometry,
            semantics,
        })
    }

    pub fn inputs(&self) -> &[InputKind] {
        &self.inputs
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn head(&self) -> HeadMode {
        self.head
    }

    pub fn conditioned(&self) -> bool {
        self.inputs.contains(&InputKind::PreviousLevel)
    }

    /// Radius in voxels of the region that can influence one output voxel.
    pub fn receptive_radius(&self) -> usize {
        // shortcuts run in parallel with the 3³ pairs, so only the longest path counts
        let path = |s: &Stack<T>| s.entry.kernel / 2 + s.blocks.len() * 2;
        self.branches.iter().map(path).max().unwrap_or(0) + path(&self.trunk)
    }

    pub fn conv_count(&self) -> usize {
        self.convs().len()
    }

    pub fn convs(&self) -> Vec<&Conv3d<T>> {
        let mut v: Vec<&Conv3d<T>> = self.branches.iter().flat_map(|b| b.convs()).collect();
        v.extend(self.trunk.convs());
        v.push(&self.geometry);
        v.push(&self.semantics);
        v
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv3d<T>> {
        let mut v: Vec<&mut Conv3d<T>> = self.branches.iter_mut().flat_map(|b| b.convs_mut()).collect();
        v.extend(self.trunk.convs_mut());
        v.push(&mut self.geometry);
        v.push(&mut self.semantics);
        v
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    /// A same-shaped network with all parameters zero, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for c in z.convs_mut() {
            c.weight.fill(T::zero());
            c.bias.fill(T::zero());
        }
        z
    }

    /// Lengths of every parameter tensor, in [`Self::params_mut`] order.
    pub fn param_sizes(&self) -> Vec<usize> {
        self.convs().iter().flat_map(|c| [c.weight.len(), c.bias.len()]).collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.convs().into_iter().flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.convs_mut()
            .into_iter()
            .flat_map(|c| {
                let Conv3d { weight, bias, .. } = c;
                [weight.as_mut_slice(), bias.as_mut_slice()]
            })
            .collect()
    }

    fn gather<'a>(&self, x: &'a NetInputs<T>) -> Result<Vec<&'a Tensor5<T>>> {
        if x.previous_level.is_some() != self.conditioned() {
            return Err(if self.conditioned() {
                Error::MissingInput("previous-level prediction")
            } else {
                Error::InvalidParam("previous-level input given to an unconditioned network".into())
            });
        }
        let mut out = Vec::with_capacity(self.inputs.len());
        for &k in &self.inputs {
            let t = x.get(k).ok_or(Error::MissingInput("network input"))?;
            if t.shape().c != k.channels() {
                return Err(Error::DimMismatch(format!("{k:?} input has {} channels, expected {}", t.shape().c, k.channels())));
            }
            if !t.shape().same_spatial(&x.tsdf.shape()) {
                return Err(Error::DimMismatch(format!("{k:?} input does not match the TSDF extent")));
            }
            out.push(t);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &NetInputs<T>) -> Result<NetOutput<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &NetInputs<T>) -> Result<(NetOutput<T>, ForwardCache<T>)> {
        let inputs = self.gather(x)?;
        let branches = self.branches.iter().zip(&inputs).map(|(b, t)| b.forward(t)).collect::<Result<Vec<_>>>()?;
        let feats: Vec<&Tensor5<T>> = branches.iter().map(|c| c.output()).collect();
        let fused = concat_channels(&feats)?;
        let trunk = self.trunk.forward(&fused)?;
        let t = trunk.output();
        let mut geometry = self.geometry.forward(t)?;
        if self.head == HeadMode::Deterministic {
            // regression predicts a correction to the observed distance |TSDF|
            let scale = T::of(TRUNCATION as f64);
            for (g, v) in geometry.data_mut().iter_mut().zip(x.tsdf.data()) {
                *g += v.abs() * scale;
            }
        }
        let out = NetOutput {
            geometry,
            semantics: self.semantics.forward(t)?,
        };
        Ok((out, ForwardCache { branches, fused, trunk }))
    }

    /// Accumulates parameter gradients for the given head-output gradients.
    pub fn backward(&self, x: &NetInputs<T>, cache: &ForwardCache<T>, d_out: &NetOutput<T>, grads: &mut Self) -> Result<()> {
        let inputs = self.gather(x)?;
        let t = cache.trunk.output();
        let mut dt = self.geometry.backward(t, &d_out.geometry, &mut grads.geometry)?;
        dt.add_assign(&self.semantics.backward(t, &d_out.semantics, &mut grads.semantics)?)?;
        let d_fused = self
            .trunk
            .backward(&cache.fused, &cache.trunk, &dt, &mut grads.trunk, true)?
            .expect("trunk input gradient");
        let sizes = vec![self.widths.branch; self.branches.len()];
        let parts = split_channels(&d_fused, &sizes)?;
        for (i, d) in parts.iter().enumerate() {
            self.branches[i].backward(inputs[i], &cache.branches[i], d, &mut grads.branches[i], false)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut c = Checkpoint {
            meta: serde_json::to_value(NetworkMeta {
                inputs: self.inputs.clone(),
                widths: self.widths,
                head: self.head,
            })?,
            ..Default::default()
        };
        for (i, conv) in self.convs().into_iter().enumerate() {
            let k = conv.kernel;
            c.push(
                format!("conv{i}.weight"),
                vec![conv.out_channels, conv.in_channels, k, k, k],
                conv.weight.iter().map(|v| v.as_f64() as f32).collect(),
            )?;
            c.push(format!("conv{i}.bias"), vec![conv.out_channels], conv.bias.iter().map(|v| v.as_f64() as f32).collect())?;
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let meta: NetworkMeta = serde_json::from_value(c.meta.clone())?;
        // the random draw is overwritten below
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(meta.inputs, meta.widths, meta.head, &mut rng)?;
        for (i, conv) in net.convs_mut().into_iter().enumerate() {
            for (suffix, dst) in [("weight", &mut conv.weight), ("bias", &mut conv.bias)] {
                let (_, values) = c.get(&format!("conv{i}.{suffix}"))?;
                if values.len() != dst.len() {
                    return Err(Error::format("checkpoint", format!("conv{i}.{suffix} has {} values, expected {}", values.len(), dst.len())));
                }
                dst.iter_mut().zip(values).for_each(|(d, &v)| *d = T::of(v as f64));
            }
        }
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> GroupNetwork<U> {
        let conv = |c: &Conv3d<T>| Conv3d {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            weight: c.weight.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: c.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        };
        let stack = |s: &Stack<T>| Stack {
            entry: conv(&s.entry),
            blocks: s
                .blocks
                .iter()
                .map(|b| ResBlock {
                    first: conv(&b.first),
                    second: conv(&b.second),
                    shortcut: conv(&b.shortcut),
                })
                .collect(),
        };
        GroupNetwork {
            inputs: self.inputs.clone(),
            widths: self.widths,
            head: self.head,
            branches: self.branches.iter().map(stack).collect(),
            trunk: stack(&self.trunk),
            geometry: conv(&self.geometry),
            semantics: conv(&self.semantics),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape5;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn widths() -> Widths {
        Widths { branch: 3, trunk: 4 }
    }

    fn random_inputs(rng: &mut ChaCha8Rng, conditioned: bool, [d, h, w]: [usize; 3]) -> NetInputs<f64> {
        let mut t = |c: usize| {
            let s = Shape5::new(1, c, d, h, w);
            Tensor5::from_vec(s, (0..s.count()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        NetInputs {
            tsdf: t(1),
            previous_level: conditioned.then(|| t(13)),
            previous_group: t(14),
        }
    }

    #[test]
    fn conv_budget_and_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = GroupNetwork::<f32>::new(InputKind::for_level(false), widths(), HeadMode::Deterministic, &mut rng).unwrap();
        let cond = GroupNetwork::<f32>::new(InputKind::for_level(true), widths(), HeadMode::Deterministic, &mut rng).unwrap();
        assert_eq!(base.conv_count(), 32);
        assert_eq!(cond.conv_count(), 42);
        // branch: entry 1 + three blocks of two 3³ convs; trunk: three blocks
        assert_eq!(base.receptive_radius(), 1 + 6 + 6);
        assert_eq!(cond.receptive_radius(), 13);
    }

    #[test]
    fn missing_conditioning_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = GroupNetwork::<f64>::new(InputKind::for_level(true), widths(), HeadMode::Deterministic, &mut rng).unwrap();
        let x = random_inputs(&mut rng, false, [4, 4, 4]);
        assert!(matches!(net.forward(&x), Err(Error::MissingInput(_))));
        let flat = GroupNetwork::<f64>::new(InputKind::for_level(false), widths(), HeadMode::Deterministic, &mut rng).unwrap();
        assert!(flat.forward(&random_inputs(&mut rng, true, [4, 4, 4])).is_err());
    }

    #[test]
    fn output_extent_follows_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = GroupNetwork::<f64>::new(InputKind::for_level(false), widths(), HeadMode::Probabilistic { bins: 8 }, &mut rng).unwrap();
        for ext in [[2, 3, 4], [4, 6, 8]] {
            let y = net.forward(&random_inputs(&mut rng, false, ext)).unwrap();
            assert_eq!(y.geometry.shape(), Shape5::new(1, 8, ext[0], ext[1], ext[2]));
            assert_eq!(y.semantics.shape(), Shape5::new(1, 12, ext[0], ext[1], ext[2]));
        }
    }

    #[test]
    fn constant_weights_on_constant_input_give_constant_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = GroupNetwork::<f64>::new(InputKind::for_level(false), widths(), HeadMode::Deterministic, &mut rng).unwrap();
        for c in net.convs_mut() {
            c.weight.fill(0.01);
            c.bias.fill(0.02);
        }
        // zero padding breaks the symmetry near edges, so compare the interior
        let big = NetInputs {
            tsdf: Tensor5::filled(Shape5::new(1, 1, 40, 40, 40), 0.5),
            previous_level: None,
            previous_group: Tensor5::filled(Shape5::new(1, 14, 40, 40, 40), 0.25),
        };
        let y = net.forward(&big).unwrap();
        let r = net.receptive_radius();
        let g = y.geometry.data();
        let at = |z: usize, yy: usize, xx: usize| g[(z * 40 + yy) * 40 + xx];
        let c = at(20, 20, 20);
        for z in r..40 - r {
            for yy in r..40 - r {
                for xx in r..40 - r {
                    assert!((at(z, yy, xx) - c).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = GroupNetwork::<f64>::new(InputKind::for_level(true), Widths { branch: 2, trunk: 3 }, HeadMode::Probabilistic { bins: 8 }, &mut rng).unwrap();
        let x = random_inputs(&mut rng, true, [3, 3, 3]);
        let y0 = net.forward(&x).unwrap();
        let rg: Vec<f64> = (0..y0.geometry.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rs: Vec<f64> = (0..y0.semantics.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &GroupNetwork<f64>| {
            let y = n.forward(&x).unwrap();
            y.geometry.data().iter().zip(&rg).map(|(a, b)| a * b).sum::<f64>() + y.semantics.data().iter().zip(&rs).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = net.forward_cached(&x).unwrap();
        let d = NetOutput {
            geometry: Tensor5::from_vec(y0.geometry.shape(), rg.clone()).unwrap(),
            semantics: Tensor5::from_vec(y0.semantics.shape(), rs.clone()).unwrap(),
        };
        let mut grads = net.zeros_like();
        net.backward(&x, &cache, &d, &mut grads).unwrap();
        let analytic: Vec<f64> = grads.params().iter().flat_map(|p| p.iter().copied()).collect();
        let n_params = analytic.len();
        let h = 1e-6;
        // spot-check a spread of parameters across all layers
        for k in (0..n_params).step_by(n_params / 60 + 1) {
            let perturb = |delta: f64| {
                let mut n = net.clone();
                let mut seen = 0;
                for p in n.params_mut() {
                    if k < seen + p.len() {
                        p[k - seen] += delta;
                        break;
                    }
                    seen += p.len();
                }
                loss(&n)
            };
            let fd = (perturb(h) - perturb(-h)) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-6);
            assert!(err < 1e-5, "param {k}: fd {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = GroupNetwork::<f32>::new(InputKind::for_level(true), widths(), HeadMode::Probabilistic { bins: 16 }, &mut rng).unwrap();
        let back = GroupNetwork::<f32>::from_checkpoint(&Checkpoint::from_bytes(&net.to_checkpoint().unwrap().to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
