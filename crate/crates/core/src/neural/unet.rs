use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{self, conv_out};
use super::{NetParams, Tensor};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Architecture of the residual U-net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetDescriptor {
    pub in_channels: usize,
    pub base_channels: usize,
    /// Resolution levels; channels double at each coarser level.
    pub scales: usize,
    /// Initial bias of the output convolution.
    #[serde(default = "default_out_bias")]
    pub out_bias: f64,
    /// Replace the network by `relu(z_0 + offset)` with a per-pixel offset
    /// initialized to zero.
    #[serde(default)]
    pub bypass: bool,
}

fn default_out_bias() -> f64 {
    1.0
}

impl Default for NetDescriptor {
    fn default() -> Self {
        NetDescriptor { in_channels: 3, base_channels: 16, scales: 3, out_bias: 1.0, bypass: false }
    }
}

impl NetDescriptor {
    pub fn bypass(in_channels: usize) -> Self {
        NetDescriptor { in_channels, bypass: true, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Input,
    Select0(usize),
    Conv { x: usize, w: usize, b: usize, stride: usize },
    Norm { x: usize, g: usize, b: usize },
    LeakyRelu(usize),
    Relu(usize),
    Upsample(usize),
    Add(usize, usize),
    AddParam(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    op: Op,
    shape: [usize; 3],
}

/// Per-node instance-norm `(mean, inverse std)` pairs.
type NormStats<T> = Vec<Vec<(T, T)>>;

#[derive(Debug, Clone)]
struct Cache<T> {
    values: Vec<Vec<T>>,
    norm_stats: NormStats<T>,
    version: u64,
}

/// Residual U-net `beta(theta | z)` with a cached forward pass for
/// reverse-mode gradients.
#[derive(Debug, Clone)]
pub struct UNet<T> {
    desc: NetDescriptor,
    height: usize,
    width: usize,
    nodes: Vec<Node>,
    params: NetParams<T>,
    version: u64,
    cache: Option<Cache<T>>,
}

struct Builder<'a, T> {
    nodes: Vec<Node>,
    params: NetParams<T>,
    rng: &'a mut rng::Rng,
}

impl<T: Real> Builder<'_, T> {
    fn node(&mut self, op: Op, shape: [usize; 3]) -> usize {
        self.nodes.push(Node { op, shape });
        self.nodes.len() - 1
    }

    fn conv(&mut self, x: usize, cout: usize, stride: usize, name: &str) -> usize {
        let [cin, h, w] = self.nodes[x].shape;
        let bound = (6.0 / (cin * 9) as f64).sqrt();
        let weight: Vec<T> = (0..cout * cin * 9).map(|_| T::lit(self.rng.random_range(-bound..bound))).collect();
        let wi = self.params.push(format!("{name}.weight"), vec![cout, cin, 3, 3], weight);
        let bi = self.params.push(format!("{name}.bias"), vec![cout], vec![T::zero(); cout]);
        self.node(Op::Conv { x, w: wi, b: bi, stride }, [cout, conv_out(h, stride), conv_out(w, stride)])
    }

    /// conv, normalization, leaky ReLU
    fn block(&mut self, x: usize, cout: usize, stride: usize, name: &str) -> usize {
        let c = self.conv(x, cout, stride, &format!("{name}.conv"));
        let shape = self.nodes[c].shape;
        let g = self.params.push(format!("{name}.norm.scale"), vec![cout], vec![T::one(); cout]);
        let b = self.params.push(format!("{name}.norm.shift"), vec![cout], vec![T::zero(); cout]);
        let n = self.node(Op::Norm { x: c, g, b }, shape);
        self.node(Op::LeakyRelu(n), shape)
    }
}

impl<T: Real> UNet<T> {
    /// Builds the network for `height x width` inputs with He-uniform weights
    /// drawn from `seed`.
    pub fn new(desc: &NetDescriptor, height: usize, width: usize, seed: u64) -> Result<Self> {
        if desc.in_channels == 0 {
            return Err(Error::InvalidParameter("network needs at least one input channel".into()));
        }
        let mut g = rng::seeded(seed);
        let mut b = Builder { nodes: Vec::new(), params: NetParams::default(), rng: &mut g };
        let input = b.node(Op::Input, [desc.in_channels, height, width]);
        if desc.bypass {
            let sel = b.node(Op::Select0(input), [1, height, width]);
            let off = b.params.push("offset", vec![1, height, width], vec![T::zero(); height * width]);
            let sum = b.node(Op::AddParam(sel, off), [1, height, width]);
            b.node(Op::Relu(sum), [1, height, width]);
        } else {
            if desc.scales == 0 || desc.base_channels == 0 {
                return Err(Error::InvalidParameter("network needs at least one scale and one channel".into()));
            }
            let f = 1usize << (desc.scales - 1);
            if !height.is_multiple_of(f) || !width.is_multiple_of(f) || height < 2 * f || width < 2 * f {
                return Err(Error::InvalidParameter(format!(
                    "{height}x{width} input does not support {} resolution levels",
                    desc.scales
                )));
            }
            let ch = |l: usize| desc.base_channels << l;
            let a = b.block(input, ch(0), 1, "enc0.a");
            let mut skips = vec![b.block(a, ch(0), 1, "enc0.b")];
            for l in 1..desc.scales {
                let d = b.block(skips[l - 1], ch(l), 2, &format!("enc{l}.down"));
                skips.push(b.block(d, ch(l), 1, &format!("enc{l}.b")));
            }
            let mut h = skips[desc.scales - 1];
            for l in (0..desc.scales - 1).rev() {
                let [c, hh, ww] = b.nodes[h].shape;
                let u = b.node(Op::Upsample(h), [c, 2 * hh, 2 * ww]);
                let v = b.block(u, ch(l), 1, &format!("dec{l}.up"));
                let s = b.node(Op::Add(v, skips[l]), b.nodes[v].shape);
                h = b.block(s, ch(l), 1, &format!("dec{l}.b"));
            }
            let out = b.conv(h, 1, 1, "out");
            if let Op::Conv { b: bias, .. } = b.nodes[out].op {
                b.params.tensors[bias].data[0] = T::lit(desc.out_bias);
            }
            b.node(Op::Relu(out), [1, height, width]);
        }
        let Builder { nodes, params, .. } = b;
        Ok(UNet { desc: desc.clone(), height, width, nodes, params, version: 0, cache: None })
    }

    pub fn descriptor(&self) -> &NetDescriptor {
        &self.desc
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn params(&self) -> &NetParams<T> {
        &self.params
    }

    /// Mutable access; invalidates any cached forward pass.
    pub fn params_mut(&mut self) -> &mut NetParams<T> {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, params: NetParams<T>) -> Result<()> {
        self.params.check_layout(&params)?;
        *self.params_mut() = params;
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.params.size()
    }

    /// Same architecture and parameters in another scalar type.
    pub fn convert<U: Real>(&self) -> UNet<U> {
        UNet {
            desc: self.desc.clone(),
            height: self.height,
            width: self.width,
            nodes: self.nodes.clone(),
            params: self.params.convert(),
            version: 0,
            cache: None,
        }
    }

    fn check_input(&self, z: &Tensor<T>) -> Result<()> {
        let expect = self.nodes[0].shape;
        if z.shape != expect {
            return Err(Error::InvalidParameter(format!(
                "network input shape {:?} does not match {:?}",
                z.shape, expect
            )));
        }
        Ok(())
    }

    fn run(&self, z: &Tensor<T>) -> Result<(Vec<Vec<T>>, NormStats<T>)> {
        self.check_input(z)?;
        let p = &self.params.tensors;
        let mut values: Vec<Vec<T>> = Vec::with_capacity(self.nodes.len());
        let mut stats = vec![Vec::new(); self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match node.op {
                Op::Input => z.data.clone(),
                Op::Select0(x) => values[x][..node.shape[1] * node.shape[2]].to_vec(),
                Op::Conv { x, w, b, stride } => {
                    layers::conv2d(&values[x], self.nodes[x].shape, &p[w].data, &p[b].data, node.shape[0], stride)
                }
                Op::Norm { x, g, b } => {
                    let (y, s) = layers::instance_norm(&values[x], node.shape, &p[g].data, &p[b].data);
                    stats[i] = s;
                    y
                }
                Op::LeakyRelu(x) => layers::leaky_relu(&values[x]),
                Op::Relu(x) => layers::relu(&values[x]),
                Op::Upsample(x) => layers::upsample2x(&values[x], self.nodes[x].shape),
                Op::Add(a, b) => values[a].iter().zip(&values[b]).map(|(&u, &v)| u + v).collect(),
                Op::AddParam(x, q) => values[x].iter().zip(&p[q].data).map(|(&u, &v)| u + v).collect(),
            };
            values.push(v);
        }
        Ok((values, stats))
    }

    /// Inference pass; leaves the cache untouched.
    pub fn forward(&self, z: &Tensor<T>) -> Result<Vec<T>> {
        let (mut values, _) = self.run(z)?;
        Ok(values.pop().unwrap_or_default())
    }

    /// Forward pass that keeps the activations for [`UNet::backward`].
    pub fn forward_train(&mut self, z: &Tensor<T>) -> Result<Vec<T>> {
        let (values, norm_stats) = self.run(z)?;
        let out = values.last().cloned().unwrap_or_default();
        self.cache = Some(Cache { values, norm_stats, version: self.version });
        Ok(out)
    }

    /// Gradient of `<upstream, beta>` with respect to every parameter, at the
    /// parameters of the last [`UNet::forward_train`] call.
    pub fn backward(&self, upstream: &[T]) -> Result<NetParams<T>> {
        let cache = match &self.cache {
            Some(c) if c.version == self.version => c,
            _ => return Err(Error::MissingForwardCache),
        };
        let last = self.nodes.len() - 1;
        crate::error::check_len("upstream gradient", cache.values[last].len(), upstream.len())?;
        let p = &self.params.tensors;
        let mut grads = self.params.zeros_like();
        let mut dnode: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        dnode[last] = Some(upstream.to_vec());

        fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, g: Vec<T>) {
            match slot {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
                None => *slot = Some(g),
            }
        }

        for i in (1..self.nodes.len()).rev() {
            let Some(g) = dnode[i].take() else { continue };
            let node = self.nodes[i];
            let vals = &cache.values;
            match node.op {
                Op::Input => {}
                Op::Select0(x) => {
                    let mut full = vec![T::zero(); vals[x].len()];
                    full[..g.len()].copy_from_slice(&g);
                    accumulate(&mut dnode[x], full);
                }
                Op::Conv { x, w, b, stride } => {
                    let (dx, dw, db) =
                        layers::conv2d_backward(&vals[x], self.nodes[x].shape, &p[w].data, node.shape[0], stride, &g);
                    grads.tensors[w].data.iter_mut().zip(dw).for_each(|(a, v)| *a += v);
                    grads.tensors[b].data.iter_mut().zip(db).for_each(|(a, v)| *a += v);
                    accumulate(&mut dnode[x], dx);
                }
                Op::Norm { x, g: gi, b } => {
                    let (dx, dg, db) =
                        layers::instance_norm_backward(&vals[x], node.shape, &p[gi].data, &cache.norm_stats[i], &g);
                    grads.tensors[gi].data.iter_mut().zip(dg).for_each(|(a, v)| *a += v);
                    grads.tensors[b].data.iter_mut().zip(db).for_each(|(a, v)| *a += v);
                    accumulate(&mut dnode[x], dx);
                }
                Op::LeakyRelu(x) => accumulate(&mut dnode[x], layers::leaky_relu_backward(&vals[x], &g)),
                Op::Relu(x) => accumulate(&mut dnode[x], layers::relu_backward(&vals[x], &g)),
                Op::Upsample(x) => accumulate(&mut dnode[x], layers::upsample2x_backward(&g, self.nodes[x].shape)),
                Op::Add(a, b) => {
                    accumulate(&mut dnode[b], g.clone());
                    accumulate(&mut dnode[a], g);
                }
                Op::AddParam(x, q) => {
                    grads.tensors[q].data.iter_mut().zip(&g).for_each(|(a, &v)| *a += v);
                    accumulate(&mut dnode[x], g);
                }
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("parameter gradients"));
        }
        Ok(grads)
    }
}
