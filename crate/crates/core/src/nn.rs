//! Fully connected ReLU network with a linear output layer, trained by SGD
//! with momentum on the squared residual of one selected output per sample.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} features, network expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite loss or gradient")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Layer {
        Layer { w: Array2::zeros((n_out, n_in)), b: Array1::zeros(n_out) }
    }

    fn all_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Momentum buffers, same shapes as `layers`.
    pub velocity: Vec<Layer>,
}

/// Weights plus biases for the given layer sizes.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
}

impl Network {
    /// Uniform weights in `[-b, b]` with `b = sqrt(6 / fan_in)`, which keeps
    /// activation variance steady through ReLU layers; zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Network {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|p| {
                let bound = (6.0 / p[0] as f64).sqrt();
                let w = Array2::from_shape_fn((p[1], p[0]), |_| rng.gen_range(-bound..=bound));
                Layer { w, b: Array1::zeros(p[1]) }
            })
            .collect();
        Network::from_layers(sizes.to_vec(), layers)
    }

    pub fn from_layers(sizes: Vec<usize>, layers: Vec<Layer>) -> Network {
        let velocity = sizes.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect();
        Network { sizes, layers, velocity }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.sizes)
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.input_dim() {
            return Err(NnError::Shape { expected: self.input_dim(), got });
        }
        Ok(())
    }

    /// Outputs for a batch of row-vector inputs.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w.t());
            z += &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous input");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Mean squared residual over the batch, where each sample contributes
    /// `(f(x)[a] - target)^2`, and its gradient.
    pub fn gradients(
        &self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<Layer>), NnError> {
        self.check_input(x.ncols())?;
        let n = x.nrows();
        assert!(n > 0 && actions.len() == n && targets.len() == n, "batch shape mismatch");
        let last = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w.t());
            z += &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let out = &acts[self.layers.len()];
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        let mut loss = 0.0;
        for (k, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let r = out[[k, a]] - y;
            loss += r * r;
            delta[[k, a]] = 2.0 * r / n as f64;
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(NnError::NonFinite);
        }
        let mut grads = vec![None; self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&acts[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].w);
                Zip::from(&mut prev).and(&acts[i]).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
            grads[i] = Some(Layer { w: gw, b: gb });
        }
        let grads: Vec<Layer> = grads.into_iter().map(Option::unwrap).collect();
        if !grads.iter().all(Layer::all_finite) {
            return Err(NnError::NonFinite);
        }
        Ok((loss, grads))
    }

    /// One update `v <- mu v + g; theta <- theta - eta v`. Returns the
    /// pre-update loss.
    pub fn train_step(
        &mut self,
        x: ArrayView2<f64>,
        actions: &[usize],
        targets: &[f64],
        eta: f64,
        mu: f64,
    ) -> Result<f64, NnError> {
        let (loss, grads) = self.gradients(x, actions, targets)?;
        for ((l, v), g) in self.layers.iter_mut().zip(&mut self.velocity).zip(&grads) {
            Zip::from(&mut v.w).and(&g.w).for_each(|v, &g| *v = mu * *v + g);
            Zip::from(&mut v.b).and(&g.b).for_each(|v, &g| *v = mu * *v + g);
            Zip::from(&mut l.w).and(&v.w).for_each(|w, &v| *w -= eta * v);
            Zip::from(&mut l.b).and(&v.b).for_each(|b, &v| *b -= eta * v);
        }
        Ok(loss)
    }

    /// `self <- (1 - blend) self + blend other`; `blend == 1` copies exactly.
    pub fn blend_from(&mut self, other: &Network, blend: f64) {
        for (t, o) in self.layers.iter_mut().zip(&other.layers) {
            if blend == 1.0 {
                t.w.assign(&o.w);
                t.b.assign(&o.b);
            } else {
                Zip::from(&mut t.w).and(&o.w).for_each(|t, &o| *t = (1.0 - blend) * *t + blend * o);
                Zip::from(&mut t.b).and(&o.b).for_each(|t, &o| *t = (1.0 - blend) * *t + blend * o);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Layer::all_finite)
    }
}

const MAGIC: &[u8; 4] = b"SYMQ";
const VERSION: u32 = 1;

/// Network weights with the training position they were saved at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u64,
    pub net: Network,
}

impl Checkpoint {
    /// Header (magic, version, layer sizes, seed, epoch), then per layer the
    /// row-major weights and the biases as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.net.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.net.sizes {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.net.parameter_count());
        for l in &self.net.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("not a network checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(NnError::Format(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| read_u64(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>, _>>()?;
        let seed = read_u64(&mut r)?;
        let epoch = read_u64(&mut r)?;
        let mut layers = Vec::with_capacity(n - 1);
        for p in sizes.windows(2) {
            let w = read_f64s(&mut r, p[0] * p[1])?;
            let b = read_f64s(&mut r, p[1])?;
            layers.push(Layer {
                w: Array2::from_shape_vec((p[1], p[0]), w).expect("sized read"),
                b: Array1::from_vec(b),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NnError::Format("trailing bytes".into()));
        }
        Ok(Checkpoint { seed, epoch, net: Network::from_layers(sizes, layers) })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NnError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint, NnError> {
        Checkpoint::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, NnError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
