//! Fully connected network with swish hidden activations and a linear output
//! layer, evaluated in row-major batches through `matrixmultiply`.
//!
//! Parameter order (also the checkpoint order): for each layer, the weight
//! matrix stored input-major (`w[i * out + j]` connects input `i` to output
//! `j`), followed by the bias vector.

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Floating-point types the network can run in.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    const NAME: &'static str;

    fn cast_from(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// C ← α·A·B + β·C with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const NAME: &'static str = stringify!($t);

            fn cast_from(v: f64) -> Self {
                v as $t
            }
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
                    }
                };
                assert!(rsa >= 0 && csa >= 0 && rsb >= 0 && csb >= 0 && rsc >= 0 && csc >= 0);
                assert!(a.len() >= extent(m, k, rsa, csa));
                assert!(b.len() >= extent(k, n, rsb, csb));
                assert!(c.len() >= extent(m, n, rsc, csc));
                // SAFETY: the asserts above keep every strided access in bounds.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[inline]
fn swish<T: Scalar>(z: T) -> T {
    z * sigmoid(z)
}

#[inline]
fn swish_grad<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    s + z * s * (T::one() - s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    params: Vec<T>,
}

/// Activations cached by a forward pass for the following backward pass.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    batch: usize,
    /// acts[0] is the input; acts[l + 1] is the output of layer l.
    acts: Vec<Vec<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<T>>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// LeCun-normal weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let mut params = Vec::with_capacity(Self::count_params(widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                params.push(T::cast_from(std * z));
            }
            params.resize(params.len() + fan_out, T::zero());
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn from_params(widths: &[usize], params: Vec<T>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let want = Self::count_params(widths);
        if params.len() != want {
            return Err(Error::Config(format!(
                "widths {widths:?} need {want} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn count_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// (weight offset, bias offset) of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.widths.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.widths[l] * self.widths[l + 1])
    }

    /// Zeroes the output layer, making the network the zero map.
    pub fn zero_output_layer(&mut self) {
        let last = self.num_layers() - 1;
        let (w, _) = self.layer_offsets(last);
        for p in &mut self.params[w..] {
            *p = T::zero();
        }
    }

    pub fn convert<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            widths: self.widths.clone(),
            params: self.params.iter().map(|&p| U::cast_from(p.as_f64())).collect(),
        }
    }

    /// Runs a batch of `batch` row-major inputs; the output (batch × out) is
    /// left in the workspace and returned.
    pub fn forward<'w>(&self, input: &[T], batch: usize, ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        let d_in = self.input_dim();
        if input.len() != batch * d_in {
            return Err(Error::Config(format!(
                "input of length {} is not {batch} rows of width {d_in}",
                input.len()
            )));
        }
        let layers = self.num_layers();
        ws.batch = batch;
        ws.acts.resize_with(layers + 1, Vec::new);
        ws.pre.resize_with(layers.saturating_sub(1), Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(input);
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let w = &self.params[w_off..b_off];
            let b = &self.params[b_off..b_off + n_out];
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let x = &head[l];
            let z = &mut tail[0];
            z.clear();
            z.reserve(batch * n_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            T::gemm(
                batch, n_in, n_out, T::one(), x, n_in as isize, 1, w, n_out as isize, 1, T::one(), z,
                n_out as isize, 1,
            );
            if l + 1 < layers {
                let pre = &mut ws.pre[l];
                pre.clear();
                pre.extend_from_slice(z);
                for v in z.iter_mut() {
                    *v = swish(*v);
                }
            }
        }
        Ok(&ws.acts[layers])
    }

    /// Back-propagates `d_out` (gradient w.r.t. the last forward output) and
    /// writes the parameter gradient into `grad` (overwriting it).
    pub fn backward(&self, ws: &mut Workspace<T>, d_out: &[T], grad: &mut [T]) -> Result<()> {
        let layers = self.num_layers();
        let batch = ws.batch;
        if d_out.len() != batch * self.output_dim() || grad.len() != self.params.len() {
            return Err(Error::Config("backward called with mismatched buffers".into()));
        }
        if ws.acts.len() != layers + 1 {
            return Err(Error::Config("backward called before forward".into()));
        }
        let mut delta = std::mem::take(&mut ws.grad_a);
        let mut prev = std::mem::take(&mut ws.grad_b);
        delta.clear();
        delta.extend_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            if l + 1 < layers {
                for (g, &z) in delta.iter_mut().zip(&ws.pre[l]) {
                    *g = *g * swish_grad(z);
                }
            }
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &ws.acts[l];
            let (gw, gb) = grad[w_off..b_off + n_out].split_at_mut(b_off - w_off);
            // dW = xᵀ·δ
            T::gemm(
                n_in, batch, n_out, T::one(), x, 1, n_in as isize, &delta, n_out as isize, 1, T::zero(), gw,
                n_out as isize, 1,
            );
            for (j, g) in gb.iter_mut().enumerate() {
                *g = (0..batch).map(|b| delta[b * n_out + j]).sum();
            }
            if l > 0 {
                // δ_prev = δ·Wᵀ
                let w = &self.params[w_off..b_off];
                prev.clear();
                prev.resize(batch * n_in, T::zero());
                T::gemm(
                    batch, n_out, n_in, T::one(), &delta, n_out as isize, 1, w, 1, n_out as isize, T::zero(),
                    &mut prev, n_in as isize, 1,
                );
                std::mem::swap(&mut delta, &mut prev);
            }
        }
        ws.grad_a = delta;
        ws.grad_b = prev;
        Ok(())
    }
}
