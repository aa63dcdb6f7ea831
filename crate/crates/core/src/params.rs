//! Named parameter traversal shared by the optimizer, checkpoints and
//! gradient checks.

use ndarray::{ArrayBase, Dimension, OwnedRepr};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Real;

pub struct ParamRef<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
    /// Whether decoupled weight decay applies (matrices yes, gains and biases no).
    pub decay: bool,
}

pub struct ParamMut<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [F],
    pub decay: bool,
}

/// Collects parameters in a fixed traversal order.
pub struct ParamList<'a, F> {
    prefix: String,
    items: Vec<ParamRef<'a, F>>,
}

pub struct ParamListMut<'a, F> {
    prefix: String,
    items: Vec<ParamMut<'a, F>>,
}

impl<'a, F: Real> ParamList<'a, F> {
    pub fn new() -> Self {
        Self { prefix: String::new(), items: Vec::new() }
    }

    pub fn push<D: Dimension>(&mut self, name: &str, a: &'a ArrayBase<OwnedRepr<F>, D>, decay: bool) {
        self.items.push(ParamRef {
            name: format!("{}{}", self.prefix, name),
            shape: a.shape().to_vec(),
            data: a.as_slice().expect("parameters are contiguous"),
            decay,
        });
    }

    pub fn scoped(&mut self, prefix: &str, f: impl FnOnce(&mut Self)) {
        let scoped = format!("{}{}.", self.prefix, prefix);
        let saved = std::mem::replace(&mut self.prefix, scoped);
        f(self);
        self.prefix = saved;
    }

    pub fn into_vec(self) -> Vec<ParamRef<'a, F>> {
        self.items
    }
}

impl<'a, F: Real> Default for ParamList<'a, F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, F: Real> ParamListMut<'a, F> {
    pub fn new() -> Self {
        Self { prefix: String::new(), items: Vec::new() }
    }

    pub fn push<D: Dimension>(&mut self, name: &str, a: &'a mut ArrayBase<OwnedRepr<F>, D>, decay: bool) {
        self.items.push(ParamMut {
            name: format!("{}{}", self.prefix, name),
            shape: a.shape().to_vec(),
            data: a.as_slice_mut().expect("parameters are contiguous"),
            decay,
        });
    }

    pub fn scoped(&mut self, prefix: &str, f: impl FnOnce(&mut Self)) {
        let scoped = format!("{}{}.", self.prefix, prefix);
        let saved = std::mem::replace(&mut self.prefix, scoped);
        f(self);
        self.prefix = saved;
    }

    pub fn into_vec(self) -> Vec<ParamMut<'a, F>> {
        self.items
    }
}

impl<'a, F: Real> Default for ParamListMut<'a, F> {
    fn default() -> Self {
        Self::new()
    }
}

pub trait Parameters<F: Real> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>);
    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>);

    fn params(&self) -> Vec<ParamRef<'_, F>> {
        let mut list = ParamList::new();
        self.collect_params(&mut list);
        list.into_vec()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, F>> {
        let mut list = ParamListMut::new();
        self.collect_params_mut(&mut list);
        list.into_vec()
    }

    fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn zero_(&mut self) {
        for p in self.params_mut() {
            p.data.fill(F::zero());
        }
    }

    /// `self += other`, parameter by parameter. Both must share a layout.
    fn add_(&mut self, other: &Self)
    where
        Self: Sized,
    {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            debug_assert_eq!(a.shape, b.shape);
            for (x, &y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    fn scale_(&mut self, s: F) {
        for p in self.params_mut() {
            for x in p.data.iter_mut() {
                *x *= s;
            }
        }
    }
}

/// Normal(0, std) truncated to ±2 std by rejection.
pub fn truncated_normal<F: Real, R: Rng + ?Sized>(rng: &mut R, std: f64) -> F {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let z: f64 = normal.sample(rng);
        if z.abs() <= 2.0 {
            return F::of(z * std);
        }
    }
}
