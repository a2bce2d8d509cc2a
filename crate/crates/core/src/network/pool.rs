use std::marker::PhantomData;

use super::{missing, par_map, Buffer, Param, Pass};
use crate::error::{Error, Result};
use crate::layers::pool::{Pool2d, PoolRoute};
use crate::real::Real;
use crate::tensor::QTensor;

#[derive(Debug, Clone)]
pub struct PoolLayer<T> {
    pool: Pool2d,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    routes: Option<Vec<PoolRoute>>,
    _marker: PhantomData<T>,
}

impl<T: Real> PoolLayer<T> {
    pub fn new(pool: Pool2d, in_shape: &[usize]) -> Result<Self> {
        Ok(Self {
            pool,
            in_shape: in_shape.to_vec(),
            out_shape: pool.output_shape(in_shape)?,
            routes: None,
            _marker: PhantomData,
        })
    }

    pub fn pool(&self) -> Pool2d {
        self.pool
    }

    pub(crate) fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub(crate) fn params(&self) -> &[Param<T>] {
        &[]
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut []
    }

    pub(crate) fn buffers(&self) -> Vec<Buffer<T>> {
        Vec::new()
    }

    pub(crate) fn set_buffer(&mut self, name: &str, _value: &QTensor<T>) -> Result<()> {
        Err(Error::invalid(format!("pooling layer has no buffer {name}")))
    }

    pub(crate) fn clear_cache(&mut self) {
        self.routes = None;
    }

    pub(crate) fn forward(&mut self, batch: Vec<QTensor<T>>, pass: Pass, sig: &mut Vec<u32>) -> Result<Vec<QTensor<T>>> {
        let pool = self.pool;
        let res = par_map(&batch, |x| pool.forward(x))?;
        let (out, routes): (Vec<_>, Vec<_>) = res.into_iter().unzip();
        if pass.signature {
            for r in &routes {
                sig.extend(r.sources.iter().flatten().map(|&s| s as u32));
            }
        }
        if pass.records() {
            self.routes = Some(routes);
        }
        Ok(out)
    }

    pub(crate) fn backward(&mut self, d: Vec<QTensor<T>>) -> Result<Vec<QTensor<T>>> {
        let routes = self.routes.take().ok_or_else(|| missing("pool"))?;
        if routes.len() != d.len() {
            return Err(Error::shape("error batch size does not match the cached forward pass"));
        }
        let pairs: Vec<(&PoolRoute, &QTensor<T>)> = routes.iter().zip(&d).collect();
        par_map(&pairs, |&(r, db)| self.pool.backward(&self.in_shape, r, db))
    }
}
