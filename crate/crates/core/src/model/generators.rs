use std::fmt;
use std::sync::Arc;

use crate::path_calculus::{LagMeasure, Segment, MAX_SEGMENT_DIM};

/// Arguments of the `dt` generator at one node of one path.
#[derive(Debug, Clone, Copy)]
pub struct FArgs<'a> {
    pub t: f64,
    pub node: usize,
    pub path: usize,
    /// `m` values.
    pub y: &'a [f64],
    /// `m * d` values, row-major.
    pub z: &'a [f64],
    pub y_seg: Segment<'a>,
    pub z_seg: Segment<'a>,
    /// `W(t)`, `d` values.
    pub w: &'a [f64],
    pub a: f64,
    pub rho: &'a LagMeasure,
    pub m: usize,
    pub d: usize,
}

/// Arguments of the `dA` generator at one node of one path.
#[derive(Debug, Clone, Copy)]
pub struct GArgs<'a> {
    pub t: f64,
    pub node: usize,
    pub path: usize,
    pub y: &'a [f64],
    pub y_seg: Segment<'a>,
    pub w: &'a [f64],
    pub a: f64,
    pub rho_tilde: &'a LagMeasure,
    pub m: usize,
}

/// Arguments of the terminal functional for one path.
#[derive(Debug, Clone, Copy)]
pub struct TerminalArgs<'a> {
    /// Full Brownian path, node-major.
    pub w: &'a [f64],
    /// Full path of `A`.
    pub a: &'a [f64],
    pub d: usize,
    pub m: usize,
}

impl TerminalArgs<'_> {
    pub fn w_final(&self) -> &[f64] {
        &self.w[self.w.len() - self.d..]
    }

    pub fn a_final(&self) -> f64 {
        *self.a.last().expect("A has nodes")
    }
}

pub trait DriverF: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    /// Writes `m` values into `out`.
    fn eval(&self, args: &FArgs<'_>, out: &mut [f64]);
}

pub trait DriverG: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn eval(&self, args: &GArgs<'_>, out: &mut [f64]);
}

pub trait Terminal: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn eval(&self, args: &TerminalArgs<'_>, out: &mut [f64]);
}

fn row_sum(z: &[f64], j: usize, d: usize) -> f64 {
    z[j * d..(j + 1) * d].iter().sum()
}

#[derive(Debug, Clone)]
pub struct ZeroF;

impl DriverF for ZeroF {
    fn name(&self) -> &str {
        "zero"
    }
    fn eval(&self, _: &FArgs<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct ConstantF {
    pub value: f64,
}

impl DriverF for ConstantF {
    fn name(&self) -> &str {
        "constant"
    }
    fn eval(&self, _: &FArgs<'_>, out: &mut [f64]) {
        out.fill(self.value);
    }
}

/// `a y + b sum_k z_{.k} + kappa y(t - delta) + kappa_z sum_k z_{.k}(t - delta) + c`
/// when `delayed`, with the delayed values replaced by `rho`-integrals otherwise.
#[derive(Debug, Clone)]
pub struct LinearF {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub kappa_z: f64,
    pub c: f64,
    pub window: Window,
}

/// How a linear generator reads the delayed window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    None,
    /// The value at `theta = -delta`.
    Delayed,
    /// The integral against the configured lag measure.
    Integral,
}

impl DriverF for LinearF {
    fn name(&self) -> &str {
        match self.window {
            Window::None => "linear",
            Window::Delayed => "delayed-linear",
            Window::Integral => "rho-integral",
        }
    }

    fn eval(&self, args: &FArgs<'_>, out: &mut [f64]) {
        let (m, d) = (args.m, args.d);
        let mut ys = [0.0; MAX_SEGMENT_DIM];
        let mut zs = [0.0; MAX_SEGMENT_DIM];
        match self.window {
            Window::None => {}
            Window::Delayed => {
                let lags = args.y_seg.lags();
                ys[..m].copy_from_slice(args.y_seg.back(lags));
                zs[..m * d].copy_from_slice(args.z_seg.back(lags));
            }
            Window::Integral => {
                args.y_seg.integrate(args.rho, &mut ys[..m]);
                args.z_seg.integrate(args.rho, &mut zs[..m * d]);
            }
        }
        for j in 0..m {
            out[j] = self.a * args.y[j]
                + self.b * row_sum(args.z, j, d)
                + self.kappa * ys[j]
                + self.kappa_z * row_sum(&zs, j, d)
                + self.c;
        }
    }
}

/// `base + offset + sine * sin(y)`, componentwise.
#[derive(Debug, Clone)]
pub struct PerturbedF {
    pub base: Arc<dyn DriverF>,
    pub offset: f64,
    pub sine: f64,
}

impl DriverF for PerturbedF {
    fn name(&self) -> &str {
        "perturbed"
    }
    fn eval(&self, args: &FArgs<'_>, out: &mut [f64]) {
        self.base.eval(args, out);
        for (o, y) in out.iter_mut().zip(args.y) {
            *o += self.offset + self.sine * y.sin();
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZeroG;

impl DriverG for ZeroG {
    fn name(&self) -> &str {
        "zero"
    }
    fn eval(&self, _: &GArgs<'_>, out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct ConstantG {
    pub value: f64,
}

impl DriverG for ConstantG {
    fn name(&self) -> &str {
        "constant"
    }
    fn eval(&self, _: &GArgs<'_>, out: &mut [f64]) {
        out.fill(self.value);
    }
}

/// `b y + kappa * window(y) + c`.
#[derive(Debug, Clone)]
pub struct LinearG {
    pub b: f64,
    pub kappa: f64,
    pub c: f64,
    pub window: Window,
}

impl DriverG for LinearG {
    fn name(&self) -> &str {
        match self.window {
            Window::None => "linear",
            Window::Delayed => "delayed-linear",
            Window::Integral => "rho-integral",
        }
    }
    fn eval(&self, args: &GArgs<'_>, out: &mut [f64]) {
        let m = args.m;
        let mut ys = [0.0; MAX_SEGMENT_DIM];
        match self.window {
            Window::None => {}
            Window::Delayed => ys[..m].copy_from_slice(args.y_seg.back(args.y_seg.lags())),
            Window::Integral => args.y_seg.integrate(args.rho_tilde, &mut ys[..m]),
        }
        for j in 0..m {
            out[j] = self.b * args.y[j] + self.kappa * ys[j] + self.c;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedG {
    pub base: Arc<dyn DriverG>,
    pub offset: f64,
    pub sine: f64,
}

impl DriverG for PerturbedG {
    fn name(&self) -> &str {
        "perturbed"
    }
    fn eval(&self, args: &GArgs<'_>, out: &mut [f64]) {
        self.base.eval(args, out);
        for (o, y) in out.iter_mut().zip(args.y) {
            *o += self.offset + self.sine * y.sin();
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstantTerminal {
    pub value: f64,
}

impl Terminal for ConstantTerminal {
    fn name(&self) -> &str {
        "constant"
    }
    fn eval(&self, _: &TerminalArgs<'_>, out: &mut [f64]) {
        out.fill(self.value);
    }
}

/// `constant + w * W_component(T) + a * A(T)`.
#[derive(Debug, Clone)]
pub struct AffineTerminal {
    pub constant: f64,
    pub w: f64,
    pub a: f64,
    pub component: usize,
}

impl Terminal for AffineTerminal {
    fn name(&self) -> &str {
        "affine"
    }
    fn eval(&self, args: &TerminalArgs<'_>, out: &mut [f64]) {
        let v = self.constant + self.w * args.w_final()[self.component] + self.a * args.a_final();
        out.fill(v);
    }
}

/// `scale * |W(T)|^2`.
#[derive(Debug, Clone)]
pub struct WSquareTerminal {
    pub scale: f64,
}

impl Terminal for WSquareTerminal {
    fn name(&self) -> &str {
        "w-square"
    }
    fn eval(&self, args: &TerminalArgs<'_>, out: &mut [f64]) {
        let s: f64 = args.w_final().iter().map(|v| v * v).sum();
        out.fill(self.scale * s);
    }
}

/// `exp(gamma |W(T)|^2)`; heavy tailed once `gamma` approaches `1/(4T)`.
#[derive(Debug, Clone)]
pub struct ExpWSquareTerminal {
    pub gamma: f64,
}

impl Terminal for ExpWSquareTerminal {
    fn name(&self) -> &str {
        "exp-w-square"
    }
    fn eval(&self, args: &TerminalArgs<'_>, out: &mut [f64]) {
        let s: f64 = args.w_final().iter().map(|v| v * v).sum();
        out.fill((self.gamma * s).exp());
    }
}

/// `base + shift`.
#[derive(Debug, Clone)]
pub struct ShiftedTerminal {
    pub base: Arc<dyn Terminal>,
    pub shift: f64,
}

impl Terminal for ShiftedTerminal {
    fn name(&self) -> &str {
        "shifted"
    }
    fn eval(&self, args: &TerminalArgs<'_>, out: &mut [f64]) {
        self.base.eval(args, out);
        out.iter_mut().for_each(|v| *v += self.shift);
    }
}
