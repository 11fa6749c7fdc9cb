//! Name-keyed constructors for every pluggable component: generators,
//! terminal conditions, increasing processes and Helly–Bray path sequences.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::generators::*;
use crate::stability_lab::sequences::*;
use crate::stochastic_engine::{
    IncreasingProcess, IntegralPositiveA, LinearA, OscillatoryA, PowerA, RunningMaxA,
};

/// `{ "kind": <registered name>, "params": { ... } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl ComponentSpec {
    pub fn new(kind: &str, params: Value) -> Self {
        Self {
            kind: kind.to_string(),
            params,
        }
    }

    pub fn bare(kind: &str) -> Self {
        Self::new(kind, Value::Null)
    }
}

type Ctor<T> = Arc<dyn Fn(&Value, &Registry) -> Result<Arc<T>> + Send + Sync>;

/// Strategy registry; [`Registry::with_builtins`] ships the standard library
/// and `register_*` adds user plugins under new names.
#[derive(Clone)]
pub struct Registry {
    f: BTreeMap<String, Ctor<dyn DriverF>>,
    g: BTreeMap<String, Ctor<dyn DriverG>>,
    terminal: BTreeMap<String, Ctor<dyn Terminal>>,
    increasing: BTreeMap<String, Ctor<dyn IncreasingProcess>>,
    sequence: BTreeMap<String, Ctor<dyn PathSequence>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("f", &self.f.keys().collect::<Vec<_>>())
            .field("g", &self.g.keys().collect::<Vec<_>>())
            .field("terminal", &self.terminal.keys().collect::<Vec<_>>())
            .field("increasing", &self.increasing.keys().collect::<Vec<_>>())
            .field("sequence", &self.sequence.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Parses a parameter object, treating a missing one as `{}`.
pub fn params<T: DeserializeOwned>(kind: &str, v: &Value) -> Result<T> {
    let v = if v.is_null() {
        Value::Object(Default::default())
    } else {
        v.clone()
    };
    serde_json::from_value(v).map_err(|e| Error::param(kind, e.to_string()))
}

fn lookup<'a, T: ?Sized>(
    map: &'a BTreeMap<String, Ctor<T>>,
    kind: &'static str,
    name: &str,
) -> Result<&'a Ctor<T>> {
    map.get(name).ok_or_else(|| Error::UnknownName {
        kind,
        name: name.to_string(),
        known: map.keys().cloned().collect::<Vec<_>>().join(", "),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueP {
    value: f64,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct LinearFP {
    a: f64,
    b: f64,
    kappa: f64,
    kappa_z: f64,
    c: f64,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct LinearGP {
    b: f64,
    kappa: f64,
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbedP {
    base: ComponentSpec,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    sine: f64,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct AffineP {
    constant: f64,
    w: f64,
    a: f64,
    component: usize,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScaleP {
    scale: f64,
}

impl Default for ScaleP {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaP {
    gamma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftedP {
    base: ComponentSpec,
    shift: f64,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RateP {
    rate: f64,
}

impl Default for RateP {
    fn default() -> Self {
        Self { rate: 1.0 }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PowerP {
    scale: f64,
    exponent: f64,
}

impl Default for PowerP {
    fn default() -> Self {
        Self {
            scale: 1.0,
            exponent: 1.0,
        }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunningMaxP {
    scale: f64,
    component: usize,
}

impl Default for RunningMaxP {
    fn default() -> Self {
        Self {
            scale: 1.0,
            component: 0,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OscillatoryP {
    #[serde(default = "linear_base")]
    base: ComponentSpec,
    n: f64,
}

fn linear_base() -> ComponentSpec {
    ComponentSpec::bare("linear")
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AmplitudeP {
    amplitude: f64,
}

impl Default for AmplitudeP {
    fn default() -> Self {
        Self { amplitude: 1.0 }
    }
}

fn finite(kind: &str, vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !v.is_finite() {
            return Err(Error::param(kind, format!("`{name}` must be finite, got {v}")));
        }
    }
    Ok(())
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            f: BTreeMap::new(),
            g: BTreeMap::new(),
            terminal: BTreeMap::new(),
            increasing: BTreeMap::new(),
            sequence: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();

        r.register_f("zero", |_, _| Ok(Arc::new(ZeroF)));
        r.register_f("constant", |v, _| {
            let p: ValueP = params("constant", v)?;
            finite("constant", &[("value", p.value)])?;
            Ok(Arc::new(ConstantF { value: p.value }))
        });
        for (name, window) in [
            ("linear", Window::None),
            ("delayed-linear", Window::Delayed),
            ("rho-integral", Window::Integral),
        ] {
            r.register_f(name, move |v, _| {
                let p: LinearFP = params(name, v)?;
                finite(name, &[("a", p.a), ("b", p.b), ("kappa", p.kappa), ("kappa_z", p.kappa_z), ("c", p.c)])?;
                if window == Window::None && (p.kappa != 0.0 || p.kappa_z != 0.0) {
                    return Err(Error::param(name, "`kappa` needs delayed-linear or rho-integral"));
                }
                Ok(Arc::new(LinearF {
                    a: p.a,
                    b: p.b,
                    kappa: p.kappa,
                    kappa_z: p.kappa_z,
                    c: p.c,
                    window,
                }))
            });
        }
        r.register_f("perturbed", |v, reg| {
            let p: PerturbedP = params("perturbed", v)?;
            finite("perturbed", &[("offset", p.offset), ("sine", p.sine)])?;
            Ok(Arc::new(PerturbedF {
                base: reg.build_f(&p.base)?,
                offset: p.offset,
                sine: p.sine,
            }))
        });

        r.register_g("zero", |_, _| Ok(Arc::new(ZeroG)));
        r.register_g("constant", |v, _| {
            let p: ValueP = params("constant", v)?;
            finite("constant", &[("value", p.value)])?;
            Ok(Arc::new(ConstantG { value: p.value }))
        });
        for (name, window) in [
            ("linear", Window::None),
            ("delayed-linear", Window::Delayed),
            ("rho-integral", Window::Integral),
        ] {
            r.register_g(name, move |v, _| {
                let p: LinearGP = params(name, v)?;
                finite(name, &[("b", p.b), ("kappa", p.kappa), ("c", p.c)])?;
                if window == Window::None && p.kappa != 0.0 {
                    return Err(Error::param(name, "`kappa` needs delayed-linear or rho-integral"));
                }
                Ok(Arc::new(LinearG {
                    b: p.b,
                    kappa: p.kappa,
                    c: p.c,
                    window,
                }))
            });
        }
        r.register_g("perturbed", |v, reg| {
            let p: PerturbedP = params("perturbed", v)?;
            finite("perturbed", &[("offset", p.offset), ("sine", p.sine)])?;
            Ok(Arc::new(PerturbedG {
                base: reg.build_g(&p.base)?,
                offset: p.offset,
                sine: p.sine,
            }))
        });

        r.register_terminal("zero", |_, _| Ok(Arc::new(ConstantTerminal { value: 0.0 })));
        r.register_terminal("constant", |v, _| {
            let p: ValueP = params("constant", v)?;
            finite("constant", &[("value", p.value)])?;
            Ok(Arc::new(ConstantTerminal { value: p.value }))
        });
        r.register_terminal("affine", |v, _| {
            let p: AffineP = params("affine", v)?;
            finite("affine", &[("constant", p.constant), ("w", p.w), ("a", p.a)])?;
            Ok(Arc::new(AffineTerminal {
                constant: p.constant,
                w: p.w,
                a: p.a,
                component: p.component,
            }))
        });
        r.register_terminal("w-square", |v, _| {
            let p: ScaleP = params("w-square", v)?;
            finite("w-square", &[("scale", p.scale)])?;
            Ok(Arc::new(WSquareTerminal { scale: p.scale }))
        });
        r.register_terminal("exp-w-square", |v, _| {
            let p: GammaP = params("exp-w-square", v)?;
            finite("exp-w-square", &[("gamma", p.gamma)])?;
            Ok(Arc::new(ExpWSquareTerminal { gamma: p.gamma }))
        });
        r.register_terminal("shifted", |v, reg| {
            let p: ShiftedP = params("shifted", v)?;
            finite("shifted", &[("shift", p.shift)])?;
            Ok(Arc::new(ShiftedTerminal {
                base: reg.build_terminal(&p.base)?,
                shift: p.shift,
            }))
        });

        r.register_increasing("zero", |_, _| Ok(Arc::new(LinearA { rate: 0.0 })));
        r.register_increasing("linear", |v, _| {
            let p: RateP = params("linear", v)?;
            if !(p.rate >= 0.0) || !p.rate.is_finite() {
                return Err(Error::param("linear", format!("rate must be >= 0, got {}", p.rate)));
            }
            Ok(Arc::new(LinearA { rate: p.rate }))
        });
        r.register_increasing("power", |v, _| {
            let p: PowerP = params("power", v)?;
            if !(p.scale >= 0.0) || !(p.exponent > 0.0) || !p.scale.is_finite() {
                return Err(Error::param("power", "need scale >= 0 and exponent > 0"));
            }
            Ok(Arc::new(PowerA {
                scale: p.scale,
                exponent: p.exponent,
            }))
        });
        r.register_increasing("running-max", |v, _| {
            let p: RunningMaxP = params("running-max", v)?;
            if !(p.scale >= 0.0) || !p.scale.is_finite() {
                return Err(Error::param("running-max", "scale must be >= 0"));
            }
            Ok(Arc::new(RunningMaxA {
                scale: p.scale,
                component: p.component,
            }))
        });
        r.register_increasing("integral-positive", |v, _| {
            let p: ScaleP = params("integral-positive", v)?;
            if !(p.scale >= 0.0) || !p.scale.is_finite() {
                return Err(Error::param("integral-positive", "scale must be >= 0"));
            }
            Ok(Arc::new(IntegralPositiveA { scale: p.scale }))
        });
        r.register_increasing("oscillatory", |v, reg| {
            let p: OscillatoryP = params("oscillatory", v)?;
            if !(p.n > 0.0) || !p.n.is_finite() {
                return Err(Error::param("oscillatory", format!("n must be positive, got {}", p.n)));
            }
            Ok(Arc::new(OscillatoryA {
                base: reg.build_increasing(&p.base)?,
                n: p.n,
            }))
        });

        r.register_sequence("zero", |_, _| Ok(Arc::new(ZeroSeq)));
        r.register_sequence("time", |_, _| Ok(Arc::new(TimeSeq)));
        r.register_sequence("time-shift", |_, _| Ok(Arc::new(TimeShiftSeq)));
        r.register_sequence("brownian", |_, _| Ok(Arc::new(BrownianSeq { amplitude: 0.0 })));
        r.register_sequence("brownian-perturbed", |v, _| {
            let p: AmplitudeP = params("brownian-perturbed", v)?;
            finite("brownian-perturbed", &[("amplitude", p.amplitude)])?;
            Ok(Arc::new(BrownianSeq { amplitude: p.amplitude }))
        });
        r.register_sequence("oscillating-cos", |v, _| {
            let p: AmplitudeP = params("oscillating-cos", v)?;
            finite("oscillating-cos", &[("amplitude", p.amplitude)])?;
            Ok(Arc::new(OscillatingCosSeq { amplitude: p.amplitude }))
        });
        r.register_sequence("oscillatory", |_, _| Ok(Arc::new(OscillatorySeq)));
        r.register_sequence("wild-oscillation", |v, _| {
            #[derive(Deserialize)]
            #[serde(default, deny_unknown_fields)]
            struct P {
                amplitude: f64,
            }
            impl Default for P {
                fn default() -> Self {
                    Self { amplitude: 0.25 }
                }
            }
            let p: P = params("wild-oscillation", v)?;
            finite("wild-oscillation", &[("amplitude", p.amplitude)])?;
            Ok(Arc::new(WildOscillationSeq { amplitude: p.amplitude }))
        });
        r.register_sequence("gaussian-scaled", |v, _| {
            let p: ScaleP = params("gaussian-scaled", v)?;
            if !(p.scale > 0.0) || !p.scale.is_finite() {
                return Err(Error::param("gaussian-scaled", "scale must be positive"));
            }
            Ok(Arc::new(GaussianScaledSeq { scale: p.scale }))
        });
        r
    }

    pub fn register_f(
        &mut self,
        name: &str,
        ctor: impl Fn(&Value, &Registry) -> Result<Arc<dyn DriverF>> + Send + Sync + 'static,
    ) {
        self.f.insert(name.to_string(), Arc::new(ctor));
    }

    pub fn register_g(
        &mut self,
        name: &str,
        ctor: impl Fn(&Value, &Registry) -> Result<Arc<dyn DriverG>> + Send + Sync + 'static,
    ) {
        self.g.insert(name.to_string(), Arc::new(ctor));
    }

    pub fn register_terminal(
        &mut self,
        name: &str,
        ctor: impl Fn(&Value, &Registry) -> Result<Arc<dyn Terminal>> + Send + Sync + 'static,
    ) {
        self.terminal.insert(name.to_string(), Arc::new(ctor));
    }

    pub fn register_increasing(
        &mut self,
        name: &str,
        ctor: impl Fn(&Value, &Registry) -> Result<Arc<dyn IncreasingProcess>> + Send + Sync + 'static,
    ) {
        self.increasing.insert(name.to_string(), Arc::new(ctor));
    }

    pub fn register_sequence(
        &mut self,
        name: &str,
        ctor: impl Fn(&Value, &Registry) -> Result<Arc<dyn PathSequence>> + Send + Sync + 'static,
    ) {
        self.sequence.insert(name.to_string(), Arc::new(ctor));
    }

    pub fn build_f(&self, spec: &ComponentSpec) -> Result<Arc<dyn DriverF>> {
        lookup(&self.f, "driver_f", &spec.kind)?(&spec.params, self)
    }

    pub fn build_g(&self, spec: &ComponentSpec) -> Result<Arc<dyn DriverG>> {
        lookup(&self.g, "driver_g", &spec.kind)?(&spec.params, self)
    }

    pub fn build_terminal(&self, spec: &ComponentSpec) -> Result<Arc<dyn Terminal>> {
        lookup(&self.terminal, "terminal", &spec.kind)?(&spec.params, self)
    }

    pub fn build_increasing(&self, spec: &ComponentSpec) -> Result<Arc<dyn IncreasingProcess>> {
        lookup(&self.increasing, "increasing_process", &spec.kind)?(&spec.params, self)
    }

    pub fn build_sequence(&self, spec: &ComponentSpec) -> Result<Arc<dyn PathSequence>> {
        lookup(&self.sequence, "path sequence", &spec.kind)?(&spec.params, self)
    }

    pub fn f_names(&self) -> Vec<&str> {
        self.f.keys().map(String::as_str).collect()
    }

    pub fn g_names(&self) -> Vec<&str> {
        self.g.keys().map(String::as_str).collect()
    }

    pub fn terminal_names(&self) -> Vec<&str> {
        self.terminal.keys().map(String::as_str).collect()
    }

    pub fn increasing_names(&self) -> Vec<&str> {
        self.increasing.keys().map(String::as_str).collect()
    }

    pub fn sequence_names(&self) -> Vec<&str> {
        self.sequence.keys().map(String::as_str).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn unknown_names_list_alternatives() {
        let r = Registry::with_builtins();
        let err = r.build_f(&ComponentSpec::bare("quadratic")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("quadratic") && msg.contains("rho-integral"), "{msg}");
    }

    #[test]
    fn bad_params_are_reported() {
        let r = Registry::with_builtins();
        assert!(matches!(
            r.build_f(&ComponentSpec::new("linear", json!({"a": 1.0, "bogus": 2}))),
            Err(Error::Parameter { .. })
        ));
        assert!(r.build_f(&ComponentSpec::new("linear", json!({"kappa": 1.0}))).is_err());
        assert!(r.build_increasing(&ComponentSpec::new("linear", json!({"rate": -1.0}))).is_err());
        assert!(r.build_terminal(&ComponentSpec::bare("constant")).is_err());
    }

    #[test]
    fn nested_specs_resolve() {
        let r = Registry::with_builtins();
        let f = r
            .build_f(&ComponentSpec::new(
                "perturbed",
                json!({"base": {"kind": "linear", "params": {"a": 0.5}}, "offset": 0.1}),
            ))
            .unwrap();
        assert_eq!(f.name(), "perturbed");
        let a = r
            .build_increasing(&ComponentSpec::new("oscillatory", json!({"n": 3})))
            .unwrap();
        assert_eq!(a.name(), "oscillatory");
    }

    #[test]
    fn user_plugins_can_be_registered() {
        #[derive(Debug)]
        struct Cubic;
        impl DriverF for Cubic {
            fn name(&self) -> &str {
                "cubic"
            }
            fn eval(&self, args: &FArgs<'_>, out: &mut [f64]) {
                out[0] = args.y[0].powi(3);
            }
        }
        let mut r = Registry::with_builtins();
        r.register_f("cubic", |_, _| Ok(Arc::new(Cubic)));
        assert!(r.f_names().contains(&"cubic"));
        assert_eq!(r.build_f(&ComponentSpec::bare("cubic")).unwrap().name(), "cubic");
    }
}
