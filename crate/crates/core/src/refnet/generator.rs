use crate::error::{Error, Result};
use crate::tensor::{Network, NetworkBuilder, ParamStore, Tensor};

pub const DEFAULT_BASE_CHANNELS: usize = 36;
pub const DEFAULT_UNET_DEPTH: usize = 3;

/// Allowed parameter count: `target * (1 +- tolerance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBudget {
    pub target: usize,
    pub tolerance: f64,
}

impl ParamBudget {
    pub fn bounds(&self) -> (usize, usize) {
        let t = self.target as f64;
        (
            (t * (1.0 - self.tolerance)).ceil() as usize,
            (t * (1.0 + self.tolerance)).floor() as usize,
        )
    }

    pub fn contains(&self, count: usize) -> bool {
        let (lo, hi) = self.bounds();
        (lo..=hi).contains(&count)
    }
}

impl Default for ParamBudget {
    fn default() -> Self {
        Self { target: 8_000_000, tolerance: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefNetConfig {
    /// Width of the first U-Net level; level `l` has `base * 2^l` channels.
    pub base_channels: usize,
    /// Number of stride-2 downsamplings in each U-Net.
    pub unet_depth: usize,
    pub scale: usize,
    /// Checked by [`build_refnet`] when set.
    pub target_param_budget: Option<ParamBudget>,
}

impl Default for RefNetConfig {
    fn default() -> Self {
        Self {
            base_channels: DEFAULT_BASE_CHANNELS,
            unet_depth: DEFAULT_UNET_DEPTH,
            scale: 2,
            target_param_budget: Some(ParamBudget::default()),
        }
    }
}

impl RefNetConfig {
    /// A configuration without a parameter budget, for small networks.
    pub fn small(base_channels: usize, unet_depth: usize) -> Self {
        Self { base_channels, unet_depth, scale: 2, target_param_budget: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale != 2 {
            return Err(Error::Config(format!("only x2 upscaling is supported, got {}", self.scale)));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.unet_depth == 0 || self.unet_depth > 6 {
            return Err(Error::Config(format!("unet_depth must be in 1..=6, got {}", self.unet_depth)));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.unet_depth
    }

    /// Recovers base width and depth from the tensor names and shapes of a
    /// generator weight set. The result carries no budget.
    pub fn infer_from_params(params: &ParamStore) -> Result<Self> {
        let inw = params
            .get("in.w")
            .ok_or_else(|| Error::Format("weights lack the input convolution in.w".into()))?;
        let base = match inw.shape() {
            &[3, 3, 1, b] => b,
            s => return Err(Error::Format(format!("tensor in.w has unexpected shape {s:?}"))),
        };
        let depth = (0..)
            .take_while(|l| params.get(&format!("u1.down{l}.w")).is_some())
            .count();
        let cfg = Self::small(base, depth);
        cfg.validate().map_err(|e| Error::Format(format!("weights describe no valid REF-Net: {e}")))?;
        Ok(cfg)
    }
}

/// A built generator together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RefNet {
    pub config: RefNetConfig,
    pub network: Network,
}

impl RefNet {
    pub fn parameter_count(&self) -> usize {
        self.network.parameter_count()
    }

    /// Sets the last convolution to zero, so every output is `tanh(0) = 0`.
    pub fn zero_final_layer(&mut self) {
        for name in ["out.w", "out.b"] {
            if let Some(t) = self.network.params_mut().get_mut(name) {
                t.data_mut().fill(0.0);
            }
        }
    }
}

fn unet(b: &mut NetworkBuilder, prefix: &str, base: usize, depth: usize) {
    for l in 0..depth {
        let w = base << l;
        b.conv3x3(&format!("{prefix}.enc{l}.c1"), w).relu();
        b.conv3x3(&format!("{prefix}.enc{l}.c2"), w).relu();
        b.tap(&format!("{prefix}.skip{l}"));
        b.conv3x3_stride2(&format!("{prefix}.down{l}"), base << (l + 1)).relu();
    }
    let bottom = base << depth;
    b.conv3x3(&format!("{prefix}.mid.c1"), bottom).relu();
    b.conv3x3(&format!("{prefix}.mid.c2"), bottom).relu();
    for l in (0..depth).rev() {
        let w = base << l;
        b.tconv4x4_stride2(&format!("{prefix}.up{l}"), w).relu();
        b.concat(&format!("{prefix}.skip{l}"));
        b.conv3x3(&format!("{prefix}.dec{l}.c1"), w).relu();
        b.conv3x3(&format!("{prefix}.dec{l}.c2"), w).relu();
    }
}

/// Input conv, two U-Nets with a skip from the first U-Net's output around
/// the second, fusion conv, sub-pixel x2 upsampling and a `tanh` output.
pub fn build_refnet(config: &RefNetConfig, seed: u64) -> Result<RefNet> {
    config.validate()?;
    let base = config.base_channels;
    let mut b = NetworkBuilder::new(1, seed);
    b.conv3x3("in", base).relu();
    unet(&mut b, "u1", base, config.unet_depth);
    b.tap("stack");
    unet(&mut b, "u2", base, config.unet_depth);
    b.concat("stack");
    b.conv3x3("fuse", base).relu();
    b.conv3x3("sub", config.scale * config.scale);
    b.pixel_shuffle(config.scale);
    b.conv3x3("out", 1).tanh();
    let network = b.build()?;

    if let Some(budget) = config.target_param_budget {
        let count = network.parameter_count();
        if !budget.contains(count) {
            let (lo, hi) = budget.bounds();
            return Err(Error::Config(format!(
                "REF-Net has {count} parameters, outside the budget [{lo}, {hi}]"
            )));
        }
    }
    Ok(RefNet { config: *config, network })
}

/// Runs the generator on tanh-bounded reflectance `(N, H, W, 1)`; the result
/// is `(N, 2H, 2W, 1)` in `(-1, 1)`.
pub fn refnet_forward(net: &RefNet, bounded_r_ll: &Tensor) -> Result<Tensor> {
    let (_, h, w, c) = bounded_r_ll.dims4()?;
    if c != 1 {
        return Err(Error::Shape(format!("REF-Net takes one channel, got {c}")));
    }
    let m = net.config.size_multiple();
    if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
        return Err(Error::Shape(format!("input {h}x{w} is not a multiple of {m}")));
    }
    if let Some(v) = bounded_r_ll.data().iter().find(|v| v.is_nan() || v.abs() >= 1.0) {
        return Err(Error::Range(format!("bounded reflectance {v} outside (-1, 1)")));
    }
    net.network.forward(bounded_r_ll)
}
