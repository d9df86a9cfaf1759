use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{build_action_grid, ActionGrid, WindowSize};
use super::replay::Transition;
use super::reward::bellman_target;
use crate::agmap::AccuracyGainMap;
use crate::error::{Error, Result};
use crate::nn::{conv_output_geometry, read_weights, write_weights, Gradients, Layer, Network, Tensor};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QNetConfig {
    /// Sum-pooling factor applied to the AG map before the trunk.
    pub pool: usize,
    pub trunk_channels: usize,
    pub trunk_kernel: usize,
    pub trunk_stride: usize,
}

impl Default for QNetConfig {
    fn default() -> Self {
        QNetConfig { pool: 8, trunk_channels: 16, trunk_kernel: 5, trunk_stride: 2 }
    }
}

/// Convolution geometry of one per-size-class output head. Its output is a
/// `rows × cols` map aligned with that class's lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Everything needed to rebuild a Q-network's layers and check that a state
/// or grid fits it.
#[derive(Debug, Clone, PartialEq)]
pub struct QGeometry {
    pub frame_w: u32,
    pub frame_h: u32,
    pub windows: Vec<WindowSize>,
    pub map_w: usize,
    pub map_h: usize,
    pub coordinate_scale: f64,
    pub config: QNetConfig,
    pub trunk_h: usize,
    pub trunk_w: usize,
    pub heads: Vec<HeadGeometry>,
}

fn head_axis(n: usize, stride_px: f64, cell_px: f64, input: usize) -> Result<(usize, usize)> {
    if n == 1 {
        return Ok((input, 1));
    }
    let mut s = ((stride_px / cell_px).floor() as usize).max(1);
    while s > 1 && (n - 1) * s >= input {
        s -= 1;
    }
    if (n - 1) * s >= input {
        return Err(Error::Config(format!("trunk output {input} too small for {n} window positions")));
    }
    Ok((input - (n - 1) * s, s))
}

impl QGeometry {
    pub fn derive(grid: &ActionGrid, map_w: usize, map_h: usize, coordinate_scale: f64, config: &QNetConfig) -> Result<Self> {
        if config.pool == 0 || config.trunk_channels == 0 {
            return Err(Error::Config("pool and trunk_channels must be positive".into()));
        }
        let (pw, ph) = (map_w / config.pool, map_h / config.pool);
        let (trunk_h, trunk_w) =
            conv_output_geometry(ph, pw, config.trunk_kernel, config.trunk_kernel, config.trunk_stride, config.trunk_stride)?;
        let cell_px = coordinate_scale * (config.pool * config.trunk_stride) as f64;
        let mut heads = Vec::new();
        for c in grid.classes() {
            let (kernel_w, stride_w) = head_axis(c.cols, c.stride_x, cell_px, trunk_w)?;
            let (kernel_h, stride_h) = head_axis(c.rows, c.stride_y, cell_px, trunk_h)?;
            heads.push(HeadGeometry { kernel_h, kernel_w, stride_h, stride_w, rows: c.rows, cols: c.cols });
        }
        let (frame_w, frame_h) = grid.frame();
        Ok(QGeometry {
            frame_w,
            frame_h,
            windows: grid.windows(),
            map_w,
            map_h,
            coordinate_scale,
            config: config.clone(),
            trunk_h,
            trunk_w,
            heads,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.map_h / self.config.pool, self.map_w / self.config.pool]
    }

    pub fn grid(&self) -> Result<ActionGrid> {
        build_action_grid(self.frame_w, self.frame_h, &self.windows)
    }

    fn trunk_layers(&self) -> Vec<Layer> {
        let c = &self.config;
        vec![
            Layer::Conv2d {
                in_channels: 1,
                out_channels: c.trunk_channels,
                kernel_h: c.trunk_kernel,
                kernel_w: c.trunk_kernel,
                stride_h: c.trunk_stride,
                stride_w: c.trunk_stride,
            },
            Layer::Relu,
        ]
    }

    fn head_layers(&self, h: &HeadGeometry) -> Vec<Layer> {
        vec![Layer::Conv2d {
            in_channels: self.config.trunk_channels,
            out_channels: 1,
            kernel_h: h.kernel_h,
            kernel_w: h.kernel_w,
            stride_h: h.stride_h,
            stride_w: h.stride_w,
        }]
    }

    /// `key = value` sidecar text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(s, "frame = {} {}", self.frame_w, self.frame_h);
        let windows: Vec<String> = self.windows.iter().map(|w| format!("{}x{}", w.w, w.h)).collect();
        let _ = writeln!(s, "windows = {}", windows.join(" "));
        let _ = writeln!(s, "map = {} {}", self.map_w, self.map_h);
        let _ = writeln!(s, "coordinate_scale = {}", self.coordinate_scale);
        let _ = writeln!(s, "pool = {}", c.pool);
        let _ = writeln!(s, "trunk = {} {} {}", c.trunk_channels, c.trunk_kernel, c.trunk_stride);
        for h in &self.heads {
            let _ = writeln!(
                s,
                "head = {} {} kernel {}x{} stride {}x{}",
                h.rows, h.cols, h.kernel_h, h.kernel_w, h.stride_h, h.stride_w
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::WeightFormat(format!("Q-network sidecar: {m}"));
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            if k.trim() != "head" {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| fields.get(k).ok_or_else(|| bad(&format!("missing {k}")));
        let nums = |k: &str| -> Result<Vec<f64>> {
            get(k)?.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad(k))).collect()
        };
        let frame = nums("frame")?;
        let map = nums("map")?;
        let trunk = nums("trunk")?;
        if frame.len() != 2 || map.len() != 2 || trunk.len() != 3 {
            return Err(bad("malformed dimensions"));
        }
        let windows = get("windows")?
            .split_whitespace()
            .map(|t| {
                let (w, h) = t.split_once('x').ok_or_else(|| bad(t))?;
                Ok(WindowSize { w: w.parse().map_err(|_| bad(t))?, h: h.parse().map_err(|_| bad(t))? })
            })
            .collect::<Result<Vec<_>>>()?;
        let coordinate_scale: f64 = get("coordinate_scale")?.parse().map_err(|_| bad("coordinate_scale"))?;
        let config = QNetConfig {
            pool: get("pool")?.parse().map_err(|_| bad("pool"))?,
            trunk_channels: trunk[0] as usize,
            trunk_kernel: trunk[1] as usize,
            trunk_stride: trunk[2] as usize,
        };
        let grid = build_action_grid(frame[0] as u32, frame[1] as u32, &windows)?;
        let geom = QGeometry::derive(&grid, map[0] as usize, map[1] as usize, coordinate_scale, &config)?;
        Ok(geom)
    }
}

/// Trunk plus one head per size class.
#[derive(Debug, Clone, PartialEq)]
pub struct QParams {
    pub trunk: Network,
    pub heads: Vec<Network>,
}

impl QParams {
    fn values(&self, state: &Tensor) -> Result<Vec<f64>> {
        let features = self.trunk.predict(state)?;
        let mut out = Vec::new();
        for head in &self.heads {
            out.extend_from_slice(head.predict(&features)?.data());
        }
        Ok(out)
    }

    fn round_to_f32(&mut self) {
        self.trunk.round_to_f32();
        self.heads.iter_mut().for_each(Network::round_to_f32);
    }
}

/// Convolutional action-value network over the (pooled) AG map with a
/// lagged target copy: the regression target at update `i` is computed with
/// the parameters from update `i − C` (the initial parameters while `i < C`).
#[derive(Debug, Clone)]
pub struct QNetwork {
    geometry: QGeometry,
    grid: ActionGrid,
    online: QParams,
    history: VecDeque<QParams>,
    lag: usize,
    updates: u64,
}

impl QNetwork {
    pub fn new(
        grid: &ActionGrid,
        map_w: usize,
        map_h: usize,
        coordinate_scale: f64,
        config: &QNetConfig,
        lag: usize,
        seed: u64,
    ) -> Result<Self> {
        let geometry = QGeometry::derive(grid, map_w, map_h, coordinate_scale, config)?;
        let mut rng = seed::stage_rng(seed, "qnet-init");
        let trunk = Network::new(&geometry.input_shape(), geometry.trunk_layers(), &mut rng)?;
        let head_in = trunk.output_shape();
        let heads = geometry
            .heads
            .iter()
            .map(|h| Network::new(&head_in, geometry.head_layers(h), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(geometry, QParams { trunk, heads }, lag)
    }

    fn from_params(geometry: QGeometry, online: QParams, lag: usize) -> Result<Self> {
        let grid = geometry.grid()?;
        let mut history = VecDeque::new();
        history.push_back(online.clone());
        Ok(QNetwork { geometry, grid, online, history, lag: lag.max(1), updates: 0 })
    }

    pub fn geometry(&self) -> &QGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &ActionGrid {
        &self.grid
    }

    pub fn params(&self) -> &QParams {
        &self.online
    }

    /// Parameters the next update will use for its targets.
    pub fn target_params(&self) -> &QParams {
        self.history.front().expect("history is never empty")
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn action_count(&self) -> usize {
        self.grid.len()
    }

    pub fn encode(&self, state: &AccuracyGainMap) -> Result<Tensor> {
        if state.width() != self.geometry.map_w || state.height() != self.geometry.map_h {
            return Err(Error::Dimension {
                expected: self.geometry.map_w * self.geometry.map_h,
                got: state.width() * state.height(),
            });
        }
        Ok(state.pooled(self.geometry.config.pool))
    }

    pub fn q_values(&self, state: &AccuracyGainMap) -> Result<Vec<f64>> {
        self.online.values(&self.encode(state)?)
    }

    pub fn q_values_encoded(&self, state: &Tensor) -> Result<Vec<f64>> {
        self.online.values(state)
    }

    pub fn target_values_encoded(&self, state: &Tensor) -> Result<Vec<f64>> {
        self.target_params().values(state)
    }

    fn head_of(&self, action: usize) -> (usize, usize) {
        let (class, col, row) = self.grid.locate(action);
        (class, row * self.geometry.heads[class].cols + col)
    }

    /// One gradient step on the mean squared TD error of `batch`. Returns
    /// the batch loss.
    pub fn train_step(&mut self, batch: &[&Transition], gamma: f64, learning_rate: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyData);
        }
        if self.history.back() != Some(&self.online) {
            self.history.push_back(self.online.clone());
        }
        while self.history.len() > self.lag + 1 {
            self.history.pop_front();
        }
        let mut trunk_grad = Gradients::zeros_like(&self.online.trunk);
        let mut head_grads: Vec<Gradients> = self.online.heads.iter().map(Gradients::zeros_like).collect();
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for t in batch {
            let next_max = if t.terminal {
                None
            } else {
                let v = self.target_values_encoded(&t.next_state)?;
                Some(v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            };
            let target = bellman_target(t.reward, gamma, next_max);
            let (features, trunk_trace) = self.online.trunk.forward(&t.state)?;
            let (head, local) = self.head_of(t.action);
            let (out, head_trace) = self.online.heads[head].forward(&features)?;
            let err = out.data()[local] - target;
            loss += err * err / n;
            let mut g = Tensor::zeros(out.shape());
            g.data_mut()[local] = 2.0 * err / n;
            let hg = self.online.heads[head].backward(&head_trace, &g)?;
            let tg = self.online.trunk.backward(&trunk_trace, &hg.input)?;
            head_grads[head].accumulate(&hg);
            trunk_grad.accumulate(&tg);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("Q-learning loss became {loss}")));
        }
        self.online.trunk.sgd_step(&trunk_grad.params, learning_rate)?;
        for (head, g) in self.online.heads.iter_mut().zip(&head_grads) {
            head.sgd_step(&g.params, learning_rate)?;
        }
        self.updates += 1;
        self.history.push_back(self.online.clone());
        while self.history.len() > self.lag + 1 {
            self.history.pop_front();
        }
        Ok(loss)
    }

    /// Rounds parameters to `f32` so the in-memory model equals a saved one.
    pub fn round_to_f32(&mut self) {
        self.online.round_to_f32();
        self.history.iter_mut().for_each(QParams::round_to_f32);
    }

    /// Writes the weights (trunk then heads, each in the network weight
    /// format) and a text sidecar with the grid geometry.
    pub fn save(&self, weights: &Path, sidecar: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(weights)?);
        write_weights(&self.online.trunk, &mut w)?;
        for head in &self.online.heads {
            write_weights(head, &mut w)?;
        }
        w.flush()?;
        std::fs::write(sidecar, self.geometry.to_text())?;
        Ok(())
    }

    pub fn load(weights: &Path, sidecar: &Path, lag: usize) -> Result<Self> {
        let geometry = QGeometry::from_text(&std::fs::read_to_string(sidecar)?)?;
        let mut r = BufReader::new(File::open(weights)?);
        let trunk = read_weights(&mut r)?;
        if trunk.input_shape() != geometry.input_shape() || trunk.layers() != geometry.trunk_layers().as_slice() {
            return Err(Error::WeightFormat("trunk does not match sidecar geometry".into()));
        }
        let mut heads = Vec::new();
        for h in &geometry.heads {
            let head = read_weights(&mut r)?;
            if head.layers() != geometry.head_layers(h).as_slice() {
                return Err(Error::WeightFormat("head does not match sidecar geometry".into()));
            }
            heads.push(head);
        }
        Self::from_params(geometry, QParams { trunk, heads }, lag)
    }
}
